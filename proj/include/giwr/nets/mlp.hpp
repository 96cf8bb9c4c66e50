#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "giwr/diffcore/ops.hpp"
#include "giwr/rng.hpp"

namespace giwr::nets {

using diff::Graph;
using diff::Param;
using diff::Tensor;
using diff::Var;

// Fully-connected tanh network. Layer k computes x W_k + b_k; the activation is applied
// after every layer but the last unless `activate_output` is set.
class Mlp {
public:
    Mlp() = default;

    Mlp(const std::string& name, std::vector<std::size_t> widths, Rng& init, bool activate_output = false)
        : widths_(std::move(widths)), activate_output_(activate_output) {
        if (widths_.size() < 2) throw ContractError("mlp: need at least input and output widths");
        for (std::size_t k = 0; k + 1 < widths_.size(); ++k) {
            const std::size_t in = widths_[k], out = widths_[k + 1];
            // Same fan-in uniform scheme as the common deep-learning defaults.
            const double bound = 1.0 / std::sqrt(static_cast<double>(in));
            Tensor w(diff::Shape{in, out});
            Tensor b(diff::Shape{out});
            for (double& v : w.values()) v = uniform(init, -bound, bound);
            for (double& v : b.values()) v = uniform(init, -bound, bound);
            params_.push_back(Param{name + ".w" + std::to_string(k), std::move(w)});
            params_.push_back(Param{name + ".b" + std::to_string(k), std::move(b)});
        }
    }

    std::size_t in_dim() const { return widths_.front(); }
    std::size_t out_dim() const { return widths_.back(); }
    const std::vector<std::size_t>& widths() const { return widths_; }

    // With track=false the weights enter the graph as constants (frozen for this step).
    Var forward(Graph& g, Var x, bool track = true) {
        check_input(x.value());
        for (std::size_t k = 0; k < layers(); ++k) {
            Var w = track ? g.param(params_[2 * k]) : g.constant(params_[2 * k].value);
            Var b = track ? g.param(params_[2 * k + 1]) : g.constant(params_[2 * k + 1].value);
            x = diff::add(diff::matmul(x, w), b);
            if (k + 1 < layers() || activate_output_) x = diff::tanh(x);
        }
        return x;
    }

    Tensor predict(const Tensor& x) const {
        check_input(x);
        diff::RowMatrix h = diff::as_matrix(x);
        for (std::size_t k = 0; k < layers(); ++k) {
            const auto w = diff::as_matrix(params_[2 * k].value);
            const auto& bt = params_[2 * k + 1].value;
            const Eigen::Map<const Eigen::RowVectorXd> b(bt.data(), static_cast<Eigen::Index>(bt.size()));
            diff::RowMatrix next = h * w;
            next.rowwise() += b;
            if (k + 1 < layers() || activate_output_) diff::tanh_in_place({next.data(), static_cast<std::size_t>(next.size())});
            h = std::move(next);
        }
        Tensor out(diff::Shape{static_cast<std::size_t>(h.rows()), out_dim()});
        std::copy_n(h.data(), out.size(), out.data());
        return out;
    }

    // Renames every parameter to `name.w<k>` / `name.b<k>`.
    void rename(const std::string& name) {
        for (std::size_t k = 0; k < layers(); ++k) {
            params_[2 * k].name = name + ".w" + std::to_string(k);
            params_[2 * k + 1].name = name + ".b" + std::to_string(k);
        }
    }

    std::vector<Param*> params() {
        std::vector<Param*> out;
        for (Param& p : params_) out.push_back(&p);
        return out;
    }
    std::vector<const Param*> params() const {
        std::vector<const Param*> out;
        for (const Param& p : params_) out.push_back(&p);
        return out;
    }

private:
    std::size_t layers() const { return params_.size() / 2; }

    void check_input(const Tensor& x) const {
        if (x.rank() != 2 || x.cols() != in_dim()) {
            throw ShapeError("mlp: expected [n," + std::to_string(in_dim()) + "] input, got " +
                                   diff::to_string(x.shape()));
        }
    }

    std::vector<std::size_t> widths_;
    bool activate_output_ = false;
    std::vector<Param> params_;
};

// Hidden widths sandwiched between an input and an output width.
inline std::vector<std::size_t> layer_widths(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
    std::vector<std::size_t> w{in};
    w.insert(w.end(), hidden.begin(), hidden.end());
    w.push_back(out);
    return w;
}

// Row-wise concatenation of two plain tensors.
inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows()) {
        throw ShapeError("concat_cols: " + diff::to_string(a.shape()) + " vs " + diff::to_string(b.shape()));
    }
    const std::size_t n = a.rows(), p = a.cols(), q = b.cols();
    Tensor out(diff::Shape{n, p + q});
    for (std::size_t r = 0; r < n; ++r) {
        std::copy_n(a.data() + r * p, p, out.data() + r * (p + q));
        std::copy_n(b.data() + r * q, q, out.data() + r * (p + q) + p);
    }
    return out;
}

// Each row of `x` repeated `times` consecutive times.
inline Tensor repeat_rows(const Tensor& x, std::size_t times) {
    const std::size_t n = x.rows(), w = x.cols();
    Tensor out(diff::Shape{n * times, w});
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t t = 0; t < times; ++t) std::copy_n(x.data() + r * w, w, out.data() + (r * times + t) * w);
    }
    return out;
}

}  // namespace giwr::nets
