#pragma once

#include <cmath>
#include <vector>

#include "giwr/diffcore/graph.hpp"

namespace giwr::nets {

// Adaptive-moment update. Moment buffers are matched to parameters by position,
// so the same parameter list (same order) must be passed on every step.
class Adam {
public:
    explicit Adam(double lr = 3e-4, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(const std::vector<diff::Param*>& params, const diff::Gradients& grads) {
        if (m_.empty()) {
            for (const diff::Param* p : params) {
                m_.emplace_back(p->value.shape(), 0.0);
                v_.emplace_back(p->value.shape(), 0.0);
            }
        }
        if (m_.size() != params.size()) throw ContractError("adam: parameter list changed between steps");
        ++t_;
        const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t k = 0; k < params.size(); ++k) {
            const diff::Tensor g = grads.of(*params[k]);
            diff::Tensor& w = params[k]->value;
            if (w.shape() != m_[k].shape()) throw ContractError("adam: parameter shape changed");
            for (std::size_t i = 0; i < w.size(); ++i) {
                m_[k][i] = beta1_ * m_[k][i] + (1.0 - beta1_) * g[i];
                v_[k][i] = beta2_ * v_[k][i] + (1.0 - beta2_) * g[i] * g[i];
                w[i] -= lr_ * (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + eps_);
            }
        }
    }

    double learning_rate() const { return lr_; }
    long steps() const { return t_; }

private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<diff::Tensor> m_, v_;
};

// Plain gradient descent; used by the tabular fixed-point checks.
class Sgd {
public:
    explicit Sgd(double lr) : lr_(lr) {}

    void step(const std::vector<diff::Param*>& params, const diff::Gradients& grads) const {
        for (diff::Param* p : params) {
            const diff::Tensor g = grads.of(*p);
            for (std::size_t i = 0; i < g.size(); ++i) p->value[i] -= lr_ * g[i];
        }
    }

private:
    double lr_;
};

// target <- (1 - rate) * target + rate * main, parameter by parameter.
inline void polyak_update(const std::vector<diff::Param*>& target, const std::vector<const diff::Param*>& main,
                          double rate) {
    if (!(rate >= 0.0 && rate <= 1.0)) throw ContractError("polyak_update: rate must lie in [0,1]");
    if (target.size() != main.size()) throw ContractError("polyak_update: parameter count mismatch");
    for (std::size_t k = 0; k < target.size(); ++k) {
        diff::Tensor& t = target[k]->value;
        const diff::Tensor& m = main[k]->value;
        if (t.shape() != m.shape()) {
            throw ShapeError("polyak_update: " + diff::to_string(t.shape()) + " vs " +
                                   diff::to_string(m.shape()));
        }
        if (rate == 1.0) {
            t = m;
            continue;
        }
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = (1.0 - rate) * t[i] + rate * m[i];
    }
}

}  // namespace giwr::nets
