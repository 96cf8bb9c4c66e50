#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

#include "giwr/nets/mlp.hpp"
#include "giwr/nets/optim.hpp"

namespace giwr::nets {

// Welford running moments.
struct RunningStd {
    std::uint64_t count = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void push(double x) {
        ++count;
        const double delta = x - mean;
        mean += delta / static_cast<double>(count);
        m2 += delta * (x - mean);
    }

    // Sample standard deviation; 1 until two observations exist.
    double stddev() const {
        if (count < 2) return 1.0;
        const double s = std::sqrt(m2 / static_cast<double>(count - 1));
        return s > 0.0 ? s : 1.0;
    }
};

// Random network distillation over (s,a): eta = |frozen(s,a) - predictor(s,a)|^2.
class RndPair {
public:
    static constexpr std::size_t default_embedding = 32;

    RndPair() = default;

    RndPair(std::size_t obs_dim, std::size_t act_dim, const std::vector<std::size_t>& hidden, Rng& init,
            std::size_t embedding = default_embedding)
        : frozen_("rnd.frozen", layer_widths(obs_dim + act_dim, hidden, embedding), init),
          predictor_("rnd.predictor", layer_widths(obs_dim + act_dim, hidden, embedding), init) {}

    // Prediction error per row, [n,1].
    Var error(Graph& g, const Tensor& s, const Tensor& a) {
        const Tensor input = concat_cols(s, a);
        Var target = g.constant(frozen_.predict(input));
        Var pred = predictor_.forward(g, g.constant(input));
        return diff::row_sum(diff::square(diff::sub(target, pred)));
    }

    Tensor eta(const Tensor& s, const Tensor& a) const {
        const Tensor input = concat_cols(s, a);
        const Tensor t = frozen_.predict(input);
        const Tensor p = predictor_.predict(input);
        const std::size_t k = t.cols();
        Tensor out(diff::Shape{t.rows(), 1});
        for (std::size_t r = 0; r < t.rows(); ++r) {
            double acc = 0.0;
            for (std::size_t c = 0; c < k; ++c) acc += (t(r, c) - p(r, c)) * (t(r, c) - p(r, c));
            out[r] = acc;
        }
        return out;
    }

    // Normalised novelty eta / sigma_online. Only training-time calls (update=true) feed sigma.
    Tensor score(const Tensor& s, const Tensor& a, bool update = false) {
        Tensor e = eta(s, a);
        if (update) {
            for (double v : e.values()) online_.push(v);
        }
        const double sigma = online_.stddev();
        for (double& v : e.values()) v /= sigma;
        return e;
    }
    Tensor score(const Tensor& s, const Tensor& a) const {
        Tensor e = eta(s, a);
        const double sigma = online_.stddev();
        for (double& v : e.values()) v /= sigma;
        return e;
    }

    // Fits the predictor on dataset pairs and feeds the observed errors to sigma_online.
    double train_step(const Tensor& s, const Tensor& a, Adam& opt) {
        Graph g;
        Var err = error(g, s, a);
        for (double v : err.value().values()) online_.push(v);
        Var l = diff::mean(err);
        const double value = l.value().item();
        opt.step(predictor_.params(), g.backward(l));
        return value;
    }

    const RunningStd& online() const { return online_; }

    std::uint64_t frozen_hash() const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (const Param* p : frozen_.params()) {
            h = fnv1a(std::string_view(reinterpret_cast<const char*>(p->value.data()), p->value.size() * sizeof(double)),
                      h);
        }
        return h;
    }

    Mlp& predictor() { return predictor_; }
    const Mlp& frozen() const { return frozen_; }
    std::vector<Param*> predictor_params() { return predictor_.params(); }
    std::vector<const Param*> params() const {
        std::vector<const Param*> out = frozen_.params();
        for (const Param* p : predictor_.params()) out.push_back(p);
        return out;
    }

private:
    Mlp frozen_;
    Mlp predictor_;
    RunningStd online_;
};

}  // namespace giwr::nets
