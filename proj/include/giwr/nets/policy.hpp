#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "giwr/action_space.hpp"
#include "giwr/nets/mlp.hpp"

namespace giwr::nets {

// Tanh-squashed diagonal Gaussian actor: a = center + half * tanh(mu + sigma * eps).
class GaussianPolicy {
public:
    static constexpr double log_std_min = -5.0;
    static constexpr double log_std_max = 2.0;
    // Actions are pulled this far inside the bounds before inverting the squash.
    static constexpr double edge = 1e-6;

    GaussianPolicy() = default;

    GaussianPolicy(std::size_t obs_dim, ActionBounds bounds, const std::vector<std::size_t>& hidden, Rng& init)
        : bounds_(std::move(bounds)),
          trunk_("policy.trunk", trunk_widths(obs_dim, hidden), init, true),
          mean_head_("policy.mean", {hidden.back(), bounds_.dim()}, init),
          log_std_head_("policy.log_std", {hidden.back(), bounds_.dim()}, init) {}

    const ActionBounds& bounds() const { return bounds_; }
    std::size_t obs_dim() const { return trunk_.in_dim(); }
    std::size_t act_dim() const { return bounds_.dim(); }

    struct Heads {
        Var mean;
        Var log_std;
    };

    Heads heads(Graph& g, const Tensor& s, bool track = true) {
        Var h = trunk_.forward(g, g.constant(s), track);
        Var mean = mean_head_.forward(g, h, track);
        Var raw = log_std_head_.forward(g, h, track);
        // Smooth squash of the raw head into [log_std_min, log_std_max].
        const double mid = 0.5 * (log_std_max - log_std_min);
        Var log_std = diff::shift(diff::scale(diff::shift(diff::tanh(raw), 1.0), mid), log_std_min);
        return {mean, log_std};
    }

    // log pi(a|s) per row, shape [n,1]. Gradients flow to the policy parameters only.
    Var log_prob(Graph& g, const Tensor& s, const Tensor& a, bool track = true) {
        check_actions(s, a);
        const std::size_t n = a.rows(), d = act_dim();
        Tensor pre(a.shape());
        Tensor row_correction(diff::Shape{n, 1});
        for (std::size_t r = 0; r < n; ++r) {
            double c = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                const double y = std::clamp((a(r, i) - bounds_.center(i)) / bounds_.half(i), -1.0 + edge, 1.0 - edge);
                pre(r, i) = std::atanh(y);
                c -= std::log(bounds_.half(i) * (1.0 - y * y));
            }
            row_correction[r] = c - 0.5 * std::log(2.0 * std::numbers::pi) * static_cast<double>(d);
        }
        Heads h = heads(g, s, track);
        Var z = diff::mul(diff::sub(g.constant(std::move(pre)), h.mean), diff::exp(diff::neg(h.log_std)));
        Var per_dim = diff::sub(diff::scale(diff::square(z), -0.5), h.log_std);
        return diff::add(diff::row_sum(per_dim), g.constant(std::move(row_correction)));
    }

    struct Sample {
        Tensor action;
        Var log_prob;
    };

    // Reparametrised draw; log_prob carries gradients to the policy parameters.
    Sample sample(Graph& g, const Tensor& s, Rng& rng, bool track = true) {
        const std::size_t n = s.rows(), d = act_dim();
        Tensor eps = normal_tensor(diff::Shape{n, d}, rng);
        Heads h = heads(g, s, track);
        Var u = diff::add(h.mean, diff::mul(diff::exp(h.log_std), g.constant(eps)));
        Tensor action(diff::Shape{n, d});
        const Tensor& uv = u.value();
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t i = 0; i < d; ++i) action(r, i) = bounds_.center(i) + bounds_.half(i) * std::tanh(uv(r, i));
        }
        bounds_.clip_rows(action);
        Tensor eps_sq(diff::Shape{n, 1});
        for (std::size_t r = 0; r < n; ++r) {
            double acc = 0.0;
            for (std::size_t i = 0; i < d; ++i) acc += -0.5 * eps(r, i) * eps(r, i) - std::log(bounds_.half(i));
            eps_sq[r] = acc - 0.5 * std::log(2.0 * std::numbers::pi) * static_cast<double>(d);
        }
        // log(1 - tanh(u)^2) = 2 (log 2 - u - softplus(-2u))
        Var log_jac = diff::scale(diff::sub(diff::shift(diff::neg(u), std::numbers::ln2),
                                            diff::softplus(diff::scale(u, -2.0))),
                                  2.0);
        Var lp = diff::sub(diff::neg(diff::row_sum(h.log_std)), diff::row_sum(log_jac));
        return {std::move(action), diff::add(lp, g.constant(std::move(eps_sq)))};
    }

    // Gradient-free draw.
    Tensor sample(const Tensor& s, Rng& rng) const {
        auto [mean, log_std] = predict_heads(s);
        Tensor action(mean.shape());
        std::normal_distribution<double> dist(0.0, 1.0);
        for (std::size_t r = 0; r < action.rows(); ++r) {
            for (std::size_t i = 0; i < act_dim(); ++i) {
                const double u = mean(r, i) + std::exp(log_std(r, i)) * dist(rng);
                action(r, i) = bounds_.center(i) + bounds_.half(i) * std::tanh(u);
            }
        }
        bounds_.clip_rows(action);
        return action;
    }

    // Evaluation-mode action center + half * tanh(mu).
    Tensor mean_action(const Tensor& s) const {
        Tensor mean = predict_heads(s).first;
        for (std::size_t r = 0; r < mean.rows(); ++r) {
            for (std::size_t i = 0; i < act_dim(); ++i) {
                mean(r, i) = bounds_.center(i) + bounds_.half(i) * std::tanh(mean(r, i));
            }
        }
        bounds_.clip_rows(mean);
        return mean;
    }

    std::pair<Tensor, Tensor> predict_heads(const Tensor& s) const {
        Tensor h = trunk_.predict(s);
        Tensor mean = mean_head_.predict(h);
        Tensor log_std = log_std_head_.predict(h);
        const double mid = 0.5 * (log_std_max - log_std_min);
        for (double& v : log_std.values()) v = log_std_min + mid * (std::tanh(v) + 1.0);
        return {std::move(mean), std::move(log_std)};
    }

    std::vector<Param*> params() {
        std::vector<Param*> out = trunk_.params();
        for (Param* p : mean_head_.params()) out.push_back(p);
        for (Param* p : log_std_head_.params()) out.push_back(p);
        return out;
    }
    std::vector<const Param*> params() const {
        std::vector<const Param*> out = trunk_.params();
        for (const Param* p : mean_head_.params()) out.push_back(p);
        for (const Param* p : log_std_head_.params()) out.push_back(p);
        return out;
    }

private:
    static std::vector<std::size_t> trunk_widths(std::size_t obs_dim, const std::vector<std::size_t>& hidden) {
        if (hidden.empty()) throw ContractError("policy: need at least one hidden layer");
        std::vector<std::size_t> w{obs_dim};
        w.insert(w.end(), hidden.begin(), hidden.end());
        return w;
    }

    void check_actions(const Tensor& s, const Tensor& a) const {
        if (a.rank() != 2 || a.cols() != act_dim() || a.rows() != s.rows()) {
            throw ShapeError("policy: actions " + diff::to_string(a.shape()) + " do not match states " +
                             diff::to_string(s.shape()));
        }
    }

    ActionBounds bounds_;
    Mlp trunk_;
    Mlp mean_head_;
    Mlp log_std_head_;
};

}  // namespace giwr::nets
