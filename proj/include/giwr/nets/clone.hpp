#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "giwr/action_space.hpp"
#include "giwr/nets/mlp.hpp"
#include "giwr/nets/optim.hpp"

namespace giwr::nets {

// State-conditional VAE over actions: encoder (s,a) -> (mu, log sigma) of the latent,
// decoder (s,z) -> center + half * tanh(.). Latent dimension is twice the action dimension.
class BehaviorClone {
public:
    static constexpr double latent_log_std_min = -4.0;
    static constexpr double latent_log_std_max = 2.0;
    static constexpr double kl_weight = 0.5;

    BehaviorClone() = default;

    BehaviorClone(std::size_t obs_dim, ActionBounds bounds, const std::vector<std::size_t>& hidden, Rng& init)
        : bounds_(std::move(bounds)),
          latent_dim_(2 * bounds_.dim()),
          encoder_("clone.encoder", layer_widths(obs_dim + bounds_.dim(), hidden, 2 * latent_dim_), init),
          decoder_("clone.decoder", layer_widths(obs_dim + latent_dim_, hidden, bounds_.dim()), init) {}

    std::size_t latent_dim() const { return latent_dim_; }
    const ActionBounds& bounds() const { return bounds_; }

    struct LossParts {
        Var total;
        Var reconstruction;
        Var kl;
    };

    // Reconstruction MSE + 0.5 * KL(q(z|s,a) || N(0, I)), with z drawn by reparametrisation.
    LossParts loss(Graph& g, const Tensor& s, const Tensor& a, Rng& rng) {
        if (s.rows() == 0) throw ContractError("clone: empty batch");
        const std::size_t n = s.rows(), L = latent_dim_;
        Var enc = encoder_.forward(g, g.constant(concat_cols(s, a)));
        Var mu = diff::slice_cols(enc, 0, L);
        const double mid = 0.5 * (latent_log_std_max - latent_log_std_min);
        Var log_std = diff::shift(diff::scale(diff::shift(diff::tanh(diff::slice_cols(enc, L, 2 * L)), 1.0), mid),
                                  latent_log_std_min);
        Var std_dev = diff::exp(log_std);
        Var z = diff::add(mu, diff::mul(std_dev, g.constant(normal_tensor(diff::Shape{n, L}, rng))));
        Var decoded = decode(g, s, z);
        Var recon = diff::mean(diff::square(diff::sub(decoded, g.constant(a))));
        // KL per row: 0.5 * sum(mu^2 + sigma^2 - 1 - 2 log sigma)
        Var kl_terms = diff::sub(diff::add(diff::square(mu), diff::square(std_dev)), diff::scale(log_std, 2.0));
        Var kl = diff::scale(diff::shift(diff::mean(diff::row_sum(kl_terms)), -static_cast<double>(L)), 0.5);
        return {diff::add(recon, diff::scale(kl, kl_weight)), recon, kl};
    }

    double train_step(const Tensor& s, const Tensor& a, Rng& rng, Adam& opt) {
        Graph g;
        LossParts parts = loss(g, s, a, rng);
        const double value = parts.total.value().item();
        opt.step(params(), g.backward(parts.total));
        return value;
    }

    Var decode(Graph& g, const Tensor& s, Var z, bool track = true) {
        Var raw = decoder_.forward(g, diff::concat_cols(g.constant(s), z), track);
        return squash(g, diff::tanh(raw));
    }

    Tensor decode(const Tensor& s, const Tensor& z) const {
        Tensor out = decoder_.predict(concat_cols(s, z));
        for (std::size_t r = 0; r < out.rows(); ++r) {
            for (std::size_t i = 0; i < out.cols(); ++i) {
                out(r, i) = bounds_.center(i) + bounds_.half(i) * std::tanh(out(r, i));
            }
        }
        bounds_.clip_rows(out);
        return out;
    }

    // Draws z ~ N(0, I) and decodes.
    Tensor sample(const Tensor& s, Rng& rng) const {
        return decode(s, normal_tensor(diff::Shape{s.rows(), latent_dim_}, rng));
    }

    std::vector<Param*> params() {
        std::vector<Param*> out = encoder_.params();
        for (Param* p : decoder_.params()) out.push_back(p);
        return out;
    }
    std::vector<const Param*> params() const {
        std::vector<const Param*> out = encoder_.params();
        for (const Param* p : decoder_.params()) out.push_back(p);
        return out;
    }

private:
    Var squash(Graph& g, Var unit) const {
        const std::size_t d = bounds_.dim();
        Tensor half(diff::Shape{d}), center(diff::Shape{d});
        for (std::size_t i = 0; i < d; ++i) {
            half[i] = bounds_.half(i);
            center[i] = bounds_.center(i);
        }
        return diff::add(diff::mul(unit, g.constant(half)), g.constant(center));
    }

    ActionBounds bounds_;
    std::size_t latent_dim_ = 0;
    Mlp encoder_;
    Mlp decoder_;
};

inline Tensor clone_sample(const BehaviorClone& clone, const Tensor& s, Rng& rng) { return clone.sample(s, rng); }

// Per-dimension clip of a graph expression to the action bounds; zero gradient where clipped.
inline Var clip_to_bounds(Graph& g, Var a, const ActionBounds& bounds) {
    const std::size_t n = a.value().rows(), d = bounds.dim();
    Tensor lo(diff::Shape{n, d}), hi(diff::Shape{n, d});
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t i = 0; i < d; ++i) {
            lo(r, i) = -bounds.low[i];
            hi(r, i) = bounds.high[i];
        }
    }
    Var capped = diff::minimum(a, g.constant(std::move(hi)));
    return diff::neg(diff::minimum(diff::neg(capped), g.constant(std::move(lo))));
}

// Differentiable critic reading (states, action expression) -> [n,1].
using ActionCritic = std::function<Var(Graph&, const Tensor&, Var)>;

// State-conditional action offset xi(s, a) scaled to at most phi * half-range per dimension.
class Perturbation {
public:
    static constexpr double default_phi = 0.05;

    Perturbation() = default;

    Perturbation(std::size_t obs_dim, ActionBounds bounds, const std::vector<std::size_t>& hidden, Rng& init,
                 double phi = default_phi)
        : bounds_(std::move(bounds)),
          phi_(phi),
          net_("perturbation", layer_widths(obs_dim + bounds_.dim(), hidden, bounds_.dim()), init) {}

    double phi() const { return phi_; }
    const ActionBounds& bounds() const { return bounds_; }

    Var offset(Graph& g, const Tensor& s, const Tensor& base_actions, bool track = true) {
        Var unit = diff::tanh(net_.forward(g, g.constant(concat_cols(s, base_actions)), track));
        Tensor scale(diff::Shape{bounds_.dim()});
        for (std::size_t i = 0; i < bounds_.dim(); ++i) scale[i] = phi_ * bounds_.half(i);
        return diff::mul(unit, g.constant(std::move(scale)));
    }

    // clip(a + phi * half * tanh(xi(s, a)))
    Tensor apply(const Tensor& s, const Tensor& base_actions) const {
        Tensor out = net_.predict(concat_cols(s, base_actions));
        for (std::size_t r = 0; r < out.rows(); ++r) {
            for (std::size_t i = 0; i < out.cols(); ++i) {
                out(r, i) = base_actions(r, i) + phi_ * bounds_.half(i) * std::tanh(out(r, i));
            }
        }
        bounds_.clip_rows(out);
        return out;
    }

    // -mean Q(s, clip(a_c + offset)); only the perturbation parameters are tracked.
    Var loss(Graph& g, const Tensor& s, const Tensor& base_actions, const ActionCritic& critic) {
        Var perturbed = clip_to_bounds(g, diff::add(g.constant(base_actions), offset(g, s, base_actions)), bounds_);
        return diff::neg(diff::mean(critic(g, s, perturbed)));
    }

    std::vector<Param*> params() { return net_.params(); }
    std::vector<const Param*> params() const { return net_.params(); }
    Mlp& net() { return net_; }

private:
    ActionBounds bounds_;
    double phi_ = default_phi;
    Mlp net_;
};

inline Tensor perturbed_clone_sample(const BehaviorClone& clone, const Perturbation& xi, const Tensor& s, Rng& rng) {
    return xi.apply(s, clone.sample(s, rng));
}

// One ascent step of the critic value of the perturbed clone, w.r.t. the perturbation only.
inline double perturbation_train_step(Perturbation& xi, const ActionCritic& critic, const Tensor& s,
                                      const Tensor& clone_actions, Adam& opt) {
    Graph g;
    Var l = xi.loss(g, s, clone_actions, critic);
    const double value = l.value().item();
    opt.step(xi.params(), g.backward(l));
    return value;
}

}  // namespace giwr::nets
