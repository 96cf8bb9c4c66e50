#pragma once

#include <algorithm>
#include <array>
#include <vector>

#include "giwr/nets/mlp.hpp"
#include "giwr/nets/optim.hpp"

namespace giwr::nets {

enum class CriticMode { min_targets, first_main };

// Two Q(s,a) networks plus slowly tracking target copies.
class TwinCritic {
public:
    TwinCritic() = default;

    TwinCritic(std::size_t obs_dim, std::size_t act_dim, const std::vector<std::size_t>& hidden, Rng& init)
        : obs_dim_(obs_dim), act_dim_(act_dim) {
        const auto widths = layer_widths(obs_dim + act_dim, hidden, 1);
        mains_[0] = Mlp("critic.q1", widths, init);
        mains_[1] = Mlp("critic.q2", widths, init);
        targets_[0] = mains_[0];
        targets_[1] = mains_[1];
        targets_[0].rename("critic.target1");
        targets_[1].rename("critic.target2");
    }

    std::size_t obs_dim() const { return obs_dim_; }
    std::size_t act_dim() const { return act_dim_; }

    // Q^twin_main(s,a) as a graph expression; `a` may itself carry gradients.
    Var q(Graph& g, std::size_t twin, const Tensor& s, Var a, bool track = true) {
        Var input = diff::concat_cols(g.constant(s), a);
        return mains_.at(twin).forward(g, input, track);
    }
    Var q(Graph& g, std::size_t twin, const Tensor& s, const Tensor& a, bool track = true) {
        return mains_.at(twin).forward(g, g.constant(concat_cols(s, a)), track);
    }

    Tensor main_value(std::size_t twin, const Tensor& s, const Tensor& a) const {
        return mains_.at(twin).predict(concat_cols(s, a));
    }
    Tensor target_value(std::size_t twin, const Tensor& s, const Tensor& a) const {
        return targets_.at(twin).predict(concat_cols(s, a));
    }

    // min over the two target twins; used for every bootstrap and for best-of-m scoring.
    Tensor min_target(const Tensor& s, const Tensor& a) const {
        Tensor q1 = target_value(0, s, a);
        const Tensor q2 = target_value(1, s, a);
        for (std::size_t i = 0; i < q1.size(); ++i) q1[i] = std::min(q1[i], q2[i]);
        return q1;
    }

    // First main twin; used by advantages and gap diagnostics.
    Tensor first_main(const Tensor& s, const Tensor& a) const { return main_value(0, s, a); }

    Tensor value(const Tensor& s, const Tensor& a, CriticMode mode) const {
        return mode == CriticMode::min_targets ? min_target(s, a) : first_main(s, a);
    }

    void polyak(double rate) { polyak_update(target_params(), main_params_const(), rate); }

    std::vector<Param*> main_params() {
        std::vector<Param*> out = mains_[0].params();
        for (Param* p : mains_[1].params()) out.push_back(p);
        return out;
    }
    std::vector<const Param*> main_params_const() const {
        std::vector<const Param*> out = mains_[0].params();
        for (const Param* p : mains_[1].params()) out.push_back(p);
        return out;
    }
    std::vector<Param*> target_params() {
        std::vector<Param*> out = targets_[0].params();
        for (Param* p : targets_[1].params()) out.push_back(p);
        return out;
    }
    std::vector<const Param*> target_params_const() const {
        std::vector<const Param*> out = targets_[0].params();
        for (const Param* p : targets_[1].params()) out.push_back(p);
        return out;
    }

    Mlp& main(std::size_t twin) { return mains_.at(twin); }
    Mlp& target(std::size_t twin) { return targets_.at(twin); }

private:
    std::size_t obs_dim_ = 0, act_dim_ = 0;
    std::array<Mlp, 2> mains_;
    std::array<Mlp, 2> targets_;
};

inline Tensor critic_value(const TwinCritic& critic, const Tensor& s, const Tensor& a, CriticMode mode) {
    return critic.value(s, a, mode);
}

}  // namespace giwr::nets
