#pragma once

#include <vector>

#include "giwr/nets/critic.hpp"

namespace giwr::objectives {

using diff::Graph;
using diff::Param;
using diff::Tensor;
using diff::Var;

// What the losses need from an action-value function: trainable heads, the bootstrap value
// (min over target twins) and the first main head for advantages and gaps.
class CriticView {
public:
    virtual ~CriticView() = default;
    virtual std::size_t heads() const = 0;
    virtual Var q(Graph& g, std::size_t head, const Tensor& s, const Tensor& a) = 0;
    virtual Tensor bootstrap(const Tensor& s, const Tensor& a) const = 0;
    virtual Tensor first(const Tensor& s, const Tensor& a) const = 0;
    virtual std::vector<Param*> params() = 0;
};

class TwinCriticView final : public CriticView {
public:
    explicit TwinCriticView(nets::TwinCritic& critic) : critic_(&critic) {}

    std::size_t heads() const override { return 2; }
    Var q(Graph& g, std::size_t head, const Tensor& s, const Tensor& a) override { return critic_->q(g, head, s, a); }
    Tensor bootstrap(const Tensor& s, const Tensor& a) const override { return critic_->min_target(s, a); }
    Tensor first(const Tensor& s, const Tensor& a) const override { return critic_->first_main(s, a); }
    std::vector<Param*> params() override { return critic_->main_params(); }

private:
    nets::TwinCritic* critic_;
};

}  // namespace giwr::objectives
