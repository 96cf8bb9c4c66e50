#pragma once

#include <cmath>
#include <vector>

#include "giwr/action_space.hpp"
#include "giwr/objectives/critic_view.hpp"
#include "giwr/oracle/tabular.hpp"

namespace giwr::oracle {

// One-head lookup-table critic over a finite chain whose observation is the state index and
// whose action is an embedded scalar. Bootstraps read the live table (no target copy), which makes
// full-batch gradient descent a damped fixed-point iteration of the sampled Bellman operator.
class TabularCritic final : public objectives::CriticView {
public:
    TabularCritic(std::size_t n_states, ActionBounds bounds, double init = 0.0)
        : n_states_(n_states),
          bounds_(std::move(bounds)),
          table_{"tabular.q", diff::Tensor(diff::Shape{n_states * bounds_.embedded.size(), 1}, init)} {
        if (!bounds_.discrete()) throw ContractError("tabular critic: action space must be discrete");
    }

    std::size_t n_states() const { return n_states_; }
    std::size_t n_actions() const { return bounds_.embedded.size(); }

    std::size_t index(double obs, double action) const {
        const long s = std::lround(obs);
        if (s < 0 || static_cast<std::size_t>(s) >= n_states_) throw ContractError("tabular critic: state out of range");
        return static_cast<std::size_t>(s) * n_actions() + bounds_.snap_index(action);
    }

    std::size_t heads() const override { return 1; }

    diff::Var q(diff::Graph& g, std::size_t, const diff::Tensor& s, const diff::Tensor& a) override {
        return diff::gather_rows(g.param(table_), indices(s, a));
    }

    diff::Tensor bootstrap(const diff::Tensor& s, const diff::Tensor& a) const override { return lookup(s, a); }
    diff::Tensor first(const diff::Tensor& s, const diff::Tensor& a) const override { return lookup(s, a); }
    std::vector<diff::Param*> params() override { return {&table_}; }

    TabularQ snapshot(double gamma) const {
        return TabularQ{n_states_, n_actions(), gamma,
                        std::vector<double>(table_.value.values().begin(), table_.value.values().end())};
    }

    diff::Param& table() { return table_; }

private:
    std::vector<std::size_t> indices(const diff::Tensor& s, const diff::Tensor& a) const {
        std::vector<std::size_t> idx(s.rows());
        for (std::size_t r = 0; r < s.rows(); ++r) idx[r] = index(s(r, 0), a(r, 0));
        return idx;
    }

    diff::Tensor lookup(const diff::Tensor& s, const diff::Tensor& a) const {
        diff::Tensor out(diff::Shape{s.rows(), 1});
        for (std::size_t r = 0; r < s.rows(); ++r) out[r] = table_.value[index(s(r, 0), a(r, 0))];
        return out;
    }

    std::size_t n_states_;
    ActionBounds bounds_;
    diff::Param table_;
};

}  // namespace giwr::oracle
