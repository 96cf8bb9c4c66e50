#pragma once

#include <cstddef>

#include "giwr/action_space.hpp"

namespace giwr {

// Runtime tallies for the two training-time invariants: advantage weights stay in (0, cap]
// and every sampled action lies inside the action bounds.
struct InvariantAudit {
    std::size_t weights_checked = 0;
    std::size_t weight_violations = 0;
    std::size_t actions_checked = 0;
    std::size_t action_violations = 0;

    void check_weight(double w, double cap) {
        ++weights_checked;
        if (!(w > 0.0 && w <= cap)) ++weight_violations;
    }

    void check_actions(const ActionBounds& bounds, const diff::Tensor& actions) {
        for (std::size_t r = 0; r < actions.rows(); ++r) {
            ++actions_checked;
            if (!bounds.contains(actions.row(r))) ++action_violations;
        }
    }

    void merge(const InvariantAudit& other) {
        weights_checked += other.weights_checked;
        weight_violations += other.weight_violations;
        actions_checked += other.actions_checked;
        action_violations += other.action_violations;
    }

    bool clean() const { return weight_violations == 0 && action_violations == 0; }
};

}  // namespace giwr
