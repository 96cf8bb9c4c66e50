#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "giwr/diffcore/tensor.hpp"
#include "giwr/errors.hpp"
#include "giwr/rng.hpp"

namespace giwr {

// Box action space. `embedded` lists the admissible scalar actions of a discrete task
// (1-dim only); when set, uniform draws and snapping use that finite set.
struct ActionBounds {
    std::vector<double> low;
    std::vector<double> high;
    std::vector<double> embedded;

    std::size_t dim() const { return low.size(); }
    double center(std::size_t i) const { return 0.5 * (low[i] + high[i]); }
    double half(std::size_t i) const { return 0.5 * (high[i] - low[i]); }
    double range(std::size_t i) const { return high[i] - low[i]; }
    bool discrete() const { return !embedded.empty(); }

    bool contains(std::span<const double> a) const {
        for (std::size_t i = 0; i < dim(); ++i) {
            if (!(a[i] >= low[i] && a[i] <= high[i])) return false;
        }
        return true;
    }

    // Clips in place; returns true when any coordinate moved.
    bool clip(std::span<double> a) const {
        bool moved = false;
        for (std::size_t i = 0; i < dim(); ++i) {
            const double c = std::clamp(a[i], low[i], high[i]);
            moved |= c != a[i] || std::isnan(a[i]);
            a[i] = std::isnan(a[i]) ? center(i) : c;
        }
        return moved;
    }

    void clip_rows(diff::Tensor& actions) const {
        for (std::size_t r = 0; r < actions.rows(); ++r) clip(actions.row(r));
    }

    // Index of the embedded action nearest to `a` (discrete tasks only).
    std::size_t snap_index(double a) const {
        if (!discrete()) throw ContractError("snap_index: action space is continuous");
        std::size_t best = 0;
        for (std::size_t k = 1; k < embedded.size(); ++k) {
            if (std::abs(embedded[k] - a) < std::abs(embedded[best] - a)) best = k;
        }
        return best;
    }

    diff::Tensor uniform_rows(std::size_t rows, Rng& rng) const {
        diff::Tensor out(diff::Shape{rows, dim()});
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t i = 0; i < dim(); ++i) {
                if (discrete()) {
                    out(r, i) = embedded[std::uniform_int_distribution<std::size_t>(0, embedded.size() - 1)(rng)];
                } else {
                    out(r, i) = uniform(rng, low[i], high[i]);
                }
            }
        }
        return out;
    }

    static ActionBounds symmetric(std::size_t dim, double bound) {
        return ActionBounds{std::vector<double>(dim, -bound), std::vector<double>(dim, bound), {}};
    }
};

}  // namespace giwr
