#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "giwr/diffcore/graph.hpp"

namespace giwr::diff {

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t coordinates = 0;
    // Location of the worst coordinate, for diagnostics.
    std::size_t worst_param = 0;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

// Compares backward() against central differences over every coordinate of `params`.
// `loss` must build a scalar from the params on the graph it receives and be deterministic
// (re-seed any rng inside it). Relative error uses max(|a|, |b|, 1e-8) as the denominator.
template <class LossFn>
GradCheckReport finite_diff_check(LossFn&& loss, const std::vector<Param*>& params, double step = 1e-5) {
    if (!(step > 0)) throw ContractError("finite_diff_check: step must be positive");
    std::vector<Tensor> analytic;
    {
        Graph g;
        Var l = loss(g);
        const Gradients grads = g.backward(l);
        for (const Param* p : params) analytic.push_back(grads.of(*p));
    }
    auto eval = [&] {
        Graph g;
        return loss(g).value().item();
    };
    GradCheckReport report;
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& w = params[k]->value;
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double saved = w[i];
            w[i] = saved + step;
            const double up = eval();
            w[i] = saved - step;
            const double down = eval();
            w[i] = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double a = analytic[k][i];
            const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
            ++report.coordinates;
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_param = k;
                report.worst_index = i;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    return report;
}

}  // namespace giwr::diff
