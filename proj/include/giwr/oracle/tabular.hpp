#pragma once

// Exact dynamic-programming references on finite MDPs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <vector>

#include <Eigen/Dense>

#include "giwr/errors.hpp"

namespace giwr::oracle {

struct TabularMdp {
    std::size_t n_states = 0;
    std::size_t n_actions = 0;
    std::vector<double> transition;  // [s][a][s'], rows sum to 1
    std::vector<double> reward;      // expected r(s,a), [s][a]

    double p(std::size_t s, std::size_t a, std::size_t next) const {
        return transition[(s * n_actions + a) * n_states + next];
    }
    double r(std::size_t s, std::size_t a) const { return reward[s * n_actions + a]; }

    void validate() const {
        if (transition.size() != n_states * n_actions * n_states || reward.size() != n_states * n_actions) {
            throw ContractError("mdp: table sizes do not match state/action counts");
        }
        for (std::size_t s = 0; s < n_states; ++s) {
            for (std::size_t a = 0; a < n_actions; ++a) {
                double total = 0.0;
                for (std::size_t n = 0; n < n_states; ++n) total += p(s, a, n);
                if (std::abs(total - 1.0) > 1e-12) throw ContractError("mdp: transition row does not sum to 1");
            }
        }
    }
};

struct TabularQ {
    std::size_t n_states = 0;
    std::size_t n_actions = 0;
    double gamma = 0.0;
    std::vector<double> values;

    double operator()(std::size_t s, std::size_t a) const { return values[s * n_actions + a]; }
    double& operator()(std::size_t s, std::size_t a) { return values[s * n_actions + a]; }

    std::vector<double> row(std::size_t s) const {
        return {values.begin() + static_cast<long>(s * n_actions), values.begin() + static_cast<long>((s + 1) * n_actions)};
    }

    // Lowest-index argmax.
    std::size_t greedy(std::size_t s) const {
        std::size_t best = 0;
        for (std::size_t a = 1; a < n_actions; ++a) {
            if ((*this)(s, a) > (*this)(s, best)) best = a;
        }
        return best;
    }

    double sup_distance(const TabularQ& other) const {
        double d = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i) d = std::max(d, std::abs(values[i] - other.values[i]));
        return d;
    }
};

// sup_{s,a} |Q - (r + gamma P max Q)|
inline double optimal_bellman_residual(const TabularMdp& mdp, const TabularQ& q) {
    double worst = 0.0;
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
        for (std::size_t a = 0; a < mdp.n_actions; ++a) {
            double backup = mdp.r(s, a);
            for (std::size_t n = 0; n < mdp.n_states; ++n) {
                const auto row = q.row(n);
                backup += q.gamma * mdp.p(s, a, n) * *std::max_element(row.begin(), row.end());
            }
            worst = std::max(worst, std::abs(q(s, a) - backup));
        }
    }
    return worst;
}

// Q* by iterating Q <- r + gamma P max_a' Q until the Bellman residual drops below tol.
inline TabularQ value_iteration(const TabularMdp& mdp, double gamma, double tol = 1e-10) {
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ContractError("value_iteration: gamma must lie in [0,1)");
    if (!(tol > 0.0)) throw ContractError("value_iteration: tol must be positive");
    mdp.validate();
    TabularQ q{mdp.n_states, mdp.n_actions, gamma, std::vector<double>(mdp.n_states * mdp.n_actions, 0.0)};
    std::vector<double> v(mdp.n_states);
    for (;;) {
        for (std::size_t s = 0; s < mdp.n_states; ++s) {
            const auto row = q.row(s);
            v[s] = *std::max_element(row.begin(), row.end());
        }
        TabularQ next = q;
        for (std::size_t s = 0; s < mdp.n_states; ++s) {
            for (std::size_t a = 0; a < mdp.n_actions; ++a) {
                double backup = mdp.r(s, a);
                for (std::size_t n = 0; n < mdp.n_states; ++n) backup += gamma * mdp.p(s, a, n) * v[n];
                next(s, a) = backup;
            }
        }
        q = std::move(next);
        if (optimal_bellman_residual(mdp, q) < tol) return q;
    }
}

// Q^pi from the linear system (I - gamma P Pi) Q = r; `policy` is [s][a] with rows summing to 1.
inline TabularQ exact_policy_eval(const TabularMdp& mdp, const std::vector<double>& policy, double gamma) {
    mdp.validate();
    const std::size_t S = mdp.n_states, A = mdp.n_actions, n = S * A;
    if (policy.size() != n) throw ContractError("exact_policy_eval: policy table has wrong size");
    for (std::size_t s = 0; s < S; ++s) {
        double total = 0.0;
        for (std::size_t a = 0; a < A; ++a) total += policy[s * A + a];
        if (std::abs(total - 1.0) > 1e-10) throw ContractError("exact_policy_eval: policy row does not sum to 1");
    }
    Eigen::MatrixXd m = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    Eigen::VectorXd rhs(static_cast<Eigen::Index>(n));
    for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t a = 0; a < A; ++a) {
            const auto row = static_cast<Eigen::Index>(s * A + a);
            rhs(row) = mdp.r(s, a);
            for (std::size_t next = 0; next < S; ++next) {
                for (std::size_t b = 0; b < A; ++b) {
                    m(row, static_cast<Eigen::Index>(next * A + b)) -= gamma * mdp.p(s, a, next) * policy[next * A + b];
                }
            }
        }
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
    if (!lu.isInvertible()) throw ContractError("exact_policy_eval: singular Bellman system");
    const Eigen::VectorXd x = lu.solve(rhs);
    TabularQ q{S, A, gamma, std::vector<double>(n)};
    for (std::size_t i = 0; i < n; ++i) q.values[i] = x(static_cast<Eigen::Index>(i));
    return q;
}

// Deterministic policy table choosing argmax_a q(s, a).
inline std::vector<double> greedy_policy(const TabularQ& q) {
    std::vector<double> pi(q.n_states * q.n_actions, 0.0);
    for (std::size_t s = 0; s < q.n_states; ++s) pi[s * q.n_actions + q.greedy(s)] = 1.0;
    return pi;
}

// Exact law of the best-of-m draw from `base` scored by `values`, where among equal values the
// earliest draw wins. The winning value level L has probability F(<=L)^m - F(<L)^m, and within a
// level the first draw attaining it is distributed proportionally to `base`.
inline std::vector<double> brute_force_tmax_dist(const std::vector<double>& base, const std::vector<double>& values,
                                                 std::size_t m) {
    if (m < 1) throw ContractError("brute_force_tmax_dist: m must be >= 1");
    if (base.size() != values.size()) throw ContractError("brute_force_tmax_dist: size mismatch");
    std::map<double, double> level_mass;
    for (std::size_t a = 0; a < base.size(); ++a) level_mass[values[a]] += base[a];
    std::map<double, double> level_prob;
    double below = 0.0;
    for (const auto& [level, mass] : level_mass) {
        const double upto = below + mass;
        level_prob[level] = std::pow(upto, static_cast<double>(m)) - std::pow(below, static_cast<double>(m));
        below = upto;
    }
    std::vector<double> out(base.size(), 0.0);
    for (std::size_t a = 0; a < base.size(); ++a) {
        const double mass = level_mass[values[a]];
        if (mass > 0.0) out[a] = level_prob[values[a]] * base[a] / mass;
    }
    return out;
}

// E[max of m iid draws of values[a], a ~ pmf].
inline double expected_max_of_m(const std::vector<double>& pmf, const std::vector<double>& values, std::size_t m) {
    const auto law = brute_force_tmax_dist(pmf, values, m);
    double e = 0.0;
    for (std::size_t a = 0; a < law.size(); ++a) e += law[a] * values[a];
    return e;
}

}  // namespace giwr::oracle
