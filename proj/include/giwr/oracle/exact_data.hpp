#pragma once

#include <cmath>
#include <vector>

#include "giwr/datagen/dataset.hpp"
#include "giwr/oracle/tabular.hpp"

namespace giwr::oracle {

// Dataset whose empirical law equals the model exactly: for every (s, a) it holds
// round(P(s'|s,a) * transition_copies) * round(pi(a'|s') * policy_copies) records of (s, a, s', a').
// Every (s, a) then carries the same number of records, so the full-batch squared TD loss weights all
// table entries equally. Throws if a probability is not a multiple of 1/copies.
inline datagen::Dataset exact_sarsa_dataset(const TabularMdp& mdp, const std::vector<double>& policy,
                                            const std::vector<double>& embedded, std::size_t transition_copies,
                                            std::size_t policy_copies) {
    mdp.validate();
    if (embedded.size() != mdp.n_actions || policy.size() != mdp.n_states * mdp.n_actions) {
        throw ContractError("exact_sarsa_dataset: table sizes do not match the MDP");
    }
    auto copies = [](double p, std::size_t k) {
        const double scaled = p * static_cast<double>(k);
        const double rounded = std::round(scaled);
        if (std::abs(scaled - rounded) > 1e-9) throw ContractError("exact_sarsa_dataset: probability not on the grid");
        return static_cast<std::size_t>(rounded);
    };
    datagen::Dataset d(1, 1, true, "exact");
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
        for (std::size_t a = 0; a < mdp.n_actions; ++a) {
            for (std::size_t next = 0; next < mdp.n_states; ++next) {
                const std::size_t nt = copies(mdp.p(s, a, next), transition_copies);
                for (std::size_t b = 0; b < mdp.n_actions; ++b) {
                    const std::size_t nb = copies(policy[next * mdp.n_actions + b], policy_copies);
                    for (std::size_t c = 0; c < nt * nb; ++c) {
                        d.push({{static_cast<double>(s)},
                                {embedded[a]},
                                mdp.r(s, a),
                                {static_cast<double>(next)},
                                false,
                                std::vector<double>{embedded[b]}});
                    }
                }
            }
        }
    }
    return d;
}

inline std::vector<double> uniform_policy(std::size_t n_states, std::size_t n_actions) {
    return std::vector<double>(n_states * n_actions, 1.0 / static_cast<double>(n_actions));
}

}  // namespace giwr::oracle
