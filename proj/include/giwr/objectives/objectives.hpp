#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "giwr/audit.hpp"
#include "giwr/datagen/dataset.hpp"
#include "giwr/diffcore/ops.hpp"
#include "giwr/nets/policy.hpp"
#include "giwr/objectives/critic_view.hpp"
#include "giwr/proposals/proposals.hpp"

namespace giwr::objectives {

using datagen::Batch;
using proposals::ProposalContext;
using proposals::ProposalSpec;
using proposals::Sampler;

// ---------------------------------------------------------------------------------------------
// Advantages and weights

// Mean of the first main head over n_base fresh policy draws per state, [n,1]. No gradient.
inline Tensor baseline(const CriticView& critic, const Sampler& policy, const Tensor& s, std::size_t n_base, Rng& rng) {
    if (n_base < 1) throw ContractError("baseline: n_base must be >= 1");
    const Tensor reps = nets::repeat_rows(s, n_base);
    const Tensor q = critic.first(reps, policy(reps, rng));
    Tensor out(diff::Shape{s.rows(), 1});
    for (std::size_t r = 0; r < s.rows(); ++r) {
        double acc = 0.0;
        for (std::size_t k = 0; k < n_base; ++k) acc += q[r * n_base + k];
        out[r] = acc / static_cast<double>(n_base);
    }
    return out;
}

// A(s,a) = Q1(s,a) - baseline(s), [n,1].
inline Tensor advantage_from_baseline(const CriticView& critic, const Tensor& s, const Tensor& a, const Tensor& base) {
    Tensor q = critic.first(s, a);
    for (std::size_t r = 0; r < q.size(); ++r) q[r] -= base[r];
    return q;
}

inline Tensor advantage(const CriticView& critic, const Sampler& policy, const Tensor& s, const Tensor& a,
                        std::size_t n_base, Rng& rng) {
    return advantage_from_baseline(critic, s, a, baseline(critic, policy, s, n_base, rng));
}

// min(exp(A / lambda), cap). An infinite lambda gives weight 1. The result is floored at the
// smallest normal double so that extreme negative advantages keep a strictly positive weight.
inline double exp_weight(double adv, double lambda_kl, double cap) {
    if (!(lambda_kl > 0.0)) throw ContractError("exp_weight: lambda must be positive");
    if (!(cap > 0.0)) throw ContractError("exp_weight: cap must be positive");
    const double w = std::min(std::exp(adv / lambda_kl), cap);
    return std::max(w, std::numeric_limits<double>::min());
}

inline Tensor exp_weights(const Tensor& adv, double lambda_kl, double cap, InvariantAudit* audit = nullptr) {
    Tensor w(adv.shape());
    for (std::size_t i = 0; i < adv.size(); ++i) {
        w[i] = exp_weight(adv[i], lambda_kl, cap);
        if (audit != nullptr) audit->check_weight(w[i], cap);
    }
    return w;
}

// ---------------------------------------------------------------------------------------------
// Critic

struct CriticLossSpec {
    ProposalSpec proposal;            // zeta used for the bootstrap action
    bool optimal_target = false;      // max over the embedded discrete actions instead of zeta
    std::optional<double> al_alpha;   // advantage-learning bonus scale
    std::optional<double> cql_alpha;  // conservative penalty scale
    std::size_t cql_uniform_count = 10;
    std::size_t n_base = 8;
    double gamma = 0.99;

    void validate() const {
        proposal.validate();
        if (al_alpha && cql_alpha) throw ConfigError("critic loss: advantage learning and CQL are mutually exclusive");
        if (al_alpha && !(*al_alpha > 0.0 && *al_alpha < 1.0)) throw ConfigError("critic loss: alpha must lie in (0,1)");
        if (cql_alpha && !(*cql_alpha >= 0.0)) throw ConfigError("critic loss: cql_alpha must be >= 0");
        if (cql_uniform_count < 1) throw ConfigError("critic loss: cql_uniform_count must be >= 1");
        if (n_base < 1) throw ConfigError("critic loss: n_base must be >= 1");
        if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("critic loss: gamma must lie in [0,1)");
    }
};

struct CriticLossParts {
    Var total;
    Var td;
    std::optional<Var> cql;
};

// max_k bootstrap(s, e_k) over the embedded actions e_k of a discrete action space, [n,1].
inline Tensor optimal_bootstrap(const CriticView& critic, const Tensor& s, const ActionBounds& bounds) {
    if (!bounds.discrete()) throw ConfigError("optimal target needs a discrete action space");
    Tensor best(diff::Shape{s.rows(), 1}, -std::numeric_limits<double>::infinity());
    for (double e : bounds.embedded) {
        const Tensor v = critic.bootstrap(s, Tensor(diff::Shape{s.rows(), 1}, e));
        for (std::size_t r = 0; r < s.rows(); ++r) best[r] = std::max(best[r], v[r]);
    }
    return best;
}

// y = r + gamma (1 - terminal) (Q'(s', a') + alpha A(s, a)), [n,1].
inline Tensor td_targets(const CriticLossSpec& spec, const Batch& batch, const CriticView& critic,
                         const ProposalContext& ctx, Rng& proposal_rng, Rng& policy_rng) {
    Tensor next_value;
    if (spec.optimal_target) {
        next_value = optimal_bootstrap(critic, batch.s2, ctx.bounds);
    } else {
        if (spec.proposal.kind == proposals::Kind::beta_sarsa && !batch.a2) {
            throw ConfigError("beta_sarsa bootstrap needs a SARSA dataset");
        }
        const Tensor next_action =
            proposals::sample_from(spec.proposal, ctx, batch.s2, proposal_rng, batch.a2 ? &*batch.a2 : nullptr);
        next_value = critic.bootstrap(batch.s2, next_action);
    }
    if (spec.al_alpha) {
        const Sampler& policy = proposals::detail::require(ctx.policy, "policy");
        const Tensor adv = advantage(critic, policy, batch.s, batch.a, spec.n_base, policy_rng);
        for (std::size_t r = 0; r < next_value.size(); ++r) next_value[r] += *spec.al_alpha * adv[r];
    }
    Tensor y(diff::Shape{batch.size(), 1});
    for (std::size_t r = 0; r < batch.size(); ++r) {
        y[r] = batch.r[r] + spec.gamma * (1.0 - batch.terminal[r]) * next_value[r];
    }
    return y;
}

// Mean over heads of mean (Q_i(s,a) - y)^2, plus cql_alpha (mean_u Q1(s,u) - mean Q1(s,a)) when set.
inline CriticLossParts critic_loss_from_targets(Graph& g, CriticView& critic, const Tensor& s, const Tensor& a,
                                                const Tensor& y, std::optional<double> cql_alpha,
                                                std::size_t cql_uniform_count, const ActionBounds& bounds,
                                                Rng& rng) {
    if (s.rows() == 0) throw ContractError("critic loss: empty batch");
    Var target = g.constant(y);
    Var td;
    Var first_q;
    for (std::size_t h = 0; h < critic.heads(); ++h) {
        Var q = critic.q(g, h, s, a);
        if (h == 0) first_q = q;
        Var err = diff::mean(diff::square(diff::sub(q, target)));
        td = h == 0 ? err : diff::add(td, err);
    }
    if (critic.heads() > 1) td = diff::scale(td, 1.0 / static_cast<double>(critic.heads()));
    CriticLossParts parts{td, td, std::nullopt};
    if (cql_alpha) {
        const Tensor reps = nets::repeat_rows(s, cql_uniform_count);
        Var q_uniform = critic.q(g, 0, reps, bounds.uniform_rows(reps.rows(), rng));
        Var penalty = diff::scale(diff::sub(diff::mean(q_uniform), diff::mean(first_q)), *cql_alpha);
        parts.cql = penalty;
        parts.total = diff::add(td, penalty);
    }
    return parts;
}

inline CriticLossParts critic_loss(Graph& g, const CriticLossSpec& spec, const Batch& batch, CriticView& critic,
                                   const ProposalContext& ctx, Rng& proposal_rng, Rng& policy_rng) {
    if (batch.size() == 0) throw ContractError("critic loss: empty batch");
    const Tensor y = td_targets(spec, batch, critic, ctx, proposal_rng, policy_rng);
    return critic_loss_from_targets(g, critic, batch.s, batch.a, y, spec.cql_alpha, spec.cql_uniform_count, ctx.bounds,
                                    proposal_rng);
}

// E[max over m_gap uniform actions of Q1(s,.) - Q1(s,a)] over the given pairs. Signed.
inline double gap(const CriticView& critic, const Tensor& s, const Tensor& a, const ActionBounds& bounds,
                  std::size_t m_gap, Rng& rng) {
    if (m_gap < 1) throw ContractError("gap: m_gap must be >= 1");
    if (s.rows() == 0) throw ContractError("gap: empty batch");
    const Tensor reps = nets::repeat_rows(s, m_gap);
    const Tensor qu = critic.first(reps, bounds.uniform_rows(reps.rows(), rng));
    const Tensor qa = critic.first(s, a);
    double acc = 0.0;
    for (std::size_t r = 0; r < s.rows(); ++r) {
        double best = qu[r * m_gap];
        for (std::size_t k = 1; k < m_gap; ++k) best = std::max(best, qu[r * m_gap + k]);
        acc += best - qa[r];
    }
    return acc / static_cast<double>(s.rows());
}

// ---------------------------------------------------------------------------------------------
// Actor

struct ActorLossSpec {
    std::vector<ProposalSpec> family{ProposalSpec{proposals::Kind::beta_sarsa}};
    std::vector<double> coefficients{1.0};
    double lambda_kl = 1.0;
    double cap = 20.0;
    std::size_t n_base = 8;

    void validate() const {
        if (family.empty() || family.size() != coefficients.size()) {
            throw ConfigError("actor loss: proposal family and coefficients must be non-empty and of equal length");
        }
        for (const auto& p : family) p.validate();
        for (double k : coefficients) {
            if (!(k >= 0.0) || !std::isfinite(k)) throw ConfigError("actor loss: coefficients must be finite and >= 0");
        }
        if (!(lambda_kl > 0.0)) throw ConfigError("actor loss: lambda_kl must be positive");
        if (!(cap > 0.0)) throw ConfigError("actor loss: weight cap must be positive");
        if (n_base < 1) throw ConfigError("actor loss: n_base must be >= 1");
    }
};

struct ActorLoss {
    Var value;
    Tensor weights;  // every weight used, concatenated over active proposals
};

namespace detail {

inline Var weighted_log_likelihood(Graph& g, nets::GaussianPolicy& policy, const Tensor& s, const Tensor& a,
                                   const Tensor& w) {
    return diff::mean(diff::mul(g.constant(w), policy.log_prob(g, s, a)));
}

inline void append(Tensor& all, const Tensor& w) {
    std::vector<double> v(all.values().begin(), all.values().end());
    v.insert(v.end(), w.values().begin(), w.values().end());
    const std::size_t n = v.size();
    all = Tensor(diff::Shape{n, 1}, std::move(v));
}

}  // namespace detail

// U = mean over the batch of min(exp(A(s,a)/lambda), cap) log pi(a|s), on dataset pairs.
// Training ascends U, i.e. descends -U.
inline ActorLoss base_actor_objective(Graph& g, const ActorLossSpec& spec, const Batch& batch,
                                      nets::GaussianPolicy& policy, const CriticView& critic,
                                      const Sampler& policy_sampler, Rng& policy_rng, InvariantAudit* audit = nullptr) {
    const Tensor base = baseline(critic, policy_sampler, batch.s, spec.n_base, policy_rng);
    const Tensor w = exp_weights(advantage_from_baseline(critic, batch.s, batch.a, base), spec.lambda_kl, spec.cap, audit);
    return {detail::weighted_log_likelihood(g, policy, batch.s, batch.a, w), w};
}

// -sum_i kappa_i mean over the batch of w(A(s, a_i)) log pi(a_i|s), a_i ~ zeta_i(.|s).
// Proposal draws and weights enter as constants. Terms with kappa_i = 0 are skipped entirely.
inline ActorLoss actor_loss_giwr(Graph& g, const ActorLossSpec& spec, const Batch& batch, nets::GaussianPolicy& policy,
                                 const CriticView& critic, const ProposalContext& ctx, Rng& proposal_rng,
                                 Rng& policy_rng) {
    const Tensor base = baseline(critic, ctx.policy, batch.s, spec.n_base, policy_rng);
    std::optional<Var> total;
    Tensor all_weights(diff::Shape{0, 1});
    for (std::size_t i = 0; i < spec.family.size(); ++i) {
        if (spec.coefficients[i] == 0.0) continue;
        const Tensor a = proposals::sample_from(spec.family[i], ctx, batch.s, proposal_rng, &batch.a);
        const Tensor w =
            exp_weights(advantage_from_baseline(critic, batch.s, a, base), spec.lambda_kl, spec.cap, ctx.audit);
        Var term = diff::scale(detail::weighted_log_likelihood(g, policy, batch.s, a, w), spec.coefficients[i]);
        total = total ? diff::add(*total, term) : term;
        detail::append(all_weights, w);
    }
    if (!total) throw ConfigError("actor loss: every coefficient is zero");
    return {diff::neg(*total), all_weights};
}

// Mean negative log-likelihood of the dataset actions.
inline Var bc_loss(Graph& g, nets::GaussianPolicy& policy, const Batch& batch) {
    return diff::neg(diff::mean(policy.log_prob(g, batch.s, batch.a)));
}

// ---------------------------------------------------------------------------------------------
// Closed-form importance-weighted target on a finite action set

// pi(a) = zeta(a) exp(A(a)/lambda) / phi with phi the exact normaliser. Shifting by max A keeps
// the exponentials in range and leaves the result unchanged.
inline std::vector<double> zeta_iw_pmf(const std::vector<double>& zeta, const std::vector<double>& adv,
                                       double lambda_kl) {
    if (zeta.size() != adv.size() || zeta.empty()) throw ContractError("zeta_iw_pmf: size mismatch");
    if (!(lambda_kl > 0.0)) throw ContractError("zeta_iw_pmf: lambda must be positive");
    double mass = 0.0;
    for (double p : zeta) {
        if (!(p >= 0.0)) throw ContractError("zeta_iw_pmf: negative probability");
        mass += p;
    }
    if (std::abs(mass - 1.0) > 1e-10) throw ContractError("zeta_iw_pmf: input pmf does not sum to 1");
    const double top = *std::max_element(adv.begin(), adv.end());
    std::vector<double> out(zeta.size());
    double phi = 0.0;
    for (std::size_t k = 0; k < zeta.size(); ++k) {
        out[k] = zeta[k] * std::exp((adv[k] - top) / lambda_kl);
        phi += out[k];
    }
    for (double& p : out) p /= phi;
    return out;
}

}  // namespace giwr::objectives
