#pragma once

#include <chrono>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "giwr/audit.hpp"
#include "giwr/datagen/generate.hpp"
#include "giwr/envlab/env.hpp"
#include "giwr/nets/checkpoint.hpp"
#include "giwr/nets/clone.hpp"
#include "giwr/nets/critic.hpp"
#include "giwr/nets/optim.hpp"
#include "giwr/nets/policy.hpp"
#include "giwr/nets/rnd.hpp"
#include "giwr/objectives/objectives.hpp"
#include "giwr/trainer/config.hpp"

namespace giwr::trainer {

using diff::Graph;
using diff::Tensor;

// ---------------------------------------------------------------------------------------------
// Seeding

inline std::uint64_t stream_seed(std::uint64_t master, std::uint64_t rank, std::string_view component) {
    return mix64(fnv1a(component, mix64(master) ^ mix64(rank + 0x632be59bd9b4e019ULL)));
}

// Independent generators per consumer so that, e.g., extra evaluation draws never shift training draws.
struct RngStreams {
    Rng init;
    Rng minibatch;
    Rng policy;     // baseline and bootstrap draws from pi_theta
    Rng proposal;   // proposal draws, CQL and other uniform action draws
    Rng auxiliary;  // clone / perturbation / novelty training noise
    Rng env_reset;
    Rng eval;
};

inline RngStreams seed_rng_streams(std::uint64_t master, std::uint64_t rank) {
    return {Rng(stream_seed(master, rank, "init")),      Rng(stream_seed(master, rank, "minibatch")),
            Rng(stream_seed(master, rank, "policy-sampling")), Rng(stream_seed(master, rank, "proposal-sampling")),
            Rng(stream_seed(master, rank, "auxiliary")), Rng(stream_seed(master, rank, "env-reset")),
            Rng(stream_seed(master, rank, "eval"))};
}

// ---------------------------------------------------------------------------------------------
// Metrics

struct MetricsRecord {
    std::uint64_t seed = 0;
    std::size_t iteration = 0;
    double return_mean = 0.0;
    double return_std = 0.0;  // population std over evaluation episodes
    double critic_loss = 0.0;  // mean over the steps since the previous record
    double actor_loss = 0.0;
    double gap = 0.0;
    double wall_secs = 0.0;
};

struct SummaryRow {
    std::size_t iteration = 0;
    double ret_mu = 0.0;
    double ret_band = 0.0;  // 0.95 * population std across seeds
};

inline double population_std(const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(xs.size()));
}

// Per-iteration mean and 0.95-sigma band across seeds. Every seed must report the same iterations.
inline std::vector<SummaryRow> aggregate(const std::vector<std::vector<MetricsRecord>>& runs) {
    if (runs.empty()) throw ContractError("aggregate: no runs");
    const std::size_t points = runs.front().size();
    for (const auto& run : runs) {
        if (run.size() != points) throw ContractError("aggregate: runs have ragged evaluation grids");
        for (std::size_t k = 0; k < points; ++k) {
            if (run[k].iteration != runs.front()[k].iteration) {
                throw ContractError("aggregate: runs have ragged evaluation grids");
            }
        }
    }
    std::vector<SummaryRow> out;
    for (std::size_t k = 0; k < points; ++k) {
        std::vector<double> xs;
        for (const auto& run : runs) xs.push_back(run[k].return_mean);
        double mu = 0.0;
        for (double x : xs) mu += x;
        mu /= static_cast<double>(xs.size());
        out.push_back({runs.front()[k].iteration, mu, 0.95 * population_std(xs)});
    }
    return out;
}

inline constexpr const char* metrics_schema =
    "# giwr-metrics v1: return_std is the population std over evaluation episodes; losses are means since the "
    "previous row";
inline constexpr const char* summary_schema = "# giwr-summary v1: ret_band = 0.95 * population std across seeds";

inline std::string metrics_csv(const std::vector<MetricsRecord>& rows) {
    std::string s = std::string(metrics_schema) + "\nseed,iteration,return_mean,return_std,critic_loss,actor_loss,gap,wall_secs\n";
    char buf[512];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%llu,%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.3f\n",
                      static_cast<unsigned long long>(r.seed), r.iteration, r.return_mean, r.return_std, r.critic_loss,
                      r.actor_loss, r.gap, r.wall_secs);
        s += buf;
    }
    return s;
}

inline std::string summary_csv(const std::vector<SummaryRow>& rows) {
    std::string s = std::string(summary_schema) + "\niteration,ret_mu,ret_band\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", r.iteration, r.ret_mu, r.ret_band);
        s += buf;
    }
    return s;
}

// ---------------------------------------------------------------------------------------------
// Models

struct Models {
    nets::GaussianPolicy policy;
    nets::TwinCritic critic;
    std::optional<nets::BehaviorClone> clone;
    std::optional<nets::Perturbation> xi;
    std::optional<nets::RndPair> rnd;

    std::vector<const diff::Param*> params() const {
        std::vector<const diff::Param*> out = policy.params();
        for (const auto* p : critic.main_params_const()) out.push_back(p);
        for (const auto* p : critic.target_params_const()) out.push_back(p);
        if (clone) for (const auto* p : clone->params()) out.push_back(p);
        if (xi) for (const auto* p : xi->params()) out.push_back(p);
        if (rnd) for (const auto* p : rnd->params()) out.push_back(p);
        return out;
    }
};

// Handles the configured proposals read, over the union of the critic proposal and the actor family.
inline proposals::Needs required_models(const ExperimentConfig& c) {
    proposals::Needs n;
    if (c.algorithm == Algorithm::bc) return n;
    if (!c.optimal_target) n |= proposals::needs(c.critic_proposal);
    if (c.algorithm == Algorithm::giwr) {
        for (std::size_t i = 0; i < c.actor_proposals.size(); ++i) {
            if (c.kappas[i] != 0.0) n |= proposals::needs(c.actor_proposals[i]);
        }
    }
    if (n.perturbation) n.clone = true;
    return n;
}

// ---------------------------------------------------------------------------------------------
// Evaluation

struct EvalResult {
    double mean = 0.0;
    double std = 0.0;
};

inline EvalResult evaluate_source(envlab::Environment& env, const envlab::ActionSource& act,
                                  const std::vector<std::uint64_t>& reset_seeds, bool deterministic = true) {
    std::vector<double> returns;
    for (std::uint64_t s : reset_seeds) returns.push_back(envlab::rollout(env, act, s, deterministic));
    double mu = 0.0;
    for (double r : returns) mu += r;
    mu /= static_cast<double>(returns.size());
    return {mu, population_std(returns)};
}

// Episode seeds used by every evaluation of a run.
inline std::vector<std::uint64_t> eval_reset_seeds(Rng& env_reset, std::size_t episodes) {
    std::vector<std::uint64_t> seeds(episodes);
    for (auto& s : seeds) s = env_reset();
    return seeds;
}

// ---------------------------------------------------------------------------------------------
// Training

struct TrainResult {
    std::vector<MetricsRecord> records;
    Models models;
    InvariantAudit audit;
    std::size_t iterations_done = 0;
    bool stopped_by_wall_clock = false;
    std::uint64_t frozen_rnd_hash_start = 0;
    std::uint64_t frozen_rnd_hash_end = 0;
};

// Checks everything that can be checked before the first step.
inline void preflight(const ExperimentConfig& config, const envlab::EnvSpec& spec, const datagen::Dataset& data) {
    config.validate();
    if (data.obs_dim() != spec.obs_dim || data.act_dim() != spec.act_dim) {
        throw ConfigError("dataset dimensions (" + std::to_string(data.obs_dim()) + "," + std::to_string(data.act_dim()) +
                          ") do not match env " + spec.name);
    }
    if (data.empty()) throw ConfigError("dataset is empty");
    const bool critic_sarsa = !config.optimal_target && config.critic_proposal == proposals::Kind::beta_sarsa &&
                              config.algorithm != Algorithm::bc;
    if (critic_sarsa && !data.sarsa()) {
        throw ConfigError("critic proposal beta_sarsa needs a SARSA dataset, but the dataset is SARS");
    }
    if (config.optimal_target && !spec.bounds.discrete()) {
        throw ConfigError("optimal_target needs a discrete action space");
    }
}

namespace detail {

inline void require_finite(double v, const char* what, std::size_t iteration) {
    if (!std::isfinite(v)) {
        std::ostringstream msg;
        msg << "non-finite " << what << " (" << v << ") at iteration " << iteration;
        throw NumericalAbort(msg.str());
    }
}

}  // namespace detail

// Runs one seed; its generator streams derive from (seed, rank).
inline TrainResult train(const ExperimentConfig& config, const envlab::Environment& env_prototype,
                         const datagen::Dataset& data, std::uint64_t seed, std::uint64_t rank = 0) {
    const auto start = std::chrono::steady_clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };

    auto env = env_prototype.fresh();
    const envlab::EnvSpec& spec = env->spec();
    preflight(config, spec, data);

    RngStreams rng = seed_rng_streams(seed, rank);
    const proposals::Needs needs = required_models(config);
    const objectives::CriticLossSpec critic_spec = config.critic_spec(spec.gamma);
    const objectives::ActorLossSpec actor_spec = config.actor_spec();

    TrainResult out{{},
                    Models{nets::GaussianPolicy(spec.obs_dim, spec.bounds, config.hidden, rng.init),
                           nets::TwinCritic(spec.obs_dim, spec.act_dim, config.hidden, rng.init),
                           std::nullopt, std::nullopt, std::nullopt},
                    {}, 0, false, 0, 0};
    Models& models = out.models;
    if (needs.clone) models.clone.emplace(spec.obs_dim, spec.bounds, config.hidden, rng.init);
    if (needs.perturbation) models.xi.emplace(spec.obs_dim, spec.bounds, config.hidden, rng.init, config.phi);
    if (needs.novelty) models.rnd.emplace(spec.obs_dim, spec.act_dim, config.hidden, rng.init);
    if (models.rnd) out.frozen_rnd_hash_start = models.rnd->frozen_hash();

    nets::Adam actor_opt(config.lr), critic_opt(config.lr), clone_opt(config.lr), xi_opt(config.lr), rnd_opt(config.lr);
    objectives::TwinCriticView critic_view(models.critic);
    InvariantAudit& audit = out.audit;

    proposals::ProposalContext ctx;
    ctx.bounds = spec.bounds;
    ctx.audit = &audit;
    ctx.policy = [&](const Tensor& s, Rng& r) {
        Tensor a = models.policy.sample(s, r);
        audit.check_actions(spec.bounds, a);
        return a;
    };
    ctx.target_value = [&](const Tensor& s, const Tensor& a) { return models.critic.min_target(s, a); };
    if (models.clone) {
        ctx.clone = [&](const Tensor& s, Rng& r) {
            Tensor a = models.clone->sample(s, r);
            audit.check_actions(spec.bounds, a);
            return a;
        };
    }
    if (models.xi) {
        ctx.perturbed_clone = [&](const Tensor& s, Rng& r) {
            Tensor a = nets::perturbed_clone_sample(*models.clone, *models.xi, s, r);
            audit.check_actions(spec.bounds, a);
            return a;
        };
    }
    if (models.rnd) {
        ctx.novelty = [&](const Tensor& s, const Tensor& a) {
            return static_cast<const nets::RndPair&>(*models.rnd).score(s, a);
        };
    }

    const std::vector<std::uint64_t> reset_seeds = eval_reset_seeds(rng.env_reset, config.eval_episodes);
    double critic_acc = 0.0, actor_acc = 0.0;
    std::size_t steps_since_eval = 0;

    auto record = [&](std::size_t it) {
        const EvalResult ev = evaluate_source(
            *env,
            [&](std::span<const double> obs, bool) {
                Tensor s(diff::Shape{1, obs.size()}, std::vector<double>(obs.begin(), obs.end()));
                const Tensor a = models.policy.mean_action(s);
                audit.check_actions(spec.bounds, a);
                return std::vector<double>(a.values().begin(), a.values().end());
            },
            reset_seeds);
        const datagen::Batch probe = datagen::sample_minibatch(data, config.batch_size, rng.eval);
        const double gap_value = objectives::gap(critic_view, probe.s, probe.a, spec.bounds, config.m_gap, rng.eval);
        const double denom = steps_since_eval > 0 ? static_cast<double>(steps_since_eval) : 1.0;
        out.records.push_back({seed, it, ev.mean, ev.std, critic_acc / denom, actor_acc / denom, gap_value, elapsed()});
        critic_acc = actor_acc = 0.0;
        steps_since_eval = 0;
    };

    for (std::size_t it = 0;; ++it) {
        if (it % config.eval_every == 0) record(it);
        if (it >= config.iterations) break;
        if (elapsed() >= config.wall_clock_secs) {
            out.stopped_by_wall_clock = true;
            break;
        }
        const datagen::Batch batch = datagen::sample_minibatch(data, config.batch_size, rng.minibatch);

        if (config.algorithm != Algorithm::bc) {
            Graph g;
            const auto parts = objectives::critic_loss(g, critic_spec, batch, critic_view, ctx, rng.proposal, rng.policy);
            const double value = parts.total.value().item();
            detail::require_finite(value, "critic loss", it);
            critic_opt.step(models.critic.main_params(), g.backward(parts.total));
            critic_acc += value;

            if (models.clone) {
                detail::require_finite(models.clone->train_step(batch.s, batch.a, rng.auxiliary, clone_opt),
                                       "clone loss", it);
            }
            if (models.xi) {
                const Tensor base = models.clone->sample(batch.s, rng.auxiliary);
                const nets::ActionCritic q1 = [&](Graph& gg, const Tensor& s, diff::Var a) {
                    return models.critic.q(gg, 0, s, a, false);
                };
                detail::require_finite(nets::perturbation_train_step(*models.xi, q1, batch.s, base, xi_opt),
                                       "perturbation loss", it);
            }
            if (models.rnd) {
                detail::require_finite(models.rnd->train_step(batch.s, batch.a, rnd_opt), "novelty loss", it);
            }
        }

        {
            Graph g;
            diff::Var loss;
            switch (config.algorithm) {
                case Algorithm::base:
                case Algorithm::rtg:
                    loss = diff::neg(objectives::base_actor_objective(g, actor_spec, batch, models.policy, critic_view,
                                                                      ctx.policy, rng.policy, &audit)
                                         .value);
                    break;
                case Algorithm::giwr:
                    loss = objectives::actor_loss_giwr(g, actor_spec, batch, models.policy, critic_view, ctx,
                                                       rng.proposal, rng.policy)
                               .value;
                    break;
                case Algorithm::bc: loss = objectives::bc_loss(g, models.policy, batch); break;
            }
            const double value = loss.value().item();
            detail::require_finite(value, "actor loss", it);
            actor_opt.step(models.policy.params(), g.backward(loss));
            actor_acc += value;
        }

        if (config.algorithm != Algorithm::bc) models.critic.polyak(config.polyak);
        ++steps_since_eval;
        out.iterations_done = it + 1;
    }
    if (models.rnd) out.frozen_rnd_hash_end = models.rnd->frozen_hash();
    return out;
}

// Dataset for a config: loaded from `dataset` when set, generated from the recipe otherwise.
inline datagen::Dataset dataset_for(const ExperimentConfig& c, const envlab::Environment& env) {
    if (!c.dataset.empty()) return datagen::load(c.dataset);
    if (c.grade == "mixed") {
        const auto e = datagen::generate(env, datagen::Behavior::expert(), c.data_n, c.sarsa, c.data_seed);
        const auto r = datagen::generate(env, datagen::Behavior::random(), c.data_n, c.sarsa, c.data_seed + 1);
        return datagen::mix(e, r, c.p, c.data_seed);
    }
    return datagen::generate(env, datagen::behavior_for_grade(c.grade), c.data_n, c.sarsa, c.data_seed);
}

}  // namespace giwr::trainer
