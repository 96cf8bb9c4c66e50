#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <string_view>

#include "giwr/action_space.hpp"
#include "giwr/audit.hpp"
#include "giwr/errors.hpp"
#include "giwr/nets/mlp.hpp"

namespace giwr::proposals {

using diff::Tensor;

enum class Kind {
    beta_sarsa,
    beta_clone,
    theta,
    beta_clone_max,
    perturbed_beta_clone_max,
    theta_max,
    spi_beta_clone,
    spi_beta_clone_max,
    spi_perturbed_beta_clone_max,
};

inline constexpr std::array<std::pair<Kind, std::string_view>, 9> kind_names{{
    {Kind::beta_sarsa, "beta_sarsa"},
    {Kind::beta_clone, "beta_clone"},
    {Kind::theta, "theta"},
    {Kind::beta_clone_max, "beta_clone_max"},
    {Kind::perturbed_beta_clone_max, "perturbed_beta_clone_max"},
    {Kind::theta_max, "theta_max"},
    {Kind::spi_beta_clone, "spi_beta_clone"},
    {Kind::spi_beta_clone_max, "spi_beta_clone_max"},
    {Kind::spi_perturbed_beta_clone_max, "spi_perturbed_beta_clone_max"},
}};

inline std::string_view name(Kind k) {
    for (const auto& [kind, n] : kind_names) {
        if (kind == k) return n;
    }
    return "unknown";
}

inline Kind parse_kind(std::string_view text) {
    for (const auto& [kind, n] : kind_names) {
        if (n == text) return kind;
    }
    std::string valid;
    for (const auto& [kind, n] : kind_names) valid += (valid.empty() ? "" : ", ") + std::string(n);
    throw ConfigError("unknown proposal '" + std::string(text) + "' (valid: " + valid + ")");
}

// Which way the novelty potential rho is read by the SPI gate.
//   novel_high: rho near 1 means novel, gate = [rho >= delta] picks the safe branch.
//   novel_low:  rho near 0 means novel, gate = [rho < delta] picks the safe branch.
enum class Orientation { novel_high, novel_low };

struct ProposalSpec {
    Kind kind = Kind::theta;
    std::size_t m = 10;
    double delta = 0.6;
    double tau_rnd = 0.06;
    Orientation orientation = Orientation::novel_high;

    void validate() const {
        if (m < 1) throw ConfigError("proposal: m must be >= 1");
        if (!(delta >= 0.0 && delta < 1.0)) throw ConfigError("proposal: delta must lie in [0,1)");
        if (!(tau_rnd > 0.0)) throw ConfigError("proposal: tau_rnd must be positive");
    }
};

// Model handles a proposal may read.
struct Needs {
    bool sarsa = false;
    bool policy = false;
    bool clone = false;
    bool perturbation = false;
    bool target = false;
    bool novelty = false;

    Needs& operator|=(const Needs& o) {
        sarsa |= o.sarsa;
        policy |= o.policy;
        clone |= o.clone;
        perturbation |= o.perturbation;
        target |= o.target;
        novelty |= o.novelty;
        return *this;
    }
};

inline Needs needs(Kind k) {
    Needs n;
    switch (k) {
        case Kind::beta_sarsa: n.sarsa = true; break;
        case Kind::beta_clone: n.clone = true; break;
        case Kind::theta: n.policy = true; break;
        case Kind::beta_clone_max: n.clone = n.target = true; break;
        case Kind::perturbed_beta_clone_max: n.clone = n.perturbation = n.target = true; break;
        case Kind::theta_max: n.policy = n.target = true; break;
        case Kind::spi_beta_clone: n.clone = n.policy = n.target = n.novelty = true; break;
        case Kind::spi_beta_clone_max: n.clone = n.policy = n.target = n.novelty = true; break;
        case Kind::spi_perturbed_beta_clone_max:
            n.clone = n.perturbation = n.policy = n.target = n.novelty = true;
            break;
    }
    return n;
}

// Draws one action per row of `s`.
using Sampler = std::function<Tensor(const Tensor& s, Rng& rng)>;
// Scores one (s, a) pair per row, [n,1].
using Scorer = std::function<Tensor(const Tensor& s, const Tensor& a)>;

struct ProposalContext {
    Sampler policy;           // pi_theta
    Sampler clone;            // beta_c
    Sampler perturbed_clone;  // beta_c^xi
    Scorer target_value;      // min over target twins
    Scorer novelty;           // normalised RND score, evaluation only
    ActionBounds bounds;
    InvariantAudit* audit = nullptr;
};

namespace detail {

inline const Sampler& require(const Sampler& f, const char* handle) {
    if (!f) throw ConfigError(std::string("proposal needs the '") + handle + "' handle, which is missing");
    return f;
}
inline const Scorer& require(const Scorer& f, const char* handle) {
    if (!f) throw ConfigError(std::string("proposal needs the '") + handle + "' handle, which is missing");
    return f;
}

}  // namespace detail

// Throws ConfigError naming the first handle `k` needs that `ctx` lacks.
inline void check_context(Kind k, const ProposalContext& ctx) {
    const Needs n = needs(k);
    if (n.policy) detail::require(ctx.policy, "policy");
    if (n.clone) detail::require(ctx.clone, "clone");
    if (n.perturbation) detail::require(ctx.perturbed_clone, "perturbed_clone");
    if (n.target) detail::require(ctx.target_value, "target_value");
    if (n.novelty) detail::require(ctx.novelty, "novelty");
}

inline Tensor t_eval(const Sampler& base, const Tensor& s, Rng& rng) { return base(s, rng); }

// Best of m draws from `base` under `score`; ties go to the earliest draw. Candidates for all
// rows are drawn in one call, row r's draws occupying rows r*m .. r*m+m-1.
inline Tensor t_max(const Sampler& base, const Tensor& s, std::size_t m, const Scorer& score, Rng& rng) {
    if (m < 1) throw ContractError("t_max: m must be >= 1");
    if (m == 1) return base(s, rng);
    const Tensor cand = base(nets::repeat_rows(s, m), rng);
    const Tensor values = score(nets::repeat_rows(s, m), cand);
    const std::size_t n = s.rows(), d = cand.cols();
    Tensor out(diff::Shape{n, d});
    for (std::size_t r = 0; r < n; ++r) {
        std::size_t best = r * m;
        for (std::size_t k = r * m + 1; k < (r + 1) * m; ++k) {
            if (values[k] > values[best]) best = k;
        }
        std::copy_n(cand.data() + best * d, d, out.data() + r * d);
    }
    return out;
}

// rho = 1 - exp(-eta_bar / tau), in [0, 1).
inline double potential_rho(double eta_bar, double tau_rnd) {
    if (!(tau_rnd > 0.0)) throw ContractError("potential_rho: tau must be positive");
    return 1.0 - std::exp(-eta_bar / tau_rnd);
}

inline bool safe_gate(double rho, double delta, Orientation o) {
    return o == Orientation::novel_high ? rho >= delta : rho < delta;
}

namespace detail {

// The theta-max candidate is drawn first, then the safe branch, so the stream consumption
// does not depend on the gate outcome.
inline Tensor conditional(const Tensor& s, const ProposalSpec& spec, const ProposalContext& ctx, Rng& rng,
                          const std::function<Tensor()>& safe_branch) {
    const Sampler& policy = require(ctx.policy, "policy");
    const Scorer& score = require(ctx.target_value, "target_value");
    const Scorer& novelty = require(ctx.novelty, "novelty");
    Tensor chosen = t_max(policy, s, spec.m, score, rng);
    const Tensor safe = safe_branch();
    const Tensor eta = novelty(s, chosen);
    const std::size_t d = chosen.cols();
    for (std::size_t r = 0; r < s.rows(); ++r) {
        if (safe_gate(potential_rho(eta[r], spec.tau_rnd), spec.delta, spec.orientation)) {
            std::copy_n(safe.data() + r * d, d, chosen.data() + r * d);
        }
    }
    return chosen;
}

}  // namespace detail

inline Tensor t_cond_eval(const Sampler& base, const Tensor& s, const ProposalSpec& spec, const ProposalContext& ctx,
                          Rng& rng) {
    return detail::conditional(s, spec, ctx, rng, [&] { return t_eval(base, s, rng); });
}

inline Tensor t_cond_max(const Sampler& base, const Tensor& s, const ProposalSpec& spec, const ProposalContext& ctx,
                         Rng& rng) {
    const Scorer& score = detail::require(ctx.target_value, "target_value");
    return detail::conditional(s, spec, ctx, rng, [&] { return t_max(base, s, spec.m, score, rng); });
}

// One proposal action per row of `s`. `stored` holds the dataset's own actions at `s` and is
// required by beta_sarsa only (the stored next action for bootstraps, the batch action for the actor).
inline Tensor sample_from(const ProposalSpec& spec, const ProposalContext& ctx, const Tensor& s, Rng& rng,
                          const Tensor* stored = nullptr) {
    using detail::require;
    check_context(spec.kind, ctx);
    Tensor out;
    switch (spec.kind) {
        case Kind::beta_sarsa:
            if (stored == nullptr) throw ConfigError("beta_sarsa proposal needs SARSA transitions");
            out = *stored;
            break;
        case Kind::beta_clone: out = t_eval(require(ctx.clone, "clone"), s, rng); break;
        case Kind::theta: out = t_eval(require(ctx.policy, "policy"), s, rng); break;
        case Kind::beta_clone_max:
            out = t_max(require(ctx.clone, "clone"), s, spec.m, require(ctx.target_value, "target_value"), rng);
            break;
        case Kind::perturbed_beta_clone_max:
            out = t_max(require(ctx.perturbed_clone, "perturbed_clone"), s, spec.m,
                        require(ctx.target_value, "target_value"), rng);
            break;
        case Kind::theta_max:
            out = t_max(require(ctx.policy, "policy"), s, spec.m, require(ctx.target_value, "target_value"), rng);
            break;
        case Kind::spi_beta_clone: out = t_cond_eval(require(ctx.clone, "clone"), s, spec, ctx, rng); break;
        case Kind::spi_beta_clone_max: out = t_cond_max(require(ctx.clone, "clone"), s, spec, ctx, rng); break;
        case Kind::spi_perturbed_beta_clone_max:
            out = t_cond_max(require(ctx.perturbed_clone, "perturbed_clone"), s, spec, ctx, rng);
            break;
    }
    if (out.rows() != s.rows()) throw ShapeError("sample_from: proposal returned the wrong number of rows");
    if (ctx.audit != nullptr && spec.kind != Kind::beta_sarsa) ctx.audit->check_actions(ctx.bounds, out);
    return out;
}

}  // namespace giwr::proposals
