#include <gtest/gtest.h>

#include <cmath>

#include "giwr/envlab/env.hpp"
#include "giwr/nets/clone.hpp"
#include "giwr/nets/critic.hpp"
#include "giwr/nets/policy.hpp"
#include "giwr/nets/rnd.hpp"
#include "giwr/oracle/tabular.hpp"
#include "giwr/proposals/proposals.hpp"
#include "support/fixture_table.hpp"

using namespace giwr;
using namespace giwr::proposals;
using diff::Shape;

namespace {

const ActionBounds chain_bounds{{-1.0}, {1.0}, {-1.0, 0.0, 1.0}};

// Draws embedded chain actions from a fixed pmf, one uniform per row.
Sampler pmf_sampler(std::vector<double> pmf) {
    return [pmf](const Tensor& s, Rng& rng) {
        Tensor out(Shape{s.rows(), 1});
        for (std::size_t r = 0; r < s.rows(); ++r) {
            const double u = uniform(rng, 0.0, 1.0);
            double acc = 0.0;
            std::size_t k = 0;
            while (k + 1 < pmf.size() && u >= (acc += pmf[k])) ++k;
            out[r] = chain_bounds.embedded[k];
        }
        return out;
    };
}

// Scores with a Q table indexed by (state obs, embedded action).
Scorer table_scorer(const oracle::TabularQ& q) {
    return [q](const Tensor& s, const Tensor& a) {
        Tensor out(Shape{s.rows(), 1});
        for (std::size_t r = 0; r < s.rows(); ++r) {
            out[r] = q(static_cast<std::size_t>(std::lround(s[r])), chain_bounds.snap_index(a[r]));
        }
        return out;
    };
}

Scorer constant_scorer(double v) {
    return [v](const Tensor& s, const Tensor&) { return Tensor(Shape{s.rows(), 1}, v); };
}

// Novelty score whose potential at tau is exactly rho.
Scorer novelty_for_rho(double rho, double tau) {
    return constant_scorer(-tau * std::log1p(-rho));
}

std::vector<double> empirical_pmf(const Tensor& actions) {
    std::vector<double> pmf(3, 0.0);
    for (double a : actions.values()) pmf[chain_bounds.snap_index(a)] += 1.0 / static_cast<double>(actions.size());
    return pmf;
}

double total_variation(const std::vector<double>& p, const std::vector<double>& q) {
    double tv = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) tv += 0.5 * std::abs(p[i] - q[i]);
    return tv;
}

oracle::TabularQ fixture_qstar() {
    const auto rows = fixture::read("discrete_chain_qstar.txt");
    oracle::TabularQ q{5, 3, 0.9, {}};
    for (const auto& row : rows) q.values.insert(q.values.end(), row.begin(), row.end());
    return q;
}

Tensor states_at(std::size_t state, std::size_t n) { return Tensor(Shape{n, 1}, static_cast<double>(state)); }

struct ContinuousModels {
    nets::GaussianPolicy policy;
    nets::BehaviorClone clone;
    nets::Perturbation xi;
    nets::TwinCritic critic;
    nets::RndPair rnd;
};

ContinuousModels make_models(const ActionBounds& bounds, std::uint64_t seed) {
    Rng init(seed);
    const std::vector<std::size_t> h{8, 8};
    return {nets::GaussianPolicy(2, bounds, h, init), nets::BehaviorClone(2, bounds, h, init),
            nets::Perturbation(2, bounds, h, init), nets::TwinCritic(2, bounds.dim(), h, init),
            nets::RndPair(2, bounds.dim(), h, init)};
}

ProposalContext context_for(ContinuousModels& m, const ActionBounds& bounds, InvariantAudit* audit) {
    ProposalContext ctx;
    ctx.bounds = bounds;
    ctx.audit = audit;
    ctx.policy = [&m](const Tensor& s, Rng& r) { return m.policy.sample(s, r); };
    ctx.clone = [&m](const Tensor& s, Rng& r) { return m.clone.sample(s, r); };
    ctx.perturbed_clone = [&m](const Tensor& s, Rng& r) { return nets::perturbed_clone_sample(m.clone, m.xi, s, r); };
    ctx.target_value = [&m](const Tensor& s, const Tensor& a) { return m.critic.min_target(s, a); };
    ctx.novelty = [&m](const Tensor& s, const Tensor& a) { return static_cast<const nets::RndPair&>(m.rnd).score(s, a); };
    return ctx;
}

Tensor random_states(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    Tensor s(Shape{n, 2});
    for (double& v : s.values()) v = uniform(rng, -1.0, 1.0);
    return s;
}

}  // namespace

TEST(Kinds, NamesRoundTripAndUnknownNamesListTheValidOnes) {
    EXPECT_EQ(kind_names.size(), 9u);
    for (const auto& [kind, text] : kind_names) EXPECT_EQ(parse_kind(name(kind)), kind);
    try {
        parse_kind("theta_min");
        FAIL();
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("theta_min"), std::string::npos);
        EXPECT_NE(msg.find("spi_perturbed_beta_clone_max"), std::string::npos);
    }
}

TEST(ProposalSpec, ValidationBounds) {
    ProposalSpec spec;
    EXPECT_NO_THROW(spec.validate());
    spec.m = 0;
    EXPECT_THROW(spec.validate(), ConfigError);
    spec = {};
    spec.delta = 1.0;
    EXPECT_THROW(spec.validate(), ConfigError);
    spec = {};
    spec.tau_rnd = 0.0;
    EXPECT_THROW(spec.validate(), ConfigError);
}

TEST(TEval, ConstantBaseAndDeterminism) {
    const Sampler constant = [](const Tensor& s, Rng&) { return Tensor(Shape{s.rows(), 1}, 0.3); };
    Rng rng(1);
    EXPECT_EQ(t_eval(constant, states_at(0, 4), rng), Tensor(Shape{4, 1}, 0.3));
    const Sampler base = pmf_sampler({0.2, 0.3, 0.5});
    Rng a(5), b(5);
    EXPECT_EQ(t_eval(base, states_at(1, 50), a), t_eval(base, states_at(1, 50), b));
}

TEST(TMax, SingleCandidateIsTEval) {
    const Sampler base = pmf_sampler({0.2, 0.3, 0.5});
    Rng a(7), b(7);
    EXPECT_EQ(t_max(base, states_at(2, 64), 1, constant_scorer(0.0), a), t_eval(base, states_at(2, 64), b));
}

TEST(TMax, ConstantCriticReturnsTheFirstDraw) {
    const Sampler base = pmf_sampler({1.0 / 3, 1.0 / 3, 1.0 / 3});
    const std::size_t n = 200, m = 6;
    Rng a(9), b(9);
    const Tensor chosen = t_max(base, states_at(0, n), m, constant_scorer(1.5), a);
    const Tensor draws = base(states_at(0, n * m), b);
    for (std::size_t r = 0; r < n; ++r) EXPECT_EQ(chosen[r], draws[r * m]);
}

TEST(TMax, ChosenValueDominatesEveryCandidate) {
    auto models = make_models(ActionBounds::symmetric(1, 1.0), 11);
    const Sampler base = [&](const Tensor& s, Rng& r) { return models.policy.sample(s, r); };
    const Scorer score = [&](const Tensor& s, const Tensor& a) { return models.critic.min_target(s, a); };
    const Tensor s = random_states(40, 12);
    const std::size_t m = 7;
    Rng a(13), b(13);
    const Tensor chosen = t_max(base, s, m, score, a);
    const Tensor cand = base(nets::repeat_rows(s, m), b);
    const Tensor cand_values = score(nets::repeat_rows(s, m), cand);
    const Tensor chosen_values = score(s, chosen);
    for (std::size_t r = 0; r < 40; ++r) {
        for (std::size_t k = 0; k < m; ++k) EXPECT_GE(chosen_values[r], cand_values[r * m + k]);
    }
}

TEST(TMax, LawMatchesExactEnumeration) {
    const auto q = fixture_qstar();
    const std::vector<double> uniform_pmf(3, 1.0 / 3);
    const Sampler base = pmf_sampler(uniform_pmf);
    for (std::size_t state = 0; state < 5; ++state) {
        for (std::size_t m : {1u, 2u, 5u, 10u}) {
            Rng rng(100 + state * 31 + m);
            const Tensor out = t_max(base, states_at(state, 20000), m, table_scorer(q), rng);
            const auto exact = oracle::brute_force_tmax_dist(uniform_pmf, q.row(state), m);
            EXPECT_LT(total_variation(empirical_pmf(out), exact), 0.02) << "state " << state << " m " << m;
        }
    }
}

TEST(TMax, ExpectedValueIsMonotoneInM) {
    const auto q = fixture_qstar();
    const std::vector<double> behavior{0.5, 0.3, 0.2};
    const Sampler clone = pmf_sampler(behavior);
    const std::size_t state = 1, trials = 20000;
    double previous = -1e300;
    for (std::size_t m : {1u, 5u, 10u, 20u}) {
        Rng rng(200 + m);
        const Tensor out = t_max(clone, states_at(state, trials), m, table_scorer(q), rng);
        double mean = 0.0;
        for (double a : out.values()) mean += q(state, chain_bounds.snap_index(a)) / trials;
        const double exact = oracle::expected_max_of_m(behavior, q.row(state), m);
        EXPECT_NEAR(mean, exact, 0.02) << m;
        EXPECT_GE(mean, previous - 1e-12) << m;
        previous = mean;
    }
}

TEST(Rho, PotentialExamples) {
    EXPECT_EQ(potential_rho(0.0, 0.06), 0.0);
    EXPECT_NEAR(potential_rho(0.06, 0.06), 1.0 - std::exp(-1.0), 1e-15);
    EXPECT_NEAR(potential_rho(0.06, 0.06), 0.6321, 1e-4);
    double last = -1.0;
    for (double eta = 0.0; eta < 5.0; eta += 0.01) {
        const double rho = potential_rho(eta, 0.06);
        EXPECT_GE(rho, last);
        EXPECT_LE(rho, 1.0);
        last = rho;
    }
    EXPECT_NEAR(potential_rho(1e3, 0.06), 1.0, 1e-12);
    EXPECT_THROW(potential_rho(1.0, 0.0), ContractError);
}

TEST(Spi, GateSelectsTheDocumentedBranch) {
    // The theta branch always proposes +1 and the base always proposes -1.
    ProposalContext ctx;
    ctx.bounds = chain_bounds;
    ctx.policy = [](const Tensor& s, Rng&) { return Tensor(Shape{s.rows(), 1}, 1.0); };
    ctx.target_value = constant_scorer(0.0);
    const Sampler base = [](const Tensor& s, Rng&) { return Tensor(Shape{s.rows(), 1}, -1.0); };
    ProposalSpec spec;
    spec.m = 4;
    Rng rng(3);
    const Tensor s = states_at(0, 8);

    ctx.novelty = novelty_for_rho(0.0, spec.tau_rnd);
    EXPECT_EQ(t_cond_eval(base, s, spec, ctx, rng), Tensor(Shape{8, 1}, 1.0));
    EXPECT_EQ(t_cond_max(base, s, spec, ctx, rng), Tensor(Shape{8, 1}, 1.0));

    ctx.novelty = novelty_for_rho(0.99, spec.tau_rnd);
    EXPECT_EQ(t_cond_eval(base, s, spec, ctx, rng), Tensor(Shape{8, 1}, -1.0));
    EXPECT_EQ(t_cond_max(base, s, spec, ctx, rng), Tensor(Shape{8, 1}, -1.0));

    spec.delta = 0.0;
    ctx.novelty = novelty_for_rho(0.0, spec.tau_rnd);
    EXPECT_EQ(t_cond_eval(base, s, spec, ctx, rng), Tensor(Shape{8, 1}, -1.0));
    EXPECT_EQ(t_cond_max(base, s, spec, ctx, rng), Tensor(Shape{8, 1}, -1.0));

    // The opposite reading of rho flips the gate.
    spec.delta = 0.6;
    spec.orientation = Orientation::novel_low;
    ctx.novelty = novelty_for_rho(0.99, spec.tau_rnd);
    EXPECT_EQ(t_cond_eval(base, s, spec, ctx, rng), Tensor(Shape{8, 1}, 1.0));
    ctx.novelty = novelty_for_rho(0.1, spec.tau_rnd);
    EXPECT_EQ(t_cond_eval(base, s, spec, ctx, rng), Tensor(Shape{8, 1}, -1.0));
}

TEST(Spi, SafeMaxBranchWithFlatCriticIsTheFirstBaseDraw) {
    ProposalContext ctx;
    ctx.bounds = chain_bounds;
    ctx.policy = pmf_sampler({0.6, 0.2, 0.2});
    ctx.target_value = constant_scorer(2.0);
    ProposalSpec spec;
    spec.m = 5;
    ctx.novelty = novelty_for_rho(0.99, spec.tau_rnd);
    const Sampler base = pmf_sampler({0.1, 0.1, 0.8});
    const std::size_t n = 100;
    Rng a(21), b(21);
    const Tensor out = t_cond_max(base, states_at(0, n), spec, ctx, a);
    ctx.policy(states_at(0, n * spec.m), b);  // the theta-max candidates come first
    const Tensor base_draws = base(states_at(0, n * spec.m), b);
    for (std::size_t r = 0; r < n; ++r) EXPECT_EQ(out[r], base_draws[r * spec.m]);
}

TEST(Spi, ThetaBaseMakesCondMaxDistributedAsThetaMax) {
    const auto q = fixture_qstar();
    const std::vector<double> pi{0.2, 0.5, 0.3};
    ProposalContext ctx;
    ctx.bounds = chain_bounds;
    ctx.policy = pmf_sampler(pi);
    ctx.target_value = table_scorer(q);
    ProposalSpec spec;
    spec.m = 3;
    // Half the rows novel, half familiar.
    ctx.novelty = [&](const Tensor& s, const Tensor&) {
        Tensor out(Shape{s.rows(), 1});
        for (std::size_t r = 0; r < s.rows(); ++r) out[r] = r % 2 == 0 ? 0.0 : 10.0;
        return out;
    };
    Rng rng(23);
    const Tensor out = t_cond_max(ctx.policy, states_at(0, 20000), spec, ctx, rng);
    EXPECT_LT(total_variation(empirical_pmf(out), oracle::brute_force_tmax_dist(pi, q.row(0), spec.m)), 0.02);
}

TEST(SampleFrom, BetaSarsaPassesTheStoredActionThrough) {
    ProposalSpec spec;
    spec.kind = Kind::beta_sarsa;
    ProposalContext ctx;
    Rng rng(1);
    const Tensor stored(Shape{1, 1}, 0.3);
    EXPECT_EQ(sample_from(spec, ctx, states_at(0, 1), rng, &stored), stored);
    EXPECT_THROW(sample_from(spec, ctx, states_at(0, 1), rng), ConfigError);
}

TEST(SampleFrom, MissingHandlesAreNamed) {
    ProposalContext ctx;
    Rng rng(1);
    const std::pair<Kind, const char*> cases[] = {{Kind::beta_clone, "clone"},
                                                  {Kind::theta, "policy"},
                                                  {Kind::perturbed_beta_clone_max, "clone"},
                                                  {Kind::spi_beta_clone, "policy"}};
    for (const auto& [kind, handle] : cases) {
        ProposalSpec spec;
        spec.kind = kind;
        try {
            sample_from(spec, ctx, states_at(0, 1), rng);
            ADD_FAILURE() << name(kind);
        } catch (const ConfigError& e) {
            EXPECT_NE(std::string(e.what()).find(std::string("'") + handle + "'"), std::string::npos) << e.what();
        }
        EXPECT_THROW(check_context(kind, ctx), ConfigError);
    }
    ctx.clone = pmf_sampler({1, 0, 0});
    ProposalSpec spec;
    spec.kind = Kind::beta_clone_max;
    EXPECT_THROW(sample_from(spec, ctx, states_at(0, 1), rng), ConfigError);
}

TEST(SampleFrom, ThetaInTheNarrowLimitIsTheSquashedMean) {
    const ActionBounds bounds = ActionBounds::symmetric(1, 2.0);
    auto models = make_models(bounds, 31);
    auto ps = models.policy.params();
    ps[ps.size() - 2]->value = Tensor(ps[ps.size() - 2]->value.shape(), 0.0);
    ps.back()->value = Tensor(ps.back()->value.shape(), -50.0);
    InvariantAudit audit;
    const ProposalContext ctx = context_for(models, bounds, &audit);
    ProposalSpec spec;
    spec.kind = Kind::theta;
    const Tensor s = random_states(30, 32);
    Rng rng(33);
    const Tensor a = sample_from(spec, ctx, s, rng);
    const Tensor mean = models.policy.mean_action(s);
    for (std::size_t r = 0; r < 30; ++r) EXPECT_NEAR(a[r], mean[r], 2.0 * 5.0 * std::exp(-5.0));
}

TEST(SampleFrom, ZeroPerturbationSingleDrawIsTheClone) {
    const ActionBounds bounds = ActionBounds::symmetric(2, 1.0);
    auto models = make_models(bounds, 35);
    for (diff::Param* p : models.xi.params()) p->value = Tensor(p->value.shape(), 0.0);
    const ProposalContext ctx = context_for(models, bounds, nullptr);
    ProposalSpec perturbed, clone;
    perturbed.kind = Kind::perturbed_beta_clone_max;
    perturbed.m = 1;
    clone.kind = Kind::beta_clone;
    const Tensor s = random_states(25, 36);
    Rng a(37), b(37);
    EXPECT_EQ(sample_from(perturbed, ctx, s, a), sample_from(clone, ctx, s, b));
}

TEST(SampleFrom, EveryKindStaysInBoundsAndIsReproducible) {
    const ActionBounds bounds{{-1.0, 0.0}, {1.0, 3.0}, {}};
    auto models = make_models(bounds, 41);
    InvariantAudit audit;
    const ProposalContext ctx = context_for(models, bounds, &audit);
    const Tensor s = random_states(64, 42);
    for (const auto& [kind, text] : kind_names) {
        if (kind == Kind::beta_sarsa) continue;
        for (double delta : {0.0, 0.6, 0.99}) {
            ProposalSpec spec;
            spec.kind = kind;
            spec.m = 5;
            spec.delta = delta;
            Rng a(43), b(43);
            const Tensor x = sample_from(spec, ctx, s, a);
            EXPECT_EQ(x, sample_from(spec, ctx, s, b)) << text;
            ASSERT_EQ(x.rows(), 64u);
            for (std::size_t r = 0; r < 64; ++r) EXPECT_TRUE(bounds.contains(x.row(r))) << text;
        }
    }
    EXPECT_GT(audit.actions_checked, 0u);
    EXPECT_TRUE(audit.clean());
}

TEST(SampleFrom, AuditCountsOutOfBoundsProposals) {
    InvariantAudit audit;
    ProposalContext ctx;
    ctx.bounds = ActionBounds::symmetric(1, 1.0);
    ctx.audit = &audit;
    ctx.policy = [](const Tensor& s, Rng&) { return Tensor(Shape{s.rows(), 1}, 1.5); };
    ProposalSpec spec;
    Rng rng(1);
    sample_from(spec, ctx, states_at(0, 3), rng);
    EXPECT_EQ(audit.action_violations, 3u);
    EXPECT_FALSE(audit.clean());
}

TEST(Needs, HandlesPerKind) {
    EXPECT_TRUE(needs(Kind::beta_sarsa).sarsa);
    EXPECT_TRUE(needs(Kind::perturbed_beta_clone_max).perturbation);
    EXPECT_FALSE(needs(Kind::beta_clone_max).novelty);
    EXPECT_TRUE(needs(Kind::spi_beta_clone).novelty);
    EXPECT_TRUE(needs(Kind::spi_beta_clone).policy);
    Needs n = needs(Kind::theta);
    n |= needs(Kind::beta_clone);
    EXPECT_TRUE(n.policy && n.clone && !n.target);
}
