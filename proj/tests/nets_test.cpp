#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <utility>

#include "giwr/diffcore/gradcheck.hpp"
#include "giwr/nets/checkpoint.hpp"
#include "giwr/nets/clone.hpp"
#include "giwr/nets/critic.hpp"
#include "giwr/nets/policy.hpp"
#include "giwr/nets/rnd.hpp"

using namespace giwr;
using namespace giwr::nets;
using diff::Shape;

namespace {

const std::vector<std::size_t> small_hidden{8, 8};

Tensor states(std::size_t n, std::size_t dim, std::uint64_t seed) {
    Rng rng(seed);
    Tensor s(Shape{n, dim});
    for (double& v : s.values()) v = uniform(rng, -1.0, 1.0);
    return s;
}

ActionBounds box2() { return ActionBounds{{-1.0, 0.0}, {1.0, 2.0}, {}}; }

void zero(Mlp& net) {
    for (Param* p : net.params()) p->value = Tensor(p->value.shape(), 0.0);
}

// Output layer of `net` set to the constant `value` regardless of input.
void make_constant(Mlp& net, double value) {
    auto ps = net.params();
    ps[ps.size() - 2]->value = Tensor(ps[ps.size() - 2]->value.shape(), 0.0);
    ps.back()->value = Tensor(ps.back()->value.shape(), value);
}

void expect_certified(const diff::GradCheckReport& r) {
    EXPECT_LT(r.max_rel_error, 1e-4) << "worst param " << r.worst_param << " index " << r.worst_index
                                     << " analytic " << r.worst_analytic << " numeric " << r.worst_numeric;
}

}  // namespace

TEST(Mlp, ShapesChainAndInputIsChecked) {
    Rng init(1);
    Mlp net("net", {3, 5, 2}, init);
    EXPECT_EQ(net.params().size(), 4u);
    EXPECT_EQ(net.params()[0]->value.shape(), (Shape{3, 5}));
    EXPECT_EQ(net.params()[2]->value.shape(), (Shape{5, 2}));
    EXPECT_EQ(net.predict(states(4, 3, 2)).shape(), (Shape{4, 2}));
    EXPECT_THROW(net.predict(states(4, 2, 2)), ShapeError);
}

TEST(Mlp, PredictMatchesGraphForward) {
    Rng init(3);
    Mlp net("net", {3, 6, 6, 2}, init);
    const Tensor x = states(5, 3, 4);
    Graph g;
    const Tensor viaGraph = net.forward(g, g.constant(x)).value();
    const Tensor direct = net.predict(x);
    for (std::size_t i = 0; i < direct.size(); ++i) EXPECT_NEAR(direct[i], viaGraph[i], 1e-14);
}

TEST(Policy, SamplesStayInBoundsAndAreDeterministic) {
    Rng init(5);
    GaussianPolicy pi(3, box2(), small_hidden, init);
    const Tensor s = states(64, 3, 6);
    Rng r1(7), r2(7);
    const Tensor a1 = pi.sample(s, r1), a2 = pi.sample(s, r2);
    EXPECT_EQ(a1, a2);
    for (std::size_t r = 0; r < a1.rows(); ++r) EXPECT_TRUE(box2().contains(a1.row(r)));

    Graph g1, g2;
    Rng r3(9), r4(9);
    const auto s1 = pi.sample(g1, s, r3), s2 = pi.sample(g2, s, r4);
    EXPECT_EQ(s1.action, s2.action);
    EXPECT_EQ(s1.log_prob.value(), s2.log_prob.value());
}

TEST(Policy, NarrowLimitCollapsesToSquashedMean) {
    Rng init(11);
    GaussianPolicy pi(2, ActionBounds::symmetric(1, 2.0), small_hidden, init);
    // Saturate the log-std head at its lower bound.
    auto ps = pi.params();
    ps[ps.size() - 2]->value = Tensor(ps[ps.size() - 2]->value.shape(), 0.0);
    ps.back()->value = Tensor(ps.back()->value.shape(), -50.0);
    const Tensor s = states(16, 2, 12);
    const auto [mu, log_std] = pi.predict_heads(s);
    const Tensor mean = pi.mean_action(s);
    Rng rng(13);
    const Tensor a = pi.sample(s, rng);
    for (std::size_t r = 0; r < 16; ++r) {
        EXPECT_DOUBLE_EQ(log_std[r], GaussianPolicy::log_std_min);
        EXPECT_NEAR(mean[r], 2.0 * std::tanh(mu[r]), 1e-15);
        // |da/du| <= half, and |u - mu| <= sigma * 5 with overwhelming probability.
        EXPECT_NEAR(a[r], mean[r], 2.0 * std::exp(GaussianPolicy::log_std_min) * 5.0);
    }
}

TEST(Policy, SampleLogProbAgreesWithDensityOfTheDrawnAction) {
    Rng init(15);
    GaussianPolicy pi(3, box2(), small_hidden, init);
    const Tensor s = states(32, 3, 16);
    Rng rng(17);
    Graph g;
    const auto smp = pi.sample(g, s, rng);
    const Tensor direct = pi.log_prob(g, s, smp.action).value();
    for (std::size_t r = 0; r < 32; ++r) EXPECT_NEAR(smp.log_prob.value()[r], direct[r], 1e-6) << r;
}

TEST(Policy, LogProbFiniteForEveryInBoundsAction) {
    Rng init(19);
    GaussianPolicy pi(1, ActionBounds::symmetric(1, 1.0), small_hidden, init);
    const Tensor s = states(5, 1, 20);
    Graph g;
    const Tensor lp = pi.log_prob(g, s, Tensor::matrix(5, 1, {-1.0, -0.999999, 0.0, 0.5, 1.0})).value();
    for (double v : lp.values()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Policy, DensityIntegratesToOne) {
    Rng init(21);
    GaussianPolicy pi(1, ActionBounds::symmetric(1, 1.5), small_hidden, init);
    const std::size_t n = 20000;
    Tensor s(Shape{n, 1}, 0.3), a(Shape{n, 1});
    const double h = 3.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) a[i] = -1.5 + (static_cast<double>(i) + 0.5) * h;
    Graph g;
    const Tensor lp = pi.log_prob(g, s, a).value();
    double mass = 0.0;
    for (double v : lp.values()) mass += std::exp(v) * h;
    EXPECT_NEAR(mass, 1.0, 2e-3);
}

TEST(Policy, LogProbGradientIsCertified) {
    Rng init(23);
    GaussianPolicy pi(3, box2(), small_hidden, init);
    const Tensor s = states(8, 3, 24);
    Rng arng(25);
    const Tensor a = pi.sample(s, arng);
    expect_certified(diff::finite_diff_check([&](Graph& g) { return diff::mean(pi.log_prob(g, s, a)); }, pi.params()));
    expect_certified(diff::finite_diff_check(
        [&](Graph& g) {
            Rng rng(26);
            return diff::mean(pi.sample(g, s, rng).log_prob);
        },
        pi.params()));
}

TEST(Polyak, ExamplesAndContraction) {
    Param t{"t", Tensor::scalar(0.0)}, m{"m", Tensor::scalar(1.0)};
    polyak_update({&t}, {&m}, 0.005);
    EXPECT_DOUBLE_EQ(t.value.item(), 0.005);
    polyak_update({&t}, {&m}, 0.0);
    EXPECT_DOUBLE_EQ(t.value.item(), 0.005);
    polyak_update({&t}, {&m}, 1.0);
    EXPECT_EQ(t.value, m.value);

    Param tv{"tv", Tensor::matrix(1, 3, {1.0, -2.0, 4.0})}, mv{"mv", Tensor::matrix(1, 3, {0.5, 0.5, 0.5})};
    auto dist = [&] {
        double acc = 0.0;
        for (std::size_t i = 0; i < 3; ++i) acc += (tv.value[i] - mv.value[i]) * (tv.value[i] - mv.value[i]);
        return std::sqrt(acc);
    };
    const double before = dist();
    polyak_update({&tv}, {&mv}, 0.3);
    EXPECT_NEAR(dist(), 0.7 * before, 1e-14);
}

TEST(Polyak, RejectsBadInputs) {
    Param t{"t", Tensor(Shape{2}, 0.0)}, m{"m", Tensor(Shape{3}, 0.0)};
    EXPECT_THROW(polyak_update({&t}, {&m}, 0.5), ShapeError);
    Param u{"u", Tensor(Shape{2}, 0.0)};
    EXPECT_THROW(polyak_update({&t}, {&u}, 1.5), ContractError);
}

TEST(TwinCritic, HeadSelection) {
    Rng init(27);
    TwinCritic critic(2, 1, small_hidden, init);
    const Tensor s = states(4, 2, 28), a = states(4, 1, 29);
    // Targets start as copies of the mains, but the twins differ.
    EXPECT_EQ(critic.target_value(0, s, a), critic.main_value(0, s, a));
    make_constant(critic.target(0), 3.0);
    make_constant(critic.target(1), 5.0);
    const Tensor low = critic.value(s, a, CriticMode::min_targets);
    for (double v : low.values()) EXPECT_DOUBLE_EQ(v, 3.0);
    EXPECT_EQ(critic.value(s, a, CriticMode::first_main), critic.main_value(0, s, a));

    critic.polyak(1.0);
    const Tensor q1 = critic.main_value(0, s, a), q2 = critic.main_value(1, s, a);
    const Tensor m = critic.min_target(s, a);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(m[i], std::min(q1[i], q2[i]));
}

TEST(TwinCritic, IdenticalTwinsGiveEitherTwin) {
    Rng a(31), b(31);
    TwinCritic critic(2, 1, small_hidden, a);
    Mlp copy("critic.q1", layer_widths(3, small_hidden, 1), b);
    critic.target(1) = critic.target(0);
    const Tensor s = states(6, 2, 32), act = states(6, 1, 33);
    EXPECT_EQ(critic.min_target(s, act), critic.target_value(0, s, act));
    EXPECT_EQ(copy.predict(concat_cols(s, act)), critic.main_value(0, s, act));
}

TEST(TwinCritic, ValueGradientIsCertified) {
    Rng init(35);
    TwinCritic critic(2, 2, small_hidden, init);
    const Tensor s = states(8, 2, 36), a = states(8, 2, 37);
    expect_certified(diff::finite_diff_check(
        [&](Graph& g) { return diff::mean(diff::square(diff::sub(critic.q(g, 1, s, a), g.constant(Tensor(Shape{8, 1}, 0.3))))); },
        critic.main_params()));
}

TEST(Clone, LossGradientIsCertifiedAndKlNonNegative) {
    Rng init(39);
    BehaviorClone clone(2, box2(), small_hidden, init);
    const Tensor s = states(8, 2, 40);
    Rng arng(41);
    Tensor a = box2().uniform_rows(8, arng);
    expect_certified(diff::finite_diff_check(
        [&](Graph& g) {
            Rng rng(42);
            return clone.loss(g, s, a, rng).total;
        },
        clone.params()));
    Graph g;
    Rng rng(43);
    EXPECT_GE(clone.loss(g, s, a, rng).kl.value().item(), 0.0);
}

TEST(Clone, StandardNormalPosteriorHasZeroKl) {
    Rng init(45);
    BehaviorClone clone(1, ActionBounds::symmetric(1, 1.0), small_hidden, init);
    // Encoder output: mean 0 and the raw log-std that maps to log sigma = 0.
    auto enc = clone.params();
    const double mid = 0.5 * (BehaviorClone::latent_log_std_max - BehaviorClone::latent_log_std_min);
    const double raw = std::atanh(-BehaviorClone::latent_log_std_min / mid - 1.0);
    const std::size_t L = clone.latent_dim();
    Param& w = *enc[2 * small_hidden.size()];
    Param& b = *enc[2 * small_hidden.size() + 1];
    w.value = Tensor(w.value.shape(), 0.0);
    for (std::size_t i = 0; i < 2 * L; ++i) b.value[i] = i < L ? 0.0 : raw;
    Graph g;
    Rng rng(46);
    EXPECT_NEAR(clone.loss(g, states(8, 1, 47), states(8, 1, 48), rng).kl.value().item(), 0.0, 1e-12);
}

TEST(Clone, CollapsesOnConstantActionData) {
    Rng init(49);
    const ActionBounds bounds = ActionBounds::symmetric(1, 1.0);
    BehaviorClone clone(2, bounds, {32, 32}, init);
    Adam opt(1e-3);
    Rng rng(50), data_rng(51);
    const Tensor a(Shape{32, 1}, 0.4);
    auto step = [&] { clone.train_step(states(32, 2, data_rng()), a, rng, opt); };
    for (int k = 0; k < 5000; ++k) step();
    Graph g;
    EXPECT_LT(clone.loss(g, states(256, 2, 52), Tensor(Shape{256, 1}, 0.4), rng).reconstruction.value().item(), 1e-3);
    // Keep going until the decoder has stopped reading the latent.
    for (int k = 0; k < 5000; ++k) step();
    Rng srng(53);
    const Tensor drawn = clone.sample(states(200, 2, 54), srng);
    for (double v : drawn.values()) EXPECT_NEAR(v, 0.4, 1e-2);
}

TEST(Clone, SamplesInBoundsAndDeterministic) {
    Rng init(55);
    BehaviorClone clone(2, box2(), small_hidden, init);
    const Tensor s = states(100, 2, 56);
    Rng r1(57), r2(57);
    const Tensor a1 = clone.sample(s, r1);
    EXPECT_EQ(a1, clone.sample(s, r2));
    for (std::size_t r = 0; r < a1.rows(); ++r) EXPECT_TRUE(box2().contains(a1.row(r)));
    // Saturated decoder lands exactly on the upper corner.
    clone.params().back()->value = Tensor(clone.params().back()->value.shape(), 100.0);
    Rng r3(58);
    const Tensor top = clone.sample(s, r3);
    for (std::size_t r = 0; r < top.rows(); ++r) {
        EXPECT_TRUE(box2().contains(top.row(r)));
        EXPECT_DOUBLE_EQ(top(r, 0), 1.0);
        EXPECT_DOUBLE_EQ(top(r, 1), 2.0);
    }
}

TEST(Perturbation, ZeroOffsetReproducesTheClone) {
    Rng init(59);
    BehaviorClone clone(2, box2(), small_hidden, init);
    Perturbation xi(2, box2(), small_hidden, init);
    zero(xi.net());
    const Tensor s = states(20, 2, 60);
    Rng r1(61), r2(61);
    EXPECT_EQ(perturbed_clone_sample(clone, xi, s, r1), clone_sample(clone, s, r2));
}

TEST(Perturbation, DeviationIsBoundedByPhiTimesHalfRange) {
    Rng init(63);
    BehaviorClone clone(2, box2(), small_hidden, init);
    Perturbation xi(2, box2(), small_hidden, init);
    make_constant(xi.net(), 40.0);
    const Tensor s = states(200, 2, 64);
    Rng r1(65), r2(65);
    const Tensor base = clone_sample(clone, s, r1);
    const Tensor moved = perturbed_clone_sample(clone, xi, s, r2);
    for (std::size_t r = 0; r < 200; ++r) {
        EXPECT_TRUE(box2().contains(moved.row(r)));
        for (std::size_t i = 0; i < 2; ++i) {
            EXPECT_LE(std::abs(moved(r, i) - base(r, i)), 0.05 * box2().half(i) + 1e-15);
        }
    }
    Rng r3(66), r4(66);
    EXPECT_EQ(perturbed_clone_sample(clone, xi, s, r3), perturbed_clone_sample(clone, xi, s, r4));
}

TEST(Perturbation, FlatCriticGivesZeroGradient) {
    Rng init(67);
    Perturbation xi(2, box2(), small_hidden, init);
    const Tensor s = states(8, 2, 68), base = Tensor(Shape{8, 2}, 0.5);
    const ActionCritic flat = [](Graph& g, const Tensor& st, Var a) {
        return diff::add(diff::scale(diff::row_sum(a), 0.0), g.constant(Tensor(Shape{st.rows(), 1}, 2.0)));
    };
    Graph g;
    const auto grads = g.backward(xi.loss(g, s, base, flat));
    for (const Param* p : xi.params()) {
        const Tensor grad = grads.of(*p);
        for (double v : grad.values()) EXPECT_EQ(v, 0.0);
    }
}

TEST(Perturbation, AscentMovesTowardTheCriticMaximum) {
    Rng init(69);
    const ActionBounds bounds = ActionBounds::symmetric(1, 1.0);
    Perturbation xi(1, bounds, small_hidden, init);
    const ActionCritic neg_norm = [](Graph&, const Tensor&, Var a) { return diff::neg(diff::row_sum(diff::square(a))); };
    const Tensor s = states(32, 1, 70), base(Shape{32, 1}, 0.1);
    Adam opt(1e-2);
    for (int k = 0; k < 300; ++k) perturbation_train_step(xi, neg_norm, s, base, opt);
    const Tensor moved = xi.apply(s, base);
    for (double v : moved.values()) EXPECT_LT(v - 0.1, -0.04);
}

TEST(Perturbation, LossGradientIsCertified) {
    Rng init(71);
    TwinCritic critic(2, 2, small_hidden, init);
    Perturbation xi(2, box2(), small_hidden, init);
    const Tensor s = states(8, 2, 72);
    Rng arng(73);
    // Interior base actions so the clip stays inactive under the finite-difference step.
    Tensor base(Shape{8, 2});
    for (std::size_t r = 0; r < 8; ++r) {
        base(r, 0) = uniform(arng, -0.8, 0.8);
        base(r, 1) = uniform(arng, 0.2, 1.8);
    }
    const ActionCritic q1 = [&](Graph& g, const Tensor& st, Var a) { return critic.q(g, 0, st, a, false); };
    expect_certified(diff::finite_diff_check([&](Graph& g) { return xi.loss(g, s, base, q1); }, xi.params()));
}

TEST(Rnd, IdenticalNetworksScoreZero) {
    Rng a(75), b(75);
    RndPair pair(2, 1, small_hidden, a);
    Mlp frozen_twin("rnd.frozen", layer_widths(3, small_hidden, RndPair::default_embedding), b);
    auto dst = pair.predictor().params();
    auto src = frozen_twin.params();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k]->value = src[k]->value;
    const Tensor scores = pair.score(states(10, 2, 76), states(10, 1, 77), true);
    for (double v : scores.values()) EXPECT_EQ(v, 0.0);
}

TEST(Rnd, WelfordMatchesTwoPassStd) {
    RunningStd acc;
    EXPECT_EQ(acc.stddev(), 1.0);
    acc.push(3.0);
    EXPECT_EQ(acc.stddev(), 1.0);
    const std::vector<double> xs{3.0, 1.0, 4.0, 1.5, 9.0, 2.6};
    for (std::size_t i = 1; i < xs.size(); ++i) acc.push(xs[i]);
    double mean = 0.0, ss = 0.0;
    for (double x : xs) mean += x / xs.size();
    for (double x : xs) ss += (x - mean) * (x - mean);
    EXPECT_NEAR(acc.stddev(), std::sqrt(ss / (xs.size() - 1)), 1e-12);
}

TEST(Rnd, TrainingLowersNoveltyOnDataPairsOnly) {
    Rng init(79);
    RndPair pair(2, 1, {32, 32}, init);
    const std::uint64_t frozen_before = pair.frozen_hash();
    Adam opt(1e-3);
    Rng data_rng(80);
    // Dataset actions follow a = 0.5 * s0, far from most uniform actions.
    auto dataset_batch = [&](std::size_t n) {
        Tensor s = states(n, 2, data_rng());
        Tensor a(Shape{n, 1});
        for (std::size_t r = 0; r < n; ++r) a[r] = 0.5 * s(r, 0);
        return std::pair{s, a};
    };
    for (int k = 0; k < 3000; ++k) {
        auto [s, a] = dataset_batch(32);
        const double loss = pair.train_step(s, a, opt);
        ASSERT_TRUE(std::isfinite(loss));
    }
    EXPECT_EQ(pair.frozen_hash(), frozen_before);
    EXPECT_GT(pair.online().stddev(), 0.0);
    auto [s, a] = dataset_batch(1000);
    Rng urng(81);
    const Tensor u = ActionBounds::symmetric(1, 1.0).uniform_rows(1000, urng);
    double on = 0.0, off = 0.0;
    const Tensor e_on = static_cast<const RndPair&>(pair).score(s, a), e_off = static_cast<const RndPair&>(pair).score(s, u);
    for (std::size_t r = 0; r < 1000; ++r) {
        EXPECT_GE(e_on[r], 0.0);
        on += e_on[r];
        off += e_off[r];
    }
    EXPECT_LT(on, off);
}

TEST(Rnd, PredictorLossGradientIsCertified) {
    Rng init(83);
    RndPair pair(2, 1, small_hidden, init);
    const Tensor s = states(8, 2, 84), a = states(8, 1, 85);
    expect_certified(
        diff::finite_diff_check([&](Graph& g) { return diff::mean(pair.error(g, s, a)); }, pair.predictor_params()));
}

TEST(Checkpoint, RoundTripRestoresEveryTensor) {
    Rng init(87);
    GaussianPolicy pi(3, box2(), small_hidden, init);
    const auto bytes = encode_checkpoint(std::as_const(pi).params());
    const NamedTensors tensors = decode_checkpoint(io::ByteReader(bytes));
    ASSERT_EQ(tensors.size(), pi.params().size());

    Rng other(88);
    GaussianPolicy fresh(3, box2(), small_hidden, other);
    restore(tensors, fresh.params());
    const Tensor s = states(5, 3, 89);
    EXPECT_EQ(fresh.mean_action(s), pi.mean_action(s));

    const auto path = std::filesystem::temp_directory_path() / "giwr_nets_test.ckpt";
    save_checkpoint(path.string(), std::as_const(pi).params());
    EXPECT_EQ(load_checkpoint(path.string()).size(), tensors.size());
    std::filesystem::remove(path);
}

TEST(Checkpoint, MalformedInputReportsOffsets) {
    Rng init(91);
    GaussianPolicy pi(1, ActionBounds::symmetric(1, 1.0), small_hidden, init);
    auto bytes = encode_checkpoint(std::as_const(pi).params());
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    EXPECT_THROW(decode_checkpoint(io::ByteReader(bad_magic)), ParseError);
    auto bad_version = bytes;
    bad_version[7] = 9;
    try {
        decode_checkpoint(io::ByteReader(bad_version));
        FAIL() << "version accepted";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.offset, 7u);
    }
    bytes.pop_back();
    EXPECT_THROW(decode_checkpoint(io::ByteReader(bytes)), ParseError);

    NamedTensors wrong{{"policy.trunk.w0", Tensor(Shape{2, 2}, 0.0)}};
    EXPECT_THROW(restore(wrong, pi.params()), ShapeError);
    EXPECT_THROW(restore({}, pi.params()), ContractError);
}
