#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <string>

#include "giwr/datagen/dataset.hpp"
#include "giwr/envlab/env.hpp"

namespace giwr::datagen {

// Behavior policy used to roll out the environment. epsilon_mix takes the expert action with
// probability 1 - epsilon and a uniform action otherwise; expert and random are its endpoints.
struct Behavior {
    enum class Kind { expert, epsilon_mix, random, replay };
    Kind kind = Kind::expert;
    double epsilon = 0.0;

    static Behavior expert() { return {Kind::expert, 0.0}; }
    static Behavior epsilon_mix(double eps) { return {Kind::epsilon_mix, eps}; }
    static Behavior random() { return {Kind::random, 1.0}; }
    static Behavior replay() { return {Kind::replay, 0.0}; }
};

inline constexpr std::array<double, 4> replay_epsilons{0.8, 0.6, 0.4, 0.2};
inline constexpr double medium_epsilon = 0.5;

inline const std::array<std::string, 4>& grade_names() {
    static const std::array<std::string, 4> names{"expert", "medium", "replay", "random"};
    return names;
}

inline Behavior behavior_for_grade(const std::string& grade) {
    if (grade == "expert") return Behavior::expert();
    if (grade == "medium") return Behavior::epsilon_mix(medium_epsilon);
    if (grade == "replay") return Behavior::replay();
    if (grade == "random") return Behavior::random();
    throw ConfigError("unknown grade '" + grade + "' (valid: expert, medium, replay, random, mixed)");
}

inline std::string grade_label(const Behavior& b) {
    switch (b.kind) {
        case Behavior::Kind::expert: return "expert";
        case Behavior::Kind::random: return "random";
        case Behavior::Kind::replay: return "replay";
        case Behavior::Kind::epsilon_mix:
            if (b.epsilon == medium_epsilon) return "medium";
            char buf[48];
            std::snprintf(buf, sizeof buf, "epsilon(%g)", b.epsilon);
            return buf;
    }
    return "unknown";
}

namespace detail {

inline std::vector<double> behave(const envlab::Environment& env, std::span<const double> obs, double epsilon,
                                  Rng& rng) {
    const bool explore = uniform(rng, 0.0, 1.0) < epsilon;
    if (explore) {
        const Tensor u = env.spec().bounds.uniform_rows(1, rng);
        return {u.values().begin(), u.values().end()};
    }
    return env.expert_action(obs);
}

// Appends `n` transitions collected with a fixed epsilon.
inline void collect(envlab::Environment& env, double epsilon, std::size_t n, Rng& rng, Dataset& out) {
    std::size_t added = 0;
    while (added < n) {
        std::vector<double> obs = env.reset(rng());
        std::vector<double> action = behave(env, obs, epsilon, rng);
        for (;;) {
            envlab::StepResult res = env.step(action);
            env.spec().bounds.clip(action);
            std::vector<double> next_action =
                res.terminal ? std::vector<double>(action.size(), 0.0) : behave(env, res.next_state, epsilon, rng);
            Transition t{obs, action, res.reward, res.next_state, res.terminal, std::nullopt};
            if (out.sarsa()) t.a2 = next_action;
            out.push(t);
            if (++added == n || res.terminal) break;
            obs = std::move(res.next_state);
            action = std::move(next_action);
        }
    }
}

}  // namespace detail

// Rolls out `behavior` until `n` transitions are recorded. Reproducible given (env kind, behavior, n, sarsa, seed).
inline Dataset generate(const envlab::Environment& prototype, const Behavior& behavior, std::size_t n, bool sarsa,
                        std::uint64_t seed) {
    if (n < 1) throw ContractError("generate: n must be >= 1");
    auto env = prototype.fresh();
    const auto& spec = env->spec();
    Dataset out(spec.obs_dim, spec.act_dim, sarsa, grade_label(behavior));
    Rng rng(seed);
    if (behavior.kind == Behavior::Kind::replay) {
        const std::size_t share = n / replay_epsilons.size();
        for (std::size_t k = 0; k < replay_epsilons.size(); ++k) {
            const std::size_t count = share + (k == 0 ? n - share * replay_epsilons.size() : 0);
            if (count > 0) detail::collect(*env, replay_epsilons[k], count, rng, out);
        }
    } else {
        detail::collect(*env, behavior.epsilon, n, rng, out);
    }
    return out;
}

inline std::string mixed_label(double p) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "mixed(%.2f)", p);
    return buf;
}

// Shares taken by mix(): floor(p * n_expert) expert records and ceil((1 - p) * n_random) random ones.
// The 1e-9 slack keeps products like 0.3 * 100 from rounding across an integer.
inline std::pair<std::size_t, std::size_t> mix_counts(std::size_t n_expert, std::size_t n_random, double p) {
    const auto e = static_cast<std::size_t>(std::floor(p * static_cast<double>(n_expert) + 1e-9));
    const auto r = static_cast<std::size_t>(std::ceil((1.0 - p) * static_cast<double>(n_random) - 1e-9));
    return {std::min(e, n_expert), std::min(r, n_random)};
}

// Corrupts an expert dataset with random data: both inputs are shuffled with `seed`, the leading
// shares are concatenated and the result shuffled again.
inline Dataset mix(const Dataset& expert, const Dataset& random, double p, std::uint64_t seed) {
    if (!(p >= 0.0 && p <= 1.0)) throw ContractError("mix: p must lie in [0,1]");
    if (expert.obs_dim() != random.obs_dim() || expert.act_dim() != random.act_dim()) {
        throw ContractError("mix: datasets have different dimensions");
    }
    if (expert.sarsa() != random.sarsa()) throw ContractError("mix: datasets disagree on SARSA format");
    Rng rng(seed);
    const Dataset a = expert.shuffled(rng);
    const Dataset b = random.shuffled(rng);
    const auto [ne, nr] = mix_counts(expert.size(), random.size(), p);
    Dataset joined(expert.obs_dim(), expert.act_dim(), expert.sarsa(), mixed_label(p));
    for (std::size_t i = 0; i < ne; ++i) joined.push(a.at(i));
    for (std::size_t i = 0; i < nr; ++i) joined.push(b.at(i));
    return joined.shuffled(rng);
}

// Dataset file: "GIWRDATA", u32 version=1, u32 obs-dim, u32 act-dim, u64 count, u32 flags (bit0 sarsa),
// u16 grade length + UTF-8 grade, then per record s, a, r, s', u8 terminal, [a'] as little-endian f64.
inline constexpr char dataset_magic[] = "GIWRDATA";
inline constexpr std::uint32_t dataset_version = 1;

inline std::vector<char> encode(const Dataset& d) {
    io::ByteWriter w;
    w.put_bytes(std::string(dataset_magic, 8));
    w.put<std::uint32_t>(dataset_version);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(d.obs_dim()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(d.act_dim()));
    w.put<std::uint64_t>(d.size());
    w.put<std::uint32_t>(d.sarsa() ? 1u : 0u);
    w.put<std::uint16_t>(static_cast<std::uint16_t>(d.grade().size()));
    w.put_bytes(d.grade());
    for (std::size_t i = 0; i < d.size(); ++i) {
        const Transition t = d.at(i);
        for (double v : t.s) w.put(v);
        for (double v : t.a) w.put(v);
        w.put(t.r);
        for (double v : t.s2) w.put(v);
        w.put<std::uint8_t>(t.terminal ? 1 : 0);
        if (t.a2) {
            for (double v : *t.a2) w.put(v);
        }
    }
    return w.bytes();
}

inline Dataset decode(io::ByteReader r) {
    if (r.get_bytes(8, "magic") != std::string(dataset_magic, 8)) throw ParseError("dataset: bad magic", 0);
    const std::size_t version_at = r.offset();
    if (r.get<std::uint32_t>("version") != dataset_version) throw ParseError("dataset: unsupported version", version_at);
    const auto obs = r.get<std::uint32_t>("obs-dim");
    const auto act = r.get<std::uint32_t>("act-dim");
    const auto count = r.get<std::uint64_t>("count");
    const std::size_t flags_at = r.offset();
    const auto flags = r.get<std::uint32_t>("flags");
    if (flags & ~1u) throw ParseError("dataset: unknown flag bits", flags_at);
    const auto len = r.get<std::uint16_t>("grade length");
    Dataset d(obs, act, (flags & 1u) != 0, r.get_bytes(len, "grade"));
    auto read_vec = [&r](std::size_t n, const char* what) {
        std::vector<double> v(n);
        for (double& x : v) x = r.get<double>(what);
        return v;
    };
    const std::size_t record_bytes = 8 * (2 * obs + act + 1 + (d.sarsa() ? act : 0)) + 1;
    if (count > r.remaining() / std::max<std::size_t>(record_bytes, 1)) {
        throw ParseError("dataset: header count " + std::to_string(count) + " exceeds file size", r.offset());
    }
    for (std::uint64_t i = 0; i < count; ++i) {
        Transition t;
        t.s = read_vec(obs, "state");
        t.a = read_vec(act, "action");
        t.r = r.get<double>("reward");
        t.s2 = read_vec(obs, "next state");
        const std::size_t term_at = r.offset();
        const auto term = r.get<std::uint8_t>("terminal");
        if (term > 1) throw ParseError("dataset: terminal flag must be 0 or 1", term_at);
        t.terminal = term == 1;
        if (d.sarsa()) t.a2 = read_vec(act, "next action");
        d.push(t);
    }
    if (!r.done()) throw ParseError("dataset: trailing bytes after last record", r.offset());
    return d;
}

inline void save(const Dataset& d, const std::string& path) {
    io::ByteWriter w;
    for (char c : encode(d)) w.put(c);
    w.write_file(path);
}

inline Dataset load(const std::string& path) { return decode(io::ByteReader::from_file(path)); }

}  // namespace giwr::datagen
