#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "giwr/errors.hpp"
#include "giwr/objectives/objectives.hpp"
#include "giwr/proposals/proposals.hpp"
#include "giwr/rng.hpp"

namespace giwr::trainer {

enum class Algorithm { base, giwr, rtg, bc };

inline std::string to_string(Algorithm a) {
    switch (a) {
        case Algorithm::base: return "base";
        case Algorithm::giwr: return "giwr";
        case Algorithm::rtg: return "rtg";
        case Algorithm::bc: return "bc";
    }
    return "?";
}

inline Algorithm parse_algorithm(const std::string& s) {
    if (s == "base") return Algorithm::base;
    if (s == "giwr") return Algorithm::giwr;
    if (s == "rtg") return Algorithm::rtg;
    if (s == "bc") return Algorithm::bc;
    throw ConfigError("unknown algorithm '" + s + "' (valid: base, giwr, rtg, bc)");
}

// Declarative description of one experiment. Serialised as plain key=value lines.
struct ExperimentConfig {
    std::string env = "pointmass1d";

    // Data: either a file, or a generation recipe (grade, n, seed, sarsa, p for mixed).
    std::string dataset;
    std::string grade = "expert";
    std::size_t data_n = 20000;
    std::uint64_t data_seed = 0;
    bool sarsa = false;
    double p = 1.0;

    Algorithm algorithm = Algorithm::base;

    proposals::Kind critic_proposal = proposals::Kind::theta;
    bool optimal_target = false;
    std::optional<double> alpha;
    std::optional<double> cql_alpha;
    std::size_t cql_uniform_count = 10;

    std::vector<proposals::Kind> actor_proposals{proposals::Kind::beta_sarsa};
    std::vector<double> kappas{1.0};
    double lambda_kl = 1.0;
    double weight_cap = 20.0;
    std::size_t n_base = 8;

    std::size_t m = 10;
    double delta = 0.6;
    double tau_rnd = 0.06;
    proposals::Orientation orientation = proposals::Orientation::novel_high;

    std::size_t iterations = 50000;
    double wall_clock_secs = 43200.0;
    std::size_t eval_every = 5000;
    std::size_t eval_episodes = 10;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3};
    std::size_t batch_size = 256;
    std::vector<std::size_t> hidden{64, 64};
    double lr = 3e-4;
    double polyak = 0.005;
    double phi = 0.05;
    std::size_t m_gap = 10;

    proposals::ProposalSpec proposal(proposals::Kind k) const { return {k, m, delta, tau_rnd, orientation}; }

    objectives::CriticLossSpec critic_spec(double gamma) const {
        objectives::CriticLossSpec c;
        c.proposal = proposal(critic_proposal);
        c.optimal_target = optimal_target;
        c.al_alpha = alpha;
        c.cql_alpha = cql_alpha;
        c.cql_uniform_count = cql_uniform_count;
        c.n_base = n_base;
        c.gamma = gamma;
        return c;
    }

    objectives::ActorLossSpec actor_spec() const {
        objectives::ActorLossSpec a;
        a.family.clear();
        for (proposals::Kind k : actor_proposals) a.family.push_back(proposal(k));
        a.coefficients = kappas;
        a.lambda_kl = lambda_kl;
        a.cap = weight_cap;
        a.n_base = n_base;
        return a;
    }

    void validate() const {
        if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
        if (eval_every > iterations && iterations > 0) throw ConfigError("eval_every must not exceed iterations");
        if (seeds.empty()) throw ConfigError("seeds must be non-empty");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (hidden.empty()) throw ConfigError("hidden must list at least one width");
        if (!(lr > 0.0)) throw ConfigError("lr must be positive");
        if (!(polyak >= 0.0 && polyak <= 1.0)) throw ConfigError("polyak must lie in [0,1]");
        if (!(wall_clock_secs > 0.0)) throw ConfigError("wall_clock_secs must be positive");
        if (eval_episodes < 1) throw ConfigError("eval_episodes must be >= 1");
        if (m_gap < 1) throw ConfigError("m_gap must be >= 1");
        if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("p must lie in [0,1]");
        if (algorithm == Algorithm::rtg && !(cql_alpha && *cql_alpha > 0.0)) {
            throw ConfigError("algorithm rtg needs cql_alpha > 0");
        }
        critic_spec(0.5).validate();
        actor_spec().validate();
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep = ',') {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline double to_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError("key '" + key + "': not a number: " + v);
    return out;
}

inline std::uint64_t to_uint(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw ConfigError("key '" + key + "': not a non-negative integer: " + v);
    }
    return out;
}

inline bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("key '" + key + "': expected true/false, got " + v);
}

inline std::optional<double> to_optional(const std::string& key, const std::string& v) {
    if (v == "none" || v.empty()) return std::nullopt;
    return to_double(key, v);
}

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <class T, class F>
std::string join(const std::vector<T>& xs, F f) {
    std::string out;
    for (const auto& x : xs) out += (out.empty() ? "" : ",") + f(x);
    return out;
}

}  // namespace detail

// Named bundles of scale settings, applied before any explicit key.
inline void apply_preset(ExperimentConfig& c, const std::string& preset) {
    if (preset == "paper") {
        c.iterations = 500000;
        c.hidden = {256, 256};
        c.batch_size = 256;
        c.eval_every = 5000;
    } else if (preset == "desk") {
        c.iterations = 50000;
        c.hidden = {64, 64};
        c.batch_size = 256;
        c.eval_every = 5000;
    } else if (preset == "ci") {
        c.iterations = 50000;
        c.hidden = {32, 32};
        c.batch_size = 32;
        c.eval_every = 5000;
    } else if (preset == "accept") {
        // Sized so one seed trains in a few minutes on a single core.
        c.iterations = 50000;
        c.hidden = {64, 64};
        c.batch_size = 64;
        c.eval_every = 5000;
        c.eval_episodes = 20;
    } else {
        throw ConfigError("unknown preset '" + preset + "' (valid: paper, desk, ci, accept)");
    }
}

inline const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys{
        "env",          "dataset",         "grade",           "data_n",        "data_seed",  "sarsa",
        "p",            "algorithm",       "critic_proposal", "optimal_target", "alpha",     "cql_alpha",
        "cql_uniform_count", "actor_proposals", "kappas",     "kappa",         "lambda_kl",  "weight_cap",
        "n_base",       "m",               "delta",           "tau_rnd",       "orientation", "iterations",
        "wall_clock_secs", "eval_every",   "eval_episodes",   "seeds",         "batch_size", "hidden",
        "lr",           "polyak",          "phi",             "m_gap",         "preset"};
    return keys;
}

// Sets one key. `kappa` is shorthand for the coefficient of every proposal after the first.
inline void set_key(ExperimentConfig& c, const std::string& key, const std::string& raw) {
    using namespace detail;
    const std::string v = trim(raw);
    if (key == "env") c.env = v;
    else if (key == "dataset") c.dataset = v;
    else if (key == "grade") c.grade = v;
    else if (key == "data_n") c.data_n = to_uint(key, v);
    else if (key == "data_seed") c.data_seed = to_uint(key, v);
    else if (key == "sarsa") c.sarsa = to_bool(key, v);
    else if (key == "p") c.p = to_double(key, v);
    else if (key == "algorithm") c.algorithm = parse_algorithm(v);
    else if (key == "critic_proposal") c.critic_proposal = proposals::parse_kind(v);
    else if (key == "optimal_target") c.optimal_target = to_bool(key, v);
    else if (key == "alpha") c.alpha = to_optional(key, v);
    else if (key == "cql_alpha") c.cql_alpha = to_optional(key, v);
    else if (key == "cql_uniform_count") c.cql_uniform_count = to_uint(key, v);
    else if (key == "actor_proposals") {
        c.actor_proposals.clear();
        for (const auto& k : split(v)) c.actor_proposals.push_back(proposals::parse_kind(k));
        c.kappas.resize(c.actor_proposals.size(), 1.0);
    } else if (key == "kappas") {
        c.kappas.clear();
        for (const auto& k : split(v)) c.kappas.push_back(to_double(key, k));
    } else if (key == "kappa") {
        const double k = to_double(key, v);
        c.kappas.resize(c.actor_proposals.size(), 1.0);
        for (std::size_t i = 1; i < c.kappas.size(); ++i) c.kappas[i] = k;
    } else if (key == "lambda_kl") c.lambda_kl = v == "inf" ? std::numeric_limits<double>::infinity() : to_double(key, v);
    else if (key == "weight_cap") c.weight_cap = to_double(key, v);
    else if (key == "n_base") c.n_base = to_uint(key, v);
    else if (key == "m") c.m = to_uint(key, v);
    else if (key == "delta") c.delta = to_double(key, v);
    else if (key == "tau_rnd") c.tau_rnd = to_double(key, v);
    else if (key == "orientation") {
        if (v == "novel_high") c.orientation = proposals::Orientation::novel_high;
        else if (v == "novel_low") c.orientation = proposals::Orientation::novel_low;
        else throw ConfigError("key 'orientation': expected novel_high or novel_low, got " + v);
    } else if (key == "iterations") c.iterations = to_uint(key, v);
    else if (key == "wall_clock_secs") c.wall_clock_secs = to_double(key, v);
    else if (key == "eval_every") c.eval_every = to_uint(key, v);
    else if (key == "eval_episodes") c.eval_episodes = to_uint(key, v);
    else if (key == "seeds") {
        c.seeds.clear();
        for (const auto& s : split(v)) c.seeds.push_back(to_uint(key, s));
    } else if (key == "batch_size") c.batch_size = to_uint(key, v);
    else if (key == "hidden") {
        c.hidden.clear();
        for (const auto& h : split(v)) c.hidden.push_back(to_uint(key, h));
    } else if (key == "lr") c.lr = to_double(key, v);
    else if (key == "polyak") c.polyak = to_double(key, v);
    else if (key == "phi") c.phi = to_double(key, v);
    else if (key == "m_gap") c.m_gap = to_uint(key, v);
    else if (key == "preset") apply_preset(c, v);
    else throw ConfigError("unknown config key '" + key + "'");
}

// key=value per line; '#' starts a comment. A preset line is applied first wherever it appears.
inline ExperimentConfig parse_config(const std::string& text, ExperimentConfig c = {}) {
    std::vector<std::pair<std::string, std::string>> entries;
    std::stringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
        entries.emplace_back(detail::trim(line.substr(0, eq)), line.substr(eq + 1));
    }
    for (const auto& [k, v] : entries) {
        if (k == "preset") set_key(c, k, v);
    }
    for (const auto& [k, v] : entries) {
        if (k != "preset") set_key(c, k, v);
    }
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

// Canonical serialisation; parse_config(to_text(c)) reproduces c.
inline std::string to_text(const ExperimentConfig& c) {
    using detail::fmt;
    auto opt = [](const std::optional<double>& x) { return x ? fmt(*x) : std::string("none"); };
    auto kind = [](proposals::Kind k) { return std::string(proposals::name(k)); };
    auto num = [](auto x) { return std::to_string(x); };
    std::string s;
    auto line = [&s](const std::string& k, const std::string& v) { s += k + "=" + v + "\n"; };
    line("env", c.env);
    line("dataset", c.dataset);
    line("grade", c.grade);
    line("data_n", num(c.data_n));
    line("data_seed", num(c.data_seed));
    line("sarsa", c.sarsa ? "true" : "false");
    line("p", fmt(c.p));
    line("algorithm", to_string(c.algorithm));
    line("critic_proposal", kind(c.critic_proposal));
    line("optimal_target", c.optimal_target ? "true" : "false");
    line("alpha", opt(c.alpha));
    line("cql_alpha", opt(c.cql_alpha));
    line("cql_uniform_count", num(c.cql_uniform_count));
    line("actor_proposals", detail::join(c.actor_proposals, kind));
    line("kappas", detail::join(c.kappas, fmt));
    line("lambda_kl", std::isinf(c.lambda_kl) ? "inf" : fmt(c.lambda_kl));
    line("weight_cap", fmt(c.weight_cap));
    line("n_base", num(c.n_base));
    line("m", num(c.m));
    line("delta", fmt(c.delta));
    line("tau_rnd", fmt(c.tau_rnd));
    line("orientation", c.orientation == proposals::Orientation::novel_high ? "novel_high" : "novel_low");
    line("iterations", num(c.iterations));
    line("wall_clock_secs", fmt(c.wall_clock_secs));
    line("eval_every", num(c.eval_every));
    line("eval_episodes", num(c.eval_episodes));
    line("seeds", detail::join(c.seeds, num));
    line("batch_size", num(c.batch_size));
    line("hidden", detail::join(c.hidden, num));
    line("lr", fmt(c.lr));
    line("polyak", fmt(c.polyak));
    line("phi", fmt(c.phi));
    line("m_gap", num(c.m_gap));
    return s;
}

inline std::uint64_t config_hash(const ExperimentConfig& c) { return fnv1a(to_text(c)); }

}  // namespace giwr::trainer
