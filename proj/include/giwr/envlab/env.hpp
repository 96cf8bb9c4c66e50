#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "giwr/action_space.hpp"
#include "giwr/oracle/tabular.hpp"
#include "giwr/rng.hpp"

namespace giwr::envlab {

struct EnvSpec {
    std::string name;
    std::size_t obs_dim = 0;
    std::size_t act_dim = 0;
    ActionBounds bounds;
    std::size_t horizon = 1;
    double gamma = 0.99;

    void validate() const {
        if (horizon < 1) throw ContractError("env spec: horizon must be >= 1");
        if (!(gamma >= 0.0 && gamma < 1.0)) throw ContractError("env spec: gamma must lie in [0,1)");
        if (bounds.dim() != act_dim) throw ContractError("env spec: bounds do not match act_dim");
        for (std::size_t i = 0; i < act_dim; ++i) {
            if (!std::isfinite(bounds.low[i]) || !std::isfinite(bounds.high[i]) || bounds.low[i] >= bounds.high[i]) {
                throw ContractError("env spec: action bounds must be finite and ordered");
            }
        }
    }
};

// terminal=1 ends the episode; its transition bootstraps with gamma = 0.
struct StepResult {
    std::vector<double> next_state;
    double reward = 0.0;
    bool terminal = false;
};

// Episodic environment. Holds the current state and step counter of one episode;
// the episode also ends (terminal) once `horizon` steps have been taken.
class Environment {
public:
    virtual ~Environment() = default;

    const EnvSpec& spec() const { return spec_; }

    std::vector<double> reset(std::uint64_t seed) {
        t_ = 0;
        state_ = initial_state(seed);
        return state_;
    }

    StepResult step(std::span<const double> action) {
        std::vector<double> a(action.begin(), action.end());
        if (a.size() != spec_.act_dim) throw ShapeError("env: action has wrong dimension");
        if (spec_.bounds.clip(a)) ++clipped_;
        StepResult res = transition(state_, a);
        ++t_;
        if (t_ >= spec_.horizon) res.terminal = true;
        state_ = res.next_state;
        return res;
    }

    void set_state(std::vector<double> state, std::size_t t = 0) {
        if (state.size() != spec_.obs_dim) throw ShapeError("env: state has wrong dimension");
        state_ = std::move(state);
        t_ = t;
    }

    const std::vector<double>& state() const { return state_; }
    std::size_t t() const { return t_; }
    std::size_t clipped_actions() const { return clipped_; }

    virtual std::vector<double> expert_action(std::span<const double> obs) const = 0;
    virtual std::unique_ptr<Environment> fresh() const = 0;

protected:
    explicit Environment(EnvSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

    virtual std::vector<double> initial_state(std::uint64_t seed) = 0;
    // One step of dynamics from `state`; only success terminations are reported here.
    virtual StepResult transition(const std::vector<double>& state, const std::vector<double>& action) = 0;

    EnvSpec spec_;

private:
    std::vector<double> state_;
    std::size_t t_ = 0;
    std::size_t clipped_ = 0;
};

inline StepResult step(Environment& env, std::vector<double> state, std::span<const double> action) {
    env.set_state(std::move(state), env.t());
    return env.step(action);
}

// Point mass on [-1,1]^dims with damped velocity; observation is (pos..., vel...).
//   vel' = 0.95 vel + 0.1 a,  pos' = clamp(pos + 0.1 vel', -1, 1)
//   reward = -|pos'| - 0.01 |a|^2, success when every |pos'_i|, |vel'_i| < 0.02.
// Hitting a wall zeroes that coordinate's velocity.
class PointMass : public Environment {
public:
    static constexpr double damping = 0.95;
    static constexpr double dt = 0.1;
    static constexpr double action_cost = 0.01;
    static constexpr double goal_tolerance = 0.02;
    static constexpr double kp = 2.0;
    static constexpr double kd = 1.0;

    explicit PointMass(std::size_t dims, std::size_t horizon = 200, double gamma = 0.99)
        : Environment(EnvSpec{dims == 1 ? "pointmass1d" : "pointmass" + std::to_string(dims) + "d", 2 * dims, dims,
                              ActionBounds::symmetric(dims, 1.0), horizon, gamma}),
          dims_(dims) {}

    std::vector<double> expert_action(std::span<const double> obs) const override {
        std::vector<double> a(dims_);
        for (std::size_t i = 0; i < dims_; ++i) a[i] = -kp * obs[i] - kd * obs[dims_ + i];
        spec_.bounds.clip(a);
        return a;
    }

    std::unique_ptr<Environment> fresh() const override { return std::make_unique<PointMass>(dims_, spec_.horizon, spec_.gamma); }

protected:
    // Each coordinate uniform on [-1,-0.1] U [0.1,1], velocity 0.
    std::vector<double> initial_state(std::uint64_t seed) override {
        Rng rng(seed);
        std::vector<double> s(2 * dims_, 0.0);
        for (std::size_t i = 0; i < dims_; ++i) {
            const double magnitude = uniform(rng, 0.1, 1.0);
            s[i] = uniform(rng, 0.0, 1.0) < 0.5 ? -magnitude : magnitude;
        }
        return s;
    }

    StepResult transition(const std::vector<double>& s, const std::vector<double>& a) override {
        StepResult res;
        res.next_state.resize(2 * dims_);
        double pos_sq = 0.0, act_sq = 0.0;
        bool at_goal = true;
        for (std::size_t i = 0; i < dims_; ++i) {
            double vel = damping * s[dims_ + i] + dt * a[i];
            double pos = s[i] + dt * vel;
            if (pos > 1.0 || pos < -1.0) {
                pos = std::clamp(pos, -1.0, 1.0);
                vel = 0.0;
            }
            res.next_state[i] = pos;
            res.next_state[dims_ + i] = vel;
            pos_sq += pos * pos;
            act_sq += a[i] * a[i];
            at_goal = at_goal && std::abs(pos) < goal_tolerance && std::abs(vel) < goal_tolerance;
        }
        res.reward = -std::sqrt(pos_sq) - action_cost * act_sq;
        res.terminal = at_goal;
        return res;
    }

private:
    std::size_t dims_;
};

// Five-state chain with three actions embedded as the scalars -1, 0, +1.
// Moving succeeds with probability 3/4 (otherwise the agent stays); walls clamp to [0, 4].
// r(s,a) = bonus[s] - 0.1 |a| with bonus = (0.2, 0, 0, 0, 1).
class DiscreteChain : public Environment {
public:
    static constexpr std::size_t n_states = 5;
    static constexpr std::size_t n_actions = 3;
    static constexpr double move_probability = 0.75;
    static constexpr double default_gamma = 0.9;

    explicit DiscreteChain(std::size_t horizon = 50)
        : Environment(EnvSpec{"discrete_chain", 1, 1, ActionBounds{{-1.0}, {1.0}, {-1.0, 0.0, 1.0}}, horizon,
                              default_gamma}) {}

    static oracle::TabularMdp mdp() {
        static const double bonus[n_states] = {0.2, 0.0, 0.0, 0.0, 1.0};
        oracle::TabularMdp m{n_states, n_actions, std::vector<double>(n_states * n_actions * n_states, 0.0),
                             std::vector<double>(n_states * n_actions, 0.0)};
        for (std::size_t s = 0; s < n_states; ++s) {
            for (std::size_t a = 0; a < n_actions; ++a) {
                const int move = static_cast<int>(a) - 1;
                const auto target = static_cast<std::size_t>(std::clamp(static_cast<int>(s) + move, 0, 4));
                m.transition[(s * n_actions + a) * n_states + target] += move_probability;
                m.transition[(s * n_actions + a) * n_states + s] += 1.0 - move_probability;
                m.reward[s * n_actions + a] = bonus[s] - 0.1 * std::abs(move);
            }
        }
        return m;
    }

    static double embed(std::size_t action_index) { return static_cast<double>(action_index) - 1.0; }
    static std::size_t action_index(double a) { return static_cast<std::size_t>(std::clamp(std::lround(a) + 1, 0L, 2L)); }
    static std::size_t state_index(double obs) {
        return static_cast<std::size_t>(std::clamp(std::lround(obs), 0L, static_cast<long>(n_states) - 1));
    }

    // argmax_a Q*(s, a) for every state.
    static const std::vector<std::size_t>& optimal_actions() {
        static const std::vector<std::size_t> table = [] {
            const auto q = oracle::value_iteration(mdp(), default_gamma);
            std::vector<std::size_t> out(n_states);
            for (std::size_t s = 0; s < n_states; ++s) out[s] = q.greedy(s);
            return out;
        }();
        return table;
    }

    std::vector<double> expert_action(std::span<const double> obs) const override {
        return {embed(optimal_actions()[state_index(obs[0])])};
    }

    std::unique_ptr<Environment> fresh() const override { return std::make_unique<DiscreteChain>(spec_.horizon); }

protected:
    std::vector<double> initial_state(std::uint64_t seed) override {
        rng_.seed(seed);
        return {0.0};
    }

    StepResult transition(const std::vector<double>& s, const std::vector<double>& a) override {
        static const oracle::TabularMdp table = mdp();
        const std::size_t si = state_index(s[0]), ai = action_index(a[0]);
        const double u = uniform(rng_, 0.0, 1.0);
        double acc = 0.0;
        std::size_t next = n_states - 1;
        for (std::size_t n = 0; n < n_states; ++n) {
            acc += table.p(si, ai, n);
            if (u < acc) {
                next = n;
                break;
            }
        }
        return StepResult{{static_cast<double>(next)}, table.r(si, ai), false};
    }

private:
    Rng rng_;
};

inline std::unique_ptr<Environment> make_env(const std::string& kind) {
    if (kind == "pointmass1d") return std::make_unique<PointMass>(1);
    if (kind == "pointmass2d") return std::make_unique<PointMass>(2);
    if (kind == "discrete_chain") return std::make_unique<DiscreteChain>();
    throw ConfigError("unknown env '" + kind + "' (valid: pointmass1d, pointmass2d, discrete_chain)");
}

// Maps an observation to an action; `deterministic` selects evaluation mode.
using ActionSource = std::function<std::vector<double>(std::span<const double> obs, bool deterministic)>;

inline std::vector<double> expert_controller(const Environment& env, std::span<const double> obs) {
    return env.expert_action(obs);
}

// Undiscounted return of one episode started from reset(seed).
inline double rollout(Environment& env, const ActionSource& policy, std::uint64_t seed, bool deterministic) {
    std::vector<double> obs = env.reset(seed);
    double ret = 0.0;
    for (;;) {
        const StepResult res = env.step(policy(obs, deterministic));
        ret += res.reward;
        if (res.terminal) break;
        obs = res.next_state;
    }
    return ret;
}

}  // namespace giwr::envlab
