#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <optional>
#include <vector>

#include "cheshire/control.hpp"
#include "cheshire/intensity.hpp"
#include "cheshire/model.hpp"
#include "cheshire/poisson.hpp"
#include "cheshire/rng.hpp"

namespace cheshire {

struct SimulationResult {
    EventLog log;
    bool capped = false;
    std::size_t organic_count = 0;
    std::size_t incentivized_count = 0;
    double runtime_seconds = 0.0;
    ClampRecord control_record; // empty unless the run used a feedback control
};

// A marked point process of incentivized actions, driven by the same event
// stream it perturbs. The engine commits events one at a time and asks the
// process for its next scheduled action; the process may keep a previously
// sampled action when the superposition only gained components (organic
// event), and must resample after its own action is consumed.
class ControlProcess {
public:
    struct Arrival {
        double time;
        int user;
    };

    virtual ~ControlProcess() = default;
    virtual void reset(double t0, double tf, Rng& rng) = 0;
    virtual std::optional<Arrival> next_action() const = 0;
    virtual void on_event(int user, double time, bool own_action, Rng& rng) = 0;
    virtual ClampRecord record() const { return ClampRecord{}; }
};

class NullControl final : public ControlProcess {
public:
    void reset(double, double, Rng&) override {}
    std::optional<Arrival> next_action() const override { return std::nullopt; }
    void on_event(int, double, bool, Rng&) override {}
};

// Time-homogeneous incentive rates (the PRK / DEG baselines). Homogeneous
// Poisson arrivals are memoryless, so a pending sample stays valid across
// other events and only needs redrawing once consumed.
class ConstantControl final : public ControlProcess {
public:
    explicit ConstantControl(VectorXd rates) : rates_(std::move(rates)) {
        if ((rates_.array() < 0.0).any())
            throw ConfigError("ConstantControl: rates must be nonnegative");
        total_ = rates_.sum();
    }

    void reset(double t0, double tf, Rng& rng) override {
        tf_ = tf;
        pending_ = draw(t0, rng);
    }

    std::optional<Arrival> next_action() const override { return pending_; }

    void on_event(int, double time, bool own_action, Rng& rng) override {
        if (own_action) pending_ = draw(time, rng);
    }

private:
    std::optional<Arrival> draw(double from, Rng& rng) {
        if (total_ <= 0.0) return std::nullopt;
        double t = from + rng.exponential(total_);
        if (t >= tf_) return std::nullopt;
        int user = rng.categorical(std::span<const double>(rates_.data(),
                                                           static_cast<std::size_t>(rates_.size())),
                                   total_);
        return Arrival{t, user};
    }

    VectorXd rates_;
    double total_ = 0.0;
    double tf_ = 0.0;
    std::optional<Arrival> pending_;
};

// Ogata-style exact simulation of the (possibly controlled) Hawkes network.
// The organic intensity is maintained by the decay/jump recursion; organic
// candidates are thinned against the piecewise bound sum_i max(lambda_i(t),
// mu_i), which dominates every coordinate whether it is relaxing down toward
// mu or was started below it. Organic draws and control draws come from two
// separate streams so that runs with different controls share one organic
// randomness source.
class HawkesSimulator {
public:
    HawkesSimulator(const NetworkModel& model, double t0, double tf, Rng organic_rng,
                    Rng control_rng, ControlProcess& control, std::size_t event_cap,
                    const VectorXd* lambda0 = nullptr)
        : model_(model),
          t0_(t0),
          tf_(tf),
          cap_(event_cap),
          organic_rng_(organic_rng),
          control_rng_(control_rng),
          control_(&control) {
        if (!(tf > t0)) throw ConfigError("simulation horizon: tf must exceed t0");
        if (event_cap == 0) throw ConfigError("simulation event cap must be positive");
        VectorXd init = lambda0 ? *lambda0 : model.mu0();
        if (init.size() != model.n()) throw DataError("lambda0 length != n");
        if ((init.array() < 0.0).any()) throw DataError("lambda0 must be nonnegative");
        state_ = IntensityVector{init, t0};
        log_.t0 = t0;
        log_.tf = tf;
        log_.n = model.n();
    }

    // Runs to tf (or the cap). Returns false when the cap cut the run short.
    bool run() {
        control_->reset(t0_, tf_, control_rng_);
        auto organic = sample_next_organic();
        while (true) {
            auto action = control_->next_action();
            bool take_action =
                action.has_value() && (!organic.has_value() || action->time < organic->time);
            if (!take_action && !organic.has_value()) break;
            double time = take_action ? action->time : organic->time;
            int user = take_action ? action->user : organic->user;
            if (time >= tf_) break;
            commit(user, time, take_action);
            if (log_.events.size() >= cap_) return false;
            organic = sample_next_organic();
        }
        return true;
    }

    const EventLog& log() const { return log_; }
    const IntensityVector& state() const { return state_; }

    // Single-step drive, for callers that inspect the state mid-run.
    // Returns false once no event remains before tf.
    bool step() {
        if (!started_) {
            control_->reset(t0_, tf_, control_rng_);
            pending_organic_ = sample_next_organic();
            started_ = true;
        }
        auto action = control_->next_action();
        bool take_action = action.has_value() &&
                           (!pending_organic_.has_value() || action->time < pending_organic_->time);
        if (!take_action && !pending_organic_.has_value()) return false;
        double time = take_action ? action->time : pending_organic_->time;
        int user = take_action ? action->user : pending_organic_->user;
        if (time >= tf_) return false;
        commit(user, time, take_action);
        pending_organic_ = sample_next_organic();
        return true;
    }

private:
    void commit(int user, double time, bool is_action) {
        state_ = decay_intensity(model_, state_, time);
        model_.add_column_to(user, state_.lambda);
        log_.events.push_back(Event{time, user, is_action ? EventKind::Incentivized : EventKind::Organic});
        control_->on_event(user, time, is_action, control_rng_);
    }

    std::optional<ControlProcess::Arrival> sample_next_organic() {
        double t = state_.as_of;
        VectorXd lam = state_.lambda;
        const VectorXd& mu = model_.mu0();
        while (true) {
            double cap = lam.cwiseMax(mu).sum();
            if (!(cap > 0.0)) return std::nullopt;
            double next = t + organic_rng_.exponential(cap);
            if (next >= tf_) return std::nullopt;
            double scale = std::exp(-model_.omega() * (next - t));
            lam = mu + scale * (lam - mu);
            t = next;
            double total = lam.sum();
            if (organic_rng_.uniform() * cap < total) {
                int user = organic_rng_.categorical(
                    std::span<const double>(lam.data(), static_cast<std::size_t>(lam.size())),
                    total);
                return ControlProcess::Arrival{t, user};
            }
        }
    }

    NetworkModel model_;
    double t0_, tf_;
    std::size_t cap_;
    Rng organic_rng_, control_rng_;
    ControlProcess* control_;
    IntensityVector state_;
    EventLog log_;
    std::optional<ControlProcess::Arrival> pending_organic_;
    bool started_ = false;
};

namespace detail {

inline SimulationResult finish(HawkesSimulator& sim, bool completed,
                               std::chrono::steady_clock::time_point start,
                               ClampRecord record = ClampRecord{}) {
    SimulationResult result;
    result.log = sim.log();
    result.capped = !completed;
    result.organic_count = result.log.count(EventKind::Organic);
    result.incentivized_count = result.log.count(EventKind::Incentivized);
    result.runtime_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.control_record = record;
    return result;
}

} // namespace detail

inline SimulationResult simulate_uncontrolled(const NetworkModel& model, double t0, double tf,
                                              std::uint64_t seed, std::size_t event_cap = 1000000,
                                              const VectorXd* lambda0 = nullptr) {
    auto start = std::chrono::steady_clock::now();
    NullControl none;
    HawkesSimulator sim(model, t0, tf, Rng(derive_seed(seed, 0)), Rng(derive_seed(seed, 1)), none,
                        event_cap, lambda0);
    bool completed = sim.run();
    return detail::finish(sim, completed, start);
}

inline SimulationResult simulate_constant_control(const NetworkModel& model, const VectorXd& rates,
                                                  double t0, double tf, std::uint64_t seed,
                                                  std::size_t event_cap = 1000000,
                                                  const VectorXd* lambda0 = nullptr) {
    auto start = std::chrono::steady_clock::now();
    ConstantControl control(rates);
    HawkesSimulator sim(model, t0, tf, Rng(derive_seed(seed, 0)), Rng(derive_seed(seed, 1)),
                        control, event_cap, lambda0);
    bool completed = sim.run();
    return detail::finish(sim, completed, start);
}

// Counting paths N(t) on a fixed grid: per-user rows and the aggregate,
// counting events with time <= grid point (optionally one kind only).
struct CountingPath {
    std::vector<double> grid;
    MatrixXd per_user;  // n x grid.size()
    VectorXd aggregate; // grid.size()
};

inline CountingPath counting_path(const EventLog& log, const std::vector<double>& grid,
                                  std::optional<EventKind> kind = std::nullopt) {
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (!(grid[i] >= grid[i - 1])) throw ConfigError("counting grid must be nondecreasing");
    CountingPath path;
    path.grid = grid;
    path.per_user = MatrixXd::Zero(log.n, static_cast<int>(grid.size()));
    path.aggregate = VectorXd::Zero(static_cast<int>(grid.size()));
    std::size_t e = 0;
    VectorXd running = VectorXd::Zero(log.n);
    double running_total = 0.0;
    for (std::size_t gi = 0; gi < grid.size(); ++gi) {
        while (e < log.events.size() && log.events[e].time <= grid[gi]) {
            if (!kind || log.events[e].kind == *kind) {
                running[log.events[e].user] += 1.0;
                running_total += 1.0;
            }
            ++e;
        }
        path.per_user.col(static_cast<int>(gi)) = running;
        path.aggregate[static_cast<int>(gi)] = running_total;
    }
    return path;
}

inline std::vector<double> uniform_grid(double t0, double tf, int points) {
    if (points < 2) throw ConfigError("grid needs at least two points");
    std::vector<double> grid(static_cast<std::size_t>(points));
    for (int i = 0; i < points; ++i)
        grid[static_cast<std::size_t>(i)] = t0 + (tf - t0) * i / (points - 1);
    return grid;
}

} // namespace cheshire
