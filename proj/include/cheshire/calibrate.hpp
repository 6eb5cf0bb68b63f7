#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "cheshire/cheshire.hpp"
#include "cheshire/control.hpp"

namespace cheshire {

struct CalibrationOptions {
    int runs = 5;            // Monte Carlo runs per probe
    double tol = 0.05;       // relative tolerance on the achieved budget
    std::uint64_t seed = 0;  // probe runs reuse the same seeds (common random numbers)
    std::size_t event_cap = 500000;
    double multiplier_lo = 1e-6;
    double multiplier_hi = 1e6;
    int max_probes = 60;
};

struct CalibrationProbe {
    double multiplier;
    double mean_incentivized;
    bool solver_failed; // Riccati blow-up at this cost level; treated as unbounded budget
};

struct CalibrationResult {
    ControlConfig config; // template with S scaled by `multiplier`
    double multiplier = 1.0;
    double achieved = 0.0; // Monte Carlo budget estimate at the returned multiplier
    std::vector<CalibrationProbe> trace;
};

// Scales the control-cost diagonal S by a scalar multiplier until the mean
// number of incentivized events over `runs` simulations matches
// `target_budget` within relative `tol`. The budget is monotone decreasing in
// the multiplier (costlier control means less of it), so a geometric
// bisection on [multiplier_lo, multiplier_hi] brackets the target. All probes
// reuse the same run seeds so the probe curve is not re-randomized between
// iterations. A Riccati finite-time blow-up at a small multiplier counts as
// an unbounded budget (the overshoot side of the bracket). Throws SolverError
// when the target is outside what the bracket can reach, with both endpoint
// estimates in the message.
inline CalibrationResult calibrate_budget(const NetworkModel& model, const ControlConfig& base,
                                          double target_budget,
                                          const CalibrationOptions& options = {}) {
    base.validate(model.n());
    if (target_budget < 0.0) throw ConfigError("calibrate_budget: target must be nonnegative");
    if (options.runs < 1) throw ConfigError("calibrate_budget: runs must be >= 1");
    if (!(options.tol > 0.0)) throw ConfigError("calibrate_budget: tol must be > 0");

    CalibrationResult result;

    auto probe = [&](double multiplier) -> double {
        ControlConfig scaled = base.with_s_scaled(multiplier);
        double mean = 0.0;
        bool failed = false;
        try {
            FeedbackPolicy policy = FeedbackPolicy::solve(model, scaled);
            double total = 0.0;
            for (int i = 0; i < options.runs; ++i) {
                SimulationResult run =
                    simulate_controlled(model, policy, base.t0, base.tf,
                                        derive_seed(options.seed, 0x9e3779b9u, i),
                                        options.event_cap);
                total += static_cast<double>(run.incentivized_count);
            }
            mean = total / options.runs;
        } catch (const SolverError&) {
            failed = true;
            mean = std::numeric_limits<double>::infinity();
        }
        result.trace.push_back(CalibrationProbe{multiplier, mean, failed});
        return mean;
    };

    auto finish = [&](double multiplier, double achieved) {
        result.config = base.with_s_scaled(multiplier);
        result.multiplier = multiplier;
        result.achieved = achieved;
        return result;
    };

    if (target_budget == 0.0) {
        double at_one = probe(1.0);
        if (at_one == 0.0) return finish(1.0, 0.0);
        throw ConfigError("calibrate_budget: target 0 needs a policy that never acts "
                          "(zero Q and F); the template yields " +
                          std::to_string(at_one) + " incentivized events");
    }

    auto within = [&](double estimate) {
        return std::abs(estimate - target_budget) <= options.tol * target_budget;
    };

    double lo = options.multiplier_lo, hi = options.multiplier_hi;
    double est_lo = probe(lo);
    if (within(est_lo)) return finish(lo, est_lo);
    if (est_lo < target_budget)
        throw SolverError("calibrate_budget: target " + std::to_string(target_budget) +
                          " is out of reach; cheapest control (multiplier " + std::to_string(lo) +
                          ") yields only " + std::to_string(est_lo) + " incentivized events");
    double est_hi = probe(hi);
    if (within(est_hi)) return finish(hi, est_hi);
    if (est_hi > target_budget)
        throw SolverError("calibrate_budget: target " + std::to_string(target_budget) +
                          " is below reach; costliest control (multiplier " + std::to_string(hi) +
                          ") still yields " + std::to_string(est_hi) + " incentivized events");

    for (int iter = static_cast<int>(result.trace.size()); iter < options.max_probes; ++iter) {
        double mid = std::sqrt(lo * hi);
        double est = probe(mid);
        if (within(est)) return finish(mid, est);
        if (est > target_budget)
            lo = mid;
        else
            hi = mid;
        if (hi / lo < 1.0 + 1e-12) break;
    }

    double best_mult = result.trace.back().multiplier;
    double best_gap = std::numeric_limits<double>::infinity();
    double best_est = 0.0;
    for (const CalibrationProbe& p : result.trace) {
        double gap = std::abs(p.mean_incentivized - target_budget);
        if (std::isfinite(p.mean_incentivized) && gap < best_gap) {
            best_gap = gap;
            best_mult = p.multiplier;
            best_est = p.mean_incentivized;
        }
    }
    throw SolverError("calibrate_budget: no multiplier within tolerance after " +
                      std::to_string(result.trace.size()) + " probes; closest was " +
                      std::to_string(best_est) + " events at multiplier " +
                      std::to_string(best_mult) + " (target " + std::to_string(target_budget) +
                      ", tol " + std::to_string(options.tol) + ")");
}

} // namespace cheshire
