#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "cheshire/control.hpp"
#include "cheshire/model.hpp"

namespace cheshire {

namespace detail {

// I_n(c, L) = integral of tau^n e^(-c tau) over [0, L] for n in {0, 1, 2}.
// The closed forms cancel catastrophically for small c L; below the crossover
// a truncated power series carries full precision.
inline double exp_moment(int n, double c, double L) {
    if (L <= 0.0) return 0.0;
    double x = c * L;
    if (x < 0.1) {
        // L^{n+1} sum_k (-x)^k / (k! (k + n + 1))
        double sum = 0.0, term = 1.0;
        for (int k = 0; k < 24; ++k) {
            double add = term / (k + n + 1);
            sum += add;
            if (std::abs(add) < 1e-18 * std::abs(sum)) break;
            term *= -x / (k + 1);
        }
        return std::pow(L, n + 1) * sum;
    }
    double e = std::exp(-x);
    switch (n) {
        case 0: return (1.0 - e) / c;
        case 1: return (1.0 - e * (1.0 + x)) / (c * c);
        default: return (2.0 - e * (2.0 + 2.0 * x + x * x)) / (c * c * c);
    }
}

} // namespace detail

struct ObjectiveEstimate {
    double mean = 0.0;
    std::vector<double> per_run;
};

// Realized control cost of Eq-style quadratic losses along recorded
// trajectories, integrated in closed form:
//   J = integral of [-1/2 lambda' Q lambda + 1/2 u' S u] dt - 1/2 lambda(tf)' F lambda(tf)
// lambda(t) is reconstructed exactly from the log (exponential relaxation
// between events, influence-column jump at each event). u(t) is the policy's
// feedback law on that lambda, pre-clamp (the law stays nonnegative up to
// floating-point noise, so the clamp never carries mass); pass no policy for
// uncontrolled logs (u = 0). Between events lambda - mu0 decays by e^{-omega
// tau} and the policy terms are piecewise linear in t, so each integrand
// piece is a polynomial-times-exponential with an exact antiderivative; the
// integral is summed segment by segment with splits at event times and policy
// grid lines. Lower J means better (it is the minimized objective).
inline ObjectiveEstimate objective_estimate(const std::vector<EventLog>& logs,
                                            const NetworkModel& model,
                                            const ControlConfig& config,
                                            const FeedbackPolicy* policy = nullptr,
                                            const VectorXd* lambda0 = nullptr) {
    config.validate(model.n());
    if (policy && policy->model().n() != model.n())
        throw ConfigError("objective_estimate: policy size does not match model");
    if (policy) {
        const double slack = 1e-9 * (1.0 + std::abs(policy->tf()));
        if (config.t0 < policy->t0() - slack || config.tf > policy->tf() + slack)
            throw ConfigError("objective_estimate: config window outside policy horizon");
    }
    const double omega = model.omega();
    const VectorXd& mu = model.mu0();
    const double qmm = (config.q.array() * mu.array() * mu.array()).sum();

    auto weighted = [&](const VectorXd& w, const VectorXd& x, const VectorXd& y) {
        return (w.array() * x.array() * y.array()).sum();
    };

    ObjectiveEstimate out;
    out.per_run.reserve(logs.size());
    for (const EventLog& log : logs) {
        if (log.n != model.n()) throw DataError("objective_estimate: log n does not match model");
        VectorXd lambda = lambda0 ? *lambda0 : mu;
        double cost = 0.0;
        double t_cur = config.t0;

        auto integrate_piece = [&](double a, double b, const VectorXd& delta_a, int k, double w) {
            // one piece inside policy cell k, entered at offset w; delta_a =
            // lambda(a) - mu0
            double L = b - a;
            if (L <= 0.0) return;
            double i0w = detail::exp_moment(0, omega, L);
            double i02w = detail::exp_moment(0, 2.0 * omega, L);
            cost -= 0.5 * (qmm * L + 2.0 * weighted(config.q, mu, delta_a) * i0w +
                           weighted(config.q, delta_a, delta_a) * i02w);
            if (!policy) return;
            const VectorXd& base0 = policy->base_at_grid(k);
            const VectorXd& base1 = policy->base_at_grid(k + 1);
            VectorXd b0 = (1.0 - w) * base0 + w * base1;
            VectorXd b1 = (base1 - base0) / policy->dt();
            VectorXd p = policy->gain_at_grid(k) * delta_a;
            VectorXd q = policy->gain_at_grid(k + 1) * delta_a;
            VectorXd v0 = -((1.0 - w) * p + w * q);
            VectorXd v1 = -(q - p) / policy->dt();
            double i1w = detail::exp_moment(1, omega, L);
            double i2w = detail::exp_moment(2, omega, L);
            double i12w = detail::exp_moment(1, 2.0 * omega, L);
            double i22w = detail::exp_moment(2, 2.0 * omega, L);
            double poly = weighted(config.s, b0, b0) * L +
                          2.0 * weighted(config.s, b0, b1) * (0.5 * L * L) +
                          weighted(config.s, b1, b1) * (L * L * L / 3.0);
            double cross = 2.0 * (weighted(config.s, b0, v0) * i0w +
                                  (weighted(config.s, b0, v1) + weighted(config.s, b1, v0)) * i1w +
                                  weighted(config.s, b1, v1) * i2w);
            double square = weighted(config.s, v0, v0) * i02w +
                            2.0 * weighted(config.s, v0, v1) * i12w +
                            weighted(config.s, v1, v1) * i22w;
            cost += 0.5 * (poly + cross + square);
        };

        auto integrate_segment = [&](double a, double b) {
            // split at policy grid lines so every piece sees affine base/gain;
            // cells are walked by index so a boundary landing a rounding error
            // off a grid line cannot stall the walk or skip a split
            if (!(b > a)) return;
            VectorXd delta = lambda - mu;
            if (!policy) {
                integrate_piece(a, b, delta, 0, 0.0);
                return;
            }
            const double start = policy->t0();
            const double cell_dt = policy->dt();
            const int last = policy->grid_points() - 2;
            int ka = std::clamp(static_cast<int>(std::floor((a - start) / cell_dt)), 0, last);
            int kb = std::clamp(static_cast<int>(std::floor((b - start) / cell_dt)), 0, last);
            for (int k = ka; k <= kb; ++k) {
                double lo = std::max(a, policy->grid_time(k));
                double hi = std::min(b, policy->grid_time(k + 1));
                if (!(hi > lo)) continue;
                double w = std::clamp((lo - start) / cell_dt - k, 0.0, 1.0);
                integrate_piece(lo, hi, delta * std::exp(-omega * (lo - a)), k, w);
            }
        };

        for (const Event& e : log.events) {
            if (e.time < config.t0 || e.time >= config.tf)
                throw DataError("objective_estimate: event outside config window");
            integrate_segment(t_cur, e.time);
            lambda = mu + (lambda - mu) * std::exp(-omega * (e.time - t_cur));
            model.add_column_to(e.user, lambda);
            t_cur = e.time;
        }
        integrate_segment(t_cur, config.tf);
        lambda = mu + (lambda - mu) * std::exp(-omega * (config.tf - t_cur));
        cost -= 0.5 * (config.f.array() * lambda.array() * lambda.array()).sum();
        out.per_run.push_back(cost);
    }
    double total = 0.0;
    for (double c : out.per_run) total += c;
    out.mean = out.per_run.empty() ? 0.0 : total / static_cast<double>(out.per_run.size());
    return out;
}

} // namespace cheshire
