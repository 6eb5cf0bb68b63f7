#pragma once

#include <cmath>
#include <string>

#include "cheshire/model.hpp"

namespace cheshire {

// Direct evaluation of the intensity at time t from the full history:
//   lambda(t) = mu0 + sum_{t_i < t} exp(-omega (t - t_i)) A e_{u_i}
// over events of both kinds strictly before t. O(|events| * nnz-per-column);
// this is the reference the decay/jump recursion is checked against.
inline IntensityVector intensity_from_history(const NetworkModel& model, const EventLog& log,
                                              double t) {
    if (log.n != model.n()) throw DataError("intensity_from_history: log user count != model n");
    IntensityVector out{model.mu0(), t};
    for (const Event& e : log.events) {
        if (e.time >= t) break;
        model.check_user(e.user);
        model.add_column_to(e.user, out.lambda, std::exp(-model.omega() * (t - e.time)));
    }
    return out;
}

// Exact relaxation between events: lambda(t) = mu0 + exp(-omega (t - s)) (lambda(s) - mu0).
// Valid only when no event lies in (s, t].
inline IntensityVector decay_intensity(const NetworkModel& model, const IntensityVector& lambda_s,
                                       double t) {
    if (t < lambda_s.as_of)
        throw DataError("decay_intensity: t=" + std::to_string(t) + " precedes as_of=" +
                        std::to_string(lambda_s.as_of));
    double scale = std::exp(-model.omega() * (t - lambda_s.as_of));
    IntensityVector out;
    out.as_of = t;
    out.lambda = model.mu0() + scale * (lambda_s.lambda - model.mu0());
    return out;
}

// Jump at an event by `user`: lambda' = lambda + A e_user, same timestamp.
inline IntensityVector apply_jump(const NetworkModel& model, const IntensityVector& lambda,
                                  int user) {
    IntensityVector out = lambda;
    model.add_column_to(user, out.lambda);
    return out;
}

// Stability report: spectral radius of A / omega. rho >= 1 means the process
// is supercritical and event counts grow without bound (hence the event cap).
struct BranchingReport {
    double rho = 0.0;
    bool supercritical = false;
    bool converged = false;
    int iterations = 0;
    double lower = 0.0; // Collatz-Wielandt bounds on rho at the last iterate
    double upper = 0.0;
};

// Power iteration with Collatz-Wielandt bounds. A small diagonal shift makes
// the iteration aperiodic; the shift moves the Perron root by exactly its own
// value, so it is subtracted back out.
inline BranchingReport branching_check(const NetworkModel& model, double tol = 1e-9,
                                       int max_iters = 10000) {
    const int n = model.n();
    const SparseMat& a = model.influence();
    double amax = 0.0;
    for (int c = 0; c < a.outerSize(); ++c)
        for (SparseMat::InnerIterator it(a, c); it; ++it) amax = std::max(amax, it.value());

    BranchingReport report;
    if (amax == 0.0) {
        report.converged = true;
        report.supercritical = false;
        return report;
    }

    const double shift = 1e-3 * amax;
    VectorXd x = VectorXd::Constant(n, 1.0 / std::sqrt(static_cast<double>(n)));
    double lo = 0.0, hi = std::numeric_limits<double>::infinity();
    for (int iter = 1; iter <= max_iters; ++iter) {
        VectorXd y = a * x + shift * x;
        lo = std::numeric_limits<double>::infinity();
        hi = 0.0;
        for (int i = 0; i < n; ++i) {
            double ratio = y[i] / x[i];
            lo = std::min(lo, ratio);
            hi = std::max(hi, ratio);
        }
        report.iterations = iter;
        if (hi - lo <= tol * std::max(1.0, hi)) {
            report.converged = true;
            break;
        }
        x = y / y.norm();
    }
    double rho_a = 0.5 * (lo + hi) - shift;
    if (!report.converged) rho_a = hi - shift; // fall back to the upper bound
    report.rho = std::max(0.0, rho_a) / model.omega();
    report.lower = std::max(0.0, lo - shift) / model.omega();
    report.upper = std::max(0.0, hi - shift) / model.omega();
    report.supercritical = report.rho >= 1.0;
    return report;
}

} // namespace cheshire
