#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "cheshire/model.hpp"
#include "cheshire/parallel.hpp"

namespace cheshire {

// One directed influence entry under estimation: events by `source` excite
// `target`, i.e. A[target][source].
struct SupportEntry {
    int target;
    int source;
};

// Stored-pattern support of a model, in column-major order (source outer,
// target ascending). Gradients over A align with this order.
inline std::vector<SupportEntry> model_support(const NetworkModel& model) {
    std::vector<SupportEntry> support;
    const SparseMat& a = model.influence();
    support.reserve(static_cast<std::size_t>(a.nonZeros()));
    for (int c = 0; c < a.outerSize(); ++c)
        for (SparseMat::InnerIterator it(a, c); it; ++it)
            support.push_back(SupportEntry{static_cast<int>(it.row()), c});
    return support;
}

struct LogLikelihood {
    double value = 0.0;
    VectorXd grad_mu;            // d value / d mu, length n
    std::vector<double> grad_a;  // d value / d a_e, aligned with the support order
};

struct FitConfig {
    std::vector<double> omega_grid; // candidate decays; one entry skips cross-validation
    double l2_penalty = 0.0;        // ridge weight on the influence entries
    int max_iters = 500;
    double tol = 1e-8;              // relative objective-change stopping threshold
    double holdout_fraction = 0.2;  // trailing time slice scored for omega selection
    int threads = 1;

    void validate() const {
        if (omega_grid.empty()) throw ConfigError("fit: omega grid must be nonempty");
        for (double w : omega_grid)
            if (!(w > 0.0)) throw ConfigError("fit: omega candidates must be positive");
        if (l2_penalty < 0.0) throw ConfigError("fit: l2 penalty must be nonnegative");
        if (max_iters < 1) throw ConfigError("fit: max_iters must be >= 1");
        if (!(tol > 0.0)) throw ConfigError("fit: tol must be positive");
        if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
            throw ConfigError("fit: holdout fraction must be in (0, 1)");
    }
};

struct FitResult {
    NetworkModel model;
    double omega = 0.0;
    double full_ll = 0.0;    // log-likelihood of the returned model on the full windows
    double heldout_ll = std::numeric_limits<double>::quiet_NaN(); // best CV score, NaN if no CV
    bool converged = false;
    int iterations = 0;
};

namespace detail {

// Per-target adjacency over the support: rows[v] lists (entry index, source).
inline std::vector<std::vector<std::pair<int, int>>> support_rows(
    int n, const std::vector<SupportEntry>& support) {
    std::vector<std::vector<std::pair<int, int>>> rows(static_cast<std::size_t>(n));
    for (int e = 0; e < static_cast<int>(support.size()); ++e) {
        const SupportEntry& s = support[static_cast<std::size_t>(e)];
        if (s.target < 0 || s.target >= n || s.source < 0 || s.source >= n)
            throw DataError("fit: support entry out of range");
        rows[static_cast<std::size_t>(s.target)].emplace_back(e, s.source);
    }
    return rows;
}

// Log-likelihood of an exponential-kernel Hawkes model over the window
// [a, b) of one log, with events before a driving the intensity as history.
// theta = (a entries in support order, then mu). Returns false when some
// event sits at zero intensity (value is then -infinity and the gradient is
// unusable). Gradient accumulation is exact:
//   sum over events of log lambda_{u_i}(t_i) - sum over users of the
//   compensator, with R_w(t) = sum of kappa(t - t_j) over earlier events of
//   w carrying both.
inline bool accumulate_ll(const std::vector<std::vector<std::pair<int, int>>>& rows,
                          const double* theta_a, const double* theta_mu, int n, double omega,
                          const EventLog& log, double a, double b, double& value, double* grad_a,
                          double* grad_mu) {
    if (!(b > a)) throw ConfigError("fit: empty likelihood window");
    VectorXd r = VectorXd::Zero(n);
    std::vector<double> psi(static_cast<std::size_t>(n), 0.0); // integral of each user's kernel sum over [a, b)
    double last_t = log.t0;
    bool feasible = true;
    for (const Event& ev : log.events) {
        if (ev.time >= b) break;
        r *= std::exp(-omega * (ev.time - last_t));
        last_t = ev.time;
        if (ev.time >= a) {
            double lam = theta_mu[ev.user];
            for (auto [e, src] : rows[static_cast<std::size_t>(ev.user)])
                lam += theta_a[e] * r[src];
            if (!(lam > 0.0)) {
                feasible = false;
                value = -std::numeric_limits<double>::infinity();
                break;
            }
            value += std::log(lam);
            if (grad_mu) {
                grad_mu[ev.user] += 1.0 / lam;
                for (auto [e, src] : rows[static_cast<std::size_t>(ev.user)])
                    grad_a[e] += r[src] / lam;
            }
        }
        double start = std::max(ev.time, a);
        psi[static_cast<std::size_t>(ev.user)] +=
            (std::exp(-omega * (start - ev.time)) - std::exp(-omega * (b - ev.time))) / omega;
        r[ev.user] += 1.0;
    }
    if (!feasible) return false;
    double span = b - a;
    for (int v = 0; v < n; ++v) {
        value -= theta_mu[v] * span;
        if (grad_mu) grad_mu[v] -= span;
        for (auto [e, src] : rows[static_cast<std::size_t>(v)]) {
            value -= theta_a[e] * psi[static_cast<std::size_t>(src)];
            if (grad_a) grad_a[e] -= psi[static_cast<std::size_t>(src)];
        }
    }
    return true;
}

struct AscentOutcome {
    std::vector<double> theta;
    double objective = -std::numeric_limits<double>::infinity();
    bool converged = false;
    int iterations = 0;
};

} // namespace detail

// Value and exact gradient of the log-likelihood of `model` for `log` over
// the window [a, b) (defaults to the log's own span). grad_a follows
// model_support order. Throws InfeasibleModelError when an event has zero
// intensity under the model.
inline LogLikelihood log_likelihood(const NetworkModel& model, const EventLog& log,
                                    double a = std::numeric_limits<double>::quiet_NaN(),
                                    double b = std::numeric_limits<double>::quiet_NaN()) {
    if (log.n != model.n()) throw DataError("log_likelihood: log n does not match model");
    log.validate();
    if (std::isnan(a)) a = log.t0;
    if (std::isnan(b)) b = log.tf;
    std::vector<SupportEntry> support = model_support(model);
    auto rows = detail::support_rows(model.n(), support);
    std::vector<double> theta_a(support.size());
    const SparseMat& mat = model.influence();
    std::size_t e = 0;
    for (int c = 0; c < mat.outerSize(); ++c)
        for (SparseMat::InnerIterator it(mat, c); it; ++it) theta_a[e++] = it.value();
    LogLikelihood out;
    out.grad_mu = VectorXd::Zero(model.n());
    out.grad_a.assign(support.size(), 0.0);
    bool ok = detail::accumulate_ll(rows, theta_a.data(), model.mu0().data(), model.n(),
                                    model.omega(), log, a, b, out.value, out.grad_a.data(),
                                    out.grad_mu.data());
    if (!ok)
        throw InfeasibleModelError(
            "log_likelihood: an event sits at zero intensity under this model");
    return out;
}

namespace detail {

// Projected gradient ascent on theta >= 0 with doubling/halving step search.
// objective(theta, grad_or_null) returns the penalized log-likelihood.
template <typename Objective>
AscentOutcome ascend(std::vector<double> theta, int max_iters, double tol,
                     Objective&& objective) {
    AscentOutcome out;
    std::vector<double> grad(theta.size(), 0.0);
    std::vector<double> trial(theta.size(), 0.0);
    double value = objective(theta, &grad);
    double step = 1.0;
    for (int iter = 1; iter <= max_iters; ++iter) {
        out.iterations = iter;
        bool accepted = false;
        double trial_value = 0.0;
        while (step >= 1e-14) {
            for (std::size_t i = 0; i < theta.size(); ++i)
                trial[i] = std::max(0.0, theta[i] + step * grad[i]);
            trial_value = objective(trial, nullptr);
            if (trial_value > value) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            out.converged = true; // no ascent direction left at any step size
            break;
        }
        double change = trial_value - value;
        theta.swap(trial);
        value = trial_value;
        step = std::min(step * 2.0, 1e12);
        if (change <= tol * (1.0 + std::abs(value))) {
            out.converged = true;
            break;
        }
        value = objective(theta, &grad);
    }
    out.theta = std::move(theta);
    out.objective = value;
    return out;
}

struct SingleFit {
    std::vector<double> theta;
    double full_ll = 0.0;
    bool converged = false;
    int iterations = 0;
};

inline SingleFit fit_single_omega(const std::vector<EventLog>& logs,
                                  const std::vector<SupportEntry>& support, int n, double omega,
                                  const FitConfig& config, const std::vector<double>& window_a,
                                  const std::vector<double>& window_b) {
    auto rows = support_rows(n, support);
    const std::size_t m = support.size();

    auto objective = [&](const std::vector<double>& theta, std::vector<double>* grad) -> double {
        double value = 0.0;
        if (grad) std::fill(grad->begin(), grad->end(), 0.0);
        for (std::size_t li = 0; li < logs.size(); ++li) {
            bool ok = accumulate_ll(rows, theta.data(), theta.data() + m, n, omega, logs[li],
                                    window_a[li], window_b[li], value,
                                    grad ? grad->data() : nullptr,
                                    grad ? grad->data() + m : nullptr);
            if (!ok) return -std::numeric_limits<double>::infinity();
        }
        if (config.l2_penalty > 0.0)
            for (std::size_t e = 0; e < m; ++e) {
                value -= 0.5 * config.l2_penalty * theta[e] * theta[e];
                if (grad) (*grad)[e] -= config.l2_penalty * theta[e];
            }
        return value;
    };

    // data-scaled start: empirical rates for mu, mildly exciting entries for A
    std::vector<double> theta(m + static_cast<std::size_t>(n), 0.0);
    double total_span = 0.0;
    std::vector<double> counts(static_cast<std::size_t>(n), 0.0);
    std::vector<double> indeg(static_cast<std::size_t>(n), 0.0);
    for (const SupportEntry& s : support) indeg[static_cast<std::size_t>(s.target)] += 1.0;
    for (std::size_t li = 0; li < logs.size(); ++li) {
        total_span += window_b[li] - window_a[li];
        for (const Event& ev : logs[li].events)
            if (ev.time >= window_a[li] && ev.time < window_b[li])
                counts[static_cast<std::size_t>(ev.user)] += 1.0;
    }
    for (std::size_t e = 0; e < m; ++e)
        theta[e] = 0.1 * omega / std::max(1.0, indeg[static_cast<std::size_t>(support[e].target)]);
    for (int v = 0; v < n; ++v)
        theta[m + static_cast<std::size_t>(v)] =
            counts[static_cast<std::size_t>(v)] / total_span + 1e-4;

    AscentOutcome outcome = ascend(std::move(theta), config.max_iters, config.tol, objective);
    SingleFit fit;
    fit.theta = std::move(outcome.theta);
    fit.converged = outcome.converged;
    fit.iterations = outcome.iterations;
    // report the unpenalized likelihood for the fitted parameters
    double raw = 0.0;
    for (std::size_t li = 0; li < logs.size(); ++li)
        if (!accumulate_ll(rows, fit.theta.data(), fit.theta.data() + m, n, omega, logs[li],
                           window_a[li], window_b[li], raw, nullptr, nullptr)) {
            raw = -std::numeric_limits<double>::infinity();
            break;
        }
    fit.full_ll = raw;
    return fit;
}

inline NetworkModel model_from_theta(int n, double omega,
                                     const std::vector<SupportEntry>& support,
                                     const std::vector<double>& theta) {
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(support.size());
    for (std::size_t e = 0; e < support.size(); ++e)
        triplets.emplace_back(support[e].target, support[e].source, theta[e]);
    VectorXd mu(n);
    for (int v = 0; v < n; ++v) mu[v] = theta[support.size() + static_cast<std::size_t>(v)];
    return NetworkModel::from_triplets(n, triplets, mu, omega);
}

} // namespace detail

// Maximum-likelihood fit of (A on the given support, mu0) from one or more
// event logs, with omega chosen from a grid. A single-candidate grid fits the
// full data directly. Several candidates are scored by fitting the leading
// (1 - holdout) time slice of every log and evaluating the trailing slice,
// then the winner is refit on the full data. Projected gradient ascent keeps
// every parameter nonnegative; the likelihood never decreases across accepted
// steps. No randomness anywhere, so the fit is a pure function of its inputs.
// An empty support reduces to the closed-form Poisson rate fit.
inline FitResult fit_mle(const std::vector<EventLog>& logs,
                         const std::vector<SupportEntry>& support, const FitConfig& config) {
    config.validate();
    if (logs.empty()) throw ConfigError("fit: need at least one event log");
    const int n = logs.front().n;
    for (const EventLog& log : logs) {
        log.validate();
        if (log.n != n) throw DataError("fit: logs disagree on user count");
        if (!(log.tf > log.t0)) throw DataError("fit: log has empty time span");
    }

    std::vector<double> full_a(logs.size()), full_b(logs.size());
    for (std::size_t li = 0; li < logs.size(); ++li) {
        full_a[li] = logs[li].t0;
        full_b[li] = logs[li].tf;
    }

    if (support.empty()) {
        double span = 0.0;
        VectorXd counts = VectorXd::Zero(n);
        for (const EventLog& log : logs) {
            span += log.tf - log.t0;
            for (const Event& ev : log.events) counts[ev.user] += 1.0;
        }
        VectorXd mu = counts / span;
        NetworkModel model(n, SparseMat(n, n), mu, config.omega_grid.front());
        double ll = 0.0;
        for (int v = 0; v < n; ++v)
            if (counts[v] > 0.0) ll += counts[v] * std::log(mu[v]);
        ll -= counts.sum();
        return FitResult{std::move(model), config.omega_grid.front(), ll,
                         std::numeric_limits<double>::quiet_NaN(), true, 0};
    }

    auto rows = detail::support_rows(n, support);

    if (config.omega_grid.size() == 1) {
        double omega = config.omega_grid.front();
        detail::SingleFit fit =
            detail::fit_single_omega(logs, support, n, omega, config, full_a, full_b);
        return FitResult{detail::model_from_theta(n, omega, support, fit.theta), omega,
                         fit.full_ll, std::numeric_limits<double>::quiet_NaN(), fit.converged,
                         fit.iterations};
    }

    std::vector<double> train_a(logs.size()), train_b(logs.size());
    for (std::size_t li = 0; li < logs.size(); ++li) {
        train_a[li] = logs[li].t0;
        train_b[li] = logs[li].t0 + (1.0 - config.holdout_fraction) * (logs[li].tf - logs[li].t0);
    }

    std::vector<double> heldout(config.omega_grid.size(),
                                -std::numeric_limits<double>::infinity());
    parallel_for(config.omega_grid.size(), config.threads, [&](std::size_t wi) {
        double omega = config.omega_grid[wi];
        detail::SingleFit fit =
            detail::fit_single_omega(logs, support, n, omega, config, train_a, train_b);
        double score = 0.0;
        const std::size_t m = support.size();
        for (std::size_t li = 0; li < logs.size(); ++li)
            if (!detail::accumulate_ll(rows, fit.theta.data(), fit.theta.data() + m, n, omega,
                                       logs[li], train_b[li], full_b[li], score, nullptr,
                                       nullptr)) {
                score = -std::numeric_limits<double>::infinity();
                break;
            }
        heldout[wi] = score;
    });

    std::size_t best = 0;
    for (std::size_t wi = 1; wi < heldout.size(); ++wi)
        if (heldout[wi] > heldout[best]) best = wi;

    double omega = config.omega_grid[best];
    detail::SingleFit fit =
        detail::fit_single_omega(logs, support, n, omega, config, full_a, full_b);
    return FitResult{detail::model_from_theta(n, omega, support, fit.theta), omega, fit.full_ll,
                     heldout[best], fit.converged, fit.iterations};
}

} // namespace cheshire
