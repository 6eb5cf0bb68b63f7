#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "cheshire/intensity.hpp"
#include "cheshire/model.hpp"

namespace cheshire {

// Horizon, quadratic weights (diagonal), and solver grid resolution for the
// activity-maximization control problem. Q weights squared organic intensity
// (reward), S weights squared control intensity (cost), F weights the terminal
// intensity (reward).
struct ControlConfig {
    double t0 = 0.0;
    double tf = 1.0;
    VectorXd q; // state-reward diagonal, entries >= 0
    VectorXd s; // control-cost diagonal, entries > 0
    VectorXd f; // terminal-reward diagonal, entries >= 0
    int grid_steps = 2000;

    void validate(int n) const {
        if (!(tf > t0)) throw ConfigError("ControlConfig: tf must exceed t0");
        if (grid_steps < 2) throw ConfigError("ControlConfig: grid_steps must be >= 2");
        if (q.size() != n || s.size() != n || f.size() != n)
            throw ConfigError("ControlConfig: diagonal length != n");
        if ((q.array() < 0.0).any()) throw ConfigError("ControlConfig: Q entries must be >= 0");
        if ((f.array() < 0.0).any()) throw ConfigError("ControlConfig: F entries must be >= 0");
        if ((s.array() <= 0.0).any())
            throw ConfigError("ControlConfig: S entries must be > 0 (S^-1 must exist)");
    }

    ControlConfig with_s_scaled(double multiplier) const {
        ControlConfig scaled = *this;
        scaled.s = s * multiplier;
        return scaled;
    }
};

inline VectorXd uniform_diagonal(int n, double value) { return VectorXd::Constant(n, value); }

namespace detail {

// diag(A^T H A) as a vector: entry i is a_i^T H a_i with a_i = A e_i.
inline VectorXd quadratic_column_diagonal(const SparseMat& a, const MatrixXd& h) {
    MatrixXd ha = h * a;
    VectorXd d = VectorXd::Zero(a.cols());
    for (int c = 0; c < a.outerSize(); ++c)
        for (SparseMat::InnerIterator it(a, c); it; ++it) d[c] += it.value() * ha(it.row(), c);
    return d;
}

} // namespace detail

// Backward fixed-step classical fourth-order solve of the matrix Riccati ODE
//   dH/dt = (omega I - A)^T H + H (omega I - A) + H A S^-1 A^T H + Q
// from H(tf) = -F down to t0 on a uniform grid with `steps` intervals.
// H is symmetrized after every step. Throws SolverError when the solution
// blows up (finite-time escape happens when the state reward outweighs the
// control cost).
inline std::vector<MatrixXd> solve_riccati(const NetworkModel& model, double t0, double tf,
                                           int steps, const MatrixXd& q_mat,
                                           const VectorXd& s_diag, const MatrixXd& f_mat) {
    const int n = model.n();
    const double dt = (tf - t0) / steps;
    const MatrixXd a = model.influence_dense();
    const MatrixXd m = model.omega() * MatrixXd::Identity(n, n) - a;
    const MatrixXd b = a * s_diag.cwiseInverse().asDiagonal() * a.transpose();

    auto rhs = [&](const MatrixXd& h) -> MatrixXd {
        return m.transpose() * h + h * m + h * b * h + q_mat;
    };

    std::vector<MatrixXd> h_path(static_cast<std::size_t>(steps) + 1);
    h_path[steps] = -f_mat;
    for (int k = steps; k > 0; --k) {
        const MatrixXd& h = h_path[k];
        MatrixXd k1 = rhs(h);
        MatrixXd k2 = rhs(h - 0.5 * dt * k1);
        MatrixXd k3 = rhs(h - 0.5 * dt * k2);
        MatrixXd k4 = rhs(h - dt * k3);
        MatrixXd next = h - (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        next = 0.5 * (next + next.transpose()).eval();
        if (!next.allFinite())
            throw SolverError("Riccati solve diverged at t=" +
                              std::to_string(t0 + (k - 1) * dt));
        h_path[k - 1] = std::move(next);
    }
    return h_path;
}

// Backward fourth-order solve of the linear final-value ODE
//   dg/dt = [omega I - A^T + H(t) A S^-1 A^T] g - omega H(t) mu0
//           + 1/2 [H(t) A S^-1 - I] diag(A^T H(t) A)
// from g(tf) = 0, with H linearly interpolated between grid points for the
// intermediate stages. The grid must match the Riccati grid.
inline std::vector<VectorXd> solve_g(const NetworkModel& model, double t0, double tf,
                                     const std::vector<MatrixXd>& h_path,
                                     const VectorXd& s_diag) {
    const int n = model.n();
    const int steps = static_cast<int>(h_path.size()) - 1;
    if (steps < 2) throw ConfigError("solve_g: H grid does not match a valid Riccati grid");
    const double dt = (tf - t0) / steps;
    const SparseMat& a = model.influence();
    const VectorXd s_inv = s_diag.cwiseInverse();
    const MatrixXd a_dense = model.influence_dense();
    const MatrixXd b = a_dense * s_inv.asDiagonal() * a_dense.transpose();

    auto rhs = [&](const VectorXd& g, const MatrixXd& h) -> VectorXd {
        VectorXd out = model.omega() * g - a.transpose() * g + h * (b * g);
        out.noalias() -= model.omega() * (h * model.mu0());
        VectorXd d = detail::quadratic_column_diagonal(a, h);
        out.noalias() += 0.5 * (h * (a_dense * (s_inv.asDiagonal() * d)));
        out.noalias() -= 0.5 * d;
        return out;
    };

    std::vector<VectorXd> g_path(h_path.size());
    g_path[steps] = VectorXd::Zero(n);
    for (int k = steps; k > 0; --k) {
        const MatrixXd& h1 = h_path[k];
        const MatrixXd& h0 = h_path[k - 1];
        MatrixXd h_mid = 0.5 * (h0 + h1);
        const VectorXd& g = g_path[k];
        VectorXd k1 = rhs(g, h1);
        VectorXd k2 = rhs(g - 0.5 * dt * k1, h_mid);
        VectorXd k3 = rhs(g - 0.5 * dt * k2, h_mid);
        VectorXd k4 = rhs(g - dt * k3, h0);
        VectorXd next = g - (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (!next.allFinite())
            throw SolverError("g solve diverged at t=" + std::to_string(t0 + (k - 1) * dt));
        g_path[k - 1] = std::move(next);
    }
    return g_path;
}

// Solved feedback law on a uniform time grid, with everything the online
// sampler needs precomputed per grid point:
//   gain    K(t)   = S^-1 A^T H(t)
//   base_u  (t)    = -S^-1 [A^T (g(t) + H(t) mu0) + 1/2 diag(A^T H(t) A)]
// so that u*(t) = base_u(t) - K(t) (lambda(t) - mu0). H and g (and therefore
// gain and base_u, both linear in them) are piecewise-linear in t between
// grid points.
class FeedbackPolicy {
public:
    FeedbackPolicy() = default;

    static FeedbackPolicy solve(const NetworkModel& model, const ControlConfig& config) {
        config.validate(model.n());
        MatrixXd q_mat = config.q.asDiagonal();
        MatrixXd f_mat = config.f.asDiagonal();
        std::vector<MatrixXd> h =
            solve_riccati(model, config.t0, config.tf, config.grid_steps, q_mat, config.s, f_mat);
        std::vector<VectorXd> g = solve_g(model, config.t0, config.tf, h, config.s);
        return FeedbackPolicy(model, config, std::move(h), std::move(g));
    }

    FeedbackPolicy(const NetworkModel& model, const ControlConfig& config,
                   std::vector<MatrixXd> h_path, std::vector<VectorXd> g_path)
        : model_(model), config_(config), h_(std::move(h_path)), g_(std::move(g_path)) {
        config_.validate(model_.n());
        if (h_.size() != static_cast<std::size_t>(config_.grid_steps) + 1 || g_.size() != h_.size())
            throw ConfigError("FeedbackPolicy: grid mismatch between config, H, and g");
        precompute();
    }

    const NetworkModel& model() const { return model_; }
    const ControlConfig& config() const { return config_; }
    int grid_points() const { return static_cast<int>(h_.size()); }
    double grid_time(int k) const { return config_.t0 + k * dt_; }
    const std::vector<MatrixXd>& h_grid() const { return h_; }
    const std::vector<VectorXd>& g_grid() const { return g_; }

    MatrixXd h_at(double t) const {
        auto [k, w] = locate(t);
        return (1.0 - w) * h_[k] + w * h_[k + 1];
    }

    VectorXd g_at(double t) const {
        auto [k, w] = locate(t);
        return (1.0 - w) * g_[k] + w * g_[k + 1];
    }

    // Theorem-form feedback law, before clamping:
    //   u(t) = -S^-1 [A^T g(t) + A^T H(t) lambda + 1/2 diag(A^T H(t) A)]
    VectorXd control_raw(double t, const VectorXd& lambda) const {
        MatrixXd h = h_at(t);
        VectorXd inner = model_.influence().transpose() * (g_at(t) + h * lambda);
        inner.noalias() += 0.5 * detail::quadratic_column_diagonal(model_.influence(), h);
        return -(s_inv_.array() * inner.array()).matrix();
    }

    // Same law expressed on the excitation d = lambda - mu0 through the
    // precomputed grid terms; algebraically identical to control_raw.
    VectorXd control_from_excitation(double t, const VectorXd& excitation) const {
        auto [k, w] = locate(t);
        VectorXd u = (1.0 - w) * base_u_[k] + w * base_u_[k + 1];
        u.noalias() -= (1.0 - w) * (gain_[k] * excitation);
        u.noalias() -= w * (gain_[k + 1] * excitation);
        return u;
    }

    // K(t) (A e_user): one gain column-application, used per superposition component.
    VectorXd gain_times_column(double t, int user) const {
        auto [k, w] = locate(t);
        VectorXd out = VectorXd::Zero(model_.n());
        const SparseMat& a = model_.influence();
        for (SparseMat::InnerIterator it(a, user); it; ++it) {
            out.noalias() += ((1.0 - w) * it.value()) * gain_[k].col(it.row());
            out.noalias() += (w * it.value()) * gain_[k + 1].col(it.row());
        }
        return out;
    }

    // Upper bound, valid on [t, tf], for the total clamped control intensity
    // when the excitation at t is `excitation` (componentwise nonnegative and
    // decaying). Uses suffix maxima over the remaining grid.
    double total_intensity_bound(double t, const VectorXd& excitation) const {
        auto [k, w] = locate(t);
        (void)w;
        return base_env_[k] + gain_colsum_env_[k].dot(excitation);
    }

    // Matching bound for a single component A e_user born at s_user:
    // kappa(t - s_user) * suffix-max gain column mass.
    double component_intensity_bound(double t, int user, double birth) const {
        auto [k, w] = locate(t);
        (void)w;
        double decay = std::exp(-model_.omega() * (t - birth));
        return decay * model_.column_dot(user, gain_colsum_env_[k]);
    }

    double t0() const { return config_.t0; }
    double tf() const { return config_.tf; }
    double dt() const { return dt_; }

    // Grid cell containing t and the interpolation weight within it.
    std::pair<int, double> cell(double t) const { return locate(t); }
    const VectorXd& base_at_grid(int k) const { return base_u_[k]; }
    const MatrixXd& gain_at_grid(int k) const { return gain_[k]; }

    void save(const std::string& path) const;
    static FeedbackPolicy load(const NetworkModel& model, const std::string& path);

private:
    std::pair<int, double> locate(double t) const {
        const double slack = 1e-9 * (1.0 + std::abs(config_.tf));
        if (t < config_.t0 - slack || t > config_.tf + slack)
            throw ConfigError("policy evaluated at t=" + std::to_string(t) +
                              " outside horizon [" + std::to_string(config_.t0) + ", " +
                              std::to_string(config_.tf) + "]");
        double pos = (t - config_.t0) / dt_;
        int k = std::min(static_cast<int>(pos), config_.grid_steps - 1);
        k = std::max(k, 0);
        double w = std::min(std::max(pos - k, 0.0), 1.0);
        return {k, w};
    }

    void precompute() {
        const int n = model_.n();
        const int points = grid_points();
        dt_ = (config_.tf - config_.t0) / config_.grid_steps;
        s_inv_ = config_.s.cwiseInverse();
        gain_.resize(points);
        base_u_.resize(points);
        base_env_.resize(points);
        gain_colsum_env_.resize(points);
        std::vector<double> base_total(points);
        std::vector<VectorXd> colsum(points);
        for (int k = 0; k < points; ++k) {
            gain_[k] = s_inv_.asDiagonal() * (model_.influence().transpose() * h_[k]);
            VectorXd inner = model_.influence().transpose() * (g_[k] + h_[k] * model_.mu0());
            inner.noalias() +=
                0.5 * detail::quadratic_column_diagonal(model_.influence(), h_[k]);
            base_u_[k] = -(s_inv_.array() * inner.array()).matrix();
            base_total[k] = base_u_[k].cwiseMax(0.0).sum();
            colsum[k] = gain_[k].cwiseAbs().colwise().sum().transpose();
        }
        base_env_[points - 1] = base_total[points - 1];
        gain_colsum_env_[points - 1] = colsum[points - 1];
        for (int k = points - 2; k >= 0; --k) {
            base_env_[k] = std::max(base_total[k], base_env_[k + 1]);
            gain_colsum_env_[k] = colsum[k].cwiseMax(gain_colsum_env_[k + 1]);
        }
        (void)n;
    }

    NetworkModel model_;
    ControlConfig config_;
    std::vector<MatrixXd> h_;
    std::vector<VectorXd> g_;
    std::vector<MatrixXd> gain_;
    std::vector<VectorXd> base_u_;
    std::vector<double> base_env_;
    std::vector<VectorXd> gain_colsum_env_;
    VectorXd s_inv_;
    double dt_ = 0.0;
};

// Tracks the most negative pre-clamp control component and the largest
// control intensity seen across a run, for the nonnegativity check.
struct ClampRecord {
    double preclamp_min = std::numeric_limits<double>::infinity();
    double max_intensity = 0.0;

    void observe(const VectorXd& raw) {
        preclamp_min = std::min(preclamp_min, raw.minCoeff());
        max_intensity = std::max(max_intensity, raw.maxCoeff());
    }

    void merge(const ClampRecord& other) {
        preclamp_min = std::min(preclamp_min, other.preclamp_min);
        max_intensity = std::max(max_intensity, other.max_intensity);
    }

    bool empty() const { return !std::isfinite(preclamp_min); }
};

// Feedback law evaluation with negative components clamped to zero (an
// intensity must be nonnegative; exact-arithmetic theory says the raw value
// already is, floating point can dip slightly below).
inline VectorXd optimal_intensity(const FeedbackPolicy& policy, const IntensityVector& lambda,
                                  double t, ClampRecord* record = nullptr) {
    VectorXd raw = policy.control_raw(t, lambda.lambda);
    if (record) record->observe(raw);
    return raw.cwiseMax(0.0);
}

// ---- policy file (binary, little-endian) ----

namespace detail {

inline void write_f64(std::ostream& out, const double* data, std::size_t count) {
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * 8));
}

inline void read_f64(std::istream& in, double* data, std::size_t count) {
    in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * 8));
    if (!in) throw ConfigError("policy file: truncated");
}

} // namespace detail

inline void FeedbackPolicy::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write policy file: " + path);
    const char magic[8] = {'C', 'H', 'S', 'H', 'P', 'O', 'L', '1'};
    out.write(magic, 8);
    std::uint32_t n = static_cast<std::uint32_t>(model_.n());
    std::uint32_t steps = static_cast<std::uint32_t>(config_.grid_steps);
    out.write(reinterpret_cast<const char*>(&n), 4);
    out.write(reinterpret_cast<const char*>(&steps), 4);
    detail::write_f64(out, &config_.t0, 1);
    detail::write_f64(out, &config_.tf, 1);
    detail::write_f64(out, config_.q.data(), n);
    detail::write_f64(out, config_.s.data(), n);
    detail::write_f64(out, config_.f.data(), n);
    for (const MatrixXd& h : h_) {
        MatrixXd row_major = h.transpose(); // Eigen stores column-major; file is row-major
        detail::write_f64(out, row_major.data(), static_cast<std::size_t>(n) * n);
    }
    for (const VectorXd& g : g_) detail::write_f64(out, g.data(), n);
    if (!out) throw ConfigError("failed writing policy file: " + path);
}

inline FeedbackPolicy FeedbackPolicy::load(const NetworkModel& model, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open policy file: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "CHSHPOL1", 8) != 0)
        throw ConfigError("policy file: bad magic: " + path);
    std::uint32_t n = 0, steps = 0;
    in.read(reinterpret_cast<char*>(&n), 4);
    in.read(reinterpret_cast<char*>(&steps), 4);
    if (!in) throw ConfigError("policy file: truncated header");
    if (static_cast<int>(n) != model.n())
        throw ConfigError("policy file: n=" + std::to_string(n) + " does not match model n=" +
                          std::to_string(model.n()));
    ControlConfig config;
    config.grid_steps = static_cast<int>(steps);
    detail::read_f64(in, &config.t0, 1);
    detail::read_f64(in, &config.tf, 1);
    config.q.resize(n);
    config.s.resize(n);
    config.f.resize(n);
    detail::read_f64(in, config.q.data(), n);
    detail::read_f64(in, config.s.data(), n);
    detail::read_f64(in, config.f.data(), n);
    std::vector<MatrixXd> h(steps + 1);
    std::vector<VectorXd> g(steps + 1);
    for (auto& hk : h) {
        MatrixXd row_major(n, n);
        detail::read_f64(in, row_major.data(), static_cast<std::size_t>(n) * n);
        hk = row_major.transpose();
    }
    for (auto& gk : g) {
        gk.resize(n);
        detail::read_f64(in, gk.data(), n);
    }
    return FeedbackPolicy(model, config, std::move(h), std::move(g));
}

} // namespace cheshire
