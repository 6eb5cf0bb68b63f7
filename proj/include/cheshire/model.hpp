#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cheshire/errors.hpp"

namespace cheshire {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using SparseMat = Eigen::SparseMatrix<double>; // column-major: column extraction is the hot path

// Multidimensional Hawkes model over n users: baseline rates mu0, influence
// matrix A (an event by user u adds column A e_u to the intensity), and
// exponential kernel decay rate omega.
class NetworkModel {
public:
    NetworkModel() = default;

    NetworkModel(int n, SparseMat influence, VectorXd mu0, double omega)
        : n_(n), influence_(std::move(influence)), mu0_(std::move(mu0)), omega_(omega) {
        validate();
        influence_.makeCompressed();
        if (n_ <= kDenseThreshold) dense_ = MatrixXd(influence_);
    }

    static NetworkModel from_triplets(int n, const std::vector<Eigen::Triplet<double>>& entries,
                                      VectorXd mu0, double omega) {
        SparseMat a(n, n);
        a.setFromTriplets(entries.begin(), entries.end());
        return NetworkModel(n, std::move(a), std::move(mu0), omega);
    }

    int n() const { return n_; }
    double omega() const { return omega_; }
    const VectorXd& mu0() const { return mu0_; }
    const SparseMat& influence() const { return influence_; }

    MatrixXd influence_dense() const { return dense_ ? *dense_ : MatrixXd(influence_); }

    // out += scale * A e_user
    void add_column_to(int user, VectorXd& out, double scale = 1.0) const {
        check_user(user);
        if (dense_) {
            out.noalias() += scale * dense_->col(user);
            return;
        }
        for (SparseMat::InnerIterator it(influence_, user); it; ++it)
            out[it.row()] += scale * it.value();
    }

    // dot(v, A e_user)
    double column_dot(int user, const VectorXd& v) const {
        check_user(user);
        if (dense_) return v.dot(dense_->col(user));
        double acc = 0.0;
        for (SparseMat::InnerIterator it(influence_, user); it; ++it)
            acc += v[it.row()] * it.value();
        return acc;
    }

    void check_user(int user) const {
        if (user < 0 || user >= n_)
            throw DataError("user index " + std::to_string(user) + " out of range [0, " +
                            std::to_string(n_) + ")");
    }

    static constexpr int kDenseThreshold = 64;

private:
    void validate() const {
        if (n_ <= 0) throw ConfigError("NetworkModel: n must be positive");
        if (omega_ <= 0.0) throw ConfigError("NetworkModel: omega must be strictly positive");
        if (mu0_.size() != n_) throw ConfigError("NetworkModel: mu0 length != n");
        if ((mu0_.array() < 0.0).any()) throw ConfigError("NetworkModel: mu0 must be nonnegative");
        if (influence_.rows() != n_ || influence_.cols() != n_)
            throw ConfigError("NetworkModel: influence matrix is not n x n");
        for (int c = 0; c < influence_.outerSize(); ++c)
            for (SparseMat::InnerIterator it(influence_, c); it; ++it)
                if (it.value() < 0.0)
                    throw ConfigError("NetworkModel: influence entries must be nonnegative");
    }

    int n_ = 0;
    SparseMat influence_;
    VectorXd mu0_;
    double omega_ = 1.0;
    std::optional<MatrixXd> dense_;
};

enum class EventKind { Organic, Incentivized };

inline const char* to_string(EventKind kind) {
    return kind == EventKind::Organic ? "organic" : "incentivized";
}

struct Event {
    double time = 0.0;
    int user = 0;
    EventKind kind = EventKind::Organic;
};

// Time-ordered realization of the counting processes (N, M). Ties keep
// insertion order; samplers produce almost-surely distinct times, so ties
// only arise from file input.
struct EventLog {
    std::vector<Event> events;
    double t0 = 0.0;
    double tf = 0.0;
    int n = 0;

    std::size_t size() const { return events.size(); }

    std::size_t count(EventKind kind) const {
        return static_cast<std::size_t>(
            std::count_if(events.begin(), events.end(),
                          [kind](const Event& e) { return e.kind == kind; }));
    }

    void validate() const {
        double prev = t0;
        for (const Event& e : events) {
            if (e.user < 0 || e.user >= n)
                throw DataError("event log: user index " + std::to_string(e.user) +
                                " out of range [0, " + std::to_string(n) + ")");
            if (e.time < prev) throw DataError("event log: times must be nondecreasing");
            prev = e.time;
        }
    }
};

// Intensity vector lambda(t) stamped with its evaluation time.
struct IntensityVector {
    VectorXd lambda;
    double as_of = 0.0;
};

// ---- file formats ----

// Model file: {"n": int, "omega": float, "mu0": [float], "A": [[row, col, value], ...]}
inline NetworkModel load_model_json(const nlohmann::json& j) {
    try {
        int n = j.at("n").get<int>();
        double omega = j.at("omega").get<double>();
        auto mu_vals = j.at("mu0").get<std::vector<double>>();
        if (static_cast<int>(mu_vals.size()) != n)
            throw ConfigError("model json: mu0 length != n");
        VectorXd mu0 = Eigen::Map<const VectorXd>(mu_vals.data(), n);
        std::vector<Eigen::Triplet<double>> entries;
        for (const auto& row : j.at("A")) {
            if (!row.is_array() || row.size() != 3)
                throw ConfigError("model json: A entries must be [row, col, value] triplets");
            entries.emplace_back(row[0].get<int>(), row[1].get<int>(), row[2].get<double>());
        }
        return NetworkModel::from_triplets(n, entries, std::move(mu0), omega);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("model json: ") + e.what());
    }
}

inline NetworkModel load_model_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open model file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("model file " + path + ": " + e.what());
    }
    return load_model_json(j);
}

inline nlohmann::json model_to_json(const NetworkModel& model) {
    nlohmann::json j;
    j["n"] = model.n();
    j["omega"] = model.omega();
    j["mu0"] = std::vector<double>(model.mu0().data(), model.mu0().data() + model.n());
    nlohmann::json a = nlohmann::json::array();
    const SparseMat& m = model.influence();
    for (int c = 0; c < m.outerSize(); ++c)
        for (SparseMat::InnerIterator it(m, c); it; ++it)
            a.push_back({static_cast<int>(it.row()), c, it.value()});
    j["A"] = std::move(a);
    return j;
}

inline void save_model_file(const NetworkModel& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write model file: " + path);
    out << model_to_json(model).dump(2) << '\n';
}

// Event log file: CSV with header `time,user,kind`, ascending times.
inline void save_log_csv(const EventLog& log, std::ostream& out) {
    out << "time,user,kind\n";
    char buf[64];
    for (const Event& e : log.events) {
        std::snprintf(buf, sizeof buf, "%.17g", e.time);
        out << buf << ',' << e.user << ',' << to_string(e.kind) << '\n';
    }
}

inline void save_log_csv(const EventLog& log, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write event log: " + path);
    save_log_csv(log, out);
}

inline EventLog load_log_csv(std::istream& in, int n, double t0, double tf) {
    EventLog log;
    log.n = n;
    log.t0 = t0;
    log.tf = tf;
    std::string line;
    if (!std::getline(in, line) || line.rfind("time,user,kind", 0) != 0)
        throw DataError("event log csv: missing `time,user,kind` header");
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::size_t c1 = line.find(',');
        std::size_t c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
        if (c2 == std::string::npos)
            throw DataError("event log csv: malformed line " + std::to_string(lineno));
        Event e;
        try {
            e.time = std::stod(line.substr(0, c1));
            e.user = std::stoi(line.substr(c1 + 1, c2 - c1 - 1));
        } catch (const std::exception&) {
            throw DataError("event log csv: malformed line " + std::to_string(lineno));
        }
        std::string kind = line.substr(c2 + 1);
        if (!kind.empty() && kind.back() == '\r') kind.pop_back();
        if (kind == "organic") e.kind = EventKind::Organic;
        else if (kind == "incentivized") e.kind = EventKind::Incentivized;
        else throw DataError("event log csv: unknown kind `" + kind + "` on line " + std::to_string(lineno));
        log.events.push_back(e);
    }
    log.validate();
    return log;
}

inline EventLog load_log_csv(const std::string& path, int n, double t0, double tf) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open event log: " + path);
    return load_log_csv(in, n, t0, tf);
}

} // namespace cheshire
