#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cheshire/calibrate.hpp"
#include "cheshire/cheshire.hpp"
#include "cheshire/graph.hpp"
#include "cheshire/parallel.hpp"
#include "cheshire/simulate.hpp"

namespace cheshire {

enum class Method { Cheshire, Prk, Deg, Uncontrolled };

inline const char* method_name(Method m) {
    switch (m) {
        case Method::Cheshire: return "cheshire";
        case Method::Prk: return "prk";
        case Method::Deg: return "deg";
        default: return "uncontrolled";
    }
}

inline Method method_from_name(const std::string& name) {
    if (name == "cheshire") return Method::Cheshire;
    if (name == "prk") return Method::Prk;
    if (name == "deg") return Method::Deg;
    if (name == "uncontrolled" || name == "unc") return Method::Uncontrolled;
    throw ConfigError("unknown method '" + name + "' (cheshire, prk, deg, uncontrolled)");
}

// Network generation recipe: a Kronecker topology plus parameter ranges.
struct GeneratorSpec {
    KroneckerSeed kron{{{0.5, 0.5}, {0.5, 0.5}}, 6};
    ParameterRanges ranges;
    std::uint64_t seed = 1;

    NetworkModel build() const {
        Rng rng(derive_seed(seed, 0x4e4554u)); // "NET"
        Graph graph = kronecker_graph(kron, rng);
        return sample_parameters(graph, ranges, rng);
    }
};

// Named starting points taken from the synthetic studies: the two 64-node
// networks (A, mu ~ U(0,10), mu on 20% of users, omega 16) and the five
// 512-node Kronecker families (A, mu ~ U(0,1) everywhere, omega 100). Any
// field can be overridden in the config.
inline GeneratorSpec preset_generator(const std::string& name) {
    GeneratorSpec spec;
    auto themed = [&](double t00, double t01, double t10, double t11) {
        spec.kron.theta[0][0] = t00;
        spec.kron.theta[0][1] = t01;
        spec.kron.theta[1][0] = t10;
        spec.kron.theta[1][1] = t11;
    };
    if (name == "core-periphery-64" || name == "dissortative-64") {
        spec.kron.k = 6;
        spec.ranges.a_low = 0.0;
        spec.ranges.a_high = 10.0;
        spec.ranges.mu_low = 0.0;
        spec.ranges.mu_high = 10.0;
        spec.ranges.active_fraction = 0.2;
        spec.ranges.omega = 16.0;
        if (name == "core-periphery-64")
            themed(0.96, 0.3, 0.3, 0.96);
        else
            themed(0.3, 0.96, 0.96, 0.3);
        return spec;
    }
    spec.kron.k = 9;
    spec.ranges.a_low = 0.0;
    spec.ranges.a_high = 1.0;
    spec.ranges.mu_low = 0.0;
    spec.ranges.mu_high = 1.0;
    spec.ranges.active_fraction = 1.0;
    spec.ranges.omega = 100.0;
    if (name == "assortative")
        themed(0.96, 0.3, 0.3, 0.96);
    else if (name == "dissortative")
        themed(0.3, 0.96, 0.96, 0.3);
    else if (name == "random")
        themed(0.7, 0.7, 0.7, 0.7);
    else if (name == "hierarchical")
        themed(0.9, 0.1, 0.1, 0.9);
    else if (name == "core-periphery")
        themed(0.9, 0.5, 0.5, 0.3);
    else
        throw ConfigError("unknown preset '" + name + "'");
    return spec;
}

struct ExperimentConfig {
    std::string model_file; // exclusive with generator
    std::optional<GeneratorSpec> generator;
    double t0 = 0.0;
    double tf = 1.0;
    std::vector<Method> methods;
    double budget = 0.0;
    int runs = 20;
    std::uint64_t seed = 0;
    std::size_t event_cap = 200000;
    std::int64_t milestone = 0; // organic-count target; 0 disables
    int grid_points = 101;
    // control weights: scalars expanded over users unless a full diagonal is given
    double q_scale = 1.0, s_scale = 1.0, f_scale = 1.0;
    VectorXd q_diag, s_diag, f_diag;
    int control_grid_steps = 2000;
    int calibration_runs = 5;
    double calibration_tol = 0.1;
    std::size_t calibration_event_cap = 0; // 0: same as event_cap
    std::string out_dir;
    int threads = 1;
    bool save_logs = false;

    void validate() const {
        if (model_file.empty() == !generator.has_value())
            throw ConfigError("experiment: provide exactly one of model file or generator");
        if (!(tf > t0)) throw ConfigError("experiment: tf must exceed t0");
        if (methods.empty()) throw ConfigError("experiment: methods list is empty");
        if (runs < 1) throw ConfigError("experiment: runs must be >= 1");
        if (budget < 0.0) throw ConfigError("experiment: budget must be nonnegative");
        if (event_cap == 0) throw ConfigError("experiment: event cap must be positive");
        if (milestone < 0) throw ConfigError("experiment: milestone must be nonnegative");
        if (grid_points < 2) throw ConfigError("experiment: grid needs at least two points");
        if (control_grid_steps < 2) throw ConfigError("experiment: control grid too coarse");
        if (calibration_runs < 1) throw ConfigError("experiment: calibration runs must be >= 1");
        if (!(calibration_tol > 0.0)) throw ConfigError("experiment: calibration tol must be > 0");
        if (threads < 0) throw ConfigError("experiment: threads must be nonnegative");
    }

    ControlConfig control_template(int n) const {
        ControlConfig ctl;
        ctl.t0 = t0;
        ctl.tf = tf;
        ctl.grid_steps = control_grid_steps;
        ctl.q = q_diag.size() ? q_diag : uniform_diagonal(n, q_scale);
        ctl.s = s_diag.size() ? s_diag : uniform_diagonal(n, s_scale);
        ctl.f = f_diag.size() ? f_diag : uniform_diagonal(n, f_scale);
        return ctl;
    }
};

struct MethodMetrics {
    Method method = Method::Uncontrolled;
    bool ok = true;
    std::string note; // diagnostic when the arm was aborted
    int runs = 0;
    VectorXd mean_organic; // aggregate organic count at each grid time
    VectorXd se_organic;
    double mean_incentivized = 0.0, se_incentivized = 0.0;
    double mean_final_organic = 0.0, se_final_organic = 0.0;
    int capped_runs = 0;
    int milestone_reached = 0;
    double milestone_mean = std::numeric_limits<double>::quiet_NaN();
    double milestone_se = std::numeric_limits<double>::quiet_NaN();
    ClampRecord clamp;
    double calibration_multiplier = std::numeric_limits<double>::quiet_NaN();
    double calibration_achieved = std::numeric_limits<double>::quiet_NaN();
    double mean_runtime_seconds = 0.0;
};

struct MetricsTable {
    std::vector<double> grid;
    std::vector<MethodMetrics> methods;
    double t0 = 0.0, tf = 0.0;
    double budget = 0.0;
    int runs = 0;
    std::uint64_t seed = 0;
    std::int64_t milestone = 0;
};

// Time at which the log's cumulative organic count reaches `target`.
inline std::optional<double> milestone_time(const EventLog& log, std::int64_t target) {
    if (target < 1) throw ConfigError("milestone target must be >= 1");
    std::int64_t seen = 0;
    for (const Event& e : log.events)
        if (e.kind == EventKind::Organic && ++seen == target) return e.time;
    return std::nullopt;
}

namespace detail {

inline void mean_se(const std::vector<double>& xs, double& mean, double& se) {
    mean = 0.0;
    se = 0.0;
    if (xs.empty()) return;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    if (xs.size() < 2) return;
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    se = std::sqrt(ss / (static_cast<double>(xs.size()) - 1.0) /
                   static_cast<double>(xs.size()));
}

inline std::string format_double(double v, const char* fmt = "%.10g") {
    char buf[64];
    std::snprintf(buf, sizeof buf, fmt, v);
    return buf;
}

} // namespace detail

inline void export_report(const MetricsTable& table, const std::string& dir);
inline void save_metrics_json(const MetricsTable& table, const std::string& path);
inline MetricsTable load_metrics_json(const std::string& path);

// Runs every requested arm on the same model with paired organic randomness
// (run r of every method uses the same organic stream, so method contrasts
// are common-random-number comparisons). The cheshire arm first calibrates
// its cost scale to the budget unless the budget is zero, in which case it
// gets the explicit do-nothing policy. A calibration failure aborts only the
// cheshire arm and leaves its diagnostic in the metrics row. When out_dir is
// set, writes metrics.json, report.csv, report.svg, and summary.json there.
inline MetricsTable run_experiment(const ExperimentConfig& config) {
    config.validate();
    NetworkModel model =
        config.generator ? config.generator->build() : load_model_file(config.model_file);
    const int n = model.n();

    MetricsTable table;
    table.grid = uniform_grid(config.t0, config.tf, config.grid_points);
    table.t0 = config.t0;
    table.tf = config.tf;
    table.budget = config.budget;
    table.runs = config.runs;
    table.seed = config.seed;
    table.milestone = config.milestone;

    std::optional<std::filesystem::path> log_dir;
    if (config.save_logs) {
        if (config.out_dir.empty())
            throw ConfigError("experiment: save_logs requires an output directory");
        log_dir = std::filesystem::path(config.out_dir) / "logs";
        std::filesystem::create_directories(*log_dir);
    }

    for (Method method : config.methods) {
        MethodMetrics mm;
        mm.method = method;
        mm.runs = config.runs;

        std::optional<FeedbackPolicy> policy;
        VectorXd constant_rates;
        if (method == Method::Cheshire) {
            ControlConfig ctl = config.control_template(n);
            try {
                if (config.budget == 0.0) {
                    ctl.q.setZero();
                    ctl.f.setZero();
                    policy = FeedbackPolicy::solve(model, ctl);
                    mm.calibration_multiplier = 1.0;
                    mm.calibration_achieved = 0.0;
                } else {
                    CalibrationOptions opts;
                    opts.runs = config.calibration_runs;
                    opts.tol = config.calibration_tol;
                    opts.seed = derive_seed(config.seed, 0xCA11Bu);
                    opts.event_cap = config.calibration_event_cap ? config.calibration_event_cap
                                                                  : config.event_cap;
                    CalibrationResult cal = calibrate_budget(model, ctl, config.budget, opts);
                    policy = FeedbackPolicy::solve(model, cal.config);
                    mm.calibration_multiplier = cal.multiplier;
                    mm.calibration_achieved = cal.achieved;
                }
            } catch (const SolverError& e) {
                mm.ok = false;
                mm.note = e.what();
                table.methods.push_back(std::move(mm));
                continue;
            }
        } else if (method == Method::Prk || method == Method::Deg) {
            Graph graph = support_graph(model);
            VectorXd scores =
                method == Method::Prk ? pagerank(graph).scores : out_degree_scores(graph);
            constant_rates = baseline_policy(scores, config.budget, config.t0, config.tf);
        }

        std::vector<VectorXd> paths(static_cast<std::size_t>(config.runs));
        std::vector<double> incent(static_cast<std::size_t>(config.runs));
        std::vector<double> final_organic(static_cast<std::size_t>(config.runs));
        std::vector<double> runtimes(static_cast<std::size_t>(config.runs));
        std::vector<std::optional<double>> milestones(static_cast<std::size_t>(config.runs));
        std::vector<ClampRecord> clamps(static_cast<std::size_t>(config.runs));
        std::vector<int> capped(static_cast<std::size_t>(config.runs), 0);

        parallel_for(static_cast<std::size_t>(config.runs), config.threads, [&](std::size_t r) {
            std::uint64_t run_seed = derive_seed(config.seed, static_cast<std::uint64_t>(r));
            SimulationResult result;
            switch (method) {
                case Method::Cheshire:
                    result = simulate_controlled(model, *policy, config.t0, config.tf, run_seed,
                                                 config.event_cap);
                    break;
                case Method::Prk:
                case Method::Deg:
                    result = simulate_constant_control(model, constant_rates, config.t0,
                                                       config.tf, run_seed, config.event_cap);
                    break;
                default:
                    result = simulate_uncontrolled(model, config.t0, config.tf, run_seed,
                                                   config.event_cap);
            }
            CountingPath path = counting_path(result.log, table.grid, EventKind::Organic);
            paths[r] = path.aggregate;
            incent[r] = static_cast<double>(result.incentivized_count);
            final_organic[r] = static_cast<double>(result.organic_count);
            runtimes[r] = result.runtime_seconds;
            capped[r] = result.capped ? 1 : 0;
            clamps[r] = result.control_record;
            if (config.milestone > 0) milestones[r] = milestone_time(result.log, config.milestone);
            if (log_dir) {
                std::string file = std::string(method_name(method)) + "-run" +
                                   std::to_string(r) + ".csv";
                save_log_csv(result.log, (*log_dir / file).string());
            }
        });

        const int g = static_cast<int>(table.grid.size());
        mm.mean_organic = VectorXd::Zero(g);
        mm.se_organic = VectorXd::Zero(g);
        std::vector<double> column(static_cast<std::size_t>(config.runs));
        for (int gi = 0; gi < g; ++gi) {
            for (int r = 0; r < config.runs; ++r)
                column[static_cast<std::size_t>(r)] = paths[static_cast<std::size_t>(r)][gi];
            double mean, se;
            detail::mean_se(column, mean, se);
            mm.mean_organic[gi] = mean;
            mm.se_organic[gi] = se;
        }
        detail::mean_se(incent, mm.mean_incentivized, mm.se_incentivized);
        detail::mean_se(final_organic, mm.mean_final_organic, mm.se_final_organic);
        double runtime_mean, runtime_se;
        detail::mean_se(runtimes, runtime_mean, runtime_se);
        mm.mean_runtime_seconds = runtime_mean;
        for (int r = 0; r < config.runs; ++r) {
            mm.capped_runs += capped[static_cast<std::size_t>(r)];
            mm.clamp.merge(clamps[static_cast<std::size_t>(r)]);
        }
        if (config.milestone > 0) {
            std::vector<double> reached;
            for (const auto& t : milestones)
                if (t) reached.push_back(*t);
            mm.milestone_reached = static_cast<int>(reached.size());
            if (!reached.empty()) detail::mean_se(reached, mm.milestone_mean, mm.milestone_se);
        }
        table.methods.push_back(std::move(mm));
    }

    if (!config.out_dir.empty()) {
        std::filesystem::create_directories(config.out_dir);
        save_metrics_json(table, (std::filesystem::path(config.out_dir) / "metrics.json").string());
        export_report(table, config.out_dir);
    }
    return table;
}

// ---- artifacts ----

namespace detail {

inline nlohmann::ordered_json method_json(const MethodMetrics& mm) {
    nlohmann::ordered_json j;
    j["name"] = method_name(mm.method);
    j["ok"] = mm.ok;
    if (!mm.note.empty()) j["note"] = mm.note;
    j["runs"] = mm.runs;
    j["mean_final_organic"] = mm.mean_final_organic;
    j["se_final_organic"] = mm.se_final_organic;
    j["mean_incentivized"] = mm.mean_incentivized;
    j["se_incentivized"] = mm.se_incentivized;
    j["capped_runs"] = mm.capped_runs;
    j["milestone_reached"] = mm.milestone_reached;
    if (std::isfinite(mm.milestone_mean)) {
        j["milestone_mean"] = mm.milestone_mean;
        j["milestone_se"] = mm.milestone_se;
    }
    if (!mm.clamp.empty()) {
        j["preclamp_min"] = mm.clamp.preclamp_min;
        j["max_control_intensity"] = mm.clamp.max_intensity;
    }
    if (std::isfinite(mm.calibration_multiplier)) {
        j["calibration_multiplier"] = mm.calibration_multiplier;
        j["calibration_achieved"] = mm.calibration_achieved;
    }
    j["mean_runtime_seconds"] = mm.mean_runtime_seconds;
    return j;
}

inline std::string svg_color(Method m) {
    switch (m) {
        case Method::Cheshire: return "#c0392b";
        case Method::Prk: return "#2980b9";
        case Method::Deg: return "#27ae60";
        default: return "#7f8c8d";
    }
}

} // namespace detail

inline void save_metrics_json(const MetricsTable& table, const std::string& path) {
    nlohmann::ordered_json j;
    j["t0"] = table.t0;
    j["tf"] = table.tf;
    j["budget"] = table.budget;
    j["runs"] = table.runs;
    j["seed"] = table.seed;
    j["milestone"] = table.milestone;
    j["grid"] = table.grid;
    j["methods"] = nlohmann::ordered_json::array();
    for (const MethodMetrics& mm : table.methods) {
        nlohmann::ordered_json mj = detail::method_json(mm);
        mj["mean_organic"] = std::vector<double>(mm.mean_organic.data(),
                                                 mm.mean_organic.data() + mm.mean_organic.size());
        mj["se_organic"] =
            std::vector<double>(mm.se_organic.data(), mm.se_organic.data() + mm.se_organic.size());
        j["methods"].push_back(std::move(mj));
    }
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write metrics file: " + path);
    out << j.dump(2) << "\n";
}

inline MetricsTable load_metrics_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open metrics file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("metrics file: " + std::string(e.what()));
    }
    try {
        MetricsTable table;
        table.t0 = j.at("t0").get<double>();
        table.tf = j.at("tf").get<double>();
        table.budget = j.at("budget").get<double>();
        table.runs = j.at("runs").get<int>();
        table.seed = j.at("seed").get<std::uint64_t>();
        table.milestone = j.at("milestone").get<std::int64_t>();
        table.grid = j.at("grid").get<std::vector<double>>();
        for (const auto& mj : j.at("methods")) {
            MethodMetrics mm;
            mm.method = method_from_name(mj.at("name").get<std::string>());
            mm.ok = mj.at("ok").get<bool>();
            if (mj.contains("note")) mm.note = mj["note"].get<std::string>();
            mm.runs = mj.at("runs").get<int>();
            mm.mean_final_organic = mj.at("mean_final_organic").get<double>();
            mm.se_final_organic = mj.at("se_final_organic").get<double>();
            mm.mean_incentivized = mj.at("mean_incentivized").get<double>();
            mm.se_incentivized = mj.at("se_incentivized").get<double>();
            mm.capped_runs = mj.at("capped_runs").get<int>();
            mm.milestone_reached = mj.at("milestone_reached").get<int>();
            if (mj.contains("milestone_mean")) {
                mm.milestone_mean = mj["milestone_mean"].get<double>();
                mm.milestone_se = mj["milestone_se"].get<double>();
            }
            if (mj.contains("preclamp_min")) {
                mm.clamp.preclamp_min = mj["preclamp_min"].get<double>();
                mm.clamp.max_intensity = mj["max_control_intensity"].get<double>();
            }
            if (mj.contains("calibration_multiplier")) {
                mm.calibration_multiplier = mj["calibration_multiplier"].get<double>();
                mm.calibration_achieved = mj["calibration_achieved"].get<double>();
            }
            mm.mean_runtime_seconds = mj.at("mean_runtime_seconds").get<double>();
            auto mean = mj.at("mean_organic").get<std::vector<double>>();
            auto se = mj.at("se_organic").get<std::vector<double>>();
            if (mean.size() != table.grid.size() || se.size() != table.grid.size())
                throw DataError("metrics file: series length does not match grid");
            mm.mean_organic = Eigen::Map<const VectorXd>(mean.data(),
                                                         static_cast<int>(mean.size()));
            mm.se_organic = Eigen::Map<const VectorXd>(se.data(), static_cast<int>(se.size()));
            table.methods.push_back(std::move(mm));
        }
        return table;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("metrics file: " + std::string(e.what()));
    }
}

inline void export_report(const MetricsTable& table, const std::string& dir) {
    if (table.methods.empty()) throw ConfigError("report: no method arms to export");
    if (table.grid.size() < 2) throw ConfigError("report: metric grid is too short");
    std::filesystem::create_directories(dir);
    std::filesystem::path base(dir);

    { // report.csv: one row per (method, grid time)
        std::ofstream csv(base / "report.csv");
        if (!csv) throw ConfigError("cannot write report.csv in " + dir);
        csv << "t,method,mean,stderr\n";
        for (const MethodMetrics& mm : table.methods) {
            if (!mm.ok) continue;
            for (std::size_t gi = 0; gi < table.grid.size(); ++gi)
                csv << detail::format_double(table.grid[gi]) << "," << method_name(mm.method)
                    << "," << detail::format_double(mm.mean_organic[static_cast<int>(gi)]) << ","
                    << detail::format_double(mm.se_organic[static_cast<int>(gi)]) << "\n";
        }
    }

    { // report.svg: mean curves with +-1 SE bands
        const double width = 720, height = 440;
        const double ml = 70, mr = 160, mt = 30, mb = 50;
        double y_max = 1.0;
        for (const MethodMetrics& mm : table.methods) {
            if (!mm.ok) continue;
            for (int gi = 0; gi < mm.mean_organic.size(); ++gi)
                y_max = std::max(y_max, mm.mean_organic[gi] + mm.se_organic[gi]);
        }
        y_max *= 1.05;
        double x0 = table.grid.front(), x1 = table.grid.back();
        auto px = [&](double t) { return ml + (t - x0) / (x1 - x0) * (width - ml - mr); };
        auto py = [&](double y) { return height - mb - y / y_max * (height - mt - mb); };
        auto fmt = [](double v) { return detail::format_double(v, "%.2f"); };

        std::string svg;
        svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"720\" height=\"440\" "
               "viewBox=\"0 0 720 440\">\n";
        svg += "<rect width=\"720\" height=\"440\" fill=\"#ffffff\"/>\n";
        svg += "<g stroke=\"#333333\" stroke-width=\"1\">";
        svg += "<line x1=\"" + fmt(ml) + "\" y1=\"" + fmt(height - mb) + "\" x2=\"" +
               fmt(width - mr) + "\" y2=\"" + fmt(height - mb) + "\"/>";
        svg += "<line x1=\"" + fmt(ml) + "\" y1=\"" + fmt(mt) + "\" x2=\"" + fmt(ml) +
               "\" y2=\"" + fmt(height - mb) + "\"/>";
        svg += "</g>\n";
        for (int tick = 0; tick <= 4; ++tick) {
            double t = x0 + (x1 - x0) * tick / 4.0;
            double y = y_max * tick / 4.0 / 1.05;
            svg += "<line x1=\"" + fmt(px(t)) + "\" y1=\"" + fmt(height - mb) + "\" x2=\"" +
                   fmt(px(t)) + "\" y2=\"" + fmt(height - mb + 5) +
                   "\" stroke=\"#333333\" stroke-width=\"1\"/>";
            svg += "<text x=\"" + fmt(px(t)) + "\" y=\"" + fmt(height - mb + 20) +
                   "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#333333\" "
                   "text-anchor=\"middle\">" +
                   detail::format_double(t, "%.3g") + "</text>";
            svg += "<line x1=\"" + fmt(ml - 5) + "\" y1=\"" + fmt(py(y)) + "\" x2=\"" + fmt(ml) +
                   "\" y2=\"" + fmt(py(y)) + "\" stroke=\"#333333\" stroke-width=\"1\"/>";
            svg += "<text x=\"" + fmt(ml - 9) + "\" y=\"" + fmt(py(y) + 4) +
                   "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#333333\" "
                   "text-anchor=\"end\">" +
                   detail::format_double(y, "%.3g") + "</text>\n";
        }
        svg += "<text x=\"" + fmt((ml + width - mr) / 2) + "\" y=\"" + fmt(height - 12) +
               "\" font-family=\"sans-serif\" font-size=\"13\" fill=\"#333333\" "
               "text-anchor=\"middle\">time</text>";
        svg += "<text x=\"18\" y=\"" + fmt((mt + height - mb) / 2) +
               "\" font-family=\"sans-serif\" font-size=\"13\" fill=\"#333333\" "
               "text-anchor=\"middle\" transform=\"rotate(-90 18 " +
               fmt((mt + height - mb) / 2) + ")\">mean organic count</text>\n";

        double legend_y = mt + 10;
        for (const MethodMetrics& mm : table.methods) {
            if (!mm.ok) continue;
            std::string color = detail::svg_color(mm.method);
            std::string band = "<polygon fill=\"" + color + "\" fill-opacity=\"0.15\" "
                               "stroke=\"none\" points=\"";
            for (std::size_t gi = 0; gi < table.grid.size(); ++gi)
                band += fmt(px(table.grid[gi])) + "," +
                        fmt(py(mm.mean_organic[static_cast<int>(gi)] +
                               mm.se_organic[static_cast<int>(gi)])) +
                        " ";
            for (std::size_t gi = table.grid.size(); gi-- > 0;)
                band += fmt(px(table.grid[gi])) + "," +
                        fmt(py(std::max(0.0, mm.mean_organic[static_cast<int>(gi)] -
                                                 mm.se_organic[static_cast<int>(gi)]))) +
                        " ";
            band += "\"/>\n";
            svg += band;
            std::string line = "<polyline fill=\"none\" stroke=\"" + color +
                               "\" stroke-width=\"2\" points=\"";
            for (std::size_t gi = 0; gi < table.grid.size(); ++gi)
                line += fmt(px(table.grid[gi])) + "," +
                        fmt(py(mm.mean_organic[static_cast<int>(gi)])) + " ";
            line += "\"/>\n";
            svg += line;
            svg += "<rect x=\"" + fmt(width - mr + 14) + "\" y=\"" + fmt(legend_y - 9) +
                   "\" width=\"18\" height=\"4\" fill=\"" + color + "\"/>";
            svg += "<text x=\"" + fmt(width - mr + 38) + "\" y=\"" + fmt(legend_y - 2) +
                   "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#333333\">" +
                   method_name(mm.method) + "</text>\n";
            legend_y += 20;
        }
        svg += "</svg>\n";

        std::ofstream out(base / "report.svg");
        if (!out) throw ConfigError("cannot write report.svg in " + dir);
        out << svg;
    }

    { // summary.json: scalar roll-up per method
        nlohmann::ordered_json j;
        j["t0"] = table.t0;
        j["tf"] = table.tf;
        j["budget"] = table.budget;
        j["runs"] = table.runs;
        j["seed"] = table.seed;
        j["milestone"] = table.milestone;
        j["methods"] = nlohmann::ordered_json::array();
        for (const MethodMetrics& mm : table.methods)
            j["methods"].push_back(detail::method_json(mm));
        std::ofstream out(base / "summary.json");
        if (!out) throw ConfigError("cannot write summary.json in " + dir);
        out << j.dump(2) << "\n";
    }
}

// ---- config file ----

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
    ExperimentConfig config;
    try {
        if (j.contains("model")) config.model_file = j["model"].get<std::string>();
        if (j.contains("generator")) {
            const auto& gj = j["generator"];
            GeneratorSpec spec;
            if (gj.contains("preset")) spec = preset_generator(gj["preset"].get<std::string>());
            if (gj.contains("theta")) {
                auto theta = gj["theta"].get<std::vector<std::vector<double>>>();
                if (theta.size() != 2 || theta[0].size() != 2 || theta[1].size() != 2)
                    throw ConfigError("generator.theta must be 2x2");
                for (int r = 0; r < 2; ++r)
                    for (int c = 0; c < 2; ++c) spec.kron.theta[r][c] = theta[r][c];
            }
            if (gj.contains("k")) spec.kron.k = gj["k"].get<int>();
            if (gj.contains("omega")) spec.ranges.omega = gj["omega"].get<double>();
            if (gj.contains("a_range")) {
                auto r = gj["a_range"].get<std::vector<double>>();
                if (r.size() != 2) throw ConfigError("generator.a_range must have two entries");
                spec.ranges.a_low = r[0];
                spec.ranges.a_high = r[1];
            }
            if (gj.contains("mu_range")) {
                auto r = gj["mu_range"].get<std::vector<double>>();
                if (r.size() != 2) throw ConfigError("generator.mu_range must have two entries");
                spec.ranges.mu_low = r[0];
                spec.ranges.mu_high = r[1];
            }
            if (gj.contains("active_fraction"))
                spec.ranges.active_fraction = gj["active_fraction"].get<double>();
            if (gj.contains("seed")) spec.seed = gj["seed"].get<std::uint64_t>();
            config.generator = spec;
        }
        if (j.contains("horizon")) {
            config.t0 = j["horizon"].value("t0", 0.0);
            config.tf = j["horizon"].at("tf").get<double>();
        }
        if (j.contains("methods"))
            for (const auto& name : j["methods"])
                config.methods.push_back(method_from_name(name.get<std::string>()));
        config.budget = j.value("budget", config.budget);
        config.runs = j.value("runs", config.runs);
        config.seed = j.value("seed", config.seed);
        config.event_cap = j.value("event_cap", config.event_cap);
        config.milestone = j.value("milestone", config.milestone);
        config.grid_points = j.value("grid_points", config.grid_points);
        config.threads = j.value("threads", config.threads);
        config.save_logs = j.value("save_logs", config.save_logs);
        if (j.contains("lambda0"))
            throw ConfigError("experiment: lambda0 override is not supported here; "
                              "initial intensity equals mu0");
        if (j.contains("control")) {
            const auto& cj = j["control"];
            auto diag = [&](const char* key, double& scale, VectorXd& vec) {
                if (!cj.contains(key)) return;
                if (cj[key].is_number()) {
                    scale = cj[key].get<double>();
                } else {
                    auto values = cj[key].get<std::vector<double>>();
                    vec = Eigen::Map<const VectorXd>(values.data(),
                                                     static_cast<int>(values.size()));
                }
            };
            diag("q", config.q_scale, config.q_diag);
            diag("s", config.s_scale, config.s_diag);
            diag("f", config.f_scale, config.f_diag);
            config.control_grid_steps = cj.value("grid_steps", config.control_grid_steps);
        }
        if (j.contains("calibration")) {
            const auto& cj = j["calibration"];
            config.calibration_runs = cj.value("runs", config.calibration_runs);
            config.calibration_tol = cj.value("tol", config.calibration_tol);
            config.calibration_event_cap = cj.value("event_cap", config.calibration_event_cap);
        }
        if (j.contains("out_dir")) config.out_dir = j["out_dir"].get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("experiment config: " + std::string(e.what()));
    }
    return config;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file " + path + ": " + std::string(e.what()));
    }
    return experiment_config_from_json(j);
}

} // namespace cheshire
