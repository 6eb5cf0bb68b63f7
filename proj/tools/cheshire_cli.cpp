// Command-line front end: network generation, simulation, policy solving,
// experiment runs, fitting, and report rendering.

#include <CLI11.hpp>

#include <fnmatch.h>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "cheshire/cheshire_all.hpp"

namespace fs = std::filesystem;
using namespace cheshire;

namespace {

// "0.5" -> uniform diagonal; "@rates.csv" -> one value per line (or comma
// separated), length n.
VectorXd parse_diag(const std::string& text, int n, const std::string& flag) {
    if (!text.empty() && text[0] == '@') {
        std::ifstream in(text.substr(1));
        if (!in) throw ConfigError(flag + ": cannot open " + text.substr(1));
        std::vector<double> values;
        std::string token;
        while (std::getline(in, token, '\n')) {
            std::istringstream line(token);
            std::string cell;
            while (std::getline(line, cell, ',')) {
                if (cell.empty() || cell == "\r") continue;
                values.push_back(std::stod(cell));
            }
        }
        if (static_cast<int>(values.size()) != n)
            throw ConfigError(flag + ": expected " + std::to_string(n) + " values, got " +
                              std::to_string(values.size()));
        return Eigen::Map<const VectorXd>(values.data(), n);
    }
    try {
        return uniform_diagonal(n, std::stod(text));
    } catch (const std::exception&) {
        throw ConfigError(flag + ": expected a number or @file, got '" + text + "'");
    }
}

std::vector<double> parse_list(const std::string& text, const std::string& flag) {
    std::vector<double> values;
    std::istringstream in(text);
    std::string cell;
    while (std::getline(in, cell, ',')) {
        if (cell.empty()) continue;
        try {
            values.push_back(std::stod(cell));
        } catch (const std::exception&) {
            throw ConfigError(flag + ": bad number '" + cell + "'");
        }
    }
    if (values.empty()) throw ConfigError(flag + ": empty list");
    return values;
}

std::vector<std::string> expand_glob(const std::string& pattern) {
    fs::path p(pattern);
    fs::path dir = p.parent_path().empty() ? fs::path(".") : p.parent_path();
    std::string name = p.filename().string();
    std::vector<std::string> matches;
    if (name.find('*') == std::string::npos && name.find('?') == std::string::npos) {
        matches.push_back(pattern);
        return matches;
    }
    if (!fs::is_directory(dir)) throw ConfigError("--logs: no such directory: " + dir.string());
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string base = entry.path().filename().string();
        if (fnmatch(name.c_str(), base.c_str(), 0) == 0)
            matches.push_back(entry.path().string());
    }
    std::sort(matches.begin(), matches.end());
    if (matches.empty()) throw ConfigError("--logs: nothing matches " + pattern);
    return matches;
}

fs::path resolve_out(const std::string& out, const std::string& out_dir,
                     const std::string& fallback) {
    fs::path path = out.empty() ? fs::path(fallback) : fs::path(out);
    if (!out_dir.empty() && path.is_relative()) path = fs::path(out_dir) / path;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    return path;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hawkes activity shaping: simulation, optimal control, estimation"};
    app.require_subcommand(1);

    std::uint64_t seed = 0;
    int threads = 1;
    std::string out_dir;
    app.add_option("--seed", seed, "master RNG seed");
    app.add_option("--threads", threads, "worker threads for runs and omega grids");
    app.add_option("--out-dir", out_dir, "directory for output files");
    app.fallthrough();

    // gen-net
    auto* gen = app.add_subcommand("gen-net", "generate a Kronecker network model");
    std::string seed_matrix, preset, gen_out = "model.json", graph_out;
    int gen_k = 6;
    std::uint64_t rng_seed = 1;
    double gen_omega = -1.0, active_fraction = -1.0;
    std::string a_range, mu_range;
    gen->add_option("--seed-matrix", seed_matrix, "initiator entries a,b,c,d (row-major)");
    gen->add_option("--preset", preset, "named preset (core-periphery-64, dissortative-64, "
                                        "assortative, dissortative, random, hierarchical, "
                                        "core-periphery)");
    gen->add_option("--k", gen_k, "Kronecker power (n = 2^k)");
    gen->add_option("--rng-seed", rng_seed, "generation seed");
    gen->add_option("--omega", gen_omega, "kernel decay");
    gen->add_option("--a-range", a_range, "influence range lo,hi");
    gen->add_option("--mu-range", mu_range, "baseline range lo,hi");
    gen->add_option("--active-fraction", active_fraction, "fraction of users with mu > 0");
    gen->add_option("--out", gen_out, "model JSON path");
    gen->add_option("--graph-out", graph_out, "also write the edge list here");

    // sim
    auto* sim = app.add_subcommand("sim", "simulate one trajectory");
    std::string sim_model, sim_policy, sim_rates, sim_out = "events.csv";
    double sim_t0 = 0.0, sim_tf = 1.0;
    std::size_t sim_cap = 1000000;
    sim->add_option("--model", sim_model, "model JSON")->required();
    sim->add_option("--t0", sim_t0, "start time");
    sim->add_option("--tf", sim_tf, "end time")->required();
    sim->add_option("--policy", sim_policy, "policy file: run closed-loop control");
    sim->add_option("--rates", sim_rates, "constant incentive rates (number or @file)");
    sim->add_option("--cap", sim_cap, "event cap");
    sim->add_option("--out", sim_out, "event CSV path");

    // policy
    auto* pol = app.add_subcommand("policy", "solve the feedback policy");
    std::string pol_model, pol_q = "1", pol_s = "1", pol_f = "1", pol_out = "policy.bin";
    double pol_t0 = 0.0, pol_tf = 1.0;
    int pol_grid = 2000;
    pol->add_option("--model", pol_model, "model JSON")->required();
    pol->add_option("--t0", pol_t0, "horizon start");
    pol->add_option("--tf", pol_tf, "horizon end")->required();
    pol->add_option("--q", pol_q, "state weight (number or @file)");
    pol->add_option("--s", pol_s, "control cost (number or @file)");
    pol->add_option("--f", pol_f, "terminal weight (number or @file)");
    pol->add_option("--grid-steps", pol_grid, "solver grid intervals");
    pol->add_option("--out", pol_out, "policy file path");

    // run
    auto* run = app.add_subcommand("run", "run an experiment config");
    std::string run_config;
    std::int64_t run_milestone = -1;
    double run_budget = -1.0;
    run->add_option("--config", run_config, "experiment config JSON")->required();
    run->add_option("--milestone", run_milestone, "override the organic-count milestone");
    run->add_option("--budget", run_budget, "override the incentive budget");

    // fit
    auto* fit = app.add_subcommand("fit", "fit a Hawkes model from event logs");
    std::string fit_logs, fit_support, fit_omega = "1", fit_out = "fitted.json";
    double fit_l2 = 0.0, fit_holdout = 0.2, fit_t0 = 0.0, fit_tf = 0.0;
    int fit_iters = 500, fit_n = 0;
    fit->add_option("--logs", fit_logs, "event CSV path or glob")->required();
    fit->add_option("--support", fit_support, "graph file fixing the influence support");
    fit->add_option("--n", fit_n, "user count (default: support graph, else max user + 1)");
    fit->add_option("--t0", fit_t0, "observation window start");
    fit->add_option("--tf", fit_tf, "observation window end")->required();
    fit->add_option("--omega-grid", fit_omega, "candidate decays, comma separated");
    fit->add_option("--l2", fit_l2, "ridge penalty on influence entries");
    fit->add_option("--holdout", fit_holdout, "trailing fraction scored for omega selection");
    fit->add_option("--max-iters", fit_iters, "ascent iteration cap");
    fit->add_option("--out", fit_out, "fitted model JSON path");

    // report
    auto* rep = app.add_subcommand("report", "re-render report artifacts from metrics.json");
    std::string rep_metrics = "metrics.json";
    rep->add_option("--metrics", rep_metrics, "metrics JSON path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help / --version
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (gen->parsed()) {
            GeneratorSpec spec;
            if (!preset.empty()) spec = preset_generator(preset);
            if (!seed_matrix.empty()) {
                auto entries = parse_list(seed_matrix, "--seed-matrix");
                if (entries.size() != 4)
                    throw ConfigError("--seed-matrix needs four entries a,b,c,d");
                spec.kron.theta[0][0] = entries[0];
                spec.kron.theta[0][1] = entries[1];
                spec.kron.theta[1][0] = entries[2];
                spec.kron.theta[1][1] = entries[3];
            } else if (preset.empty()) {
                throw ConfigError("gen-net needs --seed-matrix or --preset");
            }
            if (gen->count("--k")) spec.kron.k = gen_k;
            if (gen_omega > 0.0) spec.ranges.omega = gen_omega;
            if (!a_range.empty()) {
                auto r = parse_list(a_range, "--a-range");
                if (r.size() != 2) throw ConfigError("--a-range needs lo,hi");
                spec.ranges.a_low = r[0];
                spec.ranges.a_high = r[1];
            }
            if (!mu_range.empty()) {
                auto r = parse_list(mu_range, "--mu-range");
                if (r.size() != 2) throw ConfigError("--mu-range needs lo,hi");
                spec.ranges.mu_low = r[0];
                spec.ranges.mu_high = r[1];
            }
            if (active_fraction >= 0.0) spec.ranges.active_fraction = active_fraction;
            spec.seed = rng_seed;

            Rng rng(derive_seed(spec.seed, 0x4e4554u));
            Graph graph = kronecker_graph(spec.kron, rng);
            NetworkModel model = sample_parameters(graph, spec.ranges, rng);
            fs::path model_path = resolve_out(gen_out, out_dir, "model.json");
            save_model_file(model, model_path.string());
            if (!graph_out.empty())
                save_graph_file(graph, resolve_out(graph_out, out_dir, graph_out).string());
            BranchingReport stability = branching_check(model);
            nlohmann::ordered_json j;
            j["model"] = model_path.string();
            j["n"] = model.n();
            j["edges"] = graph.edges.size();
            j["spectral_ratio"] = stability.rho;
            j["supercritical"] = stability.supercritical;
            std::cout << j.dump(2) << "\n";
        } else if (sim->parsed()) {
            NetworkModel model = load_model_file(sim_model);
            if (!sim_policy.empty() && !sim_rates.empty())
                throw ConfigError("sim: --policy and --rates are mutually exclusive");
            SimulationResult result;
            if (!sim_policy.empty()) {
                FeedbackPolicy policy = FeedbackPolicy::load(model, sim_policy);
                result = simulate_controlled(model, policy, sim_t0, sim_tf, seed, sim_cap);
            } else if (!sim_rates.empty()) {
                VectorXd rates = parse_diag(sim_rates, model.n(), "--rates");
                result = simulate_constant_control(model, rates, sim_t0, sim_tf, seed, sim_cap);
            } else {
                result = simulate_uncontrolled(model, sim_t0, sim_tf, seed, sim_cap);
            }
            fs::path out_path = resolve_out(sim_out, out_dir, "events.csv");
            save_log_csv(result.log, out_path.string());
            nlohmann::ordered_json j;
            j["log"] = out_path.string();
            j["organic_count"] = result.organic_count;
            j["incentivized_count"] = result.incentivized_count;
            j["capped"] = result.capped;
            j["seed"] = seed;
            std::cout << j.dump(2) << "\n";
        } else if (pol->parsed()) {
            NetworkModel model = load_model_file(pol_model);
            ControlConfig config;
            config.t0 = pol_t0;
            config.tf = pol_tf;
            config.grid_steps = pol_grid;
            config.q = parse_diag(pol_q, model.n(), "--q");
            config.s = parse_diag(pol_s, model.n(), "--s");
            config.f = parse_diag(pol_f, model.n(), "--f");
            FeedbackPolicy policy = FeedbackPolicy::solve(model, config);
            fs::path out_path = resolve_out(pol_out, out_dir, "policy.bin");
            policy.save(out_path.string());
            nlohmann::ordered_json j;
            j["policy"] = out_path.string();
            j["grid_points"] = policy.grid_points();
            std::cout << j.dump(2) << "\n";
        } else if (run->parsed()) {
            ExperimentConfig config = load_experiment_config(run_config);
            if (!out_dir.empty()) config.out_dir = out_dir;
            if (app.count("--seed")) config.seed = seed;
            if (app.count("--threads")) config.threads = threads;
            if (run_milestone >= 0) config.milestone = run_milestone;
            if (run_budget >= 0.0) config.budget = run_budget;
            MetricsTable table = run_experiment(config);
            for (const MethodMetrics& mm : table.methods) {
                std::fprintf(stdout, "%-13s", method_name(mm.method));
                if (!mm.ok) {
                    std::fprintf(stdout, " aborted: %s\n", mm.note.c_str());
                    continue;
                }
                std::fprintf(stdout,
                             " organic %10.1f +- %-8.1f incentivized %9.1f +- %-7.1f capped %d\n",
                             mm.mean_final_organic, mm.se_final_organic, mm.mean_incentivized,
                             mm.se_incentivized, mm.capped_runs);
            }
            if (!config.out_dir.empty())
                std::fprintf(stdout, "artifacts in %s\n", config.out_dir.c_str());
        } else if (fit->parsed()) {
            std::vector<SupportEntry> support;
            Graph support_graph_file;
            bool have_support = !fit_support.empty();
            if (have_support) support_graph_file = load_graph_file(fit_support);
            int n = fit_n > 0 ? fit_n : (have_support ? support_graph_file.n : 0);
            std::vector<std::string> paths = expand_glob(fit_logs);
            if (n == 0) { // infer from the data: max user index + 1
                for (const std::string& path : paths) {
                    std::ifstream in(path);
                    if (!in) throw ConfigError("cannot open event log: " + path);
                    std::string line;
                    std::getline(in, line);
                    while (std::getline(in, line)) {
                        std::size_t c1 = line.find(',');
                        std::size_t c2 = c1 == std::string::npos ? c1 : line.find(',', c1 + 1);
                        if (c2 == std::string::npos) continue;
                        n = std::max(n, std::stoi(line.substr(c1 + 1, c2 - c1 - 1)) + 1);
                    }
                }
                if (n == 0) throw ConfigError("fit: no events found; pass --n explicitly");
            }
            std::vector<EventLog> logs;
            for (const std::string& path : paths)
                logs.push_back(load_log_csv(path, n, fit_t0, fit_tf));
            if (have_support) {
                if (support_graph_file.n != n)
                    throw ConfigError("fit: support graph n does not match the logs");
                support.reserve(support_graph_file.edges.size());
                for (auto [src, dst] : support_graph_file.edges)
                    support.push_back(SupportEntry{dst, src});
            }
            FitConfig config;
            config.omega_grid = parse_list(fit_omega, "--omega-grid");
            config.l2_penalty = fit_l2;
            config.holdout_fraction = fit_holdout;
            config.max_iters = fit_iters;
            config.threads = threads;
            FitResult result = fit_mle(logs, support, config);
            fs::path out_path = resolve_out(fit_out, out_dir, "fitted.json");
            save_model_file(result.model, out_path.string());
            nlohmann::ordered_json j;
            j["model"] = out_path.string();
            j["omega"] = result.omega;
            j["log_likelihood"] = result.full_ll;
            if (std::isfinite(result.heldout_ll)) j["heldout_ll"] = result.heldout_ll;
            j["converged"] = result.converged;
            j["iterations"] = result.iterations;
            std::cout << j.dump(2) << "\n";
        } else if (rep->parsed()) {
            fs::path metrics_path(rep_metrics);
            if (!fs::exists(metrics_path) && !out_dir.empty())
                metrics_path = fs::path(out_dir) / rep_metrics;
            MetricsTable table = load_metrics_json(metrics_path.string());
            std::string dir = out_dir.empty()
                                  ? (metrics_path.has_parent_path()
                                         ? metrics_path.parent_path().string()
                                         : std::string("."))
                                  : out_dir;
            export_report(table, dir);
            std::fprintf(stdout, "report rendered in %s\n", dir.c_str());
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const SolverError& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
