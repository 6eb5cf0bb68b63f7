#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cheshire/model.hpp"
#include "cheshire/rng.hpp"

namespace cheshire {

// Directed graph as an edge list over users 0..n-1. Edge (src, dst) means
// src's events excite dst, i.e. influence entry A[dst][src] is nonzero.
struct Graph {
    int n = 0;
    std::vector<std::pair<int, int>> edges;

    void validate() const {
        if (n < 1) throw DataError("graph: n must be positive");
        for (auto [s, d] : edges)
            if (s < 0 || s >= n || d < 0 || d >= n)
                throw DataError("graph: edge endpoint out of range");
    }
};

// 2x2 stochastic Kronecker initiator, expanded k times to n = 2^k nodes.
struct KroneckerSeed {
    double theta[2][2];
    int k = 1;

    void validate() const {
        if (k < 1 || k > 20) throw ConfigError("kronecker: k must be in [1, 20]");
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                if (!(theta[i][j] >= 0.0 && theta[i][j] <= 1.0))
                    throw ConfigError("kronecker: initiator entries must lie in [0, 1]");
    }

    int nodes() const { return 1 << k; }
};

// Edge probability of i -> j: the product of initiator entries indexed by the
// bit pairs of (i, j), walked most-significant bit first.
inline double kronecker_edge_probability(const KroneckerSeed& seed, int i, int j) {
    double p = 1.0;
    for (int level = seed.k - 1; level >= 0; --level)
        p *= seed.theta[(i >> level) & 1][(j >> level) & 1];
    return p;
}

// Independent Bernoulli draw per ordered pair, in row-major pair order so a
// fixed seed fixes the graph. Self-loops are skipped (a user does not excite
// itself through the network term).
inline Graph kronecker_graph(const KroneckerSeed& seed, Rng& rng) {
    seed.validate();
    Graph graph;
    graph.n = seed.nodes();
    for (int i = 0; i < graph.n; ++i)
        for (int j = 0; j < graph.n; ++j) {
            if (i == j) continue;
            if (rng.uniform() < kronecker_edge_probability(seed, i, j))
                graph.edges.emplace_back(i, j);
        }
    return graph;
}

// Ranges for the random model parameters drawn on top of a graph topology.
struct ParameterRanges {
    double a_low = 0.0, a_high = 1.0;   // influence weight per edge, U(a_low, a_high)
    double mu_low = 0.0, mu_high = 1.0; // baseline rate per active user
    double active_fraction = 1.0;       // fraction of users with nonzero baseline
    double omega = 1.0;                 // kernel decay

    void validate() const {
        if (!(a_high >= a_low) || a_low < 0.0) throw ConfigError("parameters: bad A range");
        if (!(mu_high >= mu_low) || mu_low < 0.0) throw ConfigError("parameters: bad mu range");
        if (!(active_fraction >= 0.0 && active_fraction <= 1.0))
            throw ConfigError("parameters: active_fraction must be in [0, 1]");
        if (!(omega > 0.0)) throw ConfigError("parameters: omega must be positive");
    }
};

// Draw order is pinned: one uniform per edge in edge-list order, then the
// active set (sampled without replacement), then one uniform per active user
// in ascending user order. Same seed, same model.
inline NetworkModel sample_parameters(const Graph& graph, const ParameterRanges& ranges,
                                      Rng& rng) {
    graph.validate();
    ranges.validate();
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(graph.edges.size());
    for (auto [src, dst] : graph.edges)
        triplets.emplace_back(dst, src, rng.uniform(ranges.a_low, ranges.a_high));
    auto active = static_cast<std::size_t>(std::floor(ranges.active_fraction * graph.n));
    std::vector<std::size_t> chosen =
        sample_without_replacement(static_cast<std::size_t>(graph.n), active, rng);
    std::sort(chosen.begin(), chosen.end());
    VectorXd mu = VectorXd::Zero(graph.n);
    for (std::size_t user : chosen)
        mu[static_cast<int>(user)] = rng.uniform(ranges.mu_low, ranges.mu_high);
    return NetworkModel::from_triplets(graph.n, triplets, mu, ranges.omega);
}

struct PageRankResult {
    VectorXd scores;
    bool converged = false;
    int iterations = 0;
};

// Power iteration on the standard random-surfer chain: out-links split a
// node's mass evenly, dangling nodes teleport uniformly, damping mixes in the
// uniform jump. Stops when the l1 change drops below tol; a non-converged
// run returns the last iterate with the flag down.
inline PageRankResult pagerank(const Graph& graph, double damping = 0.85, double tol = 1e-12,
                               int max_iters = 10000) {
    graph.validate();
    if (!(damping >= 0.0 && damping < 1.0)) throw ConfigError("pagerank: damping must be in [0, 1)");
    const int n = graph.n;
    std::vector<std::vector<int>> out(static_cast<std::size_t>(n));
    for (auto [src, dst] : graph.edges) out[static_cast<std::size_t>(src)].push_back(dst);

    PageRankResult result;
    VectorXd x = VectorXd::Constant(n, 1.0 / n);
    VectorXd next(n);
    for (int iter = 1; iter <= max_iters; ++iter) {
        double dangling = 0.0;
        next.setZero();
        for (int v = 0; v < n; ++v) {
            const auto& targets = out[static_cast<std::size_t>(v)];
            if (targets.empty()) {
                dangling += x[v];
                continue;
            }
            double share = x[v] / static_cast<double>(targets.size());
            for (int u : targets) next[u] += share;
        }
        next = damping * (next.array() + dangling / n) + (1.0 - damping) / n;
        next /= next.sum(); // mass is conserved analytically; scrub fp drift
        double change = (next - x).cwiseAbs().sum();
        x.swap(next);
        result.iterations = iter;
        if (change <= tol) {
            result.converged = true;
            break;
        }
    }
    result.scores = std::move(x);
    return result;
}

inline VectorXd out_degree_scores(const Graph& graph) {
    graph.validate();
    VectorXd scores = VectorXd::Zero(graph.n);
    for (auto [src, dst] : graph.edges) {
        (void)dst;
        scores[src] += 1.0;
    }
    return scores;
}

// Constant incentive rates proportional to the scores, normalized so the
// expected number of incentivized events over [t0, tf] equals the budget.
inline VectorXd baseline_policy(const VectorXd& scores, double budget, double t0, double tf) {
    if (!(tf > t0)) throw ConfigError("baseline_policy: tf must exceed t0");
    if (budget < 0.0) throw ConfigError("baseline_policy: budget must be nonnegative");
    if ((scores.array() < 0.0).any())
        throw ConfigError("baseline_policy: scores must be nonnegative");
    double total = scores.sum();
    if (!(total > 0.0))
        throw ConfigError("baseline_policy: scores are all zero, no users to target");
    return scores * (budget / (total * (tf - t0)));
}

// Support graph of a model: edge u -> v wherever A[v][u] > 0.
inline Graph support_graph(const NetworkModel& model) {
    Graph graph;
    graph.n = model.n();
    const SparseMat& a = model.influence();
    for (int c = 0; c < a.outerSize(); ++c)
        for (SparseMat::InnerIterator it(a, c); it; ++it)
            if (it.value() > 0.0) graph.edges.emplace_back(c, static_cast<int>(it.row()));
    return graph;
}

// ---- edge-list file: "# n=<count>" header then "src dst" per line ----

inline void save_graph_file(const Graph& graph, const std::string& path) {
    graph.validate();
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write graph file: " + path);
    out << "# n=" << graph.n << "\n";
    for (auto [src, dst] : graph.edges) out << src << " " << dst << "\n";
    if (!out) throw ConfigError("failed writing graph file: " + path);
}

inline Graph load_graph_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open graph file: " + path);
    std::string line;
    Graph graph;
    bool have_n = false;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            auto pos = line.find("n=");
            if (pos != std::string::npos) {
                graph.n = std::stoi(line.substr(pos + 2));
                have_n = true;
            }
            continue;
        }
        std::istringstream row(line);
        int src, dst;
        if (!(row >> src >> dst))
            throw DataError("graph file: malformed edge at line " + std::to_string(line_no));
        graph.edges.emplace_back(src, dst);
    }
    if (!have_n) throw DataError("graph file: missing '# n=<count>' header");
    graph.validate();
    return graph;
}

} // namespace cheshire
