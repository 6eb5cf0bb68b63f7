#include <catch2/catch_amalgamated.hpp>

#include "cheshire/estimate.hpp"
#include "cheshire/simulate.hpp"
#include "support/random_models.hpp"

#include <cmath>

using namespace cheshire;

namespace {

// n = 2 ground truth with cross excitation
NetworkModel truth_2() {
    std::vector<Eigen::Triplet<double>> entries = {{0, 1, 0.8}, {1, 0, 0.6}};
    VectorXd mu(2);
    mu << 0.5, 0.3;
    return NetworkModel::from_triplets(2, entries, mu, 2.0);
}

std::vector<EventLog> sample_logs(const NetworkModel& model, int runs, double tf,
                                  std::uint64_t seed) {
    std::vector<EventLog> logs;
    logs.reserve(static_cast<std::size_t>(runs));
    for (int r = 0; r < runs; ++r)
        logs.push_back(simulate_uncontrolled(model, 0.0, tf, derive_seed(seed, r)).log);
    return logs;
}

} // namespace

TEST_CASE("a pure poisson log has the textbook likelihood") {
    VectorXd mu(1);
    mu << 2.0;
    auto model = NetworkModel::from_triplets(1, {}, mu, 1.0);
    EventLog log;
    log.n = 1;
    log.t0 = 0.0;
    log.tf = 5.0;
    log.events = {{0.5, 0, EventKind::Organic},
                  {2.0, 0, EventKind::Organic},
                  {4.5, 0, EventKind::Organic}};
    auto ll = log_likelihood(model, log);
    CHECK(ll.value == Catch::Approx(3.0 * std::log(2.0) - 2.0 * 5.0).epsilon(1e-12));
    // d/dmu [k log mu - mu T] = k/mu - T
    CHECK(ll.grad_mu[0] == Catch::Approx(3.0 / 2.0 - 5.0).epsilon(1e-12));
    CHECK(ll.grad_a.empty());
}

TEST_CASE("likelihood gradients match central finite differences") {
    Rng rng(110);
    auto model = testsupport::random_model(rng, 3, 2.0, 0.8, 0.7);
    auto log = simulate_uncontrolled(model, 0.0, 12.0, 9).log;
    REQUIRE(log.size() > 10);

    auto support = model_support(model);
    auto ll = log_likelihood(model, log);
    const double h = 1e-6;

    MatrixXd dense = model.influence_dense();
    for (std::size_t e = 0; e < support.size(); ++e) {
        auto shifted = [&](double delta) {
            MatrixXd a = dense;
            a(support[e].target, support[e].source) += delta;
            std::vector<Eigen::Triplet<double>> t;
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c)
                    if (a(r, c) != 0.0) t.emplace_back(r, c, a(r, c));
            auto m = NetworkModel::from_triplets(3, t, model.mu0(), model.omega());
            return log_likelihood(m, log).value;
        };
        double fd = (shifted(h) - shifted(-h)) / (2.0 * h);
        REQUIRE(std::abs(ll.grad_a[e] - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
    }
    for (int v = 0; v < 3; ++v) {
        auto shifted = [&](double delta) {
            VectorXd mu = model.mu0();
            mu[v] += delta;
            std::vector<Eigen::Triplet<double>> t;
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c)
                    if (dense(r, c) != 0.0) t.emplace_back(r, c, dense(r, c));
            auto m = NetworkModel::from_triplets(3, t, mu, model.omega());
            return log_likelihood(m, log).value;
        };
        double fd = (shifted(h) - shifted(-h)) / (2.0 * h);
        REQUIRE(std::abs(ll.grad_mu[v] - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
    }
}

TEST_CASE("likelihood windows add up") {
    Rng rng(111);
    auto model = testsupport::random_model(rng, 2, 3.0, 1.0, 0.8);
    auto log = simulate_uncontrolled(model, 0.0, 10.0, 13).log;
    double whole = log_likelihood(model, log).value;
    double first = log_likelihood(model, log, 0.0, 4.0).value;
    double second = log_likelihood(model, log, 4.0, 10.0).value;
    CHECK(whole == Catch::Approx(first + second).epsilon(1e-10));
}

TEST_CASE("an event with zero intensity is called out") {
    VectorXd mu(2);
    mu << 1.0, 0.0; // user 1 can never act under this model
    auto model = NetworkModel::from_triplets(2, {}, mu, 1.0);
    EventLog log;
    log.n = 2;
    log.t0 = 0.0;
    log.tf = 2.0;
    log.events = {{1.0, 1, EventKind::Organic}};
    CHECK_THROWS_AS(log_likelihood(model, log), InfeasibleModelError);
}

TEST_CASE("fit recovers a small planted model") {
    auto truth = truth_2();
    auto logs = sample_logs(truth, 40, 15.0, 500);
    std::vector<SupportEntry> support = {{0, 1}, {1, 0}};
    FitConfig config;
    config.omega_grid = {2.0};
    auto fit = fit_mle(logs, support, config);
    CHECK(fit.converged);
    CHECK(fit.omega == 2.0);
    CHECK(std::isnan(fit.heldout_ll));

    MatrixXd a_true = truth.influence_dense();
    MatrixXd a_fit = fit.model.influence_dense();
    double rel = (a_fit - a_true).norm() / a_true.norm();
    CHECK(rel < 0.25);
    CHECK((fit.model.mu0() - truth.mu0()).cwiseAbs().maxCoeff() < 0.2);

    // the MLE cannot score below the generating parameters on the same data
    double truth_ll = 0.0, fitted_ll = 0.0;
    for (const auto& log : logs) {
        truth_ll += log_likelihood(truth, log).value;
        fitted_ll += log_likelihood(fit.model, log).value;
    }
    CHECK(fitted_ll >= truth_ll - 1e-6 * std::abs(truth_ll));
    CHECK(fit.full_ll == Catch::Approx(fitted_ll).epsilon(1e-9));
}

TEST_CASE("cross-validation picks the true decay") {
    auto truth = truth_2();
    auto logs = sample_logs(truth, 40, 15.0, 901);
    std::vector<SupportEntry> support = {{0, 1}, {1, 0}};
    FitConfig config;
    config.omega_grid = {0.7, 2.0, 6.0};
    auto fit = fit_mle(logs, support, config);
    CHECK(fit.omega == 2.0);
    CHECK_FALSE(std::isnan(fit.heldout_ll));
}

TEST_CASE("fitting is deterministic") {
    auto truth = truth_2();
    auto logs = sample_logs(truth, 10, 10.0, 42);
    std::vector<SupportEntry> support = {{0, 1}, {1, 0}};
    FitConfig config;
    config.omega_grid = {1.0, 2.0};
    auto f1 = fit_mle(logs, support, config);
    auto f2 = fit_mle(logs, support, config);
    CHECK((f1.model.influence_dense() - f2.model.influence_dense()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((f1.model.mu0() - f2.model.mu0()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(f1.omega == f2.omega);
    CHECK(f1.full_ll == f2.full_ll);
}

TEST_CASE("an empty support degenerates to closed-form poisson rates") {
    VectorXd mu(2);
    mu << 1.2, 0.4;
    auto model = NetworkModel::from_triplets(2, {}, mu, 3.0);
    auto logs = sample_logs(model, 6, 8.0, 77);
    FitConfig config;
    config.omega_grid = {3.0};
    auto fit = fit_mle(logs, {}, config);
    CHECK(fit.converged);

    double span = 6.0 * 8.0;
    VectorXd counts = VectorXd::Zero(2);
    for (const auto& log : logs)
        for (const Event& e : log.events) counts[e.user] += 1.0;
    for (int v = 0; v < 2; ++v)
        CHECK(fit.model.mu0()[v] == Catch::Approx(counts[v] / span).epsilon(1e-12));
    CHECK(fit.model.influence().nonZeros() == 0);
}

TEST_CASE("ridge weight shrinks the influence entries") {
    auto truth = truth_2();
    auto logs = sample_logs(truth, 15, 12.0, 333);
    std::vector<SupportEntry> support = {{0, 1}, {1, 0}};
    FitConfig plain;
    plain.omega_grid = {2.0};
    FitConfig ridged = plain;
    ridged.l2_penalty = 50.0;
    double a_plain = fit_mle(logs, support, plain).model.influence_dense().sum();
    double a_ridged = fit_mle(logs, support, ridged).model.influence_dense().sum();
    CHECK(a_ridged < a_plain);
}

TEST_CASE("fit validates inputs") {
    auto logs = sample_logs(truth_2(), 2, 5.0, 1);
    std::vector<SupportEntry> support = {{0, 1}};
    FitConfig config;
    config.omega_grid = {1.0};

    CHECK_THROWS_AS(fit_mle({}, support, config), ConfigError);

    FitConfig no_grid;
    CHECK_THROWS_AS(fit_mle(logs, support, no_grid), ConfigError);

    FitConfig bad_omega;
    bad_omega.omega_grid = {0.0};
    CHECK_THROWS_AS(fit_mle(logs, support, bad_omega), ConfigError);

    FitConfig bad_holdout = config;
    bad_holdout.holdout_fraction = 1.5;
    CHECK_THROWS_AS(fit_mle(logs, support, bad_holdout), ConfigError);

    auto mixed = logs;
    mixed.push_back(EventLog{});
    mixed.back().n = 5;
    mixed.back().tf = 1.0;
    CHECK_THROWS_AS(fit_mle(mixed, support, config), DataError);

    std::vector<SupportEntry> out_of_range = {{0, 9}};
    CHECK_THROWS_AS(fit_mle(logs, out_of_range, config), DataError);

    EventLog empty_span;
    empty_span.n = 2;
    CHECK_THROWS_AS(fit_mle({empty_span}, support, config), DataError);
}
