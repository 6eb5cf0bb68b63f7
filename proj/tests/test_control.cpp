#include <catch2/catch_amalgamated.hpp>

#include "cheshire/control.hpp"
#include "support/oracles.hpp"
#include "support/random_models.hpp"
#include "support/temp.hpp"

#include <cmath>
#include <fstream>

using namespace cheshire;
using Catch::Matchers::ContainsSubstring;

namespace {

ControlConfig basic_config(int n, double t0, double tf, double q, double s, double f,
                           int steps = 400) {
    ControlConfig c;
    c.t0 = t0;
    c.tf = tf;
    c.q = uniform_diagonal(n, q);
    c.s = uniform_diagonal(n, s);
    c.f = uniform_diagonal(n, f);
    c.grid_steps = steps;
    return c;
}

double h_solve_error(const NetworkModel& model, const ControlConfig& cfg, int steps,
                     const MatrixXd& reference_h0) {
    auto h = solve_riccati(model, cfg.t0, cfg.tf, steps, MatrixXd(cfg.q.asDiagonal()), cfg.s,
                           MatrixXd(cfg.f.asDiagonal()));
    return (h.front() - reference_h0).norm();
}

} // namespace

TEST_CASE("control config validation") {
    auto cfg = basic_config(2, 0.0, 1.0, 1.0, 1.0, 1.0);
    CHECK_NOTHROW(cfg.validate(2));
    CHECK_THROWS_AS(cfg.validate(3), ConfigError);

    auto bad_s = cfg;
    bad_s.s[1] = 0.0;
    CHECK_THROWS_AS(bad_s.validate(2), ConfigError);
    auto bad_q = cfg;
    bad_q.q[0] = -0.1;
    CHECK_THROWS_AS(bad_q.validate(2), ConfigError);
    auto bad_f = cfg;
    bad_f.f[0] = -1.0;
    CHECK_THROWS_AS(bad_f.validate(2), ConfigError);
    auto bad_t = cfg;
    bad_t.tf = bad_t.t0;
    CHECK_THROWS_AS(bad_t.validate(2), ConfigError);
    auto bad_grid = cfg;
    bad_grid.grid_steps = 1;
    CHECK_THROWS_AS(bad_grid.validate(2), ConfigError);

    auto scaled = cfg.with_s_scaled(4.0);
    CHECK(scaled.s[0] == 4.0);
    CHECK(scaled.q[0] == cfg.q[0]);
    CHECK(scaled.f[0] == cfg.f[0]);
}

TEST_CASE("zero reward means zero policy, exactly") {
    Rng rng(60);
    auto model = testsupport::random_model(rng, 4, 3.0);
    auto policy = FeedbackPolicy::solve(model, basic_config(4, 0.0, 2.0, 0.0, 1.0, 0.0, 128));
    for (const auto& h : policy.h_grid()) CHECK(h.cwiseAbs().maxCoeff() == 0.0);
    for (const auto& g : policy.g_grid()) CHECK(g.cwiseAbs().maxCoeff() == 0.0);
    VectorXd lam = model.mu0() * 3.0;
    CHECK(policy.control_raw(1.0, lam).cwiseAbs().maxCoeff() == 0.0);
    CHECK(policy.total_intensity_bound(0.5, VectorXd::Ones(4)) == 0.0);
}

TEST_CASE("decoupled scalar case matches the closed forms") {
    // A = 0, so H' = 2 omega H with H(tf) = -f, and g' = omega (g - H mu).
    const double omega = 1.0, tf = 2.0, f = 1.0, mu = 1.5;
    auto model = NetworkModel::from_triplets(1, {}, VectorXd::Constant(1, mu), omega);
    auto policy = FeedbackPolicy::solve(model, basic_config(1, 0.0, tf, 0.0, 1.0, f, 2000));
    for (double t : {0.0, 0.37, 1.0, 1.613, 2.0}) {
        double h_true = -f * std::exp(-2.0 * omega * (tf - t));
        double g_true = -mu * f *
                        (std::exp(-omega * (tf - t)) - std::exp(-2.0 * omega * (tf - t)));
        CHECK(policy.h_at(t)(0, 0) == Catch::Approx(h_true).margin(1e-10));
        CHECK(policy.g_at(t)[0] == Catch::Approx(g_true).margin(1e-10));
    }
}

TEST_CASE("riccati integrator converges at fourth order") {
    // scalar with every term active
    auto model1 = NetworkModel::from_triplets(1, {{0, 0, 0.6}}, VectorXd::Constant(1, 0.8), 1.5);
    auto cfg1 = basic_config(1, 0.0, 1.0, 2.0, 1.0, 0.5);
    auto ref1 = solve_riccati(model1, 0.0, 1.0, 6400, MatrixXd(cfg1.q.asDiagonal()), cfg1.s,
                              MatrixXd(cfg1.f.asDiagonal()));
    double e_coarse = h_solve_error(model1, cfg1, 100, ref1.front());
    double e_fine = h_solve_error(model1, cfg1, 200, ref1.front());
    double ratio = e_coarse / e_fine;
    CHECK(ratio > 12.0);
    CHECK(ratio < 20.0);

    Rng rng(61);
    auto model4 = testsupport::random_model(rng, 4, 2.0, 0.8, 0.6);
    auto cfg4 = basic_config(4, 0.0, 1.5, 1.0, 2.0, 0.25);
    auto ref4 = solve_riccati(model4, 0.0, 1.5, 6400, MatrixXd(cfg4.q.asDiagonal()), cfg4.s,
                              MatrixXd(cfg4.f.asDiagonal()));
    double e4_coarse = h_solve_error(model4, cfg4, 100, ref4.front());
    double e4_fine = h_solve_error(model4, cfg4, 200, ref4.front());
    double ratio4 = e4_coarse / e4_fine;
    CHECK(ratio4 > 12.0);
    CHECK(ratio4 < 20.0);
}

TEST_CASE("solver path agrees with an independent backward Euler integration") {
    Rng rng(62);
    auto model = testsupport::random_model(rng, 2, 2.0, 1.0, 0.7);
    auto cfg = basic_config(2, 0.0, 1.0, 1.5, 1.2, 0.4, 500);
    auto policy = FeedbackPolicy::solve(model, cfg);

    auto oracle_path = oracle::euler_policy_path(
        model.influence_dense(), model.omega(), model.mu0(), MatrixXd(cfg.q.asDiagonal()), cfg.s,
        MatrixXd(cfg.f.asDiagonal()), cfg.t0, cfg.tf, 200000, 200000 / 10);

    for (std::size_t i = 0; i < oracle_path.times.size(); ++i) {
        double t = oracle_path.times[i];
        CHECK((policy.h_at(t) - oracle_path.h[i]).cwiseAbs().maxCoeff() < 5e-5);
        CHECK((policy.g_at(t) - oracle_path.g[i]).cwiseAbs().maxCoeff() < 5e-5);
    }
    // endpoints are pinned by the final condition
    CHECK((policy.h_grid().back() + MatrixXd(cfg.f.asDiagonal())).cwiseAbs().maxCoeff() == 0.0);
    CHECK(policy.g_grid().back().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("a supercritical reward blows the riccati solve up with a time stamp") {
    auto model = NetworkModel::from_triplets(1, {{0, 0, 5.0}}, VectorXd::Constant(1, 1.0), 1.0);
    auto cfg = basic_config(1, 0.0, 2.0, 50.0, 0.01, 10.0, 200);
    CHECK_THROWS_MATCHES(FeedbackPolicy::solve(model, cfg), SolverError,
                         Catch::Matchers::MessageMatches(ContainsSubstring("diverged at t=")));
}

TEST_CASE("closed-form and excitation-form evaluations agree") {
    Rng rng(63);
    auto model = testsupport::random_model(rng, 5, 3.0, 0.7, 0.7);
    auto policy = FeedbackPolicy::solve(model, basic_config(5, 0.0, 2.0, 1.0, 1.5, 0.5, 64));
    for (int trial = 0; trial < 50; ++trial) {
        double t = rng.uniform(0.0, 2.0);
        VectorXd excitation(5);
        for (int i = 0; i < 5; ++i) excitation[i] = rng.uniform(0.0, 4.0);
        VectorXd lam = model.mu0() + excitation;
        VectorXd via_lambda = policy.control_raw(t, lam);
        VectorXd via_excitation = policy.control_from_excitation(t, excitation);
        double scale = std::max(1.0, via_lambda.cwiseAbs().maxCoeff());
        REQUIRE((via_lambda - via_excitation).cwiseAbs().maxCoeff() <= 1e-12 * scale);
    }
}

TEST_CASE("gain_times_column matches the dense kernel column") {
    Rng rng(64);
    auto model = testsupport::random_model(rng, 4, 2.5, 0.8, 0.8);
    auto policy = FeedbackPolicy::solve(model, basic_config(4, 0.0, 1.5, 2.0, 1.0, 1.0, 80));
    MatrixXd a = model.influence_dense();
    for (int trial = 0; trial < 30; ++trial) {
        double t = rng.uniform(0.0, 1.5);
        int user = static_cast<int>(rng.uniform_index(4));
        MatrixXd k_t = policy.config().s.cwiseInverse().asDiagonal() *
                       MatrixXd(a.transpose() * policy.h_at(t));
        VectorXd expect = k_t * a.col(user);
        VectorXd got = policy.gain_times_column(t, user);
        REQUIRE((got - expect).cwiseAbs().maxCoeff() <=
                1e-12 * std::max(1.0, expect.cwiseAbs().maxCoeff()));
    }
}

TEST_CASE("intensity bounds dominate the future control") {
    Rng rng(65);
    auto model = testsupport::random_model(rng, 4, 3.0, 0.8, 0.8);
    auto policy = FeedbackPolicy::solve(model, basic_config(4, 0.0, 2.0, 1.5, 1.0, 0.75, 96));
    for (int trial = 0; trial < 40; ++trial) {
        double t = rng.uniform(0.0, 2.0);
        VectorXd w(4);
        for (int i = 0; i < 4; ++i) w[i] = rng.uniform(0.0, 3.0);
        double bound = policy.total_intensity_bound(t, w);
        for (int probe = 0; probe < 8; ++probe) {
            double s = rng.uniform(t, 2.0);
            VectorXd decayed = std::exp(-model.omega() * (s - t)) * w;
            double actual = policy.control_from_excitation(s, decayed).cwiseMax(0.0).sum();
            REQUIRE(actual <= bound * (1.0 + 1e-9) + 1e-12);
        }
    }
}

TEST_CASE("per-component bounds dominate each component's contribution") {
    Rng rng(66);
    auto model = testsupport::random_model(rng, 4, 2.0, 0.9, 0.9);
    auto policy = FeedbackPolicy::solve(model, basic_config(4, 0.0, 2.0, 1.0, 1.0, 0.5, 96));
    for (int trial = 0; trial < 40; ++trial) {
        double birth = rng.uniform(0.0, 1.0);
        double t = rng.uniform(birth, 2.0);
        int user = static_cast<int>(rng.uniform_index(4));
        double bound = policy.component_intensity_bound(t, user, birth);
        for (int probe = 0; probe < 8; ++probe) {
            double s = rng.uniform(t, 2.0);
            double kappa = std::exp(-model.omega() * (s - birth));
            VectorXd contrib = -kappa * policy.gain_times_column(s, user);
            REQUIRE(contrib.cwiseMax(0.0).sum() <= bound * (1.0 + 1e-9) + 1e-12);
        }
    }
}

TEST_CASE("policy files round trip bit-exactly") {
    Rng rng(67);
    auto model = testsupport::random_model(rng, 3, 2.0, 0.8, 0.8);
    auto policy = FeedbackPolicy::solve(model, basic_config(3, 0.5, 2.5, 1.0, 2.0, 0.25, 50));
    testsupport::TempDir dir("policy");
    policy.save(dir.file("p.bin"));
    auto back = FeedbackPolicy::load(model, dir.file("p.bin"));
    REQUIRE(back.grid_points() == policy.grid_points());
    CHECK(back.t0() == policy.t0());
    CHECK(back.tf() == policy.tf());
    for (int k = 0; k < policy.grid_points(); ++k) {
        CHECK((back.h_grid()[k] - policy.h_grid()[k]).cwiseAbs().maxCoeff() == 0.0);
        CHECK((back.g_grid()[k] - policy.g_grid()[k]).cwiseAbs().maxCoeff() == 0.0);
    }
    VectorXd lam = model.mu0() * 2.0;
    CHECK((back.control_raw(1.0, lam) - policy.control_raw(1.0, lam)).cwiseAbs().maxCoeff() ==
          0.0);
}

TEST_CASE("policy files reject mismatches and truncation") {
    Rng rng(68);
    auto model = testsupport::random_model(rng, 3, 2.0);
    auto policy = FeedbackPolicy::solve(model, basic_config(3, 0.0, 1.0, 1.0, 1.0, 0.0, 20));
    testsupport::TempDir dir("policybad");
    policy.save(dir.file("p.bin"));

    auto other = testsupport::random_model(rng, 4, 2.0);
    CHECK_THROWS_MATCHES(FeedbackPolicy::load(other, dir.file("p.bin")), ConfigError,
                         Catch::Matchers::MessageMatches(ContainsSubstring("does not match")));

    std::string bytes = testsupport::slurp(dir.file("p.bin"));
    testsupport::spit(dir.file("short.bin"), bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_MATCHES(FeedbackPolicy::load(model, dir.file("short.bin")), ConfigError,
                         Catch::Matchers::MessageMatches(ContainsSubstring("truncated")));

    testsupport::spit(dir.file("junk.bin"), "definitely not a policy file");
    CHECK_THROWS_AS(FeedbackPolicy::load(model, dir.file("junk.bin")), ConfigError);
    CHECK_THROWS_AS(FeedbackPolicy::load(model, dir.file("missing.bin")), ConfigError);
}

TEST_CASE("optimal_intensity clamps negative components and records them") {
    // hand-built policy path with positive g so the law dips negative
    auto model = NetworkModel::from_triplets(2, {{0, 1, 1.0}, {1, 0, 1.0}},
                                             VectorXd::Constant(2, 0.5), 2.0);
    ControlConfig cfg = basic_config(2, 0.0, 1.0, 0.0, 1.0, 0.0, 4);
    std::vector<MatrixXd> h(5, MatrixXd::Zero(2, 2));
    std::vector<VectorXd> g(5, VectorXd::Constant(2, 1.0));
    FeedbackPolicy policy(model, cfg, h, g);

    IntensityVector lam{model.mu0(), 0.5};
    ClampRecord record;
    VectorXd u = optimal_intensity(policy, lam, 0.5, &record);
    CHECK(u.minCoeff() == 0.0);
    CHECK(record.preclamp_min < 0.0);
    CHECK_FALSE(record.empty());

    ClampRecord fresh;
    CHECK(fresh.empty());
    fresh.merge(record);
    CHECK(fresh.preclamp_min == record.preclamp_min);
}

TEST_CASE("policy evaluation is rejected outside the horizon") {
    Rng rng(69);
    auto model = testsupport::random_model(rng, 2, 2.0);
    auto policy = FeedbackPolicy::solve(model, basic_config(2, 1.0, 2.0, 1.0, 1.0, 0.0, 16));
    VectorXd lam = model.mu0();
    CHECK_NOTHROW(policy.control_raw(1.0, lam));
    CHECK_NOTHROW(policy.control_raw(2.0, lam));
    CHECK_THROWS_AS(policy.control_raw(0.5, lam), ConfigError);
    CHECK_THROWS_AS(policy.control_raw(2.5, lam), ConfigError);
}

TEST_CASE("the grid mismatch between paths and config is rejected") {
    Rng rng(70);
    auto model = testsupport::random_model(rng, 2, 2.0);
    auto cfg = basic_config(2, 0.0, 1.0, 1.0, 1.0, 0.0, 8);
    std::vector<MatrixXd> h(5, MatrixXd::Zero(2, 2)); // 8 steps need 9 points
    std::vector<VectorXd> g(5, VectorXd::Zero(2));
    CHECK_THROWS_AS(FeedbackPolicy(model, cfg, h, g), ConfigError);
}
