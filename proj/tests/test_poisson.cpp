#include <catch2/catch_amalgamated.hpp>

#include "cheshire/poisson.hpp"
#include "cheshire/rng.hpp"
#include "support/oracles.hpp"

#include <cmath>
#include <optional>
#include <vector>

using namespace cheshire;

TEST_CASE("constant-rate thinning matches the exponential law") {
    Rng rng(1001);
    const double rate = 3.0, tf = 1.0;
    const int reps = 20000;
    int none = 0;
    std::vector<double> arrivals;
    for (int i = 0; i < reps; ++i) {
        auto t = sample_inhomog_poisson([&](double) { return rate; },
                                        [&](double) { return rate; }, 0.0, tf, rng);
        if (!t) {
            ++none;
            continue;
        }
        REQUIRE(*t >= 0.0);
        REQUIRE(*t < tf);
        arrivals.push_back(*t);
    }
    double p_none = std::exp(-rate * tf);
    CHECK(std::abs(double(none) / reps - p_none) < 4.0 * std::sqrt(p_none * (1 - p_none) / reps));
    // conditional mean of Exp(rate) truncated to [0, tf)
    double mean_trunc = 1.0 / rate - tf * p_none / (1.0 - p_none);
    auto st = oracle::moments(arrivals);
    CHECK(std::abs(st.mean - mean_trunc) < 4.0 * std::sqrt(st.variance / double(st.count)));
}

TEST_CASE("loose bounds only cost proposals, not correctness") {
    const double rate = 2.0, tf = 2.0;
    const int reps = 20000;
    double p_none = std::exp(-rate * tf);

    auto run = [&](double slack, std::uint64_t seed) {
        Rng rng(seed);
        int none = 0;
        for (int i = 0; i < reps; ++i)
            if (!sample_inhomog_poisson([&](double) { return rate; },
                                        [&](double) { return rate * slack; }, 0.0, tf, rng))
                ++none;
        return double(none) / reps;
    };
    CHECK(std::abs(run(1.0, 5) - p_none) < 4.0 * std::sqrt(p_none * (1 - p_none) / reps));
    CHECK(std::abs(run(7.5, 6) - p_none) < 4.0 * std::sqrt(p_none * (1 - p_none) / reps));
}

TEST_CASE("decaying intensity sampled against its own envelope") {
    // lambda(t) = 4 e^{-2t}; envelope uses the current-time value, valid
    // because the rate only decreases. P(no arrival by tf) = exp(-2(1 - e^{-2 tf})).
    Rng rng(77);
    auto lam = [](double t) { return 4.0 * std::exp(-2.0 * t); };
    const double tf = 3.0;
    const int reps = 20000;
    int none = 0;
    std::vector<double> arrivals;
    for (int i = 0; i < reps; ++i) {
        auto t = sample_inhomog_poisson(lam, lam, 0.0, tf, rng);
        if (t) arrivals.push_back(*t);
        else ++none;
    }
    double integral = 2.0 * (1.0 - std::exp(-2.0 * tf));
    double p_none = std::exp(-integral);
    CHECK(std::abs(double(none) / reps - p_none) < 4.0 * std::sqrt(p_none * (1 - p_none) / reps));

    // median of the arrival distribution, conditional on arrival
    double target = (1.0 - p_none) / 2.0;
    // solve exp(-2(1 - e^{-2m})) = 1 - target
    double m = -0.5 * std::log(1.0 + 0.5 * std::log(1.0 - target));
    std::sort(arrivals.begin(), arrivals.end());
    double sample_median = arrivals[arrivals.size() / 2];
    CHECK(std::abs(sample_median - m) < 0.03);
}

TEST_CASE("a violated envelope raises SolverError") {
    Rng rng(3);
    CHECK_THROWS_AS(sample_inhomog_poisson([](double) { return 2.0; },
                                           [](double) { return 1.0; }, 0.0, 10.0, rng),
                    SolverError);
}

TEST_CASE("zero or negative bound means no arrivals") {
    Rng rng(4);
    CHECK_FALSE(sample_inhomog_poisson([](double) { return 0.0; }, [](double) { return 0.0; },
                                       0.0, 5.0, rng)
                    .has_value());
    CHECK_FALSE(sample_inhomog_poisson([](double) { return 0.0; }, [](double) { return -1.0; },
                                       0.0, 5.0, rng)
                    .has_value());
}

TEST_CASE("an empty window yields nothing") {
    Rng rng(5);
    CHECK_FALSE(sample_inhomog_poisson([](double) { return 100.0; },
                                       [](double) { return 100.0; }, 2.0, 2.0, rng)
                    .has_value());
}
