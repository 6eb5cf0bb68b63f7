#pragma once

#include <cmath>
#include <functional>
#include <optional>

#include "cheshire/errors.hpp"
#include "cheshire/rng.hpp"

namespace cheshire {

// First arrival of an inhomogeneous Poisson process on (t0, tf] by Lewis
// thinning. bound(t) must dominate intensity(s) for all s in [t, tf];
// proposals are drawn at the bound's rate and accepted with probability
// intensity/bound. Returns nullopt when no arrival lands before tf.
// A bound observed below the intensity it claims to dominate is an error.
template <typename IntensityFn, typename BoundFn>
std::optional<double> sample_inhomog_poisson(IntensityFn&& intensity, BoundFn&& bound, double t0,
                                             double tf, Rng& rng) {
    if (!(tf > t0)) return std::nullopt;
    double t = t0;
    while (true) {
        double cap = bound(t);
        if (!(cap > 0.0)) return std::nullopt; // nothing can arrive on [t, tf]
        t += rng.exponential(cap);
        if (t >= tf) return std::nullopt;
        double value = intensity(t);
        if (value > cap * (1.0 + 1e-9) + 1e-300)
            throw SolverError("thinning bound violated: intensity " + std::to_string(value) +
                              " exceeds bound " + std::to_string(cap) + " at t=" +
                              std::to_string(t));
        if (rng.uniform() * cap < value) return t;
    }
}

} // namespace cheshire
