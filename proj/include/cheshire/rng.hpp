#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "cheshire/errors.hpp"

namespace cheshire {

// splitmix64 finalizer (Stafford mix13). Used both as the per-stream
// generator step and as the seed-derivation hash, so ensembles get
// order-independent, reproducible substreams.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ULL;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return z;
}

// seed_run = hash(master_seed, stream); independent streams for independent runs.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    return mix64(master + 0x9e3779b97f4a7c15ULL * (stream + 1));
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b) {
    return derive_seed(derive_seed(master, a), b);
}

// Counter-based 64-bit generator (splitmix64). Cheap to seed, bit-reproducible
// across platforms; all variate transforms are explicit inverse-CDF so results
// do not depend on standard-library distribution internals.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        return mix64(state_);
    }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Exponential with the given rate; rate must be positive.
    double exponential(double rate) {
        return -std::log1p(-uniform()) / rate;
    }

    // Integer in [0, n).
    std::size_t uniform_index(std::size_t n) {
        return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
    }

    // Index sampled proportionally to nonnegative weights summing to `total`.
    // Falls back to the last positive weight if rounding walks off the end.
    std::size_t categorical(std::span<const double> weights, double total) {
        double u = uniform() * total;
        std::size_t last_positive = 0;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            if (weights[i] <= 0.0) continue;
            last_positive = i;
            u -= weights[i];
            if (u <= 0.0) return i;
        }
        return last_positive;
    }

private:
    std::uint64_t state_;
};

// Uniformly chosen k distinct indices from [0, n), by partial Fisher-Yates.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng) {
    if (k > n) throw ConfigError("sample_without_replacement: k > n");
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    for (std::size_t i = 0; i < k; ++i) {
        std::size_t j = i + rng.uniform_index(n - i);
        std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    return pool;
}

} // namespace cheshire
