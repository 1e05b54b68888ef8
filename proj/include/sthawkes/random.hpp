#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <utility>

namespace sthawkes {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; maps (base, stream) to a decorrelated seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Uniform on (0, 1].
inline double uniform_open_low(Rng& rng) {
    return 1.0 - std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline double uniform(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double exponential_draw(Rng& rng, double rate) {
    return -std::log(uniform_open_low(rng)) / rate;
}

/// Marsaglia polar method; returns two independent standard normals.
inline std::pair<double, double> polar_normal_pair(Rng& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    while (true) {
        const double a = u(rng);
        const double b = u(rng);
        const double s = a * a + b * b;
        if (s > 0.0 && s < 1.0) {
            const double f = std::sqrt(-2.0 * std::log(s) / s);
            return {a * f, b * f};
        }
    }
}

inline std::uint64_t poisson_draw(Rng& rng, double mean) {
    if (!(mean > 0.0)) return 0;
    return std::poisson_distribution<std::uint64_t>(mean)(rng);
}

}  // namespace sthawkes
