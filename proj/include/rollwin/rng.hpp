#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "rollwin/tensor.hpp"

namespace rw {

/// Counter-based generator: draw k of stream `seed` is a pure function of (seed, k).
/// The whole state is two integers, so it can be copied, stored and replayed.
struct Rng {
    std::uint64_t seed = 0;
    std::uint64_t counter = 0;

    static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t next_u64() noexcept { return mix(mix(seed) ^ (counter++ * 0xd1b54a32d192ed03ULL)); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) noexcept { return n == 0 ? 0 : next_u64() % n; }

    /// Standard normal via Box-Muller; consumes exactly two draws.
    double gaussian() noexcept {
        double u1 = uniform();
        const double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    Tensor2D gaussian(std::size_t rows, std::size_t cols, double stddev = 1.0) {
        Tensor2D t(rows, cols);
        for (double& x : t.flat()) x = stddev * gaussian();
        return t;
    }

    /// Independent child stream; does not advance this one.
    Rng fork(std::uint64_t salt) const noexcept { return Rng{mix(seed ^ mix(salt + 0x632be59bd9b4e019ULL)), 0}; }
};

}  // namespace rw
