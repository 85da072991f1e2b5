#pragma once

#include <patchace/error.hpp>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace patchace {

/// Derive a child seed from (seed, stream index). Used to split independent
/// streams for layers, images, and scene components.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Deterministic 64-bit stream. The repo-wide generator is splitmix64;
/// normal deviates use Box-Muller (two uniforms per value, no cached spare)
/// and gamma deviates use Marsaglia-Tsang squeeze rejection. Identical
/// (seed, call sequence) gives identical output on every platform.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : state_(seed) {}

    static RngStream child(std::uint64_t seed, std::uint64_t stream) {
        return RngStream(derive_seed(seed, stream));
    }

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    /// Unbiased draw in [0, n) by rejection.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw ArgumentError("RngStream::below: n must be positive");
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % n;
    }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1p-53;
    }

    /// Uniform in (0, 1]; safe as a log argument.
    double uniform01_open() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1p-53;
    }

    /// Standard normal via Box-Muller. Consumes exactly two uniforms.
    double normal() {
        const double u1 = uniform01_open();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Gamma(shape, 1) via Marsaglia-Tsang; shape < 1 handled by the
    /// standard boost step.
    double gamma(double shape) {
        if (!(shape > 0.0)) throw ArgumentError("RngStream::gamma: shape must be positive");
        if (shape < 1.0) {
            const double u = uniform01_open();
            return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform01_open();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

private:
    std::uint64_t state_;
};

/// Sample `keep` distinct indices from [0, total) without replacement,
/// returned in sampled order (partial Fisher-Yates).
inline std::vector<std::size_t> choose_channel_indices(RngStream& rng,
                                                       std::size_t total,
                                                       std::size_t keep) {
    if (keep > total)
        throw ArgumentError("choose_channel_indices: keep exceeds total (" +
                            std::to_string(keep) + " > " + std::to_string(total) + ")");
    std::vector<std::size_t> pool(total);
    for (std::size_t i = 0; i < total; ++i) pool[i] = i;
    for (std::size_t i = 0; i < keep; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(total - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(keep);
    return pool;
}

} // namespace patchace
