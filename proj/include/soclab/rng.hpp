#pragma once

// Portable seeded randomness. The standard <random> distributions are
// implementation-defined, so outputs would differ between standard libraries;
// everything here is specified bit-for-bit.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>

namespace soclab {

/// SplitMix64 generator (Steele, Lea, Flood). Satisfies UniformRandomBitGenerator.
class SplitMix64 {
public:
    using result_type = std::uint64_t;

    explicit SplitMix64(std::uint64_t seed = 0) noexcept : state_(seed) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform01() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform01(); }

    /// Uniform integer in [0, n). Rejection sampling keeps it unbiased.
    std::uint64_t below(std::uint64_t n) noexcept {
        if (n <= 1) return 0;
        const std::uint64_t limit = max() - (max() % n);
        std::uint64_t x;
        do { x = (*this)(); } while (x >= limit);
        return x % n;
    }

    /// Standard normal via Box-Muller; one draw per call (the pair's second half is discarded).
    double normal() noexcept {
        double u1 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::uint64_t state_;
};

inline std::uint64_t mix64(std::uint64_t x) noexcept {
    x ^= x >> 33;
    x *= 0xFF51AFD7ED558CCDULL;
    x ^= x >> 33;
    x *= 0xC4CEB9FE1A85EC53ULL;
    x ^= x >> 33;
    return x;
}

/// Stable hash of a seed and a token sequence; drives per-context default logits.
template <class T>
std::uint64_t hash_sequence(std::uint64_t seed, std::span<const T> tokens) noexcept {
    std::uint64_t h = mix64(seed ^ 0x6A09E667F3BCC909ULL);
    for (const T& t : tokens) h = mix64(h ^ (static_cast<std::uint64_t>(t) + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2)));
    return mix64(h ^ static_cast<std::uint64_t>(tokens.size()));
}

/// Derive an independent child seed, e.g. the model-init seed from a row seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) noexcept {
    return mix64(seed * 0x9E3779B97F4A7C15ULL + mix64(salt));
}

} // namespace soclab
