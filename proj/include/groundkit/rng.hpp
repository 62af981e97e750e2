#pragma once
// Counter-based random source.
//
// Every draw is a pure function of (key, counter), so any consumer can replay
// an exact sub-sequence by re-deriving its key. The mixing function is the
// SplitMix64 finalizer; known-answer vectors live in tests/test_rng.cpp.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace groundkit {

inline constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Derives a child key from a parent key and a list of labels (step, index...).
inline constexpr std::uint64_t derive_key(std::uint64_t key,
                                          std::initializer_list<std::uint64_t> labels) noexcept {
    std::uint64_t k = mix64(key ^ 0x6A09E667F3BCC909ULL);
    for (std::uint64_t label : labels) k = mix64(k ^ mix64(label + 0x3C6EF372FE94F82BULL));
    return k;
}

class CounterRng {
public:
    constexpr explicit CounterRng(std::uint64_t key = 0) noexcept : key_(key) {}

    constexpr std::uint64_t key() const noexcept { return key_; }
    constexpr std::uint64_t counter() const noexcept { return counter_; }

    /// Raw 64-bit output at an explicit counter; does not advance the stream.
    constexpr std::uint64_t at(std::uint64_t counter) const noexcept {
        return mix64(key_ ^ mix64(counter));
    }

    constexpr std::uint64_t next_u64() noexcept { return at(counter_++); }

    /// Uniform double in [0, 1) with 53 bits of resolution.
    constexpr double uniform() noexcept {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform integer in [0, n). Rejection sampling keeps it exactly uniform.
    constexpr std::uint64_t below(std::uint64_t n) noexcept {
        if (n <= 1) return 0;
        const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % n);
        std::uint64_t v = next_u64();
        while (v >= limit) v = next_u64();
        return v % n;
    }

    /// Standard normal via Box-Muller (one value per call, two uniforms consumed).
    double normal() noexcept {
        double u1 = uniform();
        const double u2 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Independent stream for a labelled sub-task.
    constexpr CounterRng fork(std::initializer_list<std::uint64_t> labels) const noexcept {
        return CounterRng(derive_key(key_, labels));
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

} // namespace groundkit
