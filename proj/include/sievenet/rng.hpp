#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace sievenet {

// Deterministic random number streams.
//
// Every random draw in the library comes from an RngStream identified by a
// (seed, stream) pair of 64-bit integers. The generator is xoshiro256++ with
// its state filled from SplitMix64, so results are identical on every
// platform and independent of any standard-library distribution internals.
// Named substreams are derived by hashing a label with FNV-1a, which is how
// experiment cells split one user seed into independent data/init/noise
// streams without coordination.

/// SplitMix64 mixer (Steele, Lea, Flood 2014). Used only for seeding and
/// for deriving stream identifiers, never as the main generator.
struct SplitMix64 {
    std::uint64_t state;

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }
};

/// FNV-1a over a label string; stable across platforms.
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

/// Derive a stream identifier from a base seed and a label, e.g.
/// derive_stream(seed, "cells/twounit_tanh_n0100_h10_s0/data").
inline std::uint64_t derive_stream(std::uint64_t seed, std::string_view label) {
    SplitMix64 sm{seed ^ fnv1a64(label)};
    return sm.next();
}

/// xoshiro256++ (Blackman, Vigna 2019) seeded from (seed, stream).
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream = 0) {
        SplitMix64 sm{seed};
        std::uint64_t mixed = sm.next() ^ (stream * 0x9E3779B97F4A7C15ULL);
        SplitMix64 fill{mixed};
        for (auto& word : s_) word = fill.next();
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    /// Uniform double in [0, 1): top 53 bits scaled by 2^-53.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Gaussian draw via the Box-Muller transform. Consumes exactly two
    /// uniforms per call; the sine branch is discarded so the stream position
    /// never depends on call history.
    double normal(double mean = 0.0, double sd = 1.0) {
        double u1 = 1.0 - uniform01();  // (0, 1], keeps log finite
        double u2 = uniform01();
        double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
        return mean + sd * z;
    }

    /// +1 or -1, each with probability 1/2 (low bit of the next word).
    int rademacher() { return (next_u64() & 1ULL) ? 1 : -1; }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    static constexpr double two_pi = 6.283185307179586476925286766559;

    std::uint64_t s_[4];
};

}  // namespace sievenet
