#pragma once

#include <cstdint>
#include <random>

namespace qnd {

// splitmix64 step; used to hash seeds and to derive independent streams.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Deterministic child seed for (master, salt), e.g. one per scan point or
// per Monte Carlo trial. Streams derived this way may run concurrently
// without sharing generator state.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t salt) {
    std::uint64_t s = master ^ (0xD1B54A32D192ED03ull * (salt + 1));
    std::uint64_t a = splitmix64(s);
    return a ^ splitmix64(s);
}

// mt19937_64 is fully specified by the standard, so runs are reproducible
// across platforms as long as we avoid the (unspecified) distribution
// adaptors and map raw draws ourselves.
using rng_engine = std::mt19937_64;

inline rng_engine make_engine(std::uint64_t seed) {
    std::uint64_t s = seed;
    return rng_engine(splitmix64(s));
}

// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(rng_engine& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace qnd
