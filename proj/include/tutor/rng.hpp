#pragma once

#include <cstdint>
#include <random>

namespace tutor {

// std::uniform_*_distribution is implementation-defined; these draws are not,
// so seeded outputs are identical across standard libraries.
using Rng = std::mt19937_64;

/// Uniform integer in [0, n). n must be positive.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
    const std::uint64_t limit = Rng::max() - Rng::max() % n;
    std::uint64_t draw = rng();
    while (draw >= limit) draw = rng();
    return draw % n;
}

/// Uniform real in [0, 1).
inline double uniform_unit(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline bool bernoulli(Rng& rng, double p) { return uniform_unit(rng) < p; }

/// Derives a child seed from a master seed and a stream id (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace tutor
