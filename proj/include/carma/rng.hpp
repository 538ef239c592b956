#ifndef CARMA_RNG_HPP
#define CARMA_RNG_HPP

#include <cstdint>
#include <random>

namespace carma {

using Rng = std::mt19937_64;

/// Independent stream for (seed, index). Path k of a run always draws from
/// make_stream(seed, k), whatever thread executes it.
inline Rng make_stream(std::uint64_t seed, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                      0x9e3779b9u};
    return Rng(seq);
}

/// Uniform on [0, 1).
inline double uniform01(Rng& rng) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace carma

#endif
