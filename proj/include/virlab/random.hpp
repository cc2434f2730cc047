#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace virlab {

using Rng = std::mt19937_64;

// splitmix64 finalizer; spreads nearby integers across the seed space.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Combine a base seed with a sequence of stream identifiers (epoch, batch, ...).
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> streams) {
    std::uint64_t s = mix_seed(base);
    for (auto v : streams) s = mix_seed(s ^ mix_seed(v));
    return s;
}

/// Per-sample attack stream: seed xor sample index, then mixed.
inline Rng sample_rng(std::uint64_t seed, std::uint64_t sample_index) {
    return Rng(mix_seed(seed ^ sample_index));
}

}  // namespace virlab
