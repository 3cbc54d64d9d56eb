#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace acre {

using Rng = std::mt19937_64;

inline std::uint64_t fnv1a64(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives an independent sub-seed for one role ("shuffle", "audio-encoder", ...)
/// from the run's global seed: splitmix64(seed ^ fnv1a64(role)).
inline std::uint64_t split_seed(std::uint64_t seed, std::string_view role) {
    return splitmix64(seed ^ fnv1a64(role));
}

inline Rng make_rng(std::uint64_t seed, std::string_view role) {
    return Rng(split_seed(seed, role));
}

}  // namespace acre
