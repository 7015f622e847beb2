#pragma once

#include <cstdint>
#include <random>

namespace exmort {

/// SplitMix64 finalizer; used to derive independent substream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed of substream `index` under `base`. Substreams are keyed, not
/// sequential, so draws do not depend on processing order.
constexpr std::uint64_t substream_seed(std::uint64_t base, std::uint64_t index) {
    return splitmix64(splitmix64(base) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

constexpr std::uint64_t substream_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
    return substream_seed(substream_seed(base, a), b);
}

using Rng = std::mt19937_64;

} // namespace exmort
