#pragma once

#include <cstdint>
#include <random>

namespace pcm {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Independent generator for (master seed, stream, substream), e.g.
/// (seed, trajectory id, step). Same triple, same sequence.
inline Rng derive_stream(std::uint64_t master, std::uint64_t stream, std::uint64_t substream = 0) {
    const std::uint64_t s = splitmix64(splitmix64(splitmix64(master) ^ stream) ^ (substream * 0xd1b54a32d192ed03ULL));
    std::seed_seq seq{static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s >> 32)};
    return Rng(seq);
}

} // namespace pcm
