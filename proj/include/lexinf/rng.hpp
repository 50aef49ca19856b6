#ifndef LEXINF_RNG_HPP
#define LEXINF_RNG_HPP

#include <cstdint>
#include <initializer_list>
#include <random>

namespace lexinf {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derive an independent stream from a master seed and a path of indices,
/// e.g. (seed, word, draw). Results do not depend on scheduling order.
inline Rng substream(std::uint64_t master, std::initializer_list<std::uint64_t> path)
{
    std::uint64_t h = mix64(master);
    for (auto p : path)
        h = mix64(h ^ mix64(p + 0x632be59bd9b4e019ULL));
    std::seed_seq seq{static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
    return Rng(seq);
}

// Stream tags, kept distinct from word/draw indices.
inline constexpr std::uint64_t kForwardTag = 0xF0F0F0F0ULL;
inline constexpr std::uint64_t kBackwardTag = 0xB0B0B0B0ULL;

} // namespace lexinf

#endif // LEXINF_RNG_HPP
