#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace reavae {

/// One splitmix64 step: advances `state` and returns the mixed output.
constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept
{
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Derives a child seed from a base seed and a path of integer tags.
/// Every random stream in the project (noise images, sampled styles, batch
/// order, weight init) is addressed this way, so one integer reproduces a run.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) noexcept
{
    std::uint64_t state = base;
    std::uint64_t out = splitmix64(state);
    for (std::uint64_t t : tags) {
        state = out ^ (t + 0x632BE59BD9B4E019ull);
        out = splitmix64(state);
    }
    return out;
}

// Stream tags used with derive_seed.
namespace seed_tag {
inline constexpr std::uint64_t noise = 1;
inline constexpr std::uint64_t style = 2;
inline constexpr std::uint64_t batch = 3;
inline constexpr std::uint64_t init = 4;
inline constexpr std::uint64_t reparam = 5;
inline constexpr std::uint64_t layout = 6;
inline constexpr std::uint64_t pattern = 7;
inline constexpr std::uint64_t crop = 8;
inline constexpr std::uint64_t kid_blocks = 9;
inline constexpr std::uint64_t color = 10;
} // namespace seed_tag

using Rng = std::mt19937_64;

template <class T, class It>
void fill_normal(Rng& rng, It first, It last)
{
    std::normal_distribution<double> dist(0.0, 1.0);
    for (; first != last; ++first) *first = static_cast<T>(dist(rng));
}

} // namespace reavae
