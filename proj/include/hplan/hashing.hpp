// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string>
#include <string_view>

namespace hplan
{

/// 64-bit FNV-1a. Stable across platforms; used for seeds, cache keys and fingerprints.
[[nodiscard]] constexpr std::uint64_t fnv1a64(std::string_view data, std::uint64_t hash = 0xcbf29ce484222325ULL) noexcept
{
    for (unsigned char c: data)
    {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

/// splitmix64 finalizer.
[[nodiscard]] constexpr std::uint64_t mix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives a seed from a master seed, a string key and integer coordinates.
/// Position-derived: the result depends only on the arguments, never on call order.
[[nodiscard]] std::uint64_t deriveSeed(std::uint64_t master,
                                       std::string_view key,
                                       std::initializer_list<std::int64_t> coords = {});

[[nodiscard]] std::string hex64(std::uint64_t value);

/// Uniform double in [0, 1) from the top 53 bits of a 64-bit engine draw.
/// Avoids std::uniform_real_distribution, whose output is implementation-defined.
[[nodiscard]] inline double uniform01(std::mt19937_64& engine)
{
    return static_cast<double>(engine() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, bound). `bound` must be positive.
[[nodiscard]] inline std::uint64_t uniformBelow(std::mt19937_64& engine, std::uint64_t bound)
{
    return static_cast<std::uint64_t>(uniform01(engine) * static_cast<double>(bound)) % bound;
}

} // namespace hplan
