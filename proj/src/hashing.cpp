// SPDX-License-Identifier: Apache-2.0
#include <hplan/hashing.hpp>

#include <fmt/format.h>

namespace hplan
{

std::uint64_t deriveSeed(std::uint64_t master, std::string_view key, std::initializer_list<std::int64_t> coords)
{
    auto h = fnv1a64(key, mix64(master));
    for (auto const c: coords)
        h = mix64(h ^ static_cast<std::uint64_t>(c));
    return mix64(h);
}

std::string hex64(std::uint64_t value)
{
    return fmt::format("{:016x}", value);
}

} // namespace hplan
