#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace hypertrain {

using Rng = std::mt19937_64;

/// Seed of a named substream ("data", "init", "sampling", ...) of a run seed.
/// Stable across platforms and runs.
std::uint64_t substream_seed(std::uint64_t seed, std::string_view name, std::uint64_t index = 0);

inline Rng make_rng(std::uint64_t seed, std::string_view name, std::uint64_t index = 0)
{
    return Rng(substream_seed(seed, name, index));
}

} // namespace hypertrain
