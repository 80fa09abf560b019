#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace tabseq {

// 64-bit FNV-1a; stable across platforms and runs.
std::uint64_t stable_hash(std::string_view text);

// Independent generator derived from a run seed and a stream name
// ("splits", "init", "batching", ...).
std::mt19937_64 substream(std::uint64_t seed, std::string_view name);

}  // namespace tabseq
