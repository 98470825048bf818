#pragma once

#include <cstdint>
#include <random>

namespace spectranet {

using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Child seed for stream `stream`, item `index` of a master seed. Independent of
/// evaluation order, so parallel and serial generation agree.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                    std::uint64_t index = 0) noexcept {
  return splitmix64(splitmix64(splitmix64(master) ^ (stream * 0xd1b54a32d192ed03ULL)) ^ index);
}

// Well-known stream tags.
namespace stream {
inline constexpr std::uint64_t frame = 1;
inline constexpr std::uint64_t eval_frame = 2;
inline constexpr std::uint64_t class_spec = 3;
inline constexpr std::uint64_t split = 4;
inline constexpr std::uint64_t model_init = 5;
inline constexpr std::uint64_t shuffle = 6;
inline constexpr std::uint64_t dropout = 7;
inline constexpr std::uint64_t swag = 8;
inline constexpr std::uint64_t materials = 9;
}  // namespace stream

}  // namespace spectranet
