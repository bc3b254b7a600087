#pragma once

#include <cstdint>

namespace irsnoma {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Independent child seed for stream `stream` of `parent`.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t stream) {
  return mix64(mix64(parent) ^ mix64(stream + 0x632be59bd9b4e019ULL));
}

}  // namespace irsnoma
