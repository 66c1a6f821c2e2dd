// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <initializer_list>

namespace siamban {

/// SplitMix64 finalizer; mixes a root seed with stream identifiers so each
/// consumer gets an independent, reproducible generator seed.
inline std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> stream) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  };
  std::uint64_t h = mix(root);
  for (std::uint64_t s : stream) h = mix(h ^ s);
  return h;
}

}  // namespace siamban
