#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace uqasr {

using Rng = std::mt19937_64;

uint64_t splitmix64(uint64_t x);

// Named sub-seed: every random stream in the pipeline is derived from one
// master seed through a tag and an optional index.
uint64_t derive_seed(uint64_t parent, std::string_view tag, uint64_t index = 0);

// 64-bit FNV-1a, used for config fingerprints and id-based seeds.
uint64_t fnv1a64(std::string_view data, uint64_t basis = 0xcbf29ce484222325ULL);

}  // namespace uqasr
