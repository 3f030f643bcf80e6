// Copyright 2026 The Sideways Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>

namespace sideways {

// Counter-based deterministic random stream (splitmix64 finalizer).
//
// A stream is a (key, counter) pair; draw i of stream k is a pure
// function of (k, i), so results are bit-identical across platforms
// and independent of evaluation order elsewhere in the program.
// `split` derives a child stream whose draws are decorrelated from the
// parent's, which lets each unit / parameter / frame own a private
// stream without any global sequencing.
class RandomSource {
 public:
  explicit RandomSource(uint64_t seed) : key_(mix(seed ^ 0x7f4a7c15u)) {}

  // Child stream addressed by an integer subkey.
  RandomSource split(uint64_t subkey) const {
    return RandomSource(mix(key_ ^ mix(subkey + 0x9e3779b97f4a7c15ull)), 0);
  }
  // Child stream addressed by a label (FNV-1a hash of the bytes).
  RandomSource split(const std::string& label) const;

  uint64_t next_u64() {
    uint64_t z = key_ + (++counter_) * 0x9e3779b97f4a7c15ull;
    return mix(z);
  }

  // Uniform in [0, 1) with 53 bits of mantissa.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller (consumes two draws, no cached spare).
  double normal();

  // Uniform integer in [lo, hi).
  int64_t uniform_int(int64_t lo, int64_t hi);

 private:
  RandomSource(uint64_t key, uint64_t counter) : key_(key), counter_(counter) {}

  static uint64_t mix(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  uint64_t key_ = 0;
  uint64_t counter_ = 0;
};

}  // namespace sideways
