// Copyright 2026 The Sideways Authors
// SPDX-License-Identifier: Apache-2.0

#include "sideways/random.hpp"

#include <cmath>

#include "sideways/errors.hpp"

namespace sideways {

RandomSource RandomSource::split(const std::string& label) const {
  uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a 64-bit offset basis
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return split(h);
}

double RandomSource::normal() {
  // 1 - uniform() keeps the argument of log strictly positive.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  constexpr double kTwoPi = 6.283185307179586476925286766559;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

int64_t RandomSource::uniform_int(int64_t lo, int64_t hi) {
  if (hi <= lo) throw Error("uniform_int: empty range");
  const uint64_t span = static_cast<uint64_t>(hi - lo);
  return lo + static_cast<int64_t>(next_u64() % span);
}

}  // namespace sideways
