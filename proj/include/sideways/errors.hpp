// Copyright 2026 The Sideways Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace sideways {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shape or structure mismatch.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Invalid configuration value or malformed config file.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Non-finite loss or gradient encountered during a run.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& msg, int step, double loss)
      : Error(msg), step(step), loss(loss) {}
  int step;
  double loss;
};

// A memory budget was exceeded (unrolled-graph storage).
class CapacityError : public Error {
 public:
  explicit CapacityError(const std::string& msg) : Error(msg) {}
};

}  // namespace sideways
