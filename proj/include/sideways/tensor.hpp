// Copyright 2026 The Sideways Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sideways {

// Storage precision for tensor elements.  Values are always held as
// doubles; kSingle rounds every stored element through IEEE float so a
// run reproduces what a 32-bit pipeline would compute, while keeping a
// single code path.
enum class Precision { kDouble, kSingle };

// Dense row-major tensor of doubles with an int64 shape vector.
//
// A default-constructed tensor has no shape and no elements; the engine
// uses such "absent" tensors to model messages that have not yet been
// produced, so absence is representable without sentinels.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int64_t> shape, Precision prec = Precision::kDouble);
  Tensor(std::vector<int64_t> shape, std::vector<double> values,
         Precision prec = Precision::kDouble);

  static Tensor zeros_like(const Tensor& other);
  static Tensor full(std::vector<int64_t> shape, double value,
                     Precision prec = Precision::kDouble);

  const std::vector<int64_t>& shape() const { return shape_; }
  int64_t dim(size_t axis) const { return shape_.at(axis); }
  size_t rank() const { return shape_.size(); }
  int64_t numel() const { return static_cast<int64_t>(values_.size()); }
  bool absent() const { return shape_.empty() && values_.empty(); }
  Precision precision() const { return prec_; }
  void set_precision(Precision prec);

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  double& at(int64_t flat) { return values_[static_cast<size_t>(flat)]; }
  double at(int64_t flat) const { return values_[static_cast<size_t>(flat)]; }
  const std::vector<double>& values() const { return values_; }

  // Rounds every element through float when precision is kSingle.
  // Mutating code paths call this once after filling the buffer.
  void quantize();

  bool all_finite() const;
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  // In-place elementwise accumulate, flat ascending order.  Shapes must
  // match exactly; mismatches throw ShapeError.
  void add_(const Tensor& other);
  void scale_(double factor);

 private:
  std::vector<int64_t> shape_;
  std::vector<double> values_;
  Precision prec_ = Precision::kDouble;
};

int64_t numel_of(const std::vector<int64_t>& shape);
std::string shape_to_string(const std::vector<int64_t>& shape);

// True when both tensors have identical shape and bit-identical elements.
bool bitwise_equal(const Tensor& a, const Tensor& b);

// Sum_i a_i * b_i accumulated in flat ascending index order.
double inner_product(const Tensor& a, const Tensor& b);

// ||a - b|| / max(||b||, floor), flat ascending accumulation.
double relative_l2(const Tensor& a, const Tensor& b, double floor = 1e-12);

// Cosine similarity with the convention that two all-zero tensors score 1.
double cosine_similarity(const Tensor& a, const Tensor& b);

}  // namespace sideways
