// Copyright 2026 The Sideways Authors
// SPDX-License-Identifier: Apache-2.0

#include "sideways/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "sideways/errors.hpp"

namespace sideways {

int64_t numel_of(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 0) throw ShapeError("negative dimension in shape " + shape_to_string(shape));
    n *= d;
  }
  return n;
}

std::string shape_to_string(const std::vector<int64_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(std::vector<int64_t> shape, Precision prec)
    : shape_(std::move(shape)),
      values_(static_cast<size_t>(numel_of(shape_)), 0.0),
      prec_(prec) {}

Tensor::Tensor(std::vector<int64_t> shape, std::vector<double> values, Precision prec)
    : shape_(std::move(shape)), values_(std::move(values)), prec_(prec) {
  if (static_cast<int64_t>(values_.size()) != numel_of(shape_)) {
    throw ShapeError("value count " + std::to_string(values_.size()) +
                     " does not match shape " + shape_to_string(shape_));
  }
  quantize();
}

Tensor Tensor::zeros_like(const Tensor& other) {
  return Tensor(other.shape_, other.prec_);
}

Tensor Tensor::full(std::vector<int64_t> shape, double value, Precision prec) {
  Tensor t(std::move(shape), prec);
  for (double& v : t.values_) v = value;
  t.quantize();
  return t;
}

void Tensor::set_precision(Precision prec) {
  prec_ = prec;
  quantize();
}

void Tensor::quantize() {
  if (prec_ != Precision::kSingle) return;
  for (double& v : values_) v = static_cast<double>(static_cast<float>(v));
}

bool Tensor::all_finite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::add_(const Tensor& other) {
  if (shape_ != other.shape_) {
    throw ShapeError("add_: shape mismatch " + shape_to_string(shape_) + " vs " +
                     shape_to_string(other.shape_));
  }
  for (size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  quantize();
}

void Tensor::scale_(double factor) {
  for (double& v : values_) v *= factor;
  quantize();
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  if (a.numel() == 0) return true;
  return std::memcmp(a.data(), b.data(),
                     sizeof(double) * static_cast<size_t>(a.numel())) == 0;
}

double inner_product(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("inner_product: shape mismatch " + shape_to_string(a.shape()) +
                     " vs " + shape_to_string(b.shape()));
  }
  double acc = 0.0;
  const double* pa = a.data();
  const double* pb = b.data();
  for (int64_t i = 0; i < a.numel(); ++i) acc += pa[i] * pb[i];
  return acc;
}

double relative_l2(const Tensor& a, const Tensor& b, double floor) {
  if (a.shape() != b.shape()) {
    throw ShapeError("relative_l2: shape mismatch " + shape_to_string(a.shape()) +
                     " vs " + shape_to_string(b.shape()));
  }
  double diff = 0.0, ref = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    const double d = a.at(i) - b.at(i);
    diff += d * d;
    ref += b.at(i) * b.at(i);
  }
  return std::sqrt(diff) / std::max(std::sqrt(ref), floor);
}

double cosine_similarity(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("cosine_similarity: shape mismatch " + shape_to_string(a.shape()) +
                     " vs " + shape_to_string(b.shape()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    dot += a.at(i) * b.at(i);
    na += a.at(i) * a.at(i);
    nb += b.at(i) * b.at(i);
  }
  if (na == 0.0 && nb == 0.0) return 1.0;
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace sideways
