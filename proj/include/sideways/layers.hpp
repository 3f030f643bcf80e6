// Copyright 2026 The Sideways Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "sideways/random.hpp"
#include "sideways/tensor.hpp"

namespace sideways {

enum class LayerKind {
  kAffine,        // y = W x + b on the flattened input
  kConv2d,        // zero-padded "same" convolution, HWC layout
  kRelu,          // elementwise max(0, x)
  kMaxPool2d,     // per-channel window max, ties -> lowest flat index
  kTileUpsample,  // nearest-neighbour upsample by an integer factor
  kSpaceToDepth,  // b x b spatial blocks folded into channels
  kScaleShift,    // per-channel y = gamma * x + beta
};

// Static description of one layer.  Only the fields relevant to `kind`
// are read; factory helpers below fill them in.
struct LayerSpec {
  LayerKind kind = LayerKind::kRelu;
  int64_t in_features = 0;
  int64_t out_features = 0;
  int64_t kernel_h = 0;
  int64_t kernel_w = 0;
  int64_t in_channels = 0;
  int64_t out_channels = 0;
  int64_t stride = 1;
  int64_t window = 0;
  int64_t factor = 0;
  int64_t block = 0;
  int64_t channels = 0;

  static LayerSpec affine(int64_t in, int64_t out);
  static LayerSpec conv2d(int64_t kh, int64_t kw, int64_t cin, int64_t cout,
                          int64_t stride = 1);
  static LayerSpec relu();
  static LayerSpec maxpool2d(int64_t window, int64_t stride);
  static LayerSpec tile_upsample(int64_t factor);
  static LayerSpec space_to_depth(int64_t block);
  static LayerSpec scale_shift(int64_t channels);
};

// Ordered, named collection of parameter tensors.
struct ParamSet {
  std::vector<std::string> names;
  std::vector<Tensor> tensors;

  size_t size() const { return tensors.size(); }
  bool empty() const { return tensors.empty(); }
  Tensor& operator[](size_t i) { return tensors[i]; }
  const Tensor& operator[](size_t i) const { return tensors[i]; }

  void add_(const ParamSet& other);
  void scale_(double factor);
  void set_precision(Precision prec);
  int64_t total_scalars() const;
  static ParamSet zeros_like(const ParamSet& other);
};

// Result of pulling a cotangent back through a layer.
struct VjpResult {
  Tensor input_grad;
  ParamSet param_grads;  // aligned with the layer's ParamSet; empty if none
};

using Pullback = std::function<VjpResult(const Tensor&)>;

struct LayerOutput {
  Tensor output;
  Pullback pullback;
  // Number of scalar slots the pullback closure keeps alive (cached
  // inputs, weights, argmax indices).  Feeds the live-memory ledger.
  int64_t cached_scalars = 0;
};

// Fan-in-scaled uniform weight init; biases start at zero, per-channel
// scales at one.
ParamSet init_params(const LayerSpec& spec, RandomSource& rng);

// Output shape the layer would produce for a given input shape, without
// touching parameters.  Used for topology wiring and zero priming.
std::vector<int64_t> layer_out_shape(const LayerSpec& spec,
                                     const std::vector<int64_t>& in_shape);

// Runs the layer forward and returns the output plus a pullback closure
// capturing everything needed for the backward pass at this input.
LayerOutput layer_apply(const LayerSpec& spec, const ParamSet& params,
                        const Tensor& input);

// --- shortcut dimension matching -------------------------------------

enum class TauKind { kIdentity, kMaxPool, kTile };

// Parameter-free resampler that reconciles the spatial size of a
// skip-connection source with its destination.
struct TauSpec {
  TauKind kind = TauKind::kIdentity;
  int64_t factor = 1;
};

LayerOutput tau_apply(const TauSpec& tau, const Tensor& input);

// --- fusion of direct and shortcut inputs ----------------------------

enum class FusionKind {
  kAdd,           // elementwise sum; any shape mismatch is a hard error
  kConcat,        // concatenate along the channel (last) axis
  kDropShortcut,  // diagnostic: forward ignores the shortcut entirely
};

struct FuseResult {
  Tensor fused;
  // Splits a cotangent on the fused tensor into (direct, shortcut)
  // cotangents.  kDropShortcut returns an absent shortcut gradient.
  std::function<std::pair<Tensor, Tensor>(const Tensor&)> pullback;
};

FuseResult fuse_apply(FusionKind kind, const Tensor& direct, const Tensor& shortcut);

// --- loss heads ------------------------------------------------------

struct HeadResult {
  double loss = 0.0;
  Tensor grad;  // d loss / d predictions
};

// Cross-entropy of softmax(logits) against an integer label, computed
// with max subtraction.  Logits are flattened if not rank-1.
HeadResult softmax_xent(const Tensor& logits, int64_t label);

// Mean squared error ||pred - target||^2 / numel.
HeadResult mse_loss(const Tensor& pred, const Tensor& target);

}  // namespace sideways
