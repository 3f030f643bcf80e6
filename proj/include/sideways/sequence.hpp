// Copyright 2026 The Sideways Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "sideways/tensor.hpp"

namespace sideways {

// An ordered stream of frames with per-frame supervision.
//
// `labels` drives the classification head, `targets` the regression
// head; only the one matching the network head needs to be populated.
// `clip_tags` records which source clip each frame came from when
// sequences are spliced together, so per-step metrics can be bucketed
// around clip boundaries.
struct FrameSequence {
  std::vector<Tensor> frames;
  std::vector<int64_t> labels;
  std::vector<Tensor> targets;
  std::vector<int64_t> clip_tags;
  // Stride relative to the generator's native rate (1 = every frame).
  int64_t frame_rate_stride = 1;

  int64_t length() const { return static_cast<int64_t>(frames.size()); }
};

}  // namespace sideways
