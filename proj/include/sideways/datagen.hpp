// Copyright 2026 The Sideways Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "sideways/random.hpp"
#include "sideways/sequence.hpp"
#include "sideways/tensor.hpp"

namespace sideways {

// Constant per-frame velocity in pixels, row/column order.
struct VelocityClass {
  int64_t dr = 0;
  int64_t dc = 0;
};

// The canonical four-way label set: right, left, down, up.
std::vector<VelocityClass> four_direction_classes();

// Geometry of the synthetic moving-square videos.  Any single frame
// shows one square at some position; only the frame ORDER carries the
// motion class, which is what makes the classification task a probe of
// temporal integration.
struct SpriteSpec {
  int64_t height = 12;
  int64_t width = 12;
  int64_t sprite = 2;      // square edge length
  double amplitude = 1.0;  // pixel value inside the square
  double blur = 0.0;       // > 0: Gaussian blob of this sigma instead of a square
  std::vector<VelocityClass> classes = four_direction_classes();
};

// One frame with the sprite anchored at (row, col), toroidal wraparound,
// shape {height, width, 1}.  With blur == 0 the sprite is a hard square
// whose top-left corner sits at the anchor; with blur > 0 it is a
// Gaussian blob of peak `amplitude` centred on the square's centre, so
// the image autocorrelation length scales with `blur` while the frame
// sum stays translation invariant either way.
Tensor sprite_frame(const SpriteSpec& spec, int64_t row, int64_t col);

// Clip of `frames` frames: the square starts at (row0, col0) and moves
// with the class velocity, wrapping around.  All labels equal `cls`.
FrameSequence gen_translating_sprite(const SpriteSpec& spec, int64_t cls, int64_t row0,
                                     int64_t col0, int64_t frames);

// Same, with class and start position drawn from `rng`.
FrameSequence gen_translating_sprite(const SpriteSpec& spec, int64_t frames,
                                     RandomSource& rng);

// Clip for the frame-prediction task: `targets[t]` holds the frame the
// motion will reach `delta` steps after frame t, so a model whose
// output at the pipe exit is compared against the frame entering the
// pipe is supervised `delta` frames into the future.
FrameSequence gen_future_frame_clip(const SpriteSpec& spec, int64_t cls, int64_t row0,
                                    int64_t col0, int64_t frames, int64_t delta);

FrameSequence gen_future_frame_clip(const SpriteSpec& spec, int64_t frames, int64_t delta,
                                    RandomSource& rng);

// `frames` copies of one frame, constant label/target.
FrameSequence gen_constant(const Tensor& frame, int64_t frames, int64_t label = 0);
FrameSequence gen_constant(const Tensor& frame, int64_t frames, const Tensor& target);

enum class MontageMode { kConcat, kInterleave };

// Splices clips into one sequence.  Concat appends them; interleave
// takes one frame from each clip in turn.  Labels, targets, and the
// clip tag travel with each frame, so supervision switches at every
// splice point.
FrameSequence gen_montage(const std::vector<FrameSequence>& clips, MontageMode mode);

// Keeps frames 0, stride, 2*stride, ... with their supervision, and
// multiplies the recorded frame-rate stride.
FrameSequence subsample_framerate(const FrameSequence& seq, int64_t stride);

// Evaluation suite enumerating every (class, start) combination with
// starts on a `start_stride` grid.  With start_stride 1 the suite is
// closed under translation: every square position occurs equally often
// for every class at every step index, so any classifier that sees one
// frame per decision scores exactly 1/num_classes on it.
std::vector<FrameSequence> sprite_eval_grid(const SpriteSpec& spec, int64_t frames,
                                            int64_t start_stride = 1);

// Frame-prediction counterpart of sprite_eval_grid.
std::vector<FrameSequence> future_frame_eval_grid(const SpriteSpec& spec, int64_t frames,
                                                  int64_t delta,
                                                  int64_t start_stride = 1);

}  // namespace sideways
