// Copyright 2026 The Sideways Authors
// SPDX-License-Identifier: Apache-2.0

#include "sideways/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sideways/errors.hpp"

namespace sideways {

namespace {

int64_t wrap(int64_t v, int64_t m) {
  const int64_t r = v % m;
  return r < 0 ? r + m : r;
}

void check_spec(const SpriteSpec& spec) {
  if (spec.height < 2 || spec.width < 2) {
    throw ConfigError("sprite frames need height and width >= 2");
  }
  if (spec.sprite < 1 || spec.sprite >= spec.height || spec.sprite >= spec.width) {
    throw ConfigError("sprite edge " + std::to_string(spec.sprite) +
                      " does not fit a " + std::to_string(spec.height) + "x" +
                      std::to_string(spec.width) + " frame");
  }
  if (spec.classes.empty()) throw ConfigError("sprite spec needs at least one class");
  for (const VelocityClass& v : spec.classes) {
    if (v.dr == 0 && v.dc == 0) {
      throw ConfigError("zero velocity makes motion classes degenerate");
    }
  }
}

}  // namespace

std::vector<VelocityClass> four_direction_classes() {
  return {{0, 1}, {0, -1}, {1, 0}, {-1, 0}};
}

namespace {

// Shortest wrapped offset between x and centre on a ring of size n.
double torus_delta(int64_t x, double centre, int64_t n) {
  double d = std::fmod(static_cast<double>(x) - centre, static_cast<double>(n));
  if (d < 0) d += static_cast<double>(n);
  return std::min(d, static_cast<double>(n) - d);
}

}  // namespace

Tensor sprite_frame(const SpriteSpec& spec, int64_t row, int64_t col) {
  check_spec(spec);
  Tensor frame({spec.height, spec.width, 1});
  if (spec.blur > 0.0) {
    const double cr = static_cast<double>(row) + 0.5 * static_cast<double>(spec.sprite - 1);
    const double cc = static_cast<double>(col) + 0.5 * static_cast<double>(spec.sprite - 1);
    const double inv = 1.0 / (2.0 * spec.blur * spec.blur);
    for (int64_t r = 0; r < spec.height; ++r) {
      const double dr = torus_delta(r, cr, spec.height);
      for (int64_t c = 0; c < spec.width; ++c) {
        const double dc = torus_delta(c, cc, spec.width);
        frame.at(r * spec.width + c) = spec.amplitude * std::exp(-(dr * dr + dc * dc) * inv);
      }
    }
    return frame;
  }
  for (int64_t dr = 0; dr < spec.sprite; ++dr) {
    for (int64_t dc = 0; dc < spec.sprite; ++dc) {
      const int64_t r = wrap(row + dr, spec.height);
      const int64_t c = wrap(col + dc, spec.width);
      frame.at(r * spec.width + c) = spec.amplitude;
    }
  }
  return frame;
}

FrameSequence gen_translating_sprite(const SpriteSpec& spec, int64_t cls, int64_t row0,
                                     int64_t col0, int64_t frames) {
  check_spec(spec);
  if (frames < 1) throw ConfigError("clip needs at least one frame");
  if (cls < 0 || cls >= static_cast<int64_t>(spec.classes.size())) {
    throw ConfigError("velocity class " + std::to_string(cls) + " out of range");
  }
  const VelocityClass v = spec.classes[static_cast<size_t>(cls)];
  FrameSequence seq;
  seq.frames.reserve(static_cast<size_t>(frames));
  for (int64_t t = 0; t < frames; ++t) {
    seq.frames.push_back(sprite_frame(spec, row0 + t * v.dr, col0 + t * v.dc));
    seq.labels.push_back(cls);
    seq.clip_tags.push_back(0);
  }
  return seq;
}

FrameSequence gen_translating_sprite(const SpriteSpec& spec, int64_t frames,
                                     RandomSource& rng) {
  check_spec(spec);
  const int64_t cls = rng.uniform_int(0, static_cast<int64_t>(spec.classes.size()));
  const int64_t row0 = rng.uniform_int(0, spec.height);
  const int64_t col0 = rng.uniform_int(0, spec.width);
  return gen_translating_sprite(spec, cls, row0, col0, frames);
}

FrameSequence gen_future_frame_clip(const SpriteSpec& spec, int64_t cls, int64_t row0,
                                    int64_t col0, int64_t frames, int64_t delta) {
  if (delta < 0) throw ConfigError("future-frame delta must be >= 0");
  FrameSequence seq = gen_translating_sprite(spec, cls, row0, col0, frames + delta);
  seq.frames.resize(static_cast<size_t>(frames));
  seq.labels.resize(static_cast<size_t>(frames));
  seq.clip_tags.resize(static_cast<size_t>(frames));
  const VelocityClass v = spec.classes[static_cast<size_t>(cls)];
  seq.targets.reserve(static_cast<size_t>(frames));
  for (int64_t t = 0; t < frames; ++t) {
    seq.targets.push_back(
        sprite_frame(spec, row0 + (t + delta) * v.dr, col0 + (t + delta) * v.dc));
  }
  return seq;
}

FrameSequence gen_future_frame_clip(const SpriteSpec& spec, int64_t frames, int64_t delta,
                                    RandomSource& rng) {
  check_spec(spec);
  const int64_t cls = rng.uniform_int(0, static_cast<int64_t>(spec.classes.size()));
  const int64_t row0 = rng.uniform_int(0, spec.height);
  const int64_t col0 = rng.uniform_int(0, spec.width);
  return gen_future_frame_clip(spec, cls, row0, col0, frames, delta);
}

FrameSequence gen_constant(const Tensor& frame, int64_t frames, int64_t label) {
  if (frames < 1) throw ConfigError("clip needs at least one frame");
  FrameSequence seq;
  for (int64_t t = 0; t < frames; ++t) {
    seq.frames.push_back(frame);
    seq.labels.push_back(label);
    seq.clip_tags.push_back(0);
  }
  return seq;
}

FrameSequence gen_constant(const Tensor& frame, int64_t frames, const Tensor& target) {
  FrameSequence seq = gen_constant(frame, frames, 0);
  for (int64_t t = 0; t < frames; ++t) seq.targets.push_back(target);
  return seq;
}

FrameSequence gen_montage(const std::vector<FrameSequence>& clips, MontageMode mode) {
  if (clips.empty()) throw ConfigError("montage needs at least one clip");
  const std::vector<int64_t>& shape = clips[0].frames.at(0).shape();
  for (const FrameSequence& c : clips) {
    for (const Tensor& f : c.frames) {
      if (f.shape() != shape) {
        throw ShapeError("montage clips disagree on frame shape: " +
                         shape_to_string(shape) + " vs " + shape_to_string(f.shape()));
      }
    }
  }

  FrameSequence out;
  auto take = [&](const FrameSequence& c, int64_t i, int64_t tag) {
    out.frames.push_back(c.frames[static_cast<size_t>(i)]);
    if (!c.labels.empty()) out.labels.push_back(c.labels[static_cast<size_t>(i)]);
    if (!c.targets.empty()) out.targets.push_back(c.targets[static_cast<size_t>(i)]);
    out.clip_tags.push_back(tag);
  };

  if (mode == MontageMode::kConcat) {
    for (size_t k = 0; k < clips.size(); ++k) {
      for (int64_t i = 0; i < clips[k].length(); ++i) {
        take(clips[k], i, static_cast<int64_t>(k));
      }
    }
  } else {
    int64_t longest = 0;
    for (const FrameSequence& c : clips) longest = std::max(longest, c.length());
    for (int64_t i = 0; i < longest; ++i) {
      for (size_t k = 0; k < clips.size(); ++k) {
        if (i < clips[k].length()) take(clips[k], i, static_cast<int64_t>(k));
      }
    }
  }
  out.frame_rate_stride = clips[0].frame_rate_stride;
  return out;
}

FrameSequence subsample_framerate(const FrameSequence& seq, int64_t stride) {
  if (stride < 1) throw ConfigError("frame-rate stride must be >= 1");
  if (stride == 1) return seq;
  FrameSequence out;
  for (int64_t i = 0; i < seq.length(); i += stride) {
    out.frames.push_back(seq.frames[static_cast<size_t>(i)]);
    if (!seq.labels.empty()) out.labels.push_back(seq.labels[static_cast<size_t>(i)]);
    if (!seq.targets.empty()) out.targets.push_back(seq.targets[static_cast<size_t>(i)]);
    if (!seq.clip_tags.empty()) {
      out.clip_tags.push_back(seq.clip_tags[static_cast<size_t>(i)]);
    }
  }
  out.frame_rate_stride = seq.frame_rate_stride * stride;
  return out;
}

std::vector<FrameSequence> sprite_eval_grid(const SpriteSpec& spec, int64_t frames,
                                            int64_t start_stride) {
  check_spec(spec);
  if (start_stride < 1) throw ConfigError("start stride must be >= 1");
  std::vector<FrameSequence> suite;
  for (int64_t cls = 0; cls < static_cast<int64_t>(spec.classes.size()); ++cls) {
    for (int64_t r = 0; r < spec.height; r += start_stride) {
      for (int64_t c = 0; c < spec.width; c += start_stride) {
        suite.push_back(gen_translating_sprite(spec, cls, r, c, frames));
      }
    }
  }
  return suite;
}

std::vector<FrameSequence> future_frame_eval_grid(const SpriteSpec& spec, int64_t frames,
                                                  int64_t delta, int64_t start_stride) {
  check_spec(spec);
  if (start_stride < 1) throw ConfigError("start stride must be >= 1");
  std::vector<FrameSequence> suite;
  for (int64_t cls = 0; cls < static_cast<int64_t>(spec.classes.size()); ++cls) {
    for (int64_t r = 0; r < spec.height; r += start_stride) {
      for (int64_t c = 0; c < spec.width; c += start_stride) {
        suite.push_back(gen_future_frame_clip(spec, cls, r, c, frames, delta));
      }
    }
  }
  return suite;
}

}  // namespace sideways
