// Copyright 2026 The Sideways Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "sideways/datagen.hpp"
#include "sideways/engine.hpp"

namespace sideways {

enum class TaskKind { kDirectionClassification, kFutureFrame };

std::string task_name(TaskKind t);
TaskKind task_from_name(const std::string& s);

// Engine settings tuned for the toy training tasks (adaptive optimizer,
// per-step updates); the plain EngineConfig default stays conservative.
EngineConfig default_experiment_engine();

// Everything that determines one training run.  All fields have
// file-level defaults; see config_to_text for the canonical key list.
struct ExperimentConfig {
  TaskKind task = TaskKind::kDirectionClassification;

  // data
  int64_t frame_height = 12;
  int64_t frame_width = 12;
  int64_t sprite = 2;
  double amplitude = 1.0;
  double sprite_blur = 0.0;  // > 0 renders the sprite as a Gaussian blob
  int64_t clip_frames = 16;    // native-rate frames per training clip
  int64_t train_clips = 24;    // clips per epoch
  int64_t eval_frames = 6;     // post-stride frames per evaluation clip
  int64_t eval_start_stride = 1;
  int64_t stride = 1;          // frame-rate subsampling of every clip
  int64_t future_delta = -1;   // frames ahead to predict; -1 tracks depth
  int64_t montage_cuts = 0;    // splice points per training sequence
  MontageMode montage_mode = MontageMode::kConcat;

  // model
  int64_t depth = 4;
  int64_t channels = 8;

  // run
  int64_t epochs = 150;
  uint64_t seed = 1;
  std::string out_dir = ".";
  bool write_gradsim = false;

  EngineConfig engine = default_experiment_engine();
};

// Parsed "section.key" -> raw value pairs.  The format is sectioned
// key = value text; '#' and ';' start comments; later duplicates win.
using KeyValueMap = std::map<std::string, std::string>;

KeyValueMap parse_config_text(const std::string& text);
KeyValueMap parse_config_file(const std::string& path);

// Applies one key; unknown keys and malformed values throw ConfigError.
void apply_config_key(ExperimentConfig& cfg, const std::string& key,
                      const std::string& value);

ExperimentConfig config_from_map(const KeyValueMap& kv,
                                 const ExperimentConfig& base = {});
ExperimentConfig load_experiment_config(const std::string& path);

// Canonical sectioned text listing every key with its current value.
std::string config_to_text(const ExperimentConfig& cfg);

}  // namespace sideways
