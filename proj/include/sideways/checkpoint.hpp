// Copyright 2026 The Sideways Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "sideways/engine.hpp"

namespace sideways {

// Serializes the engine configuration as "key = value" lines, one per
// field, in a fixed order.  The inverse parser accepts exactly this
// output.
std::string engine_config_to_text(const EngineConfig& cfg);
EngineConfig engine_config_from_text(const std::string& text);

// Writes a flat, versioned binary container: a magic tag, the format
// version, the config text, the optimizer step count, and a list of
// named tensors (name, shape, little-endian float64 payload) covering
// all parameters and, when present, optimizer moments.  Round-trips
// bit-exactly.
void save_checkpoint(const std::string& path, const Engine& engine);

// Restores parameters and optimizer state saved by save_checkpoint
// into an engine with a matching topology; throws ConfigError on a
// malformed file and ShapeError when the tensors do not line up.
void load_checkpoint(const std::string& path, Engine& engine);

// Config text stored inside a checkpoint file, for inspection.
std::string read_checkpoint_config(const std::string& path);

}  // namespace sideways
