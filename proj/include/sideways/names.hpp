// Copyright 2026 The Sideways Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "sideways/engine.hpp"

namespace sideways {

// Canonical text names for config enums, shared by the config parser,
// the CLI, and the checkpoint header.  The *_from_name parsers throw
// ConfigError on unknown names.

std::string mode_name(Mode m);
Mode mode_from_name(const std::string& s);

std::string fusion_name(FusionKind f);
FusionKind fusion_from_name(const std::string& s);

std::string cadence_name(UpdateCadence c);
UpdateCadence cadence_from_name(const std::string& s);

std::string warmup_name(WarmupPolicy w);
WarmupPolicy warmup_from_name(const std::string& s);

std::string precision_name(Precision p);
Precision precision_from_name(const std::string& s);

std::string optimizer_name(OptimizerKind k);
OptimizerKind optimizer_from_name(const std::string& s);

std::string head_name(HeadKind h);
HeadKind head_from_name(const std::string& s);

}  // namespace sideways
