// Copyright 2026 The Sideways Authors
// SPDX-License-Identifier: Apache-2.0

#include "sideways/names.hpp"

#include "sideways/errors.hpp"

namespace sideways {

namespace {

[[noreturn]] void bad_name(const char* what, const std::string& s) {
  throw ConfigError(std::string("unknown ") + what + " name: '" + s + "'");
}

}  // namespace

std::string mode_name(Mode m) {
  switch (m) {
    case Mode::kSideways: return "sideways";
    case Mode::kSkipSideways: return "skip_sideways";
    case Mode::kFaOnly: return "fa_only";
  }
  return "?";
}

Mode mode_from_name(const std::string& s) {
  if (s == "sideways") return Mode::kSideways;
  if (s == "skip_sideways" || s == "skip") return Mode::kSkipSideways;
  if (s == "fa_only") return Mode::kFaOnly;
  bad_name("mode", s);
}

std::string fusion_name(FusionKind f) {
  switch (f) {
    case FusionKind::kAdd: return "add";
    case FusionKind::kConcat: return "concat";
    case FusionKind::kDropShortcut: return "drop_shortcut";
  }
  return "?";
}

FusionKind fusion_from_name(const std::string& s) {
  if (s == "add") return FusionKind::kAdd;
  if (s == "concat") return FusionKind::kConcat;
  if (s == "drop_shortcut") return FusionKind::kDropShortcut;
  bad_name("fusion", s);
}

std::string cadence_name(UpdateCadence c) {
  return c == UpdateCadence::kPerSequence ? "per_sequence" : "per_step";
}

UpdateCadence cadence_from_name(const std::string& s) {
  if (s == "per_sequence") return UpdateCadence::kPerSequence;
  if (s == "per_step") return UpdateCadence::kPerStep;
  bad_name("update cadence", s);
}

std::string warmup_name(WarmupPolicy w) {
  return w == WarmupPolicy::kDiscard ? "discard" : "zero_buffers";
}

WarmupPolicy warmup_from_name(const std::string& s) {
  if (s == "discard") return WarmupPolicy::kDiscard;
  if (s == "zero_buffers") return WarmupPolicy::kZeroBuffers;
  bad_name("warmup policy", s);
}

std::string precision_name(Precision p) {
  return p == Precision::kDouble ? "double" : "single";
}

Precision precision_from_name(const std::string& s) {
  if (s == "double") return Precision::kDouble;
  if (s == "single") return Precision::kSingle;
  bad_name("precision", s);
}

std::string optimizer_name(OptimizerKind k) {
  return k == OptimizerKind::kSgd ? "sgd" : "adam";
}

OptimizerKind optimizer_from_name(const std::string& s) {
  if (s == "sgd") return OptimizerKind::kSgd;
  if (s == "adam") return OptimizerKind::kAdam;
  bad_name("optimizer", s);
}

std::string head_name(HeadKind h) {
  return h == HeadKind::kCrossEntropy ? "cross_entropy" : "mse";
}

HeadKind head_from_name(const std::string& s) {
  if (s == "cross_entropy") return HeadKind::kCrossEntropy;
  if (s == "mse") return HeadKind::kMse;
  bad_name("head", s);
}

}  // namespace sideways
