// Copyright 2026 The Sideways Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "sideways/engine.hpp"
#include "sideways/sequence.hpp"

namespace sideways {

// Supervision for a single prediction: `label` for the classification
// head, `target` for the regression head.
struct HeadTarget {
  int64_t label = -1;
  Tensor target;
};

struct StaticGradResult {
  GradStack grads;
  double loss = 0.0;
  std::vector<Tensor> activations;  // [0..depth], input first
};

// Exact reverse-mode gradients of the time-collapsed network: the unit
// graph applied to one frame as a plain feed-forward DAG, shortcut
// edges included (subject to mode), with no pipeline delays anywhere.
StaticGradResult collapse_static_grads(const NetworkTopology& topo,
                                       const EngineConfig& cfg, const GradStack& params,
                                       const Tensor& frame, const HeadTarget& target);

struct UnrolledGradResult {
  GradStack grads;
  double total_loss = 0.0;
  int64_t valid_losses = 0;
  int64_t stored_scalars = 0;  // activation caches the oracle had to keep
};

// True gradients of the summed per-step loss over the step-unrolled
// pipeline graph.  The forward sweep replays the engine's scheduling
// rules exactly; the backward sweep runs full reverse mode across
// steps, which requires caching every step of every unit.  That cache
// grows linearly with sequence length and is capped by
// `budget_scalars`; exceeding it throws CapacityError.
//
// By default the reverse sweep follows every data edge, so the result
// is the exact gradient of the function the pipeline computed.  With
// `respect_mode_gradient_rule` the forward-only-shortcut ablation also
// severs shortcut gradients here, matching what that mode trains with.
UnrolledGradResult unrolled_true_grads(const NetworkTopology& topo,
                                       const EngineConfig& cfg, const GradStack& params,
                                       const FrameSequence& seq,
                                       int64_t budget_scalars = int64_t(1) << 24,
                                       bool respect_mode_gradient_rule = false);

struct GradientRow {
  std::string name;
  double cosine = 1.0;
  double rel_l2 = 0.0;
};

struct GradientReport {
  std::vector<GradientRow> rows;  // one per parameter tensor
  double global_cosine = 1.0;     // over all tensors flattened together
  double global_rel_l2 = 0.0;
};

// Compares two gradient collections tensor by tensor; `reference` is
// the denominator for relative distances.  Two all-zero tensors score
// cosine 1.
GradientReport grad_similarity(const GradStack& candidate, const GradStack& reference);

// Columns: layer,cosine,rel_l2.  The final row, named "all", carries
// the whole-stack values.
void write_gradient_report_csv(const GradientReport& report, std::ostream& os);

}  // namespace sideways
