// Copyright 2026 The Sideways Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sideways/layers.hpp"
#include "sideways/sequence.hpp"
#include "sideways/tensor.hpp"

namespace sideways {

// Propagation style of the pipelined trainer.
//
//   kSideways      each unit feeds only its direct successor.
//   kSkipSideways  adds shortcut edges that jump `skip_span` units, in
//                  both the activation and the gradient stream.
//   kFaOnly        shortcut edges carry activations forward but no
//                  gradient flows back across them.
enum class Mode { kSideways, kSkipSideways, kFaOnly };

enum class WarmupPolicy {
  kDiscard,      // units stay idle until every input edge has a message
  kZeroBuffers,  // message buffers start as zero frames marked stale
};

enum class UpdateCadence { kPerSequence, kPerStep };

enum class HeadKind { kCrossEntropy, kMse };

enum class OptimizerKind { kSgd, kAdam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kSgd;
  double alpha = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool cosine_decay = false;
  int64_t total_updates = 0;  // horizon for cosine decay; 0 disables it
};

struct EngineConfig {
  Mode mode = Mode::kSkipSideways;
  FusionKind fusion = FusionKind::kConcat;
  int skip_span = 2;
  UpdateCadence cadence = UpdateCadence::kPerSequence;
  WarmupPolicy warmup = WarmupPolicy::kDiscard;
  bool input_shortcut = false;  // allow a shortcut edge straight from the input
  Precision precision = Precision::kDouble;
  OptimizerConfig optimizer;
  int num_threads = 1;  // >1 steps all units concurrently
};

// One trainable pipeline stage: a short chain of layers.
struct UnitSpec {
  std::vector<LayerSpec> layers;
};

struct NetworkTopology {
  std::vector<UnitSpec> units;
  HeadKind head = HeadKind::kCrossEntropy;
  std::vector<int64_t> input_shape;  // shape of a single frame
};

enum class MessageKind { kActivation, kGradient };

// One payload travelling over an edge for exactly one step.  An absent
// payload means no message; `valid` is false for zero frames injected
// while the pipeline fills or drains, and is ANDed across inputs so
// anything downstream of a stale frame is also stale.
struct StepMessage {
  Tensor payload;
  MessageKind kind = MessageKind::kActivation;
  int64_t origin_frame = -1;
  bool valid = false;

  bool present() const { return !payload.absent(); }
};

// Resolved wiring for one unit: where its shortcut comes from and how
// the shortcut activation is resampled to the unit's input geometry.
struct UnitWiring {
  bool has_shortcut = false;
  int shortcut_source = -1;  // 0 means the raw input edge
  TauSpec tau;
  std::vector<int64_t> tau_out_shape;
  std::vector<int64_t> gamma_shape;  // fused input shape
};

struct CompiledTopology {
  int depth = 0;
  std::vector<UnitWiring> wiring;             // index 1..depth; [0] unused
  std::vector<std::vector<int64_t>> h_shape;  // index 0..depth; [0] = input
  int min_input_delay = 0;  // steps on the fastest input-to-output path
};

// Validates shapes, derives shortcut resamplers, and computes path
// delays for the given topology under the given config.
CompiledTopology compile_topology(const NetworkTopology& topo, const EngineConfig& cfg);

// Indices of the input frames that can influence the activation a unit
// emits at `step` (negative entries denote slots before the first
// frame).  Sorted ascending.
std::vector<int64_t> influence_set(const CompiledTopology& ct, int unit, int64_t step);

struct StepLoss {
  int64_t step = 0;
  int64_t origin_frame = -1;
  int64_t clip_tag = -1;
  double loss = 0.0;
  int64_t predicted = -1;
  bool correct = false;
};

// Gradient (or parameter) tensors organised as [unit][layer] -> ParamSet.
using GradStack = std::vector<std::vector<ParamSet>>;

struct RunOptions {
  bool process_gradients = true;
  bool train = false;                // apply optimizer updates per the cadence
  bool record_per_step_grads = false;
  bool record_memory_trace = false;
  bool record_outputs = false;     // keep the top activation of every step
  bool record_unit_cache = false;  // keep per-unit cache sizes per step
};

struct RunResult {
  std::vector<StepLoss> losses;  // losses at non-stale output steps, in order
  double mean_loss = 0.0;
  double accuracy = 0.0;  // fraction of correct predictions (classification)
  int64_t steps_run = 0;
  GradStack total_grad;  // accumulated over the run (before any update)
  // Accumulator snapshot after each step's gradient work, taken before
  // any per-step update (opt-in).  Cumulative under per-sequence cadence.
  std::vector<GradStack> per_step_grad;
  // Live scalar count after every step (opt-in), and its maximum.
  std::vector<int64_t> memory_trace;
  int64_t peak_live_scalars = 0;
  // Top-of-stack activation after every step (opt-in); absent entries
  // mark steps where the last unit had not fired yet.
  std::vector<Tensor> output_trace;
  // Pullback-cache scalars per unit after every step (opt-in); zero for
  // units that did not fire that step.
  std::vector<std::vector<int64_t>> unit_cache_trace;
};

struct OptimizerState {
  int64_t update_count = 0;
  GradStack m;  // first moments (adaptive optimizer only)
  GradStack v;  // second moments
};

// One optimizer step on a single parameter set.  `m` and `v` are
// ignored for plain SGD; `update_index` drives bias correction and the
// cosine schedule.
void apply_update(ParamSet& params, const ParamSet& grads, ParamSet& m, ParamSet& v,
                  int64_t update_index, const OptimizerConfig& oc);

// Pipelined trainer.  Units exchange activation and gradient messages
// strictly forward in time: everything consumed at step t was produced
// at step t-1, and each unit keeps only the caches of its latest step,
// so live memory does not grow with sequence length.
class Engine {
 public:
  Engine(NetworkTopology topo, EngineConfig cfg, uint64_t seed);

  // Streams one sequence through the pipeline (length + depth steps).
  RunResult run_sequence(const FrameSequence& seq, const RunOptions& opts = {});
  // run_sequence with gradient processing and optimizer updates.
  RunResult train_sequence(const FrameSequence& seq);
  // Forward-only pass; no gradient work, no updates.
  RunResult evaluate(const FrameSequence& seq);

  const NetworkTopology& topology() const { return topo_; }
  const EngineConfig& config() const { return cfg_; }
  const CompiledTopology& compiled() const { return ct_; }

  GradStack& params() { return params_; }
  const GradStack& params() const { return params_; }
  OptimizerState& optimizer_state() { return opt_; }
  const OptimizerState& optimizer_state() const { return opt_; }

  // Scalars held in parameters, accumulators, and optimizer state.
  int64_t resident_scalars() const;

 private:
  struct Board {
    std::vector<StepMessage> act;          // [0..depth]; [0] = input deposit
    std::vector<StepMessage> grad_direct;  // [l] = gradient for unit l from l+1 / head
    std::vector<StepMessage> grad_skip;    // [l] = gradient for unit l over a shortcut
  };

  struct UnitScratch {
    bool fired = false;
    bool ever_fired = false;
    std::vector<Pullback> layer_pbs;
    std::function<std::pair<Tensor, Tensor>(const Tensor&)> fuse_pb;
    Pullback tau_pb;
    int64_t cached_scalars = 0;
  };

  Board make_board(bool zero_primed) const;
  void unit_step(int l, const Board& prev, Board& next, bool process_gradients);
  void head_step(int64_t step, Board& next, const FrameSequence& seq,
                 bool process_gradients, RunResult& out);
  void apply_unit_updates();
  int64_t live_scalars(const Board& board) const;
  void check_grads_finite(int64_t step) const;

  NetworkTopology topo_;
  EngineConfig cfg_;
  CompiledTopology ct_;
  GradStack params_;
  GradStack accum_;
  OptimizerState opt_;
  std::vector<UnitScratch> scratch_;  // [1..depth]
};

GradStack zeros_like_stack(const GradStack& other);
void add_stack_(GradStack& dst, const GradStack& src);
void scale_stack_(GradStack& dst, double factor);
bool stack_finite(const GradStack& s);
bool stack_bitwise_equal(const GradStack& a, const GradStack& b);
int64_t stack_scalars(const GradStack& s);

}  // namespace sideways
