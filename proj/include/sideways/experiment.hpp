// Copyright 2026 The Sideways Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "sideways/config.hpp"
#include "sideways/datagen.hpp"
#include "sideways/engine.hpp"

namespace sideways {

// Sprite geometry implied by an experiment config.
SpriteSpec sprite_from_config(const ExperimentConfig& cfg);

// Prediction horizon for the frame-prediction task; future_delta < 0
// resolves to the unit count, so the exit-side output is scored against
// the frame entering the pipeline at the same step.
int64_t resolved_future_delta(const ExperimentConfig& cfg);

// Small convolutional pipeline matched to the config: 3x3 stages, a
// stride-halving stage before the last unit, and a task head (pooled
// affine classifier, or an upsampling decoder for frame prediction).
// Shortcut fan-in follows the configured mode and fusion, so the unit
// input widths always line up with what the engine will fuse.
NetworkTopology build_topology(const ExperimentConfig& cfg);

// Training clips for one epoch, deterministic in (cfg.seed, epoch), so
// every epoch streams fresh clips.  Montage cuts, frame-rate stride,
// and the task's supervision are applied here.
std::vector<FrameSequence> build_train_set(const ExperimentConfig& cfg,
                                           int64_t epoch = 0);

// Evaluation suite: the full stratified start grid at the configured
// stride (montage never applies to evaluation).
std::vector<FrameSequence> build_eval_set(const ExperimentConfig& cfg);

struct EvalMetrics {
  double loss = 0.0;
  double accuracy = 0.0;
  int64_t steps = 0;  // scored output steps
};

struct EpochMetrics {
  int64_t epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;
  int64_t steps = 0;
};

struct TrainOutcome {
  std::vector<EpochMetrics> train_epochs;
  EvalMetrics eval;
  std::unique_ptr<Engine> engine;  // trained engine, for inspection
};

// Step-weighted metrics of a forward-only pass over a clip set.
EvalMetrics evaluate_suite(Engine& engine, const std::vector<FrameSequence>& suite);

// Builds the engine, trains for cfg.epochs epochs, evaluates once.
TrainOutcome train_and_eval(const ExperimentConfig& cfg);

// One line of the canonical metrics CSV.
struct MetricsRow {
  std::string mode;
  uint64_t seed = 0;
  int64_t stride = 1;
  int64_t cuts = 0;
  int64_t epoch = 0;        // -1 for evaluation rows
  std::string split;        // "train" or "eval"
  double loss = 0.0;
  double accuracy = 0.0;
  int64_t steps = 0;
};

std::vector<MetricsRow> outcome_rows(const ExperimentConfig& cfg,
                                     const TrainOutcome& outcome);

// Columns: mode,seed,stride,cuts,epoch,split,loss,accuracy,steps.
void write_metrics_csv(const std::vector<MetricsRow>& rows, std::ostream& os);

// Python source for a small matplotlib reader of the metrics CSV.
std::string metrics_plot_script(const std::string& csv_name);

// Runs one config end to end and writes metrics.csv, an optional
// gradient-similarity CSV, and plot_metrics.py under cfg.out_dir.
// Returns the metrics rows it wrote.
std::vector<MetricsRow> run_experiment(const ExperimentConfig& cfg);

// Runs the same config once per (mode, seed) and writes one combined
// metrics.csv under base.out_dir.
std::vector<MetricsRow> run_mode_comparison(const ExperimentConfig& base,
                                            const std::vector<Mode>& modes,
                                            const std::vector<uint64_t>& seeds);

}  // namespace sideways
