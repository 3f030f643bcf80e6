// Copyright 2026 The Sideways Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <array>
#include <cmath>
#include <sstream>
#include <vector>

#include "sideways/datagen.hpp"
#include "sideways/engine.hpp"
#include "sideways/errors.hpp"
#include "sideways/gradsuite.hpp"
#include "sideways/oracles.hpp"
#include "sideways/random.hpp"

using namespace sideways;

namespace {

constexpr int64_t kSide = 6;

SpriteSpec small_sprite() {
  SpriteSpec spec;
  spec.height = kSide;
  spec.width = kSide;
  spec.sprite = 2;
  return spec;
}

NetworkTopology conv_chain(const EngineConfig& cfg, int depth = 4, int64_t ch = 2,
                           int64_t classes = 4) {
  NetworkTopology topo;
  topo.input_shape = {kSide, kSide, 1};
  topo.head = HeadKind::kCrossEntropy;
  std::vector<int64_t> width(depth + 1);
  width[0] = 1;
  for (int l = 1; l <= depth; ++l) {
    const int src = l - cfg.skip_span;
    const bool shortcut = cfg.mode != Mode::kSideways &&
                          (src >= 1 || (src == 0 && cfg.input_shortcut));
    int64_t in_ch = width[l - 1];
    if (shortcut && cfg.fusion == FusionKind::kConcat) in_ch += width[src];
    UnitSpec u;
    u.layers = {LayerSpec::conv2d(3, 3, in_ch, ch), LayerSpec::relu()};
    if (l == depth) {
      u.layers.push_back(LayerSpec::maxpool2d(kSide, kSide));
      u.layers.push_back(LayerSpec::affine(ch, classes));
    }
    width[l] = ch;
    topo.units.push_back(std::move(u));
  }
  return topo;
}

FrameSequence sprite_clip(int64_t frames, uint64_t seed) {
  RandomSource rng(seed);
  return gen_translating_sprite(small_sprite(), frames, rng);
}

EngineConfig skip_cfg() {
  EngineConfig cfg;
  cfg.mode = Mode::kSkipSideways;
  cfg.fusion = FusionKind::kConcat;
  return cfg;
}

double flat_rel_l2(const GradStack& a, const GradStack& b) {
  double diff = 0.0, ref = 0.0;
  for (size_t u = 0; u < a.size(); ++u) {
    for (size_t i = 0; i < a[u].size(); ++i) {
      for (size_t j = 0; j < a[u][i].size(); ++j) {
        for (int64_t k = 0; k < a[u][i][j].numel(); ++k) {
          const double d = a[u][i][j].at(k) - b[u][i][j].at(k);
          diff += d * d;
          ref += b[u][i][j].at(k) * b[u][i][j].at(k);
        }
      }
    }
  }
  return std::sqrt(diff) / std::max(std::sqrt(ref), 1e-12);
}

}  // namespace

TEST_CASE("unrolled oracle replays the engine forward pass exactly") {
  FrameSequence seq = sprite_clip(8, 5);
  for (Mode mode : {Mode::kSideways, Mode::kSkipSideways, Mode::kFaOnly}) {
    EngineConfig cfg = skip_cfg();
    cfg.mode = mode;
    NetworkTopology topo = conv_chain(cfg);
    Engine eng(topo, cfg, 13);
    RunResult r = eng.evaluate(seq);
    UnrolledGradResult u = unrolled_true_grads(topo, cfg, eng.params(), seq);

    CHECK(u.valid_losses == static_cast<int64_t>(r.losses.size()));
    double engine_total = 0.0;
    for (const StepLoss& sl : r.losses) engine_total += sl.loss;
    CHECK(u.total_loss == engine_total);  // same values in the same order
  }
}

// Dense random frames keep every pre-activation away from relu kinks
// and pooling ties, so central differences measure the derivative that
// the pullbacks compute.  Sparse sprite frames would not: positions
// whose receptive field misses the square sit exactly at bias zero.
FrameSequence dense_clip(int64_t frames, uint64_t seed) {
  RandomSource rng(seed);
  FrameSequence seq;
  for (int64_t t = 0; t < frames; ++t) {
    Tensor f(std::vector<int64_t>{kSide, kSide, 1});
    for (int64_t i = 0; i < f.numel(); ++i) f.at(i) = 0.25 + rng.uniform();
    seq.frames.push_back(std::move(f));
    seq.labels.push_back(rng.uniform_int(0, 4));
    seq.clip_tags.push_back(0);
  }
  return seq;
}

TEST_CASE("unrolled oracle gradients match finite differences of the total loss") {
  FrameSequence seq = dense_clip(7, 9);
  EngineConfig cfg = skip_cfg();
  NetworkTopology topo = conv_chain(cfg);
  Engine eng(topo, cfg, 17);
  const GradStack params = eng.params();
  UnrolledGradResult u = unrolled_true_grads(topo, cfg, params, seq);

  // Probe a handful of coordinates spread across the stack.
  struct Coord {
    size_t unit, layer, tensor;
    int64_t flat;
  };
  const std::vector<Coord> probes = {
      {0, 0, 0, 3}, {1, 0, 1, 0}, {2, 0, 0, 11}, {3, 3, 0, 5}, {3, 0, 0, 0}};
  const double h = 1e-6;
  for (const Coord& c : probes) {
    GradStack plus = params;
    GradStack minus = params;
    plus[c.unit][c.layer][c.tensor].at(c.flat) += h;
    minus[c.unit][c.layer][c.tensor].at(c.flat) -= h;
    const double lp = unrolled_true_grads(topo, cfg, plus, seq).total_loss;
    const double lm = unrolled_true_grads(topo, cfg, minus, seq).total_loss;
    const double fd = (lp - lm) / (2.0 * h);
    const double got = u.grads[c.unit][c.layer][c.tensor].at(c.flat);
    CHECK(std::abs(got - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
  }
}

TEST_CASE("time-collapsed oracle matches finite differences on one frame") {
  EngineConfig cfg = skip_cfg();
  NetworkTopology topo = conv_chain(cfg);
  Engine eng(topo, cfg, 23);
  const GradStack params = eng.params();
  Tensor frame = sprite_frame(small_sprite(), 2, 3);
  HeadTarget tgt;
  tgt.label = 1;
  StaticGradResult s = collapse_static_grads(topo, cfg, params, frame, tgt);
  CHECK(s.activations.size() == 5);
  CHECK(bitwise_equal(s.activations[0], frame));
  CHECK(std::isfinite(s.loss));

  const double h = 1e-6;
  const std::vector<std::array<int64_t, 4>> probes = {
      {0, 0, 0, 1}, {2, 0, 0, 7}, {3, 3, 1, 2}};
  for (const auto& c : probes) {
    GradStack plus = params;
    GradStack minus = params;
    plus[c[0]][c[1]][c[2]].at(c[3]) += h;
    minus[c[0]][c[1]][c[2]].at(c[3]) -= h;
    const double lp = collapse_static_grads(topo, cfg, plus, frame, tgt).loss;
    const double lm = collapse_static_grads(topo, cfg, minus, frame, tgt).loss;
    const double fd = (lp - lm) / (2.0 * h);
    const double got = s.grads[c[0]][c[1]][c[2]].at(c[3]);
    CHECK(std::abs(got - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
  }
}

TEST_CASE("constant input collapses the pipeline to the static network") {
  // On a constant stream the engine's steady per-step gradient equals
  // the static network's exact gradient, and the unrolled total is that
  // gradient times the number of scored steps.
  const int64_t t_len = 16;
  Tensor frame = sprite_frame(small_sprite(), 1, 4);
  FrameSequence seq = gen_constant(frame, t_len, 2);

  EngineConfig cfg = skip_cfg();
  NetworkTopology topo = conv_chain(cfg);
  Engine eng(topo, cfg, 29);
  StaticGradResult stat = collapse_static_grads(topo, cfg, eng.params(), frame,
                                                HeadTarget{2, Tensor()});

  RunOptions opts;
  opts.process_gradients = true;
  opts.record_per_step_grads = true;
  RunResult r = eng.run_sequence(seq, opts);

  for (int64_t s = 9; s <= 15; ++s) {
    GradStack delta = r.per_step_grad[s];
    GradStack prev = r.per_step_grad[s - 1];
    scale_stack_(prev, -1.0);
    add_stack_(delta, prev);
    CHECK(flat_rel_l2(delta, stat.grads) < 1e-10);
  }

  UnrolledGradResult u = unrolled_true_grads(topo, cfg, eng.params(), seq);
  GradStack scaled = stat.grads;
  scale_stack_(scaled, static_cast<double>(u.valid_losses));
  CHECK(u.valid_losses == t_len - 1);  // shortcut drains one step early
  CHECK(flat_rel_l2(u.grads, scaled) < 1e-9);
}

TEST_CASE("constant input suite passes for every mode and fusion") {
  SuiteResult suite = run_constant_input_suite(3, 1e-8);
  for (const SuiteCheck& c : suite.checks) {
    INFO(c.name, " value=", c.value, " bound=", c.bound);
    CHECK(c.pass);
  }
  CHECK(suite.all_pass);
  CHECK(suite.checks.size() >= 8);  // two identities per engine variant
}

TEST_CASE("gradient ablation flag severs shortcut gradients in the oracle") {
  FrameSequence seq = sprite_clip(8, 12);
  EngineConfig cfg = skip_cfg();
  cfg.mode = Mode::kFaOnly;
  NetworkTopology topo = conv_chain(cfg);
  Engine eng(topo, cfg, 31);

  UnrolledGradResult full = unrolled_true_grads(topo, cfg, eng.params(), seq);
  UnrolledGradResult severed =
      unrolled_true_grads(topo, cfg, eng.params(), seq, int64_t(1) << 24, true);
  CHECK(full.total_loss == severed.total_loss);  // forward identical
  CHECK_FALSE(stack_bitwise_equal(full.grads, severed.grads));

  // With the flag, a constant stream must reproduce the ablated static
  // gradient exactly.
  Tensor frame = sprite_frame(small_sprite(), 0, 0);
  FrameSequence con = gen_constant(frame, 16, 1);
  StaticGradResult stat = collapse_static_grads(topo, cfg, eng.params(), frame,
                                                HeadTarget{1, Tensor()});
  UnrolledGradResult u =
      unrolled_true_grads(topo, cfg, eng.params(), con, int64_t(1) << 24, true);
  GradStack scaled = stat.grads;
  scale_stack_(scaled, static_cast<double>(u.valid_losses));
  CHECK(flat_rel_l2(u.grads, scaled) < 1e-9);
}

TEST_CASE("unrolled cache grows linearly and the budget is enforced") {
  EngineConfig cfg = skip_cfg();
  NetworkTopology topo = conv_chain(cfg);
  Engine eng(topo, cfg, 37);

  UnrolledGradResult a = unrolled_true_grads(topo, cfg, eng.params(), sprite_clip(16, 2));
  UnrolledGradResult b = unrolled_true_grads(topo, cfg, eng.params(), sprite_clip(32, 2));
  const double ratio =
      static_cast<double>(b.stored_scalars) / static_cast<double>(a.stored_scalars);
  CHECK(ratio > 1.8);
  CHECK(ratio < 2.2);

  CHECK_THROWS_AS(
      unrolled_true_grads(topo, cfg, eng.params(), sprite_clip(16, 2), 1000),
      CapacityError);
}

TEST_CASE("gradient similarity report") {
  EngineConfig cfg = skip_cfg();
  NetworkTopology topo = conv_chain(cfg);
  Engine eng(topo, cfg, 41);
  UnrolledGradResult u = unrolled_true_grads(topo, cfg, eng.params(), sprite_clip(8, 3));

  GradientReport same = grad_similarity(u.grads, u.grads);
  CHECK(same.global_cosine == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(same.global_rel_l2 == 0.0);
  for (const GradientRow& row : same.rows) CHECK(row.rel_l2 == 0.0);

  GradStack doubled = u.grads;
  scale_stack_(doubled, 2.0);
  GradientReport scaled = grad_similarity(doubled, u.grads);
  CHECK(scaled.global_cosine == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(scaled.global_rel_l2 == doctest::Approx(1.0).epsilon(1e-9));

  GradStack zero = zeros_like_stack(u.grads);
  GradientReport against_zero = grad_similarity(zero, u.grads);
  CHECK(against_zero.global_cosine == 0.0);
  CHECK(against_zero.global_rel_l2 == doctest::Approx(1.0).epsilon(1e-12));

  std::ostringstream os;
  write_gradient_report_csv(same, os);
  const std::string csv = os.str();
  CHECK(csv.rfind("layer,cosine,rel_l2\n", 0) == 0);
  CHECK(csv.find("\nall,") != std::string::npos);
  CHECK(csv.find("u1.l0.weight") != std::string::npos);

  GradStack wrong_arity = u.grads;
  wrong_arity.pop_back();
  CHECK_THROWS_AS(grad_similarity(wrong_arity, u.grads), ShapeError);
}
