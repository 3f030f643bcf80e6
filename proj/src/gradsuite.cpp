// Copyright 2026 The Sideways Authors
// SPDX-License-Identifier: Apache-2.0

#include "sideways/gradsuite.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "sideways/config.hpp"
#include "sideways/datagen.hpp"
#include "sideways/engine.hpp"
#include "sideways/experiment.hpp"
#include "sideways/gradcheck.hpp"
#include "sideways/layers.hpp"
#include "sideways/oracles.hpp"
#include "sideways/random.hpp"

namespace sideways {

void SuiteResult::add(const std::string& name, double value, double bound) {
  SuiteCheck c;
  c.name = name;
  c.value = value;
  c.bound = bound;
  c.pass = std::isfinite(value) && value < bound;
  if (!c.pass) all_pass = false;
  checks.push_back(std::move(c));
}

namespace {

Tensor uniform_tensor(const std::vector<int64_t>& shape, RandomSource& rng, double lo,
                      double hi) {
  Tensor t(shape);
  for (int64_t i = 0; i < t.numel(); ++i) t.at(i) = rng.uniform(lo, hi);
  return t;
}

Tensor normal_tensor(const std::vector<int64_t>& shape, RandomSource& rng) {
  Tensor t(shape);
  for (int64_t i = 0; i < t.numel(); ++i) t.at(i) = rng.normal();
  return t;
}

// Magnitudes in [0.2, 1.2] with random signs: a +-1e-5 probe can never
// cross the rectifier kink.
Tensor kink_free_tensor(const std::vector<int64_t>& shape, RandomSource& rng) {
  Tensor t(shape);
  for (int64_t i = 0; i < t.numel(); ++i) {
    const double mag = rng.uniform(0.2, 1.2);
    t.at(i) = rng.uniform() < 0.5 ? mag : -mag;
  }
  return t;
}

// A shuffled strided ladder: all elements at least 9e-3 apart, so
// window maxima are unique and stable under the probe step.
Tensor detied_tensor(const std::vector<int64_t>& shape, RandomSource& rng) {
  Tensor t(shape);
  std::vector<int64_t> perm(static_cast<size_t>(t.numel()));
  std::iota(perm.begin(), perm.end(), int64_t{0});
  for (int64_t i = t.numel() - 1; i > 0; --i) {
    std::swap(perm[static_cast<size_t>(i)],
              perm[static_cast<size_t>(rng.uniform_int(0, i + 1))]);
  }
  for (int64_t i = 0; i < t.numel(); ++i) {
    t.at(i) = 0.013 * static_cast<double>(perm[static_cast<size_t>(i)]) +
              rng.uniform(0.0, 0.004);
  }
  return t;
}

void check_layer(SuiteResult& out, const std::string& label, const LayerSpec& spec,
                 const Tensor& x, RandomSource& rng, double fd_tol) {
  RandomSource prng = rng.split("params");
  const ParamSet params = init_params(spec, prng);
  const LayerOutput lo = layer_apply(spec, params, x);
  RandomSource crng = rng.split("cotangent");
  const Tensor u = normal_tensor(lo.output.shape(), crng);
  const VjpResult v = lo.pullback(u);

  const auto f_input = [&](const Tensor& xx) { return layer_apply(spec, params, xx).output; };
  out.add(label + ".input", finite_diff_vjp_check(f_input, x, u, v.input_grad), fd_tol);

  for (size_t i = 0; i < params.size(); ++i) {
    const auto f_param = [&, i](const Tensor& w) {
      ParamSet ps = params;
      ps[i] = w;
      return layer_apply(spec, ps, x).output;
    };
    out.add(label + "." + params.names[i],
            finite_diff_vjp_check(f_param, params[i], u, v.param_grads[i]), fd_tol);
  }
}

double adjoint_gap(double lhs, double rhs) {
  return std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs));
}

void check_fusion_adjoint(SuiteResult& out, const std::string& label, FusionKind kind,
                          const Tensor& d, const Tensor& s, RandomSource& rng,
                          double tol) {
  const FuseResult fr = fuse_apply(kind, d, s);
  RandomSource crng = rng.split("cotangent");
  const Tensor u = normal_tensor(fr.fused.shape(), crng);
  const auto [gd, gs] = fr.pullback(u);
  const double lhs = inner_product(u, fr.fused);
  double rhs = inner_product(gd, d);
  if (!gs.absent()) rhs += inner_product(gs, s);
  out.add(label, adjoint_gap(lhs, rhs), tol);
}

void check_tau_adjoint(SuiteResult& out, const std::string& label, const TauSpec& tau,
                       const Tensor& x, RandomSource& rng, double tol) {
  const LayerOutput lo = tau_apply(tau, x);
  RandomSource crng = rng.split("cotangent");
  const Tensor u = normal_tensor(lo.output.shape(), crng);
  const VjpResult v = lo.pullback(u);
  out.add(label, adjoint_gap(inner_product(u, lo.output), inner_product(v.input_grad, x)),
          tol);
}

double stack_rel_l2(const GradStack& a, const GradStack& b) {
  double diff2 = 0.0;
  double ref2 = 0.0;
  for (size_t u = 0; u < a.size(); ++u) {
    for (size_t i = 0; i < a[u].size(); ++i) {
      for (size_t j = 0; j < a[u][i].size(); ++j) {
        const Tensor& ta = a[u][i][j];
        const Tensor& tb = b[u][i][j];
        for (int64_t k = 0; k < ta.numel(); ++k) {
          const double dd = ta.at(k) - tb.at(k);
          diff2 += dd * dd;
          ref2 += tb.at(k) * tb.at(k);
        }
      }
    }
  }
  return std::sqrt(diff2) / std::max(std::sqrt(ref2), 1e-12);
}

}  // namespace

SuiteResult run_vjp_suite(uint64_t base_seed, int trials, double fd_tol,
                          double adjoint_tol) {
  SuiteResult out;
  for (int t = 0; t < trials; ++t) {
    RandomSource trial = RandomSource(base_seed).split(static_cast<uint64_t>(t));
    const std::string tag = "trial" + std::to_string(t) + ".";
    RandomSource shapes = trial.split("shapes");
    const int64_t h = 3 + shapes.uniform_int(0, 3);   // 3..5
    const int64_t w = 3 + shapes.uniform_int(0, 3);
    const int64_t cin = 1 + shapes.uniform_int(0, 2);  // 1..2
    const int64_t cout = 1 + shapes.uniform_int(0, 3);  // 1..3

    {
      RandomSource r = trial.split("affine");
      const int64_t in = 2 + shapes.uniform_int(0, 6);
      const int64_t outf = 1 + shapes.uniform_int(0, 4);
      check_layer(out, tag + "affine", LayerSpec::affine(in, outf),
                  uniform_tensor({in}, r, -1.0, 1.0), r, fd_tol);
    }
    {
      RandomSource r = trial.split("conv3");
      check_layer(out, tag + "conv3", LayerSpec::conv2d(3, 3, cin, cout),
                  uniform_tensor({h, w, cin}, r, -1.0, 1.0), r, fd_tol);
    }
    {
      RandomSource r = trial.split("conv5s2");
      check_layer(out, tag + "conv5s2", LayerSpec::conv2d(5, 5, cin, cout, 2),
                  uniform_tensor({h + 2, w + 2, cin}, r, -1.0, 1.0), r, fd_tol);
    }
    {
      RandomSource r = trial.split("relu");
      check_layer(out, tag + "relu", LayerSpec::relu(),
                  kink_free_tensor({2, 3, 2}, r), r, fd_tol);
    }
    {
      RandomSource r = trial.split("maxpool");
      check_layer(out, tag + "maxpool2", LayerSpec::maxpool2d(2, 2),
                  detied_tensor({4, 6, cin}, r), r, fd_tol);
    }
    {
      RandomSource r = trial.split("maxpool_full");
      check_layer(out, tag + "maxpool_full", LayerSpec::maxpool2d(4, 4),
                  detied_tensor({4, 4, cin}, r), r, fd_tol);
    }
    {
      RandomSource r = trial.split("tile");
      check_layer(out, tag + "tile2", LayerSpec::tile_upsample(2),
                  uniform_tensor({2, 3, cin}, r, -1.0, 1.0), r, fd_tol);
    }
    {
      RandomSource r = trial.split("s2d");
      check_layer(out, tag + "space_to_depth2", LayerSpec::space_to_depth(2),
                  uniform_tensor({4, 6, cin}, r, -1.0, 1.0), r, fd_tol);
    }
    {
      RandomSource r = trial.split("scale_shift");
      check_layer(out, tag + "scale_shift", LayerSpec::scale_shift(cin),
                  uniform_tensor({3, 2, cin}, r, -1.0, 1.0), r, fd_tol);
    }

    {
      RandomSource r = trial.split("fuse_concat");
      check_fusion_adjoint(out, tag + "fuse_concat.adjoint", FusionKind::kConcat,
                           uniform_tensor({3, 3, 2}, r, -1.0, 1.0),
                           uniform_tensor({3, 3, 1}, r, -1.0, 1.0), r, adjoint_tol);
    }
    {
      RandomSource r = trial.split("fuse_add");
      check_fusion_adjoint(out, tag + "fuse_add.adjoint", FusionKind::kAdd,
                           uniform_tensor({3, 3, 2}, r, -1.0, 1.0),
                           uniform_tensor({3, 3, 2}, r, -1.0, 1.0), r, adjoint_tol);
    }
    {
      RandomSource r = trial.split("fuse_drop");
      check_fusion_adjoint(out, tag + "fuse_drop.adjoint", FusionKind::kDropShortcut,
                           uniform_tensor({3, 3, 2}, r, -1.0, 1.0),
                           uniform_tensor({3, 3, 2}, r, -1.0, 1.0), r, adjoint_tol);
    }
    {
      RandomSource r = trial.split("tau_tile");
      check_tau_adjoint(out, tag + "tau_tile2.adjoint", TauSpec{TauKind::kTile, 2},
                        uniform_tensor({3, 3, 2}, r, -1.0, 1.0), r, adjoint_tol);
    }
    {
      RandomSource r = trial.split("tau_pool");
      check_tau_adjoint(out, tag + "tau_maxpool2.adjoint", TauSpec{TauKind::kMaxPool, 2},
                        detied_tensor({6, 6, 2}, r), r, adjoint_tol);
    }
    {
      RandomSource r = trial.split("tau_id");
      check_tau_adjoint(out, tag + "tau_identity.adjoint",
                        TauSpec{TauKind::kIdentity, 1},
                        uniform_tensor({3, 3, 2}, r, -1.0, 1.0), r, adjoint_tol);
    }
  }
  return out;
}

SuiteResult run_constant_input_suite(uint64_t seed, double tol) {
  SuiteResult out;

  struct Case {
    const char* name;
    Mode mode;
    FusionKind fusion;
  };
  const Case cases[] = {
      {"skip_concat", Mode::kSkipSideways, FusionKind::kConcat},
      {"skip_add", Mode::kSkipSideways, FusionKind::kAdd},
      {"sideways", Mode::kSideways, FusionKind::kConcat},
      {"fa_only", Mode::kFaOnly, FusionKind::kConcat},
  };

  for (const Case& c : cases) {
    ExperimentConfig ecfg;
    ecfg.engine = EngineConfig{};  // canonical wiring, not the tuned recipe
    ecfg.engine.mode = c.mode;
    ecfg.engine.fusion = c.fusion;
    ecfg.engine.optimizer = OptimizerConfig{};  // plain SGD
    ecfg.engine.optimizer.alpha = 0.0;
    ecfg.engine.cadence = UpdateCadence::kPerStep;

    const NetworkTopology topo = build_topology(ecfg);
    Engine engine(topo, ecfg.engine, RandomSource(seed).split("init").next_u64());

    const SpriteSpec spec = sprite_from_config(ecfg);
    const Tensor frame = sprite_frame(spec, 3, 5);
    const int64_t t_len = 16;
    const FrameSequence seq = gen_constant(frame, t_len, /*label=*/2);

    RunOptions opts;
    opts.process_gradients = true;
    opts.train = true;  // zero step size: updates are exact no-ops
    opts.record_per_step_grads = true;
    const RunResult run = engine.run_sequence(seq, opts);

    HeadTarget target;
    target.label = 2;
    const StaticGradResult st =
        collapse_static_grads(topo, engine.config(), engine.params(), frame, target);

    // Under per-step cadence the accumulator is cleared after every
    // update, so each recorded snapshot is exactly one step's gradient
    // batch; at steady state on a constant stream that batch must equal
    // the collapsed network's gradient.
    const int64_t depth = engine.compiled().depth;
    double worst = 0.0;
    for (int64_t s = 2 * depth + 1; s <= t_len; ++s) {
      worst = std::max(worst,
                       stack_rel_l2(run.per_step_grad[static_cast<size_t>(s)], st.grads));
    }
    out.add(std::string(c.name) + ".per_step_vs_static", worst, tol);

    const UnrolledGradResult un =
        unrolled_true_grads(topo, engine.config(), engine.params(), seq,
                            int64_t(1) << 26,
                            /*respect_mode_gradient_rule=*/c.mode == Mode::kFaOnly);
    GradStack scaled = st.grads;
    scale_stack_(scaled, static_cast<double>(un.valid_losses));
    out.add(std::string(c.name) + ".unrolled_vs_static_scaled",
            stack_rel_l2(un.grads, scaled), tol);
  }
  return out;
}

}  // namespace sideways
