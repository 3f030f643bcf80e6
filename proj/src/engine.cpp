// Copyright 2026 The Sideways Authors
// SPDX-License-Identifier: Apache-2.0

#include "sideways/engine.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <thread>

#include "sideways/errors.hpp"

namespace sideways {

// --- GradStack helpers ------------------------------------------------

GradStack zeros_like_stack(const GradStack& other) {
  GradStack out(other.size());
  for (size_t u = 0; u < other.size(); ++u) {
    out[u].reserve(other[u].size());
    for (const ParamSet& p : other[u]) out[u].push_back(ParamSet::zeros_like(p));
  }
  return out;
}

void add_stack_(GradStack& dst, const GradStack& src) {
  if (dst.size() != src.size()) throw ShapeError("add_stack_: unit count mismatch");
  for (size_t u = 0; u < dst.size(); ++u) {
    if (dst[u].size() != src[u].size()) throw ShapeError("add_stack_: layer count mismatch");
    for (size_t i = 0; i < dst[u].size(); ++i) dst[u][i].add_(src[u][i]);
  }
}

void scale_stack_(GradStack& dst, double factor) {
  for (auto& unit : dst) {
    for (ParamSet& p : unit) p.scale_(factor);
  }
}

bool stack_finite(const GradStack& s) {
  for (const auto& unit : s) {
    for (const ParamSet& p : unit) {
      for (const Tensor& t : p.tensors) {
        if (!t.all_finite()) return false;
      }
    }
  }
  return true;
}

bool stack_bitwise_equal(const GradStack& a, const GradStack& b) {
  if (a.size() != b.size()) return false;
  for (size_t u = 0; u < a.size(); ++u) {
    if (a[u].size() != b[u].size()) return false;
    for (size_t i = 0; i < a[u].size(); ++i) {
      if (a[u][i].size() != b[u][i].size()) return false;
      for (size_t j = 0; j < a[u][i].size(); ++j) {
        if (!bitwise_equal(a[u][i][j], b[u][i][j])) return false;
      }
    }
  }
  return true;
}

int64_t stack_scalars(const GradStack& s) {
  int64_t n = 0;
  for (const auto& unit : s) {
    for (const ParamSet& p : unit) n += p.total_scalars();
  }
  return n;
}

// --- topology compilation --------------------------------------------

CompiledTopology compile_topology(const NetworkTopology& topo, const EngineConfig& cfg) {
  if (topo.units.empty()) throw ConfigError("topology needs at least one unit");
  if (topo.input_shape.empty()) throw ConfigError("topology needs an input frame shape");
  if (cfg.skip_span < 1) throw ConfigError("skip_span must be >= 1");
  if (cfg.num_threads < 1) throw ConfigError("num_threads must be >= 1");

  CompiledTopology ct;
  ct.depth = static_cast<int>(topo.units.size());
  ct.h_shape.resize(ct.depth + 1);
  ct.wiring.resize(ct.depth + 1);
  ct.h_shape[0] = topo.input_shape;

  for (int l = 1; l <= ct.depth; ++l) {
    UnitWiring w;
    const int src = l - cfg.skip_span;
    const bool want = cfg.mode != Mode::kSideways &&
                      (src >= 1 || (src == 0 && cfg.input_shortcut));
    const std::vector<int64_t>& direct = ct.h_shape[l - 1];
    std::vector<int64_t> gamma = direct;

    if (want) {
      w.has_shortcut = true;
      w.shortcut_source = src;
      const std::vector<int64_t>& from = ct.h_shape[src];
      if (from == direct) {
        w.tau = {TauKind::kIdentity, 1};
        w.tau_out_shape = from;
      } else if (from.size() == 3 && direct.size() == 3) {
        if (from[0] == direct[0] && from[1] == direct[1]) {
          w.tau = {TauKind::kIdentity, 1};
          w.tau_out_shape = from;
        } else if (from[0] > direct[0]) {
          if (direct[0] == 0 || direct[1] == 0 || from[0] % direct[0] != 0 ||
              from[1] % direct[1] != 0 || from[0] / direct[0] != from[1] / direct[1]) {
            throw ShapeError("unit " + std::to_string(l) +
                             ": no integer pooling factor from " + shape_to_string(from) +
                             " to " + shape_to_string(direct));
          }
          w.tau = {TauKind::kMaxPool, from[0] / direct[0]};
          w.tau_out_shape = {direct[0], direct[1], from[2]};
        } else {
          if (from[0] == 0 || from[1] == 0 || direct[0] % from[0] != 0 ||
              direct[1] % from[1] != 0 || direct[0] / from[0] != direct[1] / from[1]) {
            throw ShapeError("unit " + std::to_string(l) +
                             ": no integer upsample factor from " + shape_to_string(from) +
                             " to " + shape_to_string(direct));
          }
          w.tau = {TauKind::kTile, direct[0] / from[0]};
          w.tau_out_shape = {direct[0], direct[1], from[2]};
        }
      } else {
        throw ShapeError("unit " + std::to_string(l) +
                         ": shortcut endpoints have incompatible shapes " +
                         shape_to_string(from) + " and " + shape_to_string(direct));
      }

      switch (cfg.fusion) {
        case FusionKind::kAdd:
          if (w.tau_out_shape != direct) {
            throw ShapeError("unit " + std::to_string(l) +
                             ": additive fusion requires matching shapes, got " +
                             shape_to_string(w.tau_out_shape) + " vs " +
                             shape_to_string(direct));
          }
          gamma = direct;
          break;
        case FusionKind::kConcat: {
          if (w.tau_out_shape.size() != direct.size() || direct.empty()) {
            throw ShapeError("unit " + std::to_string(l) + ": concat rank mismatch");
          }
          for (size_t i = 0; i + 1 < direct.size(); ++i) {
            if (w.tau_out_shape[i] != direct[i]) {
              throw ShapeError("unit " + std::to_string(l) +
                               ": concat leading dims differ: " +
                               shape_to_string(w.tau_out_shape) + " vs " +
                               shape_to_string(direct));
            }
          }
          gamma = direct;
          gamma.back() += w.tau_out_shape.back();
          break;
        }
        case FusionKind::kDropShortcut:
          gamma = direct;
          break;
      }
    }

    w.gamma_shape = gamma;
    std::vector<int64_t> h = gamma;
    for (const LayerSpec& ls : topo.units[l - 1].layers) h = layer_out_shape(ls, h);
    ct.h_shape[l] = h;
    ct.wiring[l] = std::move(w);
  }

  std::vector<int64_t> delay(ct.depth + 1, std::numeric_limits<int64_t>::max());
  delay[0] = 0;
  for (int l = 1; l <= ct.depth; ++l) {
    delay[l] = delay[l - 1] + 1;
    if (ct.wiring[l].has_shortcut) {
      delay[l] = std::min(delay[l], delay[ct.wiring[l].shortcut_source] + 1);
    }
  }
  ct.min_input_delay = static_cast<int>(delay[ct.depth]);
  return ct;
}

std::vector<int64_t> influence_set(const CompiledTopology& ct, int unit, int64_t step) {
  if (unit < 0 || unit > ct.depth) {
    throw ConfigError("influence_set: unit " + std::to_string(unit) + " out of range");
  }
  std::map<std::pair<int, int64_t>, std::set<int64_t>> memo;
  std::function<const std::set<int64_t>&(int, int64_t)> walk =
      [&](int l, int64_t s) -> const std::set<int64_t>& {
    const auto key = std::make_pair(l, s);
    auto it = memo.find(key);
    if (it != memo.end()) return it->second;
    std::set<int64_t> frames;
    if (l == 0) {
      frames.insert(s);
    } else {
      const auto& via_direct = walk(l - 1, s - 1);
      frames.insert(via_direct.begin(), via_direct.end());
      if (ct.wiring[l].has_shortcut) {
        const auto& via_skip = walk(ct.wiring[l].shortcut_source, s - 1);
        frames.insert(via_skip.begin(), via_skip.end());
      }
    }
    return memo.emplace(key, std::move(frames)).first->second;
  };
  const auto& result = walk(unit, step);
  return std::vector<int64_t>(result.begin(), result.end());
}

// --- optimizer --------------------------------------------------------

void apply_update(ParamSet& params, const ParamSet& grads, ParamSet& m, ParamSet& v,
                  int64_t update_index, const OptimizerConfig& oc) {
  if (params.size() != grads.size()) throw ShapeError("apply_update: arity mismatch");
  double lr = oc.alpha;
  if (oc.cosine_decay && oc.total_updates > 0) {
    const double frac = std::min(
        1.0, static_cast<double>(update_index) / static_cast<double>(oc.total_updates));
    lr = oc.alpha * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
  }
  if (oc.kind == OptimizerKind::kSgd) {
    for (size_t i = 0; i < params.size(); ++i) {
      Tensor& p = params[i];
      const Tensor& g = grads[i];
      if (!p.same_shape(g)) throw ShapeError("apply_update: gradient shape mismatch");
      for (int64_t j = 0; j < p.numel(); ++j) p.at(j) -= lr * g.at(j);
      p.quantize();
    }
    return;
  }
  if (m.size() != params.size() || v.size() != params.size()) {
    throw ShapeError("apply_update: moment buffers missing");
  }
  const double t = static_cast<double>(update_index + 1);
  const double bc1 = 1.0 - std::pow(oc.beta1, t);
  const double bc2 = 1.0 - std::pow(oc.beta2, t);
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    const Tensor& g = grads[i];
    Tensor& mi = m[i];
    Tensor& vi = v[i];
    if (!p.same_shape(g)) throw ShapeError("apply_update: gradient shape mismatch");
    for (int64_t j = 0; j < p.numel(); ++j) {
      mi.at(j) = oc.beta1 * mi.at(j) + (1.0 - oc.beta1) * g.at(j);
      vi.at(j) = oc.beta2 * vi.at(j) + (1.0 - oc.beta2) * g.at(j) * g.at(j);
      p.at(j) -= lr * (mi.at(j) / bc1) / (std::sqrt(vi.at(j) / bc2) + oc.eps);
    }
    mi.quantize();
    vi.quantize();
    p.quantize();
  }
}

// --- engine -----------------------------------------------------------

Engine::Engine(NetworkTopology topo, EngineConfig cfg, uint64_t seed)
    : topo_(std::move(topo)), cfg_(cfg), ct_(compile_topology(topo_, cfg_)) {
  RandomSource root(seed);
  params_.resize(topo_.units.size());
  for (size_t u = 0; u < topo_.units.size(); ++u) {
    RandomSource unit_stream = root.split("unit" + std::to_string(u));
    for (size_t i = 0; i < topo_.units[u].layers.size(); ++i) {
      RandomSource layer_stream = unit_stream.split("layer" + std::to_string(i));
      ParamSet p = init_params(topo_.units[u].layers[i], layer_stream);
      p.set_precision(cfg_.precision);
      params_[u].push_back(std::move(p));
    }
  }
  accum_ = zeros_like_stack(params_);
  if (cfg_.optimizer.kind == OptimizerKind::kAdam) {
    opt_.m = zeros_like_stack(params_);
    opt_.v = zeros_like_stack(params_);
  }
  scratch_.resize(topo_.units.size() + 1);
}

Engine::Board Engine::make_board(bool zero_primed) const {
  Board b;
  b.act.resize(ct_.depth + 1);
  b.grad_direct.resize(ct_.depth + 1);
  b.grad_skip.resize(ct_.depth + 1);
  if (zero_primed) {
    for (int l = 0; l <= ct_.depth; ++l) {
      b.act[l].payload = Tensor(ct_.h_shape[l], cfg_.precision);
      b.act[l].valid = false;
      b.act[l].origin_frame = -1;
    }
  }
  return b;
}

void Engine::unit_step(int l, const Board& prev, Board& next, bool process_gradients) {
  UnitScratch& sc = scratch_[l];
  sc.fired = false;
  const UnitWiring& w = ct_.wiring[l];
  const StepMessage& direct = prev.act[l - 1];
  if (!direct.present()) {
    sc.cached_scalars = 0;
    return;  // nothing arrived on the mandatory edge
  }

  StepMessage drain_fill;
  const StepMessage* shortcut = nullptr;
  if (w.has_shortcut) {
    const StepMessage& s = prev.act[w.shortcut_source];
    if (s.present()) {
      shortcut = &s;
    } else if (!sc.ever_fired && cfg_.warmup == WarmupPolicy::kDiscard) {
      sc.cached_scalars = 0;
      return;  // hold off until the shortcut pipeline is primed
    } else {
      // Keep the pipeline flowing on a stale zero frame so in-flight
      // gradients can still be processed while the stream drains.
      drain_fill.payload = Tensor(ct_.h_shape[w.shortcut_source], cfg_.precision);
      drain_fill.valid = false;
      shortcut = &drain_fill;
    }
  }

  sc.fired = true;
  sc.ever_fired = true;
  sc.cached_scalars = 0;
  bool valid = direct.valid;

  Tensor gamma;
  if (w.has_shortcut) {
    LayerOutput tau_out = tau_apply(w.tau, shortcut->payload);
    sc.tau_pb = std::move(tau_out.pullback);
    sc.cached_scalars += tau_out.cached_scalars;
    FuseResult fused = fuse_apply(cfg_.fusion, direct.payload, tau_out.output);
    sc.fuse_pb = std::move(fused.pullback);
    gamma = std::move(fused.fused);
    valid = valid && shortcut->valid;
  } else {
    sc.tau_pb = nullptr;
    sc.fuse_pb = nullptr;
    gamma = direct.payload;
  }

  const UnitSpec& us = topo_.units[l - 1];
  sc.layer_pbs.assign(us.layers.size(), nullptr);
  Tensor h = std::move(gamma);
  for (size_t i = 0; i < us.layers.size(); ++i) {
    LayerOutput lo = layer_apply(us.layers[i], params_[l - 1][i], h);
    sc.layer_pbs[i] = std::move(lo.pullback);
    sc.cached_scalars += lo.cached_scalars;
    h = std::move(lo.output);
  }

  StepMessage out;
  out.payload = std::move(h);
  out.kind = MessageKind::kActivation;
  out.origin_frame = direct.origin_frame;
  out.valid = valid;
  next.act[l] = std::move(out);

  if (!process_gradients) return;
  const StepMessage& gd = prev.grad_direct[l];
  const StepMessage& gs = prev.grad_skip[l];
  if (!gd.present() && !gs.present()) return;

  Tensor g;
  int64_t grad_origin = -1;
  if (gd.present()) {
    g = gd.payload;
    grad_origin = gd.origin_frame;
    if (gs.present()) g.add_(gs.payload);
  } else {
    g = gs.payload;
    grad_origin = gs.origin_frame;
  }

  for (size_t i = us.layers.size(); i-- > 0;) {
    VjpResult r = sc.layer_pbs[i](g);
    if (!r.param_grads.tensors.empty()) accum_[l - 1][i].add_(r.param_grads);
    g = std::move(r.input_grad);
  }

  Tensor g_direct = std::move(g);
  Tensor g_short;
  if (w.has_shortcut) {
    auto split = sc.fuse_pb(g_direct);
    g_direct = std::move(split.first);
    g_short = std::move(split.second);
  }
  if (l - 1 >= 1) {
    StepMessage msg;
    msg.payload = std::move(g_direct);
    msg.kind = MessageKind::kGradient;
    msg.origin_frame = grad_origin;
    msg.valid = true;
    next.grad_direct[l - 1] = std::move(msg);
  }
  if (w.has_shortcut && cfg_.mode == Mode::kSkipSideways && !g_short.absent() &&
      w.shortcut_source >= 1) {
    VjpResult r = sc.tau_pb(g_short);
    StepMessage msg;
    msg.payload = std::move(r.input_grad);
    msg.kind = MessageKind::kGradient;
    msg.origin_frame = grad_origin;
    msg.valid = true;
    next.grad_skip[w.shortcut_source] = std::move(msg);
  }
}

void Engine::head_step(int64_t step, Board& next, const FrameSequence& seq,
                       bool process_gradients, RunResult& out) {
  const StepMessage& top = next.act[ct_.depth];
  if (!top.present() || !top.valid) return;
  const int64_t origin = top.origin_frame;

  HeadResult hr;
  int64_t predicted = -1;
  bool correct = false;
  if (topo_.head == HeadKind::kCrossEntropy) {
    const int64_t label = seq.labels.at(static_cast<size_t>(origin));
    hr = softmax_xent(top.payload, label);
    predicted = 0;
    double best = top.payload.at(0);
    for (int64_t i = 1; i < top.payload.numel(); ++i) {
      if (top.payload.at(i) > best) {
        best = top.payload.at(i);
        predicted = i;
      }
    }
    correct = predicted == label;
  } else {
    hr = mse_loss(top.payload, seq.targets.at(static_cast<size_t>(origin)));
  }
  if (!std::isfinite(hr.loss)) {
    throw DivergenceError("non-finite loss at step " + std::to_string(step),
                          static_cast<int>(step), hr.loss);
  }

  StepLoss sl;
  sl.step = step;
  sl.origin_frame = origin;
  sl.clip_tag = seq.clip_tags.empty() ? -1 : seq.clip_tags.at(static_cast<size_t>(origin));
  sl.loss = hr.loss;
  sl.predicted = predicted;
  sl.correct = correct;
  out.losses.push_back(std::move(sl));

  if (process_gradients) {
    StepMessage seed;
    seed.payload = std::move(hr.grad);
    seed.kind = MessageKind::kGradient;
    seed.origin_frame = origin;
    seed.valid = true;
    next.grad_direct[ct_.depth] = std::move(seed);
  }
}

void Engine::apply_unit_updates() {
  ParamSet no_moments;
  const bool adaptive = cfg_.optimizer.kind == OptimizerKind::kAdam;
  for (size_t u = 0; u < params_.size(); ++u) {
    for (size_t i = 0; i < params_[u].size(); ++i) {
      ParamSet& m = adaptive ? opt_.m[u][i] : no_moments;
      ParamSet& v = adaptive ? opt_.v[u][i] : no_moments;
      apply_update(params_[u][i], accum_[u][i], m, v, opt_.update_count, cfg_.optimizer);
      for (Tensor& t : accum_[u][i].tensors) {
        for (int64_t j = 0; j < t.numel(); ++j) t.at(j) = 0.0;
      }
    }
  }
  ++opt_.update_count;
}

int64_t Engine::live_scalars(const Board& board) const {
  int64_t n = 0;
  for (const StepMessage& msg : board.act) n += msg.payload.numel();
  for (const StepMessage& msg : board.grad_direct) n += msg.payload.numel();
  for (const StepMessage& msg : board.grad_skip) n += msg.payload.numel();
  for (const UnitScratch& sc : scratch_) {
    if (sc.fired) n += sc.cached_scalars;
  }
  return n + resident_scalars();
}

int64_t Engine::resident_scalars() const {
  return stack_scalars(params_) + stack_scalars(accum_) + stack_scalars(opt_.m) +
         stack_scalars(opt_.v);
}

void Engine::check_grads_finite(int64_t step) const {
  if (!stack_finite(accum_)) {
    throw DivergenceError("non-finite gradient accumulation at step " +
                              std::to_string(step),
                          static_cast<int>(step),
                          std::numeric_limits<double>::quiet_NaN());
  }
}

RunResult Engine::run_sequence(const FrameSequence& seq, const RunOptions& opts) {
  const int64_t t_len = seq.length();
  if (t_len == 0) throw ConfigError("run_sequence: empty sequence");
  for (const Tensor& f : seq.frames) {
    if (f.shape() != topo_.input_shape) {
      throw ShapeError("run_sequence: frame shape " + shape_to_string(f.shape()) +
                       " does not match input shape " +
                       shape_to_string(topo_.input_shape));
    }
  }
  if (topo_.head == HeadKind::kCrossEntropy &&
      seq.labels.size() != seq.frames.size()) {
    throw ConfigError("run_sequence: need one label per frame");
  }
  if (topo_.head == HeadKind::kMse && seq.targets.size() != seq.frames.size()) {
    throw ConfigError("run_sequence: need one target per frame");
  }

  for (UnitScratch& sc : scratch_) sc = UnitScratch{};
  for (auto& unit : accum_) {
    for (ParamSet& p : unit) {
      for (Tensor& t : p.tensors) {
        for (int64_t j = 0; j < t.numel(); ++j) t.at(j) = 0.0;
      }
    }
  }

  RunResult out;
  const int depth = ct_.depth;
  const int64_t total = t_len + depth;
  Board prev = make_board(cfg_.warmup == WarmupPolicy::kZeroBuffers);

  for (int64_t s = 0; s < total; ++s) {
    Board next = make_board(false);
    if (s < t_len) {
      StepMessage deposit;
      deposit.payload = seq.frames[static_cast<size_t>(s)];
      if (cfg_.precision == Precision::kSingle) {
        deposit.payload.set_precision(Precision::kSingle);
      }
      deposit.kind = MessageKind::kActivation;
      deposit.origin_frame = s;
      deposit.valid = true;
      next.act[0] = std::move(deposit);
    }

    if (cfg_.num_threads > 1) {
      std::vector<std::thread> pool;
      std::vector<std::exception_ptr> errors(depth + 1);
      pool.reserve(depth);
      for (int l = 1; l <= depth; ++l) {
        pool.emplace_back([this, l, &prev, &next, &opts, &errors] {
          try {
            unit_step(l, prev, next, opts.process_gradients);
          } catch (...) {
            errors[l] = std::current_exception();
          }
        });
      }
      for (std::thread& t : pool) t.join();
      for (const std::exception_ptr& e : errors) {
        if (e) std::rethrow_exception(e);
      }
    } else {
      for (int l = 1; l <= depth; ++l) unit_step(l, prev, next, opts.process_gradients);
    }

    head_step(s, next, seq, opts.process_gradients, out);

    if (opts.record_outputs) out.output_trace.push_back(next.act[depth].payload);
    if (opts.record_unit_cache) {
      std::vector<int64_t> row(static_cast<size_t>(depth), 0);
      for (int l = 1; l <= depth; ++l) {
        if (scratch_[l].fired) row[static_cast<size_t>(l - 1)] = scratch_[l].cached_scalars;
      }
      out.unit_cache_trace.push_back(std::move(row));
    }
    if (opts.record_per_step_grads) out.per_step_grad.push_back(accum_);
    if (opts.train && cfg_.cadence == UpdateCadence::kPerStep) {
      check_grads_finite(s);
      apply_unit_updates();
    }

    const int64_t live = live_scalars(next);
    if (live > out.peak_live_scalars) out.peak_live_scalars = live;
    if (opts.record_memory_trace) out.memory_trace.push_back(live);

    prev = std::move(next);
  }

  out.steps_run = total;
  double loss_sum = 0.0;
  int64_t n_correct = 0;
  for (const StepLoss& sl : out.losses) {
    loss_sum += sl.loss;
    if (sl.correct) ++n_correct;
  }
  if (!out.losses.empty()) {
    out.mean_loss = loss_sum / static_cast<double>(out.losses.size());
    out.accuracy = static_cast<double>(n_correct) / static_cast<double>(out.losses.size());
  }
  out.total_grad = accum_;

  if (opts.train && cfg_.cadence == UpdateCadence::kPerSequence) {
    check_grads_finite(total - 1);
    apply_unit_updates();
  }
  return out;
}

RunResult Engine::train_sequence(const FrameSequence& seq) {
  RunOptions opts;
  opts.process_gradients = true;
  opts.train = true;
  return run_sequence(seq, opts);
}

RunResult Engine::evaluate(const FrameSequence& seq) {
  RunOptions opts;
  opts.process_gradients = false;
  opts.train = false;
  return run_sequence(seq, opts);
}

}  // namespace sideways
