// Copyright 2026 The Sideways Authors
// SPDX-License-Identifier: Apache-2.0

#include "sideways/oracles.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>

#include "sideways/errors.hpp"

namespace sideways {

namespace {

struct NodeCapture {
  bool fired = false;
  std::vector<Pullback> layer_pbs;
  std::function<std::pair<Tensor, Tensor>(const Tensor&)> fuse_pb;
  Pullback tau_pb;
  int64_t cached = 0;
};

HeadResult eval_head(HeadKind head, const Tensor& output, const HeadTarget& target) {
  if (head == HeadKind::kCrossEntropy) return softmax_xent(output, target.label);
  return mse_loss(output, target.target);
}

// Runs one unit forward at given inputs, filling `cap` with pullbacks.
// Returns the unit's output activation.
Tensor forward_unit(const NetworkTopology& topo, const EngineConfig& cfg,
                    const CompiledTopology& ct, const GradStack& params, int l,
                    const Tensor& direct, const Tensor* shortcut, NodeCapture& cap) {
  const UnitWiring& w = ct.wiring[l];
  cap.fired = true;
  cap.cached = 0;
  Tensor gamma;
  if (w.has_shortcut) {
    LayerOutput tau_out = tau_apply(w.tau, *shortcut);
    cap.tau_pb = std::move(tau_out.pullback);
    cap.cached += tau_out.cached_scalars;
    FuseResult fused = fuse_apply(cfg.fusion, direct, tau_out.output);
    cap.fuse_pb = std::move(fused.pullback);
    gamma = std::move(fused.fused);
  } else {
    gamma = direct;
  }
  const UnitSpec& us = topo.units[l - 1];
  cap.layer_pbs.assign(us.layers.size(), nullptr);
  Tensor h = std::move(gamma);
  for (size_t i = 0; i < us.layers.size(); ++i) {
    LayerOutput lo = layer_apply(us.layers[i], params[l - 1][i], h);
    cap.layer_pbs[i] = std::move(lo.pullback);
    cap.cached += lo.cached_scalars;
    h = std::move(lo.output);
  }
  return h;
}

// Pulls `g` back through one captured unit, accumulating parameter
// gradients and returning the (direct, shortcut-source) cotangents.
// The shortcut cotangent is absent when no gradient crosses that edge;
// `drop_shortcut_grad` additionally severs it, mirroring the ablation
// that keeps shortcuts forward-only.
std::pair<Tensor, Tensor> backward_unit(const NetworkTopology& topo,
                                        const CompiledTopology& ct, int l,
                                        NodeCapture& cap, Tensor g, GradStack& grads,
                                        bool drop_shortcut_grad) {
  const UnitSpec& us = topo.units[l - 1];
  for (size_t i = us.layers.size(); i-- > 0;) {
    VjpResult r = cap.layer_pbs[i](g);
    if (!r.param_grads.tensors.empty()) grads[l - 1][i].add_(r.param_grads);
    g = std::move(r.input_grad);
  }
  const UnitWiring& w = ct.wiring[l];
  Tensor g_direct = std::move(g);
  Tensor g_short_src;
  if (w.has_shortcut) {
    auto split = cap.fuse_pb(g_direct);
    g_direct = std::move(split.first);
    if (!drop_shortcut_grad && !split.second.absent()) {
      VjpResult r = cap.tau_pb(split.second);
      g_short_src = std::move(r.input_grad);
    }
  }
  return {std::move(g_direct), std::move(g_short_src)};
}

}  // namespace

StaticGradResult collapse_static_grads(const NetworkTopology& topo,
                                       const EngineConfig& cfg, const GradStack& params,
                                       const Tensor& frame, const HeadTarget& target) {
  const CompiledTopology ct = compile_topology(topo, cfg);
  const int depth = ct.depth;

  StaticGradResult out;
  out.grads = zeros_like_stack(params);
  out.activations.resize(depth + 1);
  out.activations[0] = frame;
  if (cfg.precision == Precision::kSingle) {
    out.activations[0].set_precision(Precision::kSingle);
  }

  std::vector<NodeCapture> caps(depth + 1);
  for (int l = 1; l <= depth; ++l) {
    const UnitWiring& w = ct.wiring[l];
    const Tensor* shortcut =
        w.has_shortcut ? &out.activations[w.shortcut_source] : nullptr;
    out.activations[l] = forward_unit(topo, cfg, ct, params, l,
                                      out.activations[l - 1], shortcut, caps[l]);
  }

  HeadResult hr = eval_head(topo.head, out.activations[depth], target);
  out.loss = hr.loss;

  // Pending cotangents per unit output, fed direct-edge first and then
  // shortcut-edge, matching the engine's summation order.  The ablation
  // mode severs shortcut gradients here exactly as the engine does.
  const bool drop_short = cfg.mode == Mode::kFaOnly;
  std::vector<Tensor> g_direct(depth + 1);
  std::vector<Tensor> g_skip(depth + 1);
  g_direct[depth] = std::move(hr.grad);
  for (int l = depth; l >= 1; --l) {
    Tensor g;
    if (!g_direct[l].absent()) {
      g = std::move(g_direct[l]);
      if (!g_skip[l].absent()) g.add_(g_skip[l]);
    } else if (!g_skip[l].absent()) {
      g = std::move(g_skip[l]);
    } else {
      continue;
    }
    auto [gd, gs] =
        backward_unit(topo, ct, l, caps[l], std::move(g), out.grads, drop_short);
    if (l - 1 >= 1) g_direct[l - 1] = std::move(gd);
    if (!gs.absent() && ct.wiring[l].shortcut_source >= 1) {
      g_skip[ct.wiring[l].shortcut_source] = std::move(gs);
    }
  }
  return out;
}

UnrolledGradResult unrolled_true_grads(const NetworkTopology& topo,
                                       const EngineConfig& cfg, const GradStack& params,
                                       const FrameSequence& seq, int64_t budget_scalars,
                                       bool respect_mode_gradient_rule) {
  const CompiledTopology ct = compile_topology(topo, cfg);
  const int depth = ct.depth;
  const int64_t t_len = seq.length();
  if (t_len == 0) throw ConfigError("unrolled_true_grads: empty sequence");
  const int64_t total = t_len + depth;

  UnrolledGradResult out;
  out.grads = zeros_like_stack(params);

  // boards[s + 1][l] = activation unit l emitted at step s; boards[0]
  // is the pre-run board (zero-primed or empty).
  std::vector<std::vector<StepMessage>> boards(
      static_cast<size_t>(total) + 1,
      std::vector<StepMessage>(static_cast<size_t>(depth) + 1));
  if (cfg.warmup == WarmupPolicy::kZeroBuffers) {
    for (int l = 0; l <= depth; ++l) {
      boards[0][l].payload = Tensor(ct.h_shape[l], cfg.precision);
      boards[0][l].valid = false;
    }
  }

  std::vector<std::vector<NodeCapture>> caps(
      static_cast<size_t>(total), std::vector<NodeCapture>(static_cast<size_t>(depth) + 1));
  std::vector<bool> ever_fired(depth + 1, false);
  std::vector<Tensor> loss_seed(static_cast<size_t>(total));
  std::vector<bool> loss_at(static_cast<size_t>(total), false);

  for (int64_t s = 0; s < total; ++s) {
    auto& prev = boards[static_cast<size_t>(s)];
    auto& next = boards[static_cast<size_t>(s) + 1];
    if (s < t_len) {
      StepMessage deposit;
      deposit.payload = seq.frames[static_cast<size_t>(s)];
      if (cfg.precision == Precision::kSingle) {
        deposit.payload.set_precision(Precision::kSingle);
      }
      deposit.origin_frame = s;
      deposit.valid = true;
      next[0] = std::move(deposit);
    }
    for (int l = 1; l <= depth; ++l) {
      const StepMessage& direct = prev[l - 1];
      if (!direct.present()) continue;
      const UnitWiring& w = ct.wiring[l];
      StepMessage drain_fill;
      const StepMessage* shortcut_msg = nullptr;
      if (w.has_shortcut) {
        const StepMessage& sm = prev[w.shortcut_source];
        if (sm.present()) {
          shortcut_msg = &sm;
        } else if (!ever_fired[l] && cfg.warmup == WarmupPolicy::kDiscard) {
          continue;
        } else {
          drain_fill.payload = Tensor(ct.h_shape[w.shortcut_source], cfg.precision);
          drain_fill.valid = false;
          shortcut_msg = &drain_fill;
        }
      }
      NodeCapture& cap = caps[static_cast<size_t>(s)][l];
      Tensor h = forward_unit(topo, cfg, ct, params, l, direct.payload,
                              shortcut_msg ? &shortcut_msg->payload : nullptr, cap);
      ever_fired[l] = true;
      out.stored_scalars += cap.cached;
      if (out.stored_scalars > budget_scalars) {
        throw CapacityError("unrolled reverse pass needs more than " +
                            std::to_string(budget_scalars) +
                            " cached scalars at step " + std::to_string(s) +
                            " of " + std::to_string(total));
      }
      StepMessage msg;
      msg.payload = std::move(h);
      msg.origin_frame = direct.origin_frame;
      msg.valid = direct.valid && (!w.has_shortcut || shortcut_msg->valid);
      next[l] = std::move(msg);
    }
    const StepMessage& top = next[depth];
    if (top.present() && top.valid) {
      HeadTarget tgt;
      if (topo.head == HeadKind::kCrossEntropy) {
        tgt.label = seq.labels.at(static_cast<size_t>(top.origin_frame));
      } else {
        tgt.target = seq.targets.at(static_cast<size_t>(top.origin_frame));
      }
      HeadResult hr = eval_head(topo.head, top.payload, tgt);
      out.total_loss += hr.loss;
      ++out.valid_losses;
      loss_seed[static_cast<size_t>(s)] = std::move(hr.grad);
      loss_at[static_cast<size_t>(s)] = true;
    }
  }

  // Reverse sweep across the whole unrolled graph.  g_direct[s][l] is
  // the cotangent for the activation unit l emitted at step s, arriving
  // over the direct edge from (l + 1, s + 1); g_skip likewise for the
  // shortcut consumer.  Summation order per node: head, direct, skip.
  std::vector<std::vector<Tensor>> g_direct(
      static_cast<size_t>(total), std::vector<Tensor>(static_cast<size_t>(depth) + 1));
  std::vector<std::vector<Tensor>> g_skip(
      static_cast<size_t>(total), std::vector<Tensor>(static_cast<size_t>(depth) + 1));

  const bool drop_short = respect_mode_gradient_rule && cfg.mode == Mode::kFaOnly;
  for (int64_t s = total - 1; s >= 0; --s) {
    for (int l = depth; l >= 1; --l) {
      NodeCapture& cap = caps[static_cast<size_t>(s)][l];
      Tensor g;
      if (l == depth && loss_at[static_cast<size_t>(s)]) {
        g = loss_seed[static_cast<size_t>(s)];
      }
      Tensor& gd = g_direct[static_cast<size_t>(s)][l];
      if (!gd.absent()) {
        if (g.absent()) g = std::move(gd);
        else g.add_(gd);
      }
      Tensor& gs = g_skip[static_cast<size_t>(s)][l];
      if (!gs.absent()) {
        if (g.absent()) g = std::move(gs);
        else g.add_(gs);
      }
      if (g.absent()) continue;
      if (!cap.fired) continue;  // producer was a primed zero frame
      auto [down_direct, down_skip] =
          backward_unit(topo, ct, l, cap, std::move(g), out.grads, drop_short);
      if (s - 1 >= 0 && l - 1 >= 1) {
        g_direct[static_cast<size_t>(s) - 1][l - 1] = std::move(down_direct);
      }
      const int src = ct.wiring[l].shortcut_source;
      if (!down_skip.absent() && s - 1 >= 0 && src >= 1) {
        g_skip[static_cast<size_t>(s) - 1][src] = std::move(down_skip);
      }
    }
  }
  return out;
}

GradientReport grad_similarity(const GradStack& candidate, const GradStack& reference) {
  if (candidate.size() != reference.size()) {
    throw ShapeError("grad_similarity: unit count mismatch");
  }
  GradientReport report;
  double dot = 0.0, na = 0.0, nb = 0.0, diff = 0.0;
  for (size_t u = 0; u < candidate.size(); ++u) {
    if (candidate[u].size() != reference[u].size()) {
      throw ShapeError("grad_similarity: layer count mismatch");
    }
    for (size_t i = 0; i < candidate[u].size(); ++i) {
      const ParamSet& pc = candidate[u][i];
      const ParamSet& pr = reference[u][i];
      if (pc.size() != pr.size()) throw ShapeError("grad_similarity: arity mismatch");
      for (size_t j = 0; j < pc.size(); ++j) {
        GradientRow row;
        row.name = "u" + std::to_string(u + 1) + ".l" + std::to_string(i) + "." +
                   (j < pc.names.size() ? pc.names[j] : std::to_string(j));
        row.cosine = cosine_similarity(pc[j], pr[j]);
        row.rel_l2 = relative_l2(pc[j], pr[j]);
        report.rows.push_back(std::move(row));
        for (int64_t k = 0; k < pc[j].numel(); ++k) {
          const double a = pc[j].at(k);
          const double b = pr[j].at(k);
          dot += a * b;
          na += a * a;
          nb += b * b;
          diff += (a - b) * (a - b);
        }
      }
    }
  }
  if (na == 0.0 && nb == 0.0) {
    report.global_cosine = 1.0;
  } else if (na == 0.0 || nb == 0.0) {
    report.global_cosine = 0.0;
  } else {
    report.global_cosine = dot / (std::sqrt(na) * std::sqrt(nb));
  }
  report.global_rel_l2 = std::sqrt(diff) / std::max(std::sqrt(nb), 1e-12);
  return report;
}

void write_gradient_report_csv(const GradientReport& report, std::ostream& os) {
  os << "layer,cosine,rel_l2\n";
  os << std::setprecision(17);
  for (const GradientRow& row : report.rows) {
    os << row.name << "," << row.cosine << "," << row.rel_l2 << "\n";
  }
  os << "all," << report.global_cosine << "," << report.global_rel_l2 << "\n";
}

}  // namespace sideways
