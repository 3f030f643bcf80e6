// Copyright 2026 The Sideways Authors
// SPDX-License-Identifier: Apache-2.0

#include "sideways/experiment.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "sideways/errors.hpp"
#include "sideways/names.hpp"
#include "sideways/oracles.hpp"

namespace sideways {

namespace {

void check_experiment(const ExperimentConfig& cfg) {
  if (cfg.depth < 2) throw ConfigError("experiment depth must be >= 2");
  if (cfg.channels < 1) throw ConfigError("experiment channels must be >= 1");
  if (cfg.frame_height != cfg.frame_width) {
    throw ConfigError("experiment frames must be square");
  }
  if (cfg.depth >= 3 && cfg.frame_height % 2 != 0) {
    throw ConfigError("frame size must be even to allow the stride-2 stage");
  }
  if (cfg.clip_frames < 1) throw ConfigError("clip_frames must be >= 1");
  if (cfg.train_clips < 1) throw ConfigError("train_clips must be >= 1");
  if (cfg.eval_frames < 1) throw ConfigError("eval_frames must be >= 1");
  if (cfg.stride < 1) throw ConfigError("stride must be >= 1");
  if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (cfg.montage_cuts < 0) throw ConfigError("montage_cuts must be >= 0");
}

bool unit_has_shortcut(const ExperimentConfig& cfg, int64_t l) {
  if (cfg.engine.mode == Mode::kSideways) return false;
  const int64_t src = l - cfg.engine.skip_span;
  return src >= 1 || (src == 0 && cfg.engine.input_shortcut);
}

FrameSequence make_clip(const ExperimentConfig& cfg, const SpriteSpec& spec,
                        int64_t frames, int64_t delta, RandomSource& rng) {
  if (cfg.task == TaskKind::kFutureFrame) {
    return gen_future_frame_clip(spec, frames, delta, rng);
  }
  return gen_translating_sprite(spec, frames, rng);
}

}  // namespace

SpriteSpec sprite_from_config(const ExperimentConfig& cfg) {
  SpriteSpec spec;
  spec.height = cfg.frame_height;
  spec.width = cfg.frame_width;
  spec.sprite = cfg.sprite;
  spec.amplitude = cfg.amplitude;
  spec.blur = cfg.sprite_blur;
  return spec;
}

int64_t resolved_future_delta(const ExperimentConfig& cfg) {
  return cfg.future_delta < 0 ? cfg.depth : cfg.future_delta;
}

NetworkTopology build_topology(const ExperimentConfig& cfg) {
  check_experiment(cfg);
  const int64_t depth = cfg.depth;
  const int64_t width = cfg.channels;
  const int64_t classes = static_cast<int64_t>(sprite_from_config(cfg).classes.size());
  const bool pooled = depth >= 3;
  const int64_t final_spatial = pooled ? cfg.frame_height / 2 : cfg.frame_height;

  std::vector<int64_t> ch(static_cast<size_t>(depth) + 1, width);
  ch[0] = 1;

  NetworkTopology topo;
  topo.input_shape = {cfg.frame_height, cfg.frame_width, 1};
  topo.head = cfg.task == TaskKind::kFutureFrame ? HeadKind::kMse : HeadKind::kCrossEntropy;

  for (int64_t l = 1; l <= depth; ++l) {
    int64_t in_ch = ch[static_cast<size_t>(l - 1)];
    if (unit_has_shortcut(cfg, l)) {
      const int64_t src = l - cfg.engine.skip_span;
      if (cfg.engine.fusion == FusionKind::kConcat) {
        in_ch += ch[static_cast<size_t>(src)];
      } else if (cfg.engine.fusion == FusionKind::kAdd &&
                 ch[static_cast<size_t>(src)] != ch[static_cast<size_t>(l - 1)]) {
        throw ConfigError("additive fusion needs equal unit widths; use concat");
      }
    }

    UnitSpec unit;
    if (l == depth) {
      unit.layers.push_back(LayerSpec::conv2d(5, 5, in_ch, width));
      unit.layers.push_back(LayerSpec::relu());
      if (cfg.task == TaskKind::kFutureFrame) {
        if (pooled) unit.layers.push_back(LayerSpec::tile_upsample(2));
        unit.layers.push_back(LayerSpec::conv2d(3, 3, width, 1));
      } else {
        unit.layers.push_back(LayerSpec::maxpool2d(final_spatial, final_spatial));
        unit.layers.push_back(LayerSpec::affine(width, classes));
      }
    } else if (pooled && l == depth - 1) {
      unit.layers.push_back(LayerSpec::conv2d(5, 5, in_ch, width));
      unit.layers.push_back(LayerSpec::relu());
      unit.layers.push_back(LayerSpec::maxpool2d(2, 2));
    } else {
      unit.layers.push_back(LayerSpec::conv2d(3, 3, in_ch, width));
      unit.layers.push_back(LayerSpec::relu());
    }
    topo.units.push_back(std::move(unit));
  }
  return topo;
}

std::vector<FrameSequence> build_train_set(const ExperimentConfig& cfg, int64_t epoch) {
  check_experiment(cfg);
  const SpriteSpec spec = sprite_from_config(cfg);
  const int64_t delta = resolved_future_delta(cfg);
  RandomSource rng =
      RandomSource(cfg.seed).split("train-data").split(static_cast<uint64_t>(epoch));

  std::vector<FrameSequence> out;
  out.reserve(static_cast<size_t>(cfg.train_clips));
  if (cfg.montage_cuts > 0) {
    const int64_t pieces = cfg.montage_cuts + 1;
    if (cfg.clip_frames % pieces != 0) {
      throw ConfigError("clip_frames must split evenly across " +
                        std::to_string(pieces) + " montage pieces");
    }
    const int64_t piece = cfg.clip_frames / pieces;
    for (int64_t i = 0; i < cfg.train_clips; ++i) {
      std::vector<FrameSequence> parts;
      parts.reserve(static_cast<size_t>(pieces));
      for (int64_t p = 0; p < pieces; ++p) {
        parts.push_back(make_clip(cfg, spec, piece, delta, rng));
      }
      out.push_back(subsample_framerate(gen_montage(parts, cfg.montage_mode), cfg.stride));
    }
  } else {
    for (int64_t i = 0; i < cfg.train_clips; ++i) {
      out.push_back(subsample_framerate(make_clip(cfg, spec, cfg.clip_frames, delta, rng),
                                        cfg.stride));
    }
  }
  return out;
}

std::vector<FrameSequence> build_eval_set(const ExperimentConfig& cfg) {
  check_experiment(cfg);
  const SpriteSpec spec = sprite_from_config(cfg);
  const int64_t native = cfg.eval_frames * cfg.stride;
  std::vector<FrameSequence> grid =
      cfg.task == TaskKind::kFutureFrame
          ? future_frame_eval_grid(spec, native, resolved_future_delta(cfg),
                                   cfg.eval_start_stride)
          : sprite_eval_grid(spec, native, cfg.eval_start_stride);
  if (cfg.stride > 1) {
    for (FrameSequence& seq : grid) seq = subsample_framerate(seq, cfg.stride);
  }
  return grid;
}

EvalMetrics evaluate_suite(Engine& engine, const std::vector<FrameSequence>& suite) {
  EvalMetrics m;
  double loss_sum = 0.0;
  double correct_sum = 0.0;
  for (const FrameSequence& seq : suite) {
    const RunResult r = engine.evaluate(seq);
    const double n = static_cast<double>(r.losses.size());
    loss_sum += r.mean_loss * n;
    correct_sum += r.accuracy * n;
    m.steps += static_cast<int64_t>(r.losses.size());
  }
  if (m.steps > 0) {
    m.loss = loss_sum / static_cast<double>(m.steps);
    m.accuracy = correct_sum / static_cast<double>(m.steps);
  }
  return m;
}

TrainOutcome train_and_eval(const ExperimentConfig& cfg) {
  check_experiment(cfg);
  const NetworkTopology topo = build_topology(cfg);
  const uint64_t engine_seed = RandomSource(cfg.seed).split("init").next_u64();
  EngineConfig ecfg = cfg.engine;
  if (ecfg.optimizer.cosine_decay && ecfg.optimizer.total_updates <= 0) {
    // One optimizer update fires per engine step (per-step cadence) or
    // per clip (per-sequence).  A clip holds clip_frames/stride frames
    // after subsampling and the engine runs depth extra drain steps, so
    // the anneal horizon covers exactly the scheduled update count.
    const int64_t per_clip =
        ecfg.cadence == UpdateCadence::kPerStep
            ? (cfg.clip_frames + cfg.stride - 1) / cfg.stride + cfg.depth
            : 1;
    ecfg.optimizer.total_updates = cfg.epochs * cfg.train_clips * per_clip;
  }
  auto engine = std::make_unique<Engine>(topo, ecfg, engine_seed);

  const std::vector<FrameSequence> eval_set = build_eval_set(cfg);

  TrainOutcome out;
  for (int64_t e = 0; e < cfg.epochs; ++e) {
    const std::vector<FrameSequence> train_set = build_train_set(cfg, e);
    double loss_sum = 0.0;
    double correct_sum = 0.0;
    int64_t steps = 0;
    for (const FrameSequence& clip : train_set) {
      const RunResult r = engine->train_sequence(clip);
      const double n = static_cast<double>(r.losses.size());
      loss_sum += r.mean_loss * n;
      correct_sum += r.accuracy * n;
      steps += static_cast<int64_t>(r.losses.size());
    }
    EpochMetrics em;
    em.epoch = e;
    em.steps = steps;
    if (steps > 0) {
      em.loss = loss_sum / static_cast<double>(steps);
      em.accuracy = correct_sum / static_cast<double>(steps);
    }
    out.train_epochs.push_back(em);
  }
  out.eval = evaluate_suite(*engine, eval_set);
  out.engine = std::move(engine);
  return out;
}

std::vector<MetricsRow> outcome_rows(const ExperimentConfig& cfg,
                                     const TrainOutcome& outcome) {
  std::vector<MetricsRow> rows;
  auto base = [&] {
    MetricsRow r;
    r.mode = mode_name(cfg.engine.mode);
    r.seed = cfg.seed;
    r.stride = cfg.stride;
    r.cuts = cfg.montage_cuts;
    return r;
  };
  for (const EpochMetrics& em : outcome.train_epochs) {
    MetricsRow r = base();
    r.epoch = em.epoch;
    r.split = "train";
    r.loss = em.loss;
    r.accuracy = em.accuracy;
    r.steps = em.steps;
    rows.push_back(std::move(r));
  }
  MetricsRow r = base();
  r.epoch = -1;
  r.split = "eval";
  r.loss = outcome.eval.loss;
  r.accuracy = outcome.eval.accuracy;
  r.steps = outcome.eval.steps;
  rows.push_back(std::move(r));
  return rows;
}

void write_metrics_csv(const std::vector<MetricsRow>& rows, std::ostream& os) {
  os << "mode,seed,stride,cuts,epoch,split,loss,accuracy,steps\n";
  os << std::setprecision(17);
  for (const MetricsRow& r : rows) {
    os << r.mode << ',' << r.seed << ',' << r.stride << ',' << r.cuts << ','
       << r.epoch << ',' << r.split << ',' << r.loss << ',' << r.accuracy << ','
       << r.steps << '\n';
  }
}

std::string metrics_plot_script(const std::string& csv_name) {
  std::ostringstream os;
  os << "#!/usr/bin/env python3\n"
     << "\"\"\"Plots training curves from " << csv_name << ".\"\"\"\n"
     << "import collections\n"
     << "import csv\n\n"
     << "import matplotlib\n"
     << "matplotlib.use(\"Agg\")\n"
     << "import matplotlib.pyplot as plt\n\n"
     << "curves = collections.defaultdict(list)\n"
     << "finals = {}\n"
     << "with open(\"" << csv_name << "\") as fh:\n"
     << "    for row in csv.DictReader(fh):\n"
     << "        key = (row[\"mode\"], row[\"seed\"], row[\"stride\"], row[\"cuts\"])\n"
     << "        if row[\"split\"] == \"train\":\n"
     << "            curves[key].append((int(row[\"epoch\"]), float(row[\"loss\"]),\n"
     << "                                float(row[\"accuracy\"])))\n"
     << "        else:\n"
     << "            finals[key] = (float(row[\"loss\"]), float(row[\"accuracy\"]))\n\n"
     << "fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(11, 4))\n"
     << "for key, points in sorted(curves.items()):\n"
     << "    points.sort()\n"
     << "    label = \"mode=%s seed=%s stride=%s cuts=%s\" % key\n"
     << "    ax_loss.plot([p[0] for p in points], [p[1] for p in points], label=label)\n"
     << "    ax_acc.plot([p[0] for p in points], [p[2] for p in points], label=label)\n"
     << "for key, (loss, acc) in sorted(finals.items()):\n"
     << "    ax_acc.axhline(acc, linestyle=\":\", linewidth=0.8)\n"
     << "ax_loss.set_xlabel(\"epoch\")\n"
     << "ax_loss.set_ylabel(\"train loss\")\n"
     << "ax_acc.set_xlabel(\"epoch\")\n"
     << "ax_acc.set_ylabel(\"accuracy (dotted: final eval)\")\n"
     << "ax_acc.legend(fontsize=6)\n"
     << "fig.tight_layout()\n"
     << "fig.savefig(\"metrics.png\", dpi=150)\n"
     << "print(\"wrote metrics.png\")\n";
  return os.str();
}

namespace {

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path.string());
  os << text;
}

void write_run_files(const ExperimentConfig& cfg, const std::vector<MetricsRow>& rows) {
  const std::filesystem::path dir(cfg.out_dir);
  std::filesystem::create_directories(dir);
  {
    std::ofstream os(dir / "metrics.csv");
    if (!os) throw ConfigError("cannot write metrics.csv under " + cfg.out_dir);
    write_metrics_csv(rows, os);
  }
  write_text_file(dir / "plot_metrics.py", metrics_plot_script("metrics.csv"));
}

void write_gradsim_file(const ExperimentConfig& cfg, TrainOutcome& outcome) {
  const SpriteSpec spec = sprite_from_config(cfg);
  RandomSource rng = RandomSource(cfg.seed).split("gradsim");
  FrameSequence probe = subsample_framerate(
      make_clip(cfg, spec, cfg.clip_frames, resolved_future_delta(cfg), rng),
      cfg.stride);

  Engine& engine = *outcome.engine;
  RunOptions opts;
  opts.process_gradients = true;
  opts.train = false;
  const RunResult run = engine.run_sequence(probe, opts);
  const UnrolledGradResult truth = unrolled_true_grads(
      engine.topology(), engine.config(), engine.params(), probe);
  const GradientReport report = grad_similarity(run.total_grad, truth.grads);

  const std::filesystem::path dir(cfg.out_dir);
  std::filesystem::create_directories(dir);
  std::ofstream os(dir / "gradsim.csv");
  if (!os) throw ConfigError("cannot write gradsim.csv under " + cfg.out_dir);
  write_gradient_report_csv(report, os);
}

}  // namespace

std::vector<MetricsRow> run_experiment(const ExperimentConfig& cfg) {
  TrainOutcome outcome = train_and_eval(cfg);
  const std::vector<MetricsRow> rows = outcome_rows(cfg, outcome);
  write_run_files(cfg, rows);
  if (cfg.write_gradsim) write_gradsim_file(cfg, outcome);
  return rows;
}

std::vector<MetricsRow> run_mode_comparison(const ExperimentConfig& base,
                                            const std::vector<Mode>& modes,
                                            const std::vector<uint64_t>& seeds) {
  std::vector<MetricsRow> rows;
  for (const Mode mode : modes) {
    for (const uint64_t seed : seeds) {
      ExperimentConfig cfg = base;
      cfg.engine.mode = mode;
      cfg.seed = seed;
      const TrainOutcome outcome = train_and_eval(cfg);
      for (MetricsRow& r : outcome_rows(cfg, outcome)) rows.push_back(std::move(r));
    }
  }
  ExperimentConfig out_cfg = base;
  write_run_files(out_cfg, rows);
  return rows;
}

}  // namespace sideways
