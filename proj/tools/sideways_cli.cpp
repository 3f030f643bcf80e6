// Copyright 2026 The Sideways Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end.
//
//   gradcheck   numerical-derivative and constant-input oracle suite
//   train       one training run from a config file
//   compare     the same config swept over propagation modes
//   schedule    device-schedule simulator with CSV/Gantt export
//   memory      peak-memory accounting across schedule strategies
//
// Exit codes: 0 success, 2 configuration error, 3 divergence during
// training, 4 oracle-suite failure.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sideways/checkpoint.hpp"
#include "sideways/config.hpp"
#include "sideways/engine.hpp"
#include "sideways/errors.hpp"
#include "sideways/experiment.hpp"
#include "sideways/gradsuite.hpp"
#include "sideways/names.hpp"
#include "sideways/oracles.hpp"
#include "sideways/pipesim.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitOracle = 4;

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  std::string mode;
  std::string precision;
  int64_t seed = -1;
  int64_t stride = 0;
};

void add_common(CLI::App* cmd, CommonFlags* flags, bool config_required) {
  auto* opt = cmd->add_option("--config", flags->config_path, "experiment config file");
  if (config_required) opt->required();
  cmd->add_option("--seed", flags->seed, "override train.seed");
  cmd->add_option("--out", flags->out_dir, "override train.out_dir");
  cmd->add_option("--mode", flags->mode,
                  "override engine.mode: sideways|skip|fa_only");
  cmd->add_option("--stride", flags->stride, "override data.stride");
  cmd->add_option("--precision", flags->precision,
                  "override engine.precision: double|single");
}

sideways::ExperimentConfig resolve_config(const CommonFlags& flags) {
  sideways::ExperimentConfig cfg;
  if (!flags.config_path.empty()) {
    cfg = sideways::load_experiment_config(flags.config_path);
  }
  if (flags.seed >= 0) cfg.seed = static_cast<uint64_t>(flags.seed);
  if (!flags.out_dir.empty()) cfg.out_dir = flags.out_dir;
  if (!flags.mode.empty()) cfg.engine.mode = sideways::mode_from_name(flags.mode);
  if (flags.stride > 0) cfg.stride = flags.stride;
  if (!flags.precision.empty()) {
    cfg.engine.precision = sideways::precision_from_name(flags.precision);
  }
  return cfg;
}

void print_suite(const sideways::SuiteResult& result) {
  for (const sideways::SuiteCheck& c : result.checks) {
    std::cout << (c.pass ? "  ok   " : "  FAIL ") << std::left << std::setw(44)
              << c.name << std::scientific << std::setprecision(3) << c.value
              << " (bound " << c.bound << ")\n"
              << std::defaultfloat;
  }
}

int cmd_gradcheck(uint64_t seed, int trials, bool verbose) {
  const sideways::SuiteResult vjp =
      sideways::run_vjp_suite(seed, trials, 1e-5, 1e-12);
  const sideways::SuiteResult steady = sideways::run_constant_input_suite(seed, 1e-8);

  double worst_vjp = 0.0;
  for (const auto& c : vjp.checks) worst_vjp = std::max(worst_vjp, c.value);
  std::cout << "derivative checks: " << vjp.checks.size() << " (worst "
            << std::scientific << std::setprecision(3) << worst_vjp << ")"
            << std::defaultfloat << "\n";
  if (verbose || !vjp.all_pass) print_suite(vjp);
  std::cout << "constant-input checks:\n";
  print_suite(steady);

  if (!vjp.all_pass || !steady.all_pass) {
    std::cout << "ORACLE FAILURE\n";
    return kExitOracle;
  }
  std::cout << "all oracle checks passed\n";
  return kExitOk;
}

int cmd_train(const CommonFlags& flags) {
  const sideways::ExperimentConfig cfg = resolve_config(flags);
  const auto rows = sideways::run_experiment(cfg);
  for (const auto& r : rows) {
    if (r.split == "eval") {
      std::cout << "mode " << r.mode << " seed " << r.seed << ": eval loss "
                << r.loss << ", accuracy " << r.accuracy << " over " << r.steps
                << " steps\n";
    }
  }
  std::cout << "wrote " << (std::filesystem::path(cfg.out_dir) / "metrics.csv").string()
            << "\n";
  return kExitOk;
}

int cmd_compare(const CommonFlags& flags, int seeds) {
  const sideways::ExperimentConfig cfg = resolve_config(flags);
  std::vector<uint64_t> seed_list;
  for (int i = 0; i < seeds; ++i) seed_list.push_back(cfg.seed + static_cast<uint64_t>(i));
  const std::vector<sideways::Mode> modes = {
      sideways::Mode::kSideways, sideways::Mode::kSkipSideways,
      sideways::Mode::kFaOnly};
  const auto rows = sideways::run_mode_comparison(cfg, modes, seed_list);
  for (const auto& r : rows) {
    if (r.split == "eval") {
      std::cout << std::left << std::setw(14) << r.mode << " seed " << r.seed
                << ": eval loss " << r.loss << ", accuracy " << r.accuracy << "\n";
    }
  }
  std::cout << "wrote " << (std::filesystem::path(cfg.out_dir) / "metrics.csv").string()
            << "\n";
  return kExitOk;
}

sideways::ScheduleResult run_schedule(const std::string& kind,
                                      const sideways::DeviceCostProfile& prof,
                                      int64_t frames, int64_t group) {
  if (kind == "sequential") return sideways::simulate_sequential_bp(prof, frames);
  if (kind == "gpipe") return sideways::simulate_gpipe(prof, frames, group);
  if (kind == "sideways") return sideways::simulate_sideways(prof, frames);
  throw sideways::ConfigError("unknown schedule kind: '" + kind + "'");
}

int cmd_schedule(int devices, int64_t frames, int64_t group, double fwd, double bwd,
                 double comm, const std::string& out_dir) {
  const sideways::DeviceCostProfile prof =
      sideways::DeviceCostProfile::uniform(devices, fwd, bwd, comm);
  const std::filesystem::path dir(out_dir);
  std::filesystem::create_directories(dir);

  std::cout << std::left << std::setw(12) << "schedule" << std::setw(12) << "makespan"
            << std::setw(12) << "bubble" << std::setw(14) << "steady_bubble"
            << "peak_slots[0]\n";
  for (const std::string kind : {"sequential", "gpipe", "sideways"}) {
    const sideways::ScheduleResult sched = run_schedule(kind, prof, frames, group);
    {
      std::ofstream os(dir / ("timeline_" + kind + ".csv"));
      sideways::write_timeline_csv(sched, os);
    }
    {
      std::ofstream os(dir / ("gantt_" + kind + ".txt"));
      os << sideways::render_gantt(sched);
    }
    std::cout << std::left << std::setw(12) << kind << std::setw(12) << sched.makespan
              << std::setw(12) << sched.bubble_fraction << std::setw(14)
              << sched.steady_bubble_fraction << sched.peak_slots_per_device.at(0)
              << "\n";
  }
  std::cout << "wrote timelines under " << dir.string() << "\n";
  return kExitOk;
}

int cmd_memory(const CommonFlags& flags, const std::vector<int64_t>& frame_counts) {
  const sideways::ExperimentConfig cfg = resolve_config(flags);
  const sideways::NetworkTopology topo = sideways::build_topology(cfg);
  const sideways::CompiledTopology ct = sideways::compile_topology(topo, cfg.engine);

  std::vector<int64_t> stage_scalars;
  for (int l = 1; l <= ct.depth; ++l) {
    stage_scalars.push_back(sideways::numel_of(ct.h_shape[static_cast<size_t>(l)]));
  }
  const sideways::DeviceCostProfile prof =
      sideways::DeviceCostProfile::uniform(ct.depth);

  std::cout << "strategy,frames,peak_scalars\n";
  std::ostringstream csv;
  csv << "strategy,frames,peak_scalars\n";
  for (const int64_t t : frame_counts) {
    const auto bp = sideways::memory_account(sideways::simulate_sequential_bp(prof, t),
                                             stage_scalars);
    const auto sw =
        sideways::memory_account(sideways::simulate_sideways(prof, t), stage_scalars);
    std::cout << "bp_unrolled," << t << ',' << bp.total_peak_scalars << "\n";
    std::cout << "sideways," << t << ',' << sw.total_peak_scalars << "\n";
    csv << "bp_unrolled," << t << ',' << bp.total_peak_scalars << "\n";
    csv << "sideways," << t << ',' << sw.total_peak_scalars << "\n";
  }
  if (!cfg.out_dir.empty() && cfg.out_dir != ".") {
    const std::filesystem::path dir(cfg.out_dir);
    std::filesystem::create_directories(dir);
    std::ofstream os(dir / "memory.csv");
    os << csv.str();
    std::cout << "wrote " << (dir / "memory.csv").string() << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pipelined temporal-training engine"};
  app.require_subcommand(1);

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "run the oracle suite");
  int64_t gc_seed = 7;
  int gc_trials = 20;
  bool gc_verbose = false;
  gradcheck->add_option("--seed", gc_seed, "base seed for random draws");
  gradcheck->add_option("--trials", gc_trials, "random draws per primitive");
  gradcheck->add_flag("--verbose", gc_verbose, "print every check row");

  // train
  auto* train = app.add_subcommand("train", "train one configuration");
  CommonFlags train_flags;
  add_common(train, &train_flags, /*config_required=*/true);

  // compare
  auto* compare = app.add_subcommand("compare", "sweep propagation modes");
  CommonFlags compare_flags;
  int compare_seeds = 3;
  add_common(compare, &compare_flags, /*config_required=*/true);
  compare->add_option("--seeds", compare_seeds, "seeds per mode");

  // schedule
  auto* schedule = app.add_subcommand("schedule", "simulate device schedules");
  int sc_devices = 4;
  int64_t sc_frames = 16;
  int64_t sc_group = 4;
  double sc_fwd = 1.0;
  double sc_bwd = 1.0;
  double sc_comm = 0.0;
  std::string sc_out = "schedule_out";
  schedule->add_option("--devices", sc_devices, "pipeline stages");
  schedule->add_option("--frames", sc_frames, "frames (or micro-batches)");
  schedule->add_option("--group", sc_group, "fill-drain group size");
  schedule->add_option("--fwd", sc_fwd, "forward cost per stage");
  schedule->add_option("--bwd", sc_bwd, "backward cost per stage");
  schedule->add_option("--comm", sc_comm, "communication cost per hop");
  schedule->add_option("--out", sc_out, "output directory");

  // memory
  auto* memory = app.add_subcommand("memory", "peak-memory accounting");
  CommonFlags memory_flags;
  std::vector<int64_t> mem_frames = {16, 64, 256};
  add_common(memory, &memory_flags, /*config_required=*/false);
  memory->add_option("--frames", mem_frames, "sequence lengths to account");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (gradcheck->parsed()) {
      return cmd_gradcheck(static_cast<uint64_t>(gc_seed), gc_trials, gc_verbose);
    }
    if (train->parsed()) return cmd_train(train_flags);
    if (compare->parsed()) return cmd_compare(compare_flags, compare_seeds);
    if (schedule->parsed()) {
      return cmd_schedule(sc_devices, sc_frames, sc_group, sc_fwd, sc_bwd, sc_comm,
                          sc_out);
    }
    if (memory->parsed()) return cmd_memory(memory_flags, mem_frames);
  } catch (const sideways::DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n  step: " << e.step
              << "\n  loss: " << e.loss << "\n";
    return kExitDivergence;
  } catch (const sideways::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const sideways::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}
