// Copyright 2026 The Sideways Authors
// SPDX-License-Identifier: Apache-2.0

#include "sideways/config.hpp"

#include <cctype>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "sideways/errors.hpp"
#include "sideways/names.hpp"

namespace sideways {

namespace {

std::string trim(const std::string& s) {
  size_t b = 0;
  size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

int64_t parse_i64(const std::string& key, const std::string& v) {
  size_t idx = 0;
  int64_t out = 0;
  try {
    out = std::stoll(v, &idx);
  } catch (const std::exception&) {
    throw ConfigError("bad integer for " + key + ": '" + v + "'");
  }
  if (idx != v.size()) throw ConfigError("bad integer for " + key + ": '" + v + "'");
  return out;
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
  size_t idx = 0;
  uint64_t out = 0;
  try {
    out = std::stoull(v, &idx);
  } catch (const std::exception&) {
    throw ConfigError("bad unsigned integer for " + key + ": '" + v + "'");
  }
  if (idx != v.size()) {
    throw ConfigError("bad unsigned integer for " + key + ": '" + v + "'");
  }
  return out;
}

double parse_f64(const std::string& key, const std::string& v) {
  size_t idx = 0;
  double out = 0;
  try {
    out = std::stod(v, &idx);
  } catch (const std::exception&) {
    throw ConfigError("bad number for " + key + ": '" + v + "'");
  }
  if (idx != v.size()) throw ConfigError("bad number for " + key + ": '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("bad boolean for " + key + ": '" + v + "'");
}

std::string montage_mode_name(MontageMode m) {
  return m == MontageMode::kConcat ? "concat" : "interleave";
}

MontageMode montage_mode_from_name(const std::string& key, const std::string& v) {
  if (v == "concat") return MontageMode::kConcat;
  if (v == "interleave") return MontageMode::kInterleave;
  throw ConfigError("bad montage mode for " + key + ": '" + v + "'");
}

}  // namespace

std::string task_name(TaskKind t) {
  return t == TaskKind::kDirectionClassification ? "direction_classification"
                                                 : "future_frame";
}

TaskKind task_from_name(const std::string& s) {
  if (s == "direction_classification") return TaskKind::kDirectionClassification;
  if (s == "future_frame") return TaskKind::kFutureFrame;
  throw ConfigError("unknown task name: '" + s + "'");
}

EngineConfig default_experiment_engine() {
  EngineConfig cfg;
  cfg.mode = Mode::kSkipSideways;
  cfg.fusion = FusionKind::kConcat;
  cfg.skip_span = 3;
  cfg.cadence = UpdateCadence::kPerStep;
  cfg.warmup = WarmupPolicy::kDiscard;
  cfg.input_shortcut = true;
  cfg.optimizer.kind = OptimizerKind::kAdam;
  cfg.optimizer.alpha = 2e-4;
  // Anneal to zero over the run; the trainer resolves the horizon from
  // the schedule when total_updates is left at zero.
  cfg.optimizer.cosine_decay = true;
  cfg.optimizer.total_updates = 0;
  return cfg;
}

KeyValueMap parse_config_text(const std::string& text) {
  KeyValueMap out;
  std::istringstream is(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const size_t cut = line.find_first_of("#;");
    if (cut != std::string::npos) line.resize(cut);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("line " + std::to_string(lineno) + ": unterminated section");
      }
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) {
        throw ConfigError("line " + std::to_string(lineno) + ": empty section name");
      }
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    }
    out[section.empty() ? key : section + "." + key] = val;
  }
  return out;
}

KeyValueMap parse_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_config_text(buf.str());
}

void apply_config_key(ExperimentConfig& cfg, const std::string& key,
                      const std::string& value) {
  if (key == "task.kind") cfg.task = task_from_name(value);
  else if (key == "data.frame_height") cfg.frame_height = parse_i64(key, value);
  else if (key == "data.frame_width") cfg.frame_width = parse_i64(key, value);
  else if (key == "data.sprite") cfg.sprite = parse_i64(key, value);
  else if (key == "data.amplitude") cfg.amplitude = parse_f64(key, value);
  else if (key == "data.sprite_blur") cfg.sprite_blur = parse_f64(key, value);
  else if (key == "data.clip_frames") cfg.clip_frames = parse_i64(key, value);
  else if (key == "data.train_clips") cfg.train_clips = parse_i64(key, value);
  else if (key == "data.eval_frames") cfg.eval_frames = parse_i64(key, value);
  else if (key == "data.eval_start_stride") cfg.eval_start_stride = parse_i64(key, value);
  else if (key == "data.stride") cfg.stride = parse_i64(key, value);
  else if (key == "data.future_delta") cfg.future_delta = parse_i64(key, value);
  else if (key == "data.montage_cuts") cfg.montage_cuts = parse_i64(key, value);
  else if (key == "data.montage_mode") cfg.montage_mode = montage_mode_from_name(key, value);
  else if (key == "model.depth") cfg.depth = parse_i64(key, value);
  else if (key == "model.channels") cfg.channels = parse_i64(key, value);
  else if (key == "train.epochs") cfg.epochs = parse_i64(key, value);
  else if (key == "train.seed") cfg.seed = parse_u64(key, value);
  else if (key == "train.out_dir") cfg.out_dir = value;
  else if (key == "train.write_gradsim") cfg.write_gradsim = parse_bool(key, value);
  else if (key == "engine.mode") cfg.engine.mode = mode_from_name(value);
  else if (key == "engine.fusion") cfg.engine.fusion = fusion_from_name(value);
  else if (key == "engine.skip_span") cfg.engine.skip_span = static_cast<int>(parse_i64(key, value));
  else if (key == "engine.cadence") cfg.engine.cadence = cadence_from_name(value);
  else if (key == "engine.warmup") cfg.engine.warmup = warmup_from_name(value);
  else if (key == "engine.input_shortcut") cfg.engine.input_shortcut = parse_bool(key, value);
  else if (key == "engine.precision") cfg.engine.precision = precision_from_name(value);
  else if (key == "engine.num_threads") cfg.engine.num_threads = static_cast<int>(parse_i64(key, value));
  else if (key == "optimizer.kind") cfg.engine.optimizer.kind = optimizer_from_name(value);
  else if (key == "optimizer.alpha") cfg.engine.optimizer.alpha = parse_f64(key, value);
  else if (key == "optimizer.beta1") cfg.engine.optimizer.beta1 = parse_f64(key, value);
  else if (key == "optimizer.beta2") cfg.engine.optimizer.beta2 = parse_f64(key, value);
  else if (key == "optimizer.eps") cfg.engine.optimizer.eps = parse_f64(key, value);
  else if (key == "optimizer.cosine_decay")
    cfg.engine.optimizer.cosine_decay = parse_bool(key, value);
  else if (key == "optimizer.total_updates")
    cfg.engine.optimizer.total_updates = parse_i64(key, value);
  else throw ConfigError("unknown config key: '" + key + "'");
}

ExperimentConfig config_from_map(const KeyValueMap& kv, const ExperimentConfig& base) {
  ExperimentConfig cfg = base;
  for (const auto& [key, value] : kv) apply_config_key(cfg, key, value);
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  return config_from_map(parse_config_file(path));
}

std::string config_to_text(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "[task]\n";
  os << "kind = " << task_name(cfg.task) << "\n\n";
  os << "[data]\n";
  os << "frame_height = " << cfg.frame_height << "\n";
  os << "frame_width = " << cfg.frame_width << "\n";
  os << "sprite = " << cfg.sprite << "\n";
  os << "amplitude = " << cfg.amplitude << "\n";
  os << "sprite_blur = " << cfg.sprite_blur << "\n";
  os << "clip_frames = " << cfg.clip_frames << "\n";
  os << "train_clips = " << cfg.train_clips << "\n";
  os << "eval_frames = " << cfg.eval_frames << "\n";
  os << "eval_start_stride = " << cfg.eval_start_stride << "\n";
  os << "stride = " << cfg.stride << "\n";
  os << "future_delta = " << cfg.future_delta << "\n";
  os << "montage_cuts = " << cfg.montage_cuts << "\n";
  os << "montage_mode = " << montage_mode_name(cfg.montage_mode) << "\n\n";
  os << "[model]\n";
  os << "depth = " << cfg.depth << "\n";
  os << "channels = " << cfg.channels << "\n\n";
  os << "[train]\n";
  os << "epochs = " << cfg.epochs << "\n";
  os << "seed = " << cfg.seed << "\n";
  os << "out_dir = " << cfg.out_dir << "\n";
  os << "write_gradsim = " << (cfg.write_gradsim ? "true" : "false") << "\n\n";
  os << "[engine]\n";
  os << "mode = " << mode_name(cfg.engine.mode) << "\n";
  os << "fusion = " << fusion_name(cfg.engine.fusion) << "\n";
  os << "skip_span = " << cfg.engine.skip_span << "\n";
  os << "cadence = " << cadence_name(cfg.engine.cadence) << "\n";
  os << "warmup = " << warmup_name(cfg.engine.warmup) << "\n";
  os << "input_shortcut = " << (cfg.engine.input_shortcut ? "true" : "false") << "\n";
  os << "precision = " << precision_name(cfg.engine.precision) << "\n";
  os << "num_threads = " << cfg.engine.num_threads << "\n\n";
  os << "[optimizer]\n";
  os << "kind = " << optimizer_name(cfg.engine.optimizer.kind) << "\n";
  os << "alpha = " << cfg.engine.optimizer.alpha << "\n";
  os << "beta1 = " << cfg.engine.optimizer.beta1 << "\n";
  os << "beta2 = " << cfg.engine.optimizer.beta2 << "\n";
  os << "eps = " << cfg.engine.optimizer.eps << "\n";
  os << "cosine_decay = " << (cfg.engine.optimizer.cosine_decay ? "true" : "false")
     << "\n";
  os << "total_updates = " << cfg.engine.optimizer.total_updates << "\n";
  return os.str();
}

}  // namespace sideways
