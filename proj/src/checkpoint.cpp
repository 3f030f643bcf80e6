// Copyright 2026 The Sideways Authors
// SPDX-License-Identifier: Apache-2.0

#include "sideways/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <vector>

#include "sideways/errors.hpp"
#include "sideways/names.hpp"

namespace sideways {

namespace {

constexpr char kMagic[8] = {'S', 'W', 'C', 'K', 'P', 'T', '0', '\n'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double d) {
  uint64_t v;
  static_assert(sizeof(v) == sizeof(d));
  std::memcpy(&v, &d, sizeof(v));
  put_u64(os, v);
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw ConfigError("checkpoint truncated");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw ConfigError("checkpoint truncated");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& is) {
  const uint64_t v = get_u64(is);
  double d;
  std::memcpy(&d, &v, sizeof(d));
  return d;
}

void put_string(std::ostream& os, const std::string& s) {
  put_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is) {
  const uint64_t n = get_u64(is);
  if (n > (uint64_t(1) << 32)) throw ConfigError("checkpoint string length implausible");
  std::string s(static_cast<size_t>(n), '\0');
  if (n > 0 && !is.read(s.data(), static_cast<std::streamsize>(n))) {
    throw ConfigError("checkpoint truncated");
  }
  return s;
}

// Stable name for one tensor: "<kind>:u<unit>.l<layer>.<param>".
std::string tensor_key(const char* kind, size_t u, size_t i, const std::string& pname) {
  std::ostringstream os;
  os << kind << ":u" << (u + 1) << ".l" << (i + 1) << "." << pname;
  return os.str();
}

// Walks params plus any optimizer moments in a fixed order.
template <typename Fn>
void for_each_tensor(const Engine& engine, Fn&& fn) {
  const GradStack& params = engine.params();
  const OptimizerState& opt = engine.optimizer_state();
  for (size_t u = 0; u < params.size(); ++u) {
    for (size_t i = 0; i < params[u].size(); ++i) {
      const ParamSet& ps = params[u][i];
      for (size_t j = 0; j < ps.size(); ++j) {
        fn(tensor_key("p", u, i, ps.names[j]), ps[j]);
      }
      if (!opt.m.empty()) {
        for (size_t j = 0; j < ps.size(); ++j) {
          fn(tensor_key("m", u, i, ps.names[j]), opt.m[u][i][j]);
          fn(tensor_key("v", u, i, ps.names[j]), opt.v[u][i][j]);
        }
      }
    }
  }
}

}  // namespace

std::string engine_config_to_text(const EngineConfig& cfg) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "mode = " << mode_name(cfg.mode) << "\n";
  os << "fusion = " << fusion_name(cfg.fusion) << "\n";
  os << "skip_span = " << cfg.skip_span << "\n";
  os << "cadence = " << cadence_name(cfg.cadence) << "\n";
  os << "warmup = " << warmup_name(cfg.warmup) << "\n";
  os << "input_shortcut = " << (cfg.input_shortcut ? "true" : "false") << "\n";
  os << "precision = " << precision_name(cfg.precision) << "\n";
  os << "optimizer = " << optimizer_name(cfg.optimizer.kind) << "\n";
  os << "alpha = " << cfg.optimizer.alpha << "\n";
  os << "beta1 = " << cfg.optimizer.beta1 << "\n";
  os << "beta2 = " << cfg.optimizer.beta2 << "\n";
  os << "eps = " << cfg.optimizer.eps << "\n";
  os << "cosine_decay = " << (cfg.optimizer.cosine_decay ? "true" : "false") << "\n";
  os << "total_updates = " << cfg.optimizer.total_updates << "\n";
  os << "num_threads = " << cfg.num_threads << "\n";
  return os.str();
}

EngineConfig engine_config_from_text(const std::string& text) {
  EngineConfig cfg;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw ConfigError("bad config line: '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 3);
    auto as_bool = [&](const std::string& v) {
      if (v == "true") return true;
      if (v == "false") return false;
      throw ConfigError("bad boolean for " + key + ": '" + v + "'");
    };
    if (key == "mode") cfg.mode = mode_from_name(val);
    else if (key == "fusion") cfg.fusion = fusion_from_name(val);
    else if (key == "skip_span") cfg.skip_span = std::stoi(val);
    else if (key == "cadence") cfg.cadence = cadence_from_name(val);
    else if (key == "warmup") cfg.warmup = warmup_from_name(val);
    else if (key == "input_shortcut") cfg.input_shortcut = as_bool(val);
    else if (key == "precision") cfg.precision = precision_from_name(val);
    else if (key == "optimizer") cfg.optimizer.kind = optimizer_from_name(val);
    else if (key == "alpha") cfg.optimizer.alpha = std::stod(val);
    else if (key == "beta1") cfg.optimizer.beta1 = std::stod(val);
    else if (key == "beta2") cfg.optimizer.beta2 = std::stod(val);
    else if (key == "eps") cfg.optimizer.eps = std::stod(val);
    else if (key == "cosine_decay") cfg.optimizer.cosine_decay = as_bool(val);
    else if (key == "total_updates") cfg.optimizer.total_updates = std::stoll(val);
    else if (key == "num_threads") cfg.num_threads = std::stoi(val);
    else throw ConfigError("unknown config key: '" + key + "'");
  }
  return cfg;
}

void save_checkpoint(const std::string& path, const Engine& engine) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ConfigError("cannot open checkpoint file for writing: " + path);
  os.write(kMagic, sizeof(kMagic));
  put_u32(os, kVersion);
  put_string(os, engine_config_to_text(engine.config()));
  put_u64(os, static_cast<uint64_t>(engine.optimizer_state().update_count));

  uint64_t count = 0;
  for_each_tensor(engine, [&](const std::string&, const Tensor&) { ++count; });
  put_u64(os, count);
  for_each_tensor(engine, [&](const std::string& name, const Tensor& t) {
    put_string(os, name);
    put_u32(os, static_cast<uint32_t>(t.rank()));
    for (int64_t d : t.shape()) put_u64(os, static_cast<uint64_t>(d));
    put_u32(os, t.precision() == Precision::kSingle ? 1 : 0);
    for (int64_t j = 0; j < t.numel(); ++j) put_f64(os, t.at(j));
  });
  if (!os) throw ConfigError("checkpoint write failed: " + path);
}

namespace {

struct RawTensor {
  std::vector<int64_t> shape;
  std::vector<double> values;
  Precision prec = Precision::kDouble;
};

void open_and_check_header(std::ifstream& is, const std::string& path) {
  if (!is) throw ConfigError("cannot open checkpoint file: " + path);
  char magic[sizeof(kMagic)];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ConfigError("not a checkpoint file: " + path);
  }
  const uint32_t version = get_u32(is);
  if (version != kVersion) {
    throw ConfigError("unsupported checkpoint version " + std::to_string(version));
  }
}

}  // namespace

void load_checkpoint(const std::string& path, Engine& engine) {
  std::ifstream is(path, std::ios::binary);
  open_and_check_header(is, path);
  get_string(is);  // stored config text; informational
  const uint64_t update_count = get_u64(is);

  std::map<std::string, RawTensor> loaded;
  const uint64_t count = get_u64(is);
  for (uint64_t k = 0; k < count; ++k) {
    const std::string name = get_string(is);
    RawTensor rt;
    const uint32_t rank = get_u32(is);
    rt.shape.resize(rank);
    for (uint32_t d = 0; d < rank; ++d) rt.shape[d] = static_cast<int64_t>(get_u64(is));
    rt.prec = get_u32(is) == 1 ? Precision::kSingle : Precision::kDouble;
    const int64_t n = numel_of(rt.shape);
    rt.values.resize(static_cast<size_t>(n));
    for (int64_t j = 0; j < n; ++j) rt.values[static_cast<size_t>(j)] = get_f64(is);
    if (!loaded.emplace(name, std::move(rt)).second) {
      throw ConfigError("duplicate tensor '" + name + "' in checkpoint");
    }
  }

  // The engine's tensor inventory must match the file exactly.
  size_t expected = 0;
  std::string missing;
  for_each_tensor(engine, [&](const std::string& name, const Tensor&) {
    ++expected;
    if (missing.empty() && loaded.find(name) == loaded.end()) missing = name;
  });
  if (!missing.empty()) {
    throw ShapeError("checkpoint lacks tensor '" + missing + "'");
  }
  if (expected != loaded.size()) {
    throw ShapeError("checkpoint holds " + std::to_string(loaded.size()) +
                     " tensors, engine expects " + std::to_string(expected));
  }

  auto install = [&](const std::string& name, Tensor& dst) {
    const RawTensor& rt = loaded.at(name);
    if (rt.shape != dst.shape()) {
      throw ShapeError("checkpoint tensor '" + name + "' has shape " +
                       shape_to_string(rt.shape) + ", engine expects " +
                       shape_to_string(dst.shape()));
    }
    dst = Tensor(rt.shape, rt.values, rt.prec);
  };

  GradStack& params = engine.params();
  OptimizerState& opt = engine.optimizer_state();
  for (size_t u = 0; u < params.size(); ++u) {
    for (size_t i = 0; i < params[u].size(); ++i) {
      ParamSet& ps = params[u][i];
      for (size_t j = 0; j < ps.size(); ++j) {
        install(tensor_key("p", u, i, ps.names[j]), ps[j]);
        if (!opt.m.empty()) {
          install(tensor_key("m", u, i, ps.names[j]), opt.m[u][i][j]);
          install(tensor_key("v", u, i, ps.names[j]), opt.v[u][i][j]);
        }
      }
    }
  }
  opt.update_count = static_cast<int64_t>(update_count);
}

std::string read_checkpoint_config(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  open_and_check_header(is, path);
  return get_string(is);
}

}  // namespace sideways
