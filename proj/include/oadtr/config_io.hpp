// Copyright 2026 The oadtr Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cerrno>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "oadtr/errors.hpp"
#include "oadtr/model.hpp"

namespace oadtr {

/// Optimization settings. Defaults: Adam, batch 128, lr 1e-4, weight decay 5e-4.
struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 128;
  double lr = 1e-4;
  double weight_decay = 5e-4;
  std::uint64_t seed = 0;
  std::size_t eval_every = 0;  // 0: evaluate only when asked
  std::size_t stride = 1;
  bool require_full_future = true;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("invalid train config: " + msg); };
    if (epochs == 0) fail("epochs must be >= 1");
    if (batch_size == 0) fail("batch_size must be >= 1");
    if (!(lr > 0.0)) fail("lr must be > 0");
    if (!(weight_decay >= 0.0)) fail("weight_decay must be >= 0");
    if (stride == 0) fail("stride must be >= 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) fail("betas must be in [0, 1)");
    if (!(adam_eps > 0.0)) fail("adam_eps must be > 0");
  }
};

/// One `key = value` entry with the line it came from (0 for flags).
struct ConfigEntry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::string where(const ConfigEntry& e) {
  return e.line ? "line " + std::to_string(e.line) + ": " : "";
}

inline std::uint64_t parse_u64(const ConfigEntry& e) {
  std::uint64_t v = 0;
  const auto* end = e.value.data() + e.value.size();
  const auto [ptr, ec] = std::from_chars(e.value.data(), end, v);
  if (ec != std::errc{} || ptr != end) {
    throw ConfigError(where(e) + "'" + e.key + "' expects a non-negative integer, got '" + e.value + "'");
  }
  return v;
}

inline double parse_real(const ConfigEntry& e) {
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(e.value.c_str(), &end);
  if (e.value.empty() || end != e.value.c_str() + e.value.size() || errno == ERANGE) {
    throw ConfigError(where(e) + "'" + e.key + "' expects a number, got '" + e.value + "'");
  }
  return v;
}

inline bool parse_bool(const ConfigEntry& e) {
  if (e.value == "true" || e.value == "1" || e.value == "yes" || e.value == "on") return true;
  if (e.value == "false" || e.value == "0" || e.value == "no" || e.value == "off") return false;
  throw ConfigError(where(e) + "'" + e.key + "' expects true/false, got '" + e.value + "'");
}

inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

/// Parses `key = value` lines; `#` starts a comment. Errors carry line numbers.
inline std::vector<ConfigEntry> parse_config_text(const std::string& text) {
  std::vector<ConfigEntry> entries;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value', got '" + line + "'");
    }
    ConfigEntry e{detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)), line_no};
    if (e.key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": missing key");
    entries.push_back(std::move(e));
  }
  return entries;
}

inline std::vector<ConfigEntry> read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

/// Applies one entry to whichever config owns the key. Returns false for
/// keys neither config knows.
inline bool apply_config_entry(const ConfigEntry& e, OadTRConfig& m, TrainConfig& t) {
  using namespace detail;
  const std::string& k = e.key;
  if (k == "history") m.history = parse_u64(e);
  else if (k == "input_dim") m.input_dim = parse_u64(e);
  else if (k == "model_dim") m.model_dim = parse_u64(e);
  else if (k == "query_dim") m.query_dim = parse_u64(e);
  else if (k == "encoder_layers") m.encoder_layers = parse_u64(e);
  else if (k == "decoder_layers") m.decoder_layers = parse_u64(e);
  else if (k == "heads") m.heads = parse_u64(e);
  else if (k == "decoder_steps") m.decoder_steps = parse_u64(e);
  else if (k == "classes") m.classes = parse_u64(e);
  else if (k == "lambda") m.lambda = parse_real(e);
  else if (k == "pos_mode") {
    if (e.value == "none") m.pos_mode = PositionMode::none;
    else if (e.value == "fixed_sinusoidal") m.pos_mode = PositionMode::fixed_sinusoidal;
    else if (e.value == "learned") m.pos_mode = PositionMode::learned;
    else throw ConfigError(where(e) + "pos_mode must be none|fixed_sinusoidal|learned, got '" + e.value + "'");
  } else if (k == "pool_mode") {
    if (e.value == "avg") m.pool_mode = PoolMode::avg;
    else if (e.value == "max") m.pool_mode = PoolMode::max;
    else throw ConfigError(where(e) + "pool_mode must be avg|max, got '" + e.value + "'");
  } else if (k == "task_token") m.task_token = parse_bool(e);
  else if (k == "decoder") m.decoder = parse_bool(e);
  else if (k == "memory_includes_task_token") m.memory_includes_task_token = parse_bool(e);
  else if (k == "shared_future_head") m.shared_future_head = parse_bool(e);
  else if (k == "ffn_multiplier") m.ffn_multiplier = parse_u64(e);
  else if (k == "layer_norm_eps") m.layer_norm_eps = parse_real(e);
  else if (k == "dropout") m.dropout = parse_real(e);
  else if (k == "epochs") t.epochs = parse_u64(e);
  else if (k == "batch_size") t.batch_size = parse_u64(e);
  else if (k == "lr") t.lr = parse_real(e);
  else if (k == "weight_decay") t.weight_decay = parse_real(e);
  else if (k == "seed") t.seed = parse_u64(e);
  else if (k == "eval_every") t.eval_every = parse_u64(e);
  else if (k == "stride") t.stride = parse_u64(e);
  else if (k == "require_full_future") t.require_full_future = parse_bool(e);
  else if (k == "beta1") t.beta1 = parse_real(e);
  else if (k == "beta2") t.beta2 = parse_real(e);
  else if (k == "adam_eps") t.adam_eps = parse_real(e);
  else return false;
  return true;
}

/// Applies entries in order; unknown keys are errors.
inline void apply_config(const std::vector<ConfigEntry>& entries, OadTRConfig& m, TrainConfig& t) {
  for (const auto& e : entries) {
    if (!apply_config_entry(e, m, t)) throw ConfigError(detail::where(e) + "unknown key '" + e.key + "'");
  }
}

/// Every key with its resolved value, model keys first, in a fixed order.
inline std::string config_to_text(const OadTRConfig& m, const TrainConfig& t) {
  using detail::format_real;
  std::ostringstream os;
  auto kv = [&](const char* k, const std::string& v) { os << k << " = " << v << '\n'; };
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  kv("history", std::to_string(m.history));
  kv("input_dim", std::to_string(m.input_dim));
  kv("model_dim", std::to_string(m.model_dim));
  kv("query_dim", std::to_string(m.query_dim));
  kv("encoder_layers", std::to_string(m.encoder_layers));
  kv("decoder_layers", std::to_string(m.decoder_layers));
  kv("heads", std::to_string(m.heads));
  kv("decoder_steps", std::to_string(m.decoder_steps));
  kv("classes", std::to_string(m.classes));
  kv("lambda", format_real(m.lambda));
  kv("pos_mode", to_string(m.pos_mode));
  kv("pool_mode", to_string(m.pool_mode));
  kv("task_token", b(m.task_token));
  kv("decoder", b(m.decoder));
  kv("memory_includes_task_token", b(m.memory_includes_task_token));
  kv("shared_future_head", b(m.shared_future_head));
  kv("ffn_multiplier", std::to_string(m.ffn_multiplier));
  kv("layer_norm_eps", format_real(m.layer_norm_eps));
  kv("dropout", format_real(m.dropout));
  kv("epochs", std::to_string(t.epochs));
  kv("batch_size", std::to_string(t.batch_size));
  kv("lr", format_real(t.lr));
  kv("weight_decay", format_real(t.weight_decay));
  kv("seed", std::to_string(t.seed));
  kv("eval_every", std::to_string(t.eval_every));
  kv("stride", std::to_string(t.stride));
  kv("require_full_future", b(t.require_full_future));
  kv("beta1", format_real(t.beta1));
  kv("beta2", format_real(t.beta2));
  kv("adam_eps", format_real(t.adam_eps));
  return os.str();
}

/// FNV-1a 64-bit, used for config fingerprints and input digests.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xCBF29CE484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace oadtr
