#pragma once

// Experiment configuration in flat `key = value` text. '#' starts a comment.
// `preset = desk|full` may appear once, before any other key, and resets every
// value to that preset. See configs/ for annotated examples.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "vnsp/alternating.hpp"
#include "vnsp/errors.hpp"
#include "vnsp/harness/phantom.hpp"
#include "vnsp/kspace.hpp"
#include "vnsp/optim.hpp"
#include "vnsp/patterns.hpp"
#include "vnsp/varnet.hpp"

namespace vnsp {

struct ExperimentConfig {
  std::string preset = "desk";
  GridShape grid{48, 48, 1, 4};
  int train_items = 40;
  int test_items = 10;
  std::uint64_t data_seed = 1;
  PhantomConfig phantom;
  std::vector<double> af_list{4.0, 8.0};
  PatternSettings patterns;
  VnConfig vn{3, 4, 5, 1};  // frames follows grid.nt
  AdamConfig pretrain_adam;
  PretrainSampling pretrain_sampling;
  AdamConfig retrain_adam;
  AlternatingConfig alt;
  std::string init_sp = "empty";  // empty|uniform|vd|poisson|vdpd|file:PATH
  std::uint64_t seed = 1;
  std::string out = "out";

  ExperimentConfig() { apply_desk(); }

  void apply_desk() {
    preset = "desk";
    grid = GridShape{48, 48, 1, 4};
    train_items = 40;
    test_items = 10;
    af_list = {4.0, 8.0};
    patterns = PatternSettings{};
    vn = VnConfig{3, 4, 5, 1};

    pretrain_adam = AdamConfig{};
    pretrain_adam.lr0 = 1e-2;
    pretrain_adam.drop_factor = 0.5;
    pretrain_adam.drop_every_epochs = 5;
    pretrain_adam.epochs = 80;
    pretrain_adam.batch_size = 8;
    pretrain_sampling = PretrainSampling{};

    retrain_adam = pretrain_adam;

    alt = AlternatingConfig{};
    alt.bass.k_init = 64;
    alt.bass.max_iters = 200;
    alt.adam.lr0 = 2e-3;
    alt.adam.drop_factor = 0.25;
    alt.adam.drop_every_epochs = 2;
    alt.adam.epochs = 4;
    alt.adam.batch_size = 8;
    alt.stall_cycles = 5;
    alt.max_cycles = 40;
  }

  void apply_full() {
    preset = "full";
    grid = GridShape{320, 320, 1, 16};
    train_items = 260;
    test_items = 60;
    af_list = {3.0, 6.0, 12.0, 15.0};
    patterns = PatternSettings{};
    vn = VnConfig{10, 24, 11, 1};

    pretrain_adam = AdamConfig{};
    pretrain_adam.lr0 = 2e-4;
    pretrain_adam.drop_factor = 0.5;
    pretrain_adam.drop_every_epochs = 5;
    pretrain_adam.epochs = 80;
    pretrain_adam.batch_size = 8;
    pretrain_sampling = PretrainSampling{};

    retrain_adam = pretrain_adam;

    alt = AlternatingConfig{};
    alt.bass.k_init = 1024;
    alt.bass.alpha = 0.5;
    alt.bass.max_iters = 100000;
    alt.adam.lr0 = 2e-4;
    alt.adam.drop_factor = 0.25;
    alt.adam.drop_every_epochs = 2;
    alt.adam.epochs = 8;
    alt.adam.batch_size = 8;
    alt.stall_cycles = 5;
    alt.max_cycles = 1000;
  }

  /// Network configuration with the temporal extent tied to the grid.
  VnConfig vn_config() const {
    VnConfig c = vn;
    c.frames = grid.nt;
    return c;
  }

  PretrainSampling pretrain_sampling_resolved() const {
    PretrainSampling s = pretrain_sampling;
    s.settings = patterns;
    return s;
  }

  AlternatingConfig alternating_config(std::optional<bool> monotone = std::nullopt) const {
    AlternatingConfig c = alt;
    if (monotone) c.monotone = *monotone;
    return c;
  }

  void validate() const;
};

// ---------------------------------------------------------------------------

namespace detail {

template <class T>
T parse_number(const std::string& s, const std::string& key) {
  T v{};
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ConfigError(key + ": cannot parse '" + s + "'");
  return v;
}

inline bool parse_bool(const std::string& s, const std::string& key) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError(key + ": expected true or false, got '" + s + "'");
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, ',')) {
    const auto b = cur.find_first_not_of(" \t");
    const auto e = cur.find_last_not_of(" \t");
    if (b == std::string::npos) throw ConfigError("empty list element in '" + s + "'");
    out.push_back(cur.substr(b, e - b + 1));
  }
  return out;
}

inline std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}
inline std::string fmt(int v) { return std::to_string(v); }
inline std::string fmt(std::uint64_t v) { return std::to_string(v); }
inline std::string fmt(bool v) { return v ? "true" : "false"; }
inline std::string fmt(const std::string& v) { return v; }

struct KeyDef {
  std::string name;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <class T, class Field>
KeyDef scalar_key(const std::string& name, Field field) {
  KeyDef k;
  k.name = name;
  k.get = [field](const ExperimentConfig& c) { return fmt(field(const_cast<ExperimentConfig&>(c))); };
  k.set = [field, key = name](ExperimentConfig& c, const std::string& s) {
    if constexpr (std::is_same_v<T, bool>) {
      field(c) = parse_bool(s, key);
    } else if constexpr (std::is_same_v<T, std::string>) {
      field(c) = s;
    } else {
      field(c) = parse_number<T>(s, key);
    }
  };
  return k;
}

inline std::string frames_name(CalibrationSpec::Frames f) {
  return f == CalibrationSpec::Frames::kAll ? "all" : "first";
}

inline const std::vector<KeyDef>& config_keys() {
  using C = ExperimentConfig;
  static const std::vector<KeyDef> keys = [] {
    std::vector<KeyDef> k;
    k.push_back(scalar_key<int>("grid.ny", [](C& c) -> int& { return c.grid.ny; }));
    k.push_back(scalar_key<int>("grid.nz", [](C& c) -> int& { return c.grid.nz; }));
    k.push_back(scalar_key<int>("grid.nt", [](C& c) -> int& { return c.grid.nt; }));
    k.push_back(scalar_key<int>("grid.nc", [](C& c) -> int& { return c.grid.nc; }));
    k.push_back(scalar_key<int>("data.train", [](C& c) -> int& { return c.train_items; }));
    k.push_back(scalar_key<int>("data.test", [](C& c) -> int& { return c.test_items; }));
    k.push_back(scalar_key<std::uint64_t>("data.seed", [](C& c) -> std::uint64_t& { return c.data_seed; }));
    k.push_back(scalar_key<int>("phantom.min_ellipses", [](C& c) -> int& { return c.phantom.min_ellipses; }));
    k.push_back(scalar_key<int>("phantom.max_ellipses", [](C& c) -> int& { return c.phantom.max_ellipses; }));
    k.push_back(scalar_key<double>("phantom.edge_width", [](C& c) -> double& { return c.phantom.edge_width; }));
    k.push_back(scalar_key<double>("phantom.phase_strength", [](C& c) -> double& { return c.phantom.phase_strength; }));
    k.push_back(scalar_key<double>("phantom.min_decay", [](C& c) -> double& { return c.phantom.min_decay; }));
    k.push_back(scalar_key<double>("phantom.max_decay", [](C& c) -> double& { return c.phantom.max_decay; }));
    k.push_back(scalar_key<double>("phantom.coil_sigma", [](C& c) -> double& { return c.phantom.coil_sigma; }));
    k.push_back(scalar_key<double>("phantom.coil_radius", [](C& c) -> double& { return c.phantom.coil_radius; }));

    KeyDef af;
    af.name = "af_list";
    af.get = [](const C& c) {
      std::string s;
      for (std::size_t i = 0; i < c.af_list.size(); ++i) s += (i ? ", " : "") + fmt(c.af_list[i]);
      return s;
    };
    af.set = [](C& c, const std::string& s) {
      c.af_list.clear();
      for (const auto& e : split_list(s)) c.af_list.push_back(parse_number<double>(e, "af_list"));
    };
    k.push_back(af);

    k.push_back(scalar_key<int>("cal.half_y", [](C& c) -> int& { return c.patterns.cal.half_width_y; }));
    k.push_back(scalar_key<int>("cal.half_z", [](C& c) -> int& { return c.patterns.cal.half_width_z; }));
    KeyDef frames;
    frames.name = "cal.frames";
    frames.get = [](const C& c) { return frames_name(c.patterns.cal.frames); };
    frames.set = [](C& c, const std::string& s) {
      if (s == "all") {
        c.patterns.cal.frames = CalibrationSpec::Frames::kAll;
      } else if (s == "first") {
        c.patterns.cal.frames = CalibrationSpec::Frames::kFirstOnly;
      } else {
        throw ConfigError("cal.frames: expected all or first, got '" + s + "'");
      }
    };
    k.push_back(frames);
    k.push_back(scalar_key<double>("sp.vd_exponent", [](C& c) -> double& { return c.patterns.profile.exponent; }));
    k.push_back(scalar_key<double>("sp.vd_knee", [](C& c) -> double& { return c.patterns.profile.knee; }));
    k.push_back(scalar_key<double>("sp.pd_min_dist", [](C& c) -> double& { return c.patterns.pd_min_dist; }));
    k.push_back(scalar_key<double>("sp.vdpd_min_dist", [](C& c) -> double& { return c.patterns.vdpd_min_dist; }));

    k.push_back(scalar_key<int>("vn.layers", [](C& c) -> int& { return c.vn.layers; }));
    k.push_back(scalar_key<int>("vn.filters", [](C& c) -> int& { return c.vn.filters; }));
    k.push_back(scalar_key<int>("vn.kernel", [](C& c) -> int& { return c.vn.kernel; }));

    auto adam_keys = [&k](const std::string& prefix, auto get) {
      k.push_back(scalar_key<double>(prefix + ".lr0", [get](C& c) -> double& { return get(c).lr0; }));
      k.push_back(scalar_key<double>(prefix + ".drop_factor",
                                     [get](C& c) -> double& { return get(c).drop_factor; }));
      k.push_back(scalar_key<int>(prefix + ".drop_every",
                                  [get](C& c) -> int& { return get(c).drop_every_epochs; }));
      k.push_back(scalar_key<int>(prefix + ".epochs", [get](C& c) -> int& { return get(c).epochs; }));
      k.push_back(scalar_key<int>(prefix + ".batch", [get](C& c) -> int& { return get(c).batch_size; }));
    };
    adam_keys("pretrain", [](C& c) -> AdamConfig& { return c.pretrain_adam; });
    k.push_back(scalar_key<double>("pretrain.af_min", [](C& c) -> double& { return c.pretrain_sampling.af_min; }));
    k.push_back(scalar_key<double>("pretrain.af_max", [](C& c) -> double& { return c.pretrain_sampling.af_max; }));
    KeyDef fam;
    fam.name = "pretrain.families";
    fam.get = [](const C& c) {
      std::string s;
      for (std::size_t i = 0; i < c.pretrain_sampling.families.size(); ++i) {
        s += (i ? ", " : "") + std::string(pattern_kind_name(c.pretrain_sampling.families[i]));
      }
      return s;
    };
    fam.set = [](C& c, const std::string& s) {
      c.pretrain_sampling.families.clear();
      for (const auto& e : split_list(s)) {
        const PatternKind kind = parse_pattern_kind(e);
        if (kind == PatternKind::kEmpty) throw ConfigError("pretrain.families: 'empty' is not a random family");
        c.pretrain_sampling.families.push_back(kind);
      }
    };
    k.push_back(fam);
    adam_keys("retrain", [](C& c) -> AdamConfig& { return c.retrain_adam; });
    adam_keys("adam", [](C& c) -> AdamConfig& { return c.alt.adam; });

    k.push_back(scalar_key<int>("bass.k_init", [](C& c) -> int& { return c.alt.bass.k_init; }));
    k.push_back(scalar_key<double>("bass.alpha", [](C& c) -> double& { return c.alt.bass.alpha; }));
    k.push_back(scalar_key<int>("bass.max_iters", [](C& c) -> int& { return c.alt.bass.max_iters; }));
    k.push_back(scalar_key<double>("bass.rho_add", [](C& c) -> double& { return c.alt.bass.rho_add; }));
    k.push_back(scalar_key<double>("bass.rho_remove", [](C& c) -> double& { return c.alt.bass.rho_remove; }));
    k.push_back(scalar_key<double>("bass.delta", [](C& c) -> double& { return c.alt.bass.delta; }));
    k.push_back(scalar_key<bool>("bass.stop_at_k1", [](C& c) -> bool& { return c.alt.bass.stop_at_k1; }));
    k.push_back(scalar_key<double>("bass.max_radius", [](C& c) -> double& { return c.alt.bass.pc.max_radius; }));

    k.push_back(scalar_key<int>("alt.stall_cycles", [](C& c) -> int& { return c.alt.stall_cycles; }));
    k.push_back(scalar_key<int>("alt.max_cycles", [](C& c) -> int& { return c.alt.max_cycles; }));
    k.push_back(scalar_key<bool>("alt.monotone", [](C& c) -> bool& { return c.alt.monotone; }));
    k.push_back(scalar_key<double>("alt.stall_rel_tol", [](C& c) -> double& { return c.alt.stall_rel_tol; }));

    k.push_back(scalar_key<std::string>("init_sp", [](C& c) -> std::string& { return c.init_sp; }));
    k.push_back(scalar_key<std::uint64_t>("seed", [](C& c) -> std::uint64_t& { return c.seed; }));
    k.push_back(scalar_key<std::string>("out", [](C& c) -> std::string& { return c.out; }));
    return k;
  }();
  return keys;
}

inline const KeyDef* find_key(const std::string& name) {
  for (const auto& k : config_keys())
    if (k.name == name) return &k;
  return nullptr;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace detail

/// Sets one key; throws ConfigError for unknown keys or bad values.
inline void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "preset") {
    if (value == "desk") {
      cfg.apply_desk();
    } else if (value == "full") {
      cfg.apply_full();
    } else {
      throw ConfigError("preset: expected desk or full, got '" + value + "'");
    }
    return;
  }
  const detail::KeyDef* k = detail::find_key(key);
  if (!k) throw ConfigError("unknown key '" + key + "'");
  k->set(cfg, value);
}

/// Applies `key = value` lines on top of `cfg`. Errors carry the line number.
inline void apply_config_text(ExperimentConfig& cfg, const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  std::map<std::string, std::size_t> seen;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", lineno);
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError("missing key", lineno);
    if (value.empty()) throw ParseError("missing value for '" + key + "'", lineno);
    if (seen.count(key)) {
      throw ParseError("duplicate key '" + key + "' (first on line " + std::to_string(seen[key]) + ")", lineno);
    }
    if (key == "preset" && !seen.empty()) throw ParseError("preset must come before other keys", lineno);
    seen[key] = lineno;
    try {
      set_config_value(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ParseError(e.what(), lineno);
    }
  }
}

inline ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  apply_config_text(cfg, text);
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open config " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

/// Every key with its resolved value; parse_config(format_config(c)) == c.
inline std::string format_config(const ExperimentConfig& cfg) {
  std::string out = "preset = " + cfg.preset + "\n";
  for (const auto& k : detail::config_keys()) out += k.name + " = " + k.get(cfg) + "\n";
  return out;
}

struct InitSpec {
  PatternKind kind = PatternKind::kEmpty;
  std::string file;  // set when the pattern comes from an SP file
};

inline InitSpec parse_init_sp(const std::string& s) {
  if (s.rfind("file:", 0) == 0) {
    if (s.size() == 5) throw ConfigError("init_sp: file: needs a path");
    return {PatternKind::kEmpty, s.substr(5)};
  }
  try {
    return {parse_pattern_kind(s), {}};
  } catch (const ConfigError&) {
    throw ConfigError("init_sp: expected empty|uniform|vd|poisson|vdpd|file:PATH, got '" + s + "'");
  }
}

inline void ExperimentConfig::validate() const {
  grid.validate();
  if (train_items < 1 || test_items < 1) throw ConfigError("data.train and data.test must be >= 1");
  phantom.validate();
  if (!(patterns.profile.exponent >= 0.0) || !(patterns.profile.knee > 0.0)) {
    throw ConfigError("sp.vd_exponent must be >= 0 and sp.vd_knee > 0");
  }
  if (!(patterns.pd_min_dist >= 0.0) || !(patterns.vdpd_min_dist >= 0.0)) {
    throw ConfigError("sp.pd_min_dist and sp.vdpd_min_dist must be >= 0");
  }
  const std::size_t cal = calibration_size(grid, patterns.cal);
  if (af_list.empty()) throw ConfigError("af_list is empty");
  for (double af : af_list) {
    if (!(af >= 1.0)) throw ConfigError("af_list: acceleration " + detail::fmt(af) + " must be >= 1");
    const std::size_t m = budget_for_af(grid, af);
    if (m < cal) {
      throw ConfigError("af_list: AF " + detail::fmt(af) + " gives M = " + std::to_string(m) +
                        " below the calibration size " + std::to_string(cal));
    }
  }
  vn_config().validate();
  pretrain_adam.validate();
  pretrain_sampling.validate();
  retrain_adam.validate();
  alt.validate();
  parse_init_sp(init_sp);
  if (out.empty()) throw ConfigError("out must not be empty");
}

}  // namespace vnsp
