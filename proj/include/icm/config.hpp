#pragma once

// Pipeline configuration. Layers: defaults < JSON file < ICMR_* environment
// variables < command-line flags. Keys are flat; unknown keys are errors.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "icm/core.hpp"
#include "icm/data.hpp"
#include "icm/emd.hpp"
#include "icm/embed.hpp"
#include "icm/noisegate.hpp"
#include "icm/qrs.hpp"

namespace icm {

struct PipelineConfig {
  std::uint64_t seed = 0;
  double window_s = kDefaultWindowSeconds;

  bool noise_gate = true;
  NoiseGateParams gate;
  int gate_ensemble = 100;
  double gate_noise_std = 0.2;
  int gate_max_sift = 10;

  QrsParams qrs;

  double tsne_perplexity = 30.0;
  int tsne_iterations = 1000;
  double tsne_exaggeration = 12.0;
  int tsne_exaggeration_iters = 250;
  double tsne_learning_rate = 0.0;  // <= 0: n / 12

  double dbscan_eps = 0.75;
  int dbscan_min_pts = 15;
  int kdist_k = 4;

  int min_train_subs = 500;
  std::map<RhythmClass, double> overrides;

  // Runtime only; never persisted, never affects results.
  std::size_t workers = 1;

  CeemdanParams gate_emd() const {
    CeemdanParams p = default_gate_emd_params();
    p.ensemble = gate_ensemble;
    p.noise_std_frac = gate_noise_std;
    p.max_sift = gate_max_sift;
    p.max_imfs = gate.hf_imf_count;
    p.seed = seed;
    return p;
  }

  TsneParams tsne() const {
    TsneParams p;
    p.perplexity = tsne_perplexity;
    p.iterations = tsne_iterations;
    p.early_exaggeration = tsne_exaggeration;
    p.exaggeration_iters = tsne_exaggeration_iters;
    p.learning_rate = tsne_learning_rate;
    p.seed = seed;
    p.workers = workers;
    return p;
  }
};

namespace config_detail {

using nlohmann::json;

struct Field {
  std::function<json(const PipelineConfig&)> get;
  std::function<void(PipelineConfig&, const json&)> set;
};

template <typename T>
T as(const json& v, const std::string& key) {
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw std::runtime_error("expected boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw std::runtime_error("expected integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)
          throw std::runtime_error("expected non-negative integer");
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw std::runtime_error("expected number");
    }
    return v.get<T>();
  } catch (const std::exception& e) {
    throw Error("config", "key '" + key + "': " + e.what());
  }
}

#define ICM_FIELD(name, member, type)                                                    \
  {                                                                                      \
    name, Field {                                                                        \
      [](const PipelineConfig& c) { return json(c.member); },                            \
          [](PipelineConfig& c, const json& v) { c.member = as<type>(v, name); }         \
    }                                                                                    \
  }

inline const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      ICM_FIELD("seed", seed, std::uint64_t),
      ICM_FIELD("window_s", window_s, double),
      ICM_FIELD("noise_gate", noise_gate, bool),
      ICM_FIELD("gate_quantile", gate.quantile, double),
      ICM_FIELD("gate_window_s", gate.window_s, double),
      ICM_FIELD("gate_nzc_min", gate.nzc_min, int),
      ICM_FIELD("gate_min_s", gate.gate_min_s, double),
      ICM_FIELD("gate_hf_imfs", gate.hf_imf_count, int),
      ICM_FIELD("gate_ensemble", gate_ensemble, int),
      ICM_FIELD("gate_noise_std", gate_noise_std, double),
      ICM_FIELD("gate_max_sift", gate_max_sift, int),
      ICM_FIELD("qrs_bandwidth_s", qrs.bandwidth_s, double),
      ICM_FIELD("qrs_min_support", qrs.min_support, int),
      ICM_FIELD("qrs_refractory_s", qrs.refractory_s, double),
      ICM_FIELD("tsne_perplexity", tsne_perplexity, double),
      ICM_FIELD("tsne_iterations", tsne_iterations, int),
      ICM_FIELD("tsne_exaggeration", tsne_exaggeration, double),
      ICM_FIELD("tsne_exaggeration_iters", tsne_exaggeration_iters, int),
      ICM_FIELD("tsne_learning_rate", tsne_learning_rate, double),
      ICM_FIELD("dbscan_eps", dbscan_eps, double),
      ICM_FIELD("dbscan_min_pts", dbscan_min_pts, int),
      ICM_FIELD("kdist_k", kdist_k, int),
      ICM_FIELD("min_train_subs", min_train_subs, int),
      {"overrides", Field{[](const PipelineConfig& c) {
                            json o = json::object();
                            for (const auto& [label, thr] : c.overrides) o[std::string(to_string(label))] = thr;
                            return o;
                          },
                          [](PipelineConfig& c, const json& v) {
                            if (!v.is_object()) throw Error("config", "key 'overrides': expected object");
                            c.overrides.clear();
                            for (const auto& [k, t] : v.items()) c.overrides[parse_rhythm_class(k)] = as<double>(t, "overrides." + k);
                          }}},
  };
  return table;
}

#undef ICM_FIELD

// Parses an environment or flag string according to the key's JSON type.
inline json parse_scalar(const std::string& key, const std::string& text) {
  const json current = fields().at(key).get(PipelineConfig{});
  if (current.is_boolean()) {
    if (text == "1" || text == "true") return true;
    if (text == "0" || text == "false") return false;
    throw Error("config", "key '" + key + "': expected true/false, got '" + text + "'");
  }
  if (current.is_object()) {
    try {
      return json::parse(text);
    } catch (const json::exception&) {
      throw Error("config", "key '" + key + "': expected a JSON object");
    }
  }
  try {
    std::size_t used = 0;
    if (current.is_number_unsigned()) {
      if (!text.empty() && text[0] == '-') throw std::invalid_argument("negative");
      const auto v = std::stoull(text, &used);
      if (used == text.size()) return v;
    } else if (current.is_number_integer()) {
      const auto v = std::stoll(text, &used);
      if (used == text.size()) return v;
    } else {
      const auto v = std::stod(text, &used);
      if (used == text.size()) return v;
    }
  } catch (const std::exception&) {
  }
  throw Error("config", "key '" + key + "': cannot parse '" + text + "'");
}

}  // namespace config_detail

inline nlohmann::json config_to_json(const PipelineConfig& c) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, f] : config_detail::fields()) j[k] = f.get(c);
  return j;
}

/// Applies the keys present in j on top of c. Unknown keys throw.
inline void apply_json(PipelineConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) throw Error("config", "configuration must be a JSON object");
  const auto& table = config_detail::fields();
  for (const auto& [k, v] : j.items()) {
    auto it = table.find(k);
    if (it == table.end()) throw Error("config", "unknown key '" + k + "'");
    it->second.set(c, v);
  }
}

inline void set_key(PipelineConfig& c, const std::string& key, const std::string& text) {
  const auto& table = config_detail::fields();
  auto it = table.find(key);
  if (it == table.end()) throw Error("config", "unknown key '" + key + "'");
  it->second.set(c, config_detail::parse_scalar(key, text));
}

inline PipelineConfig config_from_json(const nlohmann::json& j) {
  PipelineConfig c;
  apply_json(c, j);
  return c;
}

inline void apply_file(PipelineConfig& c, const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error("config", path.string() + ": " + e.what());
  }
  apply_json(c, j);
}

/// ICMR_<KEY> variables, e.g. ICMR_DBSCAN_EPS=0.8. `environ` is passed in as
/// "NAME=value" strings so callers and tests control the source.
inline void apply_environment(PipelineConfig& c, const std::vector<std::string>& env) {
  static const std::string prefix = "ICMR_";
  for (const auto& entry : env) {
    if (entry.rfind(prefix, 0) != 0) continue;
    const auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    std::string key = entry.substr(prefix.size(), eq - prefix.size());
    for (auto& ch : key) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (key == "workers") {
      try {
        c.workers = std::stoul(entry.substr(eq + 1));
      } catch (const std::exception&) {
        throw Error("config", "ICMR_WORKERS: not a number");
      }
      continue;
    }
    if (!config_detail::fields().count(key)) throw Error("config", "unknown environment key '" + entry.substr(0, eq) + "'");
    set_key(c, key, entry.substr(eq + 1));
  }
}

inline void validate(const PipelineConfig& c) {
  validate(c.gate, kDefaultSampleRate);
  if (!(c.window_s > 0.0)) throw Error("config", "window_s must be > 0");
  if (c.gate_ensemble < 1) throw Error("config", "gate_ensemble must be >= 1");
  if (!(c.gate_noise_std >= 0.0)) throw Error("config", "gate_noise_std must be >= 0");
  if (c.gate_max_sift < 1) throw Error("config", "gate_max_sift must be >= 1");
  if (!(c.qrs.bandwidth_s > 0.0)) throw Error("config", "qrs_bandwidth_s must be > 0");
  if (c.qrs.min_support < 1 || c.qrs.min_support > 4) throw Error("config", "qrs_min_support must be in 1..4");
  if (!(c.qrs.refractory_s >= 0.0)) throw Error("config", "qrs_refractory_s must be >= 0");
  if (!(c.tsne_perplexity > 0.0)) throw Error("config", "tsne_perplexity must be > 0");
  if (c.tsne_iterations < 1) throw Error("config", "tsne_iterations must be >= 1");
  if (c.tsne_exaggeration_iters < 0) throw Error("config", "tsne_exaggeration_iters must be >= 0");
  if (!(c.dbscan_eps > 0.0)) throw Error("config", "dbscan_eps must be > 0");
  if (c.dbscan_min_pts < 1) throw Error("config", "dbscan_min_pts must be >= 1");
  if (c.kdist_k < 1) throw Error("config", "kdist_k must be >= 1");
  for (const auto& [label, thr] : c.overrides)
    if (!(thr >= 0.0 && thr <= 1.0)) throw Error("config", "override threshold for " + std::string(to_string(label)) + " must be in [0, 1]");
}

}  // namespace icm
