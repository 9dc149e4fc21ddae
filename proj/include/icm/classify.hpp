#pragma once

// Cluster-then-label classifier: binomial tail p-values name each DBSCAN
// cluster, new sub-episodes take the label of their nearest training vector.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/special_functions/beta.hpp>

#include "json.hpp"

#include "icm/cluster.hpp"
#include "icm/config.hpp"
#include "icm/core.hpp"
#include "icm/data.hpp"
#include "icm/embed.hpp"
#include "icm/noisegate.hpp"
#include "icm/parallel.hpp"
#include "icm/qrs.hpp"

namespace icm {

// ------------------------------------------------------------ binomial tail

namespace classify_detail {

inline void check_binom_args(long long k, long long n, double p) {
  if (n < 0 || k < 0 || k > n) throw Error("classify", "binomial tail needs 0 <= k <= n");
  if (!(p >= 0.0 && p <= 1.0)) throw Error("classify", "binomial tail needs p in [0, 1]");
}

}  // namespace classify_detail

/// Pr(X >= k) for X ~ Binomial(n, p), via the regularized incomplete beta.
inline double binom_tail(long long k, long long n, double p) {
  classify_detail::check_binom_args(k, n, p);
  if (k == 0) return 1.0;
  if (p == 0.0) return 0.0;
  if (p == 1.0) return 1.0;
  return boost::math::ibeta(static_cast<double>(k), static_cast<double>(n - k + 1), p);
}

/// log Pr(X >= k); stays finite where the tail underflows a double.
inline double log_binom_tail(long long k, long long n, double p) {
  classify_detail::check_binom_args(k, n, p);
  if (k == 0 || p == 1.0) return 0.0;
  if (p == 0.0) return -std::numeric_limits<double>::infinity();
  const double v = binom_tail(k, n, p);
  if (v >= 1e-300) return std::log(v);
  const double lp = std::log(p), lq = std::log1p(-p);
  const double nn = static_cast<double>(n);
  auto lpmf = [&](long long j) {
    const double jj = static_cast<double>(j);
    return std::lgamma(nn + 1.0) - std::lgamma(jj + 1.0) - std::lgamma(nn - jj + 1.0) + jj * lp + (nn - jj) * lq;
  };
  double top = -std::numeric_limits<double>::infinity();
  for (long long j = k; j <= n; ++j) top = std::max(top, lpmf(j));
  double s = 0.0;
  for (long long j = k; j <= n; ++j) s += std::exp(lpmf(j) - top);
  return top + std::log(s);
}

// ------------------------------------------------------------ cluster labels

struct LabelStat {
  RhythmClass label = RhythmClass::Normal;
  long long k = 0;       // rows with this label in the cluster
  double p_l = 0.0;      // share of the label among all rows
  double p_value = 1.0;  // Pr(X >= k)
  double log_p = 0.0;
};

struct ClusterLabelStats {
  int cluster_id = 0;
  long long n_c = 0;
  std::vector<LabelStat> stats;  // one per label present in the dataset, in label order
  RhythmClass label = RhythmClass::Normal;
  double p_value = 1.0;

  const LabelStat* find(RhythmClass l) const {
    for (const auto& s : stats)
      if (s.label == l) return &s;
    return nullptr;
  }
};

/// Per cluster, p-values for every label present in the dataset; the cluster
/// takes the label with the smallest one (ties: fixed label order). Rows with
/// cluster -1 count toward the dataset shares but are never labeled.
inline std::vector<ClusterLabelStats> label_clusters(const std::vector<int>& cluster_of_row,
                                                     const std::vector<RhythmClass>& label_of_row) {
  if (cluster_of_row.size() != label_of_row.size()) throw Error("classify", "cluster/label size mismatch");
  int max_id = -1;
  for (int c : cluster_of_row) max_id = std::max(max_id, c);
  if (max_id < 0) throw Error("classify", "no clusters to label");

  const long long d = static_cast<long long>(label_of_row.size());
  std::array<long long, kNumClasses> d_l{};
  for (auto l : label_of_row) ++d_l[index_of(l)];

  std::vector<ClusterLabelStats> out(static_cast<std::size_t>(max_id + 1));
  std::vector<std::array<long long, kNumClasses>> k(out.size());
  for (std::size_t i = 0; i < cluster_of_row.size(); ++i) {
    const int c = cluster_of_row[i];
    if (c < 0) continue;
    ++out[static_cast<std::size_t>(c)].n_c;
    ++k[static_cast<std::size_t>(c)][index_of(label_of_row[i])];
  }
  for (std::size_t c = 0; c < out.size(); ++c) {
    auto& cs = out[c];
    cs.cluster_id = static_cast<int>(c);
    if (cs.n_c == 0) throw Error("classify", "cluster ids are not contiguous");
    const LabelStat* best = nullptr;
    for (auto l : kAllClasses) {
      if (d_l[index_of(l)] == 0) continue;
      LabelStat s;
      s.label = l;
      s.k = k[c][index_of(l)];
      s.p_l = static_cast<double>(d_l[index_of(l)]) / static_cast<double>(d);
      s.p_value = binom_tail(s.k, cs.n_c, s.p_l);
      s.log_p = log_binom_tail(s.k, cs.n_c, s.p_l);
      cs.stats.push_back(s);
    }
    for (const auto& s : cs.stats)
      if (!best || s.log_p < best->log_p) best = &s;
    cs.label = best->label;
    cs.p_value = best->p_value;
  }
  return out;
}

/// Override rule: among labels whose p-value is below their threshold, the
/// smallest threshold wins (then label order); otherwise the cluster label.
inline const LabelStat* resolve_label(const ClusterLabelStats& cs, const std::map<RhythmClass, double>& overrides) {
  const LabelStat* pick = nullptr;
  double pick_thr = 0.0;
  for (const auto& [label, thr] : overrides) {
    const LabelStat* s = cs.find(label);
    if (!s || !(s->p_value < thr)) continue;
    if (!pick || thr < pick_thr || (thr == pick_thr && index_of(label) < index_of(pick->label))) {
      pick = s;
      pick_thr = thr;
    }
  }
  return pick ? pick : cs.find(cs.label);
}

// ------------------------------------------------------------ model

inline constexpr const char* kModelFormat = "icm-rhythm-model";
inline constexpr int kModelVersion = 1;

struct TrainRow {
  std::string parent_id;
  std::size_t index = 0;
  RhythmClass label = RhythmClass::Normal;
};

struct RhythmModel {
  int version = kModelVersion;
  PipelineConfig config;
  double bound_s = 0.5;
  std::vector<TrainRow> rows;
  std::vector<FeatureVector> vectors;
  std::vector<Point2> embedding;
  std::vector<int> cluster;
  std::vector<ClusterLabelStats> clusters;
  std::size_t gated_subs = 0;  // training sub-episodes removed by the noise gate
  std::vector<double> k_distance;

  double outlier_fraction() const {
    if (cluster.empty()) return 0.0;
    return static_cast<double>(std::count(cluster.begin(), cluster.end(), -1)) / static_cast<double>(cluster.size());
  }
};

namespace classify_detail {

using nlohmann::json;

inline json stats_to_json(const ClusterLabelStats& cs) {
  json stats = json::array();
  for (const auto& s : cs.stats)
    stats.push_back({{"label", std::string(to_string(s.label))}, {"k", s.k}, {"p_l", s.p_l}, {"p_value", s.p_value}, {"log_p", s.log_p}});
  return {{"id", cs.cluster_id}, {"n", cs.n_c}, {"label", std::string(to_string(cs.label))}, {"p_value", cs.p_value}, {"stats", stats}};
}

inline ClusterLabelStats stats_from_json(const json& j) {
  ClusterLabelStats cs;
  cs.cluster_id = j.at("id").get<int>();
  cs.n_c = j.at("n").get<long long>();
  cs.label = parse_rhythm_class(j.at("label").get<std::string>());
  cs.p_value = j.at("p_value").get<double>();
  for (const auto& s : j.at("stats")) {
    LabelStat ls;
    ls.label = parse_rhythm_class(s.at("label").get<std::string>());
    ls.k = s.at("k").get<long long>();
    ls.p_l = s.at("p_l").get<double>();
    ls.p_value = s.at("p_value").get<double>();
    ls.log_p = s.at("log_p").get<double>();
    cs.stats.push_back(ls);
  }
  return cs;
}

}  // namespace classify_detail

inline nlohmann::json model_to_json(const RhythmModel& m) {
  using nlohmann::json;
  json rows = json::array(), vectors = json::array(), emb = json::array();
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    rows.push_back({m.rows[i].parent_id, m.rows[i].index, std::string(to_string(m.rows[i].label))});
    json v = json::array();
    for (double x : m.vectors[i]) v.push_back(x);
    vectors.push_back(std::move(v));
    emb.push_back({m.embedding[i][0], m.embedding[i][1]});
  }
  json clusters = json::array();
  for (const auto& cs : m.clusters) clusters.push_back(classify_detail::stats_to_json(cs));
  return {{"format", kModelFormat},
          {"version", m.version},
          {"config", config_to_json(m.config)},
          {"bound_s", m.bound_s},
          {"gated_subs", m.gated_subs},
          {"outlier_fraction", m.outlier_fraction()},
          {"k_distance", m.k_distance},
          {"clusters", clusters},
          {"rows", rows},
          {"vectors", vectors},
          {"embedding", emb},
          {"cluster", m.cluster}};
}

inline RhythmModel model_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("format", std::string()) != kModelFormat)
    throw Error("model", "not an icm-rhythm-model file");
  const int version = j.at("version").get<int>();
  if (version != kModelVersion)
    throw Error("model", "unsupported model version " + std::to_string(version) + " (expected " +
                             std::to_string(kModelVersion) + ")");
  RhythmModel m;
  try {
    m.version = version;
    m.config = config_from_json(j.at("config"));
    m.bound_s = j.at("bound_s").get<double>();
    m.gated_subs = j.at("gated_subs").get<std::size_t>();
    m.k_distance = j.at("k_distance").get<std::vector<double>>();
    for (const auto& c : j.at("clusters")) m.clusters.push_back(classify_detail::stats_from_json(c));
    const auto& rows = j.at("rows");
    const auto& vectors = j.at("vectors");
    const auto& emb = j.at("embedding");
    m.cluster = j.at("cluster").get<std::vector<int>>();
    if (vectors.size() != rows.size() || emb.size() != rows.size() || m.cluster.size() != rows.size())
      throw Error("model", "row tables differ in length");
    for (std::size_t i = 0; i < rows.size(); ++i) {
      m.rows.push_back({rows[i].at(0).get<std::string>(), rows[i].at(1).get<std::size_t>(),
                        parse_rhythm_class(rows[i].at(2).get<std::string>())});
      FeatureVector v{};
      if (vectors[i].size() != kFeatureDim) throw Error("model", "feature vector of wrong length");
      for (std::size_t d = 0; d < kFeatureDim; ++d) v[d] = vectors[i][d].get<double>();
      m.vectors.push_back(v);
      m.embedding.push_back({emb[i].at(0).get<double>(), emb[i].at(1).get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error("model", std::string("malformed model: ") + e.what());
  }
  for (int c : m.cluster)
    if (c >= static_cast<int>(m.clusters.size()) || c < -1) throw Error("model", "row refers to unknown cluster");
  return m;
}

inline void save_model(const RhythmModel& m, const std::filesystem::path& path) {
  write_file_atomic(path, model_to_json(m).dump() + "\n");
}

inline RhythmModel load_model(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error("model", path.string() + ": " + e.what());
  }
  return model_from_json(j);
}

// ------------------------------------------------------------ pipeline

/// One sub-episode after signal processing: noise segments (when the gate
/// ran) and fused R-peaks.
struct PreparedSub {
  std::string parent_id;
  std::size_t index = 0;
  std::vector<RhythmClass> labels;
  bool gate_run = false;
  std::vector<NoiseSegment> noise;
  std::vector<double> peaks;
};

enum class LabelMode { Train, Test, None };

inline std::vector<PreparedSub> prepare(const std::vector<Episode>& episodes, const PipelineConfig& cfg, LabelMode mode,
                                        bool run_gate) {
  validate(cfg);
  std::vector<SubEpisode> subs;
  for (const auto& ep : episodes) {
    std::vector<SubEpisode> s;
    switch (mode) {
      case LabelMode::Train: s = labeled_sub_episodes(ep, cfg.window_s); break;
      case LabelMode::Test:
        validate_episode(ep, true);
        s = assign_segmented_labels(ep, segment_episode(ep, cfg.window_s));
        break;
      case LabelMode::None:
        validate_episode(ep, false);
        s = segment_episode(ep, cfg.window_s);
        break;
    }
    for (auto& x : s) subs.push_back(std::move(x));
  }

  // One noise bank per sub-episode length, built up front and shared read-only.
  std::map<std::size_t, CeemdanNoiseBank> banks;
  if (run_gate) {
    for (const auto& s : subs)
      if (!banks.count(s.samples.size())) banks.emplace(s.samples.size(), CeemdanNoiseBank(s.samples.size(), cfg.gate_emd()));
  }

  std::vector<PreparedSub> out(subs.size());
  parallel_for(subs.size(), cfg.workers, [&](std::size_t i) {
    const auto& s = subs[i];
    auto& p = out[i];
    p.parent_id = s.parent_id;
    p.index = s.index;
    p.labels = s.inherited_labels;
    if (run_gate) {
      try {
        p.noise = detect_noise(s.samples, s.sample_rate_hz, cfg.gate, banks.at(s.samples.size()));
      } catch (const Error& e) {
        throw Error("noise", s.parent_id + "/" + std::to_string(s.index) + ": " + e.what());
      }
      p.gate_run = true;
    }
    p.peaks = detect_r_peaks(s.samples, s.sample_rate_hz, cfg.qrs).times_s;
  });
  return out;
}

/// Fits on prepared training sub-episodes. With the noise gate on, every
/// sub-episode holding a detected noise segment is removed before embedding.
inline RhythmModel fit_prepared(const std::vector<PreparedSub>& prepared, const PipelineConfig& cfg) {
  validate(cfg);
  RhythmModel m;
  m.config = cfg;
  m.config.workers = 1;

  std::vector<const PreparedSub*> kept;
  for (const auto& p : prepared) {
    if (cfg.noise_gate) {
      if (!p.gate_run) throw Error("train", "noise gate enabled but not run on the training set");
      if (!p.noise.empty()) {
        ++m.gated_subs;
        continue;
      }
    }
    if (p.labels.empty()) throw Error("train", "training sub-episode without labels");
    kept.push_back(&p);
  }
  if (kept.size() < static_cast<std::size_t>(std::max(cfg.min_train_subs, 0)))
    throw Error("train", "only " + std::to_string(kept.size()) + " training sub-episodes after noise removal (minimum " +
                             std::to_string(cfg.min_train_subs) + ")");
  if (kept.empty()) throw Error("train", "no training sub-episodes");

  std::vector<double> abs_drr;
  for (const auto* p : kept)
    for (double d : drr_series(rr_series(p->peaks))) abs_drr.push_back(std::abs(d));
  m.bound_s = lorenz_bound(abs_drr);

  for (const auto* p : kept) {
    const FeatureVector v = histogram_from_peaks(p->peaks, m.bound_s).vector();
    for (auto l : p->labels) {
      m.rows.push_back({p->parent_id, p->index, l});
      m.vectors.push_back(v);
    }
  }

  TsneResult emb;
  try {
    emb = tsne(m.vectors, cfg.tsne());
  } catch (const Error& e) {
    throw Error("embed", e.what());
  }
  m.embedding = std::move(emb.y);
  const auto assignment = dbscan(m.embedding, cfg.dbscan_eps, cfg.dbscan_min_pts, cfg.workers);
  m.cluster = assignment.labels;
  const auto kd = k_distance(m.embedding, cfg.kdist_k, cfg.workers);
  // Keep a 101-point summary of the curve (descending quantiles).
  for (int q = 0; q <= 100; ++q) m.k_distance.push_back(kd[static_cast<std::size_t>(q * (kd.size() - 1) / 100)]);
  if (assignment.n_clusters == 0) {
    char msg[256];
    std::snprintf(msg, sizeof msg, "all %zu points are outliers (eps %.3g, min_pts %d); %d-distance median %.3g, p10 %.3g",
                  m.embedding.size(), cfg.dbscan_eps, cfg.dbscan_min_pts, cfg.kdist_k, m.k_distance[50], m.k_distance[90]);
    throw Error("cluster", msg);
  }
  std::vector<RhythmClass> labels;
  for (const auto& r : m.rows) labels.push_back(r.label);
  m.clusters = label_clusters(m.cluster, labels);
  return m;
}

inline RhythmModel fit(const std::vector<Episode>& train, const PipelineConfig& cfg) {
  const auto prepared = prepare(train, cfg, LabelMode::Train, cfg.noise_gate);
  return fit_prepared(prepared, cfg);
}

struct Prediction {
  std::string episode_id;
  std::size_t sub_index = 0;
  std::optional<RhythmClass> label;  // nullopt = Unclassified
  int cluster_id = -1;               // -1 outlier neighbour, -2 removed by the noise gate
  double p_value = std::numeric_limits<double>::quiet_NaN();
  double nn_distance = std::numeric_limits<double>::quiet_NaN();
};

inline constexpr int kGatedCluster = -2;

inline std::string label_name(const std::optional<RhythmClass>& l) {
  return l ? std::string(to_string(*l)) : std::string("Unclassified");
}

/// Nearest training row in histogram space (ties: lowest row index).
inline std::pair<std::size_t, double> nearest_row(const RhythmModel& m, const FeatureVector& v) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < m.vectors.size(); ++i) {
    double s = 0.0;
    for (std::size_t d = 0; d < kFeatureDim; ++d) {
      const double e = m.vectors[i][d] - v[d];
      s += e * e;
    }
    if (s < best_d) {
      best_d = s;
      best = i;
    }
  }
  return {best, std::sqrt(best_d)};
}

/// Labels prepared sub-episodes. `overrides` add to (and replace) the
/// thresholds stored in the model.
inline std::vector<Prediction> predict_prepared(const RhythmModel& m, const std::vector<PreparedSub>& prepared,
                                                const std::map<RhythmClass, double>& overrides = {},
                                                std::size_t workers = 1) {
  if (m.vectors.empty()) throw Error("predict", "model has no training vectors");
  auto thresholds = m.config.overrides;
  for (const auto& [l, t] : overrides) thresholds[l] = t;
  std::vector<Prediction> out(prepared.size());
  parallel_for(prepared.size(), workers, [&](std::size_t i) {
    const auto& p = prepared[i];
    auto& r = out[i];
    r.episode_id = p.parent_id;
    r.sub_index = p.index;
    if (m.config.noise_gate) {
      if (!p.gate_run) throw Error("predict", "model uses the noise gate but it was not run");
      if (!p.noise.empty()) {
        r.label = RhythmClass::Noise;
        r.cluster_id = kGatedCluster;
        return;
      }
    }
    const auto v = histogram_from_peaks(p.peaks, m.bound_s).vector();
    const auto [nn, dist] = nearest_row(m, v);
    r.nn_distance = dist;
    r.cluster_id = m.cluster[nn];
    if (r.cluster_id < 0) return;
    const auto& cs = m.clusters[static_cast<std::size_t>(r.cluster_id)];
    const LabelStat* s = resolve_label(cs, thresholds);
    r.label = s->label;
    r.p_value = s->p_value;
  });
  return out;
}

inline std::vector<Prediction> predict(const RhythmModel& m, const std::vector<Episode>& episodes,
                                       const std::map<RhythmClass, double>& overrides = {}, std::size_t workers = 1) {
  PipelineConfig cfg = m.config;
  cfg.workers = workers;
  const auto prepared = prepare(episodes, cfg, LabelMode::None, cfg.noise_gate);
  return predict_prepared(m, prepared, overrides, workers);
}

inline std::vector<Prediction> predict_with_overrides(const RhythmModel& m, const std::vector<Episode>& episodes,
                                                      const std::map<RhythmClass, double>& overrides,
                                                      std::size_t workers = 1) {
  return predict(m, episodes, overrides, workers);
}

// ------------------------------------------------------------ prediction files

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string predictions_to_tsv(const std::vector<Prediction>& preds) {
  std::string out = "episode_id\tsub_index\tlabel\tcluster_id\tp_value\tnn_distance\n";
  for (const auto& p : preds) {
    out += p.episode_id + "\t" + std::to_string(p.sub_index) + "\t" + label_name(p.label) + "\t" +
           std::to_string(p.cluster_id) + "\t" + format_double(p.p_value) + "\t" + format_double(p.nn_distance) + "\n";
  }
  return out;
}

inline std::vector<Prediction> parse_predictions(std::istream& in, const std::string& name = "<predictions>") {
  std::vector<Prediction> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 || line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, '\t')) cols.push_back(c);
    if (cols.size() != 6) throw Error("evaluate", name + ":" + std::to_string(lineno) + ": expected 6 columns");
    Prediction p;
    try {
      p.episode_id = cols[0];
      p.sub_index = std::stoul(cols[1]);
      if (cols[2] != "Unclassified") p.label = parse_rhythm_class(cols[2]);
      p.cluster_id = std::stoi(cols[3]);
      p.p_value = std::stod(cols[4]);
      p.nn_distance = std::stod(cols[5]);
    } catch (const std::exception& e) {
      throw Error("evaluate", name + ":" + std::to_string(lineno) + ": " + e.what());
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace icm
