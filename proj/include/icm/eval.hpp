#pragma once

// One-vs-rest metrics on (sub-episode, label) pairs and the noise-gate audit.

#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "icm/classify.hpp"
#include "icm/core.hpp"

namespace icm {

struct TruthRow {
  std::string episode_id;
  std::size_t sub_index = 0;
  RhythmClass label = RhythmClass::Normal;
};

/// Ground-truth pairs of labeled episodes (spans use the half-overlap rule;
/// global labels propagate). Multi-label sub-episodes give one row per label.
inline std::vector<TruthRow> truth_rows(const std::vector<Episode>& episodes, double window_s = kDefaultWindowSeconds) {
  std::vector<TruthRow> out;
  for (const auto& ep : episodes)
    for (const auto& sub : labeled_sub_episodes(ep, window_s))
      for (auto l : sub.inherited_labels) out.push_back({ep.id, sub.index, l});
  return out;
}

inline constexpr std::size_t kUnclassifiedColumn = kNumClasses;

struct ClassMetrics {
  long long n = 0, tp = 0, fp = 0, fn = 0, tn = 0;
  double sensitivity = 0.0, specificity = 0.0, precision = 0.0, f1 = 0.0;
};

struct ClassReport {
  std::array<ClassMetrics, kNumClasses> per_class{};
  std::array<std::array<long long, kNumClasses + 1>, kNumClasses> confusion{};  // truth row, predicted column
  double macro_f1 = 0.0;  // over classes present in the truth

  const ClassMetrics& operator[](RhythmClass c) const { return per_class[index_of(c)]; }
};

namespace eval_detail {

inline double ratio(long long a, long long b) {
  return b > 0 ? static_cast<double>(a) / static_cast<double>(b) : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace eval_detail

/// Unclassified predictions are misses for the true class and false
/// positives for none.
inline ClassReport score(const std::vector<Prediction>& predictions, const std::vector<TruthRow>& truth) {
  if (truth.empty()) throw Error("evaluate", "empty truth set");
  std::map<std::pair<std::string, std::size_t>, const Prediction*> by_sub;
  for (const auto& p : predictions) by_sub[{p.episode_id, p.sub_index}] = &p;

  ClassReport r;
  for (const auto& t : truth) {
    auto it = by_sub.find({t.episode_id, t.sub_index});
    if (it == by_sub.end())
      throw Error("evaluate", "no prediction for " + t.episode_id + "/" + std::to_string(t.sub_index));
    const auto& pred = it->second->label;
    const std::size_t col = pred ? index_of(*pred) : kUnclassifiedColumn;
    ++r.confusion[index_of(t.label)][col];
  }
  long long total = 0;
  for (const auto& row : r.confusion)
    for (long long v : row) total += v;

  double f1_sum = 0.0;
  int f1_count = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    auto& m = r.per_class[c];
    for (long long v : r.confusion[c]) m.n += v;
    m.tp = r.confusion[c][c];
    m.fn = m.n - m.tp;
    for (std::size_t t = 0; t < kNumClasses; ++t)
      if (t != c) m.fp += r.confusion[t][c];
    m.tn = total - m.n - m.fp;
    m.sensitivity = eval_detail::ratio(m.tp, m.tp + m.fn);
    m.specificity = eval_detail::ratio(m.tn, m.tn + m.fp);
    m.precision = eval_detail::ratio(m.tp, m.tp + m.fp);
    m.f1 = eval_detail::ratio(2 * m.tp, 2 * m.tp + m.fp + m.fn);
    if (m.n > 0) {
      f1_sum += m.f1;
      ++f1_count;
    }
  }
  r.macro_f1 = f1_count ? f1_sum / f1_count : std::numeric_limits<double>::quiet_NaN();
  return r;
}

struct GateDetection {
  std::string episode_id;
  std::size_t sub_index = 0;
  bool detected = false;
};

/// Share of sub-episodes of each label in which the gate found noise.
inline std::array<double, kNumClasses> noise_gate_audit(const std::vector<GateDetection>& detections,
                                                        const std::vector<TruthRow>& truth) {
  std::map<std::pair<std::string, std::size_t>, bool> hit;
  for (const auto& d : detections) hit[{d.episode_id, d.sub_index}] = d.detected;
  std::array<long long, kNumClasses> n{}, k{};
  for (const auto& t : truth) {
    ++n[index_of(t.label)];
    auto it = hit.find({t.episode_id, t.sub_index});
    if (it != hit.end() && it->second) ++k[index_of(t.label)];
  }
  std::array<double, kNumClasses> out{};
  for (std::size_t c = 0; c < kNumClasses; ++c) out[c] = n[c] ? static_cast<double>(k[c]) / static_cast<double>(n[c]) : 0.0;
  return out;
}

inline nlohmann::json report_to_json(const ClassReport& r) {
  using nlohmann::json;
  auto num = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
  json classes = json::object();
  for (auto c : kAllClasses) {
    const auto& m = r[c];
    classes[std::string(to_string(c))] = {{"n", m.n},           {"tp", m.tp},
                                          {"fp", m.fp},         {"fn", m.fn},
                                          {"tn", m.tn},         {"f1", num(m.f1)},
                                          {"sensitivity", num(m.sensitivity)}, {"specificity", num(m.specificity)},
                                          {"precision", num(m.precision)}};
  }
  json columns = json::array();
  for (auto c : kAllClasses) columns.push_back(std::string(to_string(c)));
  columns.push_back("Unclassified");
  return {{"classes", classes}, {"macro_f1", num(r.macro_f1)}, {"confusion_columns", columns}, {"confusion", r.confusion}};
}

/// Text table: one row per class, one "f1 spec/sens" block per variant.
inline std::string format_report(const std::vector<std::pair<std::string, ClassReport>>& variants) {
  std::string out;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-12s %6s", "class", "n");
  out += buf;
  for (const auto& [name, _] : variants) {
    std::snprintf(buf, sizeof buf, " | %-22s", name.c_str());
    out += buf;
  }
  out += "\n";
  auto fmt = [](double v) {
    char b[16];
    if (std::isnan(v)) std::snprintf(b, sizeof b, "  -  ");
    else std::snprintf(b, sizeof b, "%.2f", v);
    return std::string(b);
  };
  for (auto c : kAllClasses) {
    const long long n = variants.empty() ? 0 : variants.front().second[c].n;
    std::snprintf(buf, sizeof buf, "%-12s %6lld", std::string(to_string(c)).c_str(), n);
    out += buf;
    for (const auto& [_, r] : variants) {
      const auto& m = r[c];
      std::snprintf(buf, sizeof buf, " | f1 %s  %s/%s     ", fmt(m.f1).c_str(), fmt(m.specificity).c_str(),
                    fmt(m.sensitivity).c_str());
      out += buf;
    }
    out += "\n";
  }
  std::snprintf(buf, sizeof buf, "%-12s %6s", "macro f1", "");
  out += buf;
  for (const auto& [_, r] : variants) {
    std::snprintf(buf, sizeof buf, " | %-22s", fmt(r.macro_f1).c_str());
    out += buf;
  }
  out += "\n\nconfusion (rows truth, columns predicted; last column Unclassified)\n";
  for (const auto& [name, r] : variants) {
    out += name + "\n";
    for (auto c : kAllClasses) {
      std::snprintf(buf, sizeof buf, "  %-12s", std::string(to_string(c)).c_str());
      out += buf;
      for (long long v : r.confusion[index_of(c)]) {
        std::snprintf(buf, sizeof buf, " %6lld", v);
        out += buf;
      }
      out += "\n";
    }
  }
  return out;
}

}  // namespace icm
