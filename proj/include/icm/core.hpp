#pragma once

// Domain types shared by every stage: rhythm taxonomy, episodes, sub-episodes
// and the two label propagation rules (global vs. time-bounded spans).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace icm {

/// Raised for any contract violation. `stage()` names the pipeline stage so
/// the CLI can report where a batch run failed.
class Error : public std::runtime_error {
 public:
  Error(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

// Fixed label order. Used for every deterministic tie-break.
enum class RhythmClass : int { Normal = 0, Pause = 1, Tachycardia = 2, AFib = 3, Noise = 4 };

inline constexpr std::size_t kNumClasses = 5;
inline constexpr std::array<RhythmClass, kNumClasses> kAllClasses = {
    RhythmClass::Normal, RhythmClass::Pause, RhythmClass::Tachycardia, RhythmClass::AFib,
    RhythmClass::Noise};

inline constexpr std::size_t index_of(RhythmClass c) { return static_cast<std::size_t>(c); }

inline std::string_view to_string(RhythmClass c) {
  switch (c) {
    case RhythmClass::Normal: return "Normal";
    case RhythmClass::Pause: return "Pause";
    case RhythmClass::Tachycardia: return "Tachycardia";
    case RhythmClass::AFib: return "AFib";
    case RhythmClass::Noise: return "Noise";
  }
  return "?";
}

inline RhythmClass parse_rhythm_class(std::string_view s) {
  for (auto c : kAllClasses) {
    if (to_string(c) == s) return c;
  }
  throw Error("core", "unknown rhythm label '" + std::string(s) + "'");
}

struct LabelSpan {
  RhythmClass label = RhythmClass::Normal;
  std::optional<double> start_s;
  std::optional<double> end_s;

  bool is_global() const { return !start_s && !end_s; }
};

struct Episode {
  std::string id;
  double sample_rate_hz = 128.0;
  std::vector<double> samples;
  std::vector<LabelSpan> labels;

  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate_hz; }
};

struct SubEpisode {
  std::string parent_id;
  std::size_t index = 0;
  double sample_rate_hz = 128.0;
  std::vector<double> samples;
  std::vector<RhythmClass> inherited_labels;

  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate_hz; }
};

inline constexpr double kMaxEpisodeSeconds = 60.0;
inline constexpr double kDefaultWindowSeconds = 10.0;
inline constexpr double kDefaultSampleRate = 128.0;

/// Checks the Episode invariants. `require_labels` is set at training ingestion.
inline void validate_episode(const Episode& ep, bool require_labels = false) {
  if (!(ep.sample_rate_hz > 0.0)) throw Error("core", "episode '" + ep.id + "': sample_rate_hz must be > 0");
  // Allow one sample of slack for rounding in the sample count.
  const double max_samples = ep.sample_rate_hz * kMaxEpisodeSeconds;
  if (static_cast<double>(ep.samples.size()) > max_samples + 0.5)
    throw Error("core", "episode '" + ep.id + "' exceeds 60 s");
  if (require_labels && ep.labels.empty()) throw Error("core", "episode '" + ep.id + "' has no labels");
  const double dur = ep.duration_s();
  for (const auto& span : ep.labels) {
    if (span.start_s.has_value() != span.end_s.has_value())
      throw Error("core", "episode '" + ep.id + "': label span needs both start_s and end_s or neither");
    if (span.start_s) {
      if (!(*span.start_s >= 0.0 && *span.start_s < *span.end_s && *span.end_s <= dur + 1e-9))
        throw Error("core", "episode '" + ep.id + "': label span out of range");
    }
  }
}

/// Splits an episode into consecutive, disjoint windows; a trailing remainder
/// shorter than one window is discarded.
inline std::vector<SubEpisode> segment_episode(const Episode& episode,
                                               double window_s = kDefaultWindowSeconds) {
  if (!(window_s > 0.0)) throw Error("segment", "window_s must be > 0");
  if (episode.samples.empty()) throw Error("segment", "episode '" + episode.id + "' is empty");
  const auto window_n = static_cast<std::size_t>(std::llround(window_s * episode.sample_rate_hz));
  if (window_n == 0) throw Error("segment", "window shorter than one sample");
  const std::size_t count = episode.samples.size() / window_n;

  std::vector<SubEpisode> subs;
  subs.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    SubEpisode sub;
    sub.parent_id = episode.id;
    sub.index = k;
    sub.sample_rate_hz = episode.sample_rate_hz;
    auto first = episode.samples.begin() + static_cast<std::ptrdiff_t>(k * window_n);
    sub.samples.assign(first, first + static_cast<std::ptrdiff_t>(window_n));
    subs.push_back(std::move(sub));
  }
  return subs;
}

/// Every sub-episode inherits the full (global) label set of its parent.
inline std::vector<SubEpisode> propagate_global_labels(const Episode& episode,
                                                       std::vector<SubEpisode> subs) {
  if (episode.labels.empty())
    throw Error("labels", "episode '" + episode.id + "' has no labels");
  std::vector<RhythmClass> labels;
  for (const auto& span : episode.labels) {
    if (!span.is_global())
      throw Error("labels", "episode '" + episode.id + "' carries time-bounded labels; expected global");
    if (std::find(labels.begin(), labels.end(), span.label) == labels.end()) labels.push_back(span.label);
  }
  for (auto& sub : subs) sub.inherited_labels = labels;
  return subs;
}

/// Assigns each sub-episode the span covering at least half of it. Ties at
/// exactly half go to the earlier span. Sub-episodes without such a span are
/// dropped.
inline std::vector<SubEpisode> assign_segmented_labels(const Episode& episode,
                                                       std::vector<SubEpisode> subs) {
  std::vector<LabelSpan> spans;
  for (const auto& span : episode.labels) {
    if (!span.start_s || !span.end_s)
      throw Error("labels", "episode '" + episode.id + "' has a global label; expected time spans");
    spans.push_back(span);
  }
  std::sort(spans.begin(), spans.end(), [](const LabelSpan& a, const LabelSpan& b) {
    if (*a.start_s != *b.start_s) return *a.start_s < *b.start_s;
    return index_of(a.label) < index_of(b.label);
  });
  for (std::size_t i = 1; i < spans.size(); ++i) {
    if (*spans[i].start_s < *spans[i - 1].end_s)
      throw Error("labels", "episode '" + episode.id + "' has overlapping label spans");
  }

  std::vector<SubEpisode> out;
  for (auto& sub : subs) {
    const double w = sub.duration_s();
    const double lo = static_cast<double>(sub.index) * w;
    const double hi = lo + w;
    const LabelSpan* best = nullptr;
    double best_overlap = 0.0;
    for (const auto& span : spans) {
      const double overlap = std::min(hi, *span.end_s) - std::max(lo, *span.start_s);
      // Spans are start-sorted, so strict '>' keeps the earlier span on ties.
      if (overlap >= w / 2.0 && overlap > best_overlap) {
        best = &span;
        best_overlap = overlap;
      }
    }
    if (best) {
      sub.inherited_labels = {best->label};
      out.push_back(std::move(sub));
    }
  }
  return out;
}

/// Training ingestion: global labels propagate, time spans use the overlap rule.
inline std::vector<SubEpisode> labeled_sub_episodes(const Episode& episode, double window_s) {
  validate_episode(episode, /*require_labels=*/true);
  auto subs = segment_episode(episode, window_s);
  const bool all_global = std::all_of(episode.labels.begin(), episode.labels.end(),
                                      [](const LabelSpan& s) { return s.is_global(); });
  return all_global ? propagate_global_labels(episode, std::move(subs))
                    : assign_segmented_labels(episode, std::move(subs));
}

}  // namespace icm
