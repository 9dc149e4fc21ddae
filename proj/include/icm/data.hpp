#pragma once

// Dataset files (one JSON episode record per line) and the synthetic sECG
// generator used in place of real implant recordings.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "icm/core.hpp"
#include "icm/noisegate.hpp"

namespace icm {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// File helpers

/// Writes through a sibling temp file and renames it into place.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("io", "cannot open '" + tmp.string() + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error("io", "write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error("io", "cannot rename into '" + path.string() + "': " + ec.message());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io", "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Dataset records

enum class DatasetVariant { Any, Train, Test };

inline json episode_to_json(const Episode& ep) {
  json labels = json::array();
  for (const auto& span : ep.labels) {
    json l = {{"label", to_string(span.label)}};
    if (span.start_s) l["start_s"] = *span.start_s;
    if (span.end_s) l["end_s"] = *span.end_s;
    labels.push_back(std::move(l));
  }
  return json{{"id", ep.id}, {"sample_rate_hz", ep.sample_rate_hz}, {"samples", ep.samples},
              {"labels", std::move(labels)}};
}

inline Episode episode_from_json(const json& rec, const std::string& where) {
  auto fail = [&](const std::string& field, const std::string& msg) -> Error {
    return Error("data", where + ": field '" + field + "': " + msg);
  };
  if (!rec.is_object()) throw Error("data", where + ": record is not an object");
  for (const auto& [key, _] : rec.items()) {
    if (key != "id" && key != "sample_rate_hz" && key != "samples" && key != "labels")
      throw fail(key, "unknown field");
  }
  Episode ep;
  if (!rec.contains("id") || !rec["id"].is_string()) throw fail("id", "missing or not a string");
  ep.id = rec["id"].get<std::string>();
  if (!rec.contains("sample_rate_hz") || !rec["sample_rate_hz"].is_number())
    throw fail("sample_rate_hz", "missing or not a number");
  ep.sample_rate_hz = rec["sample_rate_hz"].get<double>();
  if (!(ep.sample_rate_hz > 0.0)) throw fail("sample_rate_hz", "must be > 0");
  if (!rec.contains("samples") || !rec["samples"].is_array()) throw fail("samples", "missing or not an array");
  ep.samples.reserve(rec["samples"].size());
  for (const auto& v : rec["samples"]) {
    if (!v.is_number()) throw fail("samples", "non-numeric sample");
    ep.samples.push_back(v.get<double>());
  }
  if (static_cast<double>(ep.samples.size()) > ep.sample_rate_hz * kMaxEpisodeSeconds + 0.5)
    throw fail("samples", "episode longer than 60 s");
  if (!rec.contains("labels") || !rec["labels"].is_array()) throw fail("labels", "missing or not an array");
  for (const auto& l : rec["labels"]) {
    if (!l.is_object() || !l.contains("label") || !l["label"].is_string())
      throw fail("labels", "entry needs a string 'label'");
    for (const auto& [key, _] : l.items()) {
      if (key != "label" && key != "start_s" && key != "end_s") throw fail("labels." + key, "unknown field");
    }
    LabelSpan span;
    try {
      span.label = parse_rhythm_class(l["label"].get<std::string>());
    } catch (const Error&) {
      throw fail("labels.label", "unknown label '" + l["label"].get<std::string>() + "'");
    }
    if (l.contains("start_s") != l.contains("end_s")) throw fail("labels", "start_s and end_s go together");
    if (l.contains("start_s")) {
      if (!l["start_s"].is_number()) throw fail("labels.start_s", "not a number");
      if (!l["end_s"].is_number()) throw fail("labels.end_s", "not a number");
      span.start_s = l["start_s"].get<double>();
      span.end_s = l["end_s"].get<double>();
      if (!(*span.end_s > *span.start_s)) throw fail("labels.end_s", "end_s must exceed start_s");
      if (*span.start_s < 0.0 || *span.end_s > ep.duration_s() + 1e-9)
        throw fail("labels", "span outside the episode");
    }
    ep.labels.push_back(span);
  }
  return ep;
}

inline void check_variant(const Episode& ep, DatasetVariant variant) {
  if (variant == DatasetVariant::Any) return;
  for (const auto& span : ep.labels) {
    if (variant == DatasetVariant::Train && !span.is_global())
      throw Error("data", "episode '" + ep.id + "': training records carry global labels only");
    if (variant == DatasetVariant::Test && span.is_global())
      throw Error("data", "episode '" + ep.id + "': test records need start_s/end_s on every label");
  }
}

inline std::string dataset_to_string(const std::vector<Episode>& episodes,
                                     DatasetVariant variant = DatasetVariant::Any) {
  std::string out;
  for (const auto& ep : episodes) {
    validate_episode(ep);
    check_variant(ep, variant);
    out += episode_to_json(ep).dump();
    out += '\n';
  }
  return out;
}

inline void save_dataset(const std::vector<Episode>& episodes, const std::filesystem::path& path,
                         DatasetVariant variant = DatasetVariant::Any) {
  write_file_atomic(path, dataset_to_string(episodes, variant));
}

inline std::vector<Episode> parse_dataset(std::istream& in, const std::string& name = "<stream>") {
  std::vector<Episode> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = name + ":" + std::to_string(lineno);
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error("data", where + ": malformed JSON: " + e.what());
    }
    out.push_back(episode_from_json(rec, where));
  }
  return out;
}

inline std::vector<Episode> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("data", "cannot open '" + path.string() + "'");
  return parse_dataset(in, path.string());
}

// ---------------------------------------------------------------------------
// Synthetic generator

/// Ground truth produced alongside each synthetic episode.
struct SynthTruth {
  std::string id;
  RhythmClass rhythm = RhythmClass::Normal;
  std::vector<double> r_peaks_s;
  std::vector<NoiseSegment> noise_intervals_s;
  std::optional<NoiseSegment> event_s;
};

struct SynthSpec {
  RhythmClass rhythm = RhythmClass::Normal;
  std::string id = "synth";
  double base_bpm = 70.0;
  double rr_jitter_frac = 0.02;
  // Event windows, in whole segmentation windows: [first, first + count).
  int event_first_window = 0;
  int event_window_count = 0;
  double event_bpm = 140.0;       // Tachycardia / AFib mean rate
  double afib_cv = 0.2;           // AFib RR coefficient of variation
  double pause_s = 3.5;           // RR gap inside each Pause window
  double noise_rms_factor = 3.5;  // HF noise RMS relative to clean signal std
  double noise_lo_hz = 30.0;
  double noise_hi_hz = 60.0;
  std::uint64_t seed = 0;
  double duration_s = 60.0;
  double sample_rate_hz = 128.0;
  double window_s = kDefaultWindowSeconds;
};

inline void validate(const SynthSpec& s) {
  auto bad = [&](const std::string& m) { return Error("synth", "spec '" + s.id + "': " + m); };
  if (!(s.sample_rate_hz > 0.0) || !(s.duration_s > 0.0) || s.duration_s > kMaxEpisodeSeconds)
    throw bad("invalid duration or sample rate");
  if (!(s.base_bpm >= 30.0 && s.base_bpm <= 100.0)) throw bad("base_bpm must be in [30, 100]");
  if (!(s.rr_jitter_frac >= 0.0 && s.rr_jitter_frac < 0.05)) throw bad("rr_jitter_frac must be in [0, 0.05)");
  const int windows = static_cast<int>(s.duration_s / s.window_s);
  if (s.rhythm != RhythmClass::Normal) {
    if (s.event_window_count < 1 || s.event_first_window < 0 ||
        s.event_first_window + s.event_window_count > windows)
      throw bad("event windows outside the episode");
  }
  switch (s.rhythm) {
    case RhythmClass::Tachycardia:
      if (s.event_bpm < 100.0) throw bad("tachycardia needs event_bpm >= 100");
      break;
    case RhythmClass::AFib:
      if (s.afib_cv < 0.15 || s.afib_cv > 0.3) throw bad("afib_cv must be in [0.15, 0.3]");
      break;
    case RhythmClass::Pause:
      if (s.pause_s < 3.0 || s.pause_s > s.window_s - 1.0) throw bad("pause_s must be in [3, window - 1]");
      break;
    case RhythmClass::Noise:
      if (s.noise_rms_factor < 3.0) throw bad("noise_rms_factor must be >= 3");
      if (!(s.noise_lo_hz > 0.0 && s.noise_hi_hz > s.noise_lo_hz && s.noise_hi_hz < s.sample_rate_hz / 2))
        throw bad("noise band must lie below Nyquist");
      break;
    case RhythmClass::Normal: break;
  }
}

struct SynthEpisode {
  Episode episode;  // time-bounded spans
  SynthTruth truth;
};

namespace synth_detail {

struct Morphology {
  double r_amp, r_sigma, q_amp, s_amp, p_amp, t_amp, t_sigma;
  double wander_amp, wander_hz, wander_phase, white_std;
};

inline double gauss(double t, double c, double s) {
  const double z = (t - c) / s;
  return std::exp(-0.5 * z * z);
}

// Band-limited noise as a sum of random sinusoids, RMS-normalized.
inline std::vector<double> hf_noise(std::size_t n, double fs, double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> freq(lo, hi), phase(0.0, 2.0 * std::numbers::pi);
  std::vector<double> out(n, 0.0);
  for (int k = 0; k < 48; ++k) {
    const double f = freq(rng), ph = phase(rng);
    for (std::size_t i = 0; i < n; ++i)
      out[i] += std::sin(2.0 * std::numbers::pi * f * static_cast<double>(i) / fs + ph);
  }
  double ss = 0.0;
  for (double v : out) ss += v * v;
  const double rms = std::sqrt(ss / static_cast<double>(std::max<std::size_t>(n, 1)));
  if (rms > 0.0)
    for (auto& v : out) v /= rms;
  return out;
}

}  // namespace synth_detail

/// Renders a 60 s synthetic episode with ground-truth spans, R-peak times and
/// injected noise intervals. Deterministic per seed.
inline SynthEpisode synth_episode(const SynthSpec& spec) {
  validate(spec);
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto U = [&](double a, double b) { return a + (b - a) * uni(rng); };

  const double fs = spec.sample_rate_hz;
  const auto n = static_cast<std::size_t>(std::llround(spec.duration_s * fs));
  const double ev_lo = spec.event_first_window * spec.window_s;
  const double ev_hi = ev_lo + spec.event_window_count * spec.window_s;
  const bool has_event = spec.rhythm != RhythmClass::Normal;
  auto in_event = [&](double t) { return has_event && t >= ev_lo && t < ev_hi; };

  synth_detail::Morphology m{};
  m.r_amp = U(0.6, 1.4);
  m.r_sigma = U(0.008, 0.013);
  m.q_amp = U(0.05, 0.15);
  m.s_amp = U(0.1, 0.3);
  m.p_amp = U(0.05, 0.15);
  m.t_amp = U(0.15, 0.35);
  m.t_sigma = U(0.035, 0.055);
  m.wander_amp = U(0.03, 0.12);
  m.wander_hz = U(0.15, 0.4);
  m.wander_phase = U(0.0, 2.0 * std::numbers::pi);
  m.white_std = U(0.001, 0.003);

  // Beat times.
  const double rr0 = 60.0 / spec.base_bpm;
  const double resp_hz = U(0.2, 0.3);
  std::vector<double> beats;
  std::vector<double> pause_targets;  // gap start per Pause window
  if (spec.rhythm == RhythmClass::Pause) {
    for (int w = 0; w < spec.event_window_count; ++w) {
      const double lo = ev_lo + w * spec.window_s;
      // The gap opens at the first beat past the target, at most one RR later.
      pause_targets.push_back(U(lo + 0.3, lo + spec.window_s - spec.pause_s - 1.3));
    }
  }
  const double af_mean = 60.0 / spec.event_bpm;
  const double af_half = 1.8 * spec.afib_cv * af_mean;
  double af_rr = af_mean;
  std::size_t next_pause = 0;
  double t = U(0.05, rr0);
  while (t < spec.duration_s) {
    beats.push_back(t);
    double rr;
    if (next_pause < pause_targets.size() && t >= pause_targets[next_pause]) {
      rr = spec.pause_s;
      ++next_pause;
    } else if (in_event(t) && spec.rhythm == RhythmClass::Tachycardia) {
      const double base = 60.0 / spec.event_bpm;
      rr = base * (1.0 + spec.rr_jitter_frac * normal(rng));
    } else if (in_event(t) && spec.rhythm == RhythmClass::AFib) {
      // Reflecting random walk with steps comparable to its range.
      af_rr += 1.2 * spec.afib_cv * af_mean * normal(rng);
      const double lo = af_mean - af_half, hi = af_mean + af_half;
      for (int k = 0; k < 4 && (af_rr < lo || af_rr > hi); ++k) af_rr = af_rr < lo ? 2 * lo - af_rr : 2 * hi - af_rr;
      af_rr = std::clamp(af_rr, lo, hi);
      rr = af_rr;
    } else {
      rr = rr0 * (1.0 + 0.015 * std::sin(2.0 * std::numbers::pi * resp_hz * t)) +
           spec.rr_jitter_frac * rr0 * normal(rng);
    }
    t += std::max(rr, 0.25);
  }

  // Waveform.
  std::vector<double> x(n, 0.0);
  for (std::size_t k = 0; k < beats.size(); ++k) {
    const double tb = beats[k];
    const double rr = k + 1 < beats.size() ? beats[k + 1] - tb : (k > 0 ? tb - beats[k - 1] : rr0);
    const bool af = in_event(tb) && spec.rhythm == RhythmClass::AFib;
    const double t_off = std::min(0.28, 0.45 * std::min(rr, 1.2));
    const double lo_t = tb - 0.35, hi_t = tb + t_off + 0.25;
    const auto i0 = static_cast<std::size_t>(std::max(0.0, std::floor(lo_t * fs)));
    const auto i1 = std::min(n, static_cast<std::size_t>(std::max(0.0, std::ceil(hi_t * fs))));
    for (std::size_t i = i0; i < i1; ++i) {
      const double ti = static_cast<double>(i) / fs;
      double v = m.r_amp * synth_detail::gauss(ti, tb, m.r_sigma);
      v -= m.r_amp * m.q_amp * synth_detail::gauss(ti, tb - 0.028, 0.009);
      v -= m.r_amp * m.s_amp * synth_detail::gauss(ti, tb + 0.03, 0.010);
      v += m.r_amp * m.t_amp * synth_detail::gauss(ti, tb + t_off, m.t_sigma);
      if (!af) v += m.r_amp * m.p_amp * synth_detail::gauss(ti, tb - 0.16, 0.022);
      x[i] += v;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double ti = static_cast<double>(i) / fs;
    x[i] += m.r_amp * m.wander_amp * std::sin(2.0 * std::numbers::pi * m.wander_hz * ti + m.wander_phase);
    x[i] += m.r_amp * m.white_std * normal(rng);
    if (in_event(ti) && spec.rhythm == RhythmClass::AFib)
      x[i] += m.r_amp * 0.01 * std::sin(2.0 * std::numbers::pi * 6.0 * ti);
  }

  SynthTruth truth;
  truth.id = spec.id;
  truth.rhythm = spec.rhythm;
  for (double b : beats) {
    if (b < static_cast<double>(n) / fs) truth.r_peaks_s.push_back(b);
  }
  if (has_event) truth.event_s = NoiseSegment{ev_lo, ev_hi};

  if (spec.rhythm == RhythmClass::Noise) {
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    const double clean_std = std::sqrt(var / static_cast<double>(n));
    const auto i0 = static_cast<std::size_t>(std::llround(ev_lo * fs));
    const auto i1 = std::min(n, static_cast<std::size_t>(std::llround(ev_hi * fs)));
    const auto burst = synth_detail::hf_noise(i1 - i0, fs, spec.noise_lo_hz, spec.noise_hi_hz, rng);
    for (std::size_t i = i0; i < i1; ++i) x[i] += spec.noise_rms_factor * clean_std * burst[i - i0];
    truth.noise_intervals_s.push_back({ev_lo, ev_hi});
  }

  // ADC-like quantization keeps dataset files compact.
  for (auto& v : x) v = std::round(v * 1e4) / 1e4;

  SynthEpisode out;
  out.episode.id = spec.id;
  out.episode.sample_rate_hz = fs;
  out.episode.samples = std::move(x);
  const double dur = out.episode.duration_s();
  if (!has_event) {
    out.episode.labels.push_back({RhythmClass::Normal, 0.0, dur});
  } else {
    if (ev_lo > 0.0) out.episode.labels.push_back({RhythmClass::Normal, 0.0, ev_lo});
    out.episode.labels.push_back({spec.rhythm, ev_lo, std::min(ev_hi, dur)});
    if (ev_hi < dur) out.episode.labels.push_back({RhythmClass::Normal, ev_hi, dur});
  }
  out.truth = std::move(truth);
  return out;
}

/// Adds a 30-60 Hz burst of `factor` times the signal's standard deviation
/// over [start_s, start_s + duration_s). Returns the injected interval in
/// sample-grid seconds.
inline NoiseSegment inject_hf_burst(std::vector<double>& x, double fs, double start_s, double duration_s,
                                    double factor, std::mt19937_64& rng) {
  const auto i0 = static_cast<std::size_t>(std::llround(start_s * fs));
  const auto i1 = std::min(x.size(), i0 + static_cast<std::size_t>(std::llround(duration_s * fs)));
  if (i0 >= i1) throw Error("synth", "burst outside the signal");
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(x.size()));
  const auto burst = synth_detail::hf_noise(i1 - i0, fs, 30.0, 60.0, rng);
  for (std::size_t i = i0; i < i1; ++i) x[i] += factor * sd * burst[i - i0];
  return {static_cast<double>(i0) / fs, static_cast<double>(i1) / fs};
}

/// Training view of an episode: time spans collapse to the global label set a
/// reviewer would attach to the whole recording (the event class, plus Normal
/// for noise episodes whose noisy stretch is short).
inline Episode to_training_view(const SynthEpisode& se) {
  Episode ep = se.episode;
  ep.labels.clear();
  const RhythmClass rhythm = se.truth.rhythm;
  ep.labels.push_back({rhythm, std::nullopt, std::nullopt});
  if (rhythm == RhythmClass::Noise && se.truth.event_s && se.truth.event_s->length() <= 30.0)
    ep.labels.push_back({RhythmClass::Normal, std::nullopt, std::nullopt});
  return ep;
}

/// Draws a randomized spec for one class.
inline SynthSpec random_spec(RhythmClass rhythm, std::string id, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  auto U = [&](double a, double b) { return a + (b - a) * uni(rng); };
  auto Ui = [&](int a, int b) { return std::uniform_int_distribution<int>(a, b)(rng); };
  SynthSpec s;
  s.rhythm = rhythm;
  s.id = std::move(id);
  s.base_bpm = U(58.0, 92.0);
  s.rr_jitter_frac = U(0.01, 0.025);
  s.seed = rng();
  const int windows = 6;
  switch (rhythm) {
    case RhythmClass::Normal: break;
    case RhythmClass::Tachycardia:
      s.event_window_count = Ui(3, windows);
      s.event_bpm = U(115.0, 170.0);
      break;
    case RhythmClass::AFib:
      s.event_window_count = Ui(3, windows);
      s.event_bpm = U(75.0, 130.0);
      s.afib_cv = U(0.15, 0.3);
      break;
    case RhythmClass::Pause:
      s.event_window_count = Ui(1, 2);
      s.pause_s = U(3.0, 4.5);
      break;
    case RhythmClass::Noise:
      s.event_window_count = Ui(2, windows);
      s.noise_rms_factor = U(3.0, 4.5);
      break;
  }
  if (rhythm != RhythmClass::Normal) s.event_first_window = Ui(0, windows - s.event_window_count);
  return s;
}

using ClassCounts = std::array<std::size_t, kNumClasses>;

/// Largest-remainder split of `total` by `mix` (ties go to the earlier class).
inline ClassCounts counts_from_mix(std::size_t total, const std::array<double, kNumClasses>& mix) {
  double sum = 0.0;
  for (double m : mix) {
    if (m < 0.0) throw Error("synth", "negative class share");
    sum += m;
  }
  if (!(sum > 0.0)) throw Error("synth", "class mix sums to zero");
  ClassCounts counts{};
  std::array<double, kNumClasses> rem{};
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const double exact = static_cast<double>(total) * mix[c] / sum;
    counts[c] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    rem[c] = exact - static_cast<double>(counts[c]);
    assigned += counts[c];
  }
  while (assigned < total) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < kNumClasses; ++c)
      if (rem[c] > rem[best] + 1e-12) best = c;
    ++counts[best];
    rem[best] = -1.0;
    ++assigned;
  }
  return counts;
}

/// Class shares of the reference training set (roughly half Normal).
inline constexpr std::array<double, kNumClasses> kReferenceMix = {0.49, 0.095, 0.08, 0.17, 0.165};

struct CorpusSpec {
  ClassCounts train{};
  ClassCounts test{};
  std::uint64_t seed = 1;
};

struct Corpus {
  std::vector<Episode> train;  // global labels
  std::vector<Episode> test;   // time-bounded labels
  std::vector<SynthTruth> train_truth;
  std::vector<SynthTruth> test_truth;
};

inline Corpus synth_corpus(const CorpusSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  Corpus corpus;
  auto build = [&](const ClassCounts& counts, const std::string& prefix, bool train) {
    std::vector<SynthSpec> specs;
    std::size_t k = 0;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      for (std::size_t i = 0; i < counts[c]; ++i) {
        char id[64];
        std::snprintf(id, sizeof id, "%s-%05zu", prefix.c_str(), k++);
        specs.push_back(random_spec(kAllClasses[c], id, rng));
      }
    }
    // Interleave classes so file order carries no label information.
    std::shuffle(specs.begin(), specs.end(), rng);
    for (std::size_t i = 0; i < specs.size(); ++i) {
      char id[64];
      std::snprintf(id, sizeof id, "%s-%05zu", prefix.c_str(), i);
      specs[i].id = id;
      auto se = synth_episode(specs[i]);
      if (train) {
        corpus.train.push_back(to_training_view(se));
        corpus.train_truth.push_back(std::move(se.truth));
      } else {
        corpus.test.push_back(std::move(se.episode));
        corpus.test_truth.push_back(std::move(se.truth));
      }
    }
  };
  build(spec.train, "train", true);
  build(spec.test, "test", false);
  return corpus;
}

inline json truth_to_json(const SynthTruth& t) {
  json noise = json::array();
  for (const auto& s : t.noise_intervals_s) noise.push_back({s.start_s, s.end_s});
  json j = {{"id", t.id}, {"class", to_string(t.rhythm)}, {"r_peaks_s", t.r_peaks_s}, {"noise_intervals_s", noise}};
  j["event_s"] = t.event_s ? json{t.event_s->start_s, t.event_s->end_s} : json(nullptr);
  return j;
}

inline SynthTruth truth_from_json(const json& j) {
  SynthTruth t;
  t.id = j.at("id").get<std::string>();
  t.rhythm = parse_rhythm_class(j.at("class").get<std::string>());
  t.r_peaks_s = j.at("r_peaks_s").get<std::vector<double>>();
  for (const auto& s : j.at("noise_intervals_s")) t.noise_intervals_s.push_back({s.at(0).get<double>(), s.at(1).get<double>()});
  if (!j.at("event_s").is_null()) t.event_s = NoiseSegment{j["event_s"].at(0).get<double>(), j["event_s"].at(1).get<double>()};
  return t;
}

inline void save_truth(const std::vector<SynthTruth>& truth, const std::filesystem::path& path) {
  std::string out;
  for (const auto& t : truth) out += truth_to_json(t).dump() + "\n";
  write_file_atomic(path, out);
}

inline std::vector<SynthTruth> load_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("data", "cannot open '" + path.string() + "'");
  std::vector<SynthTruth> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(truth_from_json(json::parse(line)));
  }
  return out;
}

}  // namespace icm
