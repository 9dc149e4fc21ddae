#pragma once

// High-frequency noise gate: sum the first IMFs of a CEEMDAN decomposition,
// count zero crossings in a centred sliding window wherever the window holds a
// value above a quantile threshold, and report runs of "busy" windows that last
// longer than a minimum gate length.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "icm/core.hpp"
#include "icm/emd.hpp"

namespace icm {

struct NoiseSegment {
  double start_s = 0.0;
  double end_s = 0.0;

  double length() const { return end_s - start_s; }
  bool operator==(const NoiseSegment&) const = default;
};

struct NoiseGateParams {
  double quantile = 0.85;
  double window_s = 0.234375;  // 30 samples at 128 Hz
  int nzc_min = 2;
  double gate_min_s = 0.75;
  int hf_imf_count = 3;
};

/// CEEMDAN settings for the gate. Only the first `hf_imf_count` modes are
/// consumed and CEEMDAN stage k depends only on earlier stages, so max_imfs
/// can stop there without changing those modes.
inline CeemdanParams default_gate_emd_params() {
  CeemdanParams p;
  p.ensemble = 100;
  p.noise_std_frac = 0.2;
  p.max_sift = 10;
  p.max_imfs = 3;
  p.seed = 0;
  return p;
}

inline void validate(const NoiseGateParams& p, double sample_rate_hz) {
  if (!(p.quantile > 0.0 && p.quantile < 1.0)) throw Error("noise", "quantile must be in (0, 1)");
  if (!(p.gate_min_s > 0.0)) throw Error("noise", "gate_min_s must be > 0");
  if (p.hf_imf_count < 1) throw Error("noise", "hf_imf_count must be >= 1");
  const double w = p.window_s * sample_rate_hz;
  if (!(w >= 1.0) || std::abs(w - std::round(w)) > 1e-9)
    throw Error("noise", "window_s * sample_rate must be a positive integer");
}

struct HighFreqSum {
  std::vector<double> hn;
  bool short_stack = false;  // fewer IMFs than requested were available
};

inline HighFreqSum high_freq_sum(const ImfStack& stack, int count = 3) {
  if (stack.imfs.empty()) throw Error("noise", "empty IMF stack");
  HighFreqSum out;
  const std::size_t use = std::min<std::size_t>(static_cast<std::size_t>(std::max(count, 0)),
                                                stack.imfs.size());
  out.short_stack = use < static_cast<std::size_t>(count);
  out.hn.assign(stack.imfs.front().size(), 0.0);
  for (std::size_t k = 0; k < use; ++k)
    for (std::size_t i = 0; i < out.hn.size(); ++i) out.hn[i] += stack.imfs[k][i];
  return out;
}

/// Linear-interpolation quantile (type 7).
inline double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw Error("noise", "quantile of empty sequence");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

/// Zero-crossing count per sample position for a window centred on it.
/// Positions whose full window does not fit are 0.
inline std::vector<int> nzc_profile(std::span<const double> hn, const NoiseGateParams& params,
                                    double sample_rate_hz) {
  if (hn.empty()) throw Error("noise", "empty Hn");
  validate(params, sample_rate_hz);
  const std::size_t n = hn.size();
  const auto w = static_cast<std::size_t>(std::llround(params.window_s * sample_rate_hz));
  std::vector<int> nzc(n, 0);
  if (w > n) return nzc;

  std::vector<double> mag(n);
  for (std::size_t i = 0; i < n; ++i) mag[i] = std::abs(hn[i]);
  const double threshold = quantile(mag, params.quantile);

  // Exact zeros carry the previous sign; leading zeros have no sign yet.
  std::vector<int> sign(n, 0);
  int current = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (hn[i] > 0.0) current = 1;
    else if (hn[i] < 0.0) current = -1;
    sign[i] = current;
  }
  // crossings_before[j] = number of crossings between samples (k-1, k), k < j.
  std::vector<int> crossings_before(n + 1, 0);
  for (std::size_t j = 1; j < n; ++j) {
    const bool cross = sign[j - 1] != 0 && sign[j] != 0 && sign[j] != sign[j - 1];
    crossings_before[j + 1] = crossings_before[j] + (cross ? 1 : 0);
  }

  const std::size_t half = w / 2;
  for (std::size_t i = half; i + (w - half) <= n; ++i) {
    const std::size_t start = i - half;
    const std::size_t stop = start + w;  // exclusive
    const double peak = *std::max_element(mag.begin() + static_cast<std::ptrdiff_t>(start),
                                          mag.begin() + static_cast<std::ptrdiff_t>(stop));
    if (peak > threshold) nzc[i] = crossings_before[stop] - crossings_before[start + 1];
  }
  return nzc;
}

/// Runs of Gn = 1 (NZC >= nzc_min) strictly longer than gate_min_s.
inline std::vector<NoiseSegment> gate_segments(std::span<const int> nzc, const NoiseGateParams& params,
                                               double sample_rate_hz) {
  std::vector<NoiseSegment> out;
  const std::size_t n = nzc.size();
  std::size_t i = 0;
  while (i < n) {
    if (nzc[i] < params.nzc_min) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && nzc[j] >= params.nzc_min) ++j;
    const double len_s = static_cast<double>(j - i) / sample_rate_hz;
    if (len_s > params.gate_min_s)
      out.push_back({static_cast<double>(i) / sample_rate_hz, static_cast<double>(j) / sample_rate_hz});
    i = j;
  }
  return out;
}

inline std::vector<NoiseSegment> detect_noise(std::span<const double> samples, double sample_rate_hz,
                                              const NoiseGateParams& params,
                                              const CeemdanNoiseBank& bank) {
  validate(params, sample_rate_hz);
  const auto w = static_cast<std::size_t>(std::llround(params.window_s * sample_rate_hz));
  if (samples.size() < w) throw Error("noise", "sub-episode shorter than the NZC window");
  const ImfStack stack = bank.decompose(samples);
  if (stack.imfs.empty()) return {};  // no oscillation at all
  const auto hf = high_freq_sum(stack, params.hf_imf_count);
  const auto nzc = nzc_profile(hf.hn, params, sample_rate_hz);
  return gate_segments(nzc, params, sample_rate_hz);
}

inline std::vector<NoiseSegment> detect_noise(const SubEpisode& sub, const NoiseGateParams& params,
                                              const CeemdanParams& emd_params = default_gate_emd_params()) {
  const CeemdanNoiseBank bank(sub.samples.size(), emd_params);
  return detect_noise(sub.samples, sub.sample_rate_hz, params, bank);
}

namespace noise_detail {

inline std::vector<NoiseSegment> merged(std::vector<NoiseSegment> v) {
  std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.start_s < b.start_s; });
  std::vector<NoiseSegment> out;
  for (const auto& s : v) {
    if (!(s.end_s > s.start_s)) continue;
    if (!out.empty() && s.start_s <= out.back().end_s) out.back().end_s = std::max(out.back().end_s, s.end_s);
    else out.push_back(s);
  }
  return out;
}

inline double total_length(const std::vector<NoiseSegment>& v) {
  double t = 0.0;
  for (const auto& s : v) t += s.length();
  return t;
}

}  // namespace noise_detail

/// Jaccard index of two interval sets on the time axis. Two empty sets give 1.
inline double jaccard(const std::vector<NoiseSegment>& a, const std::vector<NoiseSegment>& b) {
  const auto ma = noise_detail::merged(a);
  const auto mb = noise_detail::merged(b);
  const double la = noise_detail::total_length(ma);
  const double lb = noise_detail::total_length(mb);
  if (la == 0.0 && lb == 0.0) return 1.0;
  double inter = 0.0;
  std::size_t i = 0, j = 0;
  while (i < ma.size() && j < mb.size()) {
    const double lo = std::max(ma[i].start_s, mb[j].start_s);
    const double hi = std::min(ma[i].end_s, mb[j].end_s);
    if (hi > lo) inter += hi - lo;
    if (ma[i].end_s < mb[j].end_s) ++i;
    else ++j;
  }
  const double uni = la + lb - inter;
  return uni > 0.0 ? inter / uni : 1.0;
}

}  // namespace icm
