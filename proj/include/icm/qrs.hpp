#pragma once

// R-peak detection: four independent detectors (energy window, matched
// filter, Pan-Tompkins, amplitude maxima) fused by kernel-density voting.
// Filter settings are derived for low sample rates (128 Hz implant data).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <numbers>
#include <span>
#include <vector>

#include "icm/core.hpp"

namespace icm {

enum class DetectorId : int { EnergyWindow = 0, MatchedFilter = 1, PanTompkins = 2, MaximaSearch = 3 };

struct PeakCandidates {
  DetectorId detector = DetectorId::EnergyWindow;
  std::vector<double> times_s;  // strictly increasing
};

struct RPeaks {
  std::vector<double> times_s;
  std::vector<int> support;  // distinct detectors behind each peak
};

struct QrsParams {
  double bandwidth_s = 0.05;
  int min_support = 2;
  double refractory_s = 0.25;
};

namespace qrs_detail {

// Centred moving average with edge renormalization.
inline std::vector<double> moving_average(std::span<const double> x, std::size_t len) {
  const std::size_t n = x.size();
  std::vector<double> out(n, 0.0);
  if (n == 0 || len <= 1) return std::vector<double>(x.begin(), x.end());
  std::vector<double> csum(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) csum[i + 1] = csum[i] + x[i];
  const std::size_t left = (len - 1) / 2, right = len / 2;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= left ? i - left : 0;
    const std::size_t hi = std::min(n, i + right + 1);
    out[i] = (csum[hi] - csum[lo]) / static_cast<double>(hi - lo);
  }
  return out;
}

inline std::size_t samples(double seconds, double fs) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(seconds * fs)));
}

// Signal minus its 0.25 s running mean: baseline and T-wave suppressed.
inline std::vector<double> highpass(std::span<const double> x, double fs) {
  const auto ma = moving_average(x, samples(0.25, fs) | 1);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - ma[i];
  return out;
}

inline double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

// Typical beat level of a non-negative feature: a high percentile of its
// per-second maxima, so stretches without beats do not drag it down.
inline double beat_level(std::span<const double> f, double fs) {
  const std::size_t block = samples(1.0, fs);
  std::vector<double> maxima;
  for (std::size_t i = 0; i < f.size(); i += block) {
    const std::size_t end = std::min(f.size(), i + block);
    maxima.push_back(*std::max_element(f.begin() + static_cast<std::ptrdiff_t>(i),
                                       f.begin() + static_cast<std::ptrdiff_t>(end)));
  }
  return percentile(maxima, 0.8);
}

// Local maxima of f above thr, thinned so no two survivors are closer than
// `refractory` samples (larger value wins, earlier index on ties).
inline std::vector<std::size_t> pick_peaks(std::span<const double> f, std::span<const double> thr,
                                           std::size_t refractory) {
  std::vector<std::size_t> cand;
  for (std::size_t i = 1; i + 1 < f.size(); ++i) {
    if (f[i] > thr[i] && f[i] > 0.0 && f[i] > f[i - 1] && f[i] >= f[i + 1]) cand.push_back(i);
  }
  std::vector<std::size_t> order(cand.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return f[cand[a]] > f[cand[b]]; });
  std::vector<std::size_t> kept;
  for (std::size_t k : order) {
    const std::size_t i = cand[k];
    bool clash = false;
    for (std::size_t j : kept) {
      if ((i > j ? i - j : j - i) < refractory) {
        clash = true;
        break;
      }
    }
    if (!clash) kept.push_back(i);
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

// Moves each index to the largest |hp| within +-radius samples.
inline std::vector<double> to_apex_times(std::span<const std::size_t> idx, std::span<const double> hp,
                                         double fs, std::size_t radius) {
  std::vector<double> times;
  for (std::size_t i : idx) {
    const std::size_t lo = i >= radius ? i - radius : 0;
    const std::size_t hi = std::min(hp.size() - 1, i + radius);
    std::size_t best = lo;
    for (std::size_t j = lo; j <= hi; ++j)
      if (std::abs(hp[j]) > std::abs(hp[best])) best = j;
    const double t = static_cast<double>(best) / fs;
    if (times.empty() || t > times.back()) times.push_back(t);
  }
  return times;
}

// Threshold: fraction of the running maximum over +-1.5 s, floored by a
// fraction of the recording-wide beat level.
inline std::vector<double> adaptive_threshold(std::span<const double> f, double fs, double local_frac,
                                              double global_frac) {
  const std::size_t n = f.size();
  const std::size_t half = samples(1.5, fs);
  const double floor_level = global_frac * beat_level(f, fs);
  std::vector<double> thr(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(n, i + half + 1);
    const double local = *std::max_element(f.begin() + static_cast<std::ptrdiff_t>(lo),
                                           f.begin() + static_cast<std::ptrdiff_t>(hi));
    thr[i] = std::max(local_frac * local, floor_level);
  }
  return thr;
}

inline bool is_flat(std::span<const double> x) {
  if (x.empty()) return true;
  const auto [mn, mx] = std::minmax_element(x.begin(), x.end());
  return *mx - *mn <= 0.0;
}

// Zero-phase RBJ biquad (low- or high-pass, Q = 1/sqrt 2).
inline std::vector<double> biquad_filtfilt(std::span<const double> x, double fs, double fc, bool high) {
  const double w0 = 2.0 * std::numbers::pi * fc / fs;
  const double alpha = std::sin(w0) / std::numbers::sqrt2;  // 2Q with Q = 1/sqrt 2
  const double cw = std::cos(w0);
  double b0, b1, b2;
  if (high) {
    b0 = (1.0 + cw) / 2.0;
    b1 = -(1.0 + cw);
    b2 = b0;
  } else {
    b0 = (1.0 - cw) / 2.0;
    b1 = 1.0 - cw;
    b2 = b0;
  }
  const double a0 = 1.0 + alpha, a1 = -2.0 * cw, a2 = 1.0 - alpha;
  auto pass = [&](std::vector<double> v) {
    double x1 = v.empty() ? 0.0 : v.front(), x2 = x1;
    // Steady-state start for the low-pass; the high-pass starts from rest.
    double y1 = high ? 0.0 : x1, y2 = y1;
    for (auto& s : v) {
      const double in = s;
      const double y = (b0 * in + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2) / a0;
      x2 = x1;
      x1 = in;
      y2 = y1;
      y1 = y;
      s = y;
    }
    return v;
  };
  auto fwd = pass(std::vector<double>(x.begin(), x.end()));
  std::reverse(fwd.begin(), fwd.end());
  auto back = pass(std::move(fwd));
  std::reverse(back.begin(), back.end());
  return back;
}

}  // namespace qrs_detail

/// Window-based energy detector: difference of moving averages as a
/// band-pass, squared and integrated over 100 ms, adaptive threshold.
inline PeakCandidates detect_energy(std::span<const double> x, double fs) {
  using namespace qrs_detail;
  PeakCandidates out{DetectorId::EnergyWindow, {}};
  if (x.size() < 8 || is_flat(x)) return out;
  const auto fast = moving_average(x, 3);
  const auto slow = moving_average(x, samples(0.1, fs) | 1);
  std::vector<double> e(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = fast[i] - slow[i];
    e[i] = d * d;
  }
  const auto env = moving_average(e, samples(0.1, fs) | 1);
  const auto thr = adaptive_threshold(env, fs, 0.3, 0.2);
  const auto idx = pick_peaks(env, thr, samples(0.25, fs));
  const auto hp = highpass(x, fs);
  out.times_s = to_apex_times(idx, hp, fs, samples(0.06, fs));
  return out;
}

/// Default QRS kernel (Q-R-S Gaussians, zero mean, unit norm) at rate fs.
inline std::vector<double> default_qrs_template(double fs) {
  const std::size_t half = qrs_detail::samples(0.06, fs);
  std::vector<double> k(2 * half + 1);
  auto g = [](double t, double c, double s) { return std::exp(-0.5 * (t - c) * (t - c) / (s * s)); };
  for (std::size_t i = 0; i < k.size(); ++i) {
    const double t = (static_cast<double>(i) - static_cast<double>(half)) / fs;
    k[i] = g(t, 0.0, 0.011) - 0.1 * g(t, -0.028, 0.009) - 0.2 * g(t, 0.03, 0.01);
  }
  double mean = 0.0;
  for (double v : k) mean += v;
  mean /= static_cast<double>(k.size());
  double ss = 0.0;
  for (auto& v : k) {
    v -= mean;
    ss += v * v;
  }
  for (auto& v : k) v /= std::sqrt(ss);
  return k;
}

/// Template cut from the highest-energy beat found by the energy detector,
/// zero mean and unit norm. Falls back to the default kernel.
inline std::vector<double> learn_qrs_template(std::span<const double> x, double fs) {
  auto fallback = default_qrs_template(fs);
  const auto beats = detect_energy(x, fs);
  if (beats.times_s.empty()) return fallback;
  const auto hp = qrs_detail::highpass(x, fs);
  const std::size_t half = fallback.size() / 2;
  std::size_t best = 0;
  double best_e = -1.0;
  for (double t : beats.times_s) {
    const auto c = static_cast<std::size_t>(std::llround(t * fs));
    if (c < half || c + half >= x.size()) continue;
    double e = 0.0;
    for (std::size_t j = c - half; j <= c + half; ++j) e += hp[j] * hp[j];
    if (e > best_e) {
      best_e = e;
      best = c;
    }
  }
  if (best_e <= 0.0) return fallback;
  std::vector<double> k(hp.begin() + static_cast<std::ptrdiff_t>(best - half),
                        hp.begin() + static_cast<std::ptrdiff_t>(best + half + 1));
  double mean = 0.0;
  for (double v : k) mean += v;
  mean /= static_cast<double>(k.size());
  double ss = 0.0;
  for (auto& v : k) {
    v -= mean;
    ss += v * v;
  }
  if (ss <= 0.0) return fallback;
  for (auto& v : k) v /= std::sqrt(ss);
  return k;
}

/// Matched filter: correlation of the high-passed signal with a QRS
/// template, gated by normalized cross-correlation >= 0.5.
inline PeakCandidates detect_matched(std::span<const double> x, double fs,
                                     std::span<const double> templ) {
  using namespace qrs_detail;
  PeakCandidates out{DetectorId::MatchedFilter, {}};
  if (x.size() < templ.size() + 2 || templ.empty() || is_flat(x)) return out;
  const auto hp = highpass(x, fs);
  const std::size_t n = hp.size(), m = templ.size(), half = m / 2;
  double tmean = 0.0;
  for (double v : templ) tmean += v;
  tmean /= static_cast<double>(m);
  double tnorm = 0.0;
  for (double v : templ) tnorm += (v - tmean) * (v - tmean);
  tnorm = std::sqrt(tnorm);
  std::vector<double> score(n, 0.0);
  for (std::size_t c = half; c + (m - half) <= n; ++c) {
    const std::size_t s = c - half;
    double dot = 0.0, mean = 0.0;
    for (std::size_t j = 0; j < m; ++j) mean += hp[s + j];
    mean /= static_cast<double>(m);
    double ss = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double v = hp[s + j] - mean;
      dot += v * (templ[j] - tmean);
      ss += v * v;
    }
    if (ss <= 0.0 || tnorm <= 0.0) continue;
    const double ncc = dot / (std::sqrt(ss) * tnorm);
    if (ncc >= 0.5) score[c] = dot;
  }
  const auto thr = adaptive_threshold(score, fs, 0.3, 0.2);
  const auto idx = pick_peaks(score, thr, samples(0.25, fs));
  out.times_s = to_apex_times(idx, hp, fs, samples(0.05, fs));
  return out;
}

inline PeakCandidates detect_matched(std::span<const double> x, double fs) {
  const auto templ = default_qrs_template(fs);
  return detect_matched(x, fs, templ);
}

/// Pan-Tompkins: 5-15 Hz band-pass, derivative, squaring, 150 ms
/// integration, dual adaptive thresholds with search-back.
inline PeakCandidates detect_pan_tompkins(std::span<const double> x, double fs) {
  using namespace qrs_detail;
  PeakCandidates out{DetectorId::PanTompkins, {}};
  if (x.size() < 16 || is_flat(x)) return out;
  const auto lp = biquad_filtfilt(x, fs, 15.0, false);
  const auto bp = biquad_filtfilt(lp, fs, 5.0, true);
  const std::size_t n = bp.size();
  std::vector<double> sq(n, 0.0);
  for (std::size_t i = 2; i + 2 < n; ++i) {
    const double d = (-bp[i - 2] - 2.0 * bp[i - 1] + 2.0 * bp[i + 1] + bp[i + 2]) * fs / 8.0;
    sq[i] = d * d;
  }
  const auto mwi = moving_average(sq, samples(0.15, fs) | 1);

  // Candidate peaks: local maxima at least 200 ms apart.
  std::vector<double> zero(n, 0.0);
  const auto peaks = pick_peaks(mwi, zero, samples(0.2, fs));
  if (peaks.empty()) return out;

  const std::size_t learn = std::min(n, samples(2.0, fs));
  double learn_max = 0.0, learn_mean = 0.0;
  for (std::size_t i = 0; i < learn; ++i) {
    learn_max = std::max(learn_max, mwi[i]);
    learn_mean += mwi[i];
  }
  learn_mean /= static_cast<double>(learn);
  double spki = 0.25 * std::max(learn_max, beat_level(mwi, fs));
  double npki = 0.5 * learn_mean;
  auto thr1 = [&] { return npki + 0.25 * (spki - npki); };

  std::vector<std::size_t> qrs;
  std::vector<double> qrs_slope;
  std::vector<double> rr;
  auto slope_at = [&](std::size_t i) {
    const std::size_t r = samples(0.04, fs);
    double best = 0.0;
    for (std::size_t j = i >= r ? i - r : 0; j <= std::min(n - 1, i + r); ++j) best = std::max(best, sq[j]);
    return std::sqrt(best);
  };
  auto accept = [&](std::size_t i, bool searchback) {
    if (!qrs.empty()) rr.push_back(static_cast<double>(i - qrs.back()));
    qrs.push_back(i);
    qrs_slope.push_back(slope_at(i));
    spki = searchback ? 0.25 * mwi[i] + 0.75 * spki : 0.125 * mwi[i] + 0.875 * spki;
  };
  auto rr_avg = [&] {
    if (rr.empty()) return static_cast<double>(samples(1.0, fs));
    const std::size_t k = std::min<std::size_t>(8, rr.size());
    double s = 0.0;
    for (std::size_t j = rr.size() - k; j < rr.size(); ++j) s += rr[j];
    return s / static_cast<double>(k);
  };

  std::size_t p = 0;
  while (p < peaks.size()) {
    const std::size_t i = peaks[p];
    // Search-back over skipped peaks when a beat is overdue.
    if (!qrs.empty() && static_cast<double>(i - qrs.back()) > 1.66 * rr_avg()) {
      const std::size_t from = qrs.back() + samples(0.2, fs);
      std::size_t best = 0;
      double best_v = 0.5 * thr1();
      for (std::size_t q = 0; q < p; ++q) {
        if (peaks[q] > from && peaks[q] < i && mwi[peaks[q]] > best_v) {
          best_v = mwi[peaks[q]];
          best = peaks[q];
        }
      }
      if (best != 0) accept(best, true);
    }
    if (mwi[i] > thr1()) {
      bool t_wave = false;
      if (!qrs.empty() && i - qrs.back() < samples(0.36, fs)) {
        t_wave = slope_at(i) < 0.5 * qrs_slope.back();
      }
      if (t_wave) npki = 0.125 * mwi[i] + 0.875 * npki;
      else accept(i, false);
    } else {
      npki = 0.125 * mwi[i] + 0.875 * npki;
    }
    ++p;
  }
  std::sort(qrs.begin(), qrs.end());
  qrs.erase(std::unique(qrs.begin(), qrs.end()), qrs.end());
  const auto hp = highpass(x, fs);
  out.times_s = to_apex_times(qrs, hp, fs, samples(0.08, fs));
  return out;
}

/// Amplitude maxima of the baseline-removed signal above
/// median + 5 MAD (and a fraction of the beat level), with refractory
/// suppression.
inline PeakCandidates detect_maxima(std::span<const double> x, double fs) {
  using namespace qrs_detail;
  PeakCandidates out{DetectorId::MaximaSearch, {}};
  if (x.size() < 8 || is_flat(x)) return out;
  const auto hp = highpass(x, fs);
  std::vector<double> a(hp.size());
  for (std::size_t i = 0; i < hp.size(); ++i) a[i] = std::abs(hp[i]);
  const double med = percentile(a, 0.5);
  std::vector<double> dev(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) dev[i] = std::abs(a[i] - med);
  const double mad = percentile(dev, 0.5);
  const double level = std::max(med + 5.0 * mad, 0.4 * beat_level(a, fs));
  std::vector<double> thr(a.size(), level);
  const auto idx = pick_peaks(a, thr, samples(0.25, fs));
  for (std::size_t i : idx) {
    const double t = static_cast<double>(i) / fs;
    if (out.times_s.empty() || t > out.times_s.back()) out.times_s.push_back(t);
  }
  return out;
}

namespace qrs_detail {

struct Pooled {
  double t;
  int detector;
  bool operator<(const Pooled& o) const { return t != o.t ? t < o.t : detector < o.detector; }
};

}  // namespace qrs_detail

/// Kernel-density voting over pooled candidate times.
///
/// The Gaussian density of all candidates is evaluated on a grid of step
/// bandwidth/25 anchored at t = 0. A grid point is a mode when its density
/// is greater than the left neighbour and not less than the right one. A
/// mode is accepted when the candidates within +-2 bandwidths come from at
/// least `min_support` distinct detectors; its time is their median.
/// Accepted peaks closer than the refractory period keep the denser one.
inline RPeaks fuse_kde(std::span<const PeakCandidates> candidates, const QrsParams& params = {}) {
  using qrs_detail::Pooled;
  if (!(params.bandwidth_s > 0.0)) throw Error("qrs", "bandwidth_s must be > 0");
  std::vector<Pooled> pool;
  for (const auto& pc : candidates)
    for (double t : pc.times_s) pool.push_back({t, static_cast<int>(pc.detector)});
  RPeaks out;
  if (pool.empty()) return out;
  std::sort(pool.begin(), pool.end());

  const double h = params.bandwidth_s;
  const double step = h / 25.0;
  const double inv2h2 = 1.0 / (2.0 * h * h);
  std::map<long long, double> cache;
  auto density = [&](long long g) {
    auto it = cache.find(g);
    if (it != cache.end()) return it->second;
    const double t = static_cast<double>(g) * step;
    double f = 0.0;
    for (const auto& p : pool) f += std::exp(-(t - p.t) * (t - p.t) * inv2h2);
    cache.emplace(g, f);
    return f;
  };

  // Modes without a candidate within 2h cannot gather support; scan only
  // grid points near candidates.
  std::vector<long long> grid;
  for (const auto& p : pool) {
    const auto lo = static_cast<long long>(std::floor((p.t - 2.0 * h) / step));
    const auto hi = static_cast<long long>(std::ceil((p.t + 2.0 * h) / step));
    for (long long g = lo; g <= hi; ++g) grid.push_back(g);
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  struct Accepted {
    double t;
    int support;
    double f;
  };
  std::vector<Accepted> accepted;
  for (long long g : grid) {
    const double f = density(g);
    if (!(f > density(g - 1) && f >= density(g + 1))) continue;
    const double tg = static_cast<double>(g) * step;
    std::vector<double> times;
    std::array<bool, 64> seen{};
    int distinct = 0;
    for (const auto& p : pool) {
      if (std::abs(p.t - tg) <= 2.0 * h) {
        times.push_back(p.t);
        const auto d = static_cast<std::size_t>(p.detector) & 63u;
        if (!seen[d]) {
          seen[d] = true;
          ++distinct;
        }
      }
    }
    if (distinct < params.min_support) continue;
    const std::size_t k = times.size();
    const double med = k % 2 ? times[k / 2] : 0.5 * (times[k / 2 - 1] + times[k / 2]);
    accepted.push_back({med, distinct, f});
  }

  std::vector<std::size_t> order(accepted.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return accepted[a].f > accepted[b].f; });
  std::vector<Accepted> kept;
  for (std::size_t i : order) {
    const auto& a = accepted[i];
    bool clash = false;
    for (const auto& k : kept) {
      if (std::abs(k.t - a.t) < params.refractory_s) {
        clash = true;
        break;
      }
    }
    if (!clash) kept.push_back(a);
  }
  std::sort(kept.begin(), kept.end(), [](const Accepted& a, const Accepted& b) { return a.t < b.t; });
  for (const auto& k : kept) {
    out.times_s.push_back(k.t);
    out.support.push_back(k.support);
  }
  return out;
}

/// All four detectors on one sub-episode.
inline std::array<PeakCandidates, 4> run_detectors(std::span<const double> x, double fs) {
  return {detect_energy(x, fs), detect_matched(x, fs), detect_pan_tompkins(x, fs), detect_maxima(x, fs)};
}

inline RPeaks detect_r_peaks(std::span<const double> x, double fs, const QrsParams& params = {}) {
  const auto cands = run_detectors(x, fs);
  return fuse_kde(cands, params);
}

}  // namespace icm
