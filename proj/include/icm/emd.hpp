#pragma once

// Empirical Mode Decomposition with fixed-count sifting, plus the complete
// ensemble variant with adaptive noise (CEEMDAN).
//
// Envelopes are natural cubic splines through the local extrema, with the two
// outermost extrema on each side mirrored about the signal end points.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "icm/core.hpp"

namespace icm {

struct ImfStack {
  struct Meta {
    int ensemble_size = 1;
    int sift_count = 10;
    double noise_std_frac = 0.0;
    // Set when the ensemble collapses to plain EMD (zero noise, ensemble > 1).
    bool degenerate = false;
  };

  std::vector<std::vector<double>> imfs;  // imfs[0] is the highest-frequency mode
  std::vector<double> residual;
  Meta meta;

  std::vector<double> reconstruct() const {
    std::vector<double> out = residual;
    for (const auto& imf : imfs)
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += imf[i];
    return out;
  }
};

namespace emd_detail {

struct Extrema {
  std::vector<std::size_t> maxima;
  std::vector<std::size_t> minima;
};

inline void find_extrema(std::span<const double> x, Extrema& ex) {
  ex.maxima.clear();
  ex.minima.clear();
  const std::size_t n = x.size();
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (x[i - 1] < x[i] && x[i] >= x[i + 1]) {
      ex.maxima.push_back(i);
    } else if (x[i - 1] > x[i] && x[i] <= x[i + 1]) {
      ex.minima.push_back(i);
    }
  }
}

/// Scratch buffers reused across sifting passes.
struct Workspace {
  Extrema ex;
  std::vector<double> kx, ky, m2, cp, dp;
  std::vector<double> upper, lower;
};

// Natural cubic spline through (kx, ky), evaluated at integer positions 0..n-1.
inline void spline_eval(Workspace& ws, std::size_t n, std::vector<double>& out) {
  const std::size_t m = ws.kx.size();
  const auto& kx = ws.kx;
  const auto& ky = ws.ky;
  auto& m2 = ws.m2;
  m2.assign(m, 0.0);
  if (m >= 3) {
    // Thomas algorithm for interior second derivatives.
    auto& cp = ws.cp;
    auto& dp = ws.dp;
    cp.assign(m, 0.0);
    dp.assign(m, 0.0);
    for (std::size_t i = 1; i + 1 < m; ++i) {
      const double h0 = kx[i] - kx[i - 1];
      const double h1 = kx[i + 1] - kx[i];
      const double a = h0;
      const double b = 2.0 * (h0 + h1);
      const double c = h1;
      const double d = 6.0 * ((ky[i + 1] - ky[i]) / h1 - (ky[i] - ky[i - 1]) / h0);
      const double denom = b - a * cp[i - 1];
      cp[i] = c / denom;
      dp[i] = (d - a * dp[i - 1]) / denom;
    }
    for (std::size_t i = m - 2; i >= 1; --i) {
      m2[i] = dp[i] - cp[i] * m2[i + 1];
    }
  }
  out.resize(n);
  std::size_t seg = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double x = static_cast<double>(t);
    while (seg + 2 < m && kx[seg + 1] < x) ++seg;
    const double h = kx[seg + 1] - kx[seg];
    const double a = (kx[seg + 1] - x) / h;
    const double b = (x - kx[seg]) / h;
    out[t] = a * ky[seg] + b * ky[seg + 1] +
             ((a * a * a - a) * m2[seg] + (b * b * b - b) * m2[seg + 1]) * (h * h) / 6.0;
  }
}

// Knots from extrema indices with two mirrored extrema at each end.
inline void build_knots(std::span<const double> x, const std::vector<std::size_t>& idx,
                        Workspace& ws) {
  const std::size_t n = x.size();
  const double last = static_cast<double>(n - 1);
  ws.kx.clear();
  ws.ky.clear();
  const std::size_t mirror = std::min<std::size_t>(2, idx.size());
  for (std::size_t j = mirror; j-- > 0;) {
    ws.kx.push_back(-static_cast<double>(idx[j]));
    ws.ky.push_back(x[idx[j]]);
  }
  for (std::size_t i : idx) {
    ws.kx.push_back(static_cast<double>(i));
    ws.ky.push_back(x[i]);
  }
  for (std::size_t j = 0; j < mirror; ++j) {
    const std::size_t i = idx[idx.size() - 1 - j];
    ws.kx.push_back(2.0 * last - static_cast<double>(i));
    ws.ky.push_back(x[i]);
  }
}

// One sifting pass in place. Returns false (h untouched) when h lacks a
// maximum or a minimum.
inline bool sift_once(std::span<double> h, Workspace& ws) {
  find_extrema(h, ws.ex);
  if (ws.ex.maxima.empty() || ws.ex.minima.empty()) return false;
  build_knots(h, ws.ex.maxima, ws);
  spline_eval(ws, h.size(), ws.upper);
  build_knots(h, ws.ex.minima, ws);
  spline_eval(ws, h.size(), ws.lower);
  for (std::size_t i = 0; i < h.size(); ++i) h[i] -= 0.5 * (ws.upper[i] + ws.lower[i]);
  return true;
}

inline std::size_t count_extrema(std::span<const double> x) {
  std::size_t c = 0;
  for (std::size_t i = 1; i + 1 < x.size(); ++i) {
    if ((x[i - 1] < x[i] && x[i] >= x[i + 1]) || (x[i - 1] > x[i] && x[i] <= x[i + 1])) ++c;
  }
  return c;
}

// Residual stop rule: monotone or fewer than 3 extrema.
inline bool is_residual(std::span<const double> r) { return count_extrema(r) < 3; }

// First IMF by `iters` sifting passes. Returns nullopt if x has < 2 extrema.
inline std::optional<std::vector<double>> first_imf(std::span<const double> x, int iters,
                                                    Workspace& ws) {
  std::vector<double> h(x.begin(), x.end());
  for (int it = 0; it < iters; ++it) {
    if (!sift_once(h, ws)) {
      if (it == 0) return std::nullopt;
      break;
    }
  }
  return h;
}

inline double stddev(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  return std::sqrt(var / static_cast<double>(x.size()));
}

inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace emd_detail

/// One sifting pass: subtracts the mean of the cubic-spline envelopes.
/// Returns nullopt when the signal has fewer than two extrema (a monotone
/// residual).
inline std::optional<std::vector<double>> sift(std::span<const double> signal) {
  if (signal.size() < 4) return std::nullopt;
  emd_detail::Workspace ws;
  if (emd_detail::count_extrema(signal) < 2) return std::nullopt;
  std::vector<double> h(signal.begin(), signal.end());
  if (!emd_detail::sift_once(h, ws)) return std::nullopt;
  return h;
}

inline constexpr int kDefaultMaxImfs = 12;

/// Plain EMD with a fixed number of sifting passes per IMF.
inline ImfStack emd_decompose(std::span<const double> signal, int max_sift = 10,
                              int max_imfs = kDefaultMaxImfs) {
  if (signal.empty()) throw Error("emd", "empty signal");
  ImfStack out;
  out.meta = {1, max_sift, 0.0, false};
  std::vector<double> r(signal.begin(), signal.end());
  emd_detail::Workspace ws;
  while (static_cast<int>(out.imfs.size()) < max_imfs && r.size() >= 4 &&
         !emd_detail::is_residual(r)) {
    auto imf = emd_detail::first_imf(r, max_sift, ws);
    if (!imf) break;
    for (std::size_t i = 0; i < r.size(); ++i) r[i] -= (*imf)[i];
    out.imfs.push_back(std::move(*imf));
  }
  out.residual = std::move(r);
  return out;
}

struct CeemdanParams {
  int ensemble = 100;
  double noise_std_frac = 0.2;
  int max_sift = 10;
  int max_imfs = kDefaultMaxImfs;
  std::uint64_t seed = 0;
};

/// Pre-decomposed white-noise realizations for a fixed signal length. The
/// bank depends only on (length, params) so one bank serves every signal of
/// that length; it is immutable after construction and safe to share.
class CeemdanNoiseBank {
 public:
  CeemdanNoiseBank(std::size_t length, const CeemdanParams& params)
      : length_(length), params_(params) {
    if (params.ensemble < 1) throw Error("emd", "ensemble must be >= 1");
    if (!(params.noise_std_frac >= 0.0)) throw Error("emd", "noise_std_frac must be >= 0");
    if (degenerate()) return;
    realizations_.resize(static_cast<std::size_t>(params.ensemble));
    for (std::size_t i = 0; i < realizations_.size(); ++i) {
      std::mt19937_64 rng(emd_detail::splitmix64(params.seed ^ emd_detail::splitmix64(i + 1)));
      std::normal_distribution<double> normal(0.0, 1.0);
      std::vector<double> w(length);
      for (auto& v : w) v = normal(rng);
      // Unit variance exactly, so the first stage adds noise_std_frac * std(x).
      const double s = emd_detail::stddev(w);
      if (s > 0.0)
        for (auto& v : w) v /= s;
      auto& real = realizations_[i];
      // Stage k (k >= 2) perturbs with noise mode k-1; the last stage never
      // needs mode max_imfs.
      auto stack = emd_decompose(w, params.max_sift, std::max(0, params.max_imfs - 1));
      real.modes = std::move(stack.imfs);
      real.mode_std.reserve(real.modes.size());
      for (const auto& m : real.modes) real.mode_std.push_back(emd_detail::stddev(m));
      real.white = std::move(w);
    }
  }

  std::size_t length() const { return length_; }
  const CeemdanParams& params() const { return params_; }
  bool degenerate() const { return params_.noise_std_frac == 0.0; }

  ImfStack decompose(std::span<const double> signal) const {
    if (signal.size() != length_) throw Error("emd", "signal length does not match noise bank");
    if (signal.empty()) throw Error("emd", "empty signal");
    if (degenerate()) {
      auto out = emd_decompose(signal, params_.max_sift, params_.max_imfs);
      out.meta = {params_.ensemble, params_.max_sift, 0.0, params_.ensemble > 1};
      return out;
    }

    ImfStack out;
    out.meta = {params_.ensemble, params_.max_sift, params_.noise_std_frac, false};
    std::vector<double> r(signal.begin(), signal.end());
    std::vector<double> perturbed(length_), mean(length_);
    emd_detail::Workspace ws;
    const double inv_ensemble = 1.0 / static_cast<double>(realizations_.size());

    while (static_cast<int>(out.imfs.size()) < params_.max_imfs && length_ >= 4 &&
           !emd_detail::is_residual(r)) {
      const std::size_t stage = out.imfs.size();
      const double scale = params_.noise_std_frac * emd_detail::stddev(r);
      std::fill(mean.begin(), mean.end(), 0.0);
      // Fixed summation order over realizations keeps the result bit-stable.
      for (const auto& real : realizations_) {
        const std::vector<double>* noise = nullptr;
        double beta = 0.0;
        if (stage == 0) {
          noise = &real.white;
          beta = scale;
        } else if (stage - 1 < real.modes.size() && real.mode_std[stage - 1] > 0.0) {
          noise = &real.modes[stage - 1];
          beta = scale / real.mode_std[stage - 1];
        }
        for (std::size_t i = 0; i < length_; ++i)
          perturbed[i] = r[i] + (noise ? beta * (*noise)[i] : 0.0);
        auto imf = emd_detail::first_imf(perturbed, params_.max_sift, ws);
        if (!imf) continue;  // no oscillation: contributes a zero mode
        for (std::size_t i = 0; i < length_; ++i) mean[i] += (*imf)[i];
      }
      for (auto& v : mean) v *= inv_ensemble;
      for (std::size_t i = 0; i < length_; ++i) r[i] -= mean[i];
      out.imfs.push_back(mean);
    }
    out.residual = std::move(r);
    return out;
  }

 private:
  struct Realization {
    std::vector<double> white;
    std::vector<std::vector<double>> modes;
    std::vector<double> mode_std;
  };

  std::size_t length_;
  CeemdanParams params_;
  std::vector<Realization> realizations_;
};

/// Complete ensemble EMD with adaptive noise. Deterministic given the seed.
inline ImfStack ceemdan(std::span<const double> signal, const CeemdanParams& params = {}) {
  if (signal.empty()) throw Error("emd", "empty signal");
  return CeemdanNoiseBank(signal.size(), params).decompose(signal);
}

}  // namespace icm
