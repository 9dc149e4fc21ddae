#pragma once

// RR-interval features (Lorenz plot histogram) and an exact t-SNE.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "icm/core.hpp"
#include "icm/parallel.hpp"
#include "icm/qrs.hpp"

namespace icm {

inline constexpr int kLorenzGrid = 5;
inline constexpr std::size_t kFeatureDim = kLorenzGrid * kLorenzGrid;

using FeatureVector = std::array<double, kFeatureDim>;

struct LorenzHistogram {
  std::array<int, kFeatureDim> counts{};  // row-major; row = y bin, column = x bin
  double bound_s = 0.5;
  int n_points = 0;

  int at(int row, int col) const { return counts[static_cast<std::size_t>(row * kLorenzGrid + col)]; }
  FeatureVector vector() const {
    FeatureVector v{};
    for (std::size_t i = 0; i < kFeatureDim; ++i) v[i] = counts[i];
    return v;
  }
};

inline std::vector<double> rr_series(std::span<const double> peak_times_s) {
  std::vector<double> rr;
  for (std::size_t i = 1; i < peak_times_s.size(); ++i) {
    const double d = peak_times_s[i] - peak_times_s[i - 1];
    if (!(d > 0.0)) throw Error("embed", "R-peak times must be strictly increasing");
    rr.push_back(d);
  }
  return rr;
}

inline std::vector<double> rr_series(const RPeaks& peaks) { return rr_series(peaks.times_s); }

struct LorenzPoint {
  double x = 0.0;  // dRR(i)
  double y = 0.0;  // dRR(i+1)
  bool operator==(const LorenzPoint&) const = default;
};

inline std::vector<double> drr_series(std::span<const double> rr) {
  std::vector<double> d;
  for (std::size_t i = 1; i < rr.size(); ++i) d.push_back(rr[i] - rr[i - 1]);
  return d;
}

inline std::vector<LorenzPoint> lorenz_points(std::span<const double> rr) {
  const auto d = drr_series(rr);
  std::vector<LorenzPoint> pts;
  for (std::size_t i = 1; i < d.size(); ++i) pts.push_back({d[i - 1], d[i]});
  return pts;
}

/// Equal-width bin of v over [-c, c]; values outside land in the edge bins.
inline int lorenz_bin(double v, double bound_s, int grid = kLorenzGrid) {
  const double width = 2.0 * bound_s / grid;
  const double b = std::floor((v + bound_s) / width);
  if (!(b >= 0.0)) return 0;  // also catches NaN
  return b >= grid ? grid - 1 : static_cast<int>(b);
}

inline LorenzHistogram histogram(std::span<const LorenzPoint> points, double bound_s) {
  if (!(bound_s > 0.0) || !std::isfinite(bound_s)) throw Error("embed", "histogram bound must be > 0");
  LorenzHistogram h;
  h.bound_s = bound_s;
  for (const auto& p : points) {
    const int col = lorenz_bin(p.x, bound_s), row = lorenz_bin(p.y, bound_s);
    ++h.counts[static_cast<std::size_t>(row * kLorenzGrid + col)];
  }
  h.n_points = static_cast<int>(points.size());
  return h;
}

inline LorenzHistogram histogram_from_peaks(std::span<const double> peak_times_s, double bound_s) {
  const auto rr = rr_series(peak_times_s);
  const auto pts = lorenz_points(rr);
  return histogram(pts, bound_s);
}

/// Histogram bound: 99th percentile of |dRR| rounded up to 0.1 s (at least 0.1 s).
inline double lorenz_bound(std::span<const double> abs_drr) {
  if (abs_drr.empty()) return 0.1;
  std::vector<double> v(abs_drr.begin(), abs_drr.end());
  for (auto& x : v) x = std::abs(x);
  std::sort(v.begin(), v.end());
  const double pos = 0.99 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double q = v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  const double tenths = std::ceil(q * 10.0 - 1e-9);
  return std::max(1.0, tenths) / 10.0;
}

// ---------------------------------------------------------------- t-SNE

struct TsneParams {
  double perplexity = 30.0;
  int iterations = 1000;
  double early_exaggeration = 12.0;
  int exaggeration_iters = 250;
  double learning_rate = 0.0;  // <= 0: n / 12
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
  bool use_gains = true;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

struct TsneResult {
  std::vector<std::array<double, 2>> y;
  std::vector<double> kl;  // KL(P||Q) evaluated at every iteration after exaggeration
};

namespace tsne_detail {

// Portable standard normal: Box-Muller over raw 53-bit uniforms.
class Gaussian {
 public:
  explicit Gaussian(std::uint64_t seed) : rng_(seed) {}
  double operator()() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1;
    do u1 = unit(); while (u1 <= 0.0);
    const double u2 = unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  double unit() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
  std::mt19937_64 rng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Conditional affinities for row i by bisection on the Gaussian precision so
// the row entropy matches log(perplexity).
inline void row_affinities(std::span<const double> d2, std::size_t i, double perplexity, std::span<double> out) {
  const double target = std::log(perplexity);
  double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
  const std::size_t n = d2.size();
  for (int iter = 0; iter < 200; ++iter) {
    double sum = 0.0, wsum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) {
        out[j] = 0.0;
        continue;
      }
      out[j] = std::exp(-beta * d2[j]);
      sum += out[j];
      wsum += out[j] * d2[j];
    }
    double entropy;
    if (sum <= 0.0) {
      entropy = 0.0;
    } else {
      entropy = std::log(sum) + beta * wsum / sum;
    }
    const double diff = entropy - target;
    if (sum > 0.0 && std::abs(diff) < 1e-5) break;
    if (diff > 0.0 && sum > 0.0) {
      lo = beta;
      beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
    } else {
      hi = beta;
      beta = 0.5 * (beta + lo);
    }
  }
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) sum += out[j];
  if (sum <= 0.0) {
    // Everything else infinitely far at this precision: spread uniformly.
    for (std::size_t j = 0; j < n; ++j) out[j] = j == i ? 0.0 : 1.0 / static_cast<double>(n - 1);
    return;
  }
  for (std::size_t j = 0; j < n; ++j) out[j] /= sum;
}

}  // namespace tsne_detail

/// Exact t-SNE of row vectors (all of the same dimension) to 2D.
template <typename Row>
TsneResult tsne(const std::vector<Row>& rows, const TsneParams& params = {}) {
  const std::size_t n = rows.size();
  if (!(params.perplexity > 0.0)) throw Error("embed", "perplexity must be > 0");
  if (static_cast<double>(n) <= 3.0 * params.perplexity)
    throw Error("embed", "t-SNE needs more than 3*perplexity points (have " + std::to_string(n) + ")");
  if (params.iterations < 0 || params.exaggeration_iters < 0) throw Error("embed", "negative iteration count");
  const std::size_t dim = rows.front().size();
  for (const auto& r : rows)
    if (r.size() != dim) throw Error("embed", "rows differ in dimension");
  bool identical = true;
  for (std::size_t i = 1; i < n && identical; ++i)
    for (std::size_t k = 0; k < dim; ++k)
      if (rows[i][k] != rows[0][k]) {
        identical = false;
        break;
      }
  if (identical) throw Error("embed", "all input vectors are identical; add jitter before embedding");

  const std::size_t workers = std::max<std::size_t>(1, params.workers);

  // Symmetric joint probabilities, stored densely.
  std::vector<double> P(n * n, 0.0);
  parallel_for(n, workers, [&](std::size_t i) {
    std::vector<double> d2(n);
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        const double d = static_cast<double>(rows[i][k]) - static_cast<double>(rows[j][k]);
        s += d * d;
      }
      d2[j] = s;
    }
    tsne_detail::row_affinities(d2, i, params.perplexity, std::span<double>(P.data() + i * n, n));
  });
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = std::max((P[i * n + j] + P[j * n + i]) / (2.0 * static_cast<double>(n)), 1e-12);
      P[i * n + j] = v;
      P[j * n + i] = v;
    }
    P[i * n + i] = 0.0;
  }
  double p_total = 0.0, p_log_p = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row_total = 0.0, row_plp = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      row_total += P[i * n + j];
      row_plp += P[i * n + j] * std::log(P[i * n + j]);
    }
    p_total += row_total;
    p_log_p += row_plp;
  }

  TsneResult res;
  res.y.resize(n);
  tsne_detail::Gaussian gauss(params.seed);
  for (auto& p : res.y) {
    p[0] = 1e-4 * gauss();
    p[1] = 1e-4 * gauss();
  }
  std::vector<std::array<double, 2>> update(n, {0.0, 0.0}), gains(n, {1.0, 1.0}), grad(n);
  // Per-row partial sums, reduced in index order for thread-count independence.
  std::vector<std::array<double, 2>> attr(n), rep(n);
  std::vector<double> zrow(n), plog_row(n);
  const double lr = params.learning_rate > 0.0 ? params.learning_rate : std::max(static_cast<double>(n) / 12.0, 1.0);

  for (int it = 0; it < params.iterations; ++it) {
    const bool exaggerate = it < params.exaggeration_iters;
    const double exag = exaggerate ? params.early_exaggeration : 1.0;
    const double momentum = exaggerate ? params.initial_momentum : params.final_momentum;
    if (it == params.exaggeration_iters && it > 0) {
      // Fresh optimizer state for the second phase; stale exaggerated steps
      // would otherwise overshoot.
      std::fill(update.begin(), update.end(), std::array<double, 2>{0.0, 0.0});
      std::fill(gains.begin(), gains.end(), std::array<double, 2>{1.0, 1.0});
    }

    parallel_for(n, workers, [&](std::size_t i) {
      double ax = 0.0, ay = 0.0, rx = 0.0, ry = 0.0, z = 0.0, pl = 0.0;
      const double yi0 = res.y[i][0], yi1 = res.y[i][1];
      const double* prow = P.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double dx = yi0 - res.y[j][0], dy = yi1 - res.y[j][1];
        const double num = 1.0 / (1.0 + dx * dx + dy * dy);
        z += num;
        const double pn = prow[j] * num;
        ax += pn * dx;
        ay += pn * dy;
        const double nn = num * num;
        rx += nn * dx;
        ry += nn * dy;
        pl -= prow[j] * std::log(num);
      }
      attr[i] = {ax, ay};
      rep[i] = {rx, ry};
      zrow[i] = z;
      plog_row[i] = pl;
    });
    double z = 0.0, neg_p_log_num = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      z += zrow[i];
      neg_p_log_num += plog_row[i];
    }
    if (!exaggerate) {
      // KL = sum p log p - sum p log num + (sum p) log Z
      res.kl.push_back(p_log_p + neg_p_log_num + p_total * std::log(z));
    }
    for (std::size_t i = 0; i < n; ++i)
      for (int d = 0; d < 2; ++d) grad[i][d] = 4.0 * (exag * attr[i][d] - rep[i][d] / z);

    for (std::size_t i = 0; i < n; ++i) {
      for (int d = 0; d < 2; ++d) {
        if (params.use_gains) {
          const bool same = (grad[i][d] > 0.0) == (update[i][d] > 0.0);
          gains[i][d] = same ? std::max(gains[i][d] * 0.8, 0.01) : gains[i][d] + 0.2;
        }
        update[i][d] = momentum * update[i][d] - lr * gains[i][d] * grad[i][d];
        res.y[i][d] += update[i][d];
      }
    }
    double mx = 0.0, my = 0.0;
    for (const auto& p : res.y) {
      mx += p[0];
      my += p[1];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    for (auto& p : res.y) {
      p[0] -= mx;
      p[1] -= my;
    }
  }
  return res;
}

/// Fraction of each point's k nearest low-dimensional neighbours that are
/// also close in the original space (1 = no intrusions).
template <typename Row>
double trustworthiness(const std::vector<Row>& high, const std::vector<std::array<double, 2>>& low, std::size_t k) {
  const std::size_t n = high.size();
  if (n != low.size() || n < 2 * k + 2) throw Error("embed", "trustworthiness: bad sizes");
  double penalty = 0.0;
  std::vector<std::size_t> order(n);
  std::vector<std::size_t> rank(n);
  std::vector<double> dh(n), dl(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < high[i].size(); ++c) {
        const double d = static_cast<double>(high[i][c]) - static_cast<double>(high[j][c]);
        s += d * d;
      }
      dh[j] = j == i ? -1.0 : s;
      const double ex = low[i][0] - low[j][0], ey = low[i][1] - low[j][1];
      dl[j] = j == i ? -1.0 : ex * ex + ey * ey;
    }
    for (std::size_t j = 0; j < n; ++j) order[j] = j;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dh[a] < dh[b]; });
    for (std::size_t r = 0; r < n; ++r) rank[order[r]] = r;  // self has rank 0
    for (std::size_t j = 0; j < n; ++j) order[j] = j;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dl[a] < dl[b]; });
    for (std::size_t r = 1; r <= k; ++r) {
      const std::size_t j = order[r];
      if (rank[j] > k) penalty += static_cast<double>(rank[j] - k);
    }
  }
  const double nd = static_cast<double>(n), kd = static_cast<double>(k);
  return 1.0 - 2.0 / (nd * kd * (2.0 * nd - 3.0 * kd - 1.0)) * penalty;
}

}  // namespace icm
