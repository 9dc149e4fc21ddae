#pragma once

// DBSCAN on 2D points with a uniform-grid index, and the k-distance curve.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <unordered_map>
#include <utility>
#include <vector>

#include "icm/core.hpp"
#include "icm/parallel.hpp"

namespace icm {

using Point2 = std::array<double, 2>;

struct ClusterAssignment {
  std::vector<int> labels;  // -1 = outlier, clusters numbered from 0 in discovery order
  double eps = 0.75;
  int min_pts = 15;
  int n_clusters = 0;

  double outlier_fraction() const {
    if (labels.empty()) return 0.0;
    return static_cast<double>(std::count(labels.begin(), labels.end(), -1)) / static_cast<double>(labels.size());
  }
};

namespace cluster_detail {

inline double dist2(const Point2& a, const Point2& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1];
  return dx * dx + dy * dy;
}

class Grid {
 public:
  Grid(const std::vector<Point2>& pts, double cell) : pts_(pts), cell_(cell) {
    for (std::size_t i = 0; i < pts.size(); ++i) buckets_[key(cell_of(pts[i][0]), cell_of(pts[i][1]))].push_back(i);
  }

  // Indices within distance r (<= cell) of point i, in ascending index order.
  std::vector<std::size_t> neighbours(std::size_t i, double r) const {
    std::vector<std::size_t> out;
    const double r2 = r * r;
    const auto cx = cell_of(pts_[i][0]), cy = cell_of(pts_[i][1]);
    for (std::int64_t dx = -1; dx <= 1; ++dx) {
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        auto it = buckets_.find(key(cx + dx, cy + dy));
        if (it == buckets_.end()) continue;
        for (std::size_t j : it->second)
          if (dist2(pts_[i], pts_[j]) <= r2) out.push_back(j);
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  std::int64_t cell_of(double v) const { return static_cast<std::int64_t>(std::floor(v / cell_)); }
  // Keys compare as exact cell pairs; the hash only spreads them. A lossy
  // integer key would merge distant cells and double-count neighbours.
  using Key = std::pair<std::int64_t, std::int64_t>;
  static Key key(std::int64_t x, std::int64_t y) { return {x, y}; }
  struct Hash {
    std::size_t operator()(const Key& k) const {
      const auto h = static_cast<std::uint64_t>(k.first) * 0x9E3779B97F4A7C15ULL ^ static_cast<std::uint64_t>(k.second);
      return static_cast<std::size_t>(h ^ (h >> 29));
    }
  };
  const std::vector<Point2>& pts_;
  double cell_;
  std::unordered_map<Key, std::vector<std::size_t>, Hash> buckets_;
};

}  // namespace cluster_detail

/// Classic DBSCAN. The neighbourhood (distance <= eps) includes the point
/// itself. Points are scanned in index order; a border point joins the first
/// cluster whose expansion reaches it.
inline ClusterAssignment dbscan(const std::vector<Point2>& pts, double eps = 0.75, int min_pts = 15,
                                std::size_t workers = 1) {
  if (!(eps > 0.0) || !std::isfinite(eps)) throw Error("cluster", "eps must be > 0");
  if (min_pts < 1) throw Error("cluster", "min_pts must be >= 1");
  for (const auto& p : pts)
    if (!std::isfinite(p[0]) || !std::isfinite(p[1])) throw Error("cluster", "non-finite coordinate");
  const std::size_t n = pts.size();
  ClusterAssignment out;
  out.eps = eps;
  out.min_pts = min_pts;
  out.labels.assign(n, -1);
  if (n == 0) return out;

  const cluster_detail::Grid grid(pts, eps);
  std::vector<std::vector<std::size_t>> nbrs(n);
  parallel_for(n, workers, [&](std::size_t i) { nbrs[i] = grid.neighbours(i, eps); });
  std::vector<char> core(n);
  for (std::size_t i = 0; i < n; ++i) core[i] = nbrs[i].size() >= static_cast<std::size_t>(min_pts);

  int next_id = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (out.labels[i] != -1 || !core[i]) continue;
    const int id = next_id++;
    out.labels[i] = id;
    std::deque<std::size_t> queue{i};
    while (!queue.empty()) {
      const std::size_t p = queue.front();
      queue.pop_front();
      for (std::size_t q : nbrs[p]) {
        if (out.labels[q] != -1) continue;
        out.labels[q] = id;
        if (core[q]) queue.push_back(q);
      }
    }
  }
  out.n_clusters = next_id;
  return out;
}

/// Distance from each point to its k-th nearest other point, sorted descending.
inline std::vector<double> k_distance(const std::vector<Point2>& pts, int k = 4, std::size_t workers = 1) {
  if (k < 1) throw Error("cluster", "k must be >= 1");
  const std::size_t n = pts.size();
  if (n <= static_cast<std::size_t>(k)) throw Error("cluster", "k-distance needs more than k points");
  std::vector<double> out(n);
  parallel_for(n, workers, [&](std::size_t i) {
    std::vector<double> d;
    d.reserve(n - 1);
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) d.push_back(cluster_detail::dist2(pts[i], pts[j]));
    std::nth_element(d.begin(), d.begin() + (k - 1), d.end());
    out[i] = std::sqrt(d[static_cast<std::size_t>(k - 1)]);
  });
  std::sort(out.begin(), out.end(), std::greater<>());
  return out;
}

}  // namespace icm
