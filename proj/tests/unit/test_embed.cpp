#include <gtest/gtest.h>

#include <random>

#include "icm/embed.hpp"

using namespace icm;

namespace {

std::vector<std::vector<double>> blobs(std::size_t per, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<std::vector<double>> rows;
  for (int b = 0; b < 3; ++b) {
    std::vector<double> c(dim);
    for (auto& v : c) v = 10.0 * n(rng);
    for (std::size_t i = 0; i < per; ++i) {
      auto r = c;
      for (auto& v : r) v += n(rng);
      rows.push_back(std::move(r));
    }
  }
  return rows;
}

TsneParams quick(std::uint64_t seed = 1) {
  TsneParams p;
  p.perplexity = 10.0;
  p.iterations = 400;
  p.exaggeration_iters = 100;
  p.seed = seed;
  return p;
}

}  // namespace

TEST(Rr, Intervals) {
  const std::vector<double> t = {0.0, 0.8, 1.6, 2.5};
  const auto rr = rr_series(t);
  ASSERT_EQ(rr.size(), 3u);
  EXPECT_NEAR(rr[2], 0.9, 1e-12);
  EXPECT_THROW(rr_series(std::vector<double>{1.0, 1.0}), Error);
  EXPECT_TRUE(rr_series(std::vector<double>{1.0}).empty());
}

TEST(Lorenz, PointsFromRr) {
  const std::vector<double> rr = {0.8, 0.8, 0.9, 0.7};
  const auto pts = lorenz_points(rr);
  ASSERT_EQ(pts.size(), 2u);
  EXPECT_NEAR(pts[0].x, 0.0, 1e-12);
  EXPECT_NEAR(pts[0].y, 0.1, 1e-12);
  EXPECT_NEAR(pts[1].x, 0.1, 1e-12);
  EXPECT_NEAR(pts[1].y, -0.2, 1e-12);
}

TEST(Lorenz, RegularRhythmFillsCentre) {
  std::vector<double> t;
  for (int i = 0; i < 14; ++i) t.push_back(0.75 * i);
  const auto h = histogram_from_peaks(t, 0.5);
  EXPECT_EQ(h.at(2, 2), 11);
  EXPECT_EQ(h.n_points, 11);
  int total = 0;
  for (int c : h.counts) total += c;
  EXPECT_EQ(total, 11);
}

TEST(Lorenz, BinEdgesAndClipping) {
  EXPECT_EQ(lorenz_bin(-0.5, 0.5), 0);
  EXPECT_EQ(lorenz_bin(-0.3, 0.5), 1);  // left edge belongs to the bin on its right
  EXPECT_EQ(lorenz_bin(0.0, 0.5), 2);
  EXPECT_EQ(lorenz_bin(0.5, 0.5), 4);
  EXPECT_EQ(lorenz_bin(9.0, 0.5), 4);
  EXPECT_EQ(lorenz_bin(-9.0, 0.5), 0);
}

TEST(Lorenz, RowIsSuccessorColumnIsCurrent) {
  const std::vector<LorenzPoint> pts = {{-0.45, 0.45}};
  const auto h = histogram(pts, 0.5);
  EXPECT_EQ(h.at(4, 0), 1);
  EXPECT_EQ(h.vector()[20], 1.0);
}

TEST(Lorenz, TooFewBeatsGiveZeroVector) {
  const auto h = histogram_from_peaks(std::vector<double>{1.0, 2.0, 3.0}, 0.5);
  EXPECT_EQ(h.n_points, 0);
  for (double v : h.vector()) EXPECT_EQ(v, 0.0);
}

TEST(Lorenz, InvalidBound) {
  EXPECT_THROW(histogram(std::vector<LorenzPoint>{}, 0.0), Error);
}

TEST(Lorenz, BoundRoundsUpToTenths) {
  EXPECT_DOUBLE_EQ(lorenz_bound(std::vector<double>{}), 0.1);
  EXPECT_DOUBLE_EQ(lorenz_bound(std::vector<double>(50, 0.01)), 0.1);
  EXPECT_DOUBLE_EQ(lorenz_bound(std::vector<double>(50, 0.3)), 0.3);
  EXPECT_DOUBLE_EQ(lorenz_bound(std::vector<double>(50, -0.31)), 0.4);
}

TEST(Tsne, RejectsTooFewOrIdentical) {
  std::vector<std::vector<double>> rows(90, std::vector<double>{1.0, 2.0});
  EXPECT_THROW(tsne(rows), Error);  // 90 <= 3 * 30
  rows.resize(200, std::vector<double>{1.0, 2.0});
  try {
    tsne(rows);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("jitter"), std::string::npos);
  }
}

TEST(Tsne, DeterministicAndWorkerIndependent) {
  const auto rows = blobs(20, 5, 3);
  auto p = quick(7);
  const auto a = tsne(rows, p);
  const auto b = tsne(rows, p);
  p.workers = 3;
  const auto c = tsne(rows, p);
  EXPECT_EQ(a.y, b.y);
  EXPECT_EQ(a.y, c.y);
  EXPECT_EQ(a.kl, c.kl);
  p.seed = 8;
  EXPECT_NE(tsne(rows, p).y, a.y);
}

TEST(Tsne, KlRecordedAfterExaggeration) {
  const auto rows = blobs(20, 5, 4);
  const auto r = tsne(rows, quick());
  ASSERT_EQ(r.kl.size(), 300u);
  EXPECT_LT(r.kl.back(), r.kl.front());
  EXPECT_GE(r.kl.back(), 0.0);
}

TEST(Tsne, SeparatesBlobs) {
  const auto rows = blobs(30, 10, 5);
  const auto r = tsne(rows, quick());
  EXPECT_GT(trustworthiness(rows, r.y, 5), 0.9);
  // Every point's nearest embedded neighbour comes from its own blob.
  int same = 0;
  for (std::size_t i = 0; i < r.y.size(); ++i) {
    std::size_t best = i == 0 ? 1 : 0;
    double bd = 1e300;
    for (std::size_t j = 0; j < r.y.size(); ++j) {
      if (j == i) continue;
      const double dx = r.y[i][0] - r.y[j][0], dy = r.y[i][1] - r.y[j][1];
      if (dx * dx + dy * dy < bd) {
        bd = dx * dx + dy * dy;
        best = j;
      }
    }
    same += (i / 30) == (best / 30);
  }
  EXPECT_EQ(same, 90);
}

TEST(Trustworthiness, IdentityEmbeddingIsPerfect) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::array<double, 2>> low;
  std::vector<std::vector<double>> high;
  for (int i = 0; i < 40; ++i) {
    low.push_back({u(rng), u(rng)});
    high.push_back({low.back()[0], low.back()[1]});
  }
  EXPECT_DOUBLE_EQ(trustworthiness(high, low, 5), 1.0);
  std::shuffle(low.begin(), low.end(), rng);
  EXPECT_LT(trustworthiness(high, low, 5), 0.8);
}
