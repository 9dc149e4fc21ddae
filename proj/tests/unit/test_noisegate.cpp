#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "icm/data.hpp"
#include "icm/noisegate.hpp"

using namespace icm;

namespace {

const CeemdanNoiseBank& bank() {
  static const CeemdanNoiseBank b(1280, default_gate_emd_params());
  return b;
}

SubEpisode sinus_sub(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto se = synth_episode(random_spec(RhythmClass::Normal, "e", rng));
  return segment_episode(se.episode)[3];
}

}  // namespace

TEST(HighFreqSum, SumsFirstThree) {
  ImfStack st;
  st.imfs = {{1, 2}, {10, 20}, {100, 200}, {1000, 2000}};
  const auto hf = high_freq_sum(st, 3);
  EXPECT_EQ(hf.hn, (std::vector<double>{111, 222}));
  EXPECT_FALSE(hf.short_stack);
}

TEST(HighFreqSum, ShortStackFlagged) {
  ImfStack st;
  st.imfs = {{1, -1, 2}};
  const auto hf = high_freq_sum(st, 3);
  EXPECT_EQ(hf.hn, st.imfs[0]);
  EXPECT_TRUE(hf.short_stack);
  EXPECT_THROW(high_freq_sum(ImfStack{}, 3), Error);
}

TEST(Quantile, Type7) {
  EXPECT_DOUBLE_EQ(quantile({1, 2, 3, 4, 5}, 0.85), 4.4);
  EXPECT_DOUBLE_EQ(quantile({3, 1, 2}, 0.5), 2.0);
  EXPECT_THROW(quantile({}, 0.5), Error);
}

TEST(Nzc, ZeroSignal) {
  const std::vector<double> z(300, 0.0);
  const auto nzc = nzc_profile(z, {}, 128.0);
  for (int v : nzc) EXPECT_EQ(v, 0);
}

TEST(Nzc, FortyHertzTone) {
  std::vector<double> x(1280);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(2.0 * std::numbers::pi * 40.0 * (static_cast<double>(i) + 0.3) / 128.0);
  const auto nzc = nzc_profile(x, {}, 128.0);
  // Brute-force count over the same centred windows.
  // 30-sample window, centred as [i - 15, i + 15).
  for (std::size_t i = 15; i + 15 <= x.size(); i += 37) {
    int c = 0;
    for (std::size_t j = i - 15 + 1; j < i + 15; ++j) c += (x[j - 1] > 0) != (x[j] > 0);
    EXPECT_EQ(nzc[i], c);
    EXPECT_NEAR(nzc[i], 18.1, 1.0);  // 29 gaps at 0.625 crossings each
  }
  for (std::size_t i = 0; i < 15; ++i) EXPECT_EQ(nzc[i], 0);
  for (std::size_t i = x.size() - 14; i < x.size(); ++i) EXPECT_EQ(nzc[i], 0);
}

TEST(Nzc, BelowThresholdIsZero) {
  // Small oscillation everywhere, one tall spike: only windows containing the
  // spike exceed the 0.85 quantile.
  std::vector<double> x(600);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = (i % 2 ? 0.1 : -0.1);
  for (std::size_t i = 0; i < x.size(); i += 50) x[i] = 0.0;
  const auto nzc = nzc_profile(x, {}, 128.0);
  for (int v : nzc) EXPECT_EQ(v, 0);  // threshold = 0.1, nothing strictly above
}

TEST(Nzc, ExactZerosInheritSign) {
  std::vector<double> x(60, 0.0);
  x[20] = 1.0;
  x[25] = -1.0;  // zeros between carry +, one crossing into -
  x[30] = 2.0;
  const auto nzc = nzc_profile(x, {}, 128.0);
  EXPECT_EQ(nzc[30], 2);
}

TEST(Gate, StrictRunLength) {
  NoiseGateParams p;
  std::vector<int> nzc(1280, 0);
  for (std::size_t i = 100; i < 196; ++i) nzc[i] = 3;  // exactly 0.75 s
  EXPECT_TRUE(gate_segments(nzc, p, 128.0).empty());
  nzc[196] = 2;  // 97 samples
  const auto segs = gate_segments(nzc, p, 128.0);
  ASSERT_EQ(segs.size(), 1u);
  EXPECT_DOUBLE_EQ(segs[0].start_s, 100.0 / 128.0);
  EXPECT_DOUBLE_EQ(segs[0].end_s, 197.0 / 128.0);
}

TEST(Gate, HalfSecondRunNeverGates) {
  NoiseGateParams p;
  std::vector<int> nzc(1280, 0);
  for (std::size_t i = 300; i < 364; ++i) nzc[i] = 10;
  EXPECT_TRUE(gate_segments(nzc, p, 128.0).empty());
}

TEST(Gate, NzcOneIsNotNoise) {
  NoiseGateParams p;
  std::vector<int> nzc(1280, 1);
  EXPECT_TRUE(gate_segments(nzc, p, 128.0).empty());
}

TEST(Gate, ParamsValidated) {
  NoiseGateParams p;
  p.window_s = 0.1;  // 12.8 samples
  EXPECT_THROW(validate(p, 128.0), Error);
  p = {};
  p.quantile = 1.0;
  EXPECT_THROW(validate(p, 128.0), Error);
}

TEST(Detect, CleanSinusHasNoSegments) {
  for (std::uint64_t s = 1; s <= 4; ++s) {
    const auto sub = sinus_sub(s);
    EXPECT_TRUE(detect_noise(sub.samples, 128.0, {}, bank()).empty()) << "seed " << s;
  }
}

TEST(Detect, TwoSecondBurstFound) {
  auto sub = sinus_sub(7);
  std::mt19937_64 rng(1);
  const auto injected = inject_hf_burst(sub.samples, 128.0, 4.0, 2.0, 3.0, rng);
  const auto segs = detect_noise(sub.samples, 128.0, {}, bank());
  ASSERT_EQ(segs.size(), 1u);
  EXPECT_GE(jaccard(segs, {injected}), 0.5);
}

TEST(Detect, SegmentsSortedDisjointAndLong) {
  auto sub = sinus_sub(8);
  std::mt19937_64 rng(2);
  inject_hf_burst(sub.samples, 128.0, 1.0, 1.5, 4.0, rng);
  inject_hf_burst(sub.samples, 128.0, 6.0, 2.5, 4.0, rng);
  const auto segs = detect_noise(sub.samples, 128.0, {}, bank());
  ASSERT_EQ(segs.size(), 2u);
  for (std::size_t i = 0; i < segs.size(); ++i) {
    EXPECT_GT(segs[i].length(), 0.75);
    if (i) {
      EXPECT_GT(segs[i].start_s, segs[i - 1].end_s);
    }
  }
}

TEST(Detect, QuantileMonotone) {
  auto sub = sinus_sub(9);
  std::mt19937_64 rng(3);
  inject_hf_burst(sub.samples, 128.0, 3.0, 3.0, 3.0, rng);
  const auto stack = bank().decompose(sub.samples);
  const auto hn = high_freq_sum(stack, 3).hn;
  double prev = 1e9;
  for (double q : {0.5, 0.7, 0.85, 0.9, 0.95, 0.99}) {
    NoiseGateParams p;
    p.quantile = q;
    double total = 0.0;
    for (const auto& s : gate_segments(nzc_profile(hn, p, 128.0), p, 128.0)) total += s.length();
    EXPECT_LE(total, prev + 1e-12);
    prev = total;
  }
}

TEST(Detect, ScaleInvariant) {
  auto sub = sinus_sub(10);
  std::mt19937_64 rng(4);
  inject_hf_burst(sub.samples, 128.0, 2.0, 3.0, 3.0, rng);
  const auto a = detect_noise(sub.samples, 128.0, {}, bank());
  for (auto& v : sub.samples) v *= 7.5;
  const auto b = detect_noise(sub.samples, 128.0, {}, bank());
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_NEAR(a[i].start_s, b[i].start_s, 2.0 / 128.0);
    EXPECT_NEAR(a[i].end_s, b[i].end_s, 2.0 / 128.0);
  }
}

TEST(Detect, ShortInputRejected) {
  const CeemdanNoiseBank small(20, default_gate_emd_params());
  EXPECT_THROW(detect_noise(std::vector<double>(20, 1.0), 128.0, {}, small), Error);
}

TEST(Jaccard, Examples) {
  EXPECT_DOUBLE_EQ(jaccard({{0, 2}}, {{0, 2}}), 1.0);
  EXPECT_DOUBLE_EQ(jaccard({{0, 2}}, {{1, 3}}), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(jaccard({{0, 1}}, {{2, 3}}), 0.0);
  EXPECT_DOUBLE_EQ(jaccard({}, {}), 1.0);
  EXPECT_DOUBLE_EQ(jaccard({{0, 1}}, {}), 0.0);
  EXPECT_DOUBLE_EQ(jaccard({{0, 1}, {2, 3}}, {{0, 3}}), 2.0 / 3.0);
}
