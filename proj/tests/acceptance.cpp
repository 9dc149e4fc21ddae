// Acceptance driver: one PASS/FAIL line per criterion.
//
//   icm_acceptance [--cli PATH] [--workdir DIR] [criterion ...]
//
// With no criterion numbers every criterion runs. Exit status is non-zero if
// any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "icm/classify.hpp"
#include "icm/cluster.hpp"
#include "icm/data.hpp"
#include "icm/embed.hpp"
#include "icm/emd.hpp"
#include "icm/eval.hpp"
#include "icm/noisegate.hpp"
#include "icm/qrs.hpp"
#include "oracles.hpp"

using namespace icm;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

std::string g_cli;
fs::path g_workdir;
std::size_t g_workers = 1;

SubEpisode random_sub(RhythmClass rhythm, std::mt19937_64& rng, bool whole_event = false) {
  auto spec = random_spec(rhythm, "a", rng);
  if (whole_event && rhythm != RhythmClass::Normal) {
    spec.event_first_window = 0;
    spec.event_window_count = 6;
  }
  const auto se = synth_episode(spec);
  const auto subs = segment_episode(se.episode);
  return subs[std::uniform_int_distribution<std::size_t>(0, subs.size() - 1)(rng)];
}

double rel_error(const std::vector<double>& x, const std::vector<double>& y) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    num += (x[i] - y[i]) * (x[i] - y[i]);
    den += x[i] * x[i];
  }
  return std::sqrt(num / den);
}

// ------------------------------------------------------------ 1

Outcome decomposition_completeness() {
  std::mt19937_64 rng(101);
  std::vector<std::vector<double>> xs;
  for (int i = 0; i < 100; ++i) xs.push_back(random_sub(RhythmClass::Normal, rng).samples);

  const auto t0 = Clock::now();
  double worst_emd = 0.0, worst_ceemdan = 0.0;
  CeemdanParams cp;  // ensemble 100, 10 sifts per stage
  cp.seed = 5;
  const CeemdanNoiseBank bank(1280, cp);
  for (const auto& x : xs) {
    worst_emd = std::max(worst_emd, rel_error(x, emd_decompose(x).reconstruct()));
    worst_ceemdan = std::max(worst_ceemdan, rel_error(x, bank.decompose(x).reconstruct()));
  }
  const double t = seconds_since(t0);
  const bool ok = worst_emd < 1e-9 && worst_ceemdan < 1e-6 && t < 120.0;
  return {ok, fmt("worst rel. error EMD %.2e, CEEMDAN %.2e; %.1f s for 100 sub-episodes", worst_emd, worst_ceemdan, t)};
}

// ------------------------------------------------------------ 2

Outcome noise_gate() {
  const auto t0 = Clock::now();
  const CeemdanNoiseBank bank(1280, default_gate_emd_params());
  const NoiseGateParams gp;
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  double jac_sum = 0.0;
  for (int i = 0; i < 200; ++i) {
    auto sub = random_sub(RhythmClass::Normal, rng);
    const double dur = 1.0 + 2.0 * uni(rng);
    const double start = 0.5 + (10.0 - dur - 1.0) * uni(rng);
    const auto injected = inject_hf_burst(sub.samples, 128.0, start, dur, 3.0 + 2.0 * uni(rng), rng);
    jac_sum += jaccard(detect_noise(sub.samples, 128.0, gp, bank), {injected});
  }
  const double mean_jac = jac_sum / 200.0;

  int short_hits = 0;
  double longest_short = 0.0;
  for (int i = 0; i < 100; ++i) {
    auto sub = random_sub(RhythmClass::Normal, rng);
    const double start = 1.0 + 8.0 * uni(rng);
    inject_hf_burst(sub.samples, 128.0, start, 0.5, 3.0 + 2.0 * uni(rng), rng);
    const auto segs = detect_noise(sub.samples, 128.0, gp, bank);
    if (!segs.empty()) ++short_hits;
    for (const auto& s : segs) longest_short = std::max(longest_short, s.length());
  }

  double false_s = 0.0, total_s = 0.0;
  for (int i = 0; i < 200; ++i) {
    const auto sub = random_sub(RhythmClass::Normal, rng);
    for (const auto& s : detect_noise(sub.samples, 128.0, gp, bank)) false_s += s.length();
    total_s += sub.duration_s();
  }
  const double false_frac = false_s / total_s;
  const double t = seconds_since(t0);
  const bool ok = mean_jac >= 0.5 && short_hits == 0 && false_frac < 0.01 && t < 300.0;
  return {ok, fmt("mean Jaccard %.3f; 0.5 s bursts detected in %d/100 (longest segment %.3f s); "
                  "clean false-detection %.3f%%; %.1f s",
                  mean_jac, short_hits, longest_short, 100.0 * false_frac, t)};
}

// ------------------------------------------------------------ 3

Outcome qrs_fusion() {
  std::mt19937_64 rng(303);
  oracle::Match m;
  for (auto rhythm : {RhythmClass::Normal, RhythmClass::Tachycardia}) {
    for (int i = 0; i < 100; ++i) {
      auto spec = random_spec(rhythm, "q", rng);
      if (rhythm != RhythmClass::Normal) {
        spec.event_first_window = 0;
        spec.event_window_count = 6;
      }
      const auto se = synth_episode(spec);
      const auto subs = segment_episode(se.episode);
      const std::size_t k = static_cast<std::size_t>(i) % subs.size();
      const double t0 = 10.0 * static_cast<double>(k);
      // Beats too close to the window edge cannot be matched either way.
      std::vector<double> truth, det;
      for (double t : se.truth.r_peaks_s)
        if (t >= t0 + 0.15 && t < t0 + 9.85) truth.push_back(t - t0);
      for (double t : detect_r_peaks(subs[k].samples, 128.0).times_s)
        if (t >= 0.15 && t < 9.85) det.push_back(t);
      oracle::match_beats(truth, det, 0.05, m);
    }
  }
  const double se = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
  const double ppv = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp);

  int perm_fail = 0, oracle_fail = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    auto c = oracle::random_candidates(rng);
    const auto ref = fuse_kde(c);
    const auto want = oracle::fuse(c, {});
    if (ref.times_s != want.times_s || ref.support != want.support) ++oracle_fail;
    std::shuffle(c.begin(), c.end(), rng);
    const auto got = fuse_kde(c);
    if (got.times_s != ref.times_s || got.support != ref.support) ++perm_fail;
  }
  const bool ok = se >= 0.99 && ppv >= 0.99 && perm_fail == 0 && oracle_fail == 0;
  return {ok, fmt("Se %.4f, PPV %.4f over %lld beats; fusion: %d permutation and %d brute-force mismatches in 1000",
                  se, ppv, m.tp + m.fn, perm_fail, oracle_fail)};
}

// ------------------------------------------------------------ 4

Outcome binomial() {
  double worst = 0.0;
  long long cases = 0;
  bool k0_exact = true;
  const std::vector<int> ns = {1, 2, 3, 5, 10, 17, 50, 100, 250, 500, 999, 1000};
  const std::vector<double> ps = {1e-6, 1e-3, 0.01, 0.05, 0.1, 0.2, 0.3, 0.49, 0.5, 0.7, 0.9, 0.99, 0.999};
  for (int n : ns)
    for (double p : ps) {
      const auto want = oracle::binom_tails(n, p);
      for (int k = 0; k <= n; ++k) {
        const double got = binom_tail(k, n, p);
        const long double w = want[static_cast<std::size_t>(k)];
        if (k == 0 && got != 1.0) k0_exact = false;
        if (w < 1e-300L) continue;  // below double range
        worst = std::max(worst, static_cast<double>(std::fabs((static_cast<long double>(got) - w) / w)));
        ++cases;
      }
    }
  const bool ok = worst <= 1e-12 && k0_exact;
  return {ok, fmt("worst relative error %.2e over %lld (k, n, p); k=0 exact: %s", worst, cases,
                  k0_exact ? "yes" : "no")};
}

// ------------------------------------------------------------ 5

Outcome dbscan_exact() {
  std::mt19937_64 rng(505);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  int mismatches = 0;
  for (int t = 0; t < 200; ++t) {
    const auto n = std::uniform_int_distribution<std::size_t>(1, 500)(rng);
    double eps = 0.1 + 1.9 * uni(rng);
    int min_pts = std::uniform_int_distribution<int>(2, 30)(rng);
    if (t % 10 == 0) {
      eps = 0.75;
      min_pts = 15;
    }
    // Blobs plus background so both dense and sparse regimes show up.
    const int blobs = std::uniform_int_distribution<int>(1, 6)(rng);
    const double span = 5.0 + 25.0 * uni(rng);
    std::vector<Point2> centres;
    for (int b = 0; b < blobs; ++b) centres.push_back({span * uni(rng), span * uni(rng)});
    std::normal_distribution<double> g(0.0, 0.3 + 1.5 * uni(rng));
    std::vector<Point2> pts(n);
    for (auto& p : pts) {
      if (uni(rng) < 0.2) {
        p = {span * uni(rng), span * uni(rng)};
      } else {
        const auto& c = centres[std::uniform_int_distribution<int>(0, blobs - 1)(rng)];
        p = {c[0] + g(rng), c[1] + g(rng)};
      }
    }
    const auto got = dbscan(pts, eps, min_pts).labels;
    if (!oracle::same_partition(got, oracle::dbscan(pts, eps, min_pts))) ++mismatches;
  }
  return {mismatches == 0, fmt("%d/200 partitions differ from the brute-force reference", mismatches)};
}

// ------------------------------------------------------------ 6

Outcome tsne_quality() {
  std::mt19937_64 rng(606);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<std::vector<double>> x;
  for (int c = 0; c < 3; ++c) {
    std::vector<double> centre(25);
    for (auto& v : centre) v = 8.0 * g(rng);
    for (int i = 0; i < 100; ++i) {
      std::vector<double> row(25);
      for (std::size_t d = 0; d < 25; ++d) row[d] = centre[d] + g(rng);
      x.push_back(std::move(row));
    }
  }
  TsneParams p;
  p.seed = 17;
  const auto a = tsne(x, p);
  const auto b = tsne(x, p);
  const double tw = trustworthiness(x, a.y, 10);
  std::size_t rises = 0;
  double worst_rise = 0.0;
  for (std::size_t i = 1; i < a.kl.size(); ++i)
    if (a.kl[i] > a.kl[i - 1]) {
      ++rises;
      worst_rise = std::max(worst_rise, a.kl[i] - a.kl[i - 1]);
    }
  const bool same = a.y == b.y && a.kl == b.kl;
  const bool ok = tw >= 0.95 && rises == 0 && same;
  return {ok, fmt("trustworthiness(k=10) %.4f; KL rises after exaggeration: %zu (largest %.2e); rerun identical: %s",
                  tw, rises, worst_rise, same ? "yes" : "no")};
}

// ------------------------------------------------------------ 7, 8

constexpr std::uint64_t kCorpusSeed = 2024;

struct EndToEnd {
  Corpus corpus;
  PipelineConfig cfg;
  RhythmModel model_on;
  bool built = false;
};

EndToEnd& e2e_state() {
  static EndToEnd s;
  return s;
}

Outcome end_to_end() {
  auto& s = e2e_state();
  CorpusSpec cs;
  cs.train = counts_from_mix(500, kReferenceMix);
  cs.test = counts_from_mix(200, kReferenceMix);
  cs.seed = kCorpusSeed;
  s.corpus = synth_corpus(cs);
  s.cfg.workers = g_workers;

  const auto t0 = Clock::now();
  const auto train = prepare(s.corpus.train, s.cfg, LabelMode::Train, true);
  const auto test = prepare(s.corpus.test, s.cfg, LabelMode::None, true);
  const double t_prep = seconds_since(t0);
  const auto truth = truth_rows(s.corpus.test);

  // The gate-off run reuses the peaks; its gate results are simply ignored.
  auto cfg_off = s.cfg;
  cfg_off.noise_gate = false;
  const auto t1 = Clock::now();
  const auto off = score(predict_prepared(fit_prepared(train, cfg_off), test, {}, g_workers), truth);
  const double t_off = seconds_since(t1);

  const auto t2 = Clock::now();
  s.model_on = fit_prepared(train, s.cfg);
  const auto on = score(predict_prepared(s.model_on, test, {}, g_workers), truth);
  const double t_on = seconds_since(t2);
  s.built = true;

  std::printf("%s", format_report({{"gate off", off}, {"gate on", on}}).c_str());
  std::fflush(stdout);

  // Runtime of one gate-on train+predict+evaluate. The gate itself runs in
  // prepare, so the shared prepare time counts in full.
  const double runtime = t_prep + t_on;
  bool minority_ok = true;
  std::string minority;
  for (auto c : {RhythmClass::Pause, RhythmClass::Tachycardia, RhythmClass::AFib, RhythmClass::Noise}) {
    minority_ok = minority_ok && on[c].f1 >= 0.6;
    minority += fmt(" %s %.2f", std::string(to_string(c)).c_str(), on[c].f1);
  }
  const double se_on = on[RhythmClass::Noise].sensitivity, se_off = off[RhythmClass::Noise].sensitivity;
  const bool ok = on.macro_f1 >= 0.80 && minority_ok && se_on > se_off && runtime < 900.0;
  return {ok, fmt("seed %llu, gate on: macro F1 %.3f, minority F1%s; Noise sensitivity on %.3f vs off %.3f "
                  "(gate off macro F1 %.3f); runtime %.0f s on %zu worker(s) (prepare %.0f, fit+predict %.0f)",
                  static_cast<unsigned long long>(kCorpusSeed), on.macro_f1, minority.c_str(), se_on, se_off,
                  off.macro_f1, runtime, g_workers, t_prep, t_on)};
}

Outcome model_round_trip() {
  auto& s = e2e_state();
  std::vector<Episode> probe;
  RhythmModel model;
  if (s.built) {
    model = s.model_on;
    probe.assign(s.corpus.test.begin(), s.corpus.test.begin() + 50);
  } else {
    CorpusSpec cs;
    cs.train = counts_from_mix(80, kReferenceMix);
    cs.test = counts_from_mix(50, kReferenceMix);
    cs.seed = 88;
    auto c = synth_corpus(cs);
    PipelineConfig cfg;
    cfg.workers = g_workers;
    cfg.dbscan_min_pts = 5;
    cfg.min_train_subs = 50;
    model = fit(c.train, cfg);
    probe = std::move(c.test);
  }
  const auto path = g_workdir / "roundtrip_model.json";
  save_model(model, path);
  const auto loaded = load_model(path);
  const auto prepared = prepare(probe, model.config, LabelMode::None, model.config.noise_gate);
  const auto a = predictions_to_tsv(predict_prepared(model, prepared));
  const auto b = predictions_to_tsv(predict_prepared(loaded, prepared));
  const bool same_json = model_to_json(model) == model_to_json(loaded);
  const bool ok = a == b && same_json;
  return {ok, fmt("%zu probe episodes, %zu prediction bytes, identical: %s; model JSON identical after reload: %s",
                  probe.size(), a.size(), a == b ? "yes" : "no", same_json ? "yes" : "no")};
}

// ------------------------------------------------------------ 9

int run(const std::string& cmd) {
  const int rc = std::system(cmd.c_str());
  return rc;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome cli_determinism() {
  if (g_cli.empty()) return {false, "no --cli path given"};
  const fs::path dir = g_workdir / "cli";
  fs::create_directories(dir);
  const std::string q = "'" + dir.string() + "'";
  const std::string cli = "'" + g_cli + "'";
  if (run(cli + " synth --output " + q + " --seed 9 --train 60 --test 20 2>/dev/null") != 0)
    return {false, "synth failed"};
  std::vector<std::string> preds;
  for (int w : {1, 3}) {
    const std::string tag = std::to_string(w);
    const std::string train = cli + " train --input " + q + "/train.jsonl --model " + q + "/model_w" + tag +
                              ".json --seed 7 --set dbscan_min_pts=5 --set min_train_subs=50 --workers " + tag + " 2>/dev/null";
    const std::string predict = cli + " predict --input " + q + "/test.jsonl --model " + q + "/model_w" + tag +
                                ".json --output " + q + "/pred_w" + tag + ".tsv --workers " + tag;
    if (run(train) != 0 || run(predict) != 0) return {false, "CLI run failed with --workers " + tag};
    preds.push_back(slurp(dir / ("pred_w" + tag + ".tsv")));
  }
  const bool same_model = slurp(dir / "model_w1.json") == slurp(dir / "model_w3.json");
  const bool ok = !preds[0].empty() && preds[0] == preds[1] && same_model;
  return {ok, fmt("--workers 1 vs 3: prediction files identical: %s (%zu bytes); model files identical: %s",
                  preds[0] == preds[1] ? "yes" : "no", preds[0].size(), same_model ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--cli" && i + 1 < argc) {
      g_cli = argv[++i];
    } else if (a == "--workdir" && i + 1 < argc) {
      g_workdir = argv[++i];
    } else if (a == "--workers" && i + 1 < argc) {
      g_workers = std::stoul(argv[++i]);
    } else {
      wanted.insert(std::stoi(a));
    }
  }
  if (g_workdir.empty()) g_workdir = fs::temp_directory_path() / ("icm_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(g_workdir);

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"EMD/CEEMDAN completeness", decomposition_completeness},
      {"noise gate on injected bursts", noise_gate},
      {"QRS detection and fusion", qrs_fusion},
      {"binomial tail", binomial},
      {"DBSCAN vs brute force", dbscan_exact},
      {"t-SNE quality and determinism", tsne_quality},
      {"end-to-end synthetic corpus", end_to_end},
      {"model round-trip", model_round_trip},
      {"pipeline determinism across --workers", cli_determinism},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!wanted.empty() && !wanted.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("CRITERION %d %s: %s: %s\n", id, o.pass ? "PASS" : "FAIL", criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  std::error_code ec;
  fs::remove_all(g_workdir, ec);
  return failed == 0 ? 0 : 1;
}
