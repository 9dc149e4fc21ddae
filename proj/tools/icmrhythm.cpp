// icmrhythm: batch front end for the sub-episode rhythm classifier.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "icm/classify.hpp"
#include "icm/config.hpp"
#include "icm/data.hpp"
#include "icm/eval.hpp"
#include "icm/parallel.hpp"

extern char** environ;

namespace {

using icm::Error;
using nlohmann::json;

struct Common {
  std::string input, model, output, config, truth;
  std::optional<std::uint64_t> seed;
  bool no_gate = false;
  std::vector<std::string> overrides, sets;
  std::optional<std::size_t> workers;
};

std::map<icm::RhythmClass, double> parse_overrides(const std::vector<std::string>& items) {
  std::map<icm::RhythmClass, double> out;
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw Error("config", "--override expects label=threshold, got '" + item + "'");
    const auto label = icm::parse_rhythm_class(item.substr(0, eq));
    double thr = 0.0;
    try {
      std::size_t used = 0;
      thr = std::stod(item.substr(eq + 1), &used);
      if (used != item.size() - eq - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw Error("config", "--override: bad threshold in '" + item + "'");
    }
    if (!(thr >= 0.0 && thr <= 1.0)) throw Error("config", "--override: threshold must be in [0, 1]");
    out[label] = thr;
  }
  return out;
}

std::vector<std::string> environment() {
  std::vector<std::string> env;
  for (char** e = environ; e && *e; ++e) env.emplace_back(*e);
  return env;
}

// defaults < --config file < ICMR_* environment < flags
icm::PipelineConfig resolve_config(const Common& o) {
  icm::PipelineConfig c;
  c.workers = icm::default_workers();
  if (!o.config.empty()) icm::apply_file(c, o.config);
  icm::apply_environment(c, environment());
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw Error("config", "--set expects key=value, got '" + s + "'");
    icm::set_key(c, s.substr(0, eq), s.substr(eq + 1));
  }
  if (o.seed) c.seed = *o.seed;
  if (o.no_gate) c.noise_gate = false;
  for (const auto& [l, t] : parse_overrides(o.overrides)) c.overrides[l] = t;
  if (o.workers) c.workers = *o.workers;
  c.workers = std::max<std::size_t>(1, c.workers);
  icm::validate(c);
  return c;
}

std::size_t resolve_workers(const Common& o) {
  icm::PipelineConfig c;
  c.workers = icm::default_workers();
  icm::apply_environment(c, environment());
  if (o.workers) c.workers = *o.workers;
  return std::max<std::size_t>(1, c.workers);
}

void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    icm::write_file_atomic(path, text);
  }
}

// ------------------------------------------------------------ commands

struct SynthArgs {
  std::string dir;
  std::uint64_t seed = 1;
  std::size_t train = 500, test = 200;
};

int cmd_synth(const SynthArgs& a) {
  icm::CorpusSpec cs;
  cs.train = icm::counts_from_mix(a.train, icm::kReferenceMix);
  cs.test = icm::counts_from_mix(a.test, icm::kReferenceMix);
  cs.seed = a.seed;
  const auto corpus = icm::synth_corpus(cs);
  const std::filesystem::path dir(a.dir);
  std::filesystem::create_directories(dir);
  icm::save_dataset(corpus.train, dir / "train.jsonl", icm::DatasetVariant::Train);
  icm::save_dataset(corpus.test, dir / "test.jsonl", icm::DatasetVariant::Test);
  icm::save_truth(corpus.train_truth, dir / "train_truth.jsonl");
  icm::save_truth(corpus.test_truth, dir / "test_truth.jsonl");
  std::fprintf(stderr, "wrote %zu train / %zu test episodes to %s\n", corpus.train.size(), corpus.test.size(),
               dir.string().c_str());
  return 0;
}

int cmd_train(const Common& o) {
  auto cfg = resolve_config(o);
  const auto train = icm::load_dataset(o.input);
  const auto model = icm::fit(train, cfg);
  icm::save_model(model, o.model);
  std::fprintf(stderr, "%zu rows, %zu clusters, outlier fraction %.3f, %zu sub-episodes gated\n", model.rows.size(),
               model.clusters.size(), model.outlier_fraction(), model.gated_subs);
  return 0;
}

int cmd_predict(const Common& o) {
  const auto model = icm::load_model(o.model);
  const auto episodes = icm::load_dataset(o.input);
  const auto preds = icm::predict(model, episodes, parse_overrides(o.overrides), resolve_workers(o));
  write_output(o.output, icm::predictions_to_tsv(preds));
  return 0;
}

int cmd_evaluate(const Common& o) {
  std::ifstream in(o.input);
  if (!in) throw Error("evaluate", "cannot open '" + o.input + "'");
  const auto preds = icm::parse_predictions(in, o.input);
  const auto truth = icm::truth_rows(icm::load_dataset(o.truth));
  const auto report = icm::score(preds, truth);
  std::cout << icm::format_report({{"predictions", report}});
  if (!o.output.empty()) icm::write_file_atomic(o.output, icm::report_to_json(report).dump(2) + "\n");
  return 0;
}

int cmd_noise_scan(const Common& o) {
  auto cfg = resolve_config(o);
  const auto episodes = icm::load_dataset(o.input);
  bool labeled = !episodes.empty();
  for (const auto& ep : episodes) labeled = labeled && !ep.labels.empty();
  const auto prepared = icm::prepare(episodes, cfg, icm::LabelMode::None, true);
  std::string out;
  std::vector<icm::GateDetection> det;
  for (const auto& p : prepared) {
    json segs = json::array();
    for (const auto& s : p.noise) segs.push_back({s.start_s, s.end_s});
    out += json{{"episode_id", p.parent_id}, {"sub_index", p.index}, {"segments", segs}}.dump() + "\n";
    det.push_back({p.parent_id, p.index, !p.noise.empty()});
  }
  write_output(o.output, out);
  if (labeled) {
    const auto share = icm::noise_gate_audit(det, icm::truth_rows(episodes, cfg.window_s));
    std::fprintf(stderr, "share of sub-episodes with detected noise, by label:\n");
    for (auto c : icm::kAllClasses)
      std::fprintf(stderr, "  %-12s %.3f\n", std::string(icm::to_string(c)).c_str(), share[icm::index_of(c)]);
  }
  return 0;
}

int cmd_embed(const Common& o) {
  std::string out = "row\tx\ty\tcluster\tlabel\tepisode_id\tsub_index\n";
  auto emit = [&](std::size_t i, const icm::Point2& y, int cluster, const std::string& label, const std::string& id,
                  std::size_t sub) {
    out += std::to_string(i) + "\t" + icm::format_double(y[0]) + "\t" + icm::format_double(y[1]) + "\t" +
           std::to_string(cluster) + "\t" + label + "\t" + id + "\t" + std::to_string(sub) + "\n";
  };
  if (!o.model.empty()) {
    const auto m = icm::load_model(o.model);
    for (std::size_t i = 0; i < m.rows.size(); ++i)
      emit(i, m.embedding[i], m.cluster[i], std::string(icm::to_string(m.rows[i].label)), m.rows[i].parent_id,
           m.rows[i].index);
  } else {
    // Embed a dataset directly: histograms over its own bound, no clustering.
    auto cfg = resolve_config(o);
    const auto episodes = icm::load_dataset(o.input);
    const auto prepared = icm::prepare(episodes, cfg, icm::LabelMode::None, cfg.noise_gate);
    std::vector<const icm::PreparedSub*> kept;
    std::vector<double> abs_drr;
    for (const auto& p : prepared) {
      if (cfg.noise_gate && !p.noise.empty()) continue;
      kept.push_back(&p);
      for (double d : icm::drr_series(icm::rr_series(p.peaks))) abs_drr.push_back(std::abs(d));
    }
    const double bound = icm::lorenz_bound(abs_drr);
    std::vector<icm::FeatureVector> vectors;
    for (const auto* p : kept) vectors.push_back(icm::histogram_from_peaks(p->peaks, bound).vector());
    if (vectors.empty()) throw Error("embed", "no sub-episodes to embed");
    const auto res = icm::tsne(vectors, cfg.tsne());
    for (std::size_t i = 0; i < kept.size(); ++i) emit(i, res.y[i], -1, "", kept[i]->parent_id, kept[i]->index);
  }
  write_output(o.output, out);
  return 0;
}

void add_config_flags(CLI::App* app, Common& o) {
  app->add_option("--config", o.config, "JSON config file (flat keys)")->check(CLI::ExistingFile);
  app->add_option("--seed", o.seed, "random seed");
  app->add_flag("--no-noise-gate", o.no_gate, "skip the CEEMDAN noise gate");
  app->add_option("--override", o.overrides, "per-label p-value threshold, label=threshold (repeatable)");
  app->add_option("--set", o.sets, "any config key, key=value (repeatable)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rhythm classification of 60 s sECG episodes"};
  app.require_subcommand(1);
  Common o;
  SynthArgs sa;

  auto* synth = app.add_subcommand("synth", "write a synthetic train/test corpus");
  synth->add_option("--output", sa.dir, "output directory")->required();
  synth->add_option("--seed", sa.seed, "corpus seed");
  synth->add_option("--train", sa.train, "training episodes");
  synth->add_option("--test", sa.test, "test episodes");

  auto* train = app.add_subcommand("train", "fit a model on a labeled dataset");
  train->add_option("--input", o.input, "training dataset (JSONL)")->required()->check(CLI::ExistingFile);
  train->add_option("--model", o.model, "model file to write")->required();
  add_config_flags(train, o);
  train->add_option("--workers", o.workers, "worker threads");

  auto* predict = app.add_subcommand("predict", "label every sub-episode of a dataset");
  predict->add_option("--input", o.input, "dataset (JSONL)")->required()->check(CLI::ExistingFile);
  predict->add_option("--model", o.model, "model file")->required()->check(CLI::ExistingFile);
  predict->add_option("--output", o.output, "predictions TSV (default stdout)");
  predict->add_option("--override", o.overrides, "per-label p-value threshold, label=threshold (repeatable)");
  predict->add_option("--workers", o.workers, "worker threads");

  auto* evaluate = app.add_subcommand("evaluate", "score predictions against labeled episodes");
  evaluate->add_option("--input", o.input, "predictions TSV")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--truth", o.truth, "dataset with time-bounded labels")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--output", o.output, "JSON report");

  auto* scan = app.add_subcommand("noise-scan", "run the noise gate only");
  scan->add_option("--input", o.input, "dataset (JSONL)")->required()->check(CLI::ExistingFile);
  scan->add_option("--output", o.output, "segments JSONL (default stdout)");
  add_config_flags(scan, o);
  scan->add_option("--workers", o.workers, "worker threads");

  auto* embed = app.add_subcommand("embed", "export the 2D embedding");
  auto* em = embed->add_option("--model", o.model, "model file")->check(CLI::ExistingFile);
  auto* ei = embed->add_option("--input", o.input, "dataset to embed instead of a model")->check(CLI::ExistingFile);
  em->excludes(ei);
  embed->add_option("--output", o.output, "scatter TSV (default stdout)");
  add_config_flags(embed, o);
  embed->add_option("--workers", o.workers, "worker threads");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return cmd_synth(sa);
    if (*train) return cmd_train(o);
    if (*predict) return cmd_predict(o);
    if (*evaluate) return cmd_evaluate(o);
    if (*scan) return cmd_noise_scan(o);
    if (*embed) {
      if (o.model.empty() && o.input.empty()) throw Error("embed", "give --model or --input");
      return cmd_embed(o);
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "icmrhythm: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "icmrhythm: internal: %s\n", e.what());
    return 1;
  }
  return 0;
}
