#pragma once

// Command-line front end: synth, train, score, eval, gridsearch, ablate.
//
// Exit codes: 0 success, 1 usage or configuration, 2 I/O or malformed input,
// 3 unsupervised contract violated, 4 training diverged, 5 checkpoint/data
// mismatch, 6 missing or unusable labels.

#include <algorithm>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dssbd/ablation.hpp"
#include "dssbd/checkpoint.hpp"
#include "dssbd/data.hpp"
#include "dssbd/errors.hpp"
#include "dssbd/fusion_eval.hpp"
#include "dssbd/pipeline.hpp"
#include "dssbd/report.hpp"
#include "dssbd/run_config.hpp"

namespace dssbd {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitIo = 2,
  kExitContract = 3,
  kExitTraining = 4,
  kExitCompatibility = 5,
  kExitMissingData = 6,
};

inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ContractError*>(&e)) return kExitContract;
  if (dynamic_cast<const TrainingError*>(&e)) return kExitTraining;
  if (dynamic_cast<const CompatibilityError*>(&e)) return kExitCompatibility;
  if (dynamic_cast<const MissingDataError*>(&e) || dynamic_cast<const UndefinedMetricError*>(&e)) {
    return kExitMissingData;
  }
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const ParseError*>(&e) ||
      dynamic_cast<const DegeneratePoseError*>(&e) || dynamic_cast<const std::filesystem::filesystem_error*>(&e)) {
    return kExitIo;
  }
  return kExitUsage;
}

namespace cli_detail {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string streams;
  std::string scores;
};

inline RunConfig resolve(const Options& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (!o.out.empty()) c.out = o.out;
  if (!o.streams.empty()) c.streams = parse_stream_list(o.streams);
  return c;
}

inline void write_snapshot(const RunConfig& c) {
  write_file_atomic(c.out / "config.json", run_config_to_json(c).dump(2) + "\n");
}

inline std::filesystem::path checkpoint_path(const RunConfig& c, Stream s) {
  return c.checkpoints() / (std::string(stream_name(s)) + ".ckpt");
}

inline std::filesystem::path stats_path(const RunConfig& c) { return c.checkpoints() / "train_stats.txt"; }

// Removes earlier *.pose files so a rerun with fewer videos leaves no strays.
inline void clear_pose_files(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) return;
  std::vector<fs::path> stale;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".pose") stale.push_back(e.path());
  }
  for (const auto& p : stale) fs::remove(p);
}

inline int cmd_synth(const RunConfig& c, std::ostream& out) {
  const SynthConfig sc = synth_config(c);
  const SynthDataset ds = synth_dataset(sc);
  const auto train_dir = c.out / "data" / "train";
  const auto test_dir = c.out / "data" / "test";
  clear_pose_files(train_dir);
  clear_pose_files(test_dir);
  for (const auto& s : ds.train) write_pose_sequence(train_dir / (s.video_id + ".pose"), s);
  for (const auto& s : ds.test) write_pose_sequence(test_dir / (s.video_id + ".pose"), s);
  std::ostringstream planted;
  planted << "video_id,start,length,period,keypoints\n";
  for (const auto& p : ds.planted) {
    planted << p.video_id << ',' << p.start << ',' << p.length << ',' << p.period << ',';
    for (std::size_t k = 0; k < p.keypoints.size(); ++k) planted << (k ? " " : "") << p.keypoints[k];
    planted << '\n';
  }
  write_file_atomic(c.out / "data" / "planted.csv", planted.str());
  std::size_t anomalous = 0, total = 0;
  for (const auto& s : ds.test) {
    total += s.size();
    for (auto l : *s.labels) anomalous += l;
  }
  out << "synth: " << ds.train.size() << " train and " << ds.test.size() << " test videos, " << sc.frames
      << " frames each, K=" << sc.keypoints << " d=" << sc.dims << '\n'
      << "synth: " << ds.planted.size() << " planted segments, " << anomalous << " of " << total
      << " test frames anomalous\n"
      << "synth: wrote " << (c.out / "data").string() << '\n';
  return kExitOk;
}

inline int cmd_train(const RunConfig& c, std::ostream& out) {
  const auto train = load_pose_directory(c.train_data());
  if (train.empty()) throw IoError("no .pose files in " + c.train_data().string());
  const TrainedPipeline tp = train_pipeline(train, pipeline_config(c), c.streams);
  auto report = [&](Stream s, const TrainLog& log, const auto& model) {
    save_checkpoint(checkpoint_path(c, s), model);
    write_file_atomic(c.reports() / ("loss_" + std::string(stream_name(s)) + ".csv"), format_loss_curve(log));
    out << "train: " << stream_name(s) << " " << log.epoch_loss.size() << " epochs, loss "
        << format_double(log.epoch_loss.front()) << " -> " << format_double(log.epoch_loss.back()) << '\n';
  };
  if (tp.pr) report(Stream::pr, *tp.pr_log, *tp.pr);
  if (tp.pp) report(Stream::pp, *tp.pp_log, *tp.pp);
  if (tp.rd) report(Stream::rd, *tp.rd_log, *tp.rd);
  save_train_stats(stats_path(c), tp.stats);
  out << "train: stats pr " << format_double(tp.stats.pr_mean) << " +- " << format_double(tp.stats.pr_std) << ", pp "
      << format_double(tp.stats.pp_mean) << " +- " << format_double(tp.stats.pp_std) << '\n';
  if (tp.stats.pr_floored || tp.stats.pp_floored) {
    std::cerr << "warning: a training score deviation fell below " << kSigmaFloor << " and was floored\n";
  }
  return kExitOk;
}

inline TrainedPipeline load_trained(const RunConfig& c) {
  TrainedPipeline tp;
  tp.window = c.pipeline.window;
  if (c.streams.pr) tp.pr = load_pr_checkpoint(checkpoint_path(c, Stream::pr));
  if (c.streams.pp) tp.pp = load_pp_checkpoint(checkpoint_path(c, Stream::pp));
  if (c.streams.rd) tp.rd = load_rd_checkpoint(checkpoint_path(c, Stream::rd));
  tp.stats = load_train_stats(stats_path(c));
  return tp;
}

inline void check_weights_cover(const RunConfig& c) {
  const FusionWeights& w = c.pipeline.weights;
  validate_weights(w);
  auto need = [&](double weight, bool present, const char* name, const char* stream) {
    if (weight != 0.0 && !present) {
      throw UsageError(std::string("weight ") + name + " is nonzero but stream " + stream + " is not selected");
    }
  };
  need(w.alpha, c.streams.pr, "alpha", "pr");
  need(w.beta, c.streams.pp, "beta", "pp");
  need(w.gamma, c.streams.rd, "gamma", "rd");
}

inline int cmd_score(const RunConfig& c, std::ostream& out) {
  check_weights_cover(c);
  const TrainedPipeline tp = load_trained(c);
  const auto test = load_pose_directory(c.test_data());
  if (test.empty()) throw IoError("no .pose files in " + c.test_data().string());
  const auto scored = score_pipeline(tp, test);
  write_file_atomic(c.scores(), format_score_csv(scored, c.pipeline.weights, tp.stats));
  std::size_t rows = 0;
  for (const auto& v : scored) rows += std::max({v.pr.size(), v.pp.size(), v.rd.size()});
  out << "score: " << scored.size() << " videos, " << rows << " frames -> " << c.scores().string() << '\n';
  return kExitOk;
}

inline std::filesystem::path scores_input(const RunConfig& c, const Options& o) {
  return o.scores.empty() ? c.scores() : std::filesystem::path(o.scores);
}

inline int cmd_eval(const RunConfig& c, const Options& o, std::ostream& out) {
  const auto tables = load_score_csv(scores_input(c, o));
  const EvalReport r = evaluate(labeled_fused(tables), c.pipeline.weights, c.pipeline.window, c.seed);
  write_file_atomic(c.reports() / "eval.txt", format_eval_report(r));
  write_file_atomic(c.reports() / "per_video.csv", format_per_video_csv(r));
  out << "eval: micro AUROC " << format_double(r.micro) << ", macro AUROC " << format_double(r.macro) << " over "
      << r.per_video.size() << " videos";
  if (!r.skipped.empty()) out << " (" << r.skipped.size() << " single-class videos skipped)";
  out << '\n';
  return kExitOk;
}

inline int cmd_gridsearch(const RunConfig& c, const Options& o, std::ostream& out) {
  const auto tables = load_score_csv(scores_input(c, o));
  const TrainStats stats = load_train_stats(stats_path(c));
  std::vector<ScoredVideo> videos;
  for (const auto& t : tables) {
    if (t.raw.labels.empty()) throw MissingDataError("video " + t.raw.video_id + " has no labels");
    if (t.raw.pr.empty() || t.raw.pp.empty() || t.raw.rd.empty()) {
      throw UsageError("grid search needs s_pr, s_pp and s_rd for every video (" + t.raw.video_id + ")");
    }
    videos.push_back(t.raw);
  }
  const GridSearchResult g = grid_search_weights(videos, stats, c.grid);
  const FusionWeights unit{1.0, 1.0, 1.0};
  const EvalReport base = evaluate(fuse_videos(videos, unit, stats), unit, c.pipeline.window, c.seed);
  write_file_atomic(c.reports() / "gridsearch.csv", format_grid_table(g));
  write_file_atomic(c.reports() / "gridsearch.txt", format_grid_best(g, base));
  out << "gridsearch: best alpha=" << format_double(g.best.alpha) << " beta=" << format_double(g.best.beta)
      << " gamma=" << format_double(g.best.gamma) << " micro AUROC " << format_double(g.best_micro)
      << " (alpha=beta=gamma=1: " << format_double(base.micro) << ", " << g.table.size() << " candidates)\n";
  return kExitOk;
}

inline int cmd_ablate(const RunConfig& c, std::ostream& out) {
  const auto cells = ablation_suite(ablation_config(c));
  const std::string csv = format_ablation_csv(cells);
  write_file_atomic(c.reports() / "ablation.csv", csv);
  std::size_t failed = 0;
  for (const auto& cell : cells) failed += cell.ok() ? 0 : 1;
  out << csv << "ablate: " << cells.size() << " cells, " << failed << " failed -> "
      << (c.reports() / "ablation.csv").string() << '\n';
  return kExitOk;
}

}  // namespace cli_detail

// Runs one command. Errors are reported on `err` and mapped to exit codes.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  using namespace cli_detail;
  CLI::App app{"dssbd: pose-based stereotypical behaviour detection"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  std::uint64_t seed = 0;
  app.add_option("--config", o.config, "JSON run configuration");
  auto* seed_opt = app.add_option("--seed", seed, "run seed (overrides the config)");
  app.add_option("--out", o.out, "run directory (overrides the config)");
  auto* synth = app.add_subcommand("synth", "generate the synthetic train/test pose files");
  auto* train = app.add_subcommand("train", "train the selected streams and fit score statistics");
  train->add_option("--streams", o.streams, "comma-separated subset of pr,pp,rd");
  auto* score = app.add_subcommand("score", "write per-frame stream and fused scores for the test videos");
  score->add_option("--streams", o.streams, "comma-separated subset of pr,pp,rd");
  auto* eval = app.add_subcommand("eval", "micro/macro AUROC report from a score file");
  eval->add_option("--scores", o.scores, "score CSV (default <out>/scores/scores.csv)");
  auto* grid = app.add_subcommand("gridsearch", "search fusion weights on a labeled score file");
  grid->add_option("--scores", o.scores, "score CSV (default <out>/scores/scores.csv)");
  auto* ablate = app.add_subcommand("ablate", "window length x pose dimension x stream subset grid");

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  if (seed_opt->count() > 0) o.seed = seed;

  try {
    const RunConfig c = resolve(o);
    write_snapshot(c);
    if (synth->parsed()) return cmd_synth(c, out);
    if (train->parsed()) return cmd_train(c, out);
    if (score->parsed()) return cmd_score(c, out);
    if (eval->parsed()) return cmd_eval(c, o, out);
    if (grid->parsed()) return cmd_gridsearch(c, o, out);
    if (ablate->parsed()) return cmd_ablate(c, out);
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
}

}  // namespace dssbd
