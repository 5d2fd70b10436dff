#include <gtest/gtest.h>

#include <filesystem>
#include <map>
#include <sstream>

#include "dssbd/cli.hpp"
#include "support.hpp"

using namespace dssbd;
namespace fs = std::filesystem;

namespace {

const std::string kTinyConfig = std::string(DSSBD_SOURCE_DIR) + "/configs/tiny.json";

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

Result run_tiny(const fs::path& dir, std::vector<std::string> tail, const std::string& config = kTinyConfig) {
  std::vector<std::string> args{"--config", config, "--out", dir.string()};
  args.insert(args.end(), tail.begin(), tail.end());
  return run(args);
}

// Every regular file under `dir`, keyed by relative path.
std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = read_file(e.path());
  }
  return files;
}

std::size_t count_files(const fs::path& dir, const std::string& ext) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) n += e.path().extension() == ext;
  return n;
}

// Tiny config with one field replaced, written next to the run.
std::string tweaked_config(const fs::path& dir, const std::string& section, const std::string& key,
                           const nlohmann::ordered_json& value) {
  auto j = nlohmann::ordered_json::parse(read_file(kTinyConfig));
  j[section][key] = value;
  const fs::path p = dir.parent_path() / (dir.filename().string() + "_" + key + ".json");
  write_file_atomic(p, j.dump(2));
  return p.string();
}

// One full tiny run, shared by the tests below.
class TinyRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new fs::path(testing_support::scratch_dir("cli_tiny"));
    for (const char* cmd : {"synth", "train", "score", "eval", "gridsearch"}) {
      const Result r = run_tiny(*dir_, {cmd});
      ASSERT_EQ(r.code, 0) << cmd << ": " << r.err;
    }
  }
  static void TearDownTestSuite() { delete dir_; }
  static fs::path* dir_;
};
fs::path* TinyRun::dir_ = nullptr;

}  // namespace

TEST_F(TinyRun, SynthWritesConfiguredCounts) {
  EXPECT_EQ(count_files(*dir_ / "data" / "train", ".pose"), 6u);
  EXPECT_EQ(count_files(*dir_ / "data" / "test", ".pose"), 3u);
  const PoseSequence s = load_pose_sequence(*dir_ / "data" / "test" / "test_000.pose");
  EXPECT_EQ(s.frames.size(), 160u);
  EXPECT_TRUE(s.labels.has_value());
  EXPECT_FALSE(load_pose_sequence(*dir_ / "data" / "train" / "train_000.pose").labels.has_value());
  EXPECT_TRUE(fs::exists(*dir_ / "config.json"));
}

TEST_F(TinyRun, TrainWritesCheckpointsStatsAndLossCurves) {
  for (const char* s : {"pr", "pp", "rd"}) {
    EXPECT_TRUE(fs::exists(*dir_ / "checkpoints" / (std::string(s) + ".ckpt"))) << s;
    EXPECT_TRUE(fs::exists(*dir_ / "reports" / ("loss_" + std::string(s) + ".csv"))) << s;
  }
  EXPECT_NO_THROW(load_train_stats(*dir_ / "checkpoints" / "train_stats.txt"));
}

TEST_F(TinyRun, ScoreHasOneRowPerTestFrameAndRecomputableFusion) {
  const auto tables = load_score_csv(*dir_ / "scores" / "scores.csv");
  ASSERT_EQ(tables.size(), 3u);
  const TrainStats st = load_train_stats(*dir_ / "checkpoints" / "train_stats.txt");
  for (const auto& t : tables) {
    EXPECT_EQ(t.fused.size(), 160u);
    const Vector S = fuse(t.raw.pr, t.raw.pp, t.raw.rd, {1, 1, 1}, st);
    for (std::size_t i = 0; i < S.size(); ++i) ASSERT_NEAR(t.fused[i], S[i], 1e-12);
  }
}

TEST_F(TinyRun, EvalReportIsConsistentAndMatchesGolden) {
  const std::string text = read_file(*dir_ / "reports" / "eval.txt");
  const ReportSummary s = parse_eval_report(text);
  double sum = 0;
  for (const auto& pv : s.per_video) sum += pv.auroc;
  EXPECT_NEAR(s.macro, sum / double(s.per_video.size()), 1e-12);
  EXPECT_EQ(text, read_file(fs::path(DSSBD_GOLDEN_DIR) / "tiny_eval.txt"));
}

TEST_F(TinyRun, GridSearchBeatsOrMatchesDefaultWeights) {
  const std::string text = read_file(*dir_ / "reports" / "gridsearch.txt");
  auto value = [&](const std::string& key) {
    const auto p = text.find(key + " = ");
    return *parse_double(std::string_view(text).substr(p + key.size() + 3, text.find('\n', p) - p - key.size() - 3));
  };
  EXPECT_GE(value("best_micro_auroc"), value("default_micro_auroc"));
  EXPECT_EQ(value("candidates"), 7.0 * 7.0 * 7.0 - 1.0);
}

TEST_F(TinyRun, EveryCommandRerunsByteIdentically) {
  const auto before = snapshot(*dir_);
  for (const char* cmd : {"synth", "train", "score", "eval", "gridsearch"}) {
    ASSERT_EQ(run_tiny(*dir_, {cmd}).code, 0) << cmd;
    EXPECT_EQ(snapshot(*dir_), before) << "after rerunning " << cmd;
  }
}

TEST(Cli, AblateRerunsByteIdentically) {
  const auto dir = testing_support::scratch_dir("cli_ablate");
  const std::string cfg = tweaked_config(dir, "ablate", "windows", {4});
  ASSERT_EQ(run_tiny(dir, {"ablate"}, cfg).code, 0);
  const std::string first = read_file(dir / "reports" / "ablation.csv");
  EXPECT_EQ(std::count(first.begin(), first.end(), '\n'), 1 + 2 * 7);
  ASSERT_EQ(run_tiny(dir, {"ablate"}, cfg).code, 0);
  EXPECT_EQ(read_file(dir / "reports" / "ablation.csv"), first);
}

TEST(Cli, FlagsOverrideConfigSeed) {
  const auto a = testing_support::scratch_dir("cli_seed_a");
  const auto b = testing_support::scratch_dir("cli_seed_b");
  ASSERT_EQ(run_tiny(a, {"synth"}).code, 0);
  ASSERT_EQ(run({"--config", kTinyConfig, "--out", b.string(), "--seed", "4", "synth"}).code, 0);
  EXPECT_NE(read_file(a / "data/test/test_000.pose"), read_file(b / "data/test/test_000.pose"));
  EXPECT_NE(read_file(b / "config.json").find("\"seed\": 4"), std::string::npos);
}

TEST(Cli, AlmostAllAnomalousFractionIsRejected) {
  const auto dir = testing_support::scratch_dir("cli_fraction");
  const Result r = run_tiny(dir, {"synth"}, tweaked_config(dir, "synth", "anomaly_fraction", 0.9999));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("anomaly fraction"), std::string::npos);
}

TEST(Cli, LabeledTrainingDataViolatesContract) {
  const auto dir = testing_support::scratch_dir("cli_contract");
  ASSERT_EQ(run_tiny(dir, {"synth"}).code, 0);
  fs::copy_file(dir / "data/test/test_000.pose", dir / "data/train/zz_labeled.pose");
  const Result r = run_tiny(dir, {"train"});
  EXPECT_EQ(r.code, 3) << r.err;
  EXPECT_NE(r.err.find("unsupervised contract"), std::string::npos) << r.err;
}

TEST(Cli, DivergenceIsTrainingError) {
  const auto dir = testing_support::scratch_dir("cli_diverge");
  ASSERT_EQ(run_tiny(dir, {"synth"}).code, 0);
  const Result r = run_tiny(dir, {"train", "--streams", "pr"}, tweaked_config(dir, "train", "lr", 1e200));
  EXPECT_EQ(r.code, 4) << r.err;
  EXPECT_NE(r.err.find("epoch"), std::string::npos) << r.err;
}

TEST(Cli, CheckpointDataMismatchIsCompatibilityError) {
  const auto dir = testing_support::scratch_dir("cli_compat");
  ASSERT_EQ(run_tiny(dir, {"synth"}).code, 0);
  ASSERT_EQ(run_tiny(dir, {"train"}).code, 0);
  // Regenerate the data with a different keypoint count under the same run.
  ASSERT_EQ(run_tiny(dir, {"synth"}, tweaked_config(dir, "synth", "keypoints", 9)).code, 0);
  const Result r = run_tiny(dir, {"score"});
  EXPECT_EQ(r.code, 5) << r.err;
  EXPECT_NE(r.err.find("incompatible K"), std::string::npos) << r.err;
}

TEST(Cli, WeightOnUnselectedStreamIsUsageError) {
  const auto dir = testing_support::scratch_dir("cli_weights");
  EXPECT_EQ(run_tiny(dir, {"score", "--streams", "pr"}).code, 1);
}

TEST(Cli, HandBuiltScoresEvaluate) {
  const auto dir = testing_support::scratch_dir("cli_hand");
  const std::string csv = std::string(kScoreHeader) +
                          "\nv,0,,,,0.9,1\nv,1,,,,0.8,1\nv,2,,,,0.2,0\nv,3,,,,0.1,0\n";
  write_file_atomic(dir / "hand.csv", csv);
  ASSERT_EQ(run({"--out", dir.string(), "eval", "--scores", (dir / "hand.csv").string()}).code, 0);
  const ReportSummary s = parse_eval_report(read_file(dir / "reports" / "eval.txt"));
  EXPECT_EQ(s.micro, 1.0);
  EXPECT_EQ(s.macro, 1.0);
  EXPECT_EQ(read_file(dir / "hand.csv"), csv);  // input untouched
}

TEST(Cli, MissingLabelsExitSix) {
  const auto dir = testing_support::scratch_dir("cli_nolabels");
  write_file_atomic(dir / "s.csv", std::string(kScoreHeader) + "\nv,0,,,,0.9,\nv,1,,,,0.1,\n");
  const Result r = run({"--out", dir.string(), "eval", "--scores", (dir / "s.csv").string()});
  EXPECT_EQ(r.code, 6) << r.err;
}

TEST(Cli, SingleClassScoresExitSix) {
  const auto dir = testing_support::scratch_dir("cli_oneclass");
  write_file_atomic(dir / "s.csv", std::string(kScoreHeader) + "\nv,0,,,,0.9,0\nv,1,,,,0.1,0\n");
  EXPECT_EQ(run({"--out", dir.string(), "eval", "--scores", (dir / "s.csv").string()}).code, 6);
}

TEST(Cli, IoAndUsageErrors) {
  const auto dir = testing_support::scratch_dir("cli_errors");
  EXPECT_EQ(run({"--out", dir.string(), "eval", "--scores", (dir / "absent.csv").string()}).code, 2);
  EXPECT_EQ(run({"--out", dir.string(), "train"}).code, 2);  // no training data
  EXPECT_EQ(run({"frobnicate"}).code, 1);
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"--config", (dir / "missing.json").string(), "synth"}).code, 2);
  write_file_atomic(dir / "bad.json", "{\"synth\": {\"bogus\": 1}}");
  EXPECT_EQ(run({"--config", (dir / "bad.json").string(), "synth"}).code, 1);
  EXPECT_EQ(run({"--out", dir.string(), "train", "--streams", "pr,xx"}).code, 1);
}

TEST(Cli, ExitCodeMapping) {
  EXPECT_EQ(exit_code_for(UsageError("x")), 1);
  EXPECT_EQ(exit_code_for(ConfigError("x")), 1);
  EXPECT_EQ(exit_code_for(IoError("x")), 2);
  EXPECT_EQ(exit_code_for(ParseError(3, "x")), 2);
  EXPECT_EQ(exit_code_for(ContractError("x")), 3);
  EXPECT_EQ(exit_code_for(TrainingError(2, "x")), 4);
  EXPECT_EQ(exit_code_for(CompatibilityError("K", "x")), 5);
  EXPECT_EQ(exit_code_for(MissingDataError("x")), 6);
}
