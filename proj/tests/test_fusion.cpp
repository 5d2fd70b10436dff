#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "dssbd/ablation.hpp"
#include "dssbd/fusion_eval.hpp"
#include "support.hpp"

using namespace dssbd;

namespace {

// O(n^2) pair count with ties worth one half.
double pair_count_auroc(const Vector& s, const std::vector<std::uint8_t>& y) {
  double credit = 0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j]) continue;
      ++pairs;
      credit += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  }
  return credit / double(pairs);
}

LabeledScores random_video(const std::string& id, std::size_t n, Rng& rng, bool coarse = false) {
  LabeledScores v{id, Vector(n), std::vector<std::uint8_t>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    v.labels[i] = rng.below(3) == 0;
    // Coarse scores force ties.
    v.scores[i] = coarse ? double(rng.below(5)) : rng.normal() + (v.labels[i] ? 0.7 : 0.0);
  }
  v.labels[0] = 1;
  v.labels[1] = 0;
  return v;
}

}  // namespace

// ---- training statistics ----

TEST(TrainStats, ConstantScoresHitSigmaFloor) {
  const Vector ones{1, 1, 1, 1};
  const TrainStats st = fit_train_stats(ones, Vector{0, 2});
  EXPECT_EQ(st.pr_mean, 1.0);
  EXPECT_EQ(st.pr_std, kSigmaFloor);
  EXPECT_TRUE(st.pr_floored);
  EXPECT_EQ(st.pp_mean, 1.0);
  EXPECT_EQ(st.pp_std, 1.0);
  EXPECT_FALSE(st.pp_floored);
}

TEST(TrainStats, MatchesTwoPassReference) {
  Rng rng(1);
  Vector a(1000), b(1000);
  for (double& x : a) x = 3.0 + 0.5 * rng.normal();
  for (double& x : b) x = std::exp(rng.normal());
  const TrainStats st = fit_train_stats(a, b);
  auto two_pass = [](const Vector& x) {
    double m = 0;
    for (double v : x) m += v;
    m /= double(x.size());
    double s = 0;
    for (double v : x) s += (v - m) * (v - m);
    return std::make_pair(m, std::sqrt(s / double(x.size())));
  };
  EXPECT_NEAR(st.pr_mean, two_pass(a).first, 1e-12);
  EXPECT_NEAR(st.pr_std, two_pass(a).second, 1e-12);
  EXPECT_NEAR(st.pp_mean, two_pass(b).first, 1e-12);
  EXPECT_NEAR(st.pp_std, two_pass(b).second, 1e-12);
}

TEST(TrainStats, EmptyInputIsUsageError) {
  EXPECT_THROW(fit_train_stats(Vector{}, Vector{1.0}), UsageError);
  EXPECT_THROW(fit_train_stats(Vector{1.0}, Vector{}), UsageError);
}

// ---- fusion ----

TEST(Fuse, RdOnlyWeightsReturnRdExactly) {
  const Vector pr{5, 6, 7}, pp{-1, 0, 1}, rd{0.1, 0.9, 0.333};
  EXPECT_EQ(fuse(pr, pp, rd, {0, 0, 1}, {2, 3, 4, 5}), rd);
}

TEST(Fuse, DefaultWeightsAtTrainingMeans) {
  const TrainStats st{2.5, 0.7, 0.3, 0.01};
  const Vector S = fuse(Vector{2.5, 2.5}, Vector{0.3, 0.3}, Vector{0.5, 0.5}, {1, 1, 1}, st);
  for (double v : S) EXPECT_EQ(v, 0.5);
}

TEST(Fuse, MatchesLonghandWithTunedWeights) {
  const TrainStats st{2.0, 0.5, 10.0, 4.0};
  const Vector pr{2.0, 3.0, 1.25}, pp{10.0, 2.0, 18.5}, rd{0.0, 0.75, 0.2};
  const Vector S = fuse(pr, pp, rd, {1.5, 0.2, 1.3}, st);
  // 1.5 * (pr - 2) / 0.5 + 0.2 * (pp - 10) / 4 + 1.3 * rd
  EXPECT_NEAR(S[0], 0.0 + 0.0 + 0.0, 1e-12);
  EXPECT_NEAR(S[1], 3.0 - 0.4 + 0.975, 1e-12);
  EXPECT_NEAR(S[2], -2.25 + 0.425 + 0.26, 1e-12);
}

TEST(Fuse, ZeroGammaNeverReadsRd) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const Vector S = fuse(Vector{1, 2}, Vector{3, 4}, Vector{nan, nan}, {1, 1, 0}, {0, 1, 0, 1});
  for (double v : S) EXPECT_TRUE(std::isfinite(v));
  // An absent stream with zero weight is also fine.
  EXPECT_EQ(fuse(Vector{1, 2}, Vector{3, 4}, Vector{}, {1, 1, 0}, {0, 1, 0, 1}).size(), 2u);
}

TEST(Fuse, LengthMismatchIsDimensionError) {
  EXPECT_THROW(fuse(Vector{1, 2}, Vector{3}, Vector{0, 0}, {1, 1, 1}, {}), DimensionError);
}

TEST(Fuse, WeightsMustBeNonnegativeAndNotAllZero) {
  EXPECT_THROW(validate_weights({0, 0, 0}), ConfigError);
  EXPECT_THROW(validate_weights({-0.1, 1, 1}), ConfigError);
  EXPECT_NO_THROW(validate_weights({0, 0, 0.1}));
}

TEST(Fuse, AffineRescalingOfRawScoresLeavesAurocUnchanged) {
  Rng rng(2);
  Vector tr_pr(300), tr_pp(300);
  for (double& x : tr_pr) x = std::abs(rng.normal());
  for (double& x : tr_pp) x = std::abs(rng.normal()) * 3;
  std::vector<ScoredVideo> test(3);
  for (std::size_t v = 0; v < 3; ++v) {
    for (int i = 0; i < 80; ++i) {
      const std::uint8_t y = rng.below(4) == 0;
      test[v].labels.push_back(y);
      test[v].pr.push_back(std::abs(rng.normal()) + y);
      test[v].pp.push_back(std::abs(rng.normal()) * 3 + y);
      test[v].rd.push_back(rng.uniform(0, 1));
    }
    test[v].labels[0] = 1;
    test[v].labels[1] = 0;
  }
  const FusionWeights w{1.5, 0.2, 1.3};
  auto affine = [](Vector x, double a, double b) {
    for (double& v : x) v = a * v + b;
    return x;
  };
  const auto base = fuse_videos(test, w, fit_train_stats(tr_pr, tr_pp));
  auto moved = test;
  for (auto& v : moved) {
    v.pr = affine(v.pr, 7.0, -3.0);
    v.pp = affine(v.pp, 0.01, 100.0);
  }
  const auto after = fuse_videos(moved, w, fit_train_stats(affine(tr_pr, 7.0, -3.0), affine(tr_pp, 0.01, 100.0)));
  for (std::size_t v = 0; v < 3; ++v) {
    for (std::size_t i = 0; i < base[v].scores.size(); ++i) EXPECT_NEAR(base[v].scores[i], after[v].scores[i], 1e-9);
  }
  EXPECT_NEAR(auroc_micro(base), auroc_micro(after), 1e-9);
  EXPECT_NEAR(auroc_macro(base).value, auroc_macro(after).value, 1e-9);
}

// ---- AUROC ----

TEST(Auroc, Examples) {
  const std::vector<std::uint8_t> y{1, 1, 0, 0};
  EXPECT_EQ(auroc(Vector{0.9, 0.8, 0.2, 0.1}, y), 1.0);
  EXPECT_EQ(auroc(Vector{0.1, 0.2, 0.8, 0.9}, y), 0.0);
  EXPECT_EQ(auroc(Vector{0.5, 0.5, 0.4}, std::vector<std::uint8_t>{1, 0, 0}), 0.75);
}

TEST(Auroc, SingleClassIsUndefined) {
  EXPECT_THROW(auroc(Vector{0.1, 0.2}, std::vector<std::uint8_t>{1, 1}), UndefinedMetricError);
  EXPECT_THROW(auroc(Vector{0.1, 0.2}, std::vector<std::uint8_t>{0, 0}), UndefinedMetricError);
  EXPECT_THROW(auroc(Vector{0.1}, std::vector<std::uint8_t>{1, 0}), DimensionError);
}

TEST(Auroc, MatchesPairCountingExactly) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto v = random_video("v", 2 + trial * 7, rng, trial % 2 == 0);
    EXPECT_EQ(auroc(v.scores, v.labels), pair_count_auroc(v.scores, v.labels));
  }
}

TEST(Auroc, InvariantUnderIncreasingTransforms) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const auto v = random_video("v", 200, rng, trial % 2 == 0);
    const double base = auroc(v.scores, v.labels);
    Vector e = v.scores, a = v.scores;
    for (double& x : e) x = std::exp(x);
    for (double& x : a) x = 3.5 * x - 12.0;
    EXPECT_LT(std::abs(auroc(e, v.labels) - base), 1e-12);
    EXPECT_LT(std::abs(auroc(a, v.labels) - base), 1e-12);
  }
}

TEST(AurocMicro, SingleVideoEqualsPlainAuroc) {
  Rng rng(5);
  const auto v = random_video("only", 60, rng);
  EXPECT_EQ(auroc_micro({v}), auroc(v.scores, v.labels));
}

TEST(AurocMicro, SingleClassVideosCombine) {
  const LabeledScores normal{"n", Vector{0.1, 0.2, 0.3}, {0, 0, 0}};
  const LabeledScores anomalous{"a", Vector{0.25, 0.9}, {1, 1}};
  EXPECT_NEAR(auroc_micro({normal, anomalous}), 5.0 / 6.0, 1e-15);
  EXPECT_THROW(auroc_micro({normal}), UndefinedMetricError);
}

TEST(AurocMicro, EqualsAurocOfConcatenation) {
  Rng rng(6);
  std::vector<LabeledScores> vs{random_video("a", 40, rng), random_video("b", 17, rng), random_video("c", 90, rng)};
  Vector s;
  std::vector<std::uint8_t> y;
  for (const auto& v : vs) {
    s.insert(s.end(), v.scores.begin(), v.scores.end());
    y.insert(y.end(), v.labels.begin(), v.labels.end());
  }
  EXPECT_NEAR(auroc_micro(vs), pair_count_auroc(s, y), 1e-15);
}

TEST(AurocMacro, AveragesPerVideo) {
  const LabeledScores perfect{"p", Vector{0.9, 0.1}, {1, 0}};
  const LabeledScores coin{"c", Vector{0.5, 0.5}, {1, 0}};
  const MacroAuroc m = auroc_macro({perfect, coin});
  EXPECT_EQ(m.value, 0.75);
  ASSERT_EQ(m.per_video.size(), 2u);
  EXPECT_TRUE(m.skipped.empty());
}

TEST(AurocMacro, SkipsSingleClassVideos) {
  Rng rng(7);
  const auto dual = random_video("dual", 50, rng);
  const LabeledScores normal{"normal", Vector{0.1, 0.4}, {0, 0}};
  const MacroAuroc m = auroc_macro({dual, normal});
  EXPECT_EQ(m.value, auroc(dual.scores, dual.labels));
  ASSERT_EQ(m.skipped.size(), 1u);
  EXPECT_EQ(m.skipped[0], "normal");
  EXPECT_THROW(auroc_macro({normal}), UndefinedMetricError);
}

TEST(AurocMacro, EqualsMeanOfIndependentPerVideoValues) {
  Rng rng(8);
  std::vector<LabeledScores> vs;
  for (int v = 0; v < 5; ++v) vs.push_back(random_video("v" + std::to_string(v), 30 + 11 * v, rng, v == 2));
  double sum = 0;
  for (const auto& v : vs) sum += pair_count_auroc(v.scores, v.labels);
  const MacroAuroc m = auroc_macro(vs);
  EXPECT_NEAR(m.value, sum / 5.0, 1e-15);
  double table = 0;
  for (const auto& pv : m.per_video) table += pv.auroc;
  EXPECT_NEAR(m.value, table / double(m.per_video.size()), 1e-12);
}

// ---- grid search ----

namespace {

std::vector<ScoredVideo> rd_only_separates(Rng& rng) {
  std::vector<ScoredVideo> vs(2);
  for (auto& v : vs) {
    for (int i = 0; i < 60; ++i) {
      const std::uint8_t y = i % 3 == 0;
      v.labels.push_back(y);
      v.pr.push_back(rng.normal());
      v.pp.push_back(rng.normal());
      v.rd.push_back(y ? rng.uniform(0.6, 1.0) : rng.uniform(0.0, 0.4));
    }
  }
  return vs;
}

}  // namespace

TEST(GridSearch, UnitGridHasSevenCandidates) {
  Rng rng(9);
  const auto r = grid_search_weights(rd_only_separates(rng), {0, 1, 0, 1}, {0.0, 1.0, 1.0});
  EXPECT_EQ(r.table.size(), 7u);
  for (const auto& c : r.table) EXPECT_FALSE(c.weights.alpha == 0 && c.weights.beta == 0 && c.weights.gamma == 0);
}

TEST(GridSearch, RdOnlySeparationPicksRd) {
  Rng rng(10);
  const auto vs = rd_only_separates(rng);
  const auto r = grid_search_weights(vs, {0, 1, 0, 1}, {0.0, 3.0, 0.5});
  EXPECT_GT(r.best.gamma, 0.0);
  EXPECT_EQ(r.best_micro, 1.0);
  EXPECT_EQ(r.best_micro, auroc_micro(fuse_videos(vs, {0, 0, 1}, {0, 1, 0, 1})));
  // Lexicographic tie break: every alpha = beta = 0 point scores 1, the first is (0, 0, 0.5).
  EXPECT_EQ(r.best, (FusionWeights{0, 0, 0.5}));
}

TEST(GridSearch, BestIsAtLeastDefaultWeights) {
  Rng rng(11);
  std::vector<ScoredVideo> vs(3);
  for (auto& v : vs) {
    for (int i = 0; i < 80; ++i) {
      const std::uint8_t y = rng.below(4) == 0;
      v.labels.push_back(y);
      v.pr.push_back(rng.normal() + 0.5 * y);
      v.pp.push_back(rng.normal() + 0.8 * y);
      v.rd.push_back(rng.uniform(0, 1) * (y ? 1.0 : 0.8));
    }
  }
  const TrainStats st{0.1, 1.2, -0.2, 0.9};
  const auto r = grid_search_weights(vs, st, {0.0, 3.0, 0.25});
  EXPECT_EQ(r.table.size(), 13u * 13u * 13u - 1u);
  EXPECT_GE(r.best_micro, auroc_micro(fuse_videos(vs, {1, 1, 1}, st)));
  for (const auto& c : r.table) EXPECT_LE(c.micro, r.best_micro);
}

TEST(GridSearch, GridValuesLandOnDecimals) {
  const Vector v = grid_values({0.0, 3.0, 0.1});
  ASSERT_EQ(v.size(), 31u);
  EXPECT_EQ(v[15], 1.5);
  EXPECT_EQ(v[2], 0.2);
  EXPECT_EQ(v[13], 1.3);
  EXPECT_EQ(v.back(), 3.0);
  EXPECT_THROW(grid_values({0.0, 3.0, 0.0}), ConfigError);
}

TEST(GridSearch, SingleClassValidationIsUndefined) {
  ScoredVideo v{"v", {1, 2}, {1, 2}, {0.1, 0.2}, {0, 0}};
  EXPECT_THROW(grid_search_weights({v}, {}, {0, 1, 1}), UndefinedMetricError);
}

// ---- ablation layout ----

TEST(AblationLayout, SevenStreamSubsets) {
  const auto subsets = all_stream_subsets();
  ASSERT_EQ(subsets.size(), 7u);
  for (std::size_t i = 0; i < subsets.size(); ++i) {
    EXPECT_FALSE(subsets[i].empty());
    for (std::size_t j = 0; j < i; ++j) EXPECT_FALSE(subsets[i] == subsets[j]);
  }
}

TEST(AblationLayout, DefaultWindowsAndDims) {
  const AblationConfig c;
  EXPECT_EQ(c.windows, (std::vector<std::size_t>{4, 8, 16, 64}));
  EXPECT_EQ(c.dims, (std::vector<std::size_t>{2, 3}));
}
