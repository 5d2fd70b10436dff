#pragma once

// Score fusion with training-set z-normalization, frame-level AUROC
// (micro over all frames, macro over videos) and the fusion-weight grid
// search.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "dssbd/errors.hpp"
#include "dssbd/numkit.hpp"

namespace dssbd {

inline constexpr double kSigmaFloor = 1e-8;

struct TrainStats {
  double pr_mean = 0.0;
  double pr_std = 1.0;
  double pp_mean = 0.0;
  double pp_std = 1.0;
  // Set when the measured deviation fell below kSigmaFloor and was replaced.
  bool pr_floored = false;
  bool pp_floored = false;

  bool operator==(const TrainStats&) const = default;
};

struct FusionWeights {
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 1.0;

  bool operator==(const FusionWeights&) const = default;
};

inline void validate_weights(const FusionWeights& w) {
  for (double v : {w.alpha, w.beta, w.gamma}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("fusion weights must be finite and nonnegative");
  }
  if (w.alpha == 0.0 && w.beta == 0.0 && w.gamma == 0.0) throw ConfigError("at least one fusion weight must be > 0");
}

struct Moments {
  double mean = 0.0;
  double std = 0.0;
};

// Population mean and standard deviation (Welford).
inline Moments population_moments(std::span<const double> x) {
  if (x.empty()) throw UsageError("moments of an empty score array");
  double mean = 0.0, m2 = 0.0;
  std::size_t n = 0;
  for (double v : x) {
    ++n;
    const double delta = v - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (v - mean);
  }
  return {mean, std::sqrt(std::max(0.0, m2 / static_cast<double>(n)))};
}

struct StreamMoments {
  double mean = 0.0;
  double std = 1.0;
  bool floored = false;
};

// Population moments with the standard deviation floored at kSigmaFloor.
inline StreamMoments fit_stream_moments(std::span<const double> x) {
  const Moments m = population_moments(x);
  if (m.std < kSigmaFloor) return {m.mean, kSigmaFloor, true};
  return {m.mean, m.std, false};
}

inline TrainStats fit_train_stats(std::span<const double> pr, std::span<const double> pp) {
  if (pr.empty() || pp.empty()) throw UsageError("fit_train_stats: empty score array");
  const StreamMoments a = fit_stream_moments(pr);
  const StreamMoments b = fit_stream_moments(pp);
  return {a.mean, a.std, b.mean, b.std, a.floored, b.floored};
}

// S = alpha * z(pr) + beta * z(pp) + gamma * rd. A stream whose weight is
// zero is never read.
inline Vector fuse(std::span<const double> pr, std::span<const double> pp, std::span<const double> rd,
                   const FusionWeights& w, const TrainStats& st) {
  const std::size_t n = std::max({pr.size(), pp.size(), rd.size()});
  auto check = [&](std::span<const double> s, double weight, const char* name) {
    if (weight != 0.0 && s.size() != n) throw DimensionError(std::string("fuse: ") + name + " length mismatch");
  };
  check(pr, w.alpha, "pr");
  check(pp, w.beta, "pp");
  check(rd, w.gamma, "rd");
  Vector out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    if (w.alpha != 0.0) s += w.alpha * ((pr[i] - st.pr_mean) / st.pr_std);
    if (w.beta != 0.0) s += w.beta * ((pp[i] - st.pp_mean) / st.pp_std);
    if (w.gamma != 0.0) s += w.gamma * rd[i];
    out[i] = s;
  }
  return out;
}

// Probability that a random positive outscores a random negative, ties
// counted as one half. Computed from tie groups in ascending score order, so
// the numerator is an exact half-integer count.
inline double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw DimensionError("auroc: scores and labels differ in length");
  std::size_t npos = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (std::isnan(scores[i])) throw UsageError("auroc: NaN score");
    if (labels[i]) ++npos;
  }
  const std::size_t nneg = scores.size() - npos;
  if (npos == 0 || nneg == 0) throw UndefinedMetricError("auroc: labels contain a single class");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double credit = 0.0;
  std::size_t neg_below = 0;
  for (std::size_t g = 0; g < idx.size();) {
    std::size_t h = g, p = 0, q = 0;
    while (h < idx.size() && scores[idx[h]] == scores[idx[g]]) {
      (labels[idx[h]] ? p : q) += 1;
      ++h;
    }
    credit += static_cast<double>(p) * static_cast<double>(neg_below) + 0.5 * static_cast<double>(p) * static_cast<double>(q);
    neg_below += q;
    g = h;
  }
  return credit / (static_cast<double>(npos) * static_cast<double>(nneg));
}

inline bool has_both_classes(std::span<const std::uint8_t> labels) {
  bool pos = false, neg = false;
  for (auto l : labels) (l ? pos : neg) = true;
  return pos && neg;
}

// Per-video frame scores with ground truth.
struct LabeledScores {
  std::string video_id;
  Vector scores;
  std::vector<std::uint8_t> labels;
};

inline double auroc_micro(const std::vector<LabeledScores>& videos) {
  if (videos.empty()) throw UsageError("auroc_micro: no videos");
  Vector s;
  std::vector<std::uint8_t> l;
  for (const auto& v : videos) {
    if (v.scores.size() != v.labels.size()) throw DimensionError("auroc_micro: " + v.video_id + " length mismatch");
    s.insert(s.end(), v.scores.begin(), v.scores.end());
    l.insert(l.end(), v.labels.begin(), v.labels.end());
  }
  return auroc(s, l);
}

struct VideoAuroc {
  std::string video_id;
  double auroc = 0.0;
};

struct MacroAuroc {
  double value = 0.0;
  std::vector<VideoAuroc> per_video;
  std::vector<std::string> skipped;  // single-class videos
};

inline MacroAuroc auroc_macro(const std::vector<LabeledScores>& videos) {
  if (videos.empty()) throw UsageError("auroc_macro: no videos");
  MacroAuroc out;
  double sum = 0.0;
  for (const auto& v : videos) {
    if (v.scores.size() != v.labels.size()) throw DimensionError("auroc_macro: " + v.video_id + " length mismatch");
    if (!has_both_classes(v.labels)) {
      out.skipped.push_back(v.video_id);
      continue;
    }
    out.per_video.push_back({v.video_id, auroc(v.scores, v.labels)});
    sum += out.per_video.back().auroc;
  }
  if (out.per_video.empty()) throw UndefinedMetricError("auroc_macro: every video is single-class");
  out.value = sum / static_cast<double>(out.per_video.size());
  return out;
}

// Raw per-frame scores of all three streams for one video.
struct ScoredVideo {
  std::string video_id;
  Vector pr, pp, rd;
  std::vector<std::uint8_t> labels;  // empty when unlabeled
};

inline std::vector<LabeledScores> fuse_videos(const std::vector<ScoredVideo>& videos, const FusionWeights& w,
                                              const TrainStats& st) {
  std::vector<LabeledScores> out;
  out.reserve(videos.size());
  for (const auto& v : videos) out.push_back({v.video_id, fuse(v.pr, v.pp, v.rd, w, st), v.labels});
  return out;
}

struct EvalReport {
  double micro = 0.0;
  double macro = 0.0;
  std::vector<VideoAuroc> per_video;
  std::vector<std::string> skipped;
  FusionWeights weights;
  std::size_t window = 0;
  std::uint64_t seed = 0;
};

inline EvalReport evaluate(const std::vector<LabeledScores>& fused, const FusionWeights& w, std::size_t window,
                           std::uint64_t seed) {
  EvalReport r;
  r.micro = auroc_micro(fused);
  MacroAuroc m = auroc_macro(fused);
  r.macro = m.value;
  r.per_video = std::move(m.per_video);
  r.skipped = std::move(m.skipped);
  r.weights = w;
  r.window = window;
  r.seed = seed;
  return r;
}

// ---------------------------------------------------------------------------
// Weight grid search
// ---------------------------------------------------------------------------

struct GridSearchConfig {
  double lo = 0.0;
  double hi = 3.0;
  double step = 0.1;
};

struct GridCandidate {
  FusionWeights weights;
  double micro = 0.0;
};

struct GridSearchResult {
  FusionWeights best;
  double best_micro = 0.0;
  std::vector<GridCandidate> table;  // in evaluation order
};

// Grid points lo + (hi - lo) * k / n, so 1.5 and 0.2 land exactly on the
// decimal they print as.
inline Vector grid_values(const GridSearchConfig& g) {
  if (!(g.step > 0.0) || !(g.hi >= g.lo) || g.lo < 0.0) throw ConfigError("grid search: need step > 0, 0 <= lo <= hi");
  const auto n = static_cast<std::size_t>(std::llround((g.hi - g.lo) / g.step));
  Vector v;
  for (std::size_t k = 0; k <= n; ++k) {
    v.push_back(n == 0 ? g.lo : g.lo + (g.hi - g.lo) * static_cast<double>(k) / static_cast<double>(n));
  }
  return v;
}

// Exhaustive search maximizing micro AUROC. The all-zero point is skipped;
// ties keep the lexicographically smallest (alpha, beta, gamma).
inline GridSearchResult grid_search_weights(const std::vector<ScoredVideo>& videos, const TrainStats& st,
                                            const GridSearchConfig& g) {
  Vector zpr, zpp, rd;
  std::vector<std::uint8_t> labels;
  for (const auto& v : videos) {
    if (v.pr.size() != v.labels.size() || v.pp.size() != v.labels.size() || v.rd.size() != v.labels.size()) {
      throw DimensionError("grid search: " + v.video_id + " stream lengths differ");
    }
    for (std::size_t i = 0; i < v.labels.size(); ++i) {
      zpr.push_back((v.pr[i] - st.pr_mean) / st.pr_std);
      zpp.push_back((v.pp[i] - st.pp_mean) / st.pp_std);
      rd.push_back(v.rd[i]);
    }
    labels.insert(labels.end(), v.labels.begin(), v.labels.end());
  }
  if (!has_both_classes(labels)) throw UndefinedMetricError("grid search: validation labels contain a single class");
  const Vector values = grid_values(g);
  GridSearchResult res;
  bool first = true;
  Vector s(labels.size());
  for (double a : values) {
    for (double b : values) {
      for (double c : values) {
        if (a == 0.0 && b == 0.0 && c == 0.0) continue;
        for (std::size_t i = 0; i < s.size(); ++i) {
          double v = 0.0;
          if (a != 0.0) v += a * zpr[i];
          if (b != 0.0) v += b * zpp[i];
          if (c != 0.0) v += c * rd[i];
          s[i] = v;
        }
        const double m = auroc(s, labels);
        res.table.push_back({{a, b, c}, m});
        if (first || m > res.best_micro) {
          res.best = {a, b, c};
          res.best_micro = m;
          first = false;
        }
      }
    }
  }
  if (first) throw ConfigError("grid search: grid has no admissible point");
  return res;
}

}  // namespace dssbd
