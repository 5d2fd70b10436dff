#pragma once

// End-to-end orchestration: train the requested streams on normal videos,
// fit the z-normalization statistics, score test videos, fuse and evaluate.
// Every stream draws its seed from the run seed and its own name only, so a
// stream trains identically whatever else is trained alongside it.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dssbd/data.hpp"
#include "dssbd/fusion_eval.hpp"
#include "dssbd/pp_stream.hpp"
#include "dssbd/pr_stream.hpp"
#include "dssbd/rd_stream.hpp"
#include "dssbd/streams.hpp"

namespace dssbd {

struct StreamSet {
  bool pr = true;
  bool pp = true;
  bool rd = true;

  bool empty() const noexcept { return !pr && !pp && !rd; }
  bool contains(Stream s) const noexcept {
    return s == Stream::pr ? pr : s == Stream::pp ? pp : rd;
  }
  std::string label() const {
    std::string s;
    for (Stream st : {Stream::pr, Stream::pp, Stream::rd}) {
      if (!contains(st)) continue;
      if (!s.empty()) s += '+';
      s += stream_name(st);
    }
    return s;
  }
  // Weight 1 on every member stream, 0 elsewhere.
  FusionWeights unit_weights() const { return {pr ? 1.0 : 0.0, pp ? 1.0 : 0.0, rd ? 1.0 : 0.0}; }
  bool operator==(const StreamSet&) const = default;
};

// The 7 non-empty subsets of {PR, PP, RD}, ordered by bitmask.
inline std::vector<StreamSet> all_stream_subsets() {
  std::vector<StreamSet> out;
  for (unsigned mask = 1; mask < 8; ++mask) out.push_back({(mask & 1u) != 0, (mask & 2u) != 0, (mask & 4u) != 0});
  return out;
}

struct PipelineConfig {
  std::uint64_t seed = 0;
  std::size_t window = 64;  // T
  PRConfig pr;
  PPConfig pp;
  RDConfig rd;
  RepetitionCorpusConfig corpus;
  FusionWeights weights;
};

// Seeds and window-dependent settings derived from the run seed and T.
inline PipelineConfig resolve(PipelineConfig c) {
  if (c.window < 2) throw ConfigError("window T must be >= 2");
  c.pr.train.seed = derive_seed(c.seed, "stream.pr");
  c.pp.train.seed = derive_seed(c.seed, "stream.pp");
  c.rd.train.seed = derive_seed(c.seed, "stream.rd");
  c.corpus.seed = derive_seed(c.seed, "stream.rd.corpus");
  c.corpus.window = c.window;
  // At least two repeats of a loop must fit in one window.
  c.corpus.loop_max = std::max<std::size_t>(2, std::min(c.corpus.loop_max, c.window / 2));
  c.corpus.loop_min = std::clamp<std::size_t>(c.corpus.loop_min, 2, c.corpus.loop_max);
  return c;
}

struct TrainedPipeline {
  std::size_t keypoints = 0;
  std::size_t dims = 0;
  std::size_t window = 0;
  std::optional<PRModel> pr;
  std::optional<PPModel> pp;
  std::optional<RDModel> rd;
  TrainStats stats;
  std::optional<TrainLog> pr_log, pp_log, rd_log;
};

inline void require_unlabeled(const std::vector<PoseSequence>& train) {
  for (const auto& s : train) {
    if (s.has_labels()) {
      throw ContractError("unsupervised contract violated: training video " + s.video_id + " carries labels");
    }
  }
}

inline void require_uniform_shape(const std::vector<PoseSequence>& seqs) {
  if (seqs.empty()) throw UsageError("no sequences");
  for (const auto& s : seqs) {
    validate_sequence(s);
    if (s.keypoints != seqs.front().keypoints || s.dims != seqs.front().dims) {
      throw DimensionError("sequences differ in K or d (" + s.video_id + ")");
    }
  }
}

inline TrainedPipeline train_pipeline(const std::vector<PoseSequence>& train, const PipelineConfig& config,
                                      StreamSet streams = {}) {
  if (streams.empty()) throw UsageError("no streams selected for training");
  require_unlabeled(train);
  require_uniform_shape(train);
  const PipelineConfig c = resolve(config);
  TrainedPipeline tp;
  tp.keypoints = train.front().keypoints;
  tp.dims = train.front().dims;
  tp.window = c.window;

  if (streams.pr) {
    auto r = train_pr(window_sequences(train, c.window, WindowPurpose::train), c.pr);
    tp.pr = std::move(r.model);
    tp.pr_log = std::move(r.log);
  }
  if (streams.pp) {
    auto r = train_pp(window_sequences(train, c.window + 1, WindowPurpose::train), c.pp);
    tp.pp = std::move(r.model);
    tp.pp_log = std::move(r.log);
  }
  if (streams.rd) {
    auto r = train_rd(make_repetition_corpus(train, c.corpus), c.rd);
    tp.rd = std::move(r.model);
    tp.rd_log = std::move(r.log);
  }

  // z-normalization statistics over every training frame.
  Vector pr_all, pp_all;
  for (const auto& s : train) {
    if (tp.pr) {
      const auto sc = score_pr_sequence(*tp.pr, s).scores;
      pr_all.insert(pr_all.end(), sc.begin(), sc.end());
    }
    if (tp.pp) {
      const auto sc = score_pp_sequence(*tp.pp, s).scores;
      pp_all.insert(pp_all.end(), sc.begin(), sc.end());
    }
  }
  // Untrained streams keep the identity normalization (mean 0, sd 1).
  if (tp.pr) {
    const StreamMoments m = fit_stream_moments(pr_all);
    tp.stats.pr_mean = m.mean;
    tp.stats.pr_std = m.std;
    tp.stats.pr_floored = m.floored;
  }
  if (tp.pp) {
    const StreamMoments m = fit_stream_moments(pp_all);
    tp.stats.pp_mean = m.mean;
    tp.stats.pp_std = m.std;
    tp.stats.pp_floored = m.floored;
  }
  return tp;
}

// Moves one trained stream (model, log and its half of the statistics) from
// `src` into `dst`.
inline void merge_stream(TrainedPipeline& dst, TrainedPipeline&& src, Stream s) {
  dst.keypoints = src.keypoints;
  dst.dims = src.dims;
  dst.window = src.window;
  switch (s) {
    case Stream::pr:
      dst.pr = std::move(src.pr);
      dst.pr_log = std::move(src.pr_log);
      dst.stats.pr_mean = src.stats.pr_mean;
      dst.stats.pr_std = src.stats.pr_std;
      dst.stats.pr_floored = src.stats.pr_floored;
      break;
    case Stream::pp:
      dst.pp = std::move(src.pp);
      dst.pp_log = std::move(src.pp_log);
      dst.stats.pp_mean = src.stats.pp_mean;
      dst.stats.pp_std = src.stats.pp_std;
      dst.stats.pp_floored = src.stats.pp_floored;
      break;
    case Stream::rd:
      dst.rd = std::move(src.rd);
      dst.rd_log = std::move(src.rd_log);
      break;
  }
}

// Checkpoints must agree with the data they score.
inline void check_compatible(const TrainedPipeline& tp, const PoseSequence& seq) {
  auto mismatch = [&](const std::string& field, std::size_t model, std::size_t data) {
    if (model != data) {
      throw CompatibilityError(field, "checkpoint has " + std::to_string(model) + ", video " + seq.video_id +
                                          " has " + std::to_string(data));
    }
  };
  auto check = [&](std::size_t K, std::size_t d, std::size_t T) {
    mismatch("K", K, seq.keypoints);
    mismatch("d", d, seq.dims);
    mismatch("T", T, tp.window);
  };
  if (tp.pr) check(tp.pr->keypoints, tp.pr->dims, tp.pr->window);
  if (tp.pp) check(tp.pp->keypoints, tp.pp->dims, tp.pp->window);
  if (tp.rd) check(tp.rd->keypoints, tp.rd->dims, tp.rd->window);
}

// Raw per-frame scores of every trained stream; untrained streams are left
// empty.
inline std::vector<ScoredVideo> score_pipeline(const TrainedPipeline& tp, const std::vector<PoseSequence>& videos) {
  std::vector<ScoredVideo> out;
  for (const auto& s : videos) {
    validate_sequence(s);
    check_compatible(tp, s);
    ScoredVideo v;
    v.video_id = s.video_id;
    if (tp.pr) v.pr = score_pr_sequence(*tp.pr, s).scores;
    if (tp.pp) v.pp = score_pp_sequence(*tp.pp, s).scores;
    if (tp.rd) v.rd = score_rd_sequence(*tp.rd, s).scores;
    if (s.labels) v.labels = *s.labels;
    out.push_back(std::move(v));
  }
  return out;
}

inline EvalReport evaluate_scored(const std::vector<ScoredVideo>& scored, const TrainStats& stats,
                                  const FusionWeights& w, std::size_t window, std::uint64_t seed) {
  validate_weights(w);
  for (const auto& v : scored) {
    if (v.labels.empty()) throw MissingDataError("video " + v.video_id + " has no labels");
  }
  return evaluate(fuse_videos(scored, w, stats), w, window, seed);
}

}  // namespace dssbd
