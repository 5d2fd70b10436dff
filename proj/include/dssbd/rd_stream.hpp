#pragma once

// Repetition detection stream.
//
// Every frame of a window is embedded from its pose (and one-frame velocity)
// by a small MLP. Pairwise negative squared distances between embeddings,
// softmaxed row by row, give the temporal self-similarity matrix M. Frame i
// is classified from row i of M, read as a folded lag profile
// r[k] = M(i, i+k) + M(i, i-k), so the classifier sees how much similarity
// mass sits at each temporal offset regardless of where i is in the window.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "dssbd/data.hpp"
#include "dssbd/errors.hpp"
#include "dssbd/numkit.hpp"
#include "dssbd/streams.hpp"

namespace dssbd {

using FrameEmbedding = Vector;

// Row-stochastic T x T self-similarity matrix.
struct SimMatrix {
  Matrix values;
  std::size_t size() const noexcept { return values.rows(); }
};

struct RDParams {
  Dense embed_hidden;       // embed_hidden_dim x input features, tanh
  Dense embed_out;          // e x embed_hidden_dim
  Dense classifier_hidden;  // classifier_hidden_dim x T, tanh
  Dense classifier_out;     // 1 x classifier_hidden_dim

  template <class Self, class F>
  static void visit(Self& self, F& f) {
    visit_prefixed(self.embed_hidden, "embed_hidden", f);
    visit_prefixed(self.embed_out, "embed_out", f);
    visit_prefixed(self.classifier_hidden, "classifier_hidden", f);
    visit_prefixed(self.classifier_out, "classifier_out", f);
  }
  template <class F>
  void for_each_param(F&& f) { visit(*this, f); }
  template <class F>
  void for_each_param(F&& f) const { visit(*this, f); }

  bool operator==(const RDParams&) const = default;
};

struct RDConfig {
  std::size_t embedding_dim = 32;
  std::size_t embed_hidden_dim = 64;
  std::size_t classifier_hidden_dim = 32;
  bool use_velocity = true;
  TrainHyper train;
};

struct RDModel {
  std::size_t keypoints = 0;
  std::size_t dims = 0;
  std::size_t window = 0;
  std::size_t embedding_dim = 0;
  bool use_velocity = true;
  RDParams params;
  std::uint64_t seed = 0;
  std::size_t epochs_run = 0;
  double final_loss = 0.0;

  std::size_t input_dim() const noexcept { return keypoints * dims * (use_velocity ? 2 : 1); }
  bool operator==(const RDModel&) const = default;
};

inline RDModel init_rd_model(std::size_t keypoints, std::size_t dims, std::size_t window, const RDConfig& cfg,
                             std::uint64_t seed) {
  if (keypoints < 2 || (dims != 2 && dims != 3) || window < 2 || cfg.embedding_dim == 0 ||
      cfg.embed_hidden_dim == 0 || cfg.classifier_hidden_dim == 0) {
    throw UsageError("init_rd_model: invalid shape");
  }
  Rng rng(derive_seed(seed, "rd.init"));
  RDModel m;
  m.keypoints = keypoints;
  m.dims = dims;
  m.window = window;
  m.embedding_dim = cfg.embedding_dim;
  m.use_velocity = cfg.use_velocity;
  m.seed = seed;
  m.params.embed_hidden = Dense::xavier(cfg.embed_hidden_dim, m.input_dim(), rng);
  m.params.embed_out = Dense::xavier(cfg.embedding_dim, cfg.embed_hidden_dim, rng);
  m.params.classifier_hidden = Dense::xavier(cfg.classifier_hidden_dim, window, rng);
  m.params.classifier_out = Dense::xavier(1, cfg.classifier_hidden_dim, rng);
  return m;
}

// Pre-softmax similarities -||x_i - x_j||^2.
inline Matrix negative_sq_distances(const std::vector<FrameEmbedding>& x) {
  const std::size_t T = x.size();
  Matrix d(T, T, 0.0);
  for (std::size_t i = 0; i < T; ++i) {
    for (std::size_t j = i + 1; j < T; ++j) {
      const double v = -squared_distance(x[i], x[j]);
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return d;
}

inline SimMatrix self_similarity(const std::vector<FrameEmbedding>& x) {
  if (x.size() < 2) throw UsageError("self_similarity: need at least 2 embeddings");
  for (const auto& e : x) {
    if (e.size() != x.front().size()) throw DimensionError("self_similarity: embeddings differ in dimension");
  }
  const Matrix d = negative_sq_distances(x);
  SimMatrix m{Matrix(d.rows(), d.cols())};
  for (std::size_t i = 0; i < d.rows(); ++i) {
    const Vector row = softmax_row(d.row(i));
    std::copy(row.begin(), row.end(), m.values.row(i).begin());
  }
  return m;
}

// Folded lag profile of row i: r[0] = M(i,i), r[k] = M(i,i+k) + M(i,i-k)
// with out-of-window terms omitted.
inline Vector lag_profile(const Matrix& m, std::size_t i) {
  const std::size_t T = m.rows();
  Vector r(T, 0.0);
  r[0] = m(i, i);
  for (std::size_t k = 1; k < T; ++k) {
    if (i + k < T) r[k] += m(i, i + k);
    if (i >= k) r[k] += m(i, i - k);
  }
  return r;
}

// Plain-text T x T grid, one row per line.
inline void write_sim_matrix(std::ostream& os, const SimMatrix& m) {
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (std::size_t j = 0; j < m.size(); ++j) {
      if (j) os << ' ';
      os << format_double(m.values(i, j));
    }
    os << '\n';
  }
}

namespace rd_detail {

inline void check_window(const RDModel& m, const Window& w) {
  if (w.keypoints() != m.keypoints || w.dims() != m.dims || w.length() != m.window) {
    throw DimensionError("RD: window K/d/T (" + std::to_string(w.keypoints()) + "/" + std::to_string(w.dims()) + "/" +
                         std::to_string(w.length()) + ") differs from model (" + std::to_string(m.keypoints) + "/" +
                         std::to_string(m.dims) + "/" + std::to_string(m.window) + ")");
  }
}

// Pose features, optionally followed by the backward difference to the
// previous frame (zero for the first frame of the window).
inline std::vector<Vector> frame_features(const Window& w, bool velocity) {
  std::vector<Vector> out;
  out.reserve(w.length());
  for (std::size_t t = 0; t < w.length(); ++t) {
    Vector f = w.frames[t].coords;
    if (velocity) {
      const std::size_t n = f.size();
      f.resize(2 * n, 0.0);
      if (t > 0) {
        for (std::size_t k = 0; k < n; ++k) f[n + k] = w.frames[t].coords[k] - w.frames[t - 1].coords[k];
      }
    }
    out.push_back(std::move(f));
  }
  return out;
}

struct Trace {
  std::vector<Vector> features, hidden;  // hidden is post-tanh
  std::vector<FrameEmbedding> embeddings;
  Matrix sim;
  std::vector<Vector> profiles, class_hidden;
  Vector logits, probs;
};

inline Trace forward(const RDParams& p, const Window& w, bool velocity) {
  Trace tr;
  const std::size_t T = w.length();
  tr.features = frame_features(w, velocity);
  for (const Vector& f : tr.features) {
    Vector h = p.embed_hidden.forward(f);
    for (double& x : h) x = std::tanh(x);
    tr.embeddings.push_back(p.embed_out.forward(h));
    tr.hidden.push_back(std::move(h));
  }
  tr.sim = self_similarity(tr.embeddings).values;
  tr.logits.resize(T);
  tr.probs.resize(T);
  for (std::size_t i = 0; i < T; ++i) {
    tr.profiles.push_back(lag_profile(tr.sim, i));
    Vector q = p.classifier_hidden.forward(tr.profiles.back());
    for (double& x : q) x = std::tanh(x);
    tr.logits[i] = p.classifier_out.forward(q)[0];
    tr.probs[i] = sigmoid(tr.logits[i]);
    tr.class_hidden.push_back(std::move(q));
  }
  return tr;
}

// Binary cross-entropy from a logit, stable for large |logit|.
inline double bce_with_logit(double logit, double label) {
  return std::max(logit, 0.0) - logit * label + std::log1p(std::exp(-std::abs(logit)));
}

// Adds scale * d(summed frame BCE)/dparams into grads; returns the sum.
inline double loss_and_grad(const RDParams& p, const Window& w, std::span<const std::uint8_t> labels, bool velocity,
                            RDParams& grads, double scale = 1.0) {
  const std::size_t T = w.length();
  if (labels.size() != T) throw DimensionError("RD: label count differs from window length");
  const Trace tr = forward(p, w, velocity);
  double loss = 0.0;
  Matrix dsim(T, T, 0.0);
  for (std::size_t i = 0; i < T; ++i) {
    const double y = labels[i] ? 1.0 : 0.0;
    loss += bce_with_logit(tr.logits[i], y);
    const Vector dlogit{(tr.probs[i] - y) * scale};
    Vector dq = p.classifier_out.backward(tr.class_hidden[i], dlogit, grads.classifier_out);
    for (std::size_t k = 0; k < dq.size(); ++k) dq[k] *= 1.0 - tr.class_hidden[i][k] * tr.class_hidden[i][k];
    const Vector dr = p.classifier_hidden.backward(tr.profiles[i], dq, grads.classifier_hidden);
    dsim(i, i) += dr[0];
    for (std::size_t k = 1; k < T; ++k) {
      if (i + k < T) dsim(i, i + k) += dr[k];
      if (i >= k) dsim(i, i - k) += dr[k];
    }
  }
  const std::size_t e = tr.embeddings.front().size();
  std::vector<Vector> dx(T, Vector(e, 0.0));
  for (std::size_t i = 0; i < T; ++i) {
    const Vector dd = softmax_row_backward(tr.sim.row(i), dsim.row(i));
    for (std::size_t j = 0; j < T; ++j) {
      if (j == i || dd[j] == 0.0) continue;
      // d(-|xi-xj|^2)/dxi = -2 (xi - xj)
      for (std::size_t k = 0; k < e; ++k) {
        const double diff = tr.embeddings[i][k] - tr.embeddings[j][k];
        dx[i][k] -= 2.0 * dd[j] * diff;
        dx[j][k] += 2.0 * dd[j] * diff;
      }
    }
  }
  for (std::size_t t = 0; t < T; ++t) {
    Vector dh = p.embed_out.backward(tr.hidden[t], dx[t], grads.embed_out);
    for (std::size_t k = 0; k < dh.size(); ++k) dh[k] *= 1.0 - tr.hidden[t][k] * tr.hidden[t][k];
    p.embed_hidden.backward(tr.features[t], dh, grads.embed_hidden);
  }
  return loss;
}

}  // namespace rd_detail

inline std::vector<FrameEmbedding> embed_frames(const RDModel& m, const Window& w) {
  rd_detail::check_window(m, w);
  std::vector<FrameEmbedding> out;
  for (const Vector& f : rd_detail::frame_features(w, m.use_velocity)) {
    Vector h = m.params.embed_hidden.forward(f);
    for (double& x : h) x = std::tanh(x);
    out.push_back(m.params.embed_out.forward(h));
  }
  return out;
}

inline SimMatrix window_similarity(const RDModel& m, const Window& w) { return self_similarity(embed_frames(m, w)); }

// Per-frame repetition probability in [0, 1].
inline Vector score_rd(const RDModel& m, const Window& w) {
  rd_detail::check_window(m, w);
  return rd_detail::forward(m.params, w, m.use_velocity).probs;
}

inline StreamScores score_rd_sequence(const RDModel& m, const PoseSequence& seq) {
  const auto windows = window_sequence(seq, m.window, WindowPurpose::score);
  std::vector<Vector> per;
  per.reserve(windows.size());
  for (const Window& w : windows) per.push_back(score_rd(m, w));
  return {seq.video_id, stitch_window_scores(windows, per, seq.size())};
}

// ---------------------------------------------------------------------------
// Repetition corpus synthesized from normal training videos
// ---------------------------------------------------------------------------

struct RepetitionCorpusConfig {
  std::size_t window = 64;  // T
  std::size_t windows = 400;
  double positive_fraction = 0.5;
  std::size_t loop_min = 4;
  std::size_t loop_max = 32;
  // Uniform noise amplitude on spliced positives, in normalized units
  // (the normalized pose has a unit bounding-box diagonal).
  double noise = 0.1;
  std::uint64_t seed = 0;
};

struct LabeledWindow {
  Window window;
  std::vector<std::uint8_t> labels;
  std::size_t loop_length = 0;  // 0 for negatives
};

// Positives repeat a random sub-segment end to end (plus uniform noise) to
// fill T frames; negatives are unmodified normal windows.
inline std::vector<LabeledWindow> make_repetition_corpus(const std::vector<PoseSequence>& train,
                                                         const RepetitionCorpusConfig& cfg) {
  if (train.empty()) throw UsageError("repetition corpus: no training sequences");
  if (cfg.window < 2) throw UsageError("repetition corpus: T must be >= 2");
  if (cfg.loop_min < 2 || cfg.loop_max < cfg.loop_min || cfg.loop_max > cfg.window) {
    throw UsageError("repetition corpus: loop range must satisfy 2 <= min <= max <= T");
  }
  if (!(cfg.positive_fraction >= 0.0 && cfg.positive_fraction <= 1.0)) {
    throw UsageError("repetition corpus: positive fraction must lie in [0, 1]");
  }
  std::vector<std::size_t> loop_sources, window_sources;
  for (std::size_t s = 0; s < train.size(); ++s) {
    if (train[s].size() >= cfg.loop_min) loop_sources.push_back(s);
    if (train[s].size() >= cfg.window) window_sources.push_back(s);
  }
  const std::size_t n_pos = static_cast<std::size_t>(std::llround(cfg.positive_fraction * static_cast<double>(cfg.windows)));
  if (n_pos > 0 && loop_sources.empty()) throw UsageError("repetition corpus: sequences shorter than the minimum loop length");
  if (n_pos < cfg.windows && window_sources.empty()) throw UsageError("repetition corpus: sequences shorter than T");

  Rng rng(derive_seed(cfg.seed, "rd.corpus"));
  std::vector<std::uint8_t> positive(cfg.windows, 0);
  std::fill(positive.begin(), positive.begin() + static_cast<std::ptrdiff_t>(n_pos), 1);
  rng.shuffle(positive);

  std::vector<LabeledWindow> out;
  out.reserve(cfg.windows);
  for (std::size_t n = 0; n < cfg.windows; ++n) {
    LabeledWindow lw;
    if (positive[n]) {
      const PoseSequence& seq = train[loop_sources[rng.below(loop_sources.size())]];
      const std::size_t L = static_cast<std::size_t>(rng.between(
          static_cast<long>(cfg.loop_min), static_cast<long>(std::min(cfg.loop_max, seq.size()))));
      const std::size_t start = rng.below(seq.size() - L + 1);
      std::vector<PoseFrame> loop;
      for (std::size_t t = 0; t < L; ++t) loop.push_back(normalize_pose(seq.frames[start + t]));
      lw.window = Window{seq.video_id + "#loop", start, cfg.window, {}};
      for (std::size_t t = 0; t < cfg.window; ++t) {
        PoseFrame f = loop[t % L];
        f.frame_index = t;
        for (double& v : f.coords) v += rng.uniform(-cfg.noise, cfg.noise);
        lw.window.frames.push_back(std::move(f));
      }
      lw.labels.assign(cfg.window, 1);
      lw.loop_length = L;
    } else {
      const PoseSequence& seq = train[window_sources[rng.below(window_sources.size())]];
      const std::size_t start = rng.below(seq.size() - cfg.window + 1);
      lw.window = Window{seq.video_id, start, cfg.window, {}};
      for (std::size_t t = 0; t < cfg.window; ++t) lw.window.frames.push_back(normalize_pose(seq.frames[start + t]));
      lw.labels.assign(cfg.window, 0);
    }
    out.push_back(std::move(lw));
  }
  return out;
}

struct RDTrainResult {
  RDModel model;
  TrainLog log;
};

inline RDTrainResult train_rd(const std::vector<LabeledWindow>& corpus, const RDConfig& cfg) {
  if (corpus.empty()) throw UsageError("train_rd: empty corpus");
  bool has_pos = false, has_neg = false;
  const Window& w0 = corpus.front().window;
  for (const LabeledWindow& lw : corpus) {
    if (lw.window.keypoints() != w0.keypoints() || lw.window.dims() != w0.dims() || lw.window.length() != w0.length()) {
      throw DimensionError("train_rd: windows differ in K, d or T");
    }
    for (auto l : lw.labels) (l ? has_pos : has_neg) = true;
  }
  if (!has_pos || !has_neg) throw UsageError("train_rd: corpus must contain both repetitive and non-repetitive frames");
  RDModel m = init_rd_model(w0.keypoints(), w0.dims(), w0.length(), cfg, cfg.train.seed);
  TrainHyper h = cfg.train;
  h.seed = derive_seed(cfg.train.seed, "rd.train");
  const double scale = 1.0 / static_cast<double>(w0.length());
  TrainLog log = train_adam(m.params, corpus.size(), h, scale,
                            [&](const RDParams& p, std::size_t i, RDParams& g, Rng&) {
                              return rd_detail::loss_and_grad(p, corpus[i].window, corpus[i].labels, m.use_velocity, g);
                            });
  m.epochs_run = log.epoch_loss.size();
  m.final_loss = log.epoch_loss.empty() ? 0.0 : log.epoch_loss.back();
  return {std::move(m), std::move(log)};
}

}  // namespace dssbd
