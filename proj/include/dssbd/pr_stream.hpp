#pragma once

// Pose reconstruction stream: an LSTM sequence autoencoder over windows of
// flattened normalized poses. The per-frame anomaly score is the summed
// squared reconstruction error over the frame's keypoints.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dssbd/data.hpp"
#include "dssbd/errors.hpp"
#include "dssbd/numkit.hpp"
#include "dssbd/streams.hpp"

namespace dssbd {

struct PRParams {
  Dense input;          // hidden x K*d, followed by tanh
  LstmParams encoder;   // hidden -> hidden
  LstmParams decoder;   // hidden -> hidden, fed the code at every step
  Dense output;         // K*d x hidden

  template <class F>
  void for_each_param(F&& f) {
    visit_prefixed(input, "input", f);
    visit_prefixed(encoder, "encoder", f);
    visit_prefixed(decoder, "decoder", f);
    visit_prefixed(output, "output", f);
  }
  template <class F>
  void for_each_param(F&& f) const {
    visit_prefixed(input, "input", f);
    visit_prefixed(encoder, "encoder", f);
    visit_prefixed(decoder, "decoder", f);
    visit_prefixed(output, "output", f);
  }

  bool operator==(const PRParams&) const = default;
};

struct PRConfig {
  std::size_t hidden_dim = 64;
  TrainHyper train;
};

struct PRModel {
  std::size_t keypoints = 0;
  std::size_t dims = 0;
  std::size_t window = 0;
  std::size_t hidden_dim = 0;
  PRParams params;
  // Training metadata.
  std::uint64_t seed = 0;
  std::size_t epochs_run = 0;
  double final_loss = 0.0;

  std::size_t feature_dim() const noexcept { return keypoints * dims; }
  bool operator==(const PRModel&) const = default;
};

inline PRModel init_pr_model(std::size_t keypoints, std::size_t dims, std::size_t window, std::size_t hidden,
                             std::uint64_t seed) {
  if (keypoints < 2 || (dims != 2 && dims != 3) || window < 2 || hidden == 0) {
    throw UsageError("init_pr_model: invalid shape");
  }
  Rng rng(derive_seed(seed, "pr.init"));
  const std::size_t F = keypoints * dims;
  PRModel m{keypoints, dims, window, hidden, {}, seed, 0, 0.0};
  m.params.input = Dense::xavier(hidden, F, rng);
  m.params.encoder = LstmParams::xavier(hidden, hidden, rng);
  m.params.decoder = LstmParams::xavier(hidden, hidden, rng);
  m.params.output = Dense::xavier(F, hidden, rng);
  return m;
}

namespace pr_detail {

struct Trace {
  std::vector<Vector> embedded;
  std::vector<LstmCache> encoder;
  std::vector<LstmCache> decoder;  // step s reconstructs frame T-1-s
  std::vector<Vector> recon;       // indexed by frame
};

inline void check_window(const PRModel& m, const Window& w) {
  if (w.keypoints() != m.keypoints || w.dims() != m.dims) {
    throw DimensionError("PR: window has K=" + std::to_string(w.keypoints()) + " d=" + std::to_string(w.dims()) +
                         ", model expects K=" + std::to_string(m.keypoints) + " d=" + std::to_string(m.dims));
  }
  if (w.length() != m.window) {
    throw DimensionError("PR: window length " + std::to_string(w.length()) + " != model T " +
                         std::to_string(m.window));
  }
}

inline Trace forward(const PRParams& p, const Window& w) {
  const std::size_t T = w.length();
  const std::size_t H = p.encoder.hidden_dim;
  Trace tr;
  tr.embedded.reserve(T);
  tr.encoder.reserve(T);
  Vector h(H, 0.0), c(H, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    Vector e = p.input.forward(w.frames[t].coords);
    for (double& x : e) x = std::tanh(x);
    tr.encoder.push_back(lstm_cell_forward(p.encoder, e, h, c));
    h = tr.encoder.back().h;
    c = tr.encoder.back().c;
    tr.embedded.push_back(std::move(e));
  }
  const Vector code = h;
  std::fill(h.begin(), h.end(), 0.0);
  std::fill(c.begin(), c.end(), 0.0);
  tr.recon.resize(T);
  tr.decoder.reserve(T);
  for (std::size_t s = 0; s < T; ++s) {
    tr.decoder.push_back(lstm_cell_forward(p.decoder, code, h, c));
    h = tr.decoder.back().h;
    c = tr.decoder.back().c;
    tr.recon[T - 1 - s] = p.output.forward(h);
  }
  return tr;
}

// Adds d(scale * sum of squared errors)/dparams into grads; returns the
// unscaled sum.
inline double loss_and_grad(const PRParams& p, const Window& w, PRParams& grads, double scale = 1.0) {
  const std::size_t T = w.length();
  const std::size_t H = p.encoder.hidden_dim;
  const Trace tr = forward(p, w);
  double loss = 0.0;
  Vector dcode(H, 0.0), dh_next(H, 0.0), dc_next(H, 0.0);
  for (std::size_t s = T; s-- > 0;) {
    const std::size_t t = T - 1 - s;
    const Vector& x = w.frames[t].coords;
    Vector dy(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double r = tr.recon[t][k] - x[k];
      loss += r * r;
      dy[k] = 2.0 * r * scale;
    }
    Vector dh = p.output.backward(tr.decoder[s].h, dy, grads.output);
    axpy(1.0, dh_next, dh);
    LstmInputGrads ig = lstm_cell_backward(p.decoder, tr.decoder[s], dh, dc_next, grads.decoder);
    axpy(1.0, ig.dx, dcode);
    dh_next = std::move(ig.dh_prev);
    dc_next = std::move(ig.dc_prev);
  }
  Vector dh = dcode, dc(H, 0.0);
  for (std::size_t t = T; t-- > 0;) {
    LstmInputGrads ig = lstm_cell_backward(p.encoder, tr.encoder[t], dh, dc, grads.encoder);
    Vector& da = ig.dx;
    for (std::size_t k = 0; k < da.size(); ++k) da[k] *= 1.0 - tr.embedded[t][k] * tr.embedded[t][k];
    p.input.backward(w.frames[t].coords, da, grads.input);
    dh = std::move(ig.dh_prev);
    dc = std::move(ig.dc_prev);
  }
  return loss;
}

}  // namespace pr_detail

// Reconstruction of every frame of the window, frame-ordered.
inline std::vector<Vector> pr_reconstruct(const PRModel& m, const Window& w) {
  pr_detail::check_window(m, w);
  return pr_detail::forward(m.params, w).recon;
}

// Per-frame summed squared residual over the keypoints. Split out from
// score_pr so the arithmetic can be checked against a given reconstruction.
inline Vector frame_residual_scores(const Window& w, const std::vector<Vector>& recon) {
  if (recon.size() != w.length()) throw DimensionError("residual scores: reconstruction length");
  Vector out(w.length(), 0.0);
  for (std::size_t t = 0; t < w.length(); ++t) out[t] = squared_distance(recon[t], w.frames[t].coords);
  return out;
}

inline Vector score_pr(const PRModel& m, const Window& w) { return frame_residual_scores(w, pr_reconstruct(m, w)); }

// Reconstruction loss of one window, summed over frames and keypoints.
inline double pr_window_loss(const PRModel& m, const Window& w) {
  const Vector s = score_pr(m, w);
  double total = 0.0;
  for (double x : s) total += x;
  return total;
}

inline double pr_dataset_loss(const PRModel& m, const std::vector<Window>& windows) {
  double total = 0.0;
  for (const Window& w : windows) total += pr_window_loss(m, w);
  return total;
}

inline StreamScores score_pr_sequence(const PRModel& m, const PoseSequence& seq) {
  const auto windows = window_sequence(seq, m.window, WindowPurpose::score);
  std::vector<Vector> per;
  per.reserve(windows.size());
  for (const Window& w : windows) per.push_back(score_pr(m, w));
  return {seq.video_id, stitch_window_scores(windows, per, seq.size())};
}

struct PRTrainResult {
  PRModel model;
  TrainLog log;
};

inline PRTrainResult train_pr(const std::vector<Window>& windows, const PRConfig& cfg) {
  if (windows.empty()) throw UsageError("train_pr: empty training set");
  const Window& w0 = windows.front();
  for (const Window& w : windows) {
    if (w.keypoints() != w0.keypoints() || w.dims() != w0.dims() || w.length() != w0.length()) {
      throw DimensionError("train_pr: windows differ in K, d or T");
    }
  }
  PRModel m = init_pr_model(w0.keypoints(), w0.dims(), w0.length(), cfg.hidden_dim, cfg.train.seed);
  TrainHyper h = cfg.train;
  h.seed = derive_seed(cfg.train.seed, "pr.train");
  // The objective is the per-frame mean so clipping is independent of T.
  const double scale = 1.0 / static_cast<double>(w0.length());
  TrainLog log = train_adam(m.params, windows.size(), h, scale,
                            [&](const PRParams& p, std::size_t i, PRParams& g, Rng&) {
                              return pr_detail::loss_and_grad(p, windows[i], g);
                            });
  m.epochs_run = log.epoch_loss.size();
  m.final_loss = log.epoch_loss.empty() ? 0.0 : log.epoch_loss.back();
  return {std::move(m), std::move(log)};
}

}  // namespace dssbd
