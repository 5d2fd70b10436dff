#pragma once

// Pose prediction stream: forecast frame T+1 from frames 1..T.
//
// Local branch: LSTM encoder over the flattened keypoints, Gaussian latent
// (mean / log-variance, reparameterized sampling while training), one LSTM
// decoder step, linear readout of all keypoints.
// Global branch: two stacked LSTM cells over the per-frame center point and a
// linear readout of the next center.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dssbd/data.hpp"
#include "dssbd/errors.hpp"
#include "dssbd/numkit.hpp"
#include "dssbd/streams.hpp"

namespace dssbd {

struct CenterPoint {
  Vector coords;
};

// Arithmetic mean of the keypoints.
inline CenterPoint center_of(const PoseFrame& f) {
  CenterPoint c{Vector(f.dims, 0.0)};
  for (std::size_t j = 0; j < f.keypoints; ++j) axpy(1.0, f.keypoint(j), c.coords);
  for (double& x : c.coords) x /= static_cast<double>(f.keypoints);
  return c;
}

struct PPParams {
  LstmParams local_encoder;  // K*d -> hidden
  Dense latent_mean;         // latent x hidden
  Dense latent_logvar;       // latent x hidden
  LstmParams local_decoder;  // latent -> hidden, a single step from zero state
  Dense local_output;        // K*d x hidden
  LstmParams global_lower;   // d -> hidden
  LstmParams global_upper;   // hidden -> hidden
  Dense global_output;       // d x hidden

  template <class Self, class F>
  static void visit(Self& self, F& f) {
    visit_prefixed(self.local_encoder, "local_encoder", f);
    visit_prefixed(self.latent_mean, "latent_mean", f);
    visit_prefixed(self.latent_logvar, "latent_logvar", f);
    visit_prefixed(self.local_decoder, "local_decoder", f);
    visit_prefixed(self.local_output, "local_output", f);
    visit_prefixed(self.global_lower, "global_lower", f);
    visit_prefixed(self.global_upper, "global_upper", f);
    visit_prefixed(self.global_output, "global_output", f);
  }
  template <class F>
  void for_each_param(F&& f) { visit(*this, f); }
  template <class F>
  void for_each_param(F&& f) const { visit(*this, f); }

  bool operator==(const PPParams&) const = default;
};

struct PPConfig {
  std::size_t hidden_dim = 64;
  std::size_t latent_dim = 16;
  double kl_weight = 0.0;
  TrainHyper train;
};

struct PPModel {
  std::size_t keypoints = 0;
  std::size_t dims = 0;
  std::size_t window = 0;  // history length T
  std::size_t hidden_dim = 0;
  std::size_t latent_dim = 0;
  // Inference uses the latent mean instead of a sample.
  bool deterministic = true;
  PPParams params;
  std::uint64_t seed = 0;
  std::size_t epochs_run = 0;
  double final_loss = 0.0;

  std::size_t feature_dim() const noexcept { return keypoints * dims; }
  bool operator==(const PPModel&) const = default;
};

inline PPModel init_pp_model(std::size_t keypoints, std::size_t dims, std::size_t window, std::size_t hidden,
                             std::size_t latent, std::uint64_t seed) {
  if (keypoints < 2 || (dims != 2 && dims != 3) || window < 1 || hidden == 0 || latent == 0) {
    throw UsageError("init_pp_model: invalid shape");
  }
  Rng rng(derive_seed(seed, "pp.init"));
  const std::size_t F = keypoints * dims;
  PPModel m;
  m.keypoints = keypoints;
  m.dims = dims;
  m.window = window;
  m.hidden_dim = hidden;
  m.latent_dim = latent;
  m.seed = seed;
  PPParams& p = m.params;
  p.local_encoder = LstmParams::xavier(F, hidden, rng);
  p.latent_mean = Dense::xavier(latent, hidden, rng);
  p.latent_logvar = Dense::xavier(latent, hidden, rng);
  p.local_decoder = LstmParams::xavier(latent, hidden, rng);
  p.local_output = Dense::xavier(F, hidden, rng);
  p.global_lower = LstmParams::xavier(dims, hidden, rng);
  p.global_upper = LstmParams::xavier(hidden, hidden, rng);
  p.global_output = Dense::xavier(dims, hidden, rng);
  return m;
}

struct PosePrediction {
  Vector keypoints;  // K*d
  Vector center;     // d
};

namespace pp_detail {

struct Trace {
  std::vector<LstmCache> encoder;
  Vector mean, logvar, z;
  LstmCache decoder;
  std::vector<CenterPoint> centers;
  std::vector<LstmCache> lower, upper;
  PosePrediction prediction;
};

// `eps` empty selects the deterministic path (z = mean).
inline Trace forward(const PPParams& p, std::span<const PoseFrame> history, std::span<const double> eps) {
  const std::size_t H = p.local_encoder.hidden_dim;
  const std::size_t Hg = p.global_upper.hidden_dim;
  Trace tr;
  Vector h(H, 0.0), c(H, 0.0);
  for (const PoseFrame& f : history) {
    tr.encoder.push_back(lstm_cell_forward(p.local_encoder, f.coords, h, c));
    h = tr.encoder.back().h;
    c = tr.encoder.back().c;
  }
  tr.mean = p.latent_mean.forward(h);
  tr.logvar = p.latent_logvar.forward(h);
  tr.z = tr.mean;
  if (!eps.empty()) {
    for (std::size_t k = 0; k < tr.z.size(); ++k) tr.z[k] += std::exp(0.5 * tr.logvar[k]) * eps[k];
  }
  const Vector zero(H, 0.0);
  tr.decoder = lstm_cell_forward(p.local_decoder, tr.z, zero, zero);
  // Both branches forecast the change from the last observed frame.
  tr.prediction.keypoints = p.local_output.forward(tr.decoder.h);
  axpy(1.0, history.back().coords, tr.prediction.keypoints);

  Vector h1(Hg, 0.0), c1(Hg, 0.0), h2(Hg, 0.0), c2(Hg, 0.0);
  for (const PoseFrame& f : history) {
    tr.centers.push_back(center_of(f));
    tr.lower.push_back(lstm_cell_forward(p.global_lower, tr.centers.back().coords, h1, c1));
    h1 = tr.lower.back().h;
    c1 = tr.lower.back().c;
    tr.upper.push_back(lstm_cell_forward(p.global_upper, h1, h2, c2));
    h2 = tr.upper.back().h;
    c2 = tr.upper.back().c;
  }
  tr.prediction.center = p.global_output.forward(h2);
  axpy(1.0, tr.centers.back().coords, tr.prediction.center);
  return tr;
}

struct LossTerms {
  double center = 0.0;
  double keypoints = 0.0;
  double kl = 0.0;
  double total = 0.0;  // center + keypoints + kl_weight * kl
};

inline double kl_divergence(std::span<const double> mean, std::span<const double> logvar) {
  double kl = 0.0;
  for (std::size_t k = 0; k < mean.size(); ++k) {
    kl += -0.5 * (1.0 + logvar[k] - mean[k] * mean[k] - std::exp(logvar[k]));
  }
  return kl;
}

// Adds scale * d(total)/dparams into grads.
inline LossTerms loss_and_grad(const PPParams& p, std::span<const PoseFrame> history, const PoseFrame& target,
                               std::span<const double> eps, double kl_weight, PPParams& grads, double scale = 1.0) {
  const Trace tr = forward(p, history, eps);
  const std::size_t T = history.size();
  const std::size_t H = p.local_encoder.hidden_dim;
  const std::size_t Hg = p.global_upper.hidden_dim;
  LossTerms L;

  // Local branch.
  Vector dy(target.coords.size());
  for (std::size_t k = 0; k < dy.size(); ++k) {
    const double r = tr.prediction.keypoints[k] - target.coords[k];
    L.keypoints += r * r;
    dy[k] = 2.0 * r * scale;
  }
  Vector dh_dec = p.local_output.backward(tr.decoder.h, dy, grads.local_output);
  const Vector zero(H, 0.0);
  LstmInputGrads dg = lstm_cell_backward(p.local_decoder, tr.decoder, dh_dec, zero, grads.local_decoder);
  Vector dmean = dg.dx;  // dz/dmean = 1
  Vector dlogvar(tr.logvar.size(), 0.0);
  if (!eps.empty()) {
    for (std::size_t k = 0; k < dlogvar.size(); ++k) dlogvar[k] = dg.dx[k] * eps[k] * 0.5 * std::exp(0.5 * tr.logvar[k]);
  }
  L.kl = kl_divergence(tr.mean, tr.logvar);
  if (kl_weight != 0.0) {
    for (std::size_t k = 0; k < dmean.size(); ++k) {
      dmean[k] += scale * kl_weight * tr.mean[k];
      dlogvar[k] += scale * kl_weight * 0.5 * (std::exp(tr.logvar[k]) - 1.0);
    }
  }
  const Vector& h_last = tr.encoder.back().h;
  Vector dh = p.latent_mean.backward(h_last, dmean, grads.latent_mean);
  axpy(1.0, p.latent_logvar.backward(h_last, dlogvar, grads.latent_logvar), dh);
  Vector dc(H, 0.0);
  for (std::size_t t = T; t-- > 0;) {
    LstmInputGrads ig = lstm_cell_backward(p.local_encoder, tr.encoder[t], dh, dc, grads.local_encoder);
    dh = std::move(ig.dh_prev);
    dc = std::move(ig.dc_prev);
  }

  // Global branch.
  const CenterPoint tc = center_of(target);
  Vector dyc(tc.coords.size());
  for (std::size_t a = 0; a < dyc.size(); ++a) {
    const double r = tr.prediction.center[a] - tc.coords[a];
    L.center += r * r;
    dyc[a] = 2.0 * r * scale;
  }
  Vector dh2 = p.global_output.backward(tr.upper.back().h, dyc, grads.global_output);
  Vector dc2(Hg, 0.0), dh1(Hg, 0.0), dc1(Hg, 0.0);
  for (std::size_t t = T; t-- > 0;) {
    LstmInputGrads gu = lstm_cell_backward(p.global_upper, tr.upper[t], dh2, dc2, grads.global_upper);
    axpy(1.0, gu.dx, dh1);
    LstmInputGrads gl = lstm_cell_backward(p.global_lower, tr.lower[t], dh1, dc1, grads.global_lower);
    dh2 = std::move(gu.dh_prev);
    dc2 = std::move(gu.dc_prev);
    dh1 = std::move(gl.dh_prev);
    dc1 = std::move(gl.dc_prev);
  }

  L.total = L.center + L.keypoints + kl_weight * L.kl;
  return L;
}

inline void check_history(const PPModel& m, std::span<const PoseFrame> history) {
  if (history.size() != m.window) {
    throw UsageError("PP: history has " + std::to_string(history.size()) + " frames, model expects T=" +
                     std::to_string(m.window));
  }
  for (const PoseFrame& f : history) {
    if (f.keypoints != m.keypoints || f.dims != m.dims) throw DimensionError("PP: frame shape differs from model");
  }
}

}  // namespace pp_detail

// Forecast of the frame after `history`. With a non-deterministic model and
// an rng the latent is sampled; otherwise the latent mean is used.
inline PosePrediction predict_pose(const PPModel& m, std::span<const PoseFrame> history, Rng* rng = nullptr) {
  pp_detail::check_history(m, history);
  Vector eps;
  if (!m.deterministic && rng != nullptr) {
    eps.resize(m.latent_dim);
    for (double& e : eps) e = rng->normal();
  }
  return pp_detail::forward(m.params, history, eps).prediction;
}

inline PosePrediction predict_pose(const PPModel& m, const Window& history) {
  return predict_pose(m, std::span<const PoseFrame>(history.frames));
}

// Center squared error plus summed keypoint squared error.
inline double prediction_error(const PosePrediction& pred, const PoseFrame& target) {
  if (pred.keypoints.size() != target.coords.size() || pred.center.size() != target.dims) {
    throw DimensionError("PP: prediction and target shapes differ");
  }
  return squared_distance(pred.center, center_of(target).coords) + squared_distance(pred.keypoints, target.coords);
}

inline double score_pp(const PPModel& m, std::span<const PoseFrame> history, const PoseFrame& target) {
  if (!m.deterministic) throw UsageError("score_pp requires deterministic inference");
  if (target.keypoints != m.keypoints || target.dims != m.dims) throw DimensionError("PP: target shape");
  return prediction_error(predict_pose(m, history), target);
}

inline double score_pp(const PPModel& m, const Window& history, const PoseFrame& target) {
  return score_pp(m, std::span<const PoseFrame>(history.frames), target);
}

// Every frame i >= T is scored from frames i-T..i-1. The first T frames have
// no full history and take the first computable score. Sequences of at most
// T frames predict their last frame from a history left-padded with frame 0.
inline StreamScores score_pp_sequence(const PPModel& m, const PoseSequence& seq) {
  const std::vector<PoseFrame> frames = normalize_frames(seq);
  const std::size_t N = frames.size(), T = m.window;
  StreamScores out{seq.video_id, Vector(N, 0.0)};
  if (N == 0) return out;
  if (N <= T) {
    std::vector<PoseFrame> history(T - (N - 1), frames.front());
    history.insert(history.end(), frames.begin(), frames.end() - 1);
    const double s = score_pp(m, history, frames.back());
    std::fill(out.scores.begin(), out.scores.end(), s);
    return out;
  }
  for (std::size_t i = T; i < N; ++i) {
    out.scores[i] = score_pp(m, std::span<const PoseFrame>(frames.data() + (i - T), T), frames[i]);
  }
  std::fill(out.scores.begin(), out.scores.begin() + static_cast<std::ptrdiff_t>(T), out.scores[T]);
  return out;
}

// Training loss (center + keypoints + kl_weight * KL) on the deterministic
// path, summed over windows of T+1 frames.
inline double pp_dataset_loss(const PPModel& m, const std::vector<Window>& windows, double kl_weight = 0.0) {
  double total = 0.0;
  for (const Window& w : windows) {
    std::span<const PoseFrame> hist(w.frames.data(), w.frames.size() - 1);
    pp_detail::check_history(m, hist);
    const pp_detail::Trace tr = pp_detail::forward(m.params, hist, {});
    total += prediction_error(tr.prediction, w.frames.back()) + kl_weight * pp_detail::kl_divergence(tr.mean, tr.logvar);
  }
  return total;
}

struct PPTrainResult {
  PPModel model;
  TrainLog log;
};

// `windows` hold T history frames followed by the target frame.
inline PPTrainResult train_pp(const std::vector<Window>& windows, const PPConfig& cfg) {
  if (windows.empty()) throw UsageError("train_pp: empty training set");
  const Window& w0 = windows.front();
  if (w0.length() < 2) throw UsageError("train_pp: windows need history plus target");
  for (const Window& w : windows) {
    if (w.keypoints() != w0.keypoints() || w.dims() != w0.dims() || w.length() != w0.length()) {
      throw DimensionError("train_pp: windows differ in K, d or T");
    }
  }
  PPModel m = init_pp_model(w0.keypoints(), w0.dims(), w0.length() - 1, cfg.hidden_dim, cfg.latent_dim, cfg.train.seed);
  TrainHyper h = cfg.train;
  h.seed = derive_seed(cfg.train.seed, "pp.train");
  const std::size_t L = cfg.latent_dim;
  TrainLog log = train_adam(m.params, windows.size(), h, 1.0,
                            [&](const PPParams& p, std::size_t i, PPParams& g, Rng& rng) {
                              const Window& w = windows[i];
                              Vector eps(L);
                              for (double& e : eps) e = rng.normal();
                              std::span<const PoseFrame> hist(w.frames.data(), w.frames.size() - 1);
                              return pp_detail::loss_and_grad(p, hist, w.frames.back(), eps, cfg.kl_weight, g).total;
                            });
  m.epochs_run = log.epoch_loss.size();
  m.final_loss = log.epoch_loss.empty() ? 0.0 : log.epoch_loss.back();
  return {std::move(m), std::move(log)};
}

}  // namespace dssbd
