#pragma once

// Pieces shared by the three proxy-task streams: the per-frame score type,
// training hyperparameters and the seeded mini-batch Adam loop.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "dssbd/errors.hpp"
#include "dssbd/numkit.hpp"

namespace dssbd {

enum class Stream { pr, pp, rd };

inline const char* stream_name(Stream s) {
  switch (s) {
    case Stream::pr: return "pr";
    case Stream::pp: return "pp";
    case Stream::rd: return "rd";
  }
  return "?";
}

// Raw per-frame anomaly scores of one stream for one video.
struct StreamScores {
  std::string video_id;
  Vector scores;
};

struct TrainHyper {
  double lr = 0.004;
  std::size_t batch = 60;
  std::size_t epochs = 30;
  double clip_norm = 5.0;
  std::uint64_t seed = 0;
};

struct TrainLog {
  std::vector<double> epoch_loss;  // mean per-sample loss of each epoch
};

// Seeded mini-batch Adam over `count` samples.
//
// sample_fn(params, index, grads, rng) adds the gradient of one sample's
// objective into `grads` and returns the value reported in the loss curve.
// Gradients are averaged over the batch and multiplied by `grad_scale`,
// clipped to the global norm, then applied.
template <class Params, class SampleFn>
TrainLog train_adam(Params& params, std::size_t count, const TrainHyper& h, double grad_scale, SampleFn&& sample_fn,
                    std::vector<std::uint8_t> trainable = {}) {
  if (count == 0) throw UsageError("training set is empty");
  if (h.batch == 0) throw UsageError("batch size must be positive");
  Rng rng(h.seed);
  AdamState state = make_adam_state(param_count(params), AdamConfig{h.lr}, std::move(trainable));
  Vector flat = flatten(params);
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  TrainLog log;
  for (std::size_t epoch = 1; epoch <= h.epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0.0;
    for (std::size_t b0 = 0; b0 < count; b0 += h.batch) {
      const std::size_t b1 = std::min(count, b0 + h.batch);
      Params grads = zeros_like(params);
      for (std::size_t k = b0; k < b1; ++k) total += sample_fn(static_cast<const Params&>(params), order[k], grads, rng);
      Vector g = flatten(grads);
      const double s = grad_scale / static_cast<double>(b1 - b0);
      for (double& x : g) x *= s;
      if (!all_finite(g) || !std::isfinite(total)) throw TrainingError(epoch, "loss or gradient became non-finite");
      clip_global_norm(g, h.clip_norm);
      AdamUpdate up = adam_step(flat, g, std::move(state));
      flat = std::move(up.params);
      state = std::move(up.state);
      unflatten(params, flat);
    }
    const double mean = total / static_cast<double>(count);
    if (!std::isfinite(mean)) throw TrainingError(epoch, "loss became non-finite");
    log.epoch_loss.push_back(mean);
  }
  return log;
}

// Stitches per-window scores back into one array of `n` frames; padded
// window tails are dropped.
template <class WindowList>
Vector stitch_window_scores(const WindowList& windows, const std::vector<Vector>& per_window, std::size_t n) {
  Vector out(n, 0.0);
  for (std::size_t w = 0; w < windows.size(); ++w) {
    for (std::size_t t = 0; t < windows[w].valid; ++t) out[windows[w].start + t] = per_window[w][t];
  }
  return out;
}

}  // namespace dssbd
