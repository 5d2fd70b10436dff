#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dssbd/data.hpp"
#include "dssbd/numkit.hpp"
#include "dssbd/pp_stream.hpp"
#include "dssbd/pr_stream.hpp"
#include "dssbd/rd_stream.hpp"

namespace testing_support {

using dssbd::PoseFrame;
using dssbd::PoseSequence;
using dssbd::Rng;
using dssbd::Vector;
using dssbd::Window;

inline PoseFrame random_frame(std::size_t K, std::size_t d, Rng& rng, std::size_t index = 0, double scale = 1.0) {
  PoseFrame f;
  f.frame_index = index;
  f.keypoints = K;
  f.dims = d;
  f.coords.resize(K * d);
  for (double& v : f.coords) v = scale * rng.uniform(-1.0, 1.0);
  return f;
}

inline PoseSequence random_sequence(const std::string& id, std::size_t N, std::size_t K, std::size_t d, Rng& rng) {
  PoseSequence s;
  s.video_id = id;
  s.keypoints = K;
  s.dims = d;
  for (std::size_t i = 0; i < N; ++i) s.frames.push_back(random_frame(K, d, rng, i, 100.0));
  return s;
}

// Window of already-normalized random frames.
inline Window random_window(std::size_t T, std::size_t K, std::size_t d, Rng& rng) {
  Window w;
  w.video_id = "w";
  w.valid = T;
  for (std::size_t t = 0; t < T; ++t) w.frames.push_back(dssbd::normalize_pose(random_frame(K, d, rng, t)));
  return w;
}

inline Window constant_window(std::size_t T, const PoseFrame& f) {
  Window w;
  w.video_id = "const";
  w.valid = T;
  for (std::size_t t = 0; t < T; ++t) {
    PoseFrame g = f;
    g.frame_index = t;
    w.frames.push_back(g);
  }
  return w;
}

// Loss/gradient adaptor over a flattened parameter vector for grad_check.
template <class Params, class Fn>
dssbd::LossAndGrad flat_objective(const Params& proto, Fn fn) {
  return [proto, fn](std::span<const double> flat) {
    Params p = proto;
    dssbd::unflatten(p, flat);
    Params g = dssbd::zeros_like(p);
    const double loss = fn(p, g);
    return std::make_pair(loss, dssbd::flatten(g));
  };
}

// Index (in 1..n/2) of the largest DFT magnitude of the mean-removed signal.
inline std::size_t dominant_frequency(const Vector& x) {
  const std::size_t n = x.size();
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  std::size_t best = 1;
  double best_mag = -1.0;
  for (std::size_t k = 1; k <= n / 2; ++k) {
    double re = 0.0, im = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double a = 2.0 * M_PI * static_cast<double>(k * t) / static_cast<double>(n);
      re += (x[t] - mean) * std::cos(a);
      im -= (x[t] - mean) * std::sin(a);
    }
    const double mag = re * re + im * im;
    if (mag > best_mag) {
      best_mag = mag;
      best = k;
    }
  }
  return best;
}

// Scratch directory under the build tree, emptied on creation.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("dssbd_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testing_support
