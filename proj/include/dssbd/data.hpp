#pragma once

// Pose-sequence data model: keypoint file I/O, per-frame normalization,
// windowing and the seeded synthetic dataset generator.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "dssbd/errors.hpp"
#include "dssbd/numkit.hpp"

namespace dssbd {

// One frame: K keypoints of d coordinates, stored keypoint-major
// (x1, y1[, z1], x2, y2[, z2], ...).
struct PoseFrame {
  std::size_t frame_index = 0;
  std::size_t keypoints = 0;
  std::size_t dims = 0;
  Vector coords;

  std::span<const double> keypoint(std::size_t j) const { return {coords.data() + j * dims, dims}; }
  std::span<double> keypoint(std::size_t j) { return {coords.data() + j * dims, dims}; }

  bool operator==(const PoseFrame&) const = default;
};

struct PoseSequence {
  std::string video_id;
  std::size_t keypoints = 0;
  std::size_t dims = 0;
  std::vector<PoseFrame> frames;
  // Per-frame anomaly flags; present only on test data.
  std::optional<std::vector<std::uint8_t>> labels;

  std::size_t size() const noexcept { return frames.size(); }
  bool has_labels() const noexcept { return labels.has_value(); }

  bool operator==(const PoseSequence&) const = default;
};

// T consecutive normalized frames. Score windows at the end of a sequence
// are padded by repeating the last frame; `valid` counts the real ones.
struct Window {
  std::string video_id;
  std::size_t start = 0;
  std::size_t valid = 0;
  std::vector<PoseFrame> frames;

  std::size_t length() const noexcept { return frames.size(); }
  std::size_t keypoints() const noexcept { return frames.empty() ? 0 : frames.front().keypoints; }
  std::size_t dims() const noexcept { return frames.empty() ? 0 : frames.front().dims; }
  std::size_t feature_dim() const noexcept { return keypoints() * dims(); }
};

enum class WindowPurpose { train, score };

// ---------------------------------------------------------------------------
// Validation and normalization
// ---------------------------------------------------------------------------

inline void validate_sequence(const PoseSequence& seq) {
  if (seq.keypoints < 2) throw UsageError("sequence " + seq.video_id + ": K must be >= 2");
  if (seq.dims != 2 && seq.dims != 3) throw UsageError("sequence " + seq.video_id + ": d must be 2 or 3");
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    const PoseFrame& f = seq.frames[i];
    if (f.keypoints != seq.keypoints || f.dims != seq.dims || f.coords.size() != seq.keypoints * seq.dims) {
      throw DimensionError("sequence " + seq.video_id + ": frame " + std::to_string(i) + " has inconsistent shape");
    }
    if (i > 0 && f.frame_index != seq.frames[i - 1].frame_index + 1) {
      throw UsageError("sequence " + seq.video_id + ": frame indices must increase by 1");
    }
    if (!all_finite(f.coords)) throw UsageError("sequence " + seq.video_id + ": non-finite coordinate");
  }
  if (seq.labels && seq.labels->size() != seq.frames.size()) {
    throw UsageError("sequence " + seq.video_id + ": label count differs from frame count");
  }
}

// Translate the bounding-box center to the origin and scale the box diagonal
// to 1.
inline PoseFrame normalize_pose(const PoseFrame& frame) {
  const std::size_t d = frame.dims;
  Vector lo(d, std::numeric_limits<double>::infinity());
  Vector hi(d, -std::numeric_limits<double>::infinity());
  for (std::size_t j = 0; j < frame.keypoints; ++j) {
    for (std::size_t a = 0; a < d; ++a) {
      lo[a] = std::min(lo[a], frame.coords[j * d + a]);
      hi[a] = std::max(hi[a], frame.coords[j * d + a]);
    }
  }
  double diag2 = 0.0;
  for (std::size_t a = 0; a < d; ++a) diag2 += (hi[a] - lo[a]) * (hi[a] - lo[a]);
  const double diag = std::sqrt(diag2);
  if (!(diag > 0.0) || !std::isfinite(diag)) {
    throw DegeneratePoseError("frame " + std::to_string(frame.frame_index) + ": all keypoints coincide");
  }
  PoseFrame out = frame;
  for (std::size_t j = 0; j < frame.keypoints; ++j) {
    for (std::size_t a = 0; a < d; ++a) {
      out.coords[j * d + a] = (frame.coords[j * d + a] - 0.5 * (lo[a] + hi[a])) / diag;
    }
  }
  return out;
}

inline std::vector<PoseFrame> normalize_frames(const PoseSequence& seq) {
  std::vector<PoseFrame> out;
  out.reserve(seq.frames.size());
  for (const PoseFrame& f : seq.frames) out.push_back(normalize_pose(f));
  return out;
}

// Non-overlapping windows of T frames. Training drops the tail; scoring pads
// the tail by repeating the last frame so every frame lands in one window.
inline std::vector<Window> window_frames(const std::string& video_id, const std::vector<PoseFrame>& normalized,
                                         std::size_t T, WindowPurpose purpose) {
  if (T < 2) throw UsageError("window length T must be >= 2");
  std::vector<Window> out;
  const std::size_t n = normalized.size();
  for (std::size_t start = 0; start < n; start += T) {
    const std::size_t valid = std::min(T, n - start);
    if (valid < T && purpose == WindowPurpose::train) break;
    Window w{video_id, start, valid, {}};
    w.frames.reserve(T);
    for (std::size_t t = 0; t < T; ++t) w.frames.push_back(normalized[start + std::min(t, valid - 1)]);
    out.push_back(std::move(w));
  }
  return out;
}

inline std::vector<Window> window_sequence(const PoseSequence& seq, std::size_t T, WindowPurpose purpose) {
  if (T < 2) throw UsageError("window length T must be >= 2");
  return window_frames(seq.video_id, normalize_frames(seq), T, purpose);
}

inline std::vector<Window> window_sequences(const std::vector<PoseSequence>& seqs, std::size_t T,
                                            WindowPurpose purpose) {
  std::vector<Window> out;
  for (const PoseSequence& s : seqs) {
    auto w = window_sequence(s, T, purpose);
    out.insert(out.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Text formatting helpers
// ---------------------------------------------------------------------------

// Shortest representation that parses back to the identical double.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::optional<double> parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

template <class Int>
std::optional<Int> parse_integer(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  Int v{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t next = s.find(sep, pos);
    out.push_back(s.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

// Write to `path` via a sibling temporary and rename, so readers never see a
// half-written file.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + tmp.string() + " for writing");
    os.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!os) throw IoError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Pose file format
//
//   # dssbd-pose v1 video_id=<id> K=<K> d=<d> labels=<0|1>
//   <frame_index>,<x1>,<y1>[,<z1>],...,<xK>,<yK>[,<zK>][,<label>]
// ---------------------------------------------------------------------------

inline constexpr std::string_view kPoseMagic = "# dssbd-pose v1";

inline std::string format_pose_sequence(const PoseSequence& seq) {
  validate_sequence(seq);
  std::string out;
  out += kPoseMagic;
  out += " video_id=" + seq.video_id + " K=" + std::to_string(seq.keypoints) + " d=" + std::to_string(seq.dims) +
         " labels=" + (seq.labels ? "1" : "0") + "\n";
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    const PoseFrame& f = seq.frames[i];
    out += std::to_string(f.frame_index);
    for (double v : f.coords) {
      out += ',';
      out += format_double(v);
    }
    if (seq.labels) {
      out += ',';
      out += (*seq.labels)[i] ? '1' : '0';
    }
    out += '\n';
  }
  return out;
}

inline void write_pose_sequence(const std::filesystem::path& path, const PoseSequence& seq) {
  write_file_atomic(path, format_pose_sequence(seq));
}

// Errors carry the physical file line (the header is line 1).
inline PoseSequence parse_pose_sequence(std::string_view text) {
  std::vector<std::string_view> lines = split(text, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw ParseError(1, "missing header");

  std::string_view header = lines[0];
  if (!header.empty() && header.back() == '\r') header.remove_suffix(1);
  if (header.substr(0, kPoseMagic.size()) != kPoseMagic) throw ParseError(1, "missing '# dssbd-pose v1' header");
  PoseSequence seq;
  std::optional<std::size_t> K, d;
  std::optional<bool> labels;
  for (std::string_view tok : split(header.substr(kPoseMagic.size()), ' ')) {
    if (tok.empty()) continue;
    const std::size_t eq = tok.find('=');
    if (eq == std::string_view::npos) throw ParseError(1, "malformed header field '" + std::string(tok) + "'");
    const std::string_view key = tok.substr(0, eq), val = tok.substr(eq + 1);
    if (key == "video_id") {
      seq.video_id = std::string(val);
    } else if (key == "K") {
      K = parse_integer<std::size_t>(val);
      if (!K) throw ParseError(1, "bad K");
    } else if (key == "d") {
      d = parse_integer<std::size_t>(val);
      if (!d) throw ParseError(1, "bad d");
    } else if (key == "labels") {
      if (val != "0" && val != "1") throw ParseError(1, "labels must be 0 or 1");
      labels = (val == "1");
    } else {
      throw ParseError(1, "unknown header field '" + std::string(key) + "'");
    }
  }
  if (seq.video_id.empty() || !K || !d || !labels) throw ParseError(1, "header must declare video_id, K, d, labels");
  if (*K < 2) throw ParseError(1, "K must be >= 2");
  if (*d != 2 && *d != 3) throw ParseError(1, "d must be 2 or 3");
  seq.keypoints = *K;
  seq.dims = *d;
  if (*labels) seq.labels.emplace();

  const std::size_t ncoords = *K * *d;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const std::size_t lineno = li + 1;
    std::string_view line = lines[li];
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const auto fields = split(line, ',');
    const std::size_t expected = 1 + ncoords + (*labels ? 1 : 0);
    if (fields.size() != expected) {
      std::string why = "frame record " + std::to_string(li) + ": expected " + std::to_string(expected) +
                        " fields, found " + std::to_string(fields.size());
      if (!*labels && fields.size() == expected + 1) why += " (label column in a file declared labels=0)";
      if (fields.size() > 1 && (fields.size() - 1 - (*labels ? 1 : 0)) % *d == 0) {
        why += "; frame has " + std::to_string((fields.size() - 1 - (*labels ? 1 : 0)) / *d) + " keypoints, header K=" +
               std::to_string(*K);
      }
      throw ParseError(lineno, why);
    }
    PoseFrame f;
    const auto idx = parse_integer<std::size_t>(fields[0]);
    if (!idx) throw ParseError(lineno, "bad frame index '" + std::string(fields[0]) + "'");
    f.frame_index = *idx;
    if (!seq.frames.empty()) {
      const std::size_t prev = seq.frames.back().frame_index;
      if (f.frame_index == prev) throw ParseError(lineno, "duplicate frame index " + std::to_string(f.frame_index));
      if (f.frame_index != prev + 1) {
        throw ParseError(lineno, "frame index " + std::to_string(f.frame_index) + " does not follow " +
                                     std::to_string(prev));
      }
    }
    f.keypoints = *K;
    f.dims = *d;
    f.coords.resize(ncoords);
    for (std::size_t c = 0; c < ncoords; ++c) {
      const auto v = parse_double(fields[1 + c]);
      if (!v || !std::isfinite(*v)) throw ParseError(lineno, "bad coordinate '" + std::string(fields[1 + c]) + "'");
      f.coords[c] = *v;
    }
    if (*labels) {
      const auto lab = parse_integer<int>(fields.back());
      if (!lab || (*lab != 0 && *lab != 1)) throw ParseError(lineno, "label must be 0 or 1");
      seq.labels->push_back(static_cast<std::uint8_t>(*lab));
    }
    seq.frames.push_back(std::move(f));
  }
  return seq;
}

inline PoseSequence load_pose_sequence(const std::filesystem::path& path) {
  return parse_pose_sequence(read_file(path));
}

// All *.pose files of a directory, sorted by file name.
inline std::vector<PoseSequence> load_pose_directory(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".pose") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<PoseSequence> out;
  for (const auto& p : files) {
    try {
      out.push_back(load_pose_sequence(p));
    } catch (const ParseError& e) {
      throw ParseError(e.line(), p.string() + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic dataset
// ---------------------------------------------------------------------------

struct SynthConfig {
  std::size_t train_videos = 40;
  std::size_t test_videos = 10;
  std::size_t frames = 512;
  std::size_t keypoints = 17;
  std::size_t dims = 2;
  std::size_t window = 64;  // T; bounds the anomaly period range
  std::size_t period_min = 8;
  std::size_t period_max = 24;
  double anomaly_fraction = 0.25;
  std::size_t segment_length = 96;
  // In body heights.
  double noise = 0.004;
  double motion_amplitude = 0.06;
  double anomaly_amplitude = 0.4;
  std::uint64_t seed = 0;
};

// Planted anomalous segments per test video.
inline std::size_t planted_segment_count(const SynthConfig& c) {
  return static_cast<std::size_t>(
      std::llround(c.anomaly_fraction * static_cast<double>(c.frames) / static_cast<double>(c.segment_length)));
}

inline void validate_synth_config(const SynthConfig& c) {
  auto fail = [](const std::string& m) { throw ConfigError("synth: " + m); };
  if (c.train_videos == 0 || c.test_videos == 0 || c.frames == 0) fail("video and frame counts must be positive");
  if (c.keypoints < 2) fail("K must be >= 2");
  if (c.dims != 2 && c.dims != 3) fail("d must be 2 or 3");
  if (c.window < 4) fail("window must be >= 4");
  if (c.period_min < 4 || c.period_max < c.period_min || c.period_max > c.window) {
    fail("period range must satisfy 4 <= min <= max <= T");
  }
  if (!(c.anomaly_fraction >= 0.0 && c.anomaly_fraction < 1.0)) fail("anomaly fraction must lie in [0, 1)");
  if (c.segment_length == 0 || c.segment_length > c.frames) fail("segment length must be in [1, frames]");
  if (c.segment_length < c.period_max) fail("segment length must cover at least one period");
  const std::size_t nseg = planted_segment_count(c);
  // At least one segment's worth of normal frames must remain.
  if (nseg * c.segment_length + c.segment_length > c.frames) {
    fail("anomaly fraction leaves less than one segment of normal frames");
  }
  if (!(c.noise >= 0.0) || !(c.motion_amplitude >= 0.0) || !(c.anomaly_amplitude > 0.0)) {
    fail("amplitudes must be nonnegative (anomaly amplitude positive)");
  }
}

struct PlantedSegment {
  std::string video_id;
  std::size_t start = 0;
  std::size_t length = 0;
  std::size_t period = 0;
  std::vector<std::size_t> keypoints;
};

struct SynthDataset {
  std::vector<PoseSequence> train;
  std::vector<PoseSequence> test;
  std::vector<PlantedSegment> planted;
};

namespace synth_detail {

struct Body {
  std::vector<double> rest;  // K*d, body height ~1, feet at y=0
  std::vector<double> mobility;  // per keypoint
  std::vector<std::vector<std::size_t>> limbs;
  std::vector<std::vector<double>> limb_weights;
};

inline Body make_body(std::size_t K, std::size_t d, std::uint64_t seed) {
  Body b;
  b.rest.assign(K * d, 0.0);
  b.mobility.assign(K, 1.0);
  if (K == 17) {
    // COCO ordering: nose, eyes, ears, shoulders, elbows, wrists, hips, knees, ankles.
    static constexpr double xy[17][2] = {{0.00, 0.92}, {0.03, 0.94},  {-0.03, 0.94}, {0.06, 0.92},  {-0.06, 0.92},
                                         {0.15, 0.80}, {-0.15, 0.80}, {0.20, 0.62},  {-0.20, 0.62}, {0.22, 0.46},
                                         {-0.22, 0.46}, {0.09, 0.50}, {-0.09, 0.50}, {0.10, 0.27},  {-0.10, 0.27},
                                         {0.10, 0.03}, {-0.10, 0.03}};
    static constexpr double mob[17] = {0.8, 0.8, 0.8, 0.8, 0.8, 0.6, 0.6, 1.2, 1.2, 1.6, 1.6, 0.4, 0.4, 0.7, 0.7, 0.5, 0.5};
    for (std::size_t j = 0; j < 17; ++j) {
      b.rest[j * d] = xy[j][0];
      b.rest[j * d + 1] = xy[j][1];
      if (d == 3) b.rest[j * d + 2] = (j % 2 == 0 ? 0.02 : -0.02);
      b.mobility[j] = mob[j];
    }
    b.limbs = {{7, 9}, {8, 10}, {0, 1, 2, 3, 4}, {7, 9, 8, 10}};
    b.limb_weights = {{0.5, 1.0}, {0.5, 1.0}, {1.0, 1.0, 1.0, 1.0, 1.0}, {0.5, 1.0, 0.5, 1.0}};
  } else {
    Rng rng(derive_seed(seed, "body"));
    for (std::size_t j = 0; j < K; ++j) {
      b.rest[j * d] = rng.uniform(-0.2, 0.2);
      b.rest[j * d + 1] = static_cast<double>(j) / static_cast<double>(K - 1);
      if (d == 3) b.rest[j * d + 2] = rng.uniform(-0.05, 0.05);
      b.mobility[j] = rng.uniform(0.5, 1.5);
    }
    const std::size_t chunk = std::max<std::size_t>(1, K / 4);
    for (std::size_t g = 0; g < 2; ++g) {
      std::vector<std::size_t> limb;
      std::vector<double> w;
      for (std::size_t j = 0; j < chunk; ++j) {
        const std::size_t idx = (K - 1) - g * chunk - j;
        if (idx >= K) break;
        limb.push_back(idx);
        w.push_back(1.0);
      }
      if (!limb.empty()) {
        b.limbs.push_back(limb);
        b.limb_weights.push_back(w);
      }
    }
  }
  return b;
}

// Zero-padded so that file-name order equals generation order.
inline std::string video_name(const char* prefix, std::size_t v, std::size_t count) {
  std::string num = std::to_string(v);
  const std::size_t width = std::max<std::size_t>(3, std::to_string(count > 0 ? count - 1 : 0).size());
  return std::string(prefix) + "_" + std::string(width - std::min(width, num.size()), '0') + num;
}

// Unit-variance Gaussian-smoothed white noise: smooth and aperiodic.
inline Vector smooth_process(std::size_t n, double width, Rng& rng) {
  const std::size_t radius = static_cast<std::size_t>(std::ceil(3.0 * width));
  std::vector<double> kernel(2 * radius + 1);
  double knorm = 0.0;
  for (std::size_t i = 0; i < kernel.size(); ++i) {
    const double x = (static_cast<double>(i) - static_cast<double>(radius)) / width;
    kernel[i] = std::exp(-0.5 * x * x);
    knorm += kernel[i] * kernel[i];
  }
  knorm = std::sqrt(knorm);
  Vector white(n + 2 * radius);
  for (double& w : white) w = rng.normal();
  Vector out(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double s = 0.0;
    for (std::size_t i = 0; i < kernel.size(); ++i) s += kernel[i] * white[t + i];
    out[t] = s / knorm;
  }
  return out;
}

inline PoseSequence normal_motion(const Body& body, const SynthConfig& c, const std::string& id, Rng& rng) {
  const std::size_t K = c.keypoints, d = c.dims, N = c.frames;
  constexpr std::size_t kModes = 6;
  std::vector<Vector> modes;
  std::vector<Vector> basis;  // per mode, K*d direction
  for (std::size_t m = 0; m < kModes; ++m) {
    modes.push_back(smooth_process(N, rng.uniform(16.0, 40.0), rng));
    Vector dir(K * d);
    for (std::size_t j = 0; j < K; ++j) {
      for (std::size_t a = 0; a < d; ++a) dir[j * d + a] = rng.normal() * body.mobility[j];
    }
    basis.push_back(std::move(dir));
  }
  // Camera: per-video scale and offset plus slow drift; removed by normalization.
  const double height_px = rng.uniform(150.0, 300.0);
  Vector origin(d);
  for (std::size_t a = 0; a < d; ++a) origin[a] = rng.uniform(100.0, 400.0);
  std::vector<Vector> drift;
  for (std::size_t a = 0; a < d; ++a) drift.push_back(smooth_process(N, 40.0, rng));
  const Vector zoom = smooth_process(N, 60.0, rng);

  PoseSequence seq;
  seq.video_id = id;
  seq.keypoints = K;
  seq.dims = d;
  seq.frames.resize(N);
  const double per_mode = c.motion_amplitude / std::sqrt(static_cast<double>(kModes));
  for (std::size_t t = 0; t < N; ++t) {
    PoseFrame& f = seq.frames[t];
    f.frame_index = t;
    f.keypoints = K;
    f.dims = d;
    f.coords = body.rest;
    for (std::size_t m = 0; m < kModes; ++m) axpy(per_mode * modes[m][t], basis[m], f.coords);
    const double scale = height_px * (1.0 + 0.05 * zoom[t]);
    for (std::size_t j = 0; j < K; ++j) {
      for (std::size_t a = 0; a < d; ++a) {
        double& v = f.coords[j * d + a];
        v = origin[a] + 10.0 * drift[a][t] + scale * (v + c.noise * rng.uniform(-1.0, 1.0));
      }
    }
  }
  return seq;
}

}  // namespace synth_detail

// Training videos hold smooth aperiodic motion only. Test videos add planted
// segments in which one limb group oscillates sinusoidally; those frames are
// labeled 1.
inline SynthDataset synth_dataset(const SynthConfig& cfg) {
  validate_synth_config(cfg);
  using namespace synth_detail;
  const Body body = make_body(cfg.keypoints, cfg.dims, cfg.seed);
  SynthDataset ds;
  for (std::size_t v = 0; v < cfg.train_videos; ++v) {
    Rng rng(derive_seed(cfg.seed, 1000 + v));
    ds.train.push_back(normal_motion(body, cfg, synth_detail::video_name("train", v, cfg.train_videos), rng));
  }
  const std::size_t nseg = planted_segment_count(cfg);
  for (std::size_t v = 0; v < cfg.test_videos; ++v) {
    Rng rng(derive_seed(cfg.seed, 500000 + v));
    PoseSequence seq = normal_motion(body, cfg, synth_detail::video_name("test", v, cfg.test_videos), rng);
    seq.labels = std::vector<std::uint8_t>(cfg.frames, 0);

    // Split the free frames into nseg + 1 random gaps.
    const std::size_t free = cfg.frames - nseg * cfg.segment_length;
    std::vector<std::size_t> cuts;
    for (std::size_t s = 0; s < nseg; ++s) cuts.push_back(rng.below(free + 1));
    std::sort(cuts.begin(), cuts.end());
    std::size_t prev_cut = 0, cursor = 0;
    for (std::size_t s = 0; s < nseg; ++s) {
      cursor += cuts[s] - prev_cut;
      prev_cut = cuts[s];
      const std::size_t start = cursor;
      cursor += cfg.segment_length;

      const std::size_t limb = rng.below(body.limbs.size());
      const std::size_t period =
          static_cast<std::size_t>(rng.between(static_cast<long>(cfg.period_min), static_cast<long>(cfg.period_max)));
      const double phase = rng.uniform(0.0, 2.0 * M_PI);
      Vector dir(cfg.dims);
      for (double& x : dir) x = rng.normal();
      const double n = std::sqrt(squared_norm(dir));
      for (double& x : dir) x /= n;

      for (std::size_t t = start; t < start + cfg.segment_length; ++t) {
        (*seq.labels)[t] = 1;
        PoseFrame& f = seq.frames[t];
        // Recover this frame's pixel scale from the body extent so the
        // oscillation is expressed in body heights like everything else.
        double ymin = f.coords[1], ymax = f.coords[1];
        for (std::size_t j = 0; j < cfg.keypoints; ++j) {
          ymin = std::min(ymin, f.coords[j * cfg.dims + 1]);
          ymax = std::max(ymax, f.coords[j * cfg.dims + 1]);
        }
        const double scale = ymax - ymin;
        const double wave =
            std::sin(2.0 * M_PI * static_cast<double>(t - start) / static_cast<double>(period) + phase);
        for (std::size_t k = 0; k < body.limbs[limb].size(); ++k) {
          const std::size_t j = body.limbs[limb][k];
          const double amp = cfg.anomaly_amplitude * body.limb_weights[limb][k] * scale * wave;
          for (std::size_t a = 0; a < cfg.dims; ++a) f.coords[j * cfg.dims + a] += amp * dir[a];
        }
      }
      ds.planted.push_back({seq.video_id, start, cfg.segment_length, period, body.limbs[limb]});
    }
    ds.test.push_back(std::move(seq));
  }
  return ds;
}

}  // namespace dssbd
