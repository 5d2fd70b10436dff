#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "dssbd/data.hpp"
#include "dssbd/errors.hpp"
#include "support.hpp"

using namespace dssbd;
using testing_support::random_frame;
using testing_support::random_sequence;

namespace {

struct Box {
  Vector lo, hi;
};

Box bbox(const PoseFrame& f) {
  Box b{Vector(f.dims, std::numeric_limits<double>::infinity()),
        Vector(f.dims, -std::numeric_limits<double>::infinity())};
  for (std::size_t j = 0; j < f.keypoints; ++j) {
    for (std::size_t a = 0; a < f.dims; ++a) {
      b.lo[a] = std::min(b.lo[a], f.coords[j * f.dims + a]);
      b.hi[a] = std::max(b.hi[a], f.coords[j * f.dims + a]);
    }
  }
  return b;
}

// Period (in frames) with the largest periodogram power, searched on a fine
// frequency grid so non-integer bin positions resolve.
double peak_period(const Vector& x, double min_period, double max_period) {
  const std::size_t n = x.size();
  // Remove mean and linear trend.
  double st = 0, sx = 0, stt = 0, stx = 0;
  for (std::size_t t = 0; t < n; ++t) {
    st += t;
    sx += x[t];
    stt += double(t) * t;
    stx += double(t) * x[t];
  }
  const double slope = (n * stx - st * sx) / (n * stt - st * st);
  const double icpt = (sx - slope * st) / n;
  double best_p = 0, best_pow = -1;
  for (double p = min_period; p <= max_period; p += 0.05) {
    double re = 0, im = 0;
    for (std::size_t t = 0; t < n; ++t) {
      const double r = x[t] - icpt - slope * t;
      re += r * std::cos(2 * M_PI * t / p);
      im += r * std::sin(2 * M_PI * t / p);
    }
    if (re * re + im * im > best_pow) {
      best_pow = re * re + im * im;
      best_p = p;
    }
  }
  return best_p;
}

double variance(const Vector& x) {
  double m = 0, v = 0;
  for (double e : x) m += e;
  m /= double(x.size());
  for (double e : x) v += (e - m) * (e - m);
  return v / double(x.size());
}

SynthConfig small_synth(std::uint64_t seed) {
  SynthConfig c;
  c.train_videos = 3;
  c.test_videos = 6;
  c.frames = 512;
  c.seed = seed;
  return c;
}

}  // namespace

// ---- loading ----

TEST(PoseFile, ThreeFrameFileLoads) {
  const std::string text =
      "# dssbd-pose v1 video_id=clip K=2 d=2 labels=0\n"
      "0,1.0,2.0,3.0,4.0\n"
      "1,1.5,2.5,3.5,4.5\n"
      "2,2e0,3.0e0,-4,5.25\n";
  const PoseSequence s = parse_pose_sequence(text);
  EXPECT_EQ(s.frames.size(), 3u);
  EXPECT_EQ(s.video_id, "clip");
  EXPECT_EQ(s.keypoints, 2u);
  EXPECT_EQ(s.dims, 2u);
  EXPECT_FALSE(s.labels.has_value());
  EXPECT_DOUBLE_EQ(s.frames[2].coords[2], -4.0);
}

TEST(PoseFile, KeypointMismatchNamesLine) {
  // The second frame record sits on file line 3 (the header is line 1).
  const std::string text =
      "# dssbd-pose v1 video_id=clip K=2 d=2 labels=0\n"
      "0,1,2,3,4\n"
      "1,1,2,3,4,5,6\n";
  try {
    parse_pose_sequence(text);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("frame record 2"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("3 keypoints"), std::string::npos);
  }
}

TEST(PoseFile, RejectsBrokenRecords) {
  const std::string head = "# dssbd-pose v1 video_id=v K=2 d=2 labels=0\n";
  auto line_of = [](const std::string& text) {
    try {
      parse_pose_sequence(text);
    } catch (const ParseError& e) {
      return e.line();
    }
    return std::size_t{0};
  };
  EXPECT_EQ(line_of(head + "0,1,2,3,4\n0,1,2,3,4\n"), 3u);        // duplicate index
  EXPECT_EQ(line_of(head + "0,1,2,3,4\n2,1,2,3,4\n"), 3u);        // gap
  EXPECT_EQ(line_of(head + "0,1,2,3,x\n"), 2u);                   // bad number
  EXPECT_EQ(line_of(head + "0,1,2,3,nan\n"), 2u);                 // non-finite
  EXPECT_EQ(line_of("0,1,2,3,4\n"), 1u);                          // no header
  EXPECT_EQ(line_of("# dssbd-pose v1 video_id=v K=2 d=4 labels=0\n"), 1u);
  EXPECT_EQ(line_of("# dssbd-pose v1 video_id=v K=2 d=2 labels=1\n0,1,2,3,4,2\n"), 2u);
}

TEST(PoseFile, RoundTripIsIdentity) {
  Rng rng(42);
  for (std::size_t d : {2u, 3u}) {
    PoseSequence s = random_sequence("round_trip", 37, 5, d, rng);
    s.labels = std::vector<std::uint8_t>(37);
    for (auto& l : *s.labels) l = rng.below(2);
    // Values that stress shortest round-trip formatting.
    s.frames[0].coords[0] = 0.1;
    s.frames[0].coords[1] = 1e-300;
    s.frames[0].coords[2] = -123456789.123456789;
    s.frames[0].coords[3] = std::nextafter(1.0, 2.0);

    const auto dir = testing_support::scratch_dir("round_trip");
    write_pose_sequence(dir / "s.pose", s);
    const PoseSequence t = load_pose_sequence(dir / "s.pose");
    ASSERT_EQ(t.frames.size(), s.frames.size());
    EXPECT_EQ(t.video_id, s.video_id);
    EXPECT_EQ(t.labels, s.labels);
    for (std::size_t i = 0; i < s.frames.size(); ++i) {
      EXPECT_EQ(t.frames[i].frame_index, s.frames[i].frame_index);
      EXPECT_EQ(t.frames[i].coords, s.frames[i].coords);  // bit-exact
    }
  }
}

TEST(PoseFile, LoadedCountEqualsRecordCount) {
  Rng rng(3);
  for (std::size_t n : {1u, 2u, 17u, 300u}) {
    const std::string text = format_pose_sequence(random_sequence("c", n, 3, 2, rng));
    const auto lines = std::count(text.begin(), text.end(), '\n');
    EXPECT_EQ(parse_pose_sequence(text).frames.size(), static_cast<std::size_t>(lines - 1));
  }
}

TEST(PoseFile, DirectoryLoadSortsByName) {
  Rng rng(5);
  const auto dir = testing_support::scratch_dir("dir_load");
  write_pose_sequence(dir / "b.pose", random_sequence("b", 4, 2, 2, rng));
  write_pose_sequence(dir / "a.pose", random_sequence("a", 4, 2, 2, rng));
  write_file_atomic(dir / "notes.txt", "ignored");
  const auto seqs = load_pose_directory(dir);
  ASSERT_EQ(seqs.size(), 2u);
  EXPECT_EQ(seqs[0].video_id, "a");
  EXPECT_EQ(seqs[1].video_id, "b");
  EXPECT_THROW(load_pose_sequence(dir / "missing.pose"), IoError);
}

// ---- normalization ----

TEST(Normalize, CenteredUnitDiagonalIsFixedPoint) {
  PoseFrame f;
  f.keypoints = 3;
  f.dims = 2;
  const double h = 0.5 / std::sqrt(2.0);
  f.coords = {-h, -h, h, h, 0.1, -0.05};
  const PoseFrame g = normalize_pose(f);
  for (std::size_t i = 0; i < f.coords.size(); ++i) EXPECT_NEAR(g.coords[i], f.coords[i], 1e-12);
}

TEST(Normalize, TranslationInvariant) {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = 2 + trial % 2;
    const PoseFrame f = random_frame(17, d, rng, 0, 300.0);
    PoseFrame g = f;
    for (std::size_t j = 0; j < 17; ++j) {
      for (std::size_t a = 0; a < d; ++a) g.coords[j * d + a] += 1000.0 * (a + 1) - 250.0 * trial;
    }
    const PoseFrame nf = normalize_pose(f), ng = normalize_pose(g);
    for (std::size_t i = 0; i < f.coords.size(); ++i) EXPECT_NEAR(nf.coords[i], ng.coords[i], 1e-12);
  }
}

TEST(Normalize, OutputBoxCenteredWithUnitDiagonal) {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 2 + trial % 2;
    const PoseFrame g = normalize_pose(random_frame(2 + trial % 20, d, rng, 0, 500.0));
    const Box b = bbox(g);
    double diag2 = 0;
    for (std::size_t a = 0; a < d; ++a) {
      EXPECT_NEAR(0.5 * (b.lo[a] + b.hi[a]), 0.0, 1e-12);
      diag2 += (b.hi[a] - b.lo[a]) * (b.hi[a] - b.lo[a]);
    }
    EXPECT_NEAR(std::sqrt(diag2), 1.0, 1e-12);
  }
}

TEST(Normalize, Idempotent) {
  Rng rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    const PoseFrame once = normalize_pose(random_frame(17, 2 + trial % 2, rng, 0, 80.0));
    const PoseFrame twice = normalize_pose(once);
    for (std::size_t i = 0; i < once.coords.size(); ++i) EXPECT_NEAR(once.coords[i], twice.coords[i], 1e-12);
  }
}

TEST(Normalize, CoincidentKeypointsAreDegenerate) {
  PoseFrame f;
  f.keypoints = 4;
  f.dims = 3;
  f.coords.assign(12, 7.5);
  EXPECT_THROW(normalize_pose(f), DegeneratePoseError);
}

// ---- windowing ----

TEST(Windowing, TrainKeepsFullWindowsOnly) {
  Rng rng(11);
  const auto w = window_sequence(random_sequence("v", 128, 3, 2, rng), 64, WindowPurpose::train);
  ASSERT_EQ(w.size(), 2u);
  EXPECT_EQ(w[0].start, 0u);
  EXPECT_EQ(w[1].start, 64u);
  for (const auto& x : w) {
    EXPECT_EQ(x.frames.size(), 64u);
    EXPECT_EQ(x.valid, 64u);
  }
}

TEST(Windowing, ShortSequenceTailPolicy) {
  Rng rng(12);
  const PoseSequence s = random_sequence("v", 63, 3, 2, rng);
  EXPECT_TRUE(window_sequence(s, 64, WindowPurpose::train).empty());
  const auto w = window_sequence(s, 64, WindowPurpose::score);
  ASSERT_EQ(w.size(), 1u);
  EXPECT_EQ(w[0].valid, 63u);
  ASSERT_EQ(w[0].frames.size(), 64u);
  EXPECT_EQ(w[0].frames[63].coords, w[0].frames[62].coords);
  EXPECT_EQ(w[0].frames[62].coords, normalize_pose(s.frames[62]).coords);
}

TEST(Windowing, EmptySequenceGivesNoWindows) {
  PoseSequence s;
  s.video_id = "empty";
  s.keypoints = 2;
  s.dims = 2;
  EXPECT_TRUE(window_sequence(s, 8, WindowPurpose::score).empty());
  EXPECT_TRUE(window_sequence(s, 8, WindowPurpose::train).empty());
  EXPECT_THROW(window_sequence(s, 1, WindowPurpose::score), UsageError);
}

TEST(Windowing, ScoreWindowsPartitionEveryLength) {
  Rng rng(13);
  for (std::size_t T : {2u, 7u, 64u}) {
    for (std::size_t n = 1; n <= 200; ++n) {
      std::vector<PoseFrame> frames;
      for (std::size_t i = 0; i < n; ++i) frames.push_back(random_frame(2, 2, rng, i));
      const auto w = window_frames("v", frames, T, WindowPurpose::score);
      std::vector<int> owner(n, 0);
      for (const auto& x : w) {
        ASSERT_EQ(x.frames.size(), T);
        for (std::size_t t = 0; t < x.valid; ++t) {
          ASSERT_LT(x.start + t, n);
          ++owner[x.start + t];
          EXPECT_EQ(x.frames[t].frame_index, x.start + t);
        }
      }
      EXPECT_TRUE(std::all_of(owner.begin(), owner.end(), [](int c) { return c == 1; })) << "n=" << n << " T=" << T;
    }
  }
}

// ---- synthetic data ----

TEST(Synth, SameSeedBitIdentical) {
  const SynthDataset a = synth_dataset(small_synth(21)), b = synth_dataset(small_synth(21));
  ASSERT_EQ(a.test.size(), b.test.size());
  for (std::size_t v = 0; v < a.train.size(); ++v) {
    EXPECT_EQ(format_pose_sequence(a.train[v]), format_pose_sequence(b.train[v]));
  }
  for (std::size_t v = 0; v < a.test.size(); ++v) {
    EXPECT_EQ(format_pose_sequence(a.test[v]), format_pose_sequence(b.test[v]));
  }
  const SynthDataset c = synth_dataset(small_synth(22));
  EXPECT_NE(format_pose_sequence(a.test[0]), format_pose_sequence(c.test[0]));
}

TEST(Synth, ShapesAndLabels) {
  SynthConfig cfg = small_synth(23);
  cfg.dims = 3;
  cfg.keypoints = 9;
  const SynthDataset ds = synth_dataset(cfg);
  EXPECT_EQ(ds.train.size(), 3u);
  EXPECT_EQ(ds.test.size(), 6u);
  for (const auto& s : ds.train) {
    EXPECT_FALSE(s.labels.has_value());
    EXPECT_EQ(s.frames.size(), 512u);
    EXPECT_NO_THROW(validate_sequence(s));
  }
  for (const auto& s : ds.test) {
    ASSERT_TRUE(s.labels.has_value());
    EXPECT_EQ(s.keypoints, 9u);
    EXPECT_EQ(s.dims, 3u);
    EXPECT_NO_THROW(validate_sequence(s));
  }
}

TEST(Synth, AnomalousFractionWithinOneSegment) {
  for (double frac : {0.0, 0.1, 0.25, 0.5}) {
    SynthConfig cfg = small_synth(24);
    cfg.anomaly_fraction = frac;
    const SynthDataset ds = synth_dataset(cfg);
    const double slack = double(cfg.segment_length) / double(cfg.frames);
    for (const auto& s : ds.test) {
      const double labeled = std::count(s.labels->begin(), s.labels->end(), 1);
      EXPECT_NEAR(labeled / cfg.frames, frac, slack) << "fraction " << frac;
    }
    // Planted segments agree with the labels.
    for (const auto& p : ds.planted) {
      const auto& s = *std::find_if(ds.test.begin(), ds.test.end(), [&](auto& t) { return t.video_id == p.video_id; });
      for (std::size_t t = p.start; t < p.start + p.length; ++t) EXPECT_EQ((*s.labels)[t], 1);
    }
  }
}

TEST(Synth, PlantedSegmentPeriodMatchesSpectrum) {
  const SynthConfig cfg = small_synth(25);
  const SynthDataset ds = synth_dataset(cfg);
  ASSERT_FALSE(ds.planted.empty());
  for (const auto& p : ds.planted) {
    EXPECT_GE(p.period, cfg.period_min);
    EXPECT_LE(p.period, cfg.period_max);
    const auto& s = *std::find_if(ds.test.begin(), ds.test.end(), [&](auto& t) { return t.video_id == p.video_id; });
    // Trace of the last limb keypoint, body-relative, along its busiest axis.
    const std::size_t j = p.keypoints.back();
    double best = 0.0;
    std::size_t best_axis = 0;
    std::vector<Vector> traces(cfg.dims);
    for (std::size_t a = 0; a < cfg.dims; ++a) {
      for (std::size_t t = p.start; t < p.start + p.length; ++t) {
        traces[a].push_back(normalize_pose(s.frames[t]).coords[j * cfg.dims + a]);
      }
      const double var = variance(traces[a]);
      if (var > best) {
        best = var;
        best_axis = a;
      }
    }
    const double found = peak_period(traces[best_axis], 2.0, double(p.length) / 2.0);
    EXPECT_NEAR(found, double(p.period), 1.0) << p.video_id << " start " << p.start;
  }
}

TEST(Synth, InvalidConfigsRejected) {
  auto bad = [](auto mutate) {
    SynthConfig c = small_synth(1);
    mutate(c);
    EXPECT_THROW(synth_dataset(c), ConfigError);
  };
  bad([](SynthConfig& c) { c.train_videos = 0; });
  bad([](SynthConfig& c) { c.test_videos = 0; });
  bad([](SynthConfig& c) { c.frames = 0; });
  bad([](SynthConfig& c) { c.keypoints = 1; });
  bad([](SynthConfig& c) { c.dims = 4; });
  bad([](SynthConfig& c) { c.period_min = 3; });
  bad([](SynthConfig& c) { c.period_max = 65; });
  bad([](SynthConfig& c) { c.period_min = 20, c.period_max = 10; });
  bad([](SynthConfig& c) { c.anomaly_fraction = 1.0; });
  bad([](SynthConfig& c) { c.anomaly_fraction = -0.1; });
  bad([](SynthConfig& c) { c.anomaly_fraction = 0.9999; });
  bad([](SynthConfig& c) { c.noise = -1.0; });
}
