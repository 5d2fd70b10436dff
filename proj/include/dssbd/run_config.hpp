#pragma once

// Run configuration: one JSON document with per-command sections. Unknown
// keys are rejected so a misspelled field cannot silently fall back to its
// default.
//
// {
//   "seed": 7, "out": "runs/reference",
//   "synth":      { "train_videos": 40, "frames": 512, ... },
//   "data":       { "train_dir": "...", "test_dir": "..." },
//   "train":      { "window": 64, "streams": ["pr", "pp", "rd"], "lr": 0.004,
//                   "batch": 60, "epochs": 30,
//                   "pr": {...}, "pp": {...}, "rd": {...}, "corpus": {...} },
//   "score":      { "alpha": 1, "beta": 1, "gamma": 1 },
//   "gridsearch": { "lo": 0, "hi": 3, "step": 0.1 },
//   "ablate":     { "windows": [4, 8, 16, 64], "dims": [2, 3] }
// }

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dssbd/ablation.hpp"
#include "dssbd/data.hpp"
#include "dssbd/errors.hpp"
#include "dssbd/fusion_eval.hpp"
#include "dssbd/pipeline.hpp"

namespace dssbd {

using json = nlohmann::ordered_json;

struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path out = "run";
  SynthConfig synth;
  // Empty paths mean <out>/data/train and <out>/data/test.
  std::filesystem::path train_dir;
  std::filesystem::path test_dir;
  PipelineConfig pipeline;
  StreamSet streams;
  GridSearchConfig grid;
  std::vector<std::size_t> ablate_windows{4, 8, 16, 64};
  std::vector<std::size_t> ablate_dims{2, 3};

  std::filesystem::path train_data() const { return train_dir.empty() ? out / "data" / "train" : train_dir; }
  std::filesystem::path test_data() const { return test_dir.empty() ? out / "data" / "test" : test_dir; }
  std::filesystem::path checkpoints() const { return out / "checkpoints"; }
  std::filesystem::path scores() const { return out / "scores" / "scores.csv"; }
  std::filesystem::path reports() const { return out / "reports"; }
};

namespace config_detail {

inline void allow_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    bool known = false;
    for (const char* key : keys) known = known || k == key;
    if (!known) throw ConfigError("unknown key '" + k + "' in " + where);
  }
}

template <class T>
void read(const json& j, const char* key, T& dst, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

inline void read_train_hyper(const json& j, TrainHyper& h, const std::string& where) {
  read(j, "lr", h.lr, where);
  read(j, "batch", h.batch, where);
  read(j, "epochs", h.epochs, where);
  read(j, "clip_norm", h.clip_norm, where);
}

inline json hyper_json(const TrainHyper& h) {
  return {{"lr", h.lr}, {"batch", h.batch}, {"epochs", h.epochs}, {"clip_norm", h.clip_norm}};
}

inline StreamSet parse_streams(const std::vector<std::string>& names) {
  StreamSet s{false, false, false};
  for (const auto& n : names) {
    if (n == "pr") s.pr = true;
    else if (n == "pp") s.pp = true;
    else if (n == "rd") s.rd = true;
    else throw ConfigError("unknown stream '" + n + "' (expected pr, pp or rd)");
  }
  if (s.empty()) throw ConfigError("at least one stream must be selected");
  return s;
}

inline std::vector<std::string> stream_names(const StreamSet& s) {
  std::vector<std::string> out;
  if (s.pr) out.push_back("pr");
  if (s.pp) out.push_back("pp");
  if (s.rd) out.push_back("rd");
  return out;
}

}  // namespace config_detail

// Comma-separated list such as "pr,rd".
inline StreamSet parse_stream_list(const std::string& csv) {
  std::vector<std::string> names;
  for (std::string_view part : split(csv, ',')) {
    if (!part.empty()) names.emplace_back(part);
  }
  return config_detail::parse_streams(names);
}

inline RunConfig run_config_from_json(const json& j) {
  using namespace config_detail;
  RunConfig c;
  allow_keys(j, "config", {"seed", "out", "synth", "data", "train", "score", "gridsearch", "ablate"});
  read(j, "seed", c.seed, "config");
  if (j.contains("out")) c.out = j.at("out").get<std::string>();

  if (j.contains("synth")) {
    const json& s = j.at("synth");
    allow_keys(s, "synth",
               {"train_videos", "test_videos", "frames", "keypoints", "dims", "window", "period_min", "period_max",
                "anomaly_fraction", "segment_length", "noise", "motion_amplitude", "anomaly_amplitude"});
    SynthConfig& y = c.synth;
    read(s, "train_videos", y.train_videos, "synth");
    read(s, "test_videos", y.test_videos, "synth");
    read(s, "frames", y.frames, "synth");
    read(s, "keypoints", y.keypoints, "synth");
    read(s, "dims", y.dims, "synth");
    read(s, "window", y.window, "synth");
    read(s, "period_min", y.period_min, "synth");
    read(s, "period_max", y.period_max, "synth");
    read(s, "anomaly_fraction", y.anomaly_fraction, "synth");
    read(s, "segment_length", y.segment_length, "synth");
    read(s, "noise", y.noise, "synth");
    read(s, "motion_amplitude", y.motion_amplitude, "synth");
    read(s, "anomaly_amplitude", y.anomaly_amplitude, "synth");
  }
  if (j.contains("data")) {
    const json& d = j.at("data");
    allow_keys(d, "data", {"train_dir", "test_dir"});
    if (d.contains("train_dir")) c.train_dir = d.at("train_dir").get<std::string>();
    if (d.contains("test_dir")) c.test_dir = d.at("test_dir").get<std::string>();
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    allow_keys(t, "train",
               {"window", "streams", "lr", "batch", "epochs", "clip_norm", "pr", "pp", "rd", "corpus"});
    PipelineConfig& p = c.pipeline;
    read(t, "window", p.window, "train");
    if (t.contains("streams")) c.streams = parse_streams(t.at("streams").get<std::vector<std::string>>());
    // Shared optimizer settings first; per-stream sections may override.
    for (TrainHyper* h : {&p.pr.train, &p.pp.train, &p.rd.train}) read_train_hyper(t, *h, "train");
    if (t.contains("pr")) {
      const json& s = t.at("pr");
      allow_keys(s, "train.pr", {"hidden_dim", "lr", "batch", "epochs", "clip_norm"});
      read(s, "hidden_dim", p.pr.hidden_dim, "train.pr");
      read_train_hyper(s, p.pr.train, "train.pr");
    }
    if (t.contains("pp")) {
      const json& s = t.at("pp");
      allow_keys(s, "train.pp", {"hidden_dim", "latent_dim", "kl_weight", "lr", "batch", "epochs", "clip_norm"});
      read(s, "hidden_dim", p.pp.hidden_dim, "train.pp");
      read(s, "latent_dim", p.pp.latent_dim, "train.pp");
      read(s, "kl_weight", p.pp.kl_weight, "train.pp");
      read_train_hyper(s, p.pp.train, "train.pp");
    }
    if (t.contains("rd")) {
      const json& s = t.at("rd");
      allow_keys(s, "train.rd",
                 {"embedding_dim", "embed_hidden_dim", "classifier_hidden_dim", "use_velocity", "lr", "batch", "epochs",
                  "clip_norm"});
      read(s, "embedding_dim", p.rd.embedding_dim, "train.rd");
      read(s, "embed_hidden_dim", p.rd.embed_hidden_dim, "train.rd");
      read(s, "classifier_hidden_dim", p.rd.classifier_hidden_dim, "train.rd");
      read(s, "use_velocity", p.rd.use_velocity, "train.rd");
      read_train_hyper(s, p.rd.train, "train.rd");
    }
    if (t.contains("corpus")) {
      const json& s = t.at("corpus");
      allow_keys(s, "train.corpus", {"windows", "positive_fraction", "loop_min", "loop_max", "noise"});
      read(s, "windows", p.corpus.windows, "train.corpus");
      read(s, "positive_fraction", p.corpus.positive_fraction, "train.corpus");
      read(s, "loop_min", p.corpus.loop_min, "train.corpus");
      read(s, "loop_max", p.corpus.loop_max, "train.corpus");
      read(s, "noise", p.corpus.noise, "train.corpus");
    }
  }
  if (j.contains("score")) {
    const json& s = j.at("score");
    allow_keys(s, "score", {"alpha", "beta", "gamma"});
    read(s, "alpha", c.pipeline.weights.alpha, "score");
    read(s, "beta", c.pipeline.weights.beta, "score");
    read(s, "gamma", c.pipeline.weights.gamma, "score");
  }
  if (j.contains("gridsearch")) {
    const json& s = j.at("gridsearch");
    allow_keys(s, "gridsearch", {"lo", "hi", "step"});
    read(s, "lo", c.grid.lo, "gridsearch");
    read(s, "hi", c.grid.hi, "gridsearch");
    read(s, "step", c.grid.step, "gridsearch");
  }
  if (j.contains("ablate")) {
    const json& s = j.at("ablate");
    allow_keys(s, "ablate", {"windows", "dims"});
    read(s, "windows", c.ablate_windows, "ablate");
    read(s, "dims", c.ablate_dims, "ablate");
  }
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

// The fully resolved configuration, every field spelled out.
inline json run_config_to_json(const RunConfig& c) {
  using namespace config_detail;
  const SynthConfig& y = c.synth;
  const PipelineConfig& p = c.pipeline;
  json j;
  j["seed"] = c.seed;
  j["out"] = c.out.generic_string();
  j["synth"] = {{"train_videos", y.train_videos}, {"test_videos", y.test_videos},
                {"frames", y.frames},             {"keypoints", y.keypoints},
                {"dims", y.dims},                 {"window", y.window},
                {"period_min", y.period_min},     {"period_max", y.period_max},
                {"anomaly_fraction", y.anomaly_fraction}, {"segment_length", y.segment_length},
                {"noise", y.noise},               {"motion_amplitude", y.motion_amplitude},
                {"anomaly_amplitude", y.anomaly_amplitude}};
  j["data"] = {{"train_dir", c.train_data().generic_string()}, {"test_dir", c.test_data().generic_string()}};
  json pr = {{"hidden_dim", p.pr.hidden_dim}};
  pr.update(hyper_json(p.pr.train));
  json pp = {{"hidden_dim", p.pp.hidden_dim}, {"latent_dim", p.pp.latent_dim}, {"kl_weight", p.pp.kl_weight}};
  pp.update(hyper_json(p.pp.train));
  json rd = {{"embedding_dim", p.rd.embedding_dim},
             {"embed_hidden_dim", p.rd.embed_hidden_dim},
             {"classifier_hidden_dim", p.rd.classifier_hidden_dim},
             {"use_velocity", p.rd.use_velocity}};
  rd.update(hyper_json(p.rd.train));
  j["train"] = {{"window", p.window},
                {"streams", stream_names(c.streams)},
                {"pr", pr},
                {"pp", pp},
                {"rd", rd},
                {"corpus",
                 {{"windows", p.corpus.windows},
                  {"positive_fraction", p.corpus.positive_fraction},
                  {"loop_min", p.corpus.loop_min},
                  {"loop_max", p.corpus.loop_max},
                  {"noise", p.corpus.noise}}}};
  j["score"] = {{"alpha", p.weights.alpha}, {"beta", p.weights.beta}, {"gamma", p.weights.gamma}};
  j["gridsearch"] = {{"lo", c.grid.lo}, {"hi", c.grid.hi}, {"step", c.grid.step}};
  j["ablate"] = {{"windows", c.ablate_windows}, {"dims", c.ablate_dims}};
  return j;
}

// Seeds flow from the single run seed into the generator and the pipeline.
inline SynthConfig synth_config(const RunConfig& c) {
  SynthConfig s = c.synth;
  s.seed = c.seed;
  return s;
}

inline PipelineConfig pipeline_config(const RunConfig& c) {
  PipelineConfig p = c.pipeline;
  p.seed = c.seed;
  return p;
}

inline AblationConfig ablation_config(const RunConfig& c) {
  AblationConfig a;
  a.data = synth_config(c);
  a.pipeline = pipeline_config(c);
  a.windows = c.ablate_windows;
  a.dims = c.ablate_dims;
  return a;
}

}  // namespace dssbd
