#pragma once

// Plain-text model checkpoints and training-statistics files.
//
//   dssbd-checkpoint v1
//   kind pr|pp|rd
//   <key> <value>            one line per shape / training field
//   param <name> <count>
//   <value> ...              `count` values, shortest round-trip decimal
//   end
//
// Values are written with the shortest representation that parses back to
// the same double, so a save/load cycle is bit-exact.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dssbd/data.hpp"
#include "dssbd/errors.hpp"
#include "dssbd/fusion_eval.hpp"
#include "dssbd/numkit.hpp"
#include "dssbd/pp_stream.hpp"
#include "dssbd/pr_stream.hpp"
#include "dssbd/rd_stream.hpp"
#include "dssbd/streams.hpp"

namespace dssbd {

inline constexpr std::string_view kCheckpointMagic = "dssbd-checkpoint v1";

namespace ckpt_detail {

struct Document {
  std::string kind;
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, Vector>> params;  // file order
};

template <class Params>
void append_params(std::ostringstream& os, const Params& p) {
  p.for_each_param([&](const std::string& name, std::span<const double> values) {
    os << "param " << name << ' ' << values.size() << '\n';
    for (std::size_t i = 0; i < values.size(); ++i) {
      os << format_double(values[i]) << ((i + 1) % 8 == 0 || i + 1 == values.size() ? '\n' : ' ');
    }
  });
}

inline std::string render(const std::string& kind, const std::vector<std::pair<std::string, std::string>>& meta,
                          const std::ostringstream& body) {
  std::ostringstream os;
  os << kCheckpointMagic << '\n' << "kind " << kind << '\n';
  for (const auto& [k, v] : meta) os << k << ' ' << v << '\n';
  os << body.str() << "end\n";
  return os.str();
}

inline Document parse(std::string_view text) {
  Document doc;
  std::istringstream is{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  auto next_line = [&]() -> bool {
    if (!std::getline(is, line)) return false;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };
  if (!next_line() || line != kCheckpointMagic) throw ParseError(1, "not a dssbd checkpoint (bad magic line)");
  bool ended = false;
  while (next_line()) {
    if (line.empty()) continue;
    if (line == "end") {
      ended = true;
      break;
    }
    const auto sp = line.find(' ');
    if (sp == std::string::npos) throw ParseError(lineno, "expected '<key> <value>'");
    const std::string key = line.substr(0, sp);
    const std::string rest = line.substr(sp + 1);
    if (key == "kind") {
      doc.kind = rest;
    } else if (key == "param") {
      const auto sp2 = rest.find(' ');
      if (sp2 == std::string::npos) throw ParseError(lineno, "param line needs a name and a count");
      const std::string name = rest.substr(0, sp2);
      const auto count = parse_integer<std::size_t>(rest.substr(sp2 + 1));
      if (!count) throw ParseError(lineno, "bad parameter count");
      Vector values;
      values.reserve(*count);
      while (values.size() < *count) {
        if (!next_line()) throw ParseError(lineno, "truncated values for " + name);
        std::istringstream ls(line);
        std::string tok;
        while (ls >> tok) {
          const auto v = parse_double(tok);
          if (!v) throw ParseError(lineno, "bad value '" + tok + "'");
          values.push_back(*v);
        }
      }
      if (values.size() != *count) throw ParseError(lineno, "too many values for " + name);
      doc.params.emplace_back(name, std::move(values));
    } else {
      doc.meta[key] = rest;
    }
  }
  if (!ended) throw ParseError(lineno, "missing 'end' line");
  return doc;
}

inline const std::string& field(const Document& doc, const std::string& key) {
  auto it = doc.meta.find(key);
  if (it == doc.meta.end()) throw ParseError(0, "checkpoint lacks field '" + key + "'");
  return it->second;
}

inline std::size_t count_field(const Document& doc, const std::string& key) {
  const auto v = parse_integer<std::size_t>(field(doc, key));
  if (!v) throw ParseError(0, "field '" + key + "' is not a count");
  return *v;
}

inline std::uint64_t u64_field(const Document& doc, const std::string& key) {
  const auto v = parse_integer<std::uint64_t>(field(doc, key));
  if (!v) throw ParseError(0, "field '" + key + "' is not an integer");
  return *v;
}

inline double double_field(const Document& doc, const std::string& key) {
  const auto v = parse_double(field(doc, key));
  if (!v) throw ParseError(0, "field '" + key + "' is not a number");
  return *v;
}

inline bool bool_field(const Document& doc, const std::string& key) {
  const std::string& v = field(doc, key);
  if (v == "1") return true;
  if (v == "0") return false;
  throw ParseError(0, "field '" + key + "' must be 0 or 1");
}

// Copies the stored arrays into `p`, which must already have the right shapes.
template <class Params>
void fill_params(const Document& doc, Params& p) {
  std::size_t k = 0;
  p.for_each_param([&](const std::string& name, std::span<double> dst) {
    if (k >= doc.params.size()) throw ParseError(0, "checkpoint lacks parameter " + name);
    const auto& [stored, values] = doc.params[k++];
    if (stored != name) throw ParseError(0, "expected parameter " + name + ", found " + stored);
    if (values.size() != dst.size()) {
      throw ParseError(0, "parameter " + name + " has " + std::to_string(values.size()) + " values, expected " +
                              std::to_string(dst.size()));
    }
    std::copy(values.begin(), values.end(), dst.begin());
  });
  if (k != doc.params.size()) throw ParseError(0, "checkpoint has unexpected extra parameters");
  if (!params_finite(p)) throw ParseError(0, "checkpoint holds non-finite parameters");
}

inline void expect_kind(const Document& doc, std::string_view kind) {
  if (doc.kind != kind) throw ParseError(0, "checkpoint kind is '" + doc.kind + "', expected '" + std::string(kind) + "'");
}

}  // namespace ckpt_detail

inline std::string format_checkpoint(const PRModel& m) {
  std::ostringstream body;
  ckpt_detail::append_params(body, m.params);
  return ckpt_detail::render("pr",
                             {{"keypoints", std::to_string(m.keypoints)},
                              {"dims", std::to_string(m.dims)},
                              {"window", std::to_string(m.window)},
                              {"hidden_dim", std::to_string(m.hidden_dim)},
                              {"seed", std::to_string(m.seed)},
                              {"epochs_run", std::to_string(m.epochs_run)},
                              {"final_loss", format_double(m.final_loss)}},
                             body);
}

inline std::string format_checkpoint(const PPModel& m) {
  std::ostringstream body;
  ckpt_detail::append_params(body, m.params);
  return ckpt_detail::render("pp",
                             {{"keypoints", std::to_string(m.keypoints)},
                              {"dims", std::to_string(m.dims)},
                              {"window", std::to_string(m.window)},
                              {"hidden_dim", std::to_string(m.hidden_dim)},
                              {"latent_dim", std::to_string(m.latent_dim)},
                              {"deterministic", m.deterministic ? "1" : "0"},
                              {"seed", std::to_string(m.seed)},
                              {"epochs_run", std::to_string(m.epochs_run)},
                              {"final_loss", format_double(m.final_loss)}},
                             body);
}

inline std::string format_checkpoint(const RDModel& m) {
  std::ostringstream body;
  ckpt_detail::append_params(body, m.params);
  return ckpt_detail::render("rd",
                             {{"keypoints", std::to_string(m.keypoints)},
                              {"dims", std::to_string(m.dims)},
                              {"window", std::to_string(m.window)},
                              {"embedding_dim", std::to_string(m.embedding_dim)},
                              {"embed_hidden_dim", std::to_string(m.params.embed_hidden.W.rows())},
                              {"classifier_hidden_dim", std::to_string(m.params.classifier_hidden.W.rows())},
                              {"use_velocity", m.use_velocity ? "1" : "0"},
                              {"seed", std::to_string(m.seed)},
                              {"epochs_run", std::to_string(m.epochs_run)},
                              {"final_loss", format_double(m.final_loss)}},
                             body);
}

inline PRModel parse_pr_checkpoint(std::string_view text) {
  using namespace ckpt_detail;
  const Document doc = parse(text);
  expect_kind(doc, "pr");
  PRModel m = init_pr_model(count_field(doc, "keypoints"), count_field(doc, "dims"), count_field(doc, "window"),
                            count_field(doc, "hidden_dim"), u64_field(doc, "seed"));
  fill_params(doc, m.params);
  m.epochs_run = count_field(doc, "epochs_run");
  m.final_loss = double_field(doc, "final_loss");
  return m;
}

inline PPModel parse_pp_checkpoint(std::string_view text) {
  using namespace ckpt_detail;
  const Document doc = parse(text);
  expect_kind(doc, "pp");
  PPModel m = init_pp_model(count_field(doc, "keypoints"), count_field(doc, "dims"), count_field(doc, "window"),
                            count_field(doc, "hidden_dim"), count_field(doc, "latent_dim"), u64_field(doc, "seed"));
  fill_params(doc, m.params);
  m.deterministic = bool_field(doc, "deterministic");
  m.epochs_run = count_field(doc, "epochs_run");
  m.final_loss = double_field(doc, "final_loss");
  return m;
}

inline RDModel parse_rd_checkpoint(std::string_view text) {
  using namespace ckpt_detail;
  const Document doc = parse(text);
  expect_kind(doc, "rd");
  RDConfig cfg;
  cfg.embedding_dim = count_field(doc, "embedding_dim");
  cfg.embed_hidden_dim = count_field(doc, "embed_hidden_dim");
  cfg.classifier_hidden_dim = count_field(doc, "classifier_hidden_dim");
  cfg.use_velocity = bool_field(doc, "use_velocity");
  RDModel m = init_rd_model(count_field(doc, "keypoints"), count_field(doc, "dims"), count_field(doc, "window"), cfg,
                            u64_field(doc, "seed"));
  fill_params(doc, m.params);
  m.epochs_run = count_field(doc, "epochs_run");
  m.final_loss = double_field(doc, "final_loss");
  return m;
}

// Parse errors from a file are rethrown with the path attached.
template <class Model, class ParseFn>
Model load_checkpoint_file(const std::filesystem::path& path, ParseFn&& parse_fn) {
  const std::string text = read_file(path);
  try {
    return parse_fn(text);
  } catch (const ParseError& e) {
    throw ParseError(e.line(), path.string() + ": " + e.what());
  }
}

inline PRModel load_pr_checkpoint(const std::filesystem::path& p) {
  return load_checkpoint_file<PRModel>(p, parse_pr_checkpoint);
}
inline PPModel load_pp_checkpoint(const std::filesystem::path& p) {
  return load_checkpoint_file<PPModel>(p, parse_pp_checkpoint);
}
inline RDModel load_rd_checkpoint(const std::filesystem::path& p) {
  return load_checkpoint_file<RDModel>(p, parse_rd_checkpoint);
}

template <class Model>
void save_checkpoint(const std::filesystem::path& path, const Model& m) {
  write_file_atomic(path, format_checkpoint(m));
}

// ---------------------------------------------------------------------------
// Training statistics: `key = value` lines.
// ---------------------------------------------------------------------------

inline std::string format_train_stats(const TrainStats& s) {
  std::ostringstream os;
  os << "# dssbd train stats v1\n"
     << "pr_mean = " << format_double(s.pr_mean) << '\n'
     << "pr_std = " << format_double(s.pr_std) << '\n'
     << "pr_floored = " << (s.pr_floored ? 1 : 0) << '\n'
     << "pp_mean = " << format_double(s.pp_mean) << '\n'
     << "pp_std = " << format_double(s.pp_std) << '\n'
     << "pp_floored = " << (s.pp_floored ? 1 : 0) << '\n';
  return os.str();
}

inline TrainStats parse_train_stats(std::string_view text) {
  std::map<std::string, std::string> kv;
  std::size_t lineno = 0;
  for (std::string_view line : split(text, '\n')) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(lineno, "expected 'key = value'");
    auto trim = [](std::string_view s) {
      while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
      while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
      return std::string(s);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  auto num = [&](const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw ParseError(0, "train stats lack '" + key + "'");
    const auto v = parse_double(it->second);
    if (!v) throw ParseError(0, "train stats field '" + key + "' is not a number");
    return *v;
  };
  TrainStats s;
  s.pr_mean = num("pr_mean");
  s.pr_std = num("pr_std");
  s.pr_floored = num("pr_floored") != 0.0;
  s.pp_mean = num("pp_mean");
  s.pp_std = num("pp_std");
  s.pp_floored = num("pp_floored") != 0.0;
  if (!(s.pr_std > 0.0) || !(s.pp_std > 0.0)) throw ParseError(0, "train stats standard deviations must be > 0");
  return s;
}

inline void save_train_stats(const std::filesystem::path& path, const TrainStats& s) {
  write_file_atomic(path, format_train_stats(s));
}

inline TrainStats load_train_stats(const std::filesystem::path& path) {
  try {
    return parse_train_stats(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(e.line(), path.string() + ": " + e.what());
  }
}

// epoch,loss
inline std::string format_loss_curve(const TrainLog& log) {
  std::ostringstream os;
  os << "epoch,loss\n";
  for (std::size_t e = 0; e < log.epoch_loss.size(); ++e) os << (e + 1) << ',' << format_double(log.epoch_loss[e]) << '\n';
  return os.str();
}

}  // namespace dssbd
