#pragma once

// Per-frame score CSV and evaluation report files.
//
// Score CSV columns: video_id,frame_index,s_pr,s_pp,s_rd,S,label. A stream
// that was not trained leaves its column empty; label is empty for
// unlabeled videos.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dssbd/data.hpp"
#include "dssbd/errors.hpp"
#include "dssbd/fusion_eval.hpp"

namespace dssbd {

inline constexpr std::string_view kScoreHeader = "video_id,frame_index,s_pr,s_pp,s_rd,S,label";

// One video's rows of a score file.
struct ScoreTable {
  ScoredVideo raw;
  Vector fused;
};

// Fuses every video with `w` and renders the CSV. Streams with zero weight
// may be absent.
inline std::string format_score_csv(const std::vector<ScoredVideo>& videos, const FusionWeights& w,
                                    const TrainStats& stats) {
  std::ostringstream os;
  os << kScoreHeader << '\n';
  for (const ScoredVideo& v : videos) {
    const Vector S = fuse(v.pr, v.pp, v.rd, w, stats);
    for (std::size_t i = 0; i < S.size(); ++i) {
      auto col = [&](const Vector& s) { return s.empty() ? std::string() : format_double(s[i]); };
      os << v.video_id << ',' << i << ',' << col(v.pr) << ',' << col(v.pp) << ',' << col(v.rd) << ','
         << format_double(S[i]) << ',';
      if (!v.labels.empty()) os << static_cast<int>(v.labels[i]);
      os << '\n';
    }
  }
  return os.str();
}

// Videos in order of first appearance; frame indices must run 0..N-1.
inline std::vector<ScoreTable> parse_score_csv(std::string_view text) {
  std::vector<ScoreTable> out;
  std::map<std::string, std::size_t, std::less<>> index;
  std::size_t lineno = 0;
  bool header = false;
  for (std::string_view line : split(text, '\n')) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (!header) {
      if (line != kScoreHeader) throw ParseError(lineno, "expected header '" + std::string(kScoreHeader) + "'");
      header = true;
      continue;
    }
    const auto f = split(line, ',');
    if (f.size() != 7) throw ParseError(lineno, "expected 7 fields, found " + std::to_string(f.size()));
    const std::string id(f[0]);
    if (id.empty()) throw ParseError(lineno, "empty video_id");
    auto it = index.find(id);
    if (it == index.end()) {
      it = index.emplace(id, out.size()).first;
      out.push_back({});
      out.back().raw.video_id = id;
    }
    ScoreTable& t = out[it->second];
    const auto frame = parse_integer<std::size_t>(f[1]);
    if (!frame || *frame != t.fused.size()) {
      throw ParseError(lineno, "frame_index must continue video " + id + " at " + std::to_string(t.fused.size()));
    }
    auto column = [&](std::string_view field, Vector& dst, const char* name) {
      const bool first = t.fused.empty();
      if (field.empty()) {
        if (!first && !dst.empty()) throw ParseError(lineno, std::string(name) + " column is partially empty");
        return;
      }
      if (!first && dst.size() != t.fused.size()) throw ParseError(lineno, std::string(name) + " column is partially empty");
      const auto v = parse_double(field);
      if (!v) throw ParseError(lineno, "bad " + std::string(name) + " value '" + std::string(field) + "'");
      dst.push_back(*v);
    };
    column(f[2], t.raw.pr, "s_pr");
    column(f[3], t.raw.pp, "s_pp");
    column(f[4], t.raw.rd, "s_rd");
    const auto S = parse_double(f[5]);
    if (!S) throw ParseError(lineno, "bad S value '" + std::string(f[5]) + "'");
    if (f[6].empty()) {
      if (!t.raw.labels.empty()) throw ParseError(lineno, "label column is partially empty");
    } else {
      if (f[6] != "0" && f[6] != "1") throw ParseError(lineno, "label must be 0 or 1");
      if (t.raw.labels.size() != t.fused.size()) throw ParseError(lineno, "label column is partially empty");
      t.raw.labels.push_back(f[6] == "1" ? 1 : 0);
    }
    t.fused.push_back(*S);
  }
  if (!header) throw ParseError(1, "empty score file");
  return out;
}

inline std::vector<ScoreTable> load_score_csv(const std::filesystem::path& path) {
  try {
    return parse_score_csv(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(e.line(), path.string() + ": " + e.what());
  }
}

// Fused scores with labels, ready for evaluation.
inline std::vector<LabeledScores> labeled_fused(const std::vector<ScoreTable>& tables) {
  std::vector<LabeledScores> out;
  for (const ScoreTable& t : tables) {
    if (t.raw.labels.empty()) throw MissingDataError("video " + t.raw.video_id + " has no labels");
    out.push_back({t.raw.video_id, t.fused, t.raw.labels});
  }
  return out;
}

inline std::string format_eval_report(const EvalReport& r) {
  std::ostringstream os;
  os << "# dssbd evaluation report\n"
     << "micro_auroc = " << format_double(r.micro) << '\n'
     << "macro_auroc = " << format_double(r.macro) << '\n'
     << "videos_evaluated = " << r.per_video.size() << '\n'
     << "videos_skipped = " << r.skipped.size() << '\n';
  os << "skipped =";
  for (const auto& s : r.skipped) os << ' ' << s;
  os << '\n'
     << "alpha = " << format_double(r.weights.alpha) << '\n'
     << "beta = " << format_double(r.weights.beta) << '\n'
     << "gamma = " << format_double(r.weights.gamma) << '\n'
     << "window = " << r.window << '\n'
     << "seed = " << r.seed << '\n'
     << "\n[per_video]\n";
  for (const auto& v : r.per_video) os << v.video_id << " = " << format_double(v.auroc) << '\n';
  return os.str();
}

inline std::string format_per_video_csv(const EvalReport& r) {
  std::ostringstream os;
  os << "video_id,auroc\n";
  for (const auto& v : r.per_video) os << v.video_id << ',' << format_double(v.auroc) << '\n';
  return os.str();
}

// Reads back micro_auroc, macro_auroc and the per-video table.
struct ReportSummary {
  double micro = 0.0;
  double macro = 0.0;
  std::vector<VideoAuroc> per_video;
};

inline ReportSummary parse_eval_report(std::string_view text) {
  ReportSummary s;
  bool per_video = false, have_micro = false, have_macro = false;
  std::size_t lineno = 0;
  for (std::string_view line : split(text, '\n')) {
    ++lineno;
    if (line.empty() || line.front() == '#') continue;
    if (line == "[per_video]") {
      per_video = true;
      continue;
    }
    const auto eq = line.find(" = ");
    if (eq == std::string_view::npos) continue;
    const std::string_view key = line.substr(0, eq), value = line.substr(eq + 3);
    if (per_video) {
      const auto v = parse_double(value);
      if (!v) throw ParseError(lineno, "bad per-video AUROC");
      s.per_video.push_back({std::string(key), *v});
    } else if (key == "micro_auroc" || key == "macro_auroc") {
      const auto v = parse_double(value);
      if (!v) throw ParseError(lineno, "bad " + std::string(key));
      (key == "micro_auroc" ? s.micro : s.macro) = *v;
      (key == "micro_auroc" ? have_micro : have_macro) = true;
    }
  }
  if (!have_micro || !have_macro) throw ParseError(lineno, "report lacks micro_auroc or macro_auroc");
  return s;
}

inline std::string format_grid_table(const GridSearchResult& g) {
  std::ostringstream os;
  os << "alpha,beta,gamma,micro_auroc\n";
  for (const auto& c : g.table) {
    os << format_double(c.weights.alpha) << ',' << format_double(c.weights.beta) << ','
       << format_double(c.weights.gamma) << ',' << format_double(c.micro) << '\n';
  }
  return os.str();
}

inline std::string format_grid_best(const GridSearchResult& g, const EvalReport& default_weights) {
  std::ostringstream os;
  os << "# dssbd grid search\n"
     << "alpha = " << format_double(g.best.alpha) << '\n'
     << "beta = " << format_double(g.best.beta) << '\n'
     << "gamma = " << format_double(g.best.gamma) << '\n'
     << "best_micro_auroc = " << format_double(g.best_micro) << '\n'
     << "default_micro_auroc = " << format_double(default_weights.micro) << '\n'
     << "candidates = " << g.table.size() << '\n';
  return os.str();
}

}  // namespace dssbd
