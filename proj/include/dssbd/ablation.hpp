#pragma once

// Ablation grid over window length T, pose dimensionality d and the 7
// non-empty stream subsets. Each (T, d) pair trains every stream once; a
// subset's cell is the unit-weight fusion of its members. Because each
// stream's seed depends only on the run seed and the stream name, a cell is
// bit-identical to a run that trains that subset alone.

#include <cstddef>
#include <exception>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dssbd/data.hpp"
#include "dssbd/errors.hpp"
#include "dssbd/fusion_eval.hpp"
#include "dssbd/pipeline.hpp"

namespace dssbd {

struct AblationConfig {
  SynthConfig data;
  PipelineConfig pipeline;
  std::vector<std::size_t> windows{4, 8, 16, 64};
  std::vector<std::size_t> dims{2, 3};
};

struct AblationCell {
  std::size_t window = 0;
  std::size_t dims = 0;
  StreamSet streams;
  double micro = 0.0;
  double macro = 0.0;
  std::string status = "ok";

  bool ok() const { return status == "ok"; }
};

namespace ablation_detail {

inline std::string describe(const std::exception& e) {
  std::string s = e.what();
  for (char& c : s) {
    if (c == ',' || c == '\n') c = ';';
  }
  return "error: " + s;
}

inline SynthDataset dataset_for(const AblationConfig& cfg, std::size_t d) {
  SynthConfig s = cfg.data;
  s.dims = d;
  return synth_dataset(s);
}

inline PipelineConfig pipeline_for(const AblationConfig& cfg, std::size_t T) {
  PipelineConfig p = cfg.pipeline;
  p.window = T;
  return p;
}

inline AblationCell evaluate_cell(const TrainedPipeline& tp, const std::vector<ScoredVideo>& scored, std::size_t T,
                                  std::size_t d, StreamSet s, std::uint64_t seed) {
  AblationCell cell{T, d, s};
  try {
    const EvalReport r = evaluate_scored(scored, tp.stats, s.unit_weights(), T, seed);
    cell.micro = r.micro;
    cell.macro = r.macro;
  } catch (const std::exception& e) {
    cell.status = describe(e);
  }
  return cell;
}

}  // namespace ablation_detail

// One cell computed on its own: trains only the streams in `s`.
inline AblationCell run_ablation_cell(const AblationConfig& cfg, std::size_t T, std::size_t d, StreamSet s) {
  try {
    const SynthDataset ds = ablation_detail::dataset_for(cfg, d);
    const TrainedPipeline tp = train_pipeline(ds.train, ablation_detail::pipeline_for(cfg, T), s);
    return ablation_detail::evaluate_cell(tp, score_pipeline(tp, ds.test), T, d, s, cfg.pipeline.seed);
  } catch (const std::exception& e) {
    AblationCell cell{T, d, s};
    cell.status = ablation_detail::describe(e);
    return cell;
  }
}

// Full grid, ordered by d, then T, then subset bitmask. A failing (T, d)
// pair marks its cells and the remaining pairs still run.
inline std::vector<AblationCell> ablation_suite(const AblationConfig& cfg) {
  if (cfg.windows.empty() || cfg.dims.empty()) throw ConfigError("ablation: empty window or dims list");
  std::vector<AblationCell> out;
  for (std::size_t d : cfg.dims) {
    std::optional<SynthDataset> ds;
    std::exception_ptr data_error;
    try {
      ds = ablation_detail::dataset_for(cfg, d);
    } catch (...) {
      data_error = std::current_exception();
    }
    for (std::size_t T : cfg.windows) {
      // Streams train one at a time so a failure only marks the cells that
      // contain the failing stream.
      const PipelineConfig pc = ablation_detail::pipeline_for(cfg, T);
      TrainedPipeline merged;
      std::vector<ScoredVideo> scored;
      std::string failure[3];
      for (Stream st : {Stream::pr, Stream::pp, Stream::rd}) {
        try {
          if (!ds) std::rethrow_exception(data_error);
          const StreamSet only{st == Stream::pr, st == Stream::pp, st == Stream::rd};
          TrainedPipeline tp = train_pipeline(ds->train, pc, only);
          const auto part = score_pipeline(tp, ds->test);
          merge_stream(merged, std::move(tp), st);
          if (scored.empty()) scored = part;
          for (std::size_t v = 0; v < part.size(); ++v) {
            if (st == Stream::pr) scored[v].pr = part[v].pr;
            if (st == Stream::pp) scored[v].pp = part[v].pp;
            if (st == Stream::rd) scored[v].rd = part[v].rd;
          }
        } catch (const std::exception& e) {
          failure[static_cast<int>(st)] = ablation_detail::describe(e);
        }
      }
      for (StreamSet s : all_stream_subsets()) {
        std::string err;
        for (Stream st : {Stream::pr, Stream::pp, Stream::rd}) {
          if (s.contains(st) && err.empty()) err = failure[static_cast<int>(st)];
        }
        if (!err.empty()) {
          AblationCell cell{T, d, s};
          cell.status = err;
          out.push_back(cell);
        } else {
          out.push_back(ablation_detail::evaluate_cell(merged, scored, T, d, s, cfg.pipeline.seed));
        }
      }
    }
  }
  return out;
}

inline std::string format_ablation_csv(const std::vector<AblationCell>& cells) {
  std::ostringstream os;
  os << "T,d,streams,micro,macro,status\n";
  for (const auto& c : cells) {
    os << c.window << ',' << c.dims << ',' << c.streams.label() << ',';
    if (c.ok()) os << format_double(c.micro) << ',' << format_double(c.macro);
    else os << ',';
    os << ',' << c.status << '\n';
  }
  return os.str();
}

}  // namespace dssbd
