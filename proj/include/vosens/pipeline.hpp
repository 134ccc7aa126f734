#pragma once

// Stage runners shared by the command-line tool: each one reads the standard
// directory layout, does its work in memory and publishes its output
// directory atomically.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vosens/dataset.hpp"
#include "vosens/error.hpp"
#include "vosens/features.hpp"
#include "vosens/fusion.hpp"
#include "vosens/metrics.hpp"
#include "vosens/selection.hpp"
#include "vosens/synth.hpp"

namespace vosens {

inline constexpr std::string_view kToolName = "vosens";
inline constexpr std::string_view kToolVersion = "1.0.0";

enum class ReportFormat { Json, Csv };

inline std::string_view to_string(ReportFormat f) { return f == ReportFormat::Json ? "json" : "csv"; }

inline ReportFormat parse_report_format(std::string_view s) {
  if (s == "json") return ReportFormat::Json;
  if (s == "csv") return ReportFormat::Csv;
  throw Error(ErrorKind::ConfigInvalid, "unknown report format '" + std::string(s) + "'");
}

/// Every subdirectory of the prediction root, sorted, when no models are named.
inline std::vector<std::string> resolve_models(const fs::path& pred_root, std::vector<std::string> models) {
  if (!models.empty()) return models;
  std::error_code ec;
  if (!fs::is_directory(pred_root, ec)) throw Error(ErrorKind::MissingFile, pred_root.string());
  models = detail::sorted_subdirs(pred_root);
  if (models.empty()) throw Error(ErrorKind::EmptyInput, "no model directories under " + pred_root.string());
  return models;
}

inline std::optional<PerformanceDB> load_performance_db(const std::optional<fs::path>& path) {
  std::error_code ec;
  if (!path || !fs::is_regular_file(*path, ec)) return std::nullopt;
  std::ifstream in(*path);
  std::stringstream ss;
  ss << in.rdbuf();
  return PerformanceDB::parse(ss.str());
}

/// Loads only the listed videos from `dir/<video>/`, so sibling entries such
/// as `consistency/` are left alone.
inline SequenceMap load_selected_sequences(const fs::path& dir, const std::vector<std::string>& ids, unsigned jobs) {
  std::vector<VideoSequence> loaded(ids.size());
  parallel_for(ids.size(), jobs, [&](std::size_t i) {
    std::error_code ec;
    if (!fs::is_directory(dir / ids[i], ec)) {
      throw Error(ErrorKind::InconsistentCoverage, "no sequence for video " + ids[i] + " in " + dir.string());
    }
    loaded[i] = load_video_sequence(dir / ids[i], ids[i]);
  });
  SequenceMap out;
  for (std::size_t i = 0; i < ids.size(); ++i) out.emplace(ids[i], std::move(loaded[i]));
  return out;
}

inline nlohmann::json consistency_json(const std::string& video, const VideoSequence& seq,
                                       const std::vector<ConsistencySummary>& summaries) {
  nlohmann::json frames = nlohmann::json::array();
  for (std::size_t f = 0; f < summaries.size(); ++f) {
    frames.push_back({{"frame", seq.frame_names[f]},
                      {"unanimous", round_half_up(summaries[f].unanimous, 6)},
                      {"majority", round_half_up(summaries[f].majority, 6)},
                      {"conflict", round_half_up(summaries[f].conflict, 6)}});
  }
  return {{"video", video}, {"frames", std::move(frames)}};
}

/// Mean agreement fractions per video.
inline nlohmann::json fusion_summary_json(const PseudoLabelSet& pseudo) {
  nlohmann::json videos = nlohmann::json::object();
  for (const auto& [vid, summaries] : pseudo.consistency_summary) {
    ConsistencySummary mean;
    for (const auto& s : summaries) {
      mean.unanimous += s.unanimous;
      mean.majority += s.majority;
      mean.conflict += s.conflict;
    }
    const double n = summaries.empty() ? 1.0 : static_cast<double>(summaries.size());
    videos[vid] = {{"unanimous", round_half_up(mean.unanimous / n, 6)},
                   {"majority", round_half_up(mean.majority / n, 6)},
                   {"conflict", round_half_up(mean.conflict / n, 6)}};
  }
  return {{"method", to_string(pseudo.method)}, {"videos", std::move(videos)}};
}

/// Writes fused frames as `<dir>/<video>/<frame>.png` and, for pgmr,
/// `<dir>/consistency/<video>.json`.
inline void write_pseudo_labels(const PseudoLabelSet& pseudo, const fs::path& dir, unsigned jobs) {
  save_sequences(pseudo.videos, dir, jobs);
  for (const auto& [vid, summaries] : pseudo.consistency_summary) {
    write_file_atomic(dir / "consistency" / (vid + ".json"),
                      consistency_json(vid, pseudo.videos.at(vid), summaries).dump(2) + "\n");
  }
}

struct FuseRequest {
  fs::path pred_root;
  std::vector<std::string> models;
  FusionMethod method = FusionMethod::Pgmr;
  std::optional<fs::path> db_path;
  fs::path out_dir;
  unsigned jobs = 1;
};

inline PseudoLabelSet run_fuse(const FuseRequest& req) {
  const auto models = resolve_models(req.pred_root, req.models);
  const auto preds = load_prediction_set(req.pred_root, models, req.jobs);
  const auto db = load_performance_db(req.db_path);
  FusionOptions opts;
  opts.keep_consistency_maps = false;
  opts.jobs = req.jobs;
  auto pseudo = build_pseudo_labels(preds, db ? &*db : nullptr, req.method, opts);
  StagingDir stage(req.out_dir);
  write_pseudo_labels(pseudo, stage.path(), req.jobs);
  stage.commit();
  return pseudo;
}

struct SelectRequest {
  fs::path pred_root;
  std::vector<std::string> models;
  fs::path pseudo_root;
  std::optional<fs::path> db_path;
  std::optional<fs::path> db_out;
  Granularity granularity = Granularity::PerVideo;
  MetricConfig metrics;
  fs::path out_dir;
  std::optional<fs::path> report_path;
  unsigned jobs = 1;
};

struct SelectResult {
  ModelChoice choice;
  SequenceMap final_sequences;
  PerformanceDB updated_db;
};

/// Recommendation against already-fused pseudo-labels. The input database is
/// never modified; the updated copy goes to `db_out` when given.
inline SelectResult select_models(const PredictionSet& preds, const PseudoLabelSet& pseudo,
                                  const std::optional<PerformanceDB>& db, Granularity granularity,
                                  const MetricConfig& cfg, unsigned jobs) {
  SelectResult r;
  r.choice = recommend(preds, pseudo, db ? &*db : nullptr, granularity, cfg, jobs);
  r.final_sequences = assemble_final(preds, r.choice);
  r.updated_db = db.value_or(PerformanceDB{});
  record_performance(r.updated_db, pseudo, r.choice, cfg);
  return r;
}

inline SelectResult run_select(const SelectRequest& req) {
  const auto models = resolve_models(req.pred_root, req.models);
  const auto preds = load_prediction_set(req.pred_root, models, req.jobs);
  PseudoLabelSet pseudo;
  pseudo.videos = load_selected_sequences(req.pseudo_root, preds.video_ids(), req.jobs);
  const auto db = load_performance_db(req.db_path);
  auto result = select_models(preds, pseudo, db, req.granularity, req.metrics, req.jobs);
  StagingDir stage(req.out_dir);
  save_sequences(result.final_sequences, stage.path(), req.jobs);
  stage.commit();
  if (req.report_path) write_file_atomic(*req.report_path, result.choice.to_json().dump(2) + "\n");
  if (req.db_out) write_file_atomic(*req.db_out, result.updated_db.serialize());
  return result;
}

inline std::string render_scores(const ScoreTable& table, ReportFormat format) {
  return format == ReportFormat::Csv ? table.to_csv() : table.to_json().dump(2) + "\n";
}

struct EvaluateRequest {
  fs::path pred_dir;
  fs::path gt_root;
  MetricConfig metrics;
  ReportFormat format = ReportFormat::Json;
  std::optional<fs::path> out_path;
  unsigned jobs = 1;
};

inline ScoreTable run_evaluate(const EvaluateRequest& req) {
  const auto gt = load_ground_truth(req.gt_root, req.jobs);
  std::vector<std::string> ids;
  for (const auto& [vid, seq] : gt) ids.push_back(vid);
  const auto preds = load_selected_sequences(req.pred_dir, ids, req.jobs);
  auto table = evaluate_dataset(preds, gt, req.metrics, req.jobs);
  if (req.out_path) write_file_atomic(*req.out_path, render_scores(table, req.format));
  return table;
}

struct PipelineConfig {
  fs::path pred_root;
  std::optional<fs::path> gt_root;
  fs::path out_root;
  std::vector<std::string> models;
  FusionMethod method = FusionMethod::Pgmr;
  MetricConfig metrics;
  Granularity granularity = Granularity::PerVideo;
  std::optional<fs::path> db_path;
  ReportFormat format = ReportFormat::Json;
  unsigned jobs = 1;
  bool timings = false;

  void validate() const {
    metrics.validate();
    std::error_code ec;
    if (!fs::is_directory(pred_root, ec)) throw Error(ErrorKind::MissingFile, "prediction root " + pred_root.string());
    if (gt_root && !fs::is_directory(*gt_root, ec)) throw Error(ErrorKind::MissingFile, "ground truth root " + gt_root->string());
    if (db_path && fs::exists(*db_path, ec) && !fs::is_regular_file(*db_path, ec)) {
      throw Error(ErrorKind::ConfigInvalid, "performance db " + db_path->string() + " is not a file");
    }
    if (out_root.empty()) throw Error(ErrorKind::ConfigInvalid, "output directory required");
  }

  nlohmann::json to_json() const {
    nlohmann::json j{{"pred_root", pred_root.string()},
                     {"out_root", out_root.string()},
                     {"models", models},
                     {"method", to_string(method)},
                     {"j_weight", metrics.j_weight},
                     {"f_weight", metrics.f_weight},
                     {"empty_gt_nonempty_pred_score", metrics.empty_gt_nonempty_pred_score},
                     {"score_first_frame", metrics.score_first_frame},
                     {"granularity", to_string(granularity)},
                     {"format", to_string(format)},
                     {"jobs", jobs}};
    j["gt_root"] = gt_root ? nlohmann::json(gt_root->string()) : nlohmann::json(nullptr);
    j["db"] = db_path ? nlohmann::json(db_path->string()) : nlohmann::json(nullptr);
    j["empty_empty_score"] =
        metrics.empty_empty_score ? nlohmann::json(*metrics.empty_empty_score) : nlohmann::json(nullptr);
    return j;
  }
};

struct RunReport {
  nlohmann::json config;
  std::vector<std::string> stages;
  nlohmann::json fusion;
  ModelChoice choice;
  std::optional<ScoreTable> scores;
  std::vector<std::pair<std::string, double>> timings_ms;
  bool include_timings = false;

  nlohmann::json to_json() const {
    nlohmann::json j{{"tool", kToolName},
                     {"version", kToolVersion},
                     {"config", config},
                     {"stages", stages},
                     {"fusion", fusion},
                     {"selection", choice.to_json()}};
    j["scores"] = scores ? scores->to_json() : nlohmann::json(nullptr);
    if (include_timings) {
      nlohmann::json t = nlohmann::json::array();
      for (const auto& [stage, ms] : timings_ms) t.push_back({{"stage", stage}, {"ms", ms}});
      j["timings"] = std::move(t);
    }
    return j;
  }
};

class StageClock {
 public:
  explicit StageClock(RunReport& report) : report_(report), start_(std::chrono::steady_clock::now()) {}
  void lap(std::string stage) {
    const auto now = std::chrono::steady_clock::now();
    report_.stages.push_back(stage);
    report_.timings_ms.emplace_back(std::move(stage),
                                    std::chrono::duration<double, std::milli>(now - start_).count());
    start_ = now;
  }

 private:
  RunReport& report_;
  std::chrono::steady_clock::time_point start_;
};

/// ingest -> fuse -> select -> assemble -> (evaluate). Output layout:
///   <out>/pseudo/<video>/<frame>.png, <out>/pseudo/consistency/<video>.json
///   <out>/final/<video>/<frame>.png
///   <out>/performance_db.json, <out>/selection.json, <out>/report.json
///   <out>/scores.json|csv when ground truth is given
/// Timings are left out of the report unless requested, so identical
/// configurations give byte-identical trees.
inline RunReport run_pipeline(const PipelineConfig& input) {
  PipelineConfig cfg = input;
  cfg.models = resolve_models(cfg.pred_root, cfg.models);
  cfg.validate();

  RunReport report;
  report.config = cfg.to_json();
  report.include_timings = cfg.timings;
  StageClock clock(report);

  const auto preds = load_prediction_set(cfg.pred_root, cfg.models, cfg.jobs);
  std::optional<SequenceMap> gt;
  if (cfg.gt_root) gt = load_ground_truth(*cfg.gt_root, cfg.jobs);
  const auto db = load_performance_db(cfg.db_path);
  clock.lap("ingest");

  FusionOptions opts;
  opts.keep_consistency_maps = false;
  opts.jobs = cfg.jobs;
  const auto pseudo = build_pseudo_labels(preds, db ? &*db : nullptr, cfg.method, opts);
  report.fusion = fusion_summary_json(pseudo);
  clock.lap("fuse");

  report.choice = recommend(preds, pseudo, db ? &*db : nullptr, cfg.granularity, cfg.metrics, cfg.jobs);
  PerformanceDB updated = db.value_or(PerformanceDB{});
  record_performance(updated, pseudo, report.choice, cfg.metrics);
  clock.lap("select");

  const auto final_sequences = assemble_final(preds, report.choice);
  clock.lap("assemble");

  if (gt) {
    report.scores = evaluate_dataset(final_sequences, *gt, cfg.metrics, cfg.jobs);
    clock.lap("evaluate");
  }

  StagingDir stage(cfg.out_root);
  write_pseudo_labels(pseudo, stage.path() / "pseudo", cfg.jobs);
  save_sequences(final_sequences, stage.path() / "final", cfg.jobs);
  write_file_atomic(stage.path() / "performance_db.json", updated.serialize());
  write_file_atomic(stage.path() / "selection.json", report.choice.to_json().dump(2) + "\n");
  if (report.scores) {
    write_file_atomic(stage.path() / (cfg.format == ReportFormat::Csv ? "scores.csv" : "scores.json"),
                      render_scores(*report.scores, cfg.format));
  }
  write_file_atomic(stage.path() / "report.json", report.to_json().dump(2) + "\n");
  stage.commit();
  return report;
}

enum class RenderFormat { Json, Csv, Text };

inline RenderFormat parse_render_format(std::string_view s) {
  if (s == "json") return RenderFormat::Json;
  if (s == "csv") return RenderFormat::Csv;
  if (s == "text") return RenderFormat::Text;
  throw Error(ErrorKind::ConfigInvalid, "unknown report format '" + std::string(s) + "'");
}

/// Re-renders a saved report.json. Pure function of the file contents.
inline std::string render_report(const nlohmann::json& report, RenderFormat format) {
  if (format == RenderFormat::Json) return report.dump(2) + "\n";
  const auto& scores = report.contains("scores") ? report.at("scores") : nlohmann::json(nullptr);
  auto num = [](const nlohmann::json& v) { return format_fixed4(v.get<double>()); };
  if (format == RenderFormat::Csv) {
    if (scores.is_null()) throw Error(ErrorKind::ConfigInvalid, "report has no scores to render as csv");
    std::string out = "video,object,J,F,JF\n";
    for (const auto& [vid, v] : scores.at("videos").items()) {
      std::vector<std::pair<int, const nlohmann::json*>> objects;
      for (const auto& [obj, o] : v.at("objects").items()) objects.emplace_back(std::stoi(obj), &o);
      std::sort(objects.begin(), objects.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
      for (const auto& [obj, o] : objects) {
        out += vid + "," + std::to_string(obj) + "," + num(o->at("J")) + "," + num(o->at("F")) + "," + num(o->at("JF")) + "\n";
      }
    }
    const auto& g = scores.at("global");
    out += "GLOBAL,," + num(g.at("J")) + "," + num(g.at("F")) + "," + num(g.at("JF")) + "\n";
    return out;
  }
  std::string out;
  out += std::string(kToolName) + " " + report.value("version", std::string("?")) + " run report\n";
  if (report.contains("stages")) {
    out += "stages:";
    for (const auto& s : report.at("stages")) out += " " + s.get<std::string>();
    out += "\n";
  }
  if (report.contains("fusion") && report.at("fusion").contains("method")) {
    out += "fusion: " + report.at("fusion").at("method").get<std::string>() + "\n";
  }
  if (report.contains("selection")) {
    const auto& sel = report.at("selection");
    out += "selection (" + sel.value("granularity", std::string("video")) + "):\n";
    for (const auto& [vid, model] : sel.at("assignments").items()) out += "  " + vid + " -> " + model.get<std::string>() + "\n";
  }
  if (!scores.is_null()) {
    const auto& g = scores.at("global");
    out += "global J " + num(g.at("J")) + "  F " + num(g.at("F")) + "  J&F " + num(g.at("JF")) + "\n";
  }
  return out;
}

struct SynthRequest {
  SynthConfig config;
  std::vector<NoiseProfile> profiles = default_profiles();
  fs::path out_dir;
  unsigned jobs = 1;
};

/// Emits `<out>/gt/Annotations/...` and `<out>/predictions/<model>/...`.
inline void run_synth(const SynthRequest& req) {
  const auto gt = generate_sequence(req.config, req.jobs);
  const auto preds = synthesize_predictions(gt, req.profiles, req.config.seed, req.jobs);
  StagingDir stage(req.out_dir);
  save_sequences(gt, stage.path() / "gt" / "Annotations", req.jobs);
  for (const auto& m : preds.models) save_sequences(preds.model_sequences(m), stage.path() / "predictions" / m, req.jobs);
  nlohmann::json profiles = nlohmann::json::array();
  for (const auto& p : req.profiles) profiles.push_back(p.to_json());
  write_file_atomic(stage.path() / "profiles.json", profiles.dump(2) + "\n");
  stage.commit();
}

inline std::vector<NoiseProfile> load_profiles(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MissingFile, path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseFailure, path.string() + ": " + e.what());
  }
  if (!j.is_array()) throw Error(ErrorKind::ParseFailure, path.string() + ": expected an array of profiles");
  std::vector<NoiseProfile> out;
  for (const auto& item : j) out.push_back(NoiseProfile::from_json(item));
  if (out.empty()) throw Error(ErrorKind::EmptyInput, path.string() + ": no profiles");
  return out;
}

}  // namespace vosens
