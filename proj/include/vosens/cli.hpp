#pragma once

// Command-line front end. run_command() is the whole tool minus main(), so
// tests can drive it in-process.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vosens/pipeline.hpp"

namespace vosens {

enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitUsage = 2 };

namespace detail {

struct CommonMetricFlags {
  double j_weight = 0.5;
  double f_weight = 0.5;
  bool include_first = false;
  std::string empty_empty = "1";
  double empty_gt_nonempty_pred = 0.0;

  void attach(CLI::App* app) {
    app->add_option("--j-weight", j_weight, "Weight of J in the composite")->capture_default_str();
    app->add_option("--f-weight", f_weight, "Weight of F in the composite")->capture_default_str();
    app->add_flag("--include-first-frame", include_first, "Score the first (reference) frame too");
    app->add_option("--empty-empty", empty_empty, "Score when gt and prediction are both empty, or 'skip'")
        ->capture_default_str();
    app->add_option("--empty-gt-score", empty_gt_nonempty_pred, "Score when gt is empty but prediction is not")
        ->capture_default_str();
  }

  MetricConfig config() const {
    MetricConfig cfg;
    cfg.j_weight = j_weight;
    cfg.f_weight = f_weight;
    cfg.score_first_frame = include_first;
    cfg.empty_gt_nonempty_pred_score = empty_gt_nonempty_pred;
    if (empty_empty == "skip") {
      cfg.empty_empty_score = std::nullopt;
    } else {
      try {
        cfg.empty_empty_score = std::stod(empty_empty);
      } catch (const std::exception&) {
        throw Error(ErrorKind::ConfigInvalid, "--empty-empty expects a number or 'skip'");
      }
    }
    cfg.validate();
    return cfg;
  }
};

inline std::optional<fs::path> opt_path(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return fs::path(s);
}

inline void parse_size(const std::string& s, std::size_t& w, std::size_t& h) {
  const auto x = s.find('x');
  try {
    if (x == std::string::npos) throw std::invalid_argument(s);
    std::size_t used = 0;
    w = std::stoul(s.substr(0, x), &used);
    if (used != x) throw std::invalid_argument(s);
    h = std::stoul(s.substr(x + 1), &used);
    if (used != s.size() - x - 1) throw std::invalid_argument(s);
  } catch (const std::exception&) {
    throw Error(ErrorKind::ConfigInvalid, "size must look like WIDTHxHEIGHT, got '" + s + "'");
  }
}

}  // namespace detail

/// argv[0] is the program name. Returns the process exit code.
inline int run_command(const std::vector<std::string>& args, std::ostream& out = std::cout,
                       std::ostream& err = std::cerr) {
  CLI::App app{"Video object segmentation ensemble toolkit", std::string(kToolName)};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolName) + " " + std::string(kToolVersion));
  app.set_config("--config", "", "INI/TOML file with option defaults; explicit flags win");
  unsigned jobs = 1;
  app.add_option("-j,--jobs", jobs, "Worker threads")->check(CLI::Range(1u, 256u))->capture_default_str();

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Score a prediction directory against ground truth");
  std::string ev_pred, ev_gt, ev_format = "json", ev_out;
  detail::CommonMetricFlags ev_metrics;
  eval->add_option("--pred", ev_pred, "Prediction directory (<video>/<frame>.png)")->required();
  eval->add_option("--gt-root", ev_gt, "Ground-truth root")->required();
  eval->add_option("--format", ev_format, "json or csv")->check(CLI::IsMember({"json", "csv"}))->capture_default_str();
  eval->add_option("-o,--out", ev_out, "Write the table here instead of stdout");
  ev_metrics.attach(eval);

  // fuse
  auto* fuse = app.add_subcommand("fuse", "Fuse model predictions into pseudo-labels");
  std::string fu_pred, fu_method = "pgmr", fu_db, fu_out;
  std::vector<std::string> fu_models;
  fuse->add_option("--pred-root", fu_pred, "Root holding one directory per model")->required();
  fuse->add_option("--models", fu_models, "Comma-separated model ids (default: all)")->delimiter(',');
  fuse->add_option("--method", fu_method, "vote, avg-bbox, max-bbox or pgmr")
      ->check(CLI::IsMember({"vote", "avg-bbox", "max-bbox", "pgmr"}))
      ->capture_default_str();
  fuse->add_option("--db", fu_db, "Performance database to weight models with");
  fuse->add_option("-o,--out", fu_out, "Output directory for pseudo-labels")->required();

  // select
  auto* sel = app.add_subcommand("select", "Pick a model per video or frame and assemble the final set");
  std::string se_pred, se_pseudo, se_db, se_db_out, se_gran = "video", se_out, se_report;
  std::vector<std::string> se_models;
  detail::CommonMetricFlags se_metrics;
  sel->add_option("--pred-root", se_pred, "Root holding one directory per model")->required();
  sel->add_option("--models", se_models, "Comma-separated model ids (default: all)")->delimiter(',');
  sel->add_option("--pseudo-root", se_pseudo, "Pseudo-label directory from fuse")->required();
  sel->add_option("--db", se_db, "Performance database for tie-break priors");
  sel->add_option("--db-out", se_db_out, "Write the updated performance database here");
  sel->add_option("--granularity", se_gran, "video or frame")
      ->check(CLI::IsMember({"video", "frame"}))
      ->capture_default_str();
  sel->add_option("-o,--out", se_out, "Output directory for the assembled predictions")->required();
  sel->add_option("--report", se_report, "Write the selection (assignments and scores) as JSON");
  se_metrics.attach(sel);

  // pipeline
  auto* pipe = app.add_subcommand("pipeline", "Fuse, select, assemble and optionally evaluate in one go");
  std::string pi_pred, pi_gt, pi_out, pi_method = "pgmr", pi_gran = "video", pi_db, pi_format = "json";
  std::vector<std::string> pi_models;
  bool pi_timings = false;
  detail::CommonMetricFlags pi_metrics;
  pipe->add_option("--pred-root", pi_pred, "Root holding one directory per model")->required();
  pipe->add_option("--models", pi_models, "Comma-separated model ids (default: all)")->delimiter(',');
  pipe->add_option("--gt-root", pi_gt, "Ground truth; enables the evaluate stage");
  pipe->add_option("-o,--out", pi_out, "Output directory")->required();
  pipe->add_option("--method", pi_method, "vote, avg-bbox, max-bbox or pgmr")
      ->check(CLI::IsMember({"vote", "avg-bbox", "max-bbox", "pgmr"}))
      ->capture_default_str();
  pipe->add_option("--granularity", pi_gran, "video or frame")
      ->check(CLI::IsMember({"video", "frame"}))
      ->capture_default_str();
  pipe->add_option("--db", pi_db, "Performance database (read only; updated copy goes to the output)");
  pipe->add_option("--format", pi_format, "Score table format, json or csv")
      ->check(CLI::IsMember({"json", "csv"}))
      ->capture_default_str();
  pipe->add_flag("--timings", pi_timings, "Record per-stage wall time in the report");
  pi_metrics.attach(pipe);

  // synth
  auto* syn = app.add_subcommand("synth", "Generate a synthetic ground truth and noisy model predictions");
  std::uint64_t sy_seed = 1;
  std::size_t sy_videos = 4, sy_frames = 10, sy_min_obj = 1, sy_max_obj = 3;
  std::string sy_size = "64x48", sy_profiles, sy_out;
  double sy_occ = 0.1, sy_dis = 0.2;
  syn->add_option("--seed", sy_seed, "Random seed")->capture_default_str();
  syn->add_option("--videos", sy_videos, "Number of videos")->capture_default_str();
  syn->add_option("--frames", sy_frames, "Frames per video")->capture_default_str();
  syn->add_option("--size", sy_size, "Frame size WIDTHxHEIGHT")->capture_default_str();
  syn->add_option("--min-objects", sy_min_obj, "Fewest objects per video")->capture_default_str();
  syn->add_option("--max-objects", sy_max_obj, "Most objects per video")->capture_default_str();
  syn->add_option("--occlusion-rate", sy_occ, "Per-frame occlusion probability")->capture_default_str();
  syn->add_option("--disappear-rate", sy_dis, "Per-object disappearance probability")->capture_default_str();
  syn->add_option("--profiles", sy_profiles, "JSON array of noise profiles (default: built-in five)");
  syn->add_option("-o,--out", sy_out, "Output directory")->required();

  // report
  auto* rep = app.add_subcommand("report", "Render a saved run report");
  std::string re_run, re_format = "text", re_out;
  rep->add_option("--run", re_run, "report.json from a pipeline run")->required();
  rep->add_option("--format", re_format, "json, csv or text")
      ->check(CLI::IsMember({"json", "csv", "text"}))
      ->capture_default_str();
  rep->add_option("-o,--out", re_out, "Write here instead of stdout");

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  if (args.empty()) argv.push_back(kToolName.data());
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  auto emit = [&](const std::string& text, const std::string& path) {
    if (path.empty()) {
      out << text;
    } else {
      write_file_atomic(path, text);
    }
  };

  try {
    if (*eval) {
      EvaluateRequest req;
      req.pred_dir = ev_pred;
      req.gt_root = ev_gt;
      req.metrics = ev_metrics.config();
      req.format = parse_report_format(ev_format);
      req.jobs = jobs;
      const auto table = run_evaluate(req);
      emit(render_scores(table, req.format), ev_out);
    } else if (*fuse) {
      FuseRequest req;
      req.pred_root = fu_pred;
      req.models = fu_models;
      req.method = parse_fusion_method(fu_method);
      req.db_path = detail::opt_path(fu_db);
      req.out_dir = fu_out;
      req.jobs = jobs;
      run_fuse(req);
    } else if (*sel) {
      SelectRequest req;
      req.pred_root = se_pred;
      req.models = se_models;
      req.pseudo_root = se_pseudo;
      req.db_path = detail::opt_path(se_db);
      req.db_out = detail::opt_path(se_db_out);
      req.granularity = parse_granularity(se_gran);
      req.metrics = se_metrics.config();
      req.out_dir = se_out;
      req.report_path = detail::opt_path(se_report);
      req.jobs = jobs;
      run_select(req);
    } else if (*pipe) {
      PipelineConfig cfg;
      cfg.pred_root = pi_pred;
      cfg.models = pi_models;
      cfg.gt_root = detail::opt_path(pi_gt);
      cfg.out_root = pi_out;
      cfg.method = parse_fusion_method(pi_method);
      cfg.granularity = parse_granularity(pi_gran);
      cfg.db_path = detail::opt_path(pi_db);
      cfg.format = parse_report_format(pi_format);
      cfg.metrics = pi_metrics.config();
      cfg.jobs = jobs;
      cfg.timings = pi_timings;
      const auto report = run_pipeline(cfg);
      if (report.scores) {
        out << "global J&F " << format_fixed4(report.scores->global.jf) << "\n";
      }
    } else if (*syn) {
      SynthRequest req;
      req.config.seed = sy_seed;
      req.config.videos = sy_videos;
      req.config.frames_per_video = sy_frames;
      detail::parse_size(sy_size, req.config.width, req.config.height);
      req.config.min_objects = sy_min_obj;
      req.config.max_objects = sy_max_obj;
      req.config.occlusion_rate = sy_occ;
      req.config.disappear_rate = sy_dis;
      req.config.validate();
      if (!sy_profiles.empty()) req.profiles = load_profiles(sy_profiles);
      req.out_dir = sy_out;
      req.jobs = jobs;
      run_synth(req);
    } else if (*rep) {
      std::ifstream in(re_run);
      if (!in) throw Error(ErrorKind::MissingFile, re_run);
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(in);
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ParseFailure, re_run + ": " + e.what());
      }
      emit(render_report(j, parse_render_format(re_format)), re_out);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitOk;
}

}  // namespace vosens
