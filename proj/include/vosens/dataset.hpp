#pragma once

// Directory-layout ingestion and persistence:
//
//   gt/Annotations/<video>/<NNNNN>.png
//   predictions/<model>/<video>/<NNNNN>.png
//   confidences/<model>/<video>.json      (optional, sibling of predictions/)

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "vosens/error.hpp"
#include "vosens/mask.hpp"
#include "vosens/parallel.hpp"
#include "vosens/png_io.hpp"

namespace vosens {

namespace fs = std::filesystem;

namespace detail {

inline std::vector<std::string> sorted_subdirs(const fs::path& dir) {
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory()) names.push_back(entry.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  return names;
}

inline fs::path normalized_dir(const fs::path& p) {
  auto r = fs::absolute(p).lexically_normal();
  if (r.filename().empty()) r = r.parent_path();
  return r;
}

}  // namespace detail

/// Loads every `<name>.png` in `dir`, ordered by name. Names must share one
/// width so lexicographic order equals numeric order.
inline VideoSequence load_video_sequence(const fs::path& dir, const std::string& video_id) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw Error(ErrorKind::MissingFile, dir.string());
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") {
      names.push_back(entry.path().stem().string());
    }
  }
  std::sort(names.begin(), names.end());
  for (const auto& n : names) {
    if (n.size() != names.front().size()) {
      throw Error(ErrorKind::ConfigInvalid, "video " + video_id + " mixes frame name widths (" +
                                                names.front() + ", " + n + ")");
    }
  }
  VideoSequence seq;
  seq.video_id = video_id;
  for (const auto& n : names) seq.push_back(n, load_mask_frame(dir / (n + ".png")));
  seq.validate();
  return seq;
}

/// Loads `<dir>/<video>/<frame>.png` for every video subdirectory.
inline SequenceMap load_sequences(const fs::path& dir, unsigned jobs = 1) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw Error(ErrorKind::MissingFile, dir.string());
  const auto ids = detail::sorted_subdirs(dir);
  std::vector<VideoSequence> loaded(ids.size());
  parallel_for(ids.size(), jobs, [&](std::size_t i) { loaded[i] = load_video_sequence(dir / ids[i], ids[i]); });
  SequenceMap out;
  for (std::size_t i = 0; i < ids.size(); ++i) out.emplace(ids[i], std::move(loaded[i]));
  return out;
}

/// Accepts either the `gt/` root (containing `Annotations/`) or the
/// annotations directory itself.
inline SequenceMap load_ground_truth(const fs::path& gt_root, unsigned jobs = 1) {
  std::error_code ec;
  if (fs::is_directory(gt_root / "Annotations", ec)) return load_sequences(gt_root / "Annotations", jobs);
  return load_sequences(gt_root, jobs);
}

inline std::vector<double> load_confidence_file(const fs::path& path, const std::string& model,
                                                const std::string& video) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseFailure, path.string() + ": " + e.what());
  }
  if (!doc.is_array()) throw Error(ErrorKind::ParseFailure, path.string() + ": expected an array");
  std::vector<double> values;
  for (const auto& v : doc) {
    if (!v.is_number()) throw Error(ErrorKind::ParseFailure, path.string() + ": non-numeric entry");
    const double c = v.get<double>();
    if (!(c >= 0.0 && c <= 1.0)) {
      throw Error(ErrorKind::ConfidenceOutOfRange,
                  "model " + model + " video " + video + " confidence " + v.dump());
    }
    values.push_back(c);
  }
  return values;
}

/// Loads `root/<model>/<video>/<frame>.png` for each model plus optional
/// confidences from `root/../confidences/<model>/<video>.json`. The result is
/// validated as a whole before it is returned.
inline PredictionSet load_prediction_set(const fs::path& root, const std::vector<std::string>& models,
                                         unsigned jobs = 1) {
  if (models.empty()) throw Error(ErrorKind::EmptyInput, "no models requested");
  const auto base = detail::normalized_dir(root);
  const auto conf_root = base.parent_path() / "confidences";
  PredictionSet set;
  set.models = models;
  for (const auto& model : models) {
    std::error_code ec;
    if (!fs::is_directory(base / model, ec)) {
      throw Error(ErrorKind::MissingFile, "model directory " + (base / model).string());
    }
    set.videos[model] = load_sequences(base / model, jobs);
    for (const auto& [vid, seq] : set.videos[model]) {
      const auto cpath = conf_root / model / (vid + ".json");
      if (fs::is_regular_file(cpath, ec)) {
        auto values = load_confidence_file(cpath, model, vid);
        if (values.size() != seq.size()) {
          throw Error(ErrorKind::LengthMismatch, cpath.string() + " has " +
                                                     std::to_string(values.size()) + " values for " +
                                                     std::to_string(seq.size()) + " frames");
        }
        set.confidences[model][vid] = std::move(values);
      }
    }
  }
  set.validate();
  return set;
}

/// Writes every sequence as `<dir>/<video>/<frame>.png`.
inline void save_sequences(const SequenceMap& seqs, const fs::path& dir, unsigned jobs = 1) {
  std::vector<const VideoSequence*> list;
  for (const auto& [id, seq] : seqs) list.push_back(&seq);
  parallel_for(list.size(), jobs, [&](std::size_t i) {
    const auto& seq = *list[i];
    for (std::size_t f = 0; f < seq.size(); ++f) {
      save_mask_frame(seq.frames[f], dir / seq.video_id / (seq.frame_names[f] + ".png"));
    }
  });
}

enum class FindingKind { MissingVideo, ExtraVideo, FrameMismatch, DimensionMismatch, UnknownObject };

inline std::string_view to_string(FindingKind k) {
  switch (k) {
    case FindingKind::MissingVideo: return "MissingVideo";
    case FindingKind::ExtraVideo: return "ExtraVideo";
    case FindingKind::FrameMismatch: return "FrameMismatch";
    case FindingKind::DimensionMismatch: return "DimensionMismatch";
    case FindingKind::UnknownObject: return "UnknownObject";
  }
  return "Unknown";
}

struct Finding {
  FindingKind kind;
  std::string model;
  std::string video;
  std::string frame;
  Label object = 0;
  std::string detail;
};

struct ValidationReport {
  std::vector<Finding> findings;

  bool empty() const noexcept { return findings.empty(); }
  /// True when no finding would make scoring impossible.
  bool scorable() const noexcept {
    return std::none_of(findings.begin(), findings.end(), [](const Finding& f) {
      return f.kind != FindingKind::UnknownObject && f.kind != FindingKind::ExtraVideo;
    });
  }
  std::size_t count(FindingKind kind) const noexcept {
    return static_cast<std::size_t>(std::count_if(
        findings.begin(), findings.end(), [&](const Finding& f) { return f.kind == kind; }));
  }
};

inline void validate_sequence_against(const std::string& model, const VideoSequence& pred,
                                      const VideoSequence& gt, ValidationReport& report) {
  const auto& vid = gt.video_id;
  if (pred.frame_names != gt.frame_names) {
    report.findings.push_back({FindingKind::FrameMismatch, model, vid, "", 0,
                               "prediction has " + std::to_string(pred.size()) +
                                   " frames, ground truth has " + std::to_string(gt.size())});
  }
  const std::size_t n = std::min(pred.size(), gt.size());
  for (std::size_t f = 0; f < n; ++f) {
    if (!pred.frames[f].same_shape(gt.frames[f])) {
      report.findings.push_back({FindingKind::DimensionMismatch, model, vid, gt.frame_names[f], 0,
                                 "prediction " + shape_string(pred.frames[f]) + " vs ground truth " +
                                     shape_string(gt.frames[f])});
    }
  }
  if (gt.frames.empty()) return;
  const auto roster = gt.frames.front().object_ids();
  std::vector<Label> unknown;
  for (const auto& frame : pred.frames) {
    for (Label l : frame.object_ids()) {
      if (!std::binary_search(roster.begin(), roster.end(), l)) unknown.push_back(l);
    }
  }
  std::sort(unknown.begin(), unknown.end());
  unknown.erase(std::unique(unknown.begin(), unknown.end()), unknown.end());
  for (Label l : unknown) {
    report.findings.push_back({FindingKind::UnknownObject, model, vid, "", l,
                               "label " + std::to_string(l) + " not in first ground-truth frame"});
  }
}

/// Never throws on content problems; each problem becomes a report entry.
inline ValidationReport validate_against_ground_truth(const PredictionSet& preds, const SequenceMap& gt) {
  ValidationReport report;
  for (const auto& model : preds.models) {
    auto it = preds.videos.find(model);
    if (it == preds.videos.end()) {
      report.findings.push_back({FindingKind::MissingVideo, model, "", "", 0, "model has no predictions"});
      continue;
    }
    const auto& seqs = it->second;
    for (const auto& [vid, gseq] : gt) {
      auto p = seqs.find(vid);
      if (p == seqs.end()) {
        report.findings.push_back({FindingKind::MissingVideo, model, vid, "", 0, "no prediction for video"});
        continue;
      }
      validate_sequence_against(model, p->second, gseq, report);
    }
    for (const auto& [vid, seq] : seqs) {
      if (!gt.contains(vid)) {
        report.findings.push_back({FindingKind::ExtraVideo, model, vid, "", 0, "video has no ground truth"});
      }
    }
  }
  return report;
}

/// Directory that only appears at its final path once commit() is called.
/// Work happens in a hidden sibling that is removed if the guard is destroyed
/// uncommitted.
class StagingDir {
 public:
  explicit StagingDir(fs::path target) : target_(detail::normalized_dir(target)) {
    std::error_code ec;
    fs::create_directories(target_.parent_path(), ec);
    std::random_device rd;
    for (int attempt = 0; attempt < 16; ++attempt) {
      staging_ = target_.parent_path() /
                 ("." + target_.filename().string() + ".tmp-" + std::to_string(rd() % 1000000));
      if (fs::create_directory(staging_, ec)) return;
    }
    throw Error(ErrorKind::IoFailure, "cannot create staging directory for " + target_.string());
  }
  StagingDir(const StagingDir&) = delete;
  StagingDir& operator=(const StagingDir&) = delete;
  ~StagingDir() {
    if (!committed_) {
      std::error_code ec;
      fs::remove_all(staging_, ec);
    }
  }

  const fs::path& path() const noexcept { return staging_; }
  const fs::path& target() const noexcept { return target_; }

  void commit() {
    std::error_code ec;
    fs::remove_all(target_, ec);
    fs::rename(staging_, target_, ec);
    if (ec) throw Error(ErrorKind::IoFailure, "cannot move output into " + target_.string() + ": " + ec.message());
    committed_ = true;
  }

 private:
  fs::path target_;
  fs::path staging_;
  bool committed_ = false;
};

/// Writes a file via temp-then-rename.
inline void write_file_atomic(const fs::path& path, std::string_view content) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  const auto tmp = path.parent_path() / ("." + path.filename().string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoFailure, "cannot open " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(ErrorKind::IoFailure, "short write to " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::IoFailure, "cannot rename into " + path.string());
}

}  // namespace vosens
