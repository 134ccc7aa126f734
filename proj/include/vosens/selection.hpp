#pragma once

// Model recommendation: score every model against the pseudo-labels, pick the
// best per video (or per frame), keep the performance database current, and
// assemble the final prediction set from the winners.

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "vosens/error.hpp"
#include "vosens/features.hpp"
#include "vosens/fusion.hpp"
#include "vosens/mask.hpp"
#include "vosens/metrics.hpp"
#include "vosens/parallel.hpp"

namespace vosens {

enum class Granularity { PerVideo, PerFrame };

inline std::string_view to_string(Granularity g) { return g == Granularity::PerVideo ? "video" : "frame"; }

inline Granularity parse_granularity(std::string_view s) {
  if (s == "video" || s == "per_video") return Granularity::PerVideo;
  if (s == "frame" || s == "per_frame") return Granularity::PerFrame;
  throw Error(ErrorKind::ConfigInvalid, "unknown granularity '" + std::string(s) + "'");
}

/// Mean J&F over the reference's objects. A reference without objects leaves
/// nothing to get wrong and scores 1.
inline double score_against_pseudo(const VideoSequence& model_seq, const VideoSequence& pseudo_seq,
                                   const MetricConfig& cfg = {}) {
  const auto objects = evaluate_video(model_seq, pseudo_seq, cfg);
  if (objects.empty()) return 1.0;
  double sum = 0.0;
  for (const auto& o : objects) sum += composite_jf(o.j, o.f, cfg);
  return sum / static_cast<double>(objects.size());
}

/// Per-frame J&F averaged over the reference roster; frames where no object
/// score is defined count as 1.
inline std::vector<double> frame_scores_against(const VideoSequence& model_seq, const VideoSequence& pseudo_seq,
                                                const MetricConfig& cfg = {}) {
  const auto roster = object_roster(pseudo_seq);
  const auto frames = score_frames(model_seq, pseudo_seq, roster, cfg);
  std::vector<double> out;
  out.reserve(frames.size());
  for (const auto& per_object : frames) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& s : per_object) {
      if (!s.defined) continue;
      sum += composite_jf(s.j, s.f, cfg);
      ++n;
    }
    out.push_back(n ? sum / static_cast<double>(n) : 1.0);
  }
  return out;
}

/// Highest score wins. Scores equal within 1e-12 fall back to the higher
/// database prior (models with a prior beat models without), then to the
/// lexicographically smallest id.
inline std::string select_best(const std::map<std::string, double>& scores,
                               const std::map<std::string, double>* priors = nullptr) {
  if (scores.empty()) throw Error(ErrorKind::EmptyInput, "no model scores to choose from");
  auto prior_of = [&](const std::string& m) -> double {
    if (!priors) return -1.0;
    auto it = priors->find(m);
    return it == priors->end() ? -1.0 : it->second;
  };
  constexpr double eps = 1e-12;
  auto best = scores.begin();
  for (auto it = std::next(scores.begin()); it != scores.end(); ++it) {
    if (it->second > best->second + eps) {
      best = it;
    } else if (std::abs(it->second - best->second) <= eps && prior_of(it->first) > prior_of(best->first)) {
      best = it;
    }
  }
  return best->first;
}

struct ModelChoice {
  Granularity granularity = Granularity::PerVideo;
  /// Per-video winner (also filled for per-frame runs, as the video-level best).
  std::map<std::string, std::string> video_model;
  /// Per-frame winners, per_frame granularity only.
  std::map<std::string, std::vector<std::string>> frame_models;
  /// video -> model -> J&F against the pseudo-labels.
  std::map<std::string, std::map<std::string, double>> scores;
  /// video -> model -> per-frame J&F against the pseudo-labels.
  std::map<std::string, std::map<std::string, std::vector<double>>> frame_scores;

  const std::string& model_for(const std::string& video, std::size_t frame) const {
    if (granularity == Granularity::PerFrame) {
      auto it = frame_models.find(video);
      if (it != frame_models.end() && frame < it->second.size()) return it->second[frame];
    }
    auto it = video_model.find(video);
    if (it == video_model.end()) throw Error(ErrorKind::InconsistentCoverage, "no assignment for video " + video);
    return it->second;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["granularity"] = to_string(granularity);
    j["assignments"] = video_model;
    if (granularity == Granularity::PerFrame) j["frame_assignments"] = frame_models;
    nlohmann::json s = nlohmann::json::object();
    for (const auto& [vid, per_model] : scores) {
      for (const auto& [m, v] : per_model) s[vid][m] = round_half_up(v, 6);
    }
    j["scores"] = std::move(s);
    return j;
  }
};

/// Bucket context for looking up database priors over a pseudo-label set.
struct BucketContext {
  double complexity_split = 0.0;
  std::map<std::string, std::vector<FrameFeatures>> features;

  static BucketContext from(const SequenceMap& pseudo) {
    BucketContext ctx;
    std::vector<FrameFeatures> all;
    for (const auto& [vid, seq] : pseudo) {
      auto& v = ctx.features[vid];
      for (const auto& f : seq.frames) v.push_back(extract_features(f));
      all.insert(all.end(), v.begin(), v.end());
    }
    ctx.complexity_split = median_complexity(all);
    return ctx;
  }

  FeatureBucket bucket(const std::string& video, std::size_t frame) const {
    return bucketize(features.at(video).at(frame), complexity_split);
  }
};

inline std::map<std::string, double> db_priors(const PerformanceDB& db, const FeatureBucket& bucket,
                                               const std::vector<std::string>& models) {
  std::map<std::string, double> priors;
  for (const auto& m : models) {
    if (auto mean = db.mean(bucket, m)) priors[m] = *mean;
  }
  return priors;
}

inline ModelChoice recommend(const PredictionSet& preds, const PseudoLabelSet& pseudo, const PerformanceDB* db,
                             Granularity granularity, const MetricConfig& cfg = {}, unsigned jobs = 1) {
  preds.validate();
  const auto video_ids = preds.video_ids();
  for (const auto& vid : video_ids) {
    if (!pseudo.videos.contains(vid)) throw Error(ErrorKind::InconsistentCoverage, "no pseudo-labels for video " + vid);
  }
  const bool use_db = db && !db->entries.empty();
  const BucketContext ctx = use_db ? BucketContext::from(pseudo.videos) : BucketContext{};

  struct VideoResult {
    std::map<std::string, double> scores;
    std::map<std::string, std::vector<double>> frame_scores;
    std::string best;
    std::vector<std::string> frame_best;
  };
  std::vector<VideoResult> results(video_ids.size());
  parallel_for(video_ids.size(), jobs, [&](std::size_t v) {
    const auto& vid = video_ids[v];
    const auto& pseq = pseudo.videos.at(vid);
    auto& r = results[v];
    for (const auto& m : preds.models) {
      const auto& mseq = preds.sequence(m, vid);
      r.scores[m] = score_against_pseudo(mseq, pseq, cfg);
      r.frame_scores[m] = frame_scores_against(mseq, pseq, cfg);
    }
    std::map<std::string, double> priors;
    if (use_db && !pseq.frames.empty()) {
      const std::size_t ref_frame = (!cfg.score_first_frame && pseq.size() > 1) ? 1 : 0;
      priors = db_priors(*db, ctx.bucket(vid, ref_frame), preds.models);
    }
    r.best = select_best(r.scores, use_db ? &priors : nullptr);
    if (granularity == Granularity::PerFrame) {
      for (std::size_t f = 0; f < pseq.size(); ++f) {
        std::map<std::string, double> per;
        for (const auto& m : preds.models) per[m] = r.frame_scores[m][f];
        std::map<std::string, double> fp;
        if (use_db) fp = db_priors(*db, ctx.bucket(vid, f), preds.models);
        r.frame_best.push_back(select_best(per, use_db ? &fp : nullptr));
      }
    }
  });

  ModelChoice choice;
  choice.granularity = granularity;
  for (std::size_t v = 0; v < video_ids.size(); ++v) {
    auto& r = results[v];
    choice.video_model[video_ids[v]] = r.best;
    choice.scores[video_ids[v]] = std::move(r.scores);
    choice.frame_scores[video_ids[v]] = std::move(r.frame_scores);
    if (granularity == Granularity::PerFrame) choice.frame_models[video_ids[v]] = std::move(r.frame_best);
  }
  return choice;
}

/// Folds the frame-level scores of a recommendation into the database: every
/// model's score on every scored frame goes to the bucket of that pseudo frame.
inline void record_performance(PerformanceDB& db, const PseudoLabelSet& pseudo, const ModelChoice& choice,
                               const MetricConfig& cfg = {}) {
  const auto ctx = BucketContext::from(pseudo.videos);
  const std::size_t first = cfg.score_first_frame ? 0 : 1;
  for (const auto& [vid, per_model] : choice.frame_scores) {
    for (const auto& [model, scores] : per_model) {
      for (std::size_t f = first; f < scores.size(); ++f) db.record(ctx.bucket(vid, f), model, scores[f]);
    }
  }
}

/// Copies each unit's frames from its assigned model.
inline SequenceMap assemble_final(const PredictionSet& preds, const ModelChoice& choice) {
  SequenceMap out;
  for (const auto& [vid, model] : choice.video_model) {
    if (!preds.has_model(model)) throw Error(ErrorKind::UnknownModel, "video " + vid + " assigned to " + model);
    const auto& ref = preds.sequence(model, vid);
    VideoSequence seq;
    seq.video_id = vid;
    for (std::size_t f = 0; f < ref.size(); ++f) {
      const auto& m = choice.model_for(vid, f);
      if (!preds.has_model(m)) throw Error(ErrorKind::UnknownModel, "video " + vid + " frame " + ref.frame_names[f] + " assigned to " + m);
      seq.push_back(ref.frame_names[f], preds.sequence(m, vid).frames[f]);
    }
    seq.validate();
    out.emplace(vid, std::move(seq));
  }
  return out;
}

}  // namespace vosens
