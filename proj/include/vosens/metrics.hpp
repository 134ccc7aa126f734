#pragma once

// Region Jaccard J, pixel precision/recall F-measure and the weighted J&F
// composite, aggregated per object, per video and over a dataset.

#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vosens/error.hpp"
#include "vosens/mask.hpp"
#include "vosens/parallel.hpp"

namespace vosens {

struct MetricConfig {
  double j_weight = 0.5;
  double f_weight = 0.5;
  /// Score for a frame where both masks are empty. nullopt leaves such frames
  /// undefined so they drop out of averages.
  std::optional<double> empty_empty_score = 1.0;
  double empty_gt_nonempty_pred_score = 0.0;
  /// The first frame is the given annotation in semi-supervised VOS.
  bool score_first_frame = false;

  void validate() const {
    if (!(j_weight >= 0.0) || !(f_weight >= 0.0) || std::abs(j_weight + f_weight - 1.0) > 1e-9) {
      throw Error(ErrorKind::ConfigInvalid, "J/F weights must be non-negative and sum to 1");
    }
    auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if ((empty_empty_score && !in_unit(*empty_empty_score)) || !in_unit(empty_gt_nonempty_pred_score)) {
      throw Error(ErrorKind::ConfigInvalid, "empty-mask scores must lie in [0,1]");
    }
  }
};

struct PixelCounts {
  std::size_t pred = 0;
  std::size_t gt = 0;
  std::size_t intersection = 0;
};

inline PixelCounts count_pixels(const BinaryMask& pred, const BinaryMask& gt) {
  if (!pred.same_shape(gt)) {
    throw Error(ErrorKind::DimensionMismatch,
                "prediction " + shape_string(pred.width(), pred.height()) + " vs ground truth " +
                    shape_string(gt.width(), gt.height()));
  }
  PixelCounts c;
  const auto p = pred.bits();
  const auto g = gt.bits();
  for (std::size_t i = 0; i < p.size(); ++i) {
    c.pred += p[i];
    c.gt += g[i];
    c.intersection += p[i] & g[i];
  }
  return c;
}

/// Counts for one object id taken straight from two label maps, without
/// materialising binary masks.
inline PixelCounts count_pixels(const MaskFrame& pred, const MaskFrame& gt, Label object) {
  if (!pred.same_shape(gt)) {
    throw Error(ErrorKind::DimensionMismatch,
                "prediction " + shape_string(pred) + " vs ground truth " + shape_string(gt));
  }
  PixelCounts c;
  const auto p = pred.labels();
  const auto g = gt.labels();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool pi = p[i] == object;
    const bool gi = g[i] == object;
    c.pred += pi;
    c.gt += gi;
    c.intersection += pi && gi;
  }
  return c;
}

/// Precision and recall; nullopt marks an empty denominator so the caller can
/// apply its own convention.
struct PrecisionRecall {
  std::optional<double> precision;
  std::optional<double> recall;
};

inline PrecisionRecall precision_recall(const PixelCounts& c) {
  PrecisionRecall pr;
  if (c.pred > 0) pr.precision = static_cast<double>(c.intersection) / static_cast<double>(c.pred);
  if (c.gt > 0) pr.recall = static_cast<double>(c.intersection) / static_cast<double>(c.gt);
  return pr;
}

inline PrecisionRecall precision_recall(const BinaryMask& pred, const BinaryMask& gt) {
  return precision_recall(count_pixels(pred, gt));
}

/// Per-frame score of one object.
struct FrameScore {
  double j = 0.0;
  double f = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  bool defined = true;
};

inline FrameScore score_counts(const PixelCounts& c, const MetricConfig& cfg) {
  FrameScore s;
  if (c.gt == 0 && c.pred == 0) {
    if (!cfg.empty_empty_score) {
      s.defined = false;
      return s;
    }
    s.j = s.f = s.precision = s.recall = *cfg.empty_empty_score;
    return s;
  }
  if (c.gt == 0) {
    s.j = s.f = s.precision = s.recall = cfg.empty_gt_nonempty_pred_score;
    return s;
  }
  const double inter = static_cast<double>(c.intersection);
  s.j = inter / static_cast<double>(c.pred + c.gt - c.intersection);
  const auto pr = precision_recall(c);
  s.precision = pr.precision.value_or(0.0);
  s.recall = pr.recall.value_or(0.0);
  const double sum = s.precision + s.recall;
  s.f = sum > 0.0 ? 2.0 * s.precision * s.recall / sum : 0.0;
  return s;
}

inline double jaccard(const BinaryMask& pred, const BinaryMask& gt, const MetricConfig& cfg = {}) {
  const auto c = count_pixels(pred, gt);
  const auto s = score_counts(c, cfg);
  return s.defined ? s.j : 0.0;
}

inline double f_measure(const BinaryMask& pred, const BinaryMask& gt, const MetricConfig& cfg = {}) {
  const auto c = count_pixels(pred, gt);
  const auto s = score_counts(c, cfg);
  return s.defined ? s.f : 0.0;
}

inline double composite_jf(double j, double f, const MetricConfig& cfg = {}) {
  if (!(j >= 0.0 && j <= 1.0) || !(f >= 0.0 && f <= 1.0)) {
    throw Error(ErrorKind::OutOfRange, "J and F must lie in [0,1]");
  }
  return cfg.j_weight * j + cfg.f_weight * f;
}

/// Half-up rounding to `places` decimals. The nudge absorbs binary
/// representation error, so 0.87255 rounds to 0.8726.
inline double round_half_up(double x, int places = 4) {
  const double scale = std::pow(10.0, places);
  return std::floor(x * scale + 0.5 + 1e-9) / scale;
}

inline long long round_half_up_units(double x, int places = 4) {
  return static_cast<long long>(std::floor(x * std::pow(10.0, places) + 0.5 + 1e-9));
}

inline std::string format_fixed4(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", round_half_up(x, 4));
  return buf;
}

/// Mean score of one object over the scored frames of a video.
struct ObjectScore {
  Label object = 0;
  double j = 0.0;
  double f = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  std::size_t frames = 0;
};

inline void check_sequences_comparable(const VideoSequence& pred, const VideoSequence& gt) {
  if (pred.size() != gt.size()) {
    throw Error(ErrorKind::FrameCountMismatch,
                "video " + gt.video_id + ": prediction has " + std::to_string(pred.size()) +
                    " frames, ground truth has " + std::to_string(gt.size()));
  }
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!pred.frames[i].same_shape(gt.frames[i])) {
      throw Error(ErrorKind::DimensionMismatch,
                  "video " + gt.video_id + " frame " +
                      (i < gt.frame_names.size() ? gt.frame_names[i] : std::to_string(i)) +
                      ": prediction " + shape_string(pred.frames[i]) + " vs ground truth " +
                      shape_string(gt.frames[i]));
    }
  }
}

/// Object roster of a reference sequence: labels present in its first frame.
inline std::vector<Label> object_roster(const VideoSequence& gt) {
  return gt.frames.empty() ? std::vector<Label>{} : gt.frames.front().object_ids();
}

/// Frame-level scores: result[frame][k] scores roster[k] on that frame.
inline std::vector<std::vector<FrameScore>> score_frames(const VideoSequence& pred,
                                                         const VideoSequence& gt,
                                                         const std::vector<Label>& roster,
                                                         const MetricConfig& cfg) {
  check_sequences_comparable(pred, gt);
  std::vector<std::vector<FrameScore>> out(gt.size());
  for (std::size_t f = 0; f < gt.size(); ++f) {
    out[f].reserve(roster.size());
    for (Label obj : roster) out[f].push_back(score_counts(count_pixels(pred.frames[f], gt.frames[f], obj), cfg));
  }
  return out;
}

/// Per-object means over frames 1.. (or 0.. when the config says so).
/// Objects without any defined scored frame are omitted.
inline std::vector<ObjectScore> evaluate_video(const VideoSequence& pred, const VideoSequence& gt,
                                               const MetricConfig& cfg = {}) {
  cfg.validate();
  const auto roster = object_roster(gt);
  const auto frames = score_frames(pred, gt, roster, cfg);
  const std::size_t first = cfg.score_first_frame ? 0 : 1;
  std::vector<ObjectScore> out;
  for (std::size_t k = 0; k < roster.size(); ++k) {
    ObjectScore o;
    o.object = roster[k];
    for (std::size_t f = first; f < frames.size(); ++f) {
      const auto& s = frames[f][k];
      if (!s.defined) continue;
      o.j += s.j;
      o.f += s.f;
      o.precision += s.precision;
      o.recall += s.recall;
      ++o.frames;
    }
    if (o.frames == 0) continue;
    const double n = static_cast<double>(o.frames);
    o.j /= n;
    o.f /= n;
    o.precision /= n;
    o.recall /= n;
    out.push_back(o);
  }
  return out;
}

struct ScoreTriple {
  double j = 0.0;
  double f = 0.0;
  double jf = 0.0;
};

struct ScoreTable {
  MetricConfig config;
  std::map<std::string, std::vector<ObjectScore>> per_object;
  std::map<std::string, ScoreTriple> per_video;
  ScoreTriple global;
  std::size_t pairs = 0;

  nlohmann::json to_json() const {
    auto triple = [](const ScoreTriple& t) {
      return nlohmann::json{{"J", round_half_up(t.j)}, {"F", round_half_up(t.f)}, {"JF", round_half_up(t.jf)}};
    };
    nlohmann::json videos = nlohmann::json::object();
    for (const auto& [vid, objects] : per_object) {
      nlohmann::json v = triple(per_video.at(vid));
      nlohmann::json objs = nlohmann::json::object();
      for (const auto& o : objects) {
        objs[std::to_string(o.object)] = {
            {"J", round_half_up(o.j)},
            {"F", round_half_up(o.f)},
            {"JF", round_half_up(config.j_weight * o.j + config.f_weight * o.f)},
            {"precision", round_half_up(o.precision)},
            {"recall", round_half_up(o.recall)},
            {"frames", o.frames}};
      }
      v["objects"] = std::move(objs);
      videos[vid] = std::move(v);
    }
    return {{"global", triple(global)}, {"pairs", pairs}, {"videos", std::move(videos)}};
  }

  /// `video,object,J,F,JF` rows plus a trailing GLOBAL row.
  std::string to_csv() const {
    std::string out = "video,object,J,F,JF\n";
    for (const auto& [vid, objects] : per_object) {
      for (const auto& o : objects) {
        out += vid + "," + std::to_string(o.object) + "," + format_fixed4(o.j) + "," + format_fixed4(o.f) +
               "," + format_fixed4(config.j_weight * o.j + config.f_weight * o.f) + "\n";
      }
    }
    out += "GLOBAL,," + format_fixed4(global.j) + "," + format_fixed4(global.f) + "," + format_fixed4(global.jf) +
           "\n";
    return out;
  }
};

/// Scores one model's sequences against ground truth. The global mean runs over
/// all (video, object) pairs, unweighted.
inline ScoreTable evaluate_dataset(const SequenceMap& preds, const SequenceMap& gt, const MetricConfig& cfg = {},
                                   unsigned jobs = 1) {
  cfg.validate();
  std::vector<const VideoSequence*> gts;
  std::vector<const VideoSequence*> ps;
  for (const auto& [vid, g] : gt) {
    auto it = preds.find(vid);
    if (it == preds.end()) throw Error(ErrorKind::InconsistentCoverage, "no prediction for video " + vid);
    gts.push_back(&g);
    ps.push_back(&it->second);
  }
  std::vector<std::vector<ObjectScore>> results(gts.size());
  parallel_for(gts.size(), jobs, [&](std::size_t i) { results[i] = evaluate_video(*ps[i], *gts[i], cfg); });

  ScoreTable table;
  table.config = cfg;
  double sum_j = 0.0, sum_f = 0.0;
  for (std::size_t i = 0; i < gts.size(); ++i) {
    const auto& vid = gts[i]->video_id;
    const auto& objects = results[i];
    if (objects.empty()) continue;
    ScoreTriple v;
    for (const auto& o : objects) {
      v.j += o.j;
      v.f += o.f;
      sum_j += o.j;
      sum_f += o.f;
    }
    v.j /= static_cast<double>(objects.size());
    v.f /= static_cast<double>(objects.size());
    v.jf = cfg.j_weight * v.j + cfg.f_weight * v.f;
    table.per_video[vid] = v;
    table.per_object[vid] = objects;
    table.pairs += objects.size();
  }
  if (table.pairs > 0) {
    table.global.j = sum_j / static_cast<double>(table.pairs);
    table.global.f = sum_f / static_cast<double>(table.pairs);
    table.global.jf = cfg.j_weight * table.global.j + cfg.f_weight * table.global.f;
  }
  return table;
}

}  // namespace vosens
