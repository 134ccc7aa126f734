#pragma once

// Pseudo-label fusion: per-pixel consistency check, confidence weighting and
// weighted voting, plus the bounding-box average/max fusion baselines.

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vosens/error.hpp"
#include "vosens/features.hpp"
#include "vosens/mask.hpp"
#include "vosens/parallel.hpp"

namespace vosens {

enum class FusionMethod { Vote, AvgBbox, MaxBbox, Pgmr };

inline std::string_view to_string(FusionMethod m) {
  switch (m) {
    case FusionMethod::Vote: return "vote";
    case FusionMethod::AvgBbox: return "avg-bbox";
    case FusionMethod::MaxBbox: return "max-bbox";
    case FusionMethod::Pgmr: return "pgmr";
  }
  return "?";
}

inline FusionMethod parse_fusion_method(std::string_view s) {
  if (s == "vote") return FusionMethod::Vote;
  if (s == "avg-bbox") return FusionMethod::AvgBbox;
  if (s == "max-bbox") return FusionMethod::MaxBbox;
  if (s == "pgmr") return FusionMethod::Pgmr;
  throw Error(ErrorKind::ConfigInvalid, "unknown fusion method '" + std::string(s) + "'");
}

/// Non-negative per-model weights, aligned with `models`.
struct ModelWeights {
  std::vector<std::string> models;
  std::vector<double> weights;

  static ModelWeights uniform(std::vector<std::string> models) {
    ModelWeights w;
    w.weights.assign(models.size(), 1.0);
    w.models = std::move(models);
    return w;
  }

  double of(const std::string& model) const {
    for (std::size_t i = 0; i < models.size(); ++i) {
      if (models[i] == model) return weights[i];
    }
    throw Error(ErrorKind::UnknownModel, "no weight for model " + model);
  }

  std::vector<double> normalized() const {
    double total = 0.0;
    for (double w : weights) total += w;
    std::vector<double> out(weights);
    for (double& w : out) w /= total;
    return out;
  }

  void validate() const {
    if (models.size() != weights.size()) throw Error(ErrorKind::ConfigInvalid, "weights do not cover models");
    bool positive = false;
    for (double w : weights) {
      if (!(w >= 0.0)) throw Error(ErrorKind::NegativeConfidence, "negative model weight");
      positive = positive || w > 0.0;
    }
    if (!positive) throw Error(ErrorKind::ConfigInvalid, "at least one model weight must be positive");
  }
};

/// weight(m) = historical(m) * confidence(m). Historical scores come from the
/// bucket's database mean and default to 1.0. An all-zero result falls back to
/// uniform weights.
inline ModelWeights confidence_weights(const PerformanceDB* db, std::optional<FeatureBucket> bucket,
                                       std::span<const double> confidences,
                                       const std::vector<std::string>& models) {
  if (confidences.size() != models.size()) {
    throw Error(ErrorKind::ConfigInvalid, "one confidence per model required");
  }
  ModelWeights w;
  w.models = models;
  bool any = false;
  for (std::size_t i = 0; i < models.size(); ++i) {
    if (confidences[i] < 0.0) {
      throw Error(ErrorKind::NegativeConfidence, "model " + models[i] + " confidence " + std::to_string(confidences[i]));
    }
    double historical = 1.0;
    if (db && bucket) historical = db->mean(*bucket, models[i]).value_or(1.0);
    w.weights.push_back(historical * confidences[i]);
    any = any || w.weights.back() > 0.0;
  }
  if (!any) std::fill(w.weights.begin(), w.weights.end(), 1.0);
  return w;
}

enum class Agreement : std::uint8_t { Unanimous, Majority, Conflict };

struct LabelShare {
  Label label = 0;
  double share = 0.0;
  friend bool operator==(const LabelShare&, const LabelShare&) = default;
};

struct ConsistencySummary {
  double unanimous = 0.0;
  double majority = 0.0;
  double conflict = 0.0;
};

/// Per-pixel inter-model agreement. Unanimous and Majority pixels carry their
/// winning label and its weighted share; Conflict pixels keep the full label
/// histogram.
class ConsistencyMap {
 public:
  ConsistencyMap() = default;
  ConsistencyMap(std::size_t width, std::size_t height)
      : width_(width), height_(height), status_(width * height, Agreement::Unanimous),
        label_(width * height, 0), share_(width * height, 1.0f) {}

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t size() const noexcept { return status_.size(); }

  Agreement status(std::size_t i) const { return status_[i]; }
  Label label(std::size_t i) const { return label_[i]; }
  double share(std::size_t i) const { return share_[i]; }

  /// Histogram of a Conflict pixel, ascending by label; empty otherwise.
  const std::vector<LabelShare>& histogram(std::size_t i) const {
    static const std::vector<LabelShare> none;
    auto it = conflicts_.find(i);
    return it == conflicts_.end() ? none : it->second;
  }

  void set(std::size_t i, Agreement a, Label l, double share) {
    status_[i] = a;
    label_[i] = l;
    share_[i] = static_cast<float>(share);
  }
  void set_conflict(std::size_t i, std::vector<LabelShare> hist) {
    status_[i] = Agreement::Conflict;
    label_[i] = 0;
    share_[i] = 0.0f;
    conflicts_[i] = std::move(hist);
  }

  ConsistencySummary summary() const {
    ConsistencySummary s;
    if (status_.empty()) return s;
    std::array<std::size_t, 3> counts{};
    for (auto a : status_) ++counts[static_cast<std::size_t>(a)];
    const double n = static_cast<double>(status_.size());
    s.unanimous = static_cast<double>(counts[0]) / n;
    s.majority = static_cast<double>(counts[1]) / n;
    s.conflict = static_cast<double>(counts[2]) / n;
    return s;
  }

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<Agreement> status_;
  std::vector<Label> label_;
  std::vector<float> share_;
  std::map<std::size_t, std::vector<LabelShare>> conflicts_;
};

namespace detail {

// Relative tolerance for comparing weighted sums built in different orders.
inline constexpr double kShareEps = 1e-12;

inline void check_frames(std::span<const MaskFrame* const> frames, std::size_t min_count) {
  if (frames.size() < min_count || frames.empty()) {
    throw Error(ErrorKind::EmptyInput, "need at least " + std::to_string(std::max<std::size_t>(min_count, 1)) +
                                           " frames, got " + std::to_string(frames.size()));
  }
  for (const auto* f : frames) {
    if (!f->same_shape(*frames.front())) {
      throw Error(ErrorKind::DimensionMismatch,
                  "fusion input " + shape_string(*f) + " vs " + shape_string(*frames.front()));
    }
  }
}

inline std::vector<const MaskFrame*> pointers(std::span<const MaskFrame> frames) {
  std::vector<const MaskFrame*> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(&f);
  return out;
}

/// Merges (label, weight) votes of one pixel into ascending-label totals.
struct PixelTally {
  std::vector<LabelShare> totals;
  double total = 0.0;
  bool all_agree = true;

  void collect(std::span<const MaskFrame* const> frames, std::span<const double> weights, std::size_t i) {
    totals.clear();
    total = 0.0;
    all_agree = true;
    const Label first = (*frames[0])[i];
    for (std::size_t m = 0; m < frames.size(); ++m) {
      const Label l = (*frames[m])[i];
      all_agree = all_agree && l == first;
      total += weights[m];
      auto it = std::lower_bound(totals.begin(), totals.end(), l,
                                 [](const LabelShare& s, Label v) { return s.label < v; });
      if (it != totals.end() && it->label == l) {
        it->share += weights[m];
      } else {
        totals.insert(it, {l, weights[m]});
      }
    }
  }

  /// Largest total; ties within tolerance go to the smallest label.
  LabelShare best() const {
    LabelShare b = totals.front();
    for (const auto& s : totals) {
      if (s.share > b.share + kShareEps * total) b = s;
    }
    return b;
  }
};

}  // namespace detail

inline ConsistencyMap consistency_map(std::span<const MaskFrame* const> frames, const ModelWeights& weights) {
  detail::check_frames(frames, 2);
  if (weights.weights.size() != frames.size()) throw Error(ErrorKind::ConfigInvalid, "weights do not cover models");
  weights.validate();
  const auto& ref = *frames.front();
  ConsistencyMap map(ref.width(), ref.height());
  detail::PixelTally tally;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    tally.collect(frames, weights.weights, i);
    if (tally.all_agree) {
      map.set(i, Agreement::Unanimous, ref[i], 1.0);
      continue;
    }
    const auto best = tally.best();
    if (best.share > 0.5 * tally.total * (1.0 + detail::kShareEps)) {
      map.set(i, Agreement::Majority, best.label, best.share / tally.total);
    } else {
      std::vector<LabelShare> hist = tally.totals;
      for (auto& s : hist) s.share /= tally.total;
      map.set_conflict(i, std::move(hist));
    }
  }
  return map;
}

inline ConsistencyMap consistency_map(std::span<const MaskFrame> frames, const ModelWeights& weights) {
  const auto ptrs = detail::pointers(frames);
  return consistency_map(std::span<const MaskFrame* const>(ptrs), weights);
}

inline MaskFrame weighted_pixel_vote(std::span<const MaskFrame* const> frames, const ModelWeights& weights) {
  detail::check_frames(frames, 1);
  if (weights.weights.size() != frames.size()) throw Error(ErrorKind::ConfigInvalid, "weights do not cover models");
  weights.validate();
  const auto& ref = *frames.front();
  MaskFrame out(ref.width(), ref.height());
  detail::PixelTally tally;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    tally.collect(frames, weights.weights, i);
    out[i] = tally.all_agree ? ref[i] : tally.best().label;
  }
  return out;
}

inline MaskFrame weighted_pixel_vote(std::span<const MaskFrame> frames, const ModelWeights& weights) {
  const auto ptrs = detail::pointers(frames);
  return weighted_pixel_vote(std::span<const MaskFrame* const>(ptrs), weights);
}

/// Inclusive pixel box.
struct BBox {
  std::size_t top = 0;
  std::size_t left = 0;
  std::size_t bottom = 0;
  std::size_t right = 0;

  std::size_t area() const noexcept { return (bottom - top + 1) * (right - left + 1); }
  bool contains(const BBox& o) const noexcept {
    return top <= o.top && left <= o.left && bottom >= o.bottom && right >= o.right;
  }
  friend bool operator==(const BBox&, const BBox&) = default;
};

inline std::optional<BBox> bounding_box(const BinaryMask& mask) {
  std::optional<BBox> box;
  for (std::size_t r = 0; r < mask.height(); ++r) {
    for (std::size_t c = 0; c < mask.width(); ++c) {
      if (!mask.at(r, c)) continue;
      if (!box) {
        box = BBox{r, c, r, c};
      } else {
        box->top = std::min(box->top, r);
        box->left = std::min(box->left, c);
        box->bottom = std::max(box->bottom, r);
        box->right = std::max(box->right, c);
      }
    }
  }
  return box;
}

/// Tight box of every object in a label map, keyed by label.
inline std::map<Label, BBox> object_boxes(const MaskFrame& frame) {
  std::map<Label, BBox> boxes;
  for (std::size_t r = 0; r < frame.height(); ++r) {
    for (std::size_t c = 0; c < frame.width(); ++c) {
      const Label l = frame.at(r, c);
      if (l == 0) continue;
      auto [it, inserted] = boxes.try_emplace(l, BBox{r, c, r, c});
      if (!inserted) {
        auto& b = it->second;
        b.top = std::min(b.top, r);
        b.left = std::min(b.left, c);
        b.bottom = std::max(b.bottom, r);
        b.right = std::max(b.right, c);
      }
    }
  }
  return boxes;
}

/// Fills boxes largest first so smaller objects end up on top. Equal areas
/// draw in ascending label order.
inline MaskFrame rasterize_boxes(std::size_t width, std::size_t height, const std::map<Label, BBox>& boxes) {
  std::vector<std::pair<Label, BBox>> order(boxes.begin(), boxes.end());
  std::stable_sort(order.begin(), order.end(),
                   [](const auto& a, const auto& b) { return a.second.area() > b.second.area(); });
  MaskFrame out(width, height);
  for (const auto& [label, box] : order) {
    const std::size_t bottom = std::min(box.bottom, height - 1);
    const std::size_t right = std::min(box.right, width - 1);
    for (std::size_t r = box.top; r <= bottom; ++r) {
      for (std::size_t c = box.left; c <= right; ++c) out.at(r, c) = label;
    }
  }
  return out;
}

namespace detail {

inline std::map<Label, std::vector<BBox>> collect_boxes(std::span<const MaskFrame* const> frames) {
  std::map<Label, std::vector<BBox>> per_object;
  for (const auto* f : frames) {
    for (const auto& [label, box] : object_boxes(*f)) per_object[label].push_back(box);
  }
  return per_object;
}

// floor(mean + 1/2) over non-negative integers, exactly.
inline std::size_t mean_half_up(std::size_t sum, std::size_t n) { return (2 * sum + n) / (2 * n); }

}  // namespace detail

/// Per object, coordinate-wise mean of the contributing models' boxes.
inline MaskFrame average_bbox_fusion(std::span<const MaskFrame* const> frames) {
  detail::check_frames(frames, 1);
  std::map<Label, BBox> fused;
  for (const auto& [label, boxes] : detail::collect_boxes(frames)) {
    std::size_t t = 0, l = 0, b = 0, r = 0;
    for (const auto& box : boxes) {
      t += box.top;
      l += box.left;
      b += box.bottom;
      r += box.right;
    }
    const std::size_t n = boxes.size();
    fused[label] = {detail::mean_half_up(t, n), detail::mean_half_up(l, n), detail::mean_half_up(b, n),
                    detail::mean_half_up(r, n)};
  }
  return rasterize_boxes(frames.front()->width(), frames.front()->height(), fused);
}

inline MaskFrame average_bbox_fusion(std::span<const MaskFrame> frames) {
  const auto ptrs = detail::pointers(frames);
  return average_bbox_fusion(std::span<const MaskFrame* const>(ptrs));
}

/// Per object, the box enclosing every contributing model's box.
inline MaskFrame max_bbox_fusion(std::span<const MaskFrame* const> frames) {
  detail::check_frames(frames, 1);
  std::map<Label, BBox> fused;
  for (const auto& [label, boxes] : detail::collect_boxes(frames)) {
    BBox u = boxes.front();
    for (const auto& box : boxes) {
      u.top = std::min(u.top, box.top);
      u.left = std::min(u.left, box.left);
      u.bottom = std::max(u.bottom, box.bottom);
      u.right = std::max(u.right, box.right);
    }
    fused[label] = u;
  }
  return rasterize_boxes(frames.front()->width(), frames.front()->height(), fused);
}

inline MaskFrame max_bbox_fusion(std::span<const MaskFrame> frames) {
  const auto ptrs = detail::pointers(frames);
  return max_bbox_fusion(std::span<const MaskFrame* const>(ptrs));
}

/// Fused sequences, plus per-frame agreement for the pgmr method.
struct PseudoLabelSet {
  FusionMethod method = FusionMethod::Pgmr;
  SequenceMap videos;
  /// Full maps, kept only when requested.
  std::map<std::string, std::vector<ConsistencyMap>> consistency;
  std::map<std::string, std::vector<ConsistencySummary>> consistency_summary;
};

struct FusionOptions {
  bool keep_consistency_maps = true;
  unsigned jobs = 1;
};

/// The pgmr pipeline for one frame: weights, consistency check, then a
/// weighted vote on conflicting pixels. Majority pixels already hold the
/// vote's winner, so only Conflict pixels need the tally.
inline MaskFrame pgmr_fuse_frame(std::span<const MaskFrame* const> frames, const ModelWeights& weights,
                                 ConsistencyMap* map_out) {
  detail::check_frames(frames, 1);
  if (frames.size() == 1) {
    if (map_out) *map_out = ConsistencyMap(frames.front()->width(), frames.front()->height());
    return *frames.front();
  }
  ConsistencyMap map = consistency_map(frames, weights);
  MaskFrame out(frames.front()->width(), frames.front()->height());
  bool has_conflict = false;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (map.status(i) == Agreement::Conflict) {
      has_conflict = true;
    } else {
      out[i] = map.label(i);
    }
  }
  if (has_conflict) {
    const MaskFrame voted = weighted_pixel_vote(frames, weights);
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (map.status(i) == Agreement::Conflict) out[i] = voted[i];
    }
  }
  if (map_out) *map_out = std::move(map);
  return out;
}

/// Fuses every frame of every video. With a database, historical weights are
/// looked up in the bucket of the frame's unweighted consensus, using the
/// median consensus complexity of the whole set as the split.
inline PseudoLabelSet build_pseudo_labels(const PredictionSet& preds, const PerformanceDB* db, FusionMethod method,
                                          const FusionOptions& options = {}) {
  preds.validate();
  const auto video_ids = preds.video_ids();
  const auto& models = preds.models;
  const auto uniform = ModelWeights::uniform(models);
  const bool use_db = method == FusionMethod::Pgmr && db && !db->entries.empty();

  auto frames_at = [&](const std::string& vid, std::size_t f) {
    std::vector<const MaskFrame*> frames;
    frames.reserve(models.size());
    for (const auto& m : models) frames.push_back(&preds.sequence(m, vid).frames[f]);
    return frames;
  };

  std::vector<std::vector<FrameFeatures>> consensus(video_ids.size());
  double split = 0.0;
  if (use_db) {
    parallel_for(video_ids.size(), options.jobs, [&](std::size_t v) {
      const auto& ref = preds.sequence(models.front(), video_ids[v]);
      for (std::size_t f = 0; f < ref.size(); ++f) {
        const auto frames = frames_at(video_ids[v], f);
        consensus[v].push_back(extract_features(weighted_pixel_vote(frames, uniform)));
      }
    });
    std::vector<FrameFeatures> all;
    for (const auto& c : consensus) all.insert(all.end(), c.begin(), c.end());
    split = median_complexity(all);
  }

  std::vector<VideoSequence> fused(video_ids.size());
  std::vector<std::vector<ConsistencyMap>> maps(video_ids.size());
  std::vector<std::vector<ConsistencySummary>> summaries(video_ids.size());
  parallel_for(video_ids.size(), options.jobs, [&](std::size_t v) {
    const auto& vid = video_ids[v];
    const auto& ref = preds.sequence(models.front(), vid);
    auto& out = fused[v];
    out.video_id = vid;
    for (std::size_t f = 0; f < ref.size(); ++f) {
      const auto frames = frames_at(vid, f);
      MaskFrame result;
      switch (method) {
        case FusionMethod::Vote: result = weighted_pixel_vote(frames, uniform); break;
        case FusionMethod::AvgBbox: result = average_bbox_fusion(frames); break;
        case FusionMethod::MaxBbox: result = max_bbox_fusion(frames); break;
        case FusionMethod::Pgmr: {
          std::vector<double> conf;
          for (const auto& m : models) conf.push_back(preds.confidence(m, vid, f));
          std::optional<FeatureBucket> bucket;
          if (use_db) bucket = bucketize(consensus[v][f], split);
          const auto weights = confidence_weights(db, bucket, conf, models);
          ConsistencyMap map;
          result = pgmr_fuse_frame(frames, weights, &map);
          summaries[v].push_back(map.summary());
          if (options.keep_consistency_maps) maps[v].push_back(std::move(map));
          break;
        }
      }
      out.push_back(ref.frame_names[f], std::move(result));
    }
  });

  PseudoLabelSet set;
  set.method = method;
  for (std::size_t v = 0; v < video_ids.size(); ++v) {
    set.videos.emplace(video_ids[v], std::move(fused[v]));
    if (method == FusionMethod::Pgmr) {
      set.consistency_summary.emplace(video_ids[v], std::move(summaries[v]));
      if (options.keep_consistency_maps) set.consistency.emplace(video_ids[v], std::move(maps[v]));
    }
  }
  return set;
}

}  // namespace vosens
