#pragma once

// Frame features, their discretisation into buckets, and the per-bucket model
// performance database.

#include <algorithm>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "vosens/error.hpp"
#include "vosens/mask.hpp"

namespace vosens {

struct FrameFeatures {
  std::size_t object_count = 0;
  double mean_object_area_fraction = 0.0;
  double min_object_area_fraction = 0.0;
  /// Fraction of 4-neighbour pixel pairs whose labels differ.
  double scene_complexity = 0.0;
};

inline FrameFeatures extract_features(const MaskFrame& frame) {
  FrameFeatures out;
  const std::size_t w = frame.width(), h = frame.height();
  const double total = static_cast<double>(frame.size());
  std::vector<std::size_t> area(static_cast<std::size_t>(frame.max_label()) + 1, 0);
  for (Label l : frame.labels()) ++area[l];
  double sum = 0.0;
  double min_frac = 1.0;
  for (std::size_t l = 1; l < area.size(); ++l) {
    if (area[l] == 0) continue;
    const double frac = static_cast<double>(area[l]) / total;
    ++out.object_count;
    sum += frac;
    min_frac = std::min(min_frac, frac);
  }
  if (out.object_count > 0) {
    out.mean_object_area_fraction = sum / static_cast<double>(out.object_count);
    out.min_object_area_fraction = min_frac;
  }
  std::size_t differing = 0;
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const Label l = frame.at(r, c);
      if (c + 1 < w && frame.at(r, c + 1) != l) ++differing;
      if (r + 1 < h && frame.at(r + 1, c) != l) ++differing;
    }
  }
  const std::size_t pairs = h * (w - 1) + w * (h - 1);
  out.scene_complexity = pairs ? static_cast<double>(differing) / static_cast<double>(pairs) : 0.0;
  return out;
}

enum class CountBin { One, TwoToThree, FourPlus };
enum class SizeBin { Tiny, Small, Medium, Large };
enum class ComplexityBin { Low, High };

inline constexpr double kTinyArea = 0.005;
inline constexpr double kSmallArea = 0.02;
inline constexpr double kMediumArea = 0.10;

struct FeatureBucket {
  CountBin count = CountBin::One;
  SizeBin size = SizeBin::Tiny;
  ComplexityBin complexity = ComplexityBin::Low;

  friend auto operator<=>(const FeatureBucket&, const FeatureBucket&) = default;
};

/// Total over all features. Frames with no objects share the single-object
/// count bin; the complexity split is supplied by the caller (median of the
/// batch being bucketed).
inline FeatureBucket bucketize(const FrameFeatures& f, double complexity_split) {
  FeatureBucket b;
  b.count = f.object_count <= 1 ? CountBin::One : f.object_count <= 3 ? CountBin::TwoToThree : CountBin::FourPlus;
  const double a = f.min_object_area_fraction;
  b.size = a < kTinyArea ? SizeBin::Tiny : a < kSmallArea ? SizeBin::Small : a < kMediumArea ? SizeBin::Medium : SizeBin::Large;
  b.complexity = f.scene_complexity > complexity_split ? ComplexityBin::High : ComplexityBin::Low;
  return b;
}

/// Lower median of the complexities, 0 for an empty batch.
inline double median_complexity(std::span<const FrameFeatures> features) {
  if (features.empty()) return 0.0;
  std::vector<double> v;
  v.reserve(features.size());
  for (const auto& f : features) v.push_back(f.scene_complexity);
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>((v.size() - 1) / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

inline std::string_view to_string(CountBin b) {
  switch (b) {
    case CountBin::One: return "1";
    case CountBin::TwoToThree: return "2-3";
    case CountBin::FourPlus: return "4+";
  }
  return "?";
}
inline std::string_view to_string(SizeBin b) {
  switch (b) {
    case SizeBin::Tiny: return "tiny";
    case SizeBin::Small: return "small";
    case SizeBin::Medium: return "medium";
    case SizeBin::Large: return "large";
  }
  return "?";
}
inline std::string_view to_string(ComplexityBin b) { return b == ComplexityBin::Low ? "low" : "high"; }

inline nlohmann::json bucket_to_json(const FeatureBucket& b) {
  return {{"count", to_string(b.count)}, {"size", to_string(b.size)}, {"complexity", to_string(b.complexity)}};
}

inline FeatureBucket bucket_from_json(const nlohmann::json& j) {
  FeatureBucket b;
  const auto count = j.at("count").get<std::string>();
  const auto size = j.at("size").get<std::string>();
  const auto cx = j.at("complexity").get<std::string>();
  if (count == "1") b.count = CountBin::One;
  else if (count == "2-3") b.count = CountBin::TwoToThree;
  else if (count == "4+") b.count = CountBin::FourPlus;
  else throw Error(ErrorKind::ParseFailure, "bucket count '" + count + "'");
  if (size == "tiny") b.size = SizeBin::Tiny;
  else if (size == "small") b.size = SizeBin::Small;
  else if (size == "medium") b.size = SizeBin::Medium;
  else if (size == "large") b.size = SizeBin::Large;
  else throw Error(ErrorKind::ParseFailure, "bucket size '" + size + "'");
  if (cx == "low") b.complexity = ComplexityBin::Low;
  else if (cx == "high") b.complexity = ComplexityBin::High;
  else throw Error(ErrorKind::ParseFailure, "bucket complexity '" + cx + "'");
  return b;
}

struct PerformanceEntry {
  double score_sum = 0.0;
  std::size_t sample_count = 0;

  double mean() const noexcept { return sample_count ? score_sum / static_cast<double>(sample_count) : 0.0; }
  friend bool operator==(const PerformanceEntry&, const PerformanceEntry&) = default;
};

/// Historical per-bucket, per-model score record.
struct PerformanceDB {
  std::map<FeatureBucket, std::map<std::string, PerformanceEntry>> entries;
  std::uint64_t version = 0;

  std::optional<double> mean(const FeatureBucket& bucket, const std::string& model) const {
    auto b = entries.find(bucket);
    if (b == entries.end()) return std::nullopt;
    auto m = b->second.find(model);
    if (m == b->second.end() || m->second.sample_count == 0) return std::nullopt;
    return m->second.mean();
  }

  /// Adds one observation in place; see update_performance_db for the value form.
  void record(const FeatureBucket& bucket, const std::string& model, double score) {
    if (!(score >= 0.0 && score <= 1.0)) {
      throw Error(ErrorKind::ScoreOutOfRange, "score " + std::to_string(score) + " for model " + model);
    }
    auto& e = entries[bucket][model];
    e.score_sum += score;
    ++e.sample_count;
    ++version;
  }

  nlohmann::json to_json() const {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& [bucket, models] : entries) {
      for (const auto& [model, e] : models) {
        list.push_back({{"bucket", bucket_to_json(bucket)},
                        {"model", model},
                        {"score_sum", e.score_sum},
                        {"sample_count", e.sample_count}});
      }
    }
    return {{"version", version}, {"entries", std::move(list)}};
  }

  std::string serialize() const { return to_json().dump(2) + "\n"; }

  static PerformanceDB from_json(const nlohmann::json& j) {
    PerformanceDB db;
    try {
      db.version = j.at("version").get<std::uint64_t>();
      for (const auto& item : j.at("entries")) {
        PerformanceEntry e{item.at("score_sum").get<double>(), item.at("sample_count").get<std::size_t>()};
        const auto model = item.at("model").get<std::string>();
        if (e.sample_count == 0) throw Error(ErrorKind::ParseFailure, "entry for " + model + " has no samples");
        const double m = e.mean();
        if (!(m >= 0.0 && m <= 1.0)) throw Error(ErrorKind::ScoreOutOfRange, "mean score for " + model);
        db.entries[bucket_from_json(item.at("bucket"))][model] = e;
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::ParseFailure, std::string("performance db: ") + e.what());
    }
    return db;
  }

  static PerformanceDB parse(std::string_view text) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::ParseFailure, std::string("performance db: ") + e.what());
    }
    return from_json(j);
  }

  friend bool operator==(const PerformanceDB&, const PerformanceDB&) = default;
};

inline PerformanceDB update_performance_db(PerformanceDB db, const FrameFeatures& features, double complexity_split,
                                           const std::string& model, double score) {
  db.record(bucketize(features, complexity_split), model, score);
  return db;
}

/// Shared database with one writer at a time. Readers take immutable
/// snapshots and never observe a half-applied update.
class PerformanceStore {
 public:
  explicit PerformanceStore(PerformanceDB initial = {})
      : current_(std::make_shared<const PerformanceDB>(std::move(initial))) {}

  std::shared_ptr<const PerformanceDB> snapshot() const {
    std::lock_guard lock(mutex_);
    return current_;
  }

  template <typename Fn>
  void update(Fn&& fn) {
    std::lock_guard writer(write_mutex_);
    auto next = std::make_shared<PerformanceDB>(*snapshot());
    fn(*next);
    std::lock_guard lock(mutex_);
    current_ = std::move(next);
  }

 private:
  mutable std::mutex mutex_;
  std::mutex write_mutex_;
  std::shared_ptr<const PerformanceDB> current_;
};

}  // namespace vosens
