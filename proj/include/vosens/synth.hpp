#pragma once

// Deterministic synthetic VOS benchmark: moving rectangles/ellipses that
// occlude each other and vanish for a while, plus degraded copies standing in
// for the predictions of several segmentation models.
//
// Randomness comes from std::mt19937_64, whose output sequence is fixed by the
// C++ standard, seeded through SplitMix64. Uniform and normal variates are
// derived here rather than through <random> distributions, whose outputs are
// implementation-defined.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "vosens/error.hpp"
#include "vosens/mask.hpp"
#include "vosens/metrics.hpp"
#include "vosens/parallel.hpp"
#include "vosens/selection.hpp"

namespace vosens {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n), n > 0, by rejection.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = next();
    } while (x >= limit);
    return x % n;
  }
  /// Uniform integer in [lo, hi].
  long long between(long long lo, long long hi) {
    return lo + static_cast<long long>(below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller; no cached second variate.
  double normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

 private:
  std::mt19937_64 engine_;
};

enum class ShapeKind { Rectangle, Ellipse };

struct SynthConfig {
  std::uint64_t seed = 0;
  std::size_t videos = 4;
  std::size_t frames_per_video = 10;
  std::size_t width = 64;
  std::size_t height = 48;
  std::size_t min_objects = 1;
  std::size_t max_objects = 3;
  std::vector<ShapeKind> shape_kinds{ShapeKind::Rectangle, ShapeKind::Ellipse};
  double occlusion_rate = 0.1;
  double disappear_rate = 0.2;

  void validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorKind::ConfigInvalid, m); };
    if (videos == 0 || frames_per_video == 0 || width == 0 || height == 0) fail("counts and sizes must be >= 1");
    if (min_objects == 0 || min_objects > max_objects) fail("object range must satisfy 1 <= min <= max");
    if (max_objects > kMaxPaletteLabel) fail("too many objects for 8-bit labels");
    if (height < 3 * max_objects) fail("height must give every object a lane of at least 3 rows");
    if (width < 3) fail("width must be at least 3");
    if (shape_kinds.empty()) fail("at least one shape kind required");
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!prob(occlusion_rate) || !prob(disappear_rate)) fail("rates must lie in [0,1]");
  }
};

inline std::string synth_video_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "vid%04zu", index);
  return buf;
}

namespace detail {

struct SynthObject {
  ShapeKind kind = ShapeKind::Rectangle;
  long long rx = 1, ry = 1;
  std::vector<double> key_x, key_y;  // waypoints
  std::size_t hide_begin = 1, hide_end = 0;  // hidden on [begin, end] when begin <= end

  bool hidden(std::size_t f) const { return hide_begin <= hide_end && f >= hide_begin && f <= hide_end; }

  std::pair<long long, long long> center(std::size_t f, std::size_t frames) const {
    const std::size_t segments = key_x.size() - 1;
    const double t = frames > 1 ? static_cast<double>(f) / static_cast<double>(frames - 1) : 0.0;
    const double pos = t * static_cast<double>(segments);
    std::size_t s = std::min(segments - 1, static_cast<std::size_t>(pos));
    const double u = pos - static_cast<double>(s);
    const double x = key_x[s] + (key_x[s + 1] - key_x[s]) * u;
    const double y = key_y[s] + (key_y[s + 1] - key_y[s]) * u;
    return {std::llround(x), std::llround(y)};
  }
};

inline void draw_shape(MaskFrame& frame, ShapeKind kind, long long cx, long long cy, long long rx, long long ry,
                       Label label) {
  const long long w = static_cast<long long>(frame.width());
  const long long h = static_cast<long long>(frame.height());
  for (long long y = std::max(0LL, cy - ry); y <= std::min(h - 1, cy + ry); ++y) {
    for (long long x = std::max(0LL, cx - rx); x <= std::min(w - 1, cx + rx); ++x) {
      if (kind == ShapeKind::Ellipse) {
        const double dx = static_cast<double>(x - cx) / (static_cast<double>(rx) + 0.5);
        const double dy = static_cast<double>(y - cy) / (static_cast<double>(ry) + 0.5);
        if (dx * dx + dy * dy > 1.0) continue;
      }
      frame.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = label;
    }
  }
}

inline VideoSequence generate_video(const SynthConfig& cfg, std::size_t index) {
  Rng rng(splitmix64(cfg.seed ^ splitmix64(index + 1)));
  const std::size_t F = cfg.frames_per_video;
  const auto W = static_cast<long long>(cfg.width);
  const std::size_t n = static_cast<std::size_t>(rng.between(static_cast<long long>(cfg.min_objects),
                                                             static_cast<long long>(cfg.max_objects)));
  // Each object moves inside its own horizontal lane, so objects only overlap
  // during explicit occlusion events.
  const long long lane = static_cast<long long>(cfg.height / n);
  std::vector<SynthObject> objects(n);
  for (std::size_t k = 0; k < n; ++k) {
    auto& o = objects[k];
    o.kind = cfg.shape_kinds[rng.below(cfg.shape_kinds.size())];
    const long long top = static_cast<long long>(k) * lane;
    const long long max_ry = std::max(1LL, (lane - 1) / 2);
    o.ry = rng.between(std::clamp(max_ry / 3, 1LL, max_ry), max_ry);
    o.rx = rng.between(std::max(1LL, W / 24), std::max(1LL, W / 5));
    const long long x_lo = std::min(o.rx, W - 1), x_hi = std::max(x_lo, W - 1 - o.rx);
    const long long y_lo = top + o.ry, y_hi = std::max(y_lo, top + lane - 1 - o.ry);
    const std::size_t keys = F >= 3 ? 3 : 2;
    for (std::size_t i = 0; i < keys; ++i) {
      o.key_x.push_back(static_cast<double>(rng.between(x_lo, x_hi)));
      o.key_y.push_back(static_cast<double>(rng.between(y_lo, y_hi)));
    }
    if (F >= 3 && rng.bernoulli(cfg.disappear_rate)) {
      o.hide_begin = static_cast<std::size_t>(rng.between(1, static_cast<long long>(F) - 2));
      o.hide_end = static_cast<std::size_t>(rng.between(static_cast<long long>(o.hide_begin), static_cast<long long>(F) - 2));
    }
  }

  VideoSequence seq;
  seq.video_id = synth_video_name(index);
  for (std::size_t f = 0; f < F; ++f) {
    std::vector<std::pair<long long, long long>> centers;
    std::vector<std::size_t> visible;
    for (std::size_t k = 0; k < n; ++k) {
      centers.push_back(objects[k].center(f, F));
      if (!objects[k].hidden(f)) visible.push_back(k);
    }
    if (f > 0 && visible.size() >= 2 && rng.bernoulli(cfg.occlusion_rate)) {
      const auto a = rng.below(visible.size() - 1);
      const auto b = a + 1 + rng.below(visible.size() - 1 - a);
      centers[visible[b]] = centers[visible[a]];
    }
    MaskFrame frame(cfg.width, cfg.height);
    for (std::size_t k : visible) {
      const auto& o = objects[k];
      draw_shape(frame, o.kind, centers[k].first, centers[k].second, o.rx, o.ry, static_cast<Label>(k + 1));
    }
    seq.push_back(frame_name(f), std::move(frame));
  }
  return seq;
}

}  // namespace detail

/// Same config -> identical sequences. Videos use seeds derived from their
/// index, so generation order does not matter.
inline SequenceMap generate_sequence(const SynthConfig& cfg, unsigned jobs = 1) {
  cfg.validate();
  std::vector<VideoSequence> videos(cfg.videos);
  parallel_for(cfg.videos, jobs, [&](std::size_t i) { videos[i] = detail::generate_video(cfg, i); });
  SequenceMap out;
  for (auto& v : videos) {
    auto id = v.video_id;
    out.emplace(std::move(id), std::move(v));
  }
  return out;
}

struct NoiseProfile {
  std::string model;
  /// Each pixel copies a neighbour up to this many pixels away.
  int boundary_jitter = 0;
  /// Per object per video: the model never segments the object.
  double drop_object_prob = 0.0;
  /// Per object per video: from a random frame on, the object carries another object's id.
  double label_swap_prob = 0.0;
  /// Per object per video: constant offset with this standard deviation.
  double translation_sigma = 0.0;

  void validate() const {
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (model.empty()) throw Error(ErrorKind::ConfigInvalid, "noise profile without model id");
    if (boundary_jitter < 0 || translation_sigma < 0.0 || !prob(drop_object_prob) || !prob(label_swap_prob)) {
      throw Error(ErrorKind::ConfigInvalid, "noise profile " + model + " has out-of-range parameters");
    }
  }

  nlohmann::json to_json() const {
    return {{"model", model},
            {"boundary_jitter", boundary_jitter},
            {"drop_object_prob", drop_object_prob},
            {"label_swap_prob", label_swap_prob},
            {"translation_sigma", translation_sigma}};
  }

  static NoiseProfile from_json(const nlohmann::json& j) {
    NoiseProfile p;
    try {
      p.model = j.at("model").get<std::string>();
      p.boundary_jitter = j.value("boundary_jitter", 0);
      p.drop_object_prob = j.value("drop_object_prob", 0.0);
      p.label_swap_prob = j.value("label_swap_prob", 0.0);
      p.translation_sigma = j.value("translation_sigma", 0.0);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::ParseFailure, std::string("noise profile: ") + e.what());
    }
    p.validate();
    return p;
  }
};

/// Five models whose failure modes differ, so different models win different
/// videos.
inline std::vector<NoiseProfile> default_profiles() {
  return {
      {"model_a", 0, 0.12, 0.03, 0.0},
      {"model_b", 1, 0.04, 0.02, 0.0},
      {"model_c", 0, 0.05, 0.03, 0.6},
      {"model_d", 0, 0.08, 0.08, 0.0},
      {"model_e", 0, 0.15, 0.02, 0.0},
  };
}

namespace detail {

inline VideoSequence degrade_video(const VideoSequence& gt, const NoiseProfile& p, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Label> labels;
  for (const auto& f : gt.frames) {
    for (Label l : f.object_ids()) labels.push_back(l);
  }
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());

  const Label max_label = labels.empty() ? 0 : labels.back();
  std::vector<bool> dropped(max_label + 1, false);
  std::vector<long long> dx(max_label + 1, 0), dy(max_label + 1, 0);
  std::vector<Label> swap_to(max_label + 1);
  std::vector<std::size_t> swap_from(max_label + 1, gt.size());
  for (std::size_t i = 0; i <= max_label; ++i) swap_to[i] = static_cast<Label>(i);

  for (std::size_t i = 0; i < labels.size(); ++i) {
    const Label l = labels[i];
    dropped[l] = rng.bernoulli(p.drop_object_prob);
    dx[l] = std::llround(rng.normal() * p.translation_sigma);
    dy[l] = std::llround(rng.normal() * p.translation_sigma);
    if (labels.size() >= 2 && gt.size() >= 2 && rng.bernoulli(p.label_swap_prob)) {
      const auto other = rng.below(labels.size() - 1);
      swap_to[l] = labels[other >= i ? other + 1 : other];
      swap_from[l] = static_cast<std::size_t>(rng.between(1, static_cast<long long>(gt.size()) - 1));
    }
  }

  VideoSequence out;
  out.video_id = gt.video_id;
  const auto J = static_cast<long long>(p.boundary_jitter);
  for (std::size_t f = 0; f < gt.size(); ++f) {
    const auto& src = gt.frames[f];
    const auto w = static_cast<long long>(src.width()), h = static_cast<long long>(src.height());
    MaskFrame moved(src.width(), src.height());
    for (long long r = 0; r < h; ++r) {
      for (long long c = 0; c < w; ++c) {
        const Label l = src.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
        if (l == 0 || dropped[l]) continue;
        const long long tr = r + dy[l], tc = c + dx[l];
        if (tr < 0 || tc < 0 || tr >= h || tc >= w) continue;
        moved.at(static_cast<std::size_t>(tr), static_cast<std::size_t>(tc)) = f >= swap_from[l] ? swap_to[l] : l;
      }
    }
    if (J > 0) {
      MaskFrame jittered(src.width(), src.height());
      for (long long r = 0; r < h; ++r) {
        for (long long c = 0; c < w; ++c) {
          const long long sr = std::clamp(r + rng.between(-J, J), 0LL, h - 1);
          const long long sc = std::clamp(c + rng.between(-J, J), 0LL, w - 1);
          jittered.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) =
              moved.at(static_cast<std::size_t>(sr), static_cast<std::size_t>(sc));
        }
      }
      moved = std::move(jittered);
    }
    out.push_back(gt.frame_names[f], std::move(moved));
  }
  return out;
}

}  // namespace detail

/// One degraded copy of `gt` per profile. A profile with every parameter at
/// zero reproduces `gt` exactly.
inline PredictionSet synthesize_predictions(const SequenceMap& gt, const std::vector<NoiseProfile>& profiles,
                                            std::uint64_t seed, unsigned jobs = 1) {
  if (profiles.empty()) throw Error(ErrorKind::EmptyInput, "no noise profiles");
  PredictionSet set;
  std::vector<const VideoSequence*> videos;
  for (const auto& [vid, seq] : gt) videos.push_back(&seq);
  for (const auto& p : profiles) {
    p.validate();
    set.models.push_back(p.model);
    std::vector<VideoSequence> out(videos.size());
    parallel_for(videos.size(), jobs, [&](std::size_t v) {
      const std::uint64_t s =
          splitmix64(seed ^ splitmix64(fnv1a64(p.model)) ^ splitmix64(fnv1a64(videos[v]->video_id) + 0x51ED));
      out[v] = detail::degrade_video(*videos[v], p, s);
    });
    auto& seqs = set.videos[p.model];
    for (auto& v : out) {
      auto id = v.video_id;
      seqs.emplace(std::move(id), std::move(v));
    }
  }
  set.validate();
  return set;
}

/// Per video, the model with the highest true J&F; ties go to the smallest id.
inline std::map<std::string, std::string> oracle_best(const PredictionSet& preds, const SequenceMap& gt,
                                                      const MetricConfig& cfg = {}) {
  std::map<std::string, std::string> out;
  for (const auto& [vid, gseq] : gt) {
    std::map<std::string, double> scores;
    for (const auto& m : preds.models) scores[m] = score_against_pseudo(preds.sequence(m, vid), gseq, cfg);
    out[vid] = select_best(scores);
  }
  return out;
}

}  // namespace vosens
