#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vosens/error.hpp"

namespace vosens {

/// Object label: 0 is background, k > 0 is object k.
using Label = std::uint16_t;

/// Largest label an 8-bit palette image can hold.
inline constexpr Label kMaxPaletteLabel = 255;

/// Set of pixels belonging to one object.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(std::size_t width, std::size_t height)
      : width_(width), height_(height), bits_(width * height, 0) {}

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t size() const noexcept { return bits_.size(); }

  bool operator[](std::size_t i) const { return bits_[i] != 0; }
  bool at(std::size_t row, std::size_t col) const { return bits_[row * width_ + col] != 0; }
  void set(std::size_t row, std::size_t col, bool value = true) {
    bits_[row * width_ + col] = value ? 1 : 0;
  }
  void set_index(std::size_t i, bool value = true) { bits_[i] = value ? 1 : 0; }

  std::span<const std::uint8_t> bits() const noexcept { return bits_; }

  std::size_t count() const noexcept {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
  }
  bool empty() const noexcept { return std::find(bits_.begin(), bits_.end(), 1) == bits_.end(); }

  bool same_shape(const BinaryMask& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_;
  }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Dense row-major label map for one video frame.
///
/// A default-constructed frame is 0x0 and only serves as a placeholder; every
/// frame produced by loaders, codecs and generators has positive dimensions.
class MaskFrame {
 public:
  MaskFrame() = default;

  MaskFrame(std::size_t width, std::size_t height, Label fill = 0)
      : width_(width), height_(height), labels_(width * height, fill) {
    check_dims();
  }

  MaskFrame(std::size_t width, std::size_t height, std::vector<Label> labels)
      : width_(width), height_(height), labels_(std::move(labels)) {
    check_dims();
    if (labels_.size() != width_ * height_) {
      throw Error(ErrorKind::LengthMismatch,
                  "label array holds " + std::to_string(labels_.size()) + " values for a " +
                      std::to_string(width_) + "x" + std::to_string(height_) + " frame");
    }
  }

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t size() const noexcept { return labels_.size(); }

  std::span<const Label> labels() const noexcept { return labels_; }
  std::span<Label> labels() noexcept { return labels_; }

  Label operator[](std::size_t i) const { return labels_[i]; }
  Label& operator[](std::size_t i) { return labels_[i]; }
  Label at(std::size_t row, std::size_t col) const { return labels_[row * width_ + col]; }
  Label& at(std::size_t row, std::size_t col) { return labels_[row * width_ + col]; }

  bool same_shape(const MaskFrame& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_;
  }

  Label max_label() const noexcept {
    return labels_.empty() ? Label{0} : *std::max_element(labels_.begin(), labels_.end());
  }

  /// Distinct non-zero labels, ascending.
  std::vector<Label> object_ids() const {
    std::vector<bool> seen(static_cast<std::size_t>(max_label()) + 1, false);
    for (Label l : labels_) seen[l] = true;
    std::vector<Label> ids;
    for (std::size_t l = 1; l < seen.size(); ++l) {
      if (seen[l]) ids.push_back(static_cast<Label>(l));
    }
    return ids;
  }

  BinaryMask select(Label object) const {
    BinaryMask mask(width_, height_);
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      if (labels_[i] == object) mask.set_index(i);
    }
    return mask;
  }

  friend bool operator==(const MaskFrame&, const MaskFrame&) = default;

 private:
  void check_dims() const {
    if (width_ == 0 || height_ == 0) {
      throw Error(ErrorKind::DimensionMismatch, "frame dimensions must be positive");
    }
  }

  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<Label> labels_;
};

inline std::string frame_name(std::size_t index, int digits = 5) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%0*zu", digits, index);
  return buf;
}

inline std::string shape_string(std::size_t width, std::size_t height) {
  return std::to_string(height) + "x" + std::to_string(width);
}

inline std::string shape_string(const MaskFrame& f) { return shape_string(f.width(), f.height()); }

/// Ordered frames of one video.
struct VideoSequence {
  std::string video_id;
  std::vector<MaskFrame> frames;
  std::vector<std::string> frame_names;

  std::size_t size() const noexcept { return frames.size(); }
  std::size_t width() const noexcept { return frames.empty() ? 0 : frames.front().width(); }
  std::size_t height() const noexcept { return frames.empty() ? 0 : frames.front().height(); }

  void push_back(std::string name, MaskFrame frame) {
    frame_names.push_back(std::move(name));
    frames.push_back(std::move(frame));
  }

  /// Throws unless names and frames line up, names strictly increase and all
  /// frames share one shape.
  void validate() const {
    if (frames.size() != frame_names.size()) {
      throw Error(ErrorKind::FrameCountMismatch,
                  "video " + video_id + ": " + std::to_string(frames.size()) + " frames but " +
                      std::to_string(frame_names.size()) + " names");
    }
    for (std::size_t i = 0; i < frames.size(); ++i) {
      if (!frames[i].same_shape(frames.front())) {
        throw Error(ErrorKind::DimensionMismatch,
                    "video " + video_id + " frame " + frame_names[i] + " is " +
                        shape_string(frames[i]) + ", expected " + shape_string(frames.front()));
      }
      if (i > 0 && !(frame_names[i - 1] < frame_names[i])) {
        throw Error(ErrorKind::ConfigInvalid, "video " + video_id +
                                                  ": frame names not strictly increasing at " +
                                                  frame_names[i]);
      }
    }
  }

  friend bool operator==(const VideoSequence&, const VideoSequence&) = default;
};

/// video id -> sequence, ordered by id.
using SequenceMap = std::map<std::string, VideoSequence>;

/// Per-model predictions over a shared set of videos.
struct PredictionSet {
  std::vector<std::string> models;
  std::map<std::string, SequenceMap> videos;
  /// model -> video -> per-frame confidence. Absent entries mean 1.0.
  std::map<std::string, std::map<std::string, std::vector<double>>> confidences;

  std::vector<std::string> video_ids() const {
    std::vector<std::string> ids;
    if (models.empty()) return ids;
    auto it = videos.find(models.front());
    if (it == videos.end()) return ids;
    for (const auto& [id, seq] : it->second) ids.push_back(id);
    return ids;
  }

  bool has_model(const std::string& model) const { return videos.contains(model); }

  const SequenceMap& model_sequences(const std::string& model) const {
    auto it = videos.find(model);
    if (it == videos.end()) throw Error(ErrorKind::UnknownModel, "model " + model);
    return it->second;
  }

  const VideoSequence& sequence(const std::string& model, const std::string& video) const {
    const auto& seqs = model_sequences(model);
    auto it = seqs.find(video);
    if (it == seqs.end()) {
      throw Error(ErrorKind::InconsistentCoverage, "model " + model + " has no video " + video);
    }
    return it->second;
  }

  double confidence(const std::string& model, const std::string& video, std::size_t frame) const {
    auto m = confidences.find(model);
    if (m == confidences.end()) return 1.0;
    auto v = m->second.find(video);
    if (v == m->second.end() || frame >= v->second.size()) return 1.0;
    return v->second[frame];
  }

  /// Throws the first violated invariant: coverage, shapes, confidence range.
  void validate() const {
    if (models.empty()) throw Error(ErrorKind::EmptyInput, "prediction set has no models");
    const auto& ref_model = models.front();
    const auto& ref = model_sequences(ref_model);
    for (const auto& model : models) {
      const auto& seqs = model_sequences(model);
      for (const auto& [vid, rseq] : ref) {
        auto it = seqs.find(vid);
        if (it == seqs.end()) {
          throw Error(ErrorKind::InconsistentCoverage,
                      "model " + model + " is missing video " + vid);
        }
        const auto& seq = it->second;
        seq.validate();
        for (const auto& name : rseq.frame_names) {
          if (!std::binary_search(seq.frame_names.begin(), seq.frame_names.end(), name)) {
            throw Error(ErrorKind::InconsistentCoverage,
                        "model " + model + " video " + vid + " is missing frame " + name);
          }
        }
        for (const auto& name : seq.frame_names) {
          if (!std::binary_search(rseq.frame_names.begin(), rseq.frame_names.end(), name)) {
            throw Error(ErrorKind::InconsistentCoverage, "model " + ref_model + " video " + vid +
                                                             " is missing frame " + name);
          }
        }
        if (!seq.frames.empty() && !rseq.frames.empty() &&
            !seq.frames.front().same_shape(rseq.frames.front())) {
          throw Error(ErrorKind::DimensionMismatch,
                      "model " + model + " video " + vid + " is " +
                          shape_string(seq.frames.front()) + ", model " + ref_model + " is " +
                          shape_string(rseq.frames.front()));
        }
      }
      for (const auto& [vid, seq] : seqs) {
        if (!ref.contains(vid)) {
          throw Error(ErrorKind::InconsistentCoverage,
                      "model " + ref_model + " is missing video " + vid);
        }
      }
    }
    for (const auto& [model, per_video] : confidences) {
      for (const auto& [vid, values] : per_video) {
        for (double c : values) {
          if (!(c >= 0.0 && c <= 1.0)) {
            throw Error(ErrorKind::ConfidenceOutOfRange,
                        "model " + model + " video " + vid + " confidence " + std::to_string(c));
          }
        }
      }
    }
  }
};

struct Run {
  Label value = 0;
  std::size_t length = 0;
  friend bool operator==(const Run&, const Run&) = default;
};

/// Row-major run-length encoding of a label map.
struct RleMask {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<Run> runs;
  friend bool operator==(const RleMask&, const RleMask&) = default;
};

inline RleMask rle_encode(const MaskFrame& frame) {
  RleMask rle{frame.width(), frame.height(), {}};
  for (Label l : frame.labels()) {
    if (!rle.runs.empty() && rle.runs.back().value == l) {
      ++rle.runs.back().length;
    } else {
      rle.runs.push_back({l, 1});
    }
  }
  return rle;
}

inline MaskFrame rle_decode(const RleMask& rle) {
  const std::size_t total = rle.width * rle.height;
  std::size_t sum = 0;
  for (const auto& run : rle.runs) {
    if (run.length == 0) throw Error(ErrorKind::LengthMismatch, "zero-length run");
    sum += run.length;
  }
  if (sum != total) {
    throw Error(ErrorKind::LengthMismatch, "runs cover " + std::to_string(sum) +
                                               " pixels, frame has " + std::to_string(total));
  }
  std::vector<Label> labels;
  labels.reserve(total);
  for (const auto& run : rle.runs) labels.insert(labels.end(), run.length, run.value);
  return MaskFrame(rle.width, rle.height, std::move(labels));
}

}  // namespace vosens
