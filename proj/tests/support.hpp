#pragma once

#include <png.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "vosens/mask.hpp"

namespace testing_support {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("vosens-test-" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

 private:
  fs::path path_;
};

inline vosens::MaskFrame random_frame(std::mt19937& rng, std::size_t w, std::size_t h, int max_label) {
  std::uniform_int_distribution<int> d(0, max_label);
  std::vector<vosens::Label> labels(w * h);
  for (auto& l : labels) l = static_cast<vosens::Label>(d(rng));
  return vosens::MaskFrame(w, h, std::move(labels));
}

/// Blocky frame: a few filled rectangles, more like a real label map than noise.
inline vosens::MaskFrame blocky_frame(std::mt19937& rng, std::size_t w, std::size_t h, int objects) {
  vosens::MaskFrame f(w, h);
  for (int k = 1; k <= objects; ++k) {
    std::uniform_int_distribution<std::size_t> rr(0, h - 1), cc(0, w - 1);
    std::size_t r0 = rr(rng), r1 = rr(rng), c0 = cc(rng), c1 = cc(rng);
    if (r0 > r1) std::swap(r0, r1);
    if (c0 > c1) std::swap(c0, c1);
    for (std::size_t r = r0; r <= r1; ++r)
      for (std::size_t c = c0; c <= c1; ++c) f[r * w + c] = static_cast<vosens::Label>(k);
  }
  return f;
}

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// All regular files under `root`, relative path -> bytes.
inline std::map<std::string, std::string> tree_bytes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = slurp(e.path());
  }
  return out;
}

inline void write_rgb_png(const fs::path& path, std::size_t w, std::size_t h) {
  FILE* fp = std::fopen(path.string().c_str(), "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(w * 3, 128);
  for (std::size_t r = 0; r < h; ++r) png_write_row(png, row.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

inline vosens::VideoSequence make_sequence(const std::string& id, std::vector<vosens::MaskFrame> frames) {
  vosens::VideoSequence s;
  s.video_id = id;
  for (std::size_t i = 0; i < frames.size(); ++i) s.push_back(vosens::frame_name(i), std::move(frames[i]));
  return s;
}

}  // namespace testing_support
