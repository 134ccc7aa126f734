#pragma once

// 8-bit indexed-palette PNG codec for label maps, backed by libpng.
// Label value == palette index; the palette itself carries no meaning and is
// the usual VOS color map so files open sensibly in image viewers.

#include <png.h>

#include <array>
#include <csetjmp>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "vosens/error.hpp"
#include "vosens/mask.hpp"

namespace vosens {

namespace detail {

inline std::array<png_color, 256> vos_palette() {
  std::array<png_color, 256> palette{};
  for (unsigned i = 0; i < 256; ++i) {
    unsigned r = 0, g = 0, b = 0, c = i;
    for (unsigned j = 0; j < 8; ++j) {
      r |= ((c >> 0) & 1u) << (7 - j);
      g |= ((c >> 1) & 1u) << (7 - j);
      b |= ((c >> 2) & 1u) << (7 - j);
      c >>= 3;
    }
    palette[i] = {static_cast<png_byte>(r), static_cast<png_byte>(g), static_cast<png_byte>(b)};
  }
  return palette;
}

struct PngMessage {
  char text[256] = {};
};

extern "C" inline void png_error_to_jmp(png_structp png, png_const_charp msg) {
  if (auto* m = static_cast<PngMessage*>(png_get_error_ptr(png))) {
    std::strncpy(m->text, msg ? msg : "libpng error", sizeof(m->text) - 1);
  }
  png_longjmp(png, 1);
}

extern "C" inline void png_warning_ignore(png_structp, png_const_charp) {}

struct MemoryReader {
  const png_byte* data;
  std::size_t size;
  std::size_t offset;
};

extern "C" inline void png_read_memory(png_structp png, png_bytep out, png_size_t count) {
  auto* r = static_cast<MemoryReader*>(png_get_io_ptr(png));
  if (r->offset + count > r->size) png_error(png, "unexpected end of data");
  std::memcpy(out, r->data + r->offset, count);
  r->offset += count;
}

extern "C" inline void png_write_memory(png_structp png, png_bytep data, png_size_t count) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + count);
}

extern "C" inline void png_flush_noop(png_structp) {}

enum class DecodeStatus { Ok, NotPng, NotIndexed, Corrupt };

// All objects with destructors are declared before setjmp; a longjmp lands
// back here and unwinds nothing that was constructed after it.
inline DecodeStatus decode_palette_rows(std::span<const std::uint8_t> bytes,
                                        std::vector<png_byte>& pixels, png_uint_32& width,
                                        png_uint_32& height, PngMessage& message) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) return DecodeStatus::NotPng;

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, png_error_to_jmp,
                                           png_warning_ignore);
  if (!png) return DecodeStatus::Corrupt;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    return DecodeStatus::Corrupt;
  }
  MemoryReader reader{bytes.data(), bytes.size(), 0};
  std::vector<png_bytep> rows;
  volatile DecodeStatus status = DecodeStatus::Ok;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return status == DecodeStatus::Ok ? DecodeStatus::Corrupt : status;
  }

  png_set_read_fn(png, &reader, png_read_memory);
  png_read_info(png, info);
  width = png_get_image_width(png, info);
  height = png_get_image_height(png, info);
  const int color_type = png_get_color_type(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  if (color_type != PNG_COLOR_TYPE_PALETTE || bit_depth > 8) {
    png_destroy_read_struct(&png, &info, nullptr);
    return DecodeStatus::NotIndexed;
  }
  if (bit_depth < 8) png_set_packing(png);
  png_set_interlace_handling(png);
  png_read_update_info(png, info);

  pixels.assign(static_cast<std::size_t>(width) * height, 0);
  rows.resize(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = pixels.data() + static_cast<std::size_t>(y) * width;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return DecodeStatus::Ok;
}

inline bool encode_palette_rows(const std::vector<png_byte>& pixels, png_uint_32 width,
                                png_uint_32 height, std::vector<std::uint8_t>& out,
                                PngMessage& message) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, png_error_to_jmp,
                                            png_warning_ignore);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    return false;
  }
  const auto palette = vos_palette();
  std::vector<png_bytep> rows(height);
  for (png_uint_32 y = 0; y < height; ++y) {
    rows[y] = const_cast<png_bytep>(pixels.data()) + static_cast<std::size_t>(y) * width;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_set_write_fn(png, &out, png_write_memory, png_flush_noop);
  png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_PALETTE, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_PLTE(png, info, palette.data(), static_cast<int>(palette.size()));
  png_set_compression_level(png, 6);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    throw Error(ErrorKind::MissingFile, path.string());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace detail

inline MaskFrame decode_indexed_png(std::span<const std::uint8_t> bytes,
                                    const std::string& origin = "<memory>") {
  std::vector<png_byte> pixels;
  png_uint_32 width = 0, height = 0;
  detail::PngMessage message;
  switch (detail::decode_palette_rows(bytes, pixels, width, height, message)) {
    case detail::DecodeStatus::Ok: break;
    case detail::DecodeStatus::NotPng:
      throw Error(ErrorKind::CorruptImage, origin + ": not a PNG stream");
    case detail::DecodeStatus::NotIndexed:
      throw Error(ErrorKind::NotIndexedPng, origin + ": image is not palette-indexed");
    case detail::DecodeStatus::Corrupt:
      throw Error(ErrorKind::CorruptImage, origin + ": " + message.text);
  }
  return MaskFrame(width, height, std::vector<Label>(pixels.begin(), pixels.end()));
}

inline std::vector<std::uint8_t> encode_indexed_png(const MaskFrame& frame) {
  if (frame.size() == 0) throw Error(ErrorKind::DimensionMismatch, "cannot encode empty frame");
  std::vector<png_byte> pixels(frame.size());
  for (std::size_t i = 0; i < frame.size(); ++i) {
    const Label l = frame[i];
    if (l > kMaxPaletteLabel) {
      throw Error(ErrorKind::LabelOverflow,
                  "label " + std::to_string(l) + " exceeds " + std::to_string(kMaxPaletteLabel));
    }
    pixels[i] = static_cast<png_byte>(l);
  }
  std::vector<std::uint8_t> out;
  detail::PngMessage message;
  if (!detail::encode_palette_rows(pixels, static_cast<png_uint_32>(frame.width()),
                                   static_cast<png_uint_32>(frame.height()), out, message)) {
    throw Error(ErrorKind::IoFailure, std::string("png encode failed: ") + message.text);
  }
  return out;
}

inline MaskFrame load_mask_frame(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  return decode_indexed_png(bytes, path.string());
}

inline void write_file_bytes(const std::filesystem::path& path,
                             std::span<const std::uint8_t> bytes) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  if (ec) throw Error(ErrorKind::IoFailure, "cannot create " + path.parent_path().string());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::IoFailure, "short write to " + path.string());
}

inline void save_mask_frame(const MaskFrame& frame, const std::filesystem::path& path) {
  const auto bytes = encode_indexed_png(frame);
  write_file_bytes(path, bytes);
}

}  // namespace vosens
