#pragma once

#include <png.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "rlf/error.hpp"
#include "rlf/image.hpp"

namespace rlf {

namespace detail {

inline std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for '" + path.string() + "'");
  return bytes;
}

inline double rec601(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

class NetpbmReader {
 public:
  explicit NetpbmReader(const std::vector<unsigned char>& bytes) : bytes_(bytes) {}

  GrayImage read() {
    if (bytes_.size() < 2 || bytes_[0] != 'P') throw FormatError("not a netpbm file");
    const char kind = static_cast<char>(bytes_[1]);
    if (kind != '2' && kind != '3' && kind != '5' && kind != '6') {
      throw FormatError(std::string("unsupported netpbm variant P") + kind);
    }
    pos_ = 2;
    const long w = next_int();
    const long h = next_int();
    const long maxval = next_int();
    if (w <= 0 || h <= 0) throw InvalidInput("zero-dimension image");
    if (maxval <= 0 || maxval > 65535) throw FormatError("invalid netpbm maxval");
    const bool color = kind == '3' || kind == '6';
    const bool binary = kind == '5' || kind == '6';
    const int channels = color ? 3 : 1;
    const std::size_t count = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    std::vector<double> data(count);
    const double scale = 1.0 / static_cast<double>(maxval);

    if (binary) {
      ++pos_;  // single whitespace after maxval
      const std::size_t sample_bytes = maxval > 255 ? 2 : 1;
      if (bytes_.size() < pos_ + count * channels * sample_bytes) throw FormatError("truncated netpbm raster");
      auto sample = [&](std::size_t i) -> double {
        if (sample_bytes == 1) return bytes_[pos_ + i];
        return static_cast<double>((bytes_[pos_ + 2 * i] << 8) | bytes_[pos_ + 2 * i + 1]);
      };
      for (std::size_t i = 0; i < count; ++i) {
        data[i] = color ? rec601(sample(3 * i), sample(3 * i + 1), sample(3 * i + 2)) * scale : sample(i) * scale;
      }
    } else {
      for (std::size_t i = 0; i < count; ++i) {
        if (color) {
          const double r = next_int(), g = next_int(), b = next_int();
          data[i] = rec601(r, g, b) * scale;
        } else {
          data[i] = static_cast<double>(next_int()) * scale;
        }
      }
    }
    for (double& v : data) v = std::clamp(v, 0.0, 1.0);
    return GrayImage(static_cast<int>(w), static_cast<int>(h), std::move(data));
  }

 private:
  void skip_space() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  long next_int() {
    skip_space();
    if (pos_ >= bytes_.size() || !std::isdigit(bytes_[pos_])) throw FormatError("malformed netpbm header or raster");
    long v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > 1'000'000'000L) throw FormatError("netpbm integer out of range");
      ++pos_;
    }
    return v;
  }

  const std::vector<unsigned char>& bytes_;
  std::size_t pos_ = 0;
};

struct PngReadState {
  const std::vector<unsigned char>* bytes = nullptr;
  std::size_t pos = 0;
};

inline void png_read_from_memory(png_structp png, png_bytep out, png_size_t n) {
  auto* st = static_cast<PngReadState*>(png_get_io_ptr(png));
  if (st->pos + n > st->bytes->size()) png_error(png, "truncated png stream");
  std::copy_n(st->bytes->data() + st->pos, n, out);
  st->pos += n;
}

// Decodes into `samples` (caller-owned so nothing with a destructor lives
// across setjmp). Returns an empty string on success, else a diagnostic.
inline std::string decode_png(const std::vector<unsigned char>& bytes, std::vector<std::uint16_t>& samples,
                              png_uint_32& width, png_uint_32& height, int& channels, int& depth) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (png == nullptr) return "png_create_read_struct failed";
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    return "png_create_info_struct failed";
  }
  PngReadState state{&bytes, 0};
  std::vector<png_bytep> rows;
  std::vector<unsigned char> raw;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return "corrupt png stream";
  }
  png_set_read_fn(png, &state, png_read_from_memory);
  png_read_info(png, info);
  width = png_get_image_width(png, info);
  height = png_get_image_height(png, info);
  const int color_type = png_get_color_type(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  channels = png_get_channels(png, info);
  depth = png_get_bit_depth(png, info);
  const png_size_t rowbytes = png_get_rowbytes(png, info);
  raw.resize(rowbytes * height);
  rows.resize(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = raw.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  const std::size_t count = static_cast<std::size_t>(width) * height * channels;
  samples.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    samples[i] = depth == 16 ? static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]) : raw[i];
  }
  return {};
}

inline GrayImage read_png(const std::vector<unsigned char>& bytes) {
  std::vector<std::uint16_t> samples;
  png_uint_32 w = 0, h = 0;
  int channels = 0;
  int depth = 8;
  const std::string error = decode_png(bytes, samples, w, h, channels, depth);
  if (!error.empty()) throw FormatError(error);
  if (w == 0 || h == 0) throw InvalidInput("zero-dimension image");
  const double scale = depth == 16 ? 1.0 / 65535.0 : 1.0 / 255.0;
  const std::size_t count = static_cast<std::size_t>(w) * h;
  std::vector<double> data(count);
  for (std::size_t i = 0; i < count; ++i) {
    data[i] = channels >= 3 ? rec601(samples[channels * i], samples[channels * i + 1], samples[channels * i + 2]) * scale
                            : samples[channels * i] * scale;
    data[i] = std::clamp(data[i], 0.0, 1.0);
  }
  return GrayImage(static_cast<int>(w), static_cast<int>(h), std::move(data));
}

inline std::uint8_t quantize8(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

inline bool has_png_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png";
}

}  // namespace detail

/// Loads PGM/PPM (P2, P3, P5, P6; 8 or 16 bit) or PNG as luminance in [0,1].
/// Color is reduced with Rec. 601 weights.
inline GrayImage load_gray(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  static constexpr std::array<unsigned char, 8> kPngMagic{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= 8 && std::equal(kPngMagic.begin(), kPngMagic.end(), bytes.begin())) {
    return detail::read_png(bytes);
  }
  if (bytes.size() >= 2 && bytes[0] == 'P') return detail::NetpbmReader(bytes).read();
  throw FormatError("unsupported image format: '" + path.string() + "'");
}

/// Writes an 8-bit grayscale file; PNG when the extension is .png, binary PGM otherwise.
/// Values are clamped to [0,1] and rounded.
inline void save_gray(const GrayImage& img, const std::filesystem::path& path) {
  if (img.empty()) throw InvalidInput("cannot save an empty image");
  std::vector<std::uint8_t> raster(img.size());
  std::transform(img.pixels().begin(), img.pixels().end(), raster.begin(), detail::quantize8);

  if (detail::has_png_extension(path)) {
    std::unique_ptr<std::FILE, int (*)(std::FILE*)> fp(std::fopen(path.string().c_str(), "wb"), &std::fclose);
    if (!fp) throw IoError("cannot write '" + path.string() + "'");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (png == nullptr || info == nullptr) {
      png_destroy_write_struct(&png, nullptr);
      throw IoError("png writer initialization failed");
    }
    std::vector<png_bytep> rows(static_cast<std::size_t>(img.height()));
    for (int y = 0; y < img.height(); ++y) rows[y] = raster.data() + static_cast<std::size_t>(y) * img.width();
    if (setjmp(png_jmpbuf(png))) {
      png_destroy_write_struct(&png, &info);
      throw IoError("png encoding failed for '" + path.string() + "'");
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()), static_cast<png_uint_32>(img.height()), 8,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return;
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "P5\n" << img.width() << ' ' << img.height() << "\n255\n";
  out.write(reinterpret_cast<const char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

struct OverlayRegion {
  BBox box;
  double score = 0.0;
};

struct OverlayResult {
  GrayImage image;
  std::vector<std::string> warnings;
};

namespace detail {

// 3x5 digit glyphs, one row per 3-bit mask, top row first.
inline constexpr std::array<std::array<std::uint8_t, 5>, 10> kDigitGlyphs{{
    {7, 5, 5, 5, 7}, {2, 6, 2, 2, 7}, {7, 1, 7, 4, 7}, {7, 1, 7, 1, 7}, {5, 5, 7, 1, 1},
    {7, 4, 7, 1, 7}, {7, 4, 7, 5, 7}, {7, 1, 1, 1, 1}, {7, 5, 7, 5, 7}, {7, 5, 7, 1, 7},
}};

inline double ink_for(double v) { return v > 0.5 ? 0.0 : 1.0; }

}  // namespace detail

/// Burns rectangle outlines and 1-based rank labels into a copy of `img`.
/// Labels go directly above the rectangle and are omitted when there is no room.
inline OverlayResult render_overlay(const GrayImage& img, const std::vector<OverlayRegion>& regions) {
  OverlayResult result{img, {}};
  GrayImage& out = result.image;
  auto mark = [&](int x, int y) {
    if (out.contains(x, y)) out(x, y) = detail::ink_for(img(x, y));
  };
  for (std::size_t rank = 0; rank < regions.size(); ++rank) {
    const BBox& b = regions[rank].box;
    if (!b.valid() || b.right() <= 0 || b.bottom() <= 0 || b.x >= img.width() || b.y >= img.height()) {
      result.warnings.push_back("region " + std::to_string(rank + 1) + " lies outside the image; skipped");
      continue;
    }
    for (int x = b.x; x < b.right(); ++x) {
      mark(x, b.y);
      mark(x, b.bottom() - 1);
    }
    for (int y = b.y; y < b.bottom(); ++y) {
      mark(b.x, y);
      mark(b.right() - 1, y);
    }
    const std::string label = std::to_string(rank + 1);
    const int label_w = static_cast<int>(label.size()) * 4 - 1;
    const int ly = b.y - 6;
    if (ly < 0 || b.x < 0 || b.x + label_w > img.width()) continue;
    for (std::size_t c = 0; c < label.size(); ++c) {
      const auto& glyph = detail::kDigitGlyphs[label[c] - '0'];
      for (int gy = 0; gy < 5; ++gy) {
        for (int gx = 0; gx < 3; ++gx) {
          if (glyph[gy] & (4 >> gx)) mark(b.x + static_cast<int>(c) * 4 + gx, ly + gy);
        }
      }
    }
  }
  return result;
}

}  // namespace rlf
