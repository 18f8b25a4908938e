#pragma once

#include <png.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cop/core.hpp"

namespace cop {

// 8-bit rasters. Decode maps v / 255; encode rounds half-to-even and is
// locked by round-trip tests.

inline double byte_to_unit(unsigned char b) { return b / 255.0; }

inline unsigned char unit_to_byte(double v) {
  v = std::clamp(v, 0.0, 1.0) * 255.0;
  return static_cast<unsigned char>(std::nearbyint(v));
}

// ------------------------------------------------------------------- PPM

namespace detail {

inline int ppm_token(std::istream& is) {
  // skip whitespace and '#' comments, then read one unsigned integer
  int c;
  while ((c = is.get()) != EOF) {
    if (c == '#') {
      while ((c = is.get()) != EOF && c != '\n') {
      }
    } else if (!std::isspace(c)) {
      break;
    }
  }
  if (c == EOF) throw std::runtime_error("ppm: truncated header");
  int value = 0;
  bool any = false;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    any = true;
    c = is.get();
  }
  if (!any) throw std::runtime_error("ppm: malformed header");
  return value;
}

}  // namespace detail

inline Image read_ppm(std::istream& is) {
  char m0 = static_cast<char>(is.get());
  char m1 = static_cast<char>(is.get());
  if (m0 != 'P' || m1 != '6') throw std::runtime_error("ppm: not P6");
  int w = detail::ppm_token(is);
  int h = detail::ppm_token(is);
  int maxval = detail::ppm_token(is);
  if (maxval != 255) throw std::runtime_error("ppm: only maxval 255");
  // the token reader consumed exactly one whitespace byte after maxval
  Image img(h, w);
  std::vector<unsigned char> row(static_cast<size_t>(w) * 3);
  for (int y = 0; y < h; ++y) {
    if (!is.read(reinterpret_cast<char*>(row.data()), row.size()))
      throw std::runtime_error("ppm: truncated pixel data");
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(y, x, c) = byte_to_unit(row[x * 3 + c]);
  }
  return img;
}

inline void write_ppm(const Image& img, std::ostream& os) {
  os << "P6\n" << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> row(static_cast<size_t>(img.width) * 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        row[x * 3 + c] = unit_to_byte(img.at(y, x, c));
    os.write(reinterpret_cast<const char*>(row.data()), row.size());
  }
}

// ------------------------------------------------------------------- PNG

inline Image read_png(const std::string& path) {
  std::FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw std::runtime_error("png: cannot open " + path);
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw std::runtime_error("png: init failed");
  }
  std::vector<png_bytep> rows;
  std::vector<unsigned char> buffer;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw std::runtime_error("png: decode failed: " + path);
  }
  png_init_io(png, fp);
  png_read_info(png, info);

  // normalize everything to 8-bit RGB
  png_byte color = png_get_color_type(png, info);
  png_byte depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS))
    png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const size_t stride = png_get_rowbytes(png, info);
  buffer.resize(stride * h);
  rows.resize(h);
  for (int y = 0; y < h; ++y) rows[y] = buffer.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);

  Image img(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(y, x, c) = byte_to_unit(buffer[y * stride + x * 3 + c]);
  return img;
}

inline void write_png(const Image& img, const std::string& path) {
  std::FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw std::runtime_error("png: cannot open for write: " + path);
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw std::runtime_error("png: init failed");
  }
  std::vector<unsigned char> buffer;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw std::runtime_error("png: encode failed: " + path);
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  buffer.resize(static_cast<size_t>(img.width) * img.height * 3);
  rows.resize(img.height);
  for (int y = 0; y < img.height; ++y) {
    rows[y] = buffer.data() + static_cast<size_t>(y) * img.width * 3;
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        rows[y][x * 3 + c] = unit_to_byte(img.at(y, x, c));
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

// -------------------------------------------------------------- dispatch

inline bool ends_with_nocase(const std::string& s, const std::string& suffix) {
  if (s.size() < suffix.size()) return false;
  for (size_t i = 0; i < suffix.size(); ++i) {
    char a = static_cast<char>(std::tolower(s[s.size() - suffix.size() + i]));
    if (a != suffix[i]) return false;
  }
  return true;
}

inline bool raster_extension(const std::string& path) {
  return ends_with_nocase(path, ".ppm") || ends_with_nocase(path, ".png");
}

inline Image read_image(const std::string& path) {
  if (ends_with_nocase(path, ".ppm")) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    return read_ppm(is);
  }
  if (ends_with_nocase(path, ".png")) return read_png(path);
  throw std::runtime_error("unsupported raster type: " + path);
}

inline void write_image(const Image& img, const std::string& path) {
  if (ends_with_nocase(path, ".ppm")) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for write: " + path);
    write_ppm(img, os);
    if (!os) throw std::runtime_error("write failed: " + path);
    return;
  }
  if (ends_with_nocase(path, ".png")) {
    write_png(img, path);
    return;
  }
  throw std::runtime_error("unsupported raster type: " + path);
}

}  // namespace cop
