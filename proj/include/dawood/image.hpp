#pragma once

#include <png.h>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dawood/error.hpp"
#include "dawood/part.hpp"

namespace dawood {

// Row-major interleaved 8-bit raster.
template <int Channels>
struct Raster {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  Raster() = default;
  Raster(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h * Channels, fill) {}

  std::uint8_t* at(int x, int y) {
    return data.data() + (static_cast<std::size_t>(y) * width + x) * Channels;
  }
  const std::uint8_t* at(int x, int y) const {
    return data.data() + (static_cast<std::size_t>(y) * width + x) * Channels;
  }
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
};

using RgbImage = Raster<3>;
using GrayImage = Raster<1>;

inline void set_pixel(RgbImage& img, int x, int y, Rgb c) {
  auto* p = img.at(x, y);
  p[0] = c.r;
  p[1] = c.g;
  p[2] = c.b;
}

struct ImageSize {
  int width = 0;
  int height = 0;
};

namespace detail {

template <int Channels>
Raster<Channels> read_png(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str()))
    throw DataError("cannot read PNG '" + path.string() + "': " + img.message);
  img.format = Channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  Raster<Channels> out(static_cast<int>(img.width), static_cast<int>(img.height));
  if (!png_image_finish_read(&img, nullptr, out.data.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw DataError("cannot decode PNG '" + path.string() + "': " + msg);
  }
  return out;
}

template <int Channels>
void write_png(const std::filesystem::path& path, const Raster<Channels>& raster) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(raster.width);
  img.height = static_cast<png_uint_32>(raster.height);
  img.format = Channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&img, path.string().c_str(), 0, raster.data.data(), 0,
                               nullptr))
    throw DataError("cannot write PNG '" + path.string() + "': " + img.message);
}

}  // namespace detail

inline RgbImage read_rgb_png(const std::filesystem::path& path) {
  return detail::read_png<3>(path);
}
inline GrayImage read_gray_png(const std::filesystem::path& path) {
  return detail::read_png<1>(path);
}
inline void write_png(const std::filesystem::path& path, const RgbImage& img) {
  detail::write_png<3>(path, img);
}
inline void write_png(const std::filesystem::path& path, const GrayImage& img) {
  detail::write_png<1>(path, img);
}

// Reads only the PNG header.
inline ImageSize read_png_size(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str()))
    throw DataError("cannot read PNG '" + path.string() + "': " + img.message);
  ImageSize size{static_cast<int>(img.width), static_cast<int>(img.height)};
  png_image_free(&img);
  return size;
}

}  // namespace dawood
