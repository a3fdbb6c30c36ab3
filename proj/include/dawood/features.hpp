#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "dawood/data_model.hpp"
#include "dawood/error.hpp"
#include "dawood/image.hpp"

namespace dawood {

inline constexpr double kRatioEpsilon = 1e-6;

// Rectangle corners relative to the classified pixel, in units of sqrt(bbox area).
struct OffsetRect {
  double ux = 0, uy = 0;  // upper-left
  double vx = 0, vy = 0;  // lower-right
  friend bool operator==(const OffsetRect&, const OffsetRect&) = default;
};

// Half-open pixel rectangle [x0, x1) x [y0, y1).
struct PixelRect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  int width() const { return std::max(0, x1 - x0); }
  int height() const { return std::max(0, y1 - y0); }
  bool empty() const { return x1 <= x0 || y1 <= y0; }
  friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

// Two HOG bins; the threshold is attached separately.
struct FeatureShape {
  OffsetRect rect1;
  int theta1 = 0;
  OffsetRect rect2;
  int theta2 = 0;
  friend bool operator==(const FeatureShape&, const FeatureShape&) = default;
};

struct WeakClassifier {
  FeatureShape shape;
  double threshold = 1.0;
  friend bool operator==(const WeakClassifier&, const WeakClassifier&) = default;
};

enum class Side : std::uint8_t { left = 0, right = 1 };

// Offset in sqrt(area) units -> whole pixels (round half up).
inline int snap_offset(double v, double sqrt_area) {
  return static_cast<int>(std::floor(v * sqrt_area + 0.5));
}

// A FeatureShape resolved to pixel offsets for one image scale.
struct ScaledShape {
  PixelRect rect1;
  PixelRect rect2;
  int theta1 = 0;
  int theta2 = 0;
};

inline PixelRect scale_rect(const OffsetRect& r, double sqrt_area) {
  return {snap_offset(r.ux, sqrt_area), snap_offset(r.uy, sqrt_area),
          snap_offset(r.vx, sqrt_area), snap_offset(r.vy, sqrt_area)};
}

inline ScaledShape scale_shape(const FeatureShape& s, double sqrt_area) {
  return {scale_rect(s.rect1, sqrt_area), scale_rect(s.rect2, sqrt_area), s.theta1, s.theta2};
}

inline PixelRect translate(const PixelRect& r, int px, int py) {
  return {r.x0 + px, r.y0 + py, r.x1 + px, r.y1 + py};
}

inline double luminance(const std::uint8_t* rgb) {
  return (0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2]) / 255.0;
}

// Soft orientation-binned gradient magnitude, one plane per bin (plane-major).
// Gradients are centred differences of luminance with replicated borders;
// orientation is folded to [0, pi) and split linearly between the two
// nearest of `bins` evenly spaced centres (k * pi / bins), wrapping around.
inline std::vector<double> orientation_planes(const RgbImage& image, int bins) {
  if (bins < 2) throw UsageError("orientation bin count must be >= 2");
  if (image.width < 3 || image.height < 3)
    throw DataError("image must be at least 3x3 for gradient features");
  const int w = image.width, h = image.height;
  std::vector<double> lum(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) lum[static_cast<std::size_t>(y) * w + x] = luminance(image.at(x, y));

  const std::size_t plane = static_cast<std::size_t>(w) * h;
  std::vector<double> out(plane * bins, 0.0);
  const double per_bin = bins / std::numbers::pi;
  for (int y = 0; y < h; ++y) {
    const int yu = std::max(0, y - 1), yd = std::min(h - 1, y + 1);
    for (int x = 0; x < w; ++x) {
      const int xl = std::max(0, x - 1), xr = std::min(w - 1, x + 1);
      const double gx = 0.5 * (lum[static_cast<std::size_t>(y) * w + xr] -
                               lum[static_cast<std::size_t>(y) * w + xl]);
      const double gy = 0.5 * (lum[static_cast<std::size_t>(yd) * w + x] -
                               lum[static_cast<std::size_t>(yu) * w + x]);
      const double mag = std::hypot(gx, gy);
      if (mag == 0.0) continue;
      double angle = std::atan2(gy, gx);
      if (angle < 0) angle += std::numbers::pi;
      if (angle >= std::numbers::pi) angle -= std::numbers::pi;
      double pos = angle * per_bin;
      if (pos >= bins) pos -= bins;
      const int k0 = static_cast<int>(pos);
      const double frac = pos - k0;
      const int k1 = (k0 + 1) % bins;
      const std::size_t idx = static_cast<std::size_t>(y) * w + x;
      out[k0 * plane + idx] += (1.0 - frac) * mag;
      out[k1 * plane + idx] += frac * mag;
    }
  }
  return out;
}

// Per-image summed-area tables of the orientation planes.
class FeatureChannels {
 public:
  FeatureChannels() = default;

  FeatureChannels(const RgbImage& image, const BoundingBox& bbox, int bins)
      : width_(image.width), height_(image.height), bins_(bins),
        sqrt_area_(std::sqrt(bbox.area())) {
    if (bbox.w <= 0 || bbox.h <= 0) throw DataError("empty bounding box");
    const auto planes = orientation_planes(image, bins);
    const std::size_t stride = static_cast<std::size_t>(width_) + 1;
    const std::size_t table = stride * (static_cast<std::size_t>(height_) + 1);
    const std::size_t plane = static_cast<std::size_t>(width_) * height_;
    integrals_.assign(table * bins, 0.0);
    for (int k = 0; k < bins; ++k) {
      double* sat = integrals_.data() + k * table;
      const double* src = planes.data() + k * plane;
      for (int y = 0; y < height_; ++y) {
        double row = 0.0;
        for (int x = 0; x < width_; ++x) {
          row += src[static_cast<std::size_t>(y) * width_ + x];
          sat[(y + 1) * stride + x + 1] = sat[y * stride + x + 1] + row;
        }
      }
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int bins() const { return bins_; }
  double sqrt_area() const { return sqrt_area_; }
  bool empty() const { return integrals_.empty(); }

  // Offset rectangle anchored at (px, py), scaled and rounded to the pixel grid.
  // Not clipped.
  PixelRect pixel_rect(int px, int py, const OffsetRect& r) const {
    return translate(scale_rect(r, sqrt_area_), px, py);
  }

  // Channel sum over the rectangle after clipping to the image.
  double rect_sum(int theta, PixelRect r) const {
    r.x0 = std::clamp(r.x0, 0, width_);
    r.x1 = std::clamp(r.x1, 0, width_);
    r.y0 = std::clamp(r.y0, 0, height_);
    r.y1 = std::clamp(r.y1, 0, height_);
    if (r.empty()) return 0.0;
    const std::size_t stride = static_cast<std::size_t>(width_) + 1;
    const double* sat =
        integrals_.data() + static_cast<std::size_t>(theta) * stride * (height_ + 1);
    const double s = sat[r.y1 * stride + r.x1] - sat[r.y0 * stride + r.x1] -
                     sat[r.y1 * stride + r.x0] + sat[r.y0 * stride + r.x0];
    return std::max(0.0, s);
  }

 private:
  int width_ = 0;
  int height_ = 0;
  int bins_ = 0;
  double sqrt_area_ = 0;
  std::vector<double> integrals_;
};

inline FeatureChannels compute_channels(const RgbImage& image, const BoundingBox& bbox, int bins) {
  return FeatureChannels(image, bbox, bins);
}

// Accumulated soft-binned gradient magnitude of bin `theta` over the rectangle.
inline double bin_response(const FeatureChannels& ch, int px, int py, const OffsetRect& rect,
                           int theta) {
  return ch.rect_sum(theta, ch.pixel_rect(px, py, rect));
}

inline double ratio_at(const FeatureChannels& ch, int px, int py, const ScaledShape& s) {
  const double r1 = ch.rect_sum(s.theta1, translate(s.rect1, px, py));
  const double r2 = ch.rect_sum(s.theta2, translate(s.rect2, px, py));
  return r1 / (r2 + kRatioEpsilon);
}

inline double response_ratio(const FeatureShape& s, const FeatureChannels& ch, int px, int py) {
  return ratio_at(ch, px, py, scale_shape(s, ch.sqrt_area()));
}

inline Side route(double ratio, double threshold) {
  return ratio > threshold ? Side::right : Side::left;
}

inline Side evaluate(const WeakClassifier& wc, const FeatureChannels& ch, int px, int py) {
  return route(response_ratio(wc.shape, ch, px, py), wc.threshold);
}

}  // namespace dawood
