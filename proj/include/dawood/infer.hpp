#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <vector>

#include "dawood/data_model.hpp"
#include "dawood/error.hpp"
#include "dawood/features.hpp"
#include "dawood/forest.hpp"
#include "dawood/image.hpp"
#include "dawood/part.hpp"

namespace dawood {

// Per-pixel part distributions over a bounding box, row-major within the box.
struct PosteriorMap {
  BoundingBox bbox;
  std::vector<double> values;  // bbox.w * bbox.h * kNumParts

  PosteriorMap() = default;
  explicit PosteriorMap(const BoundingBox& b)
      : bbox(b), values(static_cast<std::size_t>(b.w) * b.h * kNumParts, 0.0) {}

  std::size_t size() const { return static_cast<std::size_t>(bbox.w) * bbox.h; }
  double* at(std::size_t i) { return values.data() + i * kNumParts; }
  const double* at(std::size_t i) const { return values.data() + i * kNumParts; }
  // image coordinates of pixel i
  Point pixel(std::size_t i) const {
    return {bbox.x + static_cast<int>(i % bbox.w), bbox.y + static_cast<int>(i / bbox.w)};
  }
};

inline PosteriorMap posterior(const Forest& forest, const FeatureChannels& ch,
                              const BoundingBox& bbox, std::uint64_t* split_evaluations = nullptr) {
  if (forest.trees.empty()) throw DataError("forest has no trees");
  PosteriorMap pm(bbox);
  const double w = 1.0 / static_cast<double>(forest.trees.size());
  std::uint64_t evals = 0;
  for (int y = 0; y < bbox.h; ++y)
    for (int x = 0; x < bbox.w; ++x) {
      double* out = pm.at(static_cast<std::size_t>(y) * bbox.w + x);
      for (const auto& tree : forest.trees) {
        const auto& leaf = tree.nodes[tree.leaf_index(ch, bbox.x + x, bbox.y + y, &evals)];
        for (int p = 0; p < kNumParts; ++p) out[p] += w * leaf.posterior[p];
      }
    }
  if (split_evaluations) *split_evaluations += evals;
  return pm;
}

// The posterior an uninformative classifier would produce.
inline PosteriorMap uniform_posterior(const BoundingBox& bbox) {
  PosteriorMap pm(bbox);
  std::fill(pm.values.begin(), pm.values.end(), 1.0 / kNumParts);
  return pm;
}

// Multiplies each part's probability by its location prior and renormalises.
// Background gets a uniform prior over the grid.
inline PosteriorMap modulate(const PosteriorMap& pm, const LocationPrior& prior) {
  PosteriorMap out = pm;
  const double cells = static_cast<double>(prior.grid) * prior.grid;
  for (std::size_t i = 0; i < pm.size(); ++i) {
    const auto px = pm.pixel(i);
    const int cell = prior.cell_of(px.x, px.y, pm.bbox);
    double* q = out.at(i);
    double z = 0;
    for (int p = 0; p < kNumJointParts; ++p) z += (q[p] *= prior.at(p, cell));
    z += (q[kBackground] *= 1.0 / cells);
    if (z > 0)
      for (int p = 0; p < kNumParts; ++p) q[p] /= z;
  }
  return out;
}

using PartPixels = std::array<std::vector<Point>, kNumJointParts>;

inline std::size_t pixels_for_part(double area_fraction, double bbox_area, std::size_t available) {
  const auto n = std::max<double>(1.0, std::round(area_fraction * bbox_area));
  return std::min(available, static_cast<std::size_t>(n));
}

// For each part, the N_p most probable pixels, most probable first; ties
// keep row-major order.
inline PartPixels extract_pixels(const PosteriorMap& pm,
                                 const std::array<double, kNumJointParts>& area_fraction) {
  PartPixels out;
  const std::size_t n = pm.size();
  std::vector<std::uint32_t> order(n);
  for (int p = 0; p < kNumJointParts; ++p) {
    if (!(area_fraction[p] > 0)) throw DataError("part area fraction must be positive");
    const auto k = pixels_for_part(area_fraction[p], pm.bbox.area(), n);
    std::iota(order.begin(), order.end(), 0u);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::uint32_t a, std::uint32_t b) {
                        const double va = pm.at(a)[p], vb = pm.at(b)[p];
                        return va != vb ? va > vb : a < b;
                      });
    out[p].reserve(k);
    for (std::size_t j = 0; j < k; ++j) out[p].push_back(pm.pixel(order[j]));
  }
  return out;
}

// Joint estimate: centroid of the extracted pixels of each part.
struct JointEstimate {
  double x = 0;
  double y = 0;
};

inline std::array<JointEstimate, kNumJointParts> estimate_joints(const PartPixels& pixels) {
  std::array<JointEstimate, kNumJointParts> out{};
  for (int p = 0; p < kNumJointParts; ++p) {
    if (pixels[p].empty()) continue;
    for (const auto& q : pixels[p]) {
      out[p].x += q.x;
      out[p].y += q.y;
    }
    out[p].x /= static_cast<double>(pixels[p].size());
    out[p].y /= static_cast<double>(pixels[p].size());
  }
  return out;
}

// Extracted pixels painted over the image in palette colours, parts in id
// order (later parts on top), the box outline in the background colour.
inline RgbImage render_overlay(const RgbImage& image, const BoundingBox& bbox,
                               const PartPixels& pixels) {
  RgbImage out = image;
  const auto edge = kPalette[kBackground];
  for (int x = bbox.x; x < bbox.x + bbox.w; ++x) {
    set_pixel(out, x, bbox.y, edge);
    set_pixel(out, x, bbox.y + bbox.h - 1, edge);
  }
  for (int y = bbox.y; y < bbox.y + bbox.h; ++y) {
    set_pixel(out, bbox.x, y, edge);
    set_pixel(out, bbox.x + bbox.w - 1, y, edge);
  }
  for (int p = 0; p < kNumJointParts; ++p)
    for (const auto& q : pixels[p]) set_pixel(out, q.x, q.y, kPalette[p]);
  return out;
}

// u32 width, u32 height, u32 parts, then one float32 plane per part; all
// little-endian, covering the bounding box.
inline void write_posterior_dump(const std::filesystem::path& path, const PosteriorMap& pm) {
  io::Writer w;
  w.u32(static_cast<std::uint32_t>(pm.bbox.w));
  w.u32(static_cast<std::uint32_t>(pm.bbox.h));
  w.u32(kNumParts);
  for (int p = 0; p < kNumParts; ++p)
    for (std::size_t i = 0; i < pm.size(); ++i) {
      const auto f = static_cast<float>(pm.at(i)[p]);
      std::uint32_t bits;
      std::memcpy(&bits, &f, sizeof bits);
      w.u32(bits);
    }
  std::ofstream os(path, std::ios::binary);
  os.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!os) throw DataError("cannot write '" + path.string() + "'");
}

}  // namespace dawood
