#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "dawood/error.hpp"
#include "dawood/image.hpp"
#include "dawood/part.hpp"

namespace dawood {

struct BoundingBox {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  double area() const { return static_cast<double>(w) * h; }
  bool contains(int px, int py) const {
    return px >= x && py >= y && px < x + w && py < y + h;
  }
  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

// Intersects the box with [0,width) x [0,height).
inline BoundingBox clamp_to(const BoundingBox& b, int width, int height) {
  const int x0 = std::clamp(b.x, 0, width);
  const int y0 = std::clamp(b.y, 0, height);
  const int x1 = std::clamp(b.x + b.w, 0, width);
  const int y1 = std::clamp(b.y + b.h, 0, height);
  return {x0, y0, x1 - x0, y1 - y0};
}

struct Point {
  int x = 0;
  int y = 0;
  friend bool operator==(const Point&, const Point&) = default;
};

enum class Domain : std::uint8_t { source, target, test };

inline const char* domain_name(Domain d) {
  switch (d) {
    case Domain::source: return "source";
    case Domain::target: return "target";
    case Domain::test: return "test";
  }
  return "?";
}

// Index of the G x G grid cell of the box containing (px, py). Pixels on the
// far edge (px == x + w or py == y + h) fall into the last column/row.
inline int spatial_bin(int px, int py, const BoundingBox& bbox, int grid) {
  if (grid < 1) throw UsageError("spatial grid size must be >= 1");
  if (bbox.w <= 0 || bbox.h <= 0) throw DataError("empty bounding box");
  const int dx = px - bbox.x;
  const int dy = py - bbox.y;
  if (dx < 0 || dy < 0 || dx > bbox.w || dy > bbox.h)
    throw DataError("pixel (" + std::to_string(px) + "," + std::to_string(py) +
                    ") outside bounding box");
  const int col = std::min(grid - 1, static_cast<int>((std::int64_t{grid} * dx) / bbox.w));
  const int row = std::min(grid - 1, static_cast<int>((std::int64_t{grid} * dy) / bbox.h));
  return col + grid * row;
}

using JointMap = std::array<std::vector<Point>, kNumJointParts>;

struct ManifestEntry {
  std::filesystem::path image;             // resolved
  std::optional<std::filesystem::path> labels;
  BoundingBox bbox;                        // clamped to the image
  Domain domain = Domain::source;
  std::optional<JointMap> joints;
  int width = 0;
  int height = 0;
};

struct DatasetManifest {
  std::filesystem::path base_dir;
  std::vector<ManifestEntry> entries;

  std::size_t count(Domain d) const {
    return static_cast<std::size_t>(std::count_if(
        entries.begin(), entries.end(), [d](const auto& e) { return e.domain == d; }));
  }
};

namespace detail {

inline Domain parse_domain(const std::string& s, std::size_t line) {
  if (s == "source") return Domain::source;
  if (s == "target") return Domain::target;
  if (s == "test") return Domain::test;
  throw DataError("manifest line " + std::to_string(line) + ": unknown domain '" + s + "'");
}

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

inline ManifestEntry parse_entry(const nlohmann::json& j, const std::filesystem::path& base,
                                 std::size_t line, bool check_files) {
  auto fail = [line](const std::string& msg) -> DataError {
    return DataError("manifest line " + std::to_string(line) + ": " + msg);
  };
  if (!j.is_object()) throw fail("expected a JSON object");
  ManifestEntry e;
  if (!j.contains("image") || !j["image"].is_string()) throw fail("missing \"image\"");
  e.image = resolve(base, j["image"].get<std::string>());
  if (j.contains("labels") && !j["labels"].is_null()) {
    if (!j["labels"].is_string()) throw fail("\"labels\" must be a string or null");
    e.labels = resolve(base, j["labels"].get<std::string>());
  }
  if (!j.contains("domain") || !j["domain"].is_string()) throw fail("missing \"domain\"");
  e.domain = parse_domain(j["domain"].get<std::string>(), line);
  const auto& b = j.value("bbox", nlohmann::json());
  if (!b.is_array() || b.size() != 4) throw fail("\"bbox\" must be [x,y,w,h]");
  for (const auto& v : b)
    if (!v.is_number()) throw fail("\"bbox\" values must be numbers");
  e.bbox = {b[0].get<int>(), b[1].get<int>(), b[2].get<int>(), b[3].get<int>()};
  if (e.bbox.w <= 0 || e.bbox.h <= 0) throw fail("bbox width and height must be positive");
  if (j.contains("joints") && !j["joints"].is_null()) {
    if (!j["joints"].is_object()) throw fail("\"joints\" must be an object or null");
    JointMap joints;
    for (const auto& [name, pts] : j["joints"].items()) {
      auto id = part_from_name(name);
      if (!id || *id >= kNumJointParts) throw fail("unknown joint part '" + name + "'");
      if (!pts.is_array()) throw fail("joint list for '" + name + "' must be an array");
      for (const auto& pt : pts) {
        if (!pt.is_array() || pt.size() != 2 || !pt[0].is_number() || !pt[1].is_number())
          throw fail("joint coordinates must be [x,y]");
        joints[*id].push_back({pt[0].get<int>(), pt[1].get<int>()});
      }
    }
    e.joints = std::move(joints);
  }
  if (e.domain == Domain::source && !e.labels)
    throw fail("source entries require a label map");
  if (check_files) {
    const auto size = read_png_size(e.image);
    e.width = size.width;
    e.height = size.height;
    if (e.labels) {
      const auto lsize = read_png_size(*e.labels);
      if (lsize.width != size.width || lsize.height != size.height)
        throw fail("label map " + std::to_string(lsize.width) + "x" +
                   std::to_string(lsize.height) + " does not match image " +
                   std::to_string(size.width) + "x" + std::to_string(size.height));
    }
    e.bbox = clamp_to(e.bbox, size.width, size.height);
    if (e.bbox.w <= 0 || e.bbox.h <= 0) throw fail("bbox lies outside the image");
  }
  return e;
}

}  // namespace detail

// Parses a JSON-lines manifest. Blank lines are skipped; relative paths are
// resolved against the manifest's directory. Image headers are read to clamp
// boxes and to check label-map dimensions.
inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest '" + path.string() + "'");
  DatasetManifest m;
  m.base_dir = path.parent_path();
  std::string text;
  for (std::size_t line = 1; std::getline(in, text); ++line) {
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError("manifest line " + std::to_string(line) + ": " + e.what());
    }
    try {
      m.entries.push_back(detail::parse_entry(j, m.base_dir, line, true));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("manifest line " + std::to_string(line) + ": " + e.what());
    }
  }
  return m;
}

inline nlohmann::json to_json(const ManifestEntry& e, const std::filesystem::path& base) {
  auto rel = [&](const std::filesystem::path& p) {
    return p.lexically_relative(base).generic_string();
  };
  nlohmann::json j;
  j["image"] = rel(e.image);
  j["labels"] = e.labels ? nlohmann::json(rel(*e.labels)) : nlohmann::json(nullptr);
  j["bbox"] = {e.bbox.x, e.bbox.y, e.bbox.w, e.bbox.h};
  j["domain"] = domain_name(e.domain);
  if (e.joints) {
    nlohmann::json joints = nlohmann::json::object();
    for (int p = 0; p < kNumJointParts; ++p) {
      nlohmann::json pts = nlohmann::json::array();
      for (const auto& pt : (*e.joints)[p]) pts.push_back({pt.x, pt.y});
      joints[std::string(part_name(p))] = std::move(pts);
    }
    j["joints"] = std::move(joints);
  } else {
    j["joints"] = nullptr;
  }
  return j;
}

inline void save_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write manifest '" + path.string() + "'");
  const auto base = path.parent_path();
  for (const auto& e : m.entries) out << to_json(e, base).dump() << '\n';
  if (!out) throw DataError("failed writing manifest '" + path.string() + "'");
}

inline constexpr std::uint8_t kNoLabel = 0xff;

struct PixelSample {
  std::uint32_t image = 0;  // index into DatasetManifest::entries
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  std::uint8_t label = kNoLabel;
  std::uint16_t bin = 0;

  bool labelled() const { return label != kNoLabel; }
};

// Loads a label map and checks every value is a valid part id.
inline GrayImage load_label_map(const ManifestEntry& e) {
  if (!e.labels) throw DataError("entry '" + e.image.string() + "' has no label map");
  auto map = read_gray_png(*e.labels);
  for (auto v : map.data)
    if (v >= kNumParts)
      throw DataError("label map '" + e.labels->string() + "' contains value " +
                      std::to_string(v));
  return map;
}

// Visits every stride-th in-box pixel (in both axes) of one entry in
// row-major order. Source pixels carry their label; others do not.
template <typename Fn>
void for_each_entry_pixel(const ManifestEntry& e, std::uint32_t index, int stride, int grid,
                          const GrayImage* labels, Fn&& fn) {
  const auto& b = e.bbox;
  for (int y = b.y; y < b.y + b.h; y += stride) {
    for (int x = b.x; x < b.x + b.w; x += stride) {
      PixelSample s;
      s.image = index;
      s.x = static_cast<std::uint16_t>(x);
      s.y = static_cast<std::uint16_t>(y);
      s.bin = static_cast<std::uint16_t>(spatial_bin(x, y, b, grid));
      if (labels) s.label = *labels->at(x, y);
      fn(s);
    }
  }
}

// Streams the pixel samples of one domain, entry order then row-major.
template <typename Fn>
void iter_pixels(const DatasetManifest& m, Domain domain, int stride, int grid, Fn&& fn) {
  if (stride < 1) throw UsageError("pixel stride must be >= 1");
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    const auto& e = m.entries[i];
    if (e.domain != domain) continue;
    std::optional<GrayImage> labels;
    if (domain == Domain::source) labels = load_label_map(e);
    for_each_entry_pixel(e, static_cast<std::uint32_t>(i), stride, grid,
                         labels ? &*labels : nullptr, fn);
  }
}

inline std::vector<PixelSample> collect_pixels(const DatasetManifest& m, Domain domain,
                                               int stride, int grid) {
  std::vector<PixelSample> out;
  iter_pixels(m, domain, stride, grid, [&](const PixelSample& s) { out.push_back(s); });
  return out;
}

}  // namespace dawood
