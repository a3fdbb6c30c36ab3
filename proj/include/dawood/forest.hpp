#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dawood/config.hpp"
#include "dawood/data_model.hpp"
#include "dawood/error.hpp"
#include "dawood/features.hpp"
#include "dawood/part.hpp"

namespace dawood {

using Posterior = std::array<double, kNumParts>;

struct TreeNode {
  bool leaf = true;
  // split
  WeakClassifier split;
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  // leaf
  Posterior posterior{};
  std::uint32_t depth = 0;

  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

// Nodes in breadth-first order; node 0 is the root.
struct Tree {
  std::vector<TreeNode> nodes;

  template <typename Counter = std::nullptr_t>
  std::uint32_t leaf_index(const FeatureChannels& ch, int px, int py,
                           Counter* split_evaluations = nullptr) const {
    std::uint32_t n = 0;
    while (!nodes[n].leaf) {
      if constexpr (!std::is_same_v<Counter, std::nullptr_t>) ++*split_evaluations;
      n = evaluate(nodes[n].split, ch, px, py) == Side::left ? nodes[n].left : nodes[n].right;
    }
    return n;
  }

  int max_depth() const {
    int d = 0;
    for (const auto& n : nodes)
      if (n.leaf) d = std::max(d, static_cast<int>(n.depth));
    return d;
  }
  friend bool operator==(const Tree&, const Tree&) = default;
};

// Per-part distribution over a P x P grid of normalised box coordinates.
struct LocationPrior {
  int grid = 0;
  std::array<std::vector<double>, kNumJointParts> cells;

  double at(int part, int cell) const { return cells[part][cell]; }
  int cell_of(int px, int py, const BoundingBox& bbox) const {
    return spatial_bin(px, py, bbox, grid);
  }
  friend bool operator==(const LocationPrior&, const LocationPrior&) = default;
};

struct Forest {
  RunConfig config;
  std::vector<Tree> trees;
  std::array<double, kNumJointParts> part_area_fraction{};
  LocationPrior prior;

  friend bool operator==(const Forest& a, const Forest& b) {
    return a.config.to_text() == b.config.to_text() && a.trees == b.trees &&
           a.part_area_fraction == b.part_area_fraction && a.prior == b.prior;
  }
};

namespace io {

inline constexpr char kMagic[4] = {'D', 'A', 'W', 'F'};
inline constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(const char* p, std::size_t n) { bytes_.append(p, n); }
  const std::string& bytes() const { return bytes_; }

 private:
  std::string bytes_;
};

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{u8()} << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{u8()} << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string raw(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw DataError("model file truncated");
  }
  std::string bytes_;
  std::size_t pos_ = 0;
};

inline void write_rect(Writer& w, const OffsetRect& r) {
  w.f64(r.ux);
  w.f64(r.uy);
  w.f64(r.vx);
  w.f64(r.vy);
}

inline OffsetRect read_rect(Reader& r) {
  OffsetRect o;
  o.ux = r.f64();
  o.uy = r.f64();
  o.vx = r.f64();
  o.vy = r.f64();
  return o;
}

}  // namespace io

// Little-endian "DAWF" container: version, config text, trees in
// breadth-first node order, part area fractions, location prior.
inline std::string serialize(const Forest& f) {
  io::Writer w;
  w.raw(io::kMagic, 4);
  w.u32(io::kVersion);
  const auto text = f.config.to_text();
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.raw(text.data(), text.size());
  w.u32(static_cast<std::uint32_t>(f.trees.size()));
  for (const auto& t : f.trees) {
    w.u32(static_cast<std::uint32_t>(t.nodes.size()));
    for (const auto& n : t.nodes) {
      w.u8(n.leaf ? 1 : 0);
      if (n.leaf) {
        w.u32(n.depth);
        for (double p : n.posterior) w.f64(p);
      } else {
        w.u32(n.left);
        w.u32(n.right);
        io::write_rect(w, n.split.shape.rect1);
        w.u64(static_cast<std::uint64_t>(n.split.shape.theta1));
        io::write_rect(w, n.split.shape.rect2);
        w.u64(static_cast<std::uint64_t>(n.split.shape.theta2));
        w.f64(n.split.threshold);
      }
    }
  }
  for (double phi : f.part_area_fraction) w.f64(phi);
  w.u32(static_cast<std::uint32_t>(f.prior.grid));
  for (const auto& plane : f.prior.cells)
    for (double v : plane) w.f64(v);
  return w.bytes();
}

inline Forest deserialize(std::string bytes) {
  io::Reader r(std::move(bytes));
  if (r.raw(4) != std::string(io::kMagic, 4)) throw DataError("not a DAWF model file");
  if (const auto v = r.u32(); v != io::kVersion)
    throw DataError("unsupported model version " + std::to_string(v));
  Forest f;
  const auto text_len = r.u32();
  f.config = config_from_text(r.raw(text_len));
  const auto n_trees = r.u32();
  for (std::uint32_t t = 0; t < n_trees; ++t) {
    Tree tree;
    const auto n_nodes = r.u32();
    tree.nodes.resize(n_nodes);
    for (auto& n : tree.nodes) {
      n.leaf = r.u8() != 0;
      if (n.leaf) {
        n.depth = r.u32();
        for (double& p : n.posterior) p = r.f64();
      } else {
        n.left = r.u32();
        n.right = r.u32();
        n.split.shape.rect1 = io::read_rect(r);
        n.split.shape.theta1 = static_cast<int>(r.u64());
        n.split.shape.rect2 = io::read_rect(r);
        n.split.shape.theta2 = static_cast<int>(r.u64());
        n.split.threshold = r.f64();
        if (n.left >= n_nodes || n.right >= n_nodes)
          throw DataError("model file has out-of-range child index");
      }
    }
    f.trees.push_back(std::move(tree));
  }
  for (double& phi : f.part_area_fraction) phi = r.f64();
  f.prior.grid = static_cast<int>(r.u32());
  const std::size_t cells = static_cast<std::size_t>(f.prior.grid) * f.prior.grid;
  for (auto& plane : f.prior.cells) {
    plane.resize(cells);
    for (double& v : plane) v = r.f64();
  }
  if (!r.done()) throw DataError("trailing bytes in model file");
  return f;
}

inline void save_forest(const std::filesystem::path& path, const Forest& f) {
  std::ofstream out(path, std::ios::binary);
  const auto bytes = serialize(f);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("cannot write model '" + path.string() + "'");
}

inline Forest load_forest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str());
}

}  // namespace dawood
