#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "dawood/config.hpp"
#include "dawood/data_model.hpp"
#include "dawood/error.hpp"
#include "dawood/features.hpp"
#include "dawood/forest.hpp"
#include "dawood/parallel.hpp"
#include "dawood/reservoir.hpp"
#include "dawood/rng.hpp"
#include "dawood/stats.hpp"

namespace dawood {

using ChannelTable = std::span<const FeatureChannels>;

// Instrumentation. Feature evaluations are counted per domain; analysis
// work done after a tree is fixed is tallied separately.
struct TrainCounters {
  std::atomic<std::uint64_t> source_evaluations{0};
  std::atomic<std::uint64_t> target_evaluations{0};
  std::atomic<std::uint64_t> target_images_loaded{0};
  std::atomic<std::uint64_t> analysis_target_evaluations{0};
};

// ---------------------------------------------------------------------------
// Candidate and threshold proposal

// C random shapes; corners uniform in [-radius, radius]^2, sorted per axis.
inline std::vector<FeatureShape> propose_candidates(std::uint64_t seed, int count, double radius,
                                                    int bins) {
  if (count < 1) throw UsageError("candidate count must be >= 1");
  Rng rng(seed);
  auto draw_rect = [&] {
    OffsetRect r;
    for (;;) {
      const double a = rng.uniform(-radius, radius), b = rng.uniform(-radius, radius);
      const double c = rng.uniform(-radius, radius), d = rng.uniform(-radius, radius);
      if (a == b || c == d) continue;
      r.ux = std::min(a, b);
      r.vx = std::max(a, b);
      r.uy = std::min(c, d);
      r.vy = std::max(c, d);
      return r;
    }
  };
  std::vector<FeatureShape> out(static_cast<std::size_t>(count));
  for (auto& s : out) {
    s.rect1 = draw_rect();
    s.theta1 = static_cast<int>(rng.below(static_cast<std::uint64_t>(bins)));
    s.rect2 = draw_rect();
    s.theta2 = static_cast<int>(rng.below(static_cast<std::uint64_t>(bins)));
  }
  return out;
}

// Empirical quantile (linear interpolation) of ascending-sorted values.
inline double sorted_quantile(std::span<const double> sorted, double level) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * level;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

// The T interior cut points of T + 1 equal-probability slices of the
// observed ratios. `sorted` must be ascending and nonempty.
inline std::vector<double> thresholds_from_sorted(std::span<const double> sorted, int count) {
  if (count < 1) throw UsageError("threshold count must be >= 1");
  if (sorted.empty()) throw InternalError("no ratios to place thresholds on");
  std::vector<double> out(static_cast<std::size_t>(count));
  if (sorted.front() == sorted.back()) {
    std::fill(out.begin(), out.end(), sorted.front());
    return out;
  }
  for (int j = 0; j < count; ++j)
    out[j] = sorted_quantile(sorted, static_cast<double>(j + 1) / (count + 1));
  return out;
}

inline std::vector<double> propose_thresholds(const FeatureShape& shape,
                                              std::span<const PixelSample> frontier,
                                              ChannelTable channels, int count) {
  std::vector<double> ratios;
  ratios.reserve(frontier.size());
  for (const auto& s : frontier)
    ratios.push_back(response_ratio(shape, channels[s.image], s.x, s.y));
  std::sort(ratios.begin(), ratios.end());
  return thresholds_from_sorted(ratios, count);
}

// ---------------------------------------------------------------------------
// Split scoring on compacted count arrays

namespace detail {

// Per-node count buffers. Spatial bins are remapped onto the bins that are
// actually occupied at the node; empty bins contribute nothing to chi2.
struct CompactCounts {
  int bins = 0;
  std::vector<std::int32_t> data;  // labels[8] | syn[bins] | real[bins]
  std::int64_t syn = 0;
  std::int64_t real = 0;

  CompactCounts() = default;
  explicit CompactCounts(int b) : bins(b), data(static_cast<std::size_t>(kNumParts + 2 * b), 0) {}

  std::int32_t* labels() { return data.data(); }
  std::int32_t* syn_bins() { return data.data() + kNumParts; }
  std::int32_t* real_bins() { return data.data() + kNumParts + bins; }
  const std::int32_t* labels() const { return data.data(); }
  const std::int32_t* syn_bins() const { return data.data() + kNumParts; }
  const std::int32_t* real_bins() const { return data.data() + kNumParts + bins; }

  void add(const PixelSample& s, int compact_bin) {
    if (s.labelled()) {
      ++data[s.label];
      ++data[kNumParts + compact_bin];
      ++syn;
    } else {
      ++data[kNumParts + bins + compact_bin];
      ++real;
    }
  }
  void remove(const PixelSample& s, int compact_bin) {
    if (s.labelled()) {
      --data[s.label];
      --data[kNumParts + compact_bin];
      --syn;
    } else {
      --data[kNumParts + bins + compact_bin];
      --real;
    }
  }
  void clear() {
    std::fill(data.begin(), data.end(), 0);
    syn = real = 0;
  }

  template <typename Objective>
  double fitness(const Objective& obj) const {
    return obj.fitness(labels(), syn_bins(), real_bins(), bins, static_cast<double>(syn),
                       static_cast<double>(real));
  }
};

// Maps full spatial-bin ids to dense indices over the bins a pixel set uses.
struct BinCompactor {
  std::vector<int> dense;
  int used = 0;

  BinCompactor(std::span<const PixelSample> pixels, int spatial_bins)
      : dense(static_cast<std::size_t>(spatial_bins), -1) {
    for (const auto& p : pixels)
      if (dense[p.bin] < 0) dense[p.bin] = 0;
    for (auto& d : dense)
      if (d == 0) d = used++;
  }
  int operator[](int bin) const { return dense[bin]; }
};

inline double combine_gain(double parent_fitness, double m, double m_left, double f_left,
                           double m_right, double f_right) {
  return parent_fitness - m_left / m * f_left - m_right / m * f_right;
}

}  // namespace detail

struct Stage1Params {
  int thresholds = 60;
  int finalist_shapes = 30;
  int finalist_thresholds = 10;
  int spatial_bins = 64;
};

struct Stage1Result {
  std::vector<WeakClassifier> finalists;  // ranked
  std::vector<double> finalist_gains;     // gain on the frontier sample
  std::size_t scored_pairs = 0;
};

// Scores every (shape, threshold) pair on the frontier sample, keeps the
// best shapes (ranked by their best threshold) and each one's best distinct
// thresholds. Ties go to the lower shape index, then lower threshold index.
template <typename Objective>
Stage1Result select_stage1(std::span<const PixelSample> frontier,
                           std::span<const FeatureShape> shapes, ChannelTable channels,
                           const Objective& obj, const Stage1Params& p,
                           TrainCounters* counters = nullptr) {
  Stage1Result result;
  const std::size_t n = frontier.size();
  const std::size_t n_shapes = shapes.size();
  const auto T = static_cast<std::size_t>(p.thresholds);
  if (n == 0 || n_shapes == 0) return result;

  const detail::BinCompactor compact(frontier, p.spatial_bins);
  std::vector<int> sample_bin(n);
  detail::CompactCounts parent(compact.used);
  std::size_t unlabelled = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sample_bin[i] = compact[frontier[i].bin];
    parent.add(frontier[i], sample_bin[i]);
    unlabelled += frontier[i].labelled() ? 0 : 1;
  }
  const double m = static_cast<double>(parent.syn);
  const double parent_f = parent.fitness(obj);

  std::vector<double> thresholds(n_shapes * T), gains(n_shapes * T);
  std::vector<std::pair<double, std::uint32_t>> order(n);
  std::vector<double> sorted(n);
  detail::CompactCounts left(compact.used), right(compact.used);

  for (std::size_t c = 0; c < n_shapes; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto& s = frontier[i];
      const auto& ch = channels[s.image];
      order[i] = {ratio_at(ch, s.x, s.y, scale_shape(shapes[c], ch.sqrt_area())),
                  static_cast<std::uint32_t>(i)};
    }
    std::sort(order.begin(), order.end());
    for (std::size_t i = 0; i < n; ++i) sorted[i] = order[i].first;
    const auto ts = thresholds_from_sorted(sorted, p.thresholds);

    left.clear();
    right.data = parent.data;
    right.syn = parent.syn;
    right.real = parent.real;
    std::size_t moved = 0;
    for (std::size_t j = 0; j < T; ++j) {
      while (moved < n && order[moved].first <= ts[j]) {
        const auto i = order[moved].second;
        left.add(frontier[i], sample_bin[i]);
        right.remove(frontier[i], sample_bin[i]);
        ++moved;
      }
      thresholds[c * T + j] = ts[j];
      gains[c * T + j] =
          m > 0 ? detail::combine_gain(parent_f, m, static_cast<double>(left.syn), left.fitness(obj),
                                       static_cast<double>(right.syn), right.fitness(obj))
                : 0.0;
    }
  }
  result.scored_pairs = n_shapes * T;
  if (counters) {
    counters->target_evaluations += unlabelled * n_shapes;
    counters->source_evaluations += (n - unlabelled) * n_shapes;
  }

  std::vector<double> best(n_shapes);
  for (std::size_t c = 0; c < n_shapes; ++c)
    best[c] = *std::max_element(gains.begin() + c * T, gains.begin() + (c + 1) * T);
  std::vector<std::size_t> shape_rank(n_shapes);
  std::iota(shape_rank.begin(), shape_rank.end(), 0);
  std::stable_sort(shape_rank.begin(), shape_rank.end(),
                   [&](std::size_t a, std::size_t b) { return best[a] > best[b]; });
  shape_rank.resize(std::min<std::size_t>(n_shapes, p.finalist_shapes));

  std::vector<std::size_t> thr_rank(T);
  for (auto c : shape_rank) {
    std::iota(thr_rank.begin(), thr_rank.end(), 0);
    const double* g = gains.data() + c * T;
    std::stable_sort(thr_rank.begin(), thr_rank.end(),
                     [&](std::size_t a, std::size_t b) { return g[a] > g[b]; });
    std::vector<double> taken;
    for (auto j : thr_rank) {
      if (static_cast<int>(taken.size()) == p.finalist_thresholds) break;
      const double t = thresholds[c * T + j];
      if (std::find(taken.begin(), taken.end(), t) != taken.end()) continue;
      taken.push_back(t);
      result.finalists.push_back({shapes[c], t});
      result.finalist_gains.push_back(g[j]);
    }
  }
  return result;
}

// Gains of each finalist over a full pixel set. Writes gains[i] for finalist i.
template <typename Objective>
void score_finalists(std::span<const WeakClassifier> finalists,
                     std::span<const PixelSample> pixels, ChannelTable channels,
                     const Objective& obj, int spatial_bins, std::span<double> gains,
                     TrainCounters* counters = nullptr) {
  const std::size_t nf = finalists.size();
  if (gains.size() != nf) throw InternalError("gain buffer size mismatch");
  const detail::BinCompactor compact(pixels, spatial_bins);
  detail::CompactCounts parent(compact.used);
  for (const auto& s : pixels) parent.add(s, compact[s.bin]);
  const double m = static_cast<double>(parent.syn);
  const double parent_f = parent.fitness(obj);

  std::vector<detail::CompactCounts> left(nf, detail::CompactCounts(compact.used));
  std::vector<ScaledShape> scaled(nf);
  std::uint32_t current_image = ~0u;
  for (const auto& s : pixels) {
    const auto& ch = channels[s.image];
    if (s.image != current_image) {
      current_image = s.image;
      for (std::size_t f = 0; f < nf; ++f)
        scaled[f] = scale_shape(finalists[f].shape, ch.sqrt_area());
    }
    const int b = compact[s.bin];
    for (std::size_t f = 0; f < nf; ++f)
      if (route(ratio_at(ch, s.x, s.y, scaled[f]), finalists[f].threshold) == Side::left)
        left[f].add(s, b);
  }
  if (counters) {
    counters->target_evaluations += static_cast<std::uint64_t>(parent.real) * nf;
    counters->source_evaluations += static_cast<std::uint64_t>(parent.syn) * nf;
  }

  detail::CompactCounts right(compact.used);
  for (std::size_t f = 0; f < nf; ++f) {
    if (m <= 0) {
      gains[f] = 0.0;
      continue;
    }
    for (std::size_t k = 0; k < right.data.size(); ++k)
      right.data[k] = parent.data[k] - left[f].data[k];
    right.syn = parent.syn - left[f].syn;
    right.real = parent.real - left[f].real;
    gains[f] = detail::combine_gain(parent_f, m, static_cast<double>(left[f].syn),
                                    left[f].fitness(obj), static_cast<double>(right.syn),
                                    right.fitness(obj));
  }
}

// Index of the largest strictly positive gain (first on ties), if any.
inline std::optional<std::size_t> pick_best(std::span<const double> gains) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < gains.size(); ++i)
    if (gains[i] > 0.0 && (!best || gains[i] > gains[*best])) best = i;
  return best;
}

struct Stage2Result {
  std::optional<std::size_t> best;
  std::vector<double> gains;
};

template <typename Objective>
Stage2Result select_stage2(std::span<const WeakClassifier> finalists,
                           std::span<const PixelSample> pixels, ChannelTable channels,
                           const Objective& obj, int spatial_bins,
                           TrainCounters* counters = nullptr) {
  Stage2Result r;
  r.gains.resize(finalists.size());
  score_finalists(finalists, pixels, channels, obj, spatial_bins, r.gains, counters);
  r.best = pick_best(r.gains);
  return r;
}

// ---------------------------------------------------------------------------
// Training data

struct TrainingSet {
  std::vector<FeatureChannels> channels;   // by manifest entry; empty if unused
  std::vector<PixelSample> pixels;          // source pixels, then target pixels
  std::vector<std::uint8_t> target_truth;   // analysis-only labels of target pixels
  std::size_t source_count = 0;
  bool has_target = false;
  bool has_target_truth = false;
  int spatial_bins = 64;
};

namespace detail {

inline void load_channels(const DatasetManifest& m, Domain domain, const RunConfig& cfg,
                          std::vector<FeatureChannels>& channels) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < m.entries.size(); ++i)
    if (m.entries[i].domain == domain) idx.push_back(i);
  parallel_for(idx.size(), cfg.workers, [&](std::size_t k, unsigned) {
    const auto& e = m.entries[idx[k]];
    channels[idx[k]] = compute_channels(read_rgb_png(e.image), e.bbox, cfg.bins);
  });
}

}  // namespace detail

// Appends target-domain pixels and channels; target labels, when the
// manifest has them, are kept aside for diagnostics only.
inline void add_target_domain(TrainingSet& set, const DatasetManifest& m, const RunConfig& cfg) {
  if (set.has_target) return;
  detail::load_channels(m, Domain::target, cfg, set.channels);
  std::size_t with_labels = 0, targets = 0;
  for (const auto& e : m.entries)
    if (e.domain == Domain::target) {
      ++targets;
      with_labels += e.labels ? 1 : 0;
    }
  set.has_target_truth = targets > 0 && with_labels == targets;
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    const auto& e = m.entries[i];
    if (e.domain != Domain::target) continue;
    std::optional<GrayImage> truth;
    if (set.has_target_truth) truth = load_label_map(e);
    for_each_entry_pixel(e, static_cast<std::uint32_t>(i), cfg.stride, cfg.grid, nullptr,
                         [&](const PixelSample& s) {
                           set.pixels.push_back(s);
                           set.target_truth.push_back(truth ? *truth->at(s.x, s.y) : kNoLabel);
                         });
  }
  set.has_target = true;
}

inline TrainingSet load_training_set(const DatasetManifest& m, const RunConfig& cfg,
                                     bool include_target, TrainCounters* counters = nullptr) {
  if (m.count(Domain::source) == 0) throw DataError("manifest has no source entries");
  if (include_target && m.count(Domain::target) == 0)
    throw DataError("manifest has no target entries");
  TrainingSet set;
  set.spatial_bins = cfg.spatial_bins();
  set.channels.resize(m.entries.size());
  detail::load_channels(m, Domain::source, cfg, set.channels);
  iter_pixels(m, Domain::source, cfg.stride, cfg.grid,
              [&](const PixelSample& s) { set.pixels.push_back(s); });
  set.source_count = set.pixels.size();
  set.target_truth.assign(set.source_count, kNoLabel);
  if (include_target) {
    add_target_domain(set, m, cfg);
    if (counters) counters->target_images_loaded += m.count(Domain::target);
  }
  return set;
}

// ---------------------------------------------------------------------------
// Breadth-first tree training

struct LevelDiagnostics {
  int level = 0;
  int tree = 0;
  double alpha = 0;
  double entropy = 0;     // synthetic-count weighted over the current leaves
  double chi2 = 0;
  double kl = 0;
  double target_err = -1; // -1 when target labels are unavailable
};

inline Posterior leaf_posterior(const LabelHistogram& h) {
  Posterior p{};
  const double denom = static_cast<double>(h.total()) + kNumParts;
  for (int i = 0; i < kNumParts; ++i) p[i] = (static_cast<double>(h.counts[i]) + 1.0) / denom;
  return p;
}

// Grows one tree level by level. Each level makes two passes over the
// pixels reaching the frontier: the first fills per-node reservoirs used to
// shortlist weak classifiers, the second scores the shortlist on every pixel.
template <typename Objective>
class TreeTrainer {
 public:
  TreeTrainer(const TrainingSet& data, const RunConfig& cfg, const Objective& obj,
              std::uint64_t seed, TrainCounters* counters = nullptr)
      : data_(data), cfg_(cfg), obj_(obj), seed_(seed), counters_(counters) {
    if (obj_.uses_target() && !data_.has_target)
      throw InternalError("objective needs target pixels that were not loaded");
    pixel_count_ = obj_.uses_target() ? data_.pixels.size() : data_.source_count;
    node_of_.assign(pixel_count_, 0);
    nodes_.push_back(TreeNode{});
    stats_.push_back(NodeStats(data_.spatial_bins));
    for (std::size_t p = 0; p < pixel_count_; ++p) add_to(stats_[0], data_.pixels[p]);
    frontier_ = {0};
  }

  int level() const { return level_; }
  bool done() const { return level_ >= cfg_.depth || frontier_.empty(); }
  const std::vector<std::uint32_t>& frontier() const { return frontier_; }
  const NodeStats& stats(std::uint32_t node) const { return stats_[node]; }
  const std::vector<TreeNode>& nodes() const { return nodes_; }

  // Decides every frontier node at the current depth.
  void train_level() {
    if (done()) return;
    const int depth = level_;
    std::vector<std::uint32_t> open;
    for (auto n : frontier_) {
      if (splittable(n))
        open.push_back(n);
      else
        make_leaf(n, depth);
    }

    const auto lists = pixel_lists(open);
    std::vector<std::vector<WeakClassifier>> finalists(open.size());
    parallel_for(open.size(), cfg_.workers, [&](std::size_t i, unsigned) {
      finalists[i] = shortlist(open[i], depth, lists[i]);
    });

    // Second pass: every finalist on every pixel of its node.
    constexpr std::size_t kBlock = 50;
    struct Item {
      std::size_t node, first, last;
    };
    std::vector<Item> items;
    std::vector<std::vector<double>> gains(open.size());
    for (std::size_t i = 0; i < open.size(); ++i) {
      gains[i].resize(finalists[i].size());
      for (std::size_t f = 0; f < finalists[i].size(); f += kBlock)
        items.push_back({i, f, std::min(finalists[i].size(), f + kBlock)});
    }
    parallel_for(items.size(), cfg_.workers, [&](std::size_t k, unsigned) {
      const auto& it = items[k];
      const auto node_pixels = gather(lists[it.node]);
      score_finalists(std::span(finalists[it.node]).subspan(it.first, it.last - it.first),
                      node_pixels, data_.channels, obj_, data_.spatial_bins,
                      std::span(gains[it.node]).subspan(it.first, it.last - it.first),
                      counters_);
    });

    std::vector<std::uint32_t> next;
    std::vector<std::size_t> split_at;  // index into open
    for (std::size_t i = 0; i < open.size(); ++i) {
      const auto n = open[i];
      const auto best = pick_best(gains[i]);
      if (!best) {
        make_leaf(n, depth);
        continue;
      }
      const auto left = static_cast<std::uint32_t>(nodes_.size());
      auto& node = nodes_[n];
      node.leaf = false;
      node.split = finalists[i][*best];
      node.left = left;
      node.right = left + 1;
      nodes_.emplace_back();
      nodes_.emplace_back();
      stats_.emplace_back(data_.spatial_bins);
      stats_.emplace_back(data_.spatial_bins);
      next.push_back(left);
      next.push_back(left + 1);
      split_at.push_back(i);
    }

    // Route the pixels of split nodes to their children.
    std::vector<NodeStats> child_stats(2 * split_at.size(), NodeStats(data_.spatial_bins));
    parallel_for(split_at.size(), cfg_.workers, [&](std::size_t k, unsigned) {
      const auto i = split_at[k];
      const auto& node = nodes_[open[i]];
      std::uint64_t src = 0, tgt = 0;
      ScaledShape scaled;
      std::uint32_t current_image = ~0u;
      for (auto p : lists[i]) {
        const auto& s = data_.pixels[p];
        const auto& ch = data_.channels[s.image];
        if (s.image != current_image) {
          current_image = s.image;
          scaled = scale_shape(node.split.shape, ch.sqrt_area());
        }
        const bool left = route(ratio_at(ch, s.x, s.y, scaled), node.split.threshold) == Side::left;
        node_of_[p] = left ? node.left : node.right;
        add_to(child_stats[2 * k + (left ? 0 : 1)], s);
        (s.labelled() ? src : tgt) += 1;
      }
      if (counters_) {
        counters_->source_evaluations += src;
        counters_->target_evaluations += tgt;
      }
    });
    for (std::size_t k = 0; k < split_at.size(); ++k) {
      const auto& node = nodes_[open[split_at[k]]];
      auto sum = child_stats[2 * k];
      sum += child_stats[2 * k + 1];
      if (!(sum == stats_[open[split_at[k]]]))
        throw InternalError("routing lost or duplicated pixels");
      stats_[node.left] = std::move(child_stats[2 * k]);
      stats_[node.right] = std::move(child_stats[2 * k + 1]);
    }
    frontier_ = std::move(next);
    ++level_;
    if (level_ >= cfg_.depth)
      for (auto n : frontier_) make_leaf(n, level_);
  }

  Tree finish() {
    while (!done()) train_level();
    for (auto n : frontier_)
      if (nodes_[n].leaf) make_leaf(n, level_);
    frontier_.clear();
    Tree t;
    t.nodes = nodes_;
    return t;
  }

 private:
  void add_to(NodeStats& ns, const PixelSample& s) const {
    if (s.labelled())
      ns.add_synthetic(s.label, s.bin);
    else
      ns.add_real(s.bin);
  }

  bool splittable(std::uint32_t n) const {
    const auto& st = stats_[n];
    if (st.syn_count() < cfg_.min_syn) return false;
    const double f = obj_.fitness(st.syn_labels.counts.data(), st.syn_spatial.counts.data(),
                                  st.real_spatial.counts.data(), st.syn_spatial.bins(),
                                  static_cast<double>(st.syn_count()),
                                  static_cast<double>(st.real_count()));
    return f > 0.0;
  }

  void make_leaf(std::uint32_t n, int depth) {
    auto& node = nodes_[n];
    node.leaf = true;
    node.depth = static_cast<std::uint32_t>(depth);
    node.posterior = leaf_posterior(stats_[n].syn_labels);
  }

  // Pixel indices per open node, in global pixel order.
  std::vector<std::vector<std::uint32_t>> pixel_lists(const std::vector<std::uint32_t>& open) const {
    std::vector<std::int32_t> slot(nodes_.size(), -1);
    for (std::size_t i = 0; i < open.size(); ++i) slot[open[i]] = static_cast<std::int32_t>(i);
    std::vector<std::vector<std::uint32_t>> lists(open.size());
    for (std::size_t i = 0; i < open.size(); ++i)
      lists[i].reserve(static_cast<std::size_t>(stats_[open[i]].syn_count() +
                                                stats_[open[i]].real_count()));
    for (std::size_t p = 0; p < pixel_count_; ++p)
      if (const auto s = slot[node_of_[p]]; s >= 0) lists[s].push_back(static_cast<std::uint32_t>(p));
    return lists;
  }

  std::vector<PixelSample> gather(const std::vector<std::uint32_t>& list) const {
    std::vector<PixelSample> out;
    out.reserve(list.size());
    for (auto p : list) out.push_back(data_.pixels[p]);
    return out;
  }

  // First pass for one node: reservoir samples per domain, then stage 1.
  std::vector<WeakClassifier> shortlist(std::uint32_t node, int depth,
                                        const std::vector<std::uint32_t>& list) const {
    const auto d = static_cast<std::uint64_t>(depth);
    ReservoirSampler<PixelSample> labelled(static_cast<std::size_t>(cfg_.samples),
                                           derive_seed({seed_, d, node, 1}));
    ReservoirSampler<PixelSample> unlabelled(static_cast<std::size_t>(cfg_.samples),
                                             derive_seed({seed_, d, node, 2}));
    for (auto p : list) {
      const auto& s = data_.pixels[p];
      (s.labelled() ? labelled : unlabelled).offer(s);
    }
    auto frontier = std::move(labelled).take();
    if (obj_.uses_target()) {
      const auto& u = unlabelled.items();
      frontier.insert(frontier.end(), u.begin(), u.end());
    }
    const auto shapes = propose_candidates(derive_seed({seed_, d, node, 3}), cfg_.candidates,
                                           cfg_.radius, cfg_.bins);
    Stage1Params p{cfg_.thresholds, cfg_.finalist_shapes, cfg_.finalist_thresholds,
                   data_.spatial_bins};
    return select_stage1(frontier, shapes, data_.channels, obj_, p, counters_).finalists;
  }

  const TrainingSet& data_;
  const RunConfig& cfg_;
  Objective obj_;
  std::uint64_t seed_;
  TrainCounters* counters_;
  std::size_t pixel_count_ = 0;
  std::vector<std::uint32_t> node_of_;
  std::vector<TreeNode> nodes_;
  std::vector<NodeStats> stats_;
  std::vector<std::uint32_t> frontier_;
  int level_ = 0;
};

// ---------------------------------------------------------------------------
// Diagnostics (computed on the finished tree; never feeds back into training)

// For each level l, the leaves of the tree as it stood after level l was
// trained: nodes at depth l + 1 and any earlier leaves.
inline std::vector<LevelDiagnostics> level_diagnostics(const Tree& tree, const TrainingSet& data,
                                                       int depth, int tree_index, double alpha,
                                                       unsigned workers,
                                                       TrainCounters* counters = nullptr) {
  const std::size_t n_pix = data.has_target ? data.pixels.size() : data.source_count;
  const std::size_t width = static_cast<std::size_t>(depth) + 1;
  // node reached at each depth (leaves repeat)
  std::vector<std::uint32_t> path(n_pix * width);
  std::atomic<std::uint64_t> target_evals{0};
  constexpr std::size_t kChunk = 4096;
  parallel_for((n_pix + kChunk - 1) / kChunk, workers, [&](std::size_t c, unsigned) {
    std::uint64_t tgt = 0;
    for (std::size_t p = c * kChunk; p < std::min(n_pix, (c + 1) * kChunk); ++p) {
      const auto& s = data.pixels[p];
      const auto& ch = data.channels[s.image];
      std::uint32_t n = 0;
      for (std::size_t d = 0; d < width; ++d) {
        path[p * width + d] = n;
        if (!tree.nodes[n].leaf) {
          tgt += s.labelled() ? 0 : 1;
          n = evaluate(tree.nodes[n].split, ch, s.x, s.y) == Side::left ? tree.nodes[n].left
                                                                       : tree.nodes[n].right;
        }
      }
    }
    target_evals += tgt;
  });
  if (counters) counters->analysis_target_evaluations += target_evals;

  std::vector<LevelDiagnostics> rows;
  std::vector<NodeStats> stats;
  std::vector<LabelHistogram> truth;
  for (int level = 0; level < depth; ++level) {
    stats.assign(tree.nodes.size(), NodeStats(data.spatial_bins));
    truth.assign(tree.nodes.size(), LabelHistogram{});
    for (std::size_t p = 0; p < n_pix; ++p) {
      const auto n = path[p * width + level + 1];
      const auto& s = data.pixels[p];
      if (s.labelled()) {
        stats[n].add_synthetic(s.label, s.bin);
      } else {
        stats[n].add_real(s.bin);
        if (data.target_truth[p] != kNoLabel) truth[n].add(data.target_truth[p]);
      }
    }
    LevelDiagnostics row;
    row.level = level;
    row.tree = tree_index;
    row.alpha = alpha;
    double m_total = 0, errors = 0, truth_total = 0;
    for (std::size_t n = 0; n < stats.size(); ++n) {
      const auto m = static_cast<double>(stats[n].syn_count());
      if (m > 0) {
        m_total += m;
        row.entropy += m * entropy(stats[n].syn_labels);
        row.chi2 += m * chi2(stats[n].syn_spatial, stats[n].real_spatial);
        row.kl += m * kl(stats[n].syn_spatial, stats[n].real_spatial);
      }
      const auto tt = truth[n].total();
      if (tt > 0) {
        const auto& c = stats[n].syn_labels.counts;
        const int predicted = static_cast<int>(std::max_element(c.begin(), c.end()) - c.begin());
        errors += static_cast<double>(tt - truth[n].counts[predicted]);
        truth_total += static_cast<double>(tt);
      }
    }
    if (m_total > 0) {
      row.entropy /= m_total;
      row.chi2 /= m_total;
      row.kl /= m_total;
    }
    row.target_err = data.has_target_truth && truth_total > 0 ? errors / truth_total : -1.0;
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Forest

// Mean labelled-area fraction per part and the per-part location prior,
// both estimated from every in-box pixel of the source images.
inline void estimate_part_statistics(const DatasetManifest& m, int prior_grid, Forest& forest) {
  const std::size_t cells = static_cast<std::size_t>(prior_grid) * prior_grid;
  std::array<std::vector<double>, kNumJointParts> counts;
  for (auto& c : counts) c.assign(cells, 0.0);
  std::array<double, kNumJointParts> area_sum{};
  std::size_t images = 0;
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    const auto& e = m.entries[i];
    if (e.domain != Domain::source) continue;
    const auto labels = load_label_map(e);
    std::array<double, kNumJointParts> here{};
    for_each_entry_pixel(e, static_cast<std::uint32_t>(i), 1, prior_grid, &labels,
                         [&](const PixelSample& s) {
                           if (s.label >= kNumJointParts) return;
                           here[s.label] += 1;
                           counts[s.label][s.bin] += 1;
                         });
    for (int p = 0; p < kNumJointParts; ++p) area_sum[p] += here[p] / e.bbox.area();
    ++images;
  }
  if (images == 0) throw DataError("manifest has no source entries");
  constexpr double kSmoothing = 1e-3;
  forest.prior.grid = prior_grid;
  for (int p = 0; p < kNumJointParts; ++p) {
    // Parts never seen still need a positive area to extract at least one pixel.
    forest.part_area_fraction[p] = std::max(area_sum[p] / static_cast<double>(images), 1e-9);
    const double total = std::accumulate(counts[p].begin(), counts[p].end(), 0.0);
    const double z = total + kSmoothing * static_cast<double>(cells);
    forest.prior.cells[p].resize(cells);
    for (std::size_t c = 0; c < cells; ++c) forest.prior.cells[p][c] = (counts[p][c] + kSmoothing) / z;
  }
}

struct TrainResult {
  Forest forest;
  std::vector<LevelDiagnostics> diagnostics;
  std::uint64_t source_evaluations = 0;
  std::uint64_t target_evaluations = 0;
  std::uint64_t target_images_loaded = 0;
  std::uint64_t analysis_target_evaluations = 0;
};

struct TrainOptions {
  bool diagnostics = true;
};

template <typename Objective>
TrainResult train_forest(const DatasetManifest& m, RunConfig cfg, const Objective& obj,
                         const TrainOptions& opts = {}) {
  cfg.alpha = obj.alpha();
  cfg.validate();
  if (m.count(Domain::source) == 0) throw DataError("manifest has no source entries");
  if (m.count(Domain::target) == 0) throw DataError("manifest has no target entries");

  TrainCounters counters;
  auto data = load_training_set(m, cfg, obj.uses_target(), &counters);

  TrainResult result;
  result.forest.config = cfg;
  for (int t = 0; t < cfg.trees; ++t) {
    TreeTrainer<Objective> trainer(data, cfg, obj, derive_seed({cfg.seed, 0x74726565, std::uint64_t(t)}),
                                   &counters);
    result.forest.trees.push_back(trainer.finish());
  }
  estimate_part_statistics(m, cfg.prior_grid, result.forest);

  result.source_evaluations = counters.source_evaluations;
  result.target_evaluations = counters.target_evaluations;
  result.target_images_loaded = counters.target_images_loaded;

  if (opts.diagnostics) {
    add_target_domain(data, m, cfg);
    for (int t = 0; t < cfg.trees; ++t) {
      auto rows = level_diagnostics(result.forest.trees[t], data, cfg.depth, t, cfg.alpha,
                                    cfg.workers, &counters);
      result.diagnostics.insert(result.diagnostics.end(), rows.begin(), rows.end());
    }
    result.analysis_target_evaluations = counters.analysis_target_evaluations;
  }
  return result;
}

inline TrainResult train_forest(const DatasetManifest& m, const RunConfig& cfg,
                                const TrainOptions& opts = {}) {
  return train_forest(m, cfg, DomainAdaptiveObjective(cfg.alpha), opts);
}

}  // namespace dawood
