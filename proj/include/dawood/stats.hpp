#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dawood/error.hpp"
#include "dawood/part.hpp"

namespace dawood {

inline constexpr double kLogNumParts = 2.0794415416798357;  // ln 8
inline constexpr double kKlSmoothing = 1e-3;

// Raw-count kernels shared by the histogram types and the trainer's inner loops.
namespace kernel {

// Shannon entropy (nats) of counts / total, divided by ln 8.
template <typename Int>
double entropy(const Int* counts, int n, double total) {
  if (total <= 0) return 0.0;
  double h = 0.0;
  for (int i = 0; i < n; ++i) {
    if (counts[i] == 0) continue;
    const double p = static_cast<double>(counts[i]) / total;
    h -= p * std::log(p);
  }
  return h / kLogNumParts;
}

// Symmetric chi-square distance 1/2 sum (p-q)^2/(p+q) between the normalised
// histograms; 1 when either side is empty.
template <typename Int>
double chi2(const Int* p, const Int* q, int bins, double p_total, double q_total) {
  if (p_total <= 0 || q_total <= 0) return 1.0;
  double d = 0.0;
  for (int i = 0; i < bins; ++i) {
    const double a = static_cast<double>(p[i]) / p_total;
    const double b = static_cast<double>(q[i]) / q_total;
    const double s = a + b;
    if (s > 0) d += (a - b) * (a - b) / s;
  }
  return std::clamp(0.5 * d, 0.0, 1.0);
}

template <typename Int>
double kl(const Int* p, const Int* q, int bins, double p_total, double q_total) {
  const double pz = p_total + bins * kKlSmoothing;
  const double qz = q_total + bins * kKlSmoothing;
  double d = 0.0;
  for (int i = 0; i < bins; ++i) {
    const double a = (static_cast<double>(p[i]) + kKlSmoothing) / pz;
    const double b = (static_cast<double>(q[i]) + kKlSmoothing) / qz;
    d += a * std::log(a / b);
  }
  return std::max(0.0, d);
}

}  // namespace kernel

struct LabelHistogram {
  std::array<std::int64_t, kNumParts> counts{};

  std::int64_t total() const {
    std::int64_t t = 0;
    for (auto c : counts) t += c;
    return t;
  }
  void add(int label, std::int64_t n = 1) { counts.at(label) += n; }
  LabelHistogram& operator+=(const LabelHistogram& o) {
    for (int i = 0; i < kNumParts; ++i) counts[i] += o.counts[i];
    return *this;
  }
  friend bool operator==(const LabelHistogram&, const LabelHistogram&) = default;
};

struct SpatialHistogram {
  std::vector<std::int64_t> counts;

  SpatialHistogram() = default;
  explicit SpatialHistogram(int bins) : counts(static_cast<std::size_t>(bins), 0) {}

  int bins() const { return static_cast<int>(counts.size()); }
  std::int64_t total() const {
    std::int64_t t = 0;
    for (auto c : counts) t += c;
    return t;
  }
  void add(int bin, std::int64_t n = 1) { counts.at(bin) += n; }
  SpatialHistogram& operator+=(const SpatialHistogram& o) {
    if (o.bins() != bins()) throw DataError("spatial histogram size mismatch");
    for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += o.counts[i];
    return *this;
  }
  friend bool operator==(const SpatialHistogram&, const SpatialHistogram&) = default;
};

// Per-node histograms of synthetic (labelled) and real (unlabelled) pixels.
struct NodeStats {
  LabelHistogram syn_labels;
  SpatialHistogram syn_spatial;
  SpatialHistogram real_spatial;

  NodeStats() = default;
  explicit NodeStats(int bins) : syn_spatial(bins), real_spatial(bins) {}

  std::int64_t syn_count() const { return syn_labels.total(); }
  std::int64_t real_count() const { return real_spatial.total(); }

  void add_synthetic(int label, int bin) {
    syn_labels.add(label);
    syn_spatial.add(bin);
  }
  void add_real(int bin) { real_spatial.add(bin); }

  NodeStats& operator+=(const NodeStats& o) {
    syn_labels += o.syn_labels;
    syn_spatial += o.syn_spatial;
    real_spatial += o.real_spatial;
    return *this;
  }
  friend bool operator==(const NodeStats&, const NodeStats&) = default;
};

inline double entropy(const LabelHistogram& h) {
  return kernel::entropy(h.counts.data(), kNumParts, static_cast<double>(h.total()));
}

inline double chi2(const SpatialHistogram& p, const SpatialHistogram& q) {
  if (p.bins() != q.bins())
    throw DataError("chi2: histogram sizes differ (" + std::to_string(p.bins()) + " vs " +
                    std::to_string(q.bins()) + ")");
  return kernel::chi2(p.counts.data(), q.counts.data(), p.bins(),
                      static_cast<double>(p.total()), static_cast<double>(q.total()));
}

inline double kl(const SpatialHistogram& p, const SpatialHistogram& q) {
  if (p.bins() != q.bins())
    throw DataError("kl: histogram sizes differ (" + std::to_string(p.bins()) + " vs " +
                    std::to_string(q.bins()) + ")");
  return kernel::kl(p.counts.data(), q.counts.data(), p.bins(),
                    static_cast<double>(p.total()), static_cast<double>(q.total()));
}

inline double combine_fitness(double alpha, double label_entropy, double chi2_distance) {
  return alpha * label_entropy + (1.0 - alpha) * chi2_distance;
}

// Node fitness: alpha * E(labels) + (1 - alpha) * chi2(synthetic bins, real bins).
// A node without synthetic pixels has fitness 0.
inline double fitness(const NodeStats& ns, double alpha) {
  if (ns.syn_count() == 0) return 0.0;
  return combine_fitness(alpha, entropy(ns.syn_labels), chi2(ns.syn_spatial, ns.real_spatial));
}

// Gain of a split; both children are weighted by their share of synthetic pixels.
inline double gain(const NodeStats& parent, const NodeStats& left, const NodeStats& right,
                   double alpha) {
  const auto m = parent.syn_count();
  if (left.syn_count() + right.syn_count() != m ||
      left.real_count() + right.real_count() != parent.real_count())
    throw InternalError("split does not conserve pixel counts");
  if (m == 0) return 0.0;
  const double md = static_cast<double>(m);
  return fitness(parent, alpha) - static_cast<double>(left.syn_count()) / md * fitness(left, alpha) -
         static_cast<double>(right.syn_count()) / md * fitness(right, alpha);
}

// Split objective mixing label entropy with the cross-domain spatial
// chi-square distance. With alpha == 1 the target domain is never consulted.
class DomainAdaptiveObjective {
 public:
  explicit DomainAdaptiveObjective(double alpha) : alpha_(alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw UsageError("alpha must lie in [0,1]");
  }

  double alpha() const { return alpha_; }
  bool uses_target() const { return alpha_ < 1.0; }

  template <typename Int>
  double fitness(const Int* labels, const Int* syn_bins, const Int* real_bins, int bins,
                 double syn_total, double real_total) const {
    if (syn_total <= 0) return 0.0;
    const double e = kernel::entropy(labels, kNumParts, syn_total);
    if (!uses_target()) return e;
    return combine_fitness(alpha_, e,
                           kernel::chi2(syn_bins, real_bins, bins, syn_total, real_total));
  }

 private:
  double alpha_;
};

// Classical label-entropy objective, written independently of the mixed one.
class EntropyObjective {
 public:
  double alpha() const { return 1.0; }
  bool uses_target() const { return false; }

  template <typename Int>
  double fitness(const Int* labels, const Int*, const Int*, int, double syn_total,
                 double) const {
    if (syn_total <= 0) return 0.0;
    double h = 0.0;
    for (int i = 0; i < kNumParts; ++i) {
      if (labels[i] == 0) continue;
      const double p = static_cast<double>(labels[i]) / syn_total;
      h -= p * std::log(p);
    }
    return h / kLogNumParts;
  }
};

}  // namespace dawood
