#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dawood/config.hpp"
#include "dawood/data_model.hpp"
#include "dawood/error.hpp"
#include "dawood/features.hpp"
#include "dawood/forest.hpp"
#include "dawood/infer.hpp"
#include "dawood/parallel.hpp"
#include "dawood/stats.hpp"
#include "dawood/train.hpp"

namespace dawood {

struct PartScore {
  std::int64_t correct = 0;
  std::int64_t total = 0;
  bool skipped = false;  // no ground-truth joint for this part

  PartScore& operator+=(const PartScore& o) {
    correct += o.correct;
    total += o.total;
    return *this;
  }
};

using ImageScore = std::array<PartScore, kNumJointParts>;

// Half the side of the scoring square, rounded to the nearest half pixel.
inline double tolerance_half_side(const BoundingBox& bbox) {
  const double side = 0.2 * std::sqrt(bbox.area());
  return std::round(side) / 2.0;
}

inline ImageScore score_image(const PartPixels& extracted, const JointMap& joints,
                              const BoundingBox& bbox) {
  ImageScore score{};
  const double half = tolerance_half_side(bbox);
  for (int p = 0; p < kNumJointParts; ++p) {
    if (joints[p].empty()) {
      score[p].skipped = true;
      continue;
    }
    for (const auto& q : extracted[p]) {
      bool hit = false;
      for (const auto& j : joints[p])
        hit = hit || std::max(std::abs(q.x - j.x), std::abs(q.y - j.y)) <= half;
      score[p].correct += hit ? 1 : 0;
      ++score[p].total;
    }
  }
  return score;
}

struct Accuracy {
  std::array<double, kNumJointParts> part{};  // percent; NaN if no part was scored
  double mean = 0;                             // over the scored parts

  static Accuracy from(const ImageScore& totals) {
    Accuracy a;
    int scored = 0;
    for (int p = 0; p < kNumJointParts; ++p) {
      if (totals[p].total == 0) {
        a.part[p] = std::nan("");
        continue;
      }
      a.part[p] = 100.0 * static_cast<double>(totals[p].correct) / static_cast<double>(totals[p].total);
      a.mean += a.part[p];
      ++scored;
    }
    a.mean = scored > 0 ? a.mean / scored : 0.0;
    return a;
  }
};

struct EvalReport {
  double alpha = 0;
  double e_leaf = 0;
  Accuracy plain;        // p
  Accuracy with_prior;   // p'
  Accuracy prior_only;
  double runtime_s = 0;
  std::size_t images = 0;
};

// Synthetic-count weighted leaf entropy of each tree on the source pixels,
// averaged over trees.
inline double leaf_entropy(const Forest& forest, const DatasetManifest& m, unsigned workers = 1) {
  const auto& cfg = forest.config;
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < m.entries.size(); ++i)
    if (m.entries[i].domain == Domain::source) idx.push_back(i);
  if (idx.empty()) throw DataError("manifest has no source entries");
  // per image, per tree, per node label counts
  std::vector<std::vector<std::vector<LabelHistogram>>> partial(idx.size());
  parallel_for(idx.size(), workers, [&](std::size_t k, unsigned) {
    const auto& e = m.entries[idx[k]];
    const auto ch = compute_channels(read_rgb_png(e.image), e.bbox, cfg.bins);
    const auto labels = load_label_map(e);
    auto& mine = partial[k];
    mine.resize(forest.trees.size());
    for (std::size_t t = 0; t < forest.trees.size(); ++t)
      mine[t].resize(forest.trees[t].nodes.size());
    for_each_entry_pixel(e, static_cast<std::uint32_t>(idx[k]), cfg.stride, cfg.grid, &labels,
                         [&](const PixelSample& s) {
                           for (std::size_t t = 0; t < forest.trees.size(); ++t)
                             mine[t][forest.trees[t].leaf_index(ch, s.x, s.y)].add(s.label);
                         });
  });
  double sum = 0;
  for (std::size_t t = 0; t < forest.trees.size(); ++t) {
    std::vector<LabelHistogram> nodes(forest.trees[t].nodes.size());
    for (const auto& img : partial)
      for (std::size_t n = 0; n < nodes.size(); ++n) nodes[n] += img[t][n];
    double m_total = 0, e = 0;
    for (const auto& h : nodes) {
      const auto mass = static_cast<double>(h.total());
      m_total += mass;
      if (mass > 0) e += mass * entropy(h);
    }
    sum += m_total > 0 ? e / m_total : 0.0;
  }
  return sum / static_cast<double>(forest.trees.size());
}

// Scores the forest on every test entry with and without the location
// prior, plus the prior on its own.
inline EvalReport evaluate(const Forest& forest, const DatasetManifest& m, unsigned workers = 1) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < m.entries.size(); ++i)
    if (m.entries[i].domain == Domain::test) idx.push_back(i);
  if (idx.empty()) throw DataError("manifest has no test entries");
  for (auto i : idx)
    if (!m.entries[i].joints)
      throw DataError("test entry '" + m.entries[i].image.string() + "' has no joints");

  std::vector<std::array<ImageScore, 3>> scores(idx.size());
  parallel_for(idx.size(), workers, [&](std::size_t k, unsigned) {
    const auto& e = m.entries[idx[k]];
    const auto ch = compute_channels(read_rgb_png(e.image), e.bbox, forest.config.bins);
    const auto pm = posterior(forest, ch, e.bbox);
    const auto& phi = forest.part_area_fraction;
    scores[k][0] = score_image(extract_pixels(pm, phi), *e.joints, e.bbox);
    scores[k][1] = score_image(extract_pixels(modulate(pm, forest.prior), phi), *e.joints, e.bbox);
    scores[k][2] = score_image(extract_pixels(modulate(uniform_posterior(e.bbox), forest.prior), phi),
                               *e.joints, e.bbox);
  });
  std::array<ImageScore, 3> totals{};
  for (const auto& s : scores)
    for (int v = 0; v < 3; ++v)
      for (int p = 0; p < kNumJointParts; ++p) totals[v][p] += s[v][p];

  EvalReport r;
  r.alpha = forest.config.alpha;
  r.plain = Accuracy::from(totals[0]);
  r.with_prior = Accuracy::from(totals[1]);
  r.prior_only = Accuracy::from(totals[2]);
  r.images = idx.size();
  return r;
}

inline std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string report_csv(const std::vector<EvalReport>& rows) {
  std::ostringstream os;
  os << "alpha,e_leaf,p,p_prior,p_prior_only,runtime_s\n";
  for (const auto& r : rows)
    os << format_double(r.alpha) << ',' << fixed(r.e_leaf, 6) << ',' << fixed(r.plain.mean) << ','
       << fixed(r.with_prior.mean) << ',' << fixed(r.prior_only.mean) << ','
       << fixed(r.runtime_s, 3) << '\n';
  return os.str();
}

// Per-part accuracies, one row per (alpha, variant).
inline std::string part_csv(const std::vector<EvalReport>& rows) {
  std::ostringstream os;
  os << "alpha,variant";
  for (int p = 0; p < kNumJointParts; ++p) os << ',' << kPartNames[p];
  os << ",mean\n";
  for (const auto& r : rows) {
    const std::pair<const char*, const Accuracy*> variants[] = {
        {"plain", &r.plain}, {"prior", &r.with_prior}, {"prior_only", &r.prior_only}};
    for (const auto& [name, acc] : variants) {
      os << format_double(r.alpha) << ',' << name;
      for (double v : acc->part) os << ',' << (std::isnan(v) ? std::string("nan") : fixed(v));
      os << ',' << fixed(acc->mean) << '\n';
    }
  }
  return os.str();
}

inline std::string diagnostics_csv(const std::vector<LevelDiagnostics>& rows) {
  std::ostringstream os;
  os << "level,tree,alpha,entropy,chi2,kl,target_err\n";
  for (const auto& r : rows)
    os << r.level << ',' << r.tree << ',' << format_double(r.alpha) << ',' << fixed(r.entropy, 8)
       << ',' << fixed(r.chi2, 8) << ',' << fixed(r.kl, 8) << ','
       << (r.target_err < 0 ? std::string("-1") : fixed(r.target_err, 8)) << '\n';
  return os.str();
}

// e_leaf from training diagnostics: the deepest level, averaged over trees.
inline double final_level_entropy(const std::vector<LevelDiagnostics>& rows) {
  int last = -1;
  for (const auto& r : rows) last = std::max(last, r.level);
  double sum = 0;
  int n = 0;
  for (const auto& r : rows)
    if (r.level == last) {
      sum += r.entropy;
      ++n;
    }
  return n > 0 ? sum / n : 0.0;
}

struct SweepRun {
  Forest forest;
  EvalReport report;
  std::vector<LevelDiagnostics> diagnostics;
  std::uint64_t target_evaluations = 0;
};

struct SweepResult {
  std::vector<SweepRun> runs;

  std::vector<EvalReport> reports() const {
    std::vector<EvalReport> out;
    for (const auto& r : runs) out.push_back(r.report);
    return out;
  }
  std::vector<LevelDiagnostics> diagnostics() const {
    std::vector<LevelDiagnostics> out;
    for (const auto& r : runs) out.insert(out.end(), r.diagnostics.begin(), r.diagnostics.end());
    return out;
  }
};

// One forest per alpha, all with the same seed.
inline SweepResult sweep(const DatasetManifest& m, const std::vector<double>& alphas,
                         const RunConfig& base) {
  if (alphas.empty()) throw UsageError("alpha list is empty");
  SweepResult out;
  for (double a : alphas) {
    RunConfig cfg = base;
    cfg.alpha = a;
    cfg.validate();
    const auto start = std::chrono::steady_clock::now();
    auto trained = train_forest(m, cfg);
    SweepRun run;
    run.report = evaluate(trained.forest, m, cfg.workers);
    run.report.e_leaf = final_level_entropy(trained.diagnostics);
    run.report.runtime_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    run.diagnostics = std::move(trained.diagnostics);
    run.target_evaluations = trained.target_evaluations;
    run.forest = std::move(trained.forest);
    out.runs.push_back(std::move(run));
  }
  return out;
}

}  // namespace dawood
