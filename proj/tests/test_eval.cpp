#include <gtest/gtest.h>

#include "dawood/eval.hpp"
#include "dawood/plot.hpp"
#include "test_util.hpp"

using namespace dawood;

namespace {

JointMap joints_at(int part, Point p) {
  JointMap j;
  j[part] = {p};
  return j;
}

}  // namespace

TEST(Tolerance, HalfSide) {
  EXPECT_DOUBLE_EQ(tolerance_half_side({0, 0, 100, 100}), 10.0);
  EXPECT_DOUBLE_EQ(tolerance_half_side({0, 0, 40, 90}), 6.0);    // 0.2 * 60 = 12
  EXPECT_DOUBLE_EQ(tolerance_half_side({0, 0, 33, 47}), 4.0);    // 0.2 * 39.38 = 7.88 -> 8
  EXPECT_DOUBLE_EQ(tolerance_half_side({0, 0, 37, 37}), 3.5);    // 7.4 -> 7
}

TEST(Score, JointPixelIsCorrect) {
  const BoundingBox b{0, 0, 100, 100};
  PartPixels px;
  px[3] = {{50, 50}};
  const auto s = score_image(px, joints_at(3, {50, 50}), b);
  EXPECT_EQ(s[3].correct, 1);
  EXPECT_EQ(s[3].total, 1);
}

TEST(Score, ChebyshevBoundary) {
  const BoundingBox b{0, 0, 100, 100};  // half side 10
  PartPixels px;
  px[3] = {{60, 40}, {61, 50}, {50, 61}, {40, 40}, {39, 50}};
  const auto s = score_image(px, joints_at(3, {50, 50}), b);
  EXPECT_EQ(s[3].correct, 2);
  EXPECT_EQ(s[3].total, 5);
}

TEST(Score, HalfPixelTolerance) {
  const BoundingBox b{0, 0, 37, 37};  // half side 3.5
  PartPixels px;
  px[0] = {{13, 10}, {14, 10}};
  const auto s = score_image(px, joints_at(0, {10, 10}), b);
  EXPECT_EQ(s[0].correct, 1);
}

TEST(Score, AnyJointOfThePartCounts) {
  const BoundingBox b{0, 0, 100, 100};
  JointMap j;
  j[0] = {{10, 10}, {80, 80}};
  PartPixels px;
  px[0] = {{85, 85}, {15, 15}, {45, 45}};
  const auto s = score_image(px, j, b);
  EXPECT_EQ(s[0].correct, 2);
  EXPECT_EQ(s[0].total, 3);
}

TEST(Score, MonteCarloCoverageMatchesSquareArea) {
  // A uniformly random pixel in a 200 x 200 window around one joint lands in
  // the (2h+1)^2 square with probability (2h+1)^2 / 200^2.
  const BoundingBox b{0, 0, 200, 200};  // half side 20
  Rng rng(13);
  PartPixels px;
  for (int i = 0; i < 40000; ++i)
    px[5].push_back({static_cast<int>(rng.below(200)), static_cast<int>(rng.below(200))});
  const auto s = score_image(px, joints_at(5, {100, 100}), b);
  const double expected = 41.0 * 41.0 / (200.0 * 200.0);
  EXPECT_NEAR(static_cast<double>(s[5].correct) / s[5].total, expected, 0.01);
}

TEST(Score, PartsWithoutJointsSkipped) {
  const BoundingBox b{0, 0, 50, 50};
  PartPixels px;
  px[2] = {{1, 1}};
  const auto s = score_image(px, joints_at(0, {1, 1}), b);
  EXPECT_TRUE(s[2].skipped);
  EXPECT_EQ(s[2].total, 0);
}

TEST(AccuracyAggregate, MeanOverScoredParts) {
  ImageScore t{};
  t[0] = {3, 4};
  t[1] = {1, 2};
  const auto a = Accuracy::from(t);
  EXPECT_DOUBLE_EQ(a.part[0], 75.0);
  EXPECT_DOUBLE_EQ(a.part[1], 50.0);
  EXPECT_TRUE(std::isnan(a.part[2]));
  EXPECT_DOUBLE_EQ(a.mean, 62.5);
  EXPECT_EQ(Accuracy::from(ImageScore{}).mean, 0.0);
}

TEST(Evaluate, PerfectLabelsScoreHundred) {
  // Extract exactly the ground-truth joint pixels: every one is correct.
  const auto& m = testutil::small_dataset();
  ImageScore totals{};
  for (const auto& e : m.entries) {
    if (e.domain != Domain::test) continue;
    PartPixels px;
    for (int p = 0; p < kNumJointParts; ++p) px[p] = (*e.joints)[p];
    const auto s = score_image(px, *e.joints, e.bbox);
    for (int p = 0; p < kNumJointParts; ++p) totals[p] += s[p];
  }
  const auto a = Accuracy::from(totals);
  EXPECT_DOUBLE_EQ(a.mean, 100.0);
}

TEST(Evaluate, BoundsAndOrderInvariance) {
  const auto& m = testutil::small_dataset();
  auto cfg = testutil::small_config();
  const auto f = train_forest(m, cfg, {false}).forest;
  const auto r = evaluate(f, m);
  EXPECT_EQ(r.images, m.count(Domain::test));
  for (const auto* a : {&r.plain, &r.with_prior, &r.prior_only}) {
    EXPECT_GE(a->mean, 0.0);
    EXPECT_LE(a->mean, 100.0);
    for (double v : a->part) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 100.0);
    }
  }
  DatasetManifest reversed = m;
  std::reverse(reversed.entries.begin(), reversed.entries.end());
  const auto r2 = evaluate(f, reversed, 3);
  EXPECT_EQ(r2.plain.mean, r.plain.mean);
  EXPECT_EQ(r2.with_prior.mean, r.with_prior.mean);
  EXPECT_EQ(r2.prior_only.mean, r.prior_only.mean);
  EXPECT_GE(leaf_entropy(f, m), 0.0);
  EXPECT_LE(leaf_entropy(f, m), 1.0);
}

TEST(Evaluate, EmptyTestSetIsDataError) {
  auto m = testutil::small_dataset();
  std::erase_if(m.entries, [](const auto& e) { return e.domain == Domain::test; });
  Forest f;
  f.trees.emplace_back();
  EXPECT_THROW(evaluate(f, m), DataError);
}

TEST(Evaluate, LeafEntropyMatchesTrainingDiagnostics) {
  const auto& m = testutil::small_dataset();
  auto cfg = testutil::small_config();
  cfg.trees = 2;
  const auto r = train_forest(m, cfg);
  EXPECT_NEAR(leaf_entropy(r.forest, m), final_level_entropy(r.diagnostics), 1e-12);
}

TEST(Csv, ReportLayout) {
  EvalReport r;
  r.alpha = 0.2;
  r.e_leaf = 0.1234567;
  r.plain.mean = 50;
  r.with_prior.mean = 60.12346;
  r.prior_only.mean = 7;
  r.runtime_s = 1.5;
  EXPECT_EQ(report_csv({r}),
            "alpha,e_leaf,p,p_prior,p_prior_only,runtime_s\n"
            "0.2,0.123457,50.0000,60.1235,7.0000,1.500\n");
  LevelDiagnostics d;
  d.level = 3;
  d.alpha = 1;
  d.entropy = 0.5;
  EXPECT_EQ(diagnostics_csv({d}),
            "level,tree,alpha,entropy,chi2,kl,target_err\n3,0,1,0.50000000,0.00000000,0.00000000,-1\n");
}

TEST(Svg, ThreePanelsOneSeriesPerAlpha) {
  std::vector<LevelDiagnostics> rows;
  for (double a : {0.2, 1.0})
    for (int t = 0; t < 2; ++t)
      for (int l = 0; l < 4; ++l) {
        LevelDiagnostics d;
        d.level = l;
        d.tree = t;
        d.alpha = a;
        d.entropy = 1.0 - 0.1 * l;
        d.chi2 = 0.05 * l;
        d.kl = 0.01 * l;
        rows.push_back(d);
      }
  const auto svg = diagnostics_svg(rows);
  auto count = [&](const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = svg.find(needle); pos != std::string::npos; pos = svg.find(needle, pos + 1)) ++n;
    return n;
  };
  EXPECT_EQ(count("<polyline"), 6u);
  EXPECT_EQ(count("alpha=0.2"), 3u);
  EXPECT_EQ(count("alpha=1<"), 3u);
  EXPECT_NE(svg.find("label entropy"), std::string::npos);
  EXPECT_NE(svg.find("chi2 distance"), std::string::npos);
  EXPECT_NE(svg.find("KL divergence"), std::string::npos);
  EXPECT_EQ(svg.rfind("</svg>"), svg.size() - 7);
}
