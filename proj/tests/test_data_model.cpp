#include <gtest/gtest.h>

#include <set>

#include "dawood/data_model.hpp"
#include "test_util.hpp"

using namespace dawood;

namespace {

// Writes a w x h image and (optionally) a label map filled with `label`.
ManifestEntry make_entry(const std::filesystem::path& dir, const std::string& stem, int w, int h,
                         Domain d, std::optional<std::uint8_t> label) {
  ManifestEntry e;
  e.image = dir / (stem + ".png");
  write_png(e.image, testutil::random_image(w, h, 5));
  if (label) {
    e.labels = dir / (stem + "_labels.png");
    write_png(*e.labels, GrayImage(w, h, *label));
  }
  e.bbox = {0, 0, w, h};
  e.domain = d;
  e.width = w;
  e.height = h;
  return e;
}

}  // namespace

TEST(SpatialBin, Examples) {
  const BoundingBox b{0, 0, 10, 10};
  EXPECT_EQ(spatial_bin(9, 9, b, 4), 15);
  EXPECT_EQ(spatial_bin(0, 0, b, 4), 0);
  EXPECT_EQ(spatial_bin(9, 0, b, 4), 3);
  EXPECT_EQ(spatial_bin(0, 9, b, 4), 12);
  EXPECT_EQ(spatial_bin(5, 5, b, 1), 0);
  EXPECT_EQ(spatial_bin(10, 10, b, 4), 15);
}

TEST(SpatialBin, OutsideBoxRejected) {
  const BoundingBox b{5, 5, 10, 10};
  EXPECT_THROW(spatial_bin(4, 6, b, 4), DataError);
  EXPECT_THROW(spatial_bin(6, 16, b, 4), DataError);
  EXPECT_THROW(spatial_bin(6, 6, b, 0), UsageError);
  EXPECT_THROW(spatial_bin(6, 6, BoundingBox{5, 5, 0, 3}, 4), DataError);
}

TEST(SpatialBin, CoversEveryBinInRange) {
  for (int grid : {1, 2, 4, 8}) {
    for (auto b : {BoundingBox{3, 7, 37, 53}, BoundingBox{0, 0, 8, 8}, BoundingBox{1, 1, 100, 9}}) {
      std::set<int> seen;
      for (int y = b.y; y < b.y + b.h; ++y)
        for (int x = b.x; x < b.x + b.w; ++x) {
          const int k = spatial_bin(x, y, b, grid);
          ASSERT_GE(k, 0);
          ASSERT_LT(k, grid * grid);
          seen.insert(k);
        }
      if (b.w >= grid && b.h >= grid) EXPECT_EQ(static_cast<int>(seen.size()), grid * grid);
    }
  }
}

TEST(BoundingBox, ClampToImage) {
  EXPECT_EQ(clamp_to({-5, -5, 20, 20}, 10, 12), (BoundingBox{0, 0, 10, 12}));
  EXPECT_EQ(clamp_to({2, 3, 4, 5}, 10, 12), (BoundingBox{2, 3, 4, 5}));
}

TEST(Manifest, EmptyFileHasNoEntries) {
  const auto dir = testutil::scratch_dir();
  testutil::spit(dir / "m.jsonl", "");
  EXPECT_TRUE(load_manifest(dir / "m.jsonl").entries.empty());
  testutil::spit(dir / "m.jsonl", "\n  \n");
  EXPECT_TRUE(load_manifest(dir / "m.jsonl").entries.empty());
}

TEST(Manifest, MissingFileIsDataError) {
  const auto dir = testutil::scratch_dir();
  EXPECT_THROW(load_manifest(dir / "nope.jsonl"), DataError);
}

TEST(Manifest, RoundTrip) {
  const auto dir = testutil::scratch_dir();
  DatasetManifest m;
  m.base_dir = dir;
  m.entries.push_back(make_entry(dir, "a", 20, 16, Domain::source, 3));
  m.entries.push_back(make_entry(dir, "b", 18, 14, Domain::target, std::nullopt));
  auto t = make_entry(dir, "c", 24, 24, Domain::test, 2);
  JointMap joints;
  joints[0] = {{3, 4}, {10, 11}};
  joints[6] = {{12, 2}};
  t.joints = joints;
  t.bbox = {2, 2, 20, 20};
  m.entries.push_back(t);
  save_manifest(dir / "m.jsonl", m);
  const auto back = load_manifest(dir / "m.jsonl");
  ASSERT_EQ(back.entries.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back.entries[i].image, m.entries[i].image);
    EXPECT_EQ(back.entries[i].labels, m.entries[i].labels);
    EXPECT_EQ(back.entries[i].bbox, m.entries[i].bbox);
    EXPECT_EQ(back.entries[i].domain, m.entries[i].domain);
    EXPECT_EQ(back.entries[i].width, m.entries[i].width);
  }
  ASSERT_TRUE(back.entries[2].joints);
  EXPECT_EQ(*back.entries[2].joints, joints);
  EXPECT_FALSE(back.entries[1].joints);
  EXPECT_EQ(back.count(Domain::source), 1u);
  EXPECT_EQ(back.count(Domain::test), 1u);
}

TEST(Manifest, BadLineReportsLineNumber) {
  const auto dir = testutil::scratch_dir();
  write_png(dir / "x.png", testutil::random_image(8, 8, 1));
  write_png(dir / "x_l.png", GrayImage(8, 8, 1));
  const std::string good =
      R"({"image":"x.png","labels":"x_l.png","bbox":[0,0,8,8],"domain":"source","joints":null})";
  auto expect_line = [&](const std::string& body, const std::string& needle) {
    testutil::spit(dir / "m.jsonl", body);
    try {
      load_manifest(dir / "m.jsonl");
      FAIL() << "expected DataError";
    } catch (const DataError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  expect_line(good + "\n" + good + "\n{not json\n", "line 3");
  expect_line(good + "\n" + R"({"image":"x.png","bbox":[0,0,8,8],"domain":"sideways"})" + "\n",
              "line 2");
  expect_line(R"({"image":"x.png","bbox":[0,0,8,8],"domain":"source"})", "line 1");
  expect_line(R"({"image":"x.png","bbox":[0,0,-1,8],"domain":"target"})", "line 1");
  expect_line(R"({"image":"missing.png","bbox":[0,0,8,8],"domain":"target"})", "missing.png");
}

TEST(Manifest, LabelSizeMismatchRejected) {
  const auto dir = testutil::scratch_dir();
  write_png(dir / "x.png", testutil::random_image(8, 8, 1));
  write_png(dir / "x_l.png", GrayImage(9, 8, 1));
  testutil::spit(dir / "m.jsonl",
                R"({"image":"x.png","labels":"x_l.png","bbox":[0,0,8,8],"domain":"source"})");
  EXPECT_THROW(load_manifest(dir / "m.jsonl"), DataError);
}

TEST(Manifest, BoxClampedToImage) {
  const auto dir = testutil::scratch_dir();
  write_png(dir / "x.png", testutil::random_image(8, 8, 1));
  testutil::spit(dir / "m.jsonl", R"({"image":"x.png","bbox":[-3,2,100,4],"domain":"target"})");
  EXPECT_EQ(load_manifest(dir / "m.jsonl").entries[0].bbox, (BoundingBox{0, 2, 8, 4}));
}

TEST(LabelMap, OutOfRangeValueRejected) {
  const auto dir = testutil::scratch_dir();
  auto e = make_entry(dir, "a", 6, 6, Domain::source, 8);
  EXPECT_THROW(load_label_map(e), DataError);
}

TEST(IterPixels, CountsAndOrder) {
  const auto dir = testutil::scratch_dir();
  DatasetManifest m;
  m.base_dir = dir;
  m.entries.push_back(make_entry(dir, "a", 10, 10, Domain::source, 2));
  m.entries.push_back(make_entry(dir, "b", 10, 10, Domain::target, std::nullopt));
  auto s1 = collect_pixels(m, Domain::source, 1, 4);
  ASSERT_EQ(s1.size(), 100u);
  EXPECT_EQ(collect_pixels(m, Domain::source, 2, 4).size(), 25u);
  for (std::size_t i = 0; i < s1.size(); ++i) {
    EXPECT_EQ(s1[i].x, i % 10);
    EXPECT_EQ(s1[i].y, i / 10);
    EXPECT_EQ(s1[i].label, 2);
    EXPECT_EQ(s1[i].bin, spatial_bin(s1[i].x, s1[i].y, m.entries[0].bbox, 4));
    EXPECT_EQ(s1[i].image, 0u);
  }
  const auto t = collect_pixels(m, Domain::target, 1, 4);
  ASSERT_EQ(t.size(), 100u);
  for (const auto& s : t) {
    EXPECT_FALSE(s.labelled());
    EXPECT_EQ(s.image, 1u);
  }
  EXPECT_TRUE(collect_pixels(m, Domain::test, 1, 4).empty());
  EXPECT_THROW(collect_pixels(m, Domain::source, 0, 4), UsageError);
}

TEST(IterPixels, AllBackgroundLabels) {
  const auto dir = testutil::scratch_dir();
  DatasetManifest m;
  m.entries.push_back(make_entry(dir, "a", 7, 5, Domain::source, kBackground));
  for (const auto& s : collect_pixels(m, Domain::source, 1, 2)) EXPECT_EQ(s.label, 7);
}

TEST(Png, RoundTrip) {
  const auto dir = testutil::scratch_dir();
  const auto img = testutil::random_image(13, 9, 21);
  write_png(dir / "a.png", img);
  const auto back = read_rgb_png(dir / "a.png");
  EXPECT_EQ(back.width, 13);
  EXPECT_EQ(back.height, 9);
  EXPECT_EQ(back.data, img.data);
  EXPECT_THROW(read_rgb_png(dir / "nope.png"), DataError);
}
