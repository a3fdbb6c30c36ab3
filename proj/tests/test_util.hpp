#pragma once

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <unistd.h>

#include "dawood/config.hpp"
#include "dawood/image.hpp"
#include "dawood/rng.hpp"
#include "dawood/synthgen.hpp"

namespace dawood::testutil {

// Fresh per-test scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir() {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  auto dir = std::filesystem::temp_directory_path() / "dawood_tests" /
             (std::string(info->test_suite_name()) + "." + info->name());
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  os << text;
}

inline RgbImage random_image(int w, int h, std::uint64_t seed) {
  RgbImage img(w, h);
  Rng rng(seed);
  for (auto& v : img.data) v = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

inline RgbImage constant_image(int w, int h, std::uint8_t v) { return RgbImage(w, h, v); }

// A small two-domain dataset, generated once per process.
inline const DatasetManifest& small_dataset() {
  static const DatasetManifest m = [] {
    const auto dir = std::filesystem::temp_directory_path() / "dawood_tests" /
                     ("small_" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    synth::generate(dir, 12, 12, 6, 5);
    return load_manifest(dir / "manifest.jsonl");
  }();
  return m;
}

// Settings small enough for unit tests to train in well under a second.
inline RunConfig small_config() {
  RunConfig c;
  c.trees = 1;
  c.depth = 5;
  c.candidates = 40;
  c.thresholds = 8;
  c.samples = 60;
  c.finalist_shapes = 6;
  c.finalist_thresholds = 3;
  c.min_syn = 20;
  c.stride = 3;
  c.prior_grid = 8;
  return c;
}

}  // namespace dawood::testutil
