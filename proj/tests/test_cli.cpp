#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>

#include "dawood/eval.hpp"
#include "dawood/forest.hpp"
#include "test_util.hpp"

using namespace dawood;
namespace fs = std::filesystem;

namespace {

const std::string kSmall =
    " --trees 1 --depth 4 --candidates 30 --thresholds 6 --samples 50 --finalist-shapes 4"
    " --finalist-thresholds 3 --min-syn 20 --stride 3 --prior-grid 6";

int run(const std::string& args, const fs::path& log, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + "\"" DAWOOD_CLI "\" " + args + " > \"" +
                          log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Generates a small dataset once per process via the CLI itself.
const fs::path& cli_dataset() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "dawood_tests" / ("cli_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    if (run("gen --out \"" + (d / "data").string() + "\" --source 10 --target 10 --test 5 --seed 3",
            d / "gen.log") != 0)
      throw std::runtime_error("gen failed: " + testutil::slurp(d / "gen.log"));
    return d / "data";
  }();
  return dir;
}

std::string manifest() { return "\"" + (cli_dataset() / "manifest.jsonl").string() + "\""; }

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

}  // namespace

TEST(Cli, HelpExitsZero) {
  const auto dir = testutil::scratch_dir();
  EXPECT_EQ(run("--help", dir / "log"), 0);
  EXPECT_EQ(run("train --help", dir / "log"), 0);
  EXPECT_NE(testutil::slurp(dir / "log").find("--alpha"), std::string::npos);
}

TEST(Cli, UsageErrorsExitTwo) {
  const auto dir = testutil::scratch_dir();
  EXPECT_EQ(run("", dir / "log"), 2);
  EXPECT_EQ(run("frobnicate", dir / "log"), 2);
  EXPECT_EQ(run("train --data " + manifest(), dir / "log"), 2);  // missing --out
  EXPECT_EQ(run("train --data " + manifest() + " --out " + q(dir / "m.dawf") + " --alpha 1.5",
                dir / "log"),
            2);
  EXPECT_NE(testutil::slurp(dir / "log").find("alpha"), std::string::npos);
  EXPECT_EQ(run("train --data " + manifest() + " --out " + q(dir / "m.dawf") + " --depth zero",
                dir / "log"),
            2);
  EXPECT_EQ(run("sweep --data " + manifest() + " --out " + q(dir) + " --alphas 0.2,2", dir / "log"),
            2);
  EXPECT_FALSE(fs::exists(dir / "m.dawf"));
}

TEST(Cli, DataErrorsExitThree) {
  const auto dir = testutil::scratch_dir();
  EXPECT_EQ(run("train --data " + q(dir / "missing.jsonl") + " --out " + q(dir / "m.dawf"), dir / "log"),
            3);
  testutil::spit(dir / "bad.jsonl", "{\"image\": 5}\n");
  EXPECT_EQ(run("train --data " + q(dir / "bad.jsonl") + " --out " + q(dir / "m.dawf"), dir / "log"), 3);
  EXPECT_NE(testutil::slurp(dir / "log").find("line 1"), std::string::npos);
  testutil::spit(dir / "junk.dawf", "not a model");
  EXPECT_EQ(run("eval --model " + q(dir / "junk.dawf") + " --data " + manifest(), dir / "log"), 3);
}

TEST(Cli, EvalOnEmptyTestSetFails) {
  const auto dir = testutil::scratch_dir();
  ASSERT_EQ(run("train --data " + manifest() + " --out " + q(dir / "m.dawf") + kSmall, dir / "log"), 0)
      << testutil::slurp(dir / "log");
  auto m = load_manifest(cli_dataset() / "manifest.jsonl");
  std::erase_if(m.entries, [](const auto& e) { return e.domain == Domain::test; });
  save_manifest(cli_dataset() / "no_test.jsonl", m);
  const int code = run("eval --model " + q(dir / "m.dawf") + " --data " +
                           q(cli_dataset() / "no_test.jsonl"),
                       dir / "log");
  EXPECT_EQ(code, 3);
  EXPECT_NE(testutil::slurp(dir / "log").find("no test entries"), std::string::npos);
}

TEST(Cli, TrainWritesModelAndDiagnostics) {
  const auto dir = testutil::scratch_dir();
  ASSERT_EQ(run("train --data " + manifest() + " --out " + q(dir / "m.dawf") + " --svg " +
                    q(dir / "d.svg") + kSmall,
                dir / "log"),
            0)
      << testutil::slurp(dir / "log");
  const auto f = load_forest(dir / "m.dawf");
  EXPECT_EQ(f.trees.size(), 1u);
  EXPECT_DOUBLE_EQ(f.config.alpha, 0.2);
  EXPECT_EQ(f.config.depth, 4);
  const auto diag = testutil::slurp(dir / "m.dawf.diag.csv");
  EXPECT_EQ(diag.rfind("level,tree,alpha,entropy,chi2,kl,target_err\n", 0), 0u);
  EXPECT_EQ(std::count(diag.begin(), diag.end(), '\n'), 5);
  EXPECT_NE(testutil::slurp(dir / "d.svg").find("<svg"), std::string::npos);
}

TEST(Cli, SeedPrecedence) {
  const auto dir = testutil::scratch_dir();
  const auto seed_of = [&](const std::string& extra, const std::string& env) {
    const auto out = dir / "m.dawf";
    fs::remove(out);
    if (run("train --data " + manifest() + " --out " + q(out) + kSmall + extra,
            dir / "log", env) != 0)
      return std::uint64_t{0};
    return load_forest(out).config.seed;
  };
  testutil::spit(dir / "c.cfg", "seed=30\n");
  EXPECT_EQ(seed_of("", "env -u DAWOOD_SEED"), 1u);
  EXPECT_EQ(seed_of("", "DAWOOD_SEED=20"), 20u);
  EXPECT_EQ(seed_of(" --config " + q(dir / "c.cfg"), "DAWOOD_SEED=20"), 30u);
  EXPECT_EQ(seed_of(" --config " + q(dir / "c.cfg") + " --seed 40", "DAWOOD_SEED=20"), 40u);
}

TEST(Cli, ClassifyWritesOverlaysAndJoints) {
  const auto dir = testutil::scratch_dir();
  ASSERT_EQ(run("train --data " + manifest() + " --out " + q(dir / "m.dawf") + kSmall, dir / "log"), 0);
  ASSERT_EQ(run("classify --model " + q(dir / "m.dawf") + " --data " + manifest() + " --out " +
                    q(dir / "cls") + " --prior --dump-posterior",
                dir / "log"),
            0)
      << testutil::slurp(dir / "log");
  const auto m = load_manifest(cli_dataset() / "manifest.jsonl");
  std::size_t tests = 0;
  for (const auto& e : m.entries) {
    if (e.domain != Domain::test) continue;
    ++tests;
    const auto stem = e.image.stem().string();
    const auto overlay = read_rgb_png(dir / "cls" / (stem + "_overlay.png"));
    EXPECT_EQ(overlay.width, e.width);
    EXPECT_EQ(overlay.height, e.height);
    EXPECT_EQ(fs::file_size(dir / "cls" / (stem + "_posterior.bin")),
              12u + 4u * kNumParts * static_cast<std::uint64_t>(e.bbox.w) * e.bbox.h);
  }
  const auto joints = testutil::slurp(dir / "cls" / "joints.csv");
  EXPECT_EQ(static_cast<std::size_t>(std::count(joints.begin(), joints.end(), '\n')),
            1 + tests * kNumJointParts);
  EXPECT_EQ(run("classify --model " + q(dir / "m.dawf") + " --data " + manifest() + " --out " +
                    q(dir / "cls") + " --domain sideways",
                dir / "log"),
            2);
}

TEST(Cli, EvalWritesReport) {
  const auto dir = testutil::scratch_dir();
  ASSERT_EQ(run("train --data " + manifest() + " --out " + q(dir / "m.dawf") + kSmall, dir / "log"), 0);
  ASSERT_EQ(run("eval --model " + q(dir / "m.dawf") + " --data " + manifest() + " --out " +
                    q(dir / "r.csv") + " --parts " + q(dir / "p.csv"),
                dir / "log"),
            0);
  const auto report = testutil::slurp(dir / "r.csv");
  EXPECT_EQ(report.rfind("alpha,e_leaf,p,p_prior,p_prior_only,runtime_s\n0.2,", 0), 0u);
  const auto parts = testutil::slurp(dir / "p.csv");
  EXPECT_EQ(std::count(parts.begin(), parts.end(), '\n'), 4);
}

TEST(Cli, SweepOutputsAndWorkerInvariance) {
  const auto dir = testutil::scratch_dir();
  for (const char* w : {"1", "4"}) {
    ASSERT_EQ(run("sweep --data " + manifest() + " --out " + q(dir / w) + " --save-models --workers " +
                      w + kSmall,
                  dir / "log"),
              0)
        << testutil::slurp(dir / "log");
  }
  const auto report = testutil::slurp(dir / "1" / "report.csv");
  EXPECT_EQ(std::count(report.begin(), report.end(), '\n'), 3);
  const auto svg = testutil::slurp(dir / "1" / "diagnostics.svg");
  EXPECT_EQ(std::count(svg.begin(), svg.end(), '\n') > 0, true);
  for (const char* label : {"alpha=0.2<", "alpha=1<"}) {
    std::size_t n = 0;
    for (auto pos = svg.find(label); pos != std::string::npos; pos = svg.find(label, pos + 1)) ++n;
    EXPECT_EQ(n, 3u) << label;
  }
  for (const char* f : {"alpha_0.2.dawf", "alpha_1.dawf", "diagnostics.csv", "diagnostics.svg",
                        "parts.csv"})
    EXPECT_EQ(testutil::slurp(dir / "1" / f), testutil::slurp(dir / "4" / f)) << f;
  auto strip_runtime = [](const std::string& csv) {
    std::string out, line;
    std::stringstream ss(csv);
    while (std::getline(ss, line)) out += line.substr(0, line.rfind(',')) + '\n';
    return out;
  };
  EXPECT_EQ(strip_runtime(report), strip_runtime(testutil::slurp(dir / "4" / "report.csv")));
}

TEST(Cli, DiagReplotsCsv) {
  const auto dir = testutil::scratch_dir();
  ASSERT_EQ(run("train --data " + manifest() + " --out " + q(dir / "m.dawf") + " --svg " +
                    q(dir / "a.svg") + kSmall,
                dir / "log"),
            0);
  ASSERT_EQ(run("diag --diagnostics " + q(dir / "m.dawf.diag.csv") + " --out " + q(dir / "b.svg"),
                dir / "log"),
            0);
  const auto svg = testutil::slurp(dir / "b.svg");
  std::size_t lines = 0;
  for (auto pos = svg.find("<polyline"); pos != std::string::npos; pos = svg.find("<polyline", pos + 1))
    ++lines;
  EXPECT_EQ(lines, 3u);
  EXPECT_NE(svg.find("alpha=0.2<"), std::string::npos);
}

TEST(Cli, GenIsReproducible) {
  const auto dir = testutil::scratch_dir();
  ASSERT_EQ(run("gen --out " + q(dir / "a") + " --source 3 --target 2 --test 2 --seed 9", dir / "log"), 0);
  ASSERT_EQ(run("gen --out " + q(dir / "b") + " --source 3 --target 2 --test 2 --workers 3",
                dir / "log", "DAWOOD_SEED=9"),
            0);
  for (const auto& e : fs::recursive_directory_iterator(dir / "a")) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), dir / "a");
    EXPECT_EQ(testutil::slurp(e.path()), testutil::slurp(dir / "b" / rel)) << rel;
  }
}
