// dawood: synthetic data generation, training, classification and evaluation.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dawood/config.hpp"
#include "dawood/data_model.hpp"
#include "dawood/error.hpp"
#include "dawood/eval.hpp"
#include "dawood/forest.hpp"
#include "dawood/infer.hpp"
#include "dawood/plot.hpp"
#include "dawood/synthgen.hpp"
#include "dawood/train.hpp"

namespace fs = std::filesystem;
using namespace dawood;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  os << text;
  if (!os) throw DataError("cannot write '" + path.string() + "'");
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Tunables shared by the training commands. Precedence, lowest first:
// built-in defaults, DAWOOD_SEED, --config file, individual flags.
struct Tunables {
  std::string config_file;
  std::map<std::string, std::string> flags;

  void attach(CLI::App& app) {
    app.add_option("--config", config_file, "key=value configuration file")->check(CLI::ExistingFile);
    const std::pair<const char*, const char*> keys[] = {
        {"trees", "number of trees"},
        {"depth", "tree depth"},
        {"candidates", "weak-classifier shapes per node"},
        {"thresholds", "thresholds per shape"},
        {"samples", "reservoir size per domain per node"},
        {"finalist-shapes", "shapes kept after the first stage"},
        {"finalist-thresholds", "thresholds kept per finalist shape"},
        {"bins", "orientation bins"},
        {"grid", "spatial bins per axis"},
        {"radius", "rectangle corner range in sqrt(area) units"},
        {"min-syn", "minimum synthetic pixels to split a node"},
        {"prior-grid", "location prior cells per axis"},
        {"seed", "random seed (falls back to DAWOOD_SEED)"},
        {"stride", "pixel stride"},
        {"workers", "worker threads"},
    };
    for (const auto& [key, help] : keys) {
      std::string k = key;
      app.add_option_function<std::string>(
          "--" + k, [this, k](const std::string& v) { flags[k] = v; }, help);
    }
  }

  RunConfig resolve(std::optional<double> alpha = std::nullopt) const {
    RunConfig cfg;
    if (const char* env = std::getenv("DAWOOD_SEED"); env && *env) cfg.set("seed", env);
    if (!config_file.empty()) load_config_file(cfg, config_file);
    for (const auto& [k, v] : flags) {
      std::string key = k;
      for (auto& c : key)
        if (c == '-') c = '_';
      cfg.set(key, v);
    }
    if (alpha) cfg.alpha = *alpha;
    cfg.validate();
    return cfg;
  }
};

std::vector<double> parse_alphas(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<double>("alphas", trim(item)));
  if (out.empty()) throw UsageError("--alphas needs at least one value");
  for (double a : out)
    if (a < 0 || a > 1) throw UsageError("alpha must lie in [0,1]");
  return out;
}

std::vector<LevelDiagnostics> parse_diagnostics_csv(const std::string& text, const std::string& origin) {
  std::vector<LevelDiagnostics> rows;
  std::stringstream ss(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(ss, line)) {
    ++n;
    if (n == 1 || trim(line).empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(std::string(trim(cell)));
    if (f.size() != 7) throw DataError(origin + ":" + std::to_string(n) + ": expected 7 fields");
    LevelDiagnostics r;
    r.level = parse_number<int>("level", f[0]);
    r.tree = parse_number<int>("tree", f[1]);
    r.alpha = parse_number<double>("alpha", f[2]);
    r.entropy = parse_number<double>("entropy", f[3]);
    r.chi2 = parse_number<double>("chi2", f[4]);
    r.kl = parse_number<double>("kl", f[5]);
    r.target_err = parse_number<double>("target_err", f[6]);
    rows.push_back(r);
  }
  return rows;
}

Domain domain_from(const std::string& s) {
  if (s == "source") return Domain::source;
  if (s == "target") return Domain::target;
  if (s == "test") return Domain::test;
  throw UsageError("unknown domain '" + s + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Domain-adaptive random forests for body part labelling"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "render a synthetic dataset");
  std::string gen_out, source_style = "domA", target_style = "domB";
  int n_source = 112, n_target = 112, n_test = 77;
  std::optional<std::uint64_t> gen_seed;
  unsigned gen_workers = 1;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--source", n_source, "labelled source images");
  gen->add_option("--target", n_target, "unlabelled target images");
  gen->add_option("--test", n_test, "test images");
  gen->add_option("--seed", gen_seed, "random seed (falls back to DAWOOD_SEED)");
  gen->add_option("--source-style", source_style, "source rendering style (domA|domB)");
  gen->add_option("--target-style", target_style, "target and test rendering style");
  gen->add_option("--workers", gen_workers, "worker threads")->check(CLI::PositiveNumber);

  // train
  auto* train = app.add_subcommand("train", "train a forest");
  std::string train_data, train_out, train_diag, train_svg;
  double train_alpha = 0.2;
  Tunables train_t;
  train->add_option("--data", train_data, "manifest")->required();
  train->add_option("--out", train_out, "model file")->required();
  train->add_option("--alpha", train_alpha, "entropy weight in [0,1]");
  train->add_option("--diagnostics", train_diag, "per-level diagnostics CSV (default: <out>.diag.csv)");
  train->add_option("--svg", train_svg, "per-level diagnostics plot");
  train_t.attach(*train);

  // classify
  auto* classify = app.add_subcommand("classify", "label pixels of manifest images");
  std::string cls_model, cls_data, cls_out, cls_domain = "test";
  bool cls_prior = false, cls_dump = false;
  unsigned cls_workers = 1;
  classify->add_option("--model", cls_model, "model file")->required();
  classify->add_option("--data", cls_data, "manifest")->required();
  classify->add_option("--out", cls_out, "output directory")->required();
  classify->add_option("--domain", cls_domain, "which entries to classify (source|target|test)");
  classify->add_flag("--prior", cls_prior, "modulate by the location prior");
  classify->add_flag("--dump-posterior", cls_dump, "write per-part float32 posterior planes");
  classify->add_option("--workers", cls_workers, "worker threads")->check(CLI::PositiveNumber);

  // eval
  auto* eval = app.add_subcommand("eval", "score a model on the test entries");
  std::string ev_model, ev_data, ev_out, ev_parts;
  unsigned ev_workers = 1;
  eval->add_option("--model", ev_model, "model file")->required();
  eval->add_option("--data", ev_data, "manifest")->required();
  eval->add_option("--out", ev_out, "report CSV (default: stdout)");
  eval->add_option("--parts", ev_parts, "per-part accuracy CSV");
  eval->add_option("--workers", ev_workers, "worker threads")->check(CLI::PositiveNumber);

  // sweep
  auto* sw = app.add_subcommand("sweep", "train and score one forest per alpha");
  std::string sw_data, sw_out, sw_alphas = "0.2,1.0";
  bool sw_models = false;
  Tunables sw_t;
  sw->add_option("--data", sw_data, "manifest")->required();
  sw->add_option("--out", sw_out, "output directory")->required();
  sw->add_option("--alphas", sw_alphas, "comma-separated alpha values");
  sw->add_flag("--save-models", sw_models, "also write alpha_<a>.dawf per alpha");
  sw_t.attach(*sw);

  // diag
  auto* diag = app.add_subcommand("diag", "plot per-level diagnostics CSVs");
  std::vector<std::string> diag_in;
  std::string diag_out;
  diag->add_option("--diagnostics", diag_in, "diagnostics CSV files")->required()->check(CLI::ExistingFile);
  diag->add_option("--out", diag_out, "SVG file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ErrorKind::usage);
  }

  try {
    if (*gen) {
      std::uint64_t seed = 1;
      if (gen_seed)
        seed = *gen_seed;
      else if (const char* env = std::getenv("DAWOOD_SEED"); env && *env)
        seed = parse_number<std::uint64_t>("DAWOOD_SEED", env);
      synth::GenerateConfig cfg;
      cfg.source_style = synth::style_by_name(source_style);
      cfg.target_style = synth::style_by_name(target_style);
      cfg.workers = gen_workers;
      const auto m = synth::generate(gen_out, n_source, n_target, n_test, seed, cfg);
      std::cout << "wrote " << m.entries.size() << " entries to "
                << (fs::path(gen_out) / "manifest.jsonl").string() << '\n';
    } else if (*train) {
      const auto cfg = train_t.resolve(train_alpha);
      const auto m = load_manifest(train_data);
      const auto result = train_forest(m, cfg);
      save_forest(train_out, result.forest);
      const auto diag_path = train_diag.empty() ? train_out + ".diag.csv" : train_diag;
      write_text(diag_path, diagnostics_csv(result.diagnostics));
      if (!train_svg.empty()) write_text(train_svg, diagnostics_svg(result.diagnostics));
      std::cout << "model " << train_out << " (alpha=" << format_double(cfg.alpha)
                << ", e_leaf=" << fixed(final_level_entropy(result.diagnostics), 6)
                << ", target evaluations=" << result.target_evaluations << ")\n";
    } else if (*classify) {
      const auto forest = load_forest(cls_model);
      const auto m = load_manifest(cls_data);
      const auto domain = domain_from(cls_domain);
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < m.entries.size(); ++i)
        if (m.entries[i].domain == domain) idx.push_back(i);
      if (idx.empty()) throw DataError(std::string("manifest has no ") + domain_name(domain) + " entries");
      fs::create_directories(cls_out);
      std::vector<std::string> joint_rows(idx.size());
      parallel_for(idx.size(), cls_workers, [&](std::size_t k, unsigned) {
        const auto& e = m.entries[idx[k]];
        const auto image = read_rgb_png(e.image);
        const auto ch = compute_channels(image, e.bbox, forest.config.bins);
        auto pm = posterior(forest, ch, e.bbox);
        if (cls_prior) pm = modulate(pm, forest.prior);
        const auto pixels = extract_pixels(pm, forest.part_area_fraction);
        const auto stem = e.image.stem().string();
        write_png(fs::path(cls_out) / (stem + "_overlay.png"), render_overlay(image, e.bbox, pixels));
        if (cls_dump) write_posterior_dump(fs::path(cls_out) / (stem + "_posterior.bin"), pm);
        const auto joints = estimate_joints(pixels);
        std::ostringstream os;
        for (int p = 0; p < kNumJointParts; ++p)
          os << e.image.filename().string() << ',' << kPartNames[p] << ',' << fixed(joints[p].x, 2)
             << ',' << fixed(joints[p].y, 2) << ',' << pixels[p].size() << '\n';
        joint_rows[k] = os.str();
      });
      std::string csv = "image,part,x,y,pixels\n";
      for (const auto& r : joint_rows) csv += r;
      write_text(fs::path(cls_out) / "joints.csv", csv);
      std::cout << "classified " << idx.size() << " images into " << cls_out << '\n';
    } else if (*eval) {
      const auto forest = load_forest(ev_model);
      const auto m = load_manifest(ev_data);
      const auto start = std::chrono::steady_clock::now();
      auto report = evaluate(forest, m, ev_workers);
      report.e_leaf = leaf_entropy(forest, m, ev_workers);
      report.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      const auto csv = report_csv({report});
      if (ev_out.empty())
        std::cout << csv;
      else
        write_text(ev_out, csv);
      if (!ev_parts.empty()) write_text(ev_parts, part_csv({report}));
    } else if (*sw) {
      const auto alphas = parse_alphas(sw_alphas);
      const auto cfg = sw_t.resolve();
      const auto m = load_manifest(sw_data);
      const auto result = sweep(m, alphas, cfg);
      const fs::path out(sw_out);
      fs::create_directories(out);
      write_text(out / "report.csv", report_csv(result.reports()));
      write_text(out / "parts.csv", part_csv(result.reports()));
      write_text(out / "diagnostics.csv", diagnostics_csv(result.diagnostics()));
      write_text(out / "diagnostics.svg", diagnostics_svg(result.diagnostics()));
      if (sw_models)
        for (const auto& run : result.runs)
          save_forest(out / ("alpha_" + format_double(run.report.alpha) + ".dawf"), run.forest);
      std::cout << report_csv(result.reports());
    } else if (*diag) {
      std::vector<LevelDiagnostics> rows;
      for (const auto& path : diag_in) {
        auto r = parse_diagnostics_csv(read_text(path), path);
        rows.insert(rows.end(), r.begin(), r.end());
      }
      if (rows.empty()) throw DataError("no diagnostics rows");
      write_text(diag_out, diagnostics_svg(rows));
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::internal);
  }
  return 0;
}
