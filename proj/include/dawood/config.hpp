#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>

#include "dawood/error.hpp"

namespace dawood {

// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw UsageError("invalid value '" + std::string(text) + "' for '" + std::string(key) + "'");
  return value;
}

// Every training / inference tunable. Serialised verbatim into model files
// (except `workers`, which never affects results).
struct RunConfig {
  int trees = 2;
  int depth = 12;
  int candidates = 2000;          // weak-classifier shapes proposed per node
  int thresholds = 60;            // thresholds per shape
  int samples = 100;              // reservoir size per domain per frontier node
  int finalist_shapes = 30;
  int finalist_thresholds = 10;
  int bins = 9;                   // orientation bins
  int grid = 4;                   // spatial bins per axis
  double radius = 0.5;            // rectangle corner range, sqrt(area) units
  int min_syn = 50;               // nodes with fewer synthetic pixels become leaves
  double alpha = 0.2;
  int prior_grid = 24;
  std::uint64_t seed = 1;
  int stride = 2;                 // pixel stride in both axes
  unsigned workers = 1;
  std::string config_file;        // where overrides came from, if anywhere

  int spatial_bins() const { return grid * grid; }

  void validate() const {
    auto need = [](bool ok, const char* msg) {
      if (!ok) throw UsageError(msg);
    };
    need(alpha >= 0.0 && alpha <= 1.0, "alpha must lie in [0,1]");
    need(trees >= 1, "trees must be >= 1");
    need(depth >= 1 && depth <= 30, "depth must lie in [1,30]");
    need(candidates >= 1, "candidates must be >= 1");
    need(thresholds >= 1, "thresholds must be >= 1");
    need(samples >= 1, "samples must be >= 1");
    need(finalist_shapes >= 1, "finalist_shapes must be >= 1");
    need(finalist_thresholds >= 1, "finalist_thresholds must be >= 1");
    need(bins >= 2, "bins must be >= 2");
    need(grid >= 1 && grid <= 255, "grid must lie in [1,255]");
    need(radius > 0.0, "radius must be positive");
    need(min_syn >= 1, "min_syn must be >= 1");
    need(prior_grid >= 1, "prior_grid must be >= 1");
    need(stride >= 1, "stride must be >= 1");
    need(workers >= 1, "workers must be >= 1");
  }

  void set(std::string_view key, std::string_view value) {
    if (key == "trees") trees = parse_number<int>(key, value);
    else if (key == "depth") depth = parse_number<int>(key, value);
    else if (key == "candidates") candidates = parse_number<int>(key, value);
    else if (key == "thresholds") thresholds = parse_number<int>(key, value);
    else if (key == "samples") samples = parse_number<int>(key, value);
    else if (key == "finalist_shapes") finalist_shapes = parse_number<int>(key, value);
    else if (key == "finalist_thresholds") finalist_thresholds = parse_number<int>(key, value);
    else if (key == "bins") bins = parse_number<int>(key, value);
    else if (key == "grid") grid = parse_number<int>(key, value);
    else if (key == "radius") radius = parse_number<double>(key, value);
    else if (key == "min_syn") min_syn = parse_number<int>(key, value);
    else if (key == "alpha") alpha = parse_number<double>(key, value);
    else if (key == "prior_grid") prior_grid = parse_number<int>(key, value);
    else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
    else if (key == "stride") stride = parse_number<int>(key, value);
    else if (key == "workers") workers = parse_number<unsigned>(key, value);
    else if (key == "config_file") config_file = std::string(value);
    else throw UsageError("unknown configuration key '" + std::string(key) + "'");
  }

  // Model-relevant settings as key=value lines, in a fixed order.
  std::string to_text() const {
    std::ostringstream os;
    os << "trees=" << trees << '\n'
       << "depth=" << depth << '\n'
       << "candidates=" << candidates << '\n'
       << "thresholds=" << thresholds << '\n'
       << "samples=" << samples << '\n'
       << "finalist_shapes=" << finalist_shapes << '\n'
       << "finalist_thresholds=" << finalist_thresholds << '\n'
       << "bins=" << bins << '\n'
       << "grid=" << grid << '\n'
       << "radius=" << format_double(radius) << '\n'
       << "min_syn=" << min_syn << '\n'
       << "alpha=" << format_double(alpha) << '\n'
       << "prior_grid=" << prior_grid << '\n'
       << "seed=" << seed << '\n'
       << "stride=" << stride << '\n'
       << "config_file=" << config_file << '\n';
    return os.str();
  }
};

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Applies flat key=value text; '#' starts a comment.
inline void apply_config_text(RunConfig& cfg, std::string_view text, std::string_view origin) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw UsageError(std::string(origin) + ":" + std::to_string(line_no) + ": expected key=value");
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

inline void load_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  apply_config_text(cfg, ss.str(), path.string());
  cfg.config_file = path.string();
}

inline RunConfig config_from_text(std::string_view text) {
  RunConfig cfg;
  apply_config_text(cfg, text, "<model>");
  return cfg;
}

}  // namespace dawood
