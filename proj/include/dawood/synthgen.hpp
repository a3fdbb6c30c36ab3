#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "dawood/data_model.hpp"
#include "dawood/image.hpp"
#include "dawood/parallel.hpp"
#include "dawood/part.hpp"
#include "dawood/rng.hpp"

namespace dawood::synth {

// Procedural two-domain articulated figures with per-pixel part labels.

enum class Joint : int {
  head, l_shoulder, r_shoulder, l_elbow, r_elbow, l_hand, r_hand,
  l_hip, r_hip, l_knee, r_knee, l_foot, r_foot,
};
inline constexpr int kNumJoints = 13;

// Left and right joints share a class.
inline constexpr std::array<int, kNumJoints> kJointPart = {
    6, 3, 3, 4, 4, 5, 5, 2, 2, 1, 1, 0, 0};

struct Vec2 {
  double x = 0, y = 0;
  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  friend bool operator==(Vec2, Vec2) = default;
};

// Unit vector at `angle` from the downward vertical, positive towards +x.
inline Vec2 limb_dir(double angle) { return {std::sin(angle), std::cos(angle)}; }

// Side-on walking pose. Limb angles are measured from the downward vertical;
// index 0 is the left (far) side, 1 the right (near) side.
struct PoseSpec {
  Vec2 root;            // pelvis centre, pixels
  double height = 80;   // figure height, pixels
  double lean = 0;      // torso angle from the upward vertical
  double head_tilt = 0;
  std::array<double, 2> upper_arm{}, lower_arm{}, upper_leg{}, lower_leg{};
  friend bool operator==(const PoseSpec&, const PoseSpec&) = default;
};

// Segment lengths and joint spacing as fractions of figure height.
struct Proportions {
  double torso = 0.31, neck_to_head = 0.085;
  double upper_arm = 0.165, lower_arm = 0.16;
  double upper_leg = 0.235, lower_leg = 0.235;
  double shoulder_offset = 0.035, hip_offset = 0.025;
};

struct PoseConfig {
  int canvas_width = 72;
  int canvas_height = 112;
  double min_height = 84;
  double max_height = 96;
  double margin = 4;  // joints keep this distance from the canvas edge
};

inline std::array<Vec2, kNumJoints> forward_kinematics(const PoseSpec& p,
                                                       const Proportions& pr = {}) {
  const double H = p.height;
  std::array<Vec2, kNumJoints> j;
  const Vec2 up{std::sin(p.lean), -std::cos(p.lean)};
  const Vec2 across{std::cos(p.lean), std::sin(p.lean)};
  const Vec2 pelvis = p.root;
  const Vec2 neck = pelvis + up * (pr.torso * H);
  j[int(Joint::head)] =
      neck + Vec2{std::sin(p.lean + p.head_tilt), -std::cos(p.lean + p.head_tilt)} *
                 (pr.neck_to_head * H);
  for (int s = 0; s < 2; ++s) {
    const double sign = s == 0 ? -1.0 : 1.0;
    const Vec2 shoulder = neck + across * (sign * pr.shoulder_offset * H);
    const Vec2 elbow = shoulder + limb_dir(p.upper_arm[s]) * (pr.upper_arm * H);
    const Vec2 hand = elbow + limb_dir(p.lower_arm[s]) * (pr.lower_arm * H);
    const Vec2 hip = pelvis + across * (sign * pr.hip_offset * H);
    const Vec2 knee = hip + limb_dir(p.upper_leg[s]) * (pr.upper_leg * H);
    const Vec2 foot = knee + limb_dir(p.lower_leg[s]) * (pr.lower_leg * H);
    j[int(Joint::l_shoulder) + s] = shoulder;
    j[int(Joint::l_elbow) + s] = elbow;
    j[int(Joint::l_hand) + s] = hand;
    j[int(Joint::l_hip) + s] = hip;
    j[int(Joint::l_knee) + s] = knee;
    j[int(Joint::l_foot) + s] = foot;
  }
  return j;
}

// Walking cycle. Every side-dependent term is g(phase) on the left and
// g(phase + 1/2) on the right, so half a cycle mirrors the legs exactly.
// Seeded noise only perturbs side-independent quantities.
inline PoseSpec sample_pose(std::uint64_t seed, double phase, const PoseConfig& cfg = {}) {
  Rng rng(derive_seed({seed, 0x706f7365}));
  const double thigh_amp = rng.uniform(0.38, 0.52);
  const double knee_amp = rng.uniform(0.45, 0.75);
  const double arm_amp = rng.uniform(0.30, 0.55);
  const double elbow_amp = rng.uniform(0.25, 0.55);
  PoseSpec p;
  p.height = rng.uniform(cfg.min_height, cfg.max_height);
  p.lean = rng.uniform(-0.10, 0.15);
  p.head_tilt = rng.uniform(-0.15, 0.15);
  const double jitter_x = rng.uniform(-1.0, 1.0);
  const double jitter_y = rng.uniform(-1.0, 1.0);

  constexpr double tau = 2.0 * std::numbers::pi;
  for (int s = 0; s < 2; ++s) {
    const double w = tau * (phase + 0.5 * s);
    p.upper_leg[s] = thigh_amp * std::sin(w);
    p.lower_leg[s] = p.upper_leg[s] - knee_amp * 0.5 * (1.0 + std::sin(w - 0.5 * std::numbers::pi));
    p.upper_arm[s] = -arm_amp * std::sin(w);
    p.lower_arm[s] = p.upper_arm[s] + elbow_amp * (0.6 - 0.4 * std::sin(w));
  }

  // Place the figure: centre it horizontally, stand it near the bottom, then
  // nudge by the jitter within whatever slack the canvas leaves.
  p.root = {0, 0};
  auto joints = forward_kinematics(p);
  double min_x = 1e9, max_x = -1e9, min_y = 1e9, max_y = -1e9;
  for (const auto& q : joints) {
    min_x = std::min(min_x, q.x);
    max_x = std::max(max_x, q.x);
    min_y = std::min(min_y, q.y);
    max_y = std::max(max_y, q.y);
  }
  // The head joint is the centre of the head disc; keep room for it.
  const double head_room = 0.07 * p.height;
  min_y -= head_room;
  const double slack_x = std::max(0.0, cfg.canvas_width - 2 * cfg.margin - (max_x - min_x));
  const double slack_y = std::max(0.0, cfg.canvas_height - 2 * cfg.margin - (max_y - min_y));
  p.root.x = cfg.margin - min_x + slack_x * 0.5 * (1.0 + 0.6 * jitter_x);
  p.root.y = cfg.margin - min_y + slack_y * 0.5 * (1.0 + 0.6 * jitter_y);
  return p;
}

enum class TextureKind { flat, stripes, noise, band };

struct Texture {
  TextureKind kind = TextureKind::flat;
  Rgb a{128, 128, 128};
  Rgb b{128, 128, 128};
  double period = 4;       // stripes: pixels per cycle
  double angle = 0;        // stripes: radians, relative to the limb axis
  double amplitude = 0;    // noise: +- intensity
  double split = 0.5;      // band: fraction of the segment length where b starts
};

struct FigureStyle {
  std::string name;
  // Capsule radii as fractions of figure height.
  double torso_radius = 0.07, head_radius = 0.065;
  double upper_arm_radius = 0.03, lower_arm_radius = 0.025;
  double upper_leg_radius = 0.045, lower_leg_radius = 0.035;
  Texture torso, upper_arm, lower_arm, upper_leg, lower_leg, head, background;
  double sensor_noise = 6;  // per-pixel uniform noise amplitude
};

inline Texture flat_texture(Rgb c) { return {TextureKind::flat, c, c, 0, 0, 0}; }

inline Texture band_texture(Rgb a, Rgb b, double split) {
  Texture t{TextureKind::band, a, b, 0, 0, 0};
  t.split = split;
  return t;
}

// Source-domain look: shirt with short sleeves tucked into trousers, boots.
inline FigureStyle style_domA() {
  const Rgb skin{225, 180, 150}, shirt{200, 40, 40}, trousers{40, 40, 120}, boots{20, 20, 20};
  FigureStyle s;
  s.name = "domA";
  s.torso_radius = 0.075;
  s.upper_arm_radius = 0.032;
  s.lower_arm_radius = 0.026;
  s.upper_leg_radius = 0.048;
  s.lower_leg_radius = 0.036;
  s.torso = band_texture(trousers, shirt, 0.2);
  s.upper_arm = band_texture(shirt, skin, 0.5);
  s.lower_arm = flat_texture(skin);
  s.upper_leg = flat_texture(trousers);
  s.lower_leg = band_texture(trousers, boots, 0.6);
  s.head = flat_texture(skin);
  s.background = {TextureKind::noise, {70, 150, 70}, {70, 150, 70}, 0, 0, 10};
  return s;
}

// Target-domain look: long coat and sleeves, shorts, light shoes, a
// different build and backdrop. Garment edges sit at other places on the body.
inline FigureStyle style_domB() {
  const Rgb skin{150, 105, 80}, coat{230, 200, 60}, shorts{90, 90, 90}, shoes{240, 240, 240};
  FigureStyle s;
  s.name = "domB";
  s.torso_radius = 0.085;
  s.upper_arm_radius = 0.036;
  s.lower_arm_radius = 0.03;
  s.upper_leg_radius = 0.042;
  s.lower_leg_radius = 0.032;
  s.torso = band_texture(shorts, coat, 0.7);
  s.upper_arm = flat_texture(coat);
  s.lower_arm = band_texture(coat, skin, 0.85);
  s.upper_leg = band_texture(shorts, skin, 0.45);
  s.lower_leg = band_texture(skin, shoes, 0.85);
  s.head = flat_texture(skin);
  s.background = {TextureKind::noise, {40, 110, 45}, {40, 110, 45}, 0, 0, 12};
  return s;
}

inline FigureStyle style_by_name(const std::string& name) {
  if (name == "domA") return style_domA();
  if (name == "domB") return style_domB();
  throw UsageError("unknown figure style '" + name + "'");
}

struct RenderResult {
  RgbImage image;
  GrayImage labels;
  BoundingBox bbox;
  JointMap joints;
  std::array<Point, kNumJoints> joint_pixels;
};

namespace detail {

inline std::uint8_t to_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

inline double hash_noise(std::uint64_t seed, int x, int y, int c) {
  const auto h = mix64(seed ^ mix64((std::uint64_t(std::uint32_t(x)) << 32) |
                                    std::uint32_t(y)) ^ (std::uint64_t(c) << 56));
  return static_cast<double>(h >> 11) * 0x1.0p-53 - 0.5;
}

// Colour of a texture at limb-local coordinates (along, across).
inline Rgb shade(const Texture& t, double along, double across, double length,
                 std::uint64_t seed, int x, int y) {
  switch (t.kind) {
    case TextureKind::flat:
      return t.a;
    case TextureKind::stripes: {
      const double u = along * std::cos(t.angle) + across * std::sin(t.angle);
      const double phase = u / t.period - std::floor(u / t.period);
      return phase < 0.5 ? t.a : t.b;
    }
    case TextureKind::band:
      return along < t.split * length ? t.a : t.b;
    case TextureKind::noise: {
      const double n = t.amplitude * 2.0 * hash_noise(seed, x, y, 7);
      return {to_u8(t.a.r + n), to_u8(t.a.g + n), to_u8(t.a.b + n)};
    }
  }
  return t.a;
}

struct Capsule {
  Vec2 a, b;
  double radius;
  const Texture* texture;
};

}  // namespace detail

// Draws the figure back to front and labels every figure pixel within
// Chebyshev distance 0.1 * sqrt(bbox area) of a joint with that joint's part.
inline RenderResult render(const PoseSpec& pose, const FigureStyle& style, int canvas_width,
                           int canvas_height, std::uint64_t seed) {
  const double H = pose.height;
  const auto j = forward_kinematics(pose);
  auto J = [&](Joint k) { return j[int(k)]; };
  const Vec2 pelvis = pose.root;
  const Vec2 neck = pelvis + Vec2{std::sin(pose.lean), -std::cos(pose.lean)} * (Proportions{}.torso * H);

  std::vector<detail::Capsule> caps;
  auto limbs = [&](int s) {
    const int o = s;
    caps.push_back({J(Joint(int(Joint::l_hip) + o)), J(Joint(int(Joint::l_knee) + o)),
                    style.upper_leg_radius * H, &style.upper_leg});
    caps.push_back({J(Joint(int(Joint::l_knee) + o)), J(Joint(int(Joint::l_foot) + o)),
                    style.lower_leg_radius * H, &style.lower_leg});
  };
  auto arms = [&](int s) {
    const int o = s;
    caps.push_back({J(Joint(int(Joint::l_shoulder) + o)), J(Joint(int(Joint::l_elbow) + o)),
                    style.upper_arm_radius * H, &style.upper_arm});
    caps.push_back({J(Joint(int(Joint::l_elbow) + o)), J(Joint(int(Joint::l_hand) + o)),
                    style.lower_arm_radius * H, &style.lower_arm});
  };
  arms(0);
  limbs(0);
  caps.push_back({pelvis, neck, style.torso_radius * H, &style.torso});
  caps.push_back({J(Joint::head), J(Joint::head), style.head_radius * H, &style.head});
  limbs(1);
  arms(1);

  RenderResult out;
  out.image = RgbImage(canvas_width, canvas_height);
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(canvas_width) * canvas_height, 0);
  const std::uint64_t bg_seed = derive_seed({seed, 1});
  const std::uint64_t fg_seed = derive_seed({seed, 2});
  const std::uint64_t sensor_seed = derive_seed({seed, 3});
  Rng light(derive_seed({seed, 4}));
  const double gain = light.uniform(0.85, 1.15);

  for (int y = 0; y < canvas_height; ++y) {
    for (int x = 0; x < canvas_width; ++x) {
      const Vec2 p{static_cast<double>(x), static_cast<double>(y)};
      Rgb c = detail::shade(style.background, x, y, 0, bg_seed, x, y);
      for (const auto& cap : caps) {
        const Vec2 ab = cap.b - cap.a;
        const double len2 = ab.dot(ab);
        double t = len2 > 0 ? (p - cap.a).dot(ab) / len2 : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        const Vec2 d = p - (cap.a + ab * t);
        if (d.dot(d) > cap.radius * cap.radius) continue;
        const double len = std::sqrt(len2);
        const Vec2 axis = len > 0 ? ab * (1.0 / len) : Vec2{0, 1};
        const Vec2 perp{-axis.y, axis.x};
        const Vec2 rel = p - cap.a;
        c = detail::shade(*cap.texture, rel.dot(axis), rel.dot(perp), len, fg_seed, x, y);
        mask[static_cast<std::size_t>(y) * canvas_width + x] = 1;
      }
      const double n0 = style.sensor_noise * 2.0 * detail::hash_noise(sensor_seed, x, y, 0);
      set_pixel(out.image, x, y,
                {detail::to_u8(c.r * gain + n0), detail::to_u8(c.g * gain + n0),
                 detail::to_u8(c.b * gain + n0)});
    }
  }

  int min_x = canvas_width, max_x = -1, min_y = canvas_height, max_y = -1;
  for (int y = 0; y < canvas_height; ++y)
    for (int x = 0; x < canvas_width; ++x)
      if (mask[static_cast<std::size_t>(y) * canvas_width + x]) {
        min_x = std::min(min_x, x);
        max_x = std::max(max_x, x);
        min_y = std::min(min_y, y);
        max_y = std::max(max_y, y);
      }
  if (max_x < 0) throw DataError("figure does not intersect the canvas");
  const int w0 = max_x - min_x + 1, h0 = max_y - min_y + 1;
  const int mx = static_cast<int>(std::ceil(0.025 * w0));
  const int my = static_cast<int>(std::ceil(0.025 * h0));
  out.bbox = clamp_to({min_x - mx, min_y - my, w0 + 2 * mx, h0 + 2 * my}, canvas_width,
                      canvas_height);

  for (int k = 0; k < kNumJoints; ++k) {
    const Point pt{static_cast<int>(std::lround(j[k].x)), static_cast<int>(std::lround(j[k].y))};
    out.joint_pixels[k] = pt;
    out.joints[kJointPart[k]].push_back(pt);
  }

  const double reach = 0.1 * std::sqrt(out.bbox.area());
  out.labels = GrayImage(canvas_width, canvas_height, kBackground);
  for (int y = 0; y < canvas_height; ++y) {
    for (int x = 0; x < canvas_width; ++x) {
      if (!mask[static_cast<std::size_t>(y) * canvas_width + x]) continue;
      int best = -1;
      long best_d2 = 0;
      for (int k = 0; k < kNumJoints; ++k) {
        const int dx = x - out.joint_pixels[k].x, dy = y - out.joint_pixels[k].y;
        if (std::max(std::abs(dx), std::abs(dy)) > reach) continue;
        const long d2 = long(dx) * dx + long(dy) * dy;
        if (best < 0 || d2 < best_d2 || (d2 == best_d2 && kJointPart[k] < kJointPart[best])) {
          best = k;
          best_d2 = d2;
        }
      }
      if (best >= 0) *out.labels.at(x, y) = static_cast<std::uint8_t>(kJointPart[best]);
    }
  }
  return out;
}

struct GenerateConfig {
  PoseConfig pose;
  FigureStyle source_style = style_domA();
  FigureStyle target_style = style_domB();  // also used for the test set
  unsigned workers = 1;
};

// Writes images/, labels/ and manifest.jsonl under out_dir. Source and
// target sets walk the same phase grid with independent pose seeds; the
// test set uses a shifted grid and its own seeds.
inline DatasetManifest generate(const std::filesystem::path& out_dir, int n_source,
                                int n_target, int n_test, std::uint64_t seed,
                                const GenerateConfig& cfg = {}) {
  if (n_source < 0 || n_target < 0 || n_test < 0) throw UsageError("set sizes must be >= 0");
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  std::filesystem::create_directories(out_dir / "labels", ec);
  if (ec) throw DataError("cannot create '" + out_dir.string() + "': " + ec.message());

  struct Job {
    Domain domain;
    int index;
    int count;
  };
  std::vector<Job> jobs;
  for (int i = 0; i < n_source; ++i) jobs.push_back({Domain::source, i, n_source});
  for (int i = 0; i < n_target; ++i) jobs.push_back({Domain::target, i, n_target});
  for (int i = 0; i < n_test; ++i) jobs.push_back({Domain::test, i, n_test});

  const auto& source_style = cfg.source_style;
  const auto& target_style = cfg.target_style;

  DatasetManifest manifest;
  manifest.base_dir = out_dir;
  manifest.entries.resize(jobs.size());
  parallel_for(jobs.size(), cfg.workers, [&](std::size_t n, unsigned) {
    const auto& job = jobs[n];
    const auto d = static_cast<std::uint64_t>(job.domain);
    const double phase = job.domain == Domain::test
                             ? std::fmod((job.index + 0.37) / job.count + 0.013, 1.0)
                             : static_cast<double>(job.index) / job.count;
    const auto pose = sample_pose(derive_seed({seed, d, std::uint64_t(job.index), 11}), phase,
                                  cfg.pose);
    const auto& style = job.domain == Domain::source ? source_style : target_style;
    auto r = render(pose, style, cfg.pose.canvas_width, cfg.pose.canvas_height,
                    derive_seed({seed, d, std::uint64_t(job.index), 13}));
    char stem[64];
    std::snprintf(stem, sizeof stem, "%s_%04d.png", domain_name(job.domain), job.index);
    ManifestEntry e;
    e.image = out_dir / "images" / stem;
    e.labels = out_dir / "labels" / stem;
    e.bbox = r.bbox;
    e.domain = job.domain;
    e.width = cfg.pose.canvas_width;
    e.height = cfg.pose.canvas_height;
    if (job.domain != Domain::target) e.joints = r.joints;
    write_png(e.image, r.image);
    write_png(*e.labels, r.labels);
    manifest.entries[n] = std::move(e);
  });
  save_manifest(out_dir / "manifest.jsonl", manifest);
  return manifest;
}

}  // namespace dawood::synth
