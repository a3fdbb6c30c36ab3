#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>

namespace dawood {

// Joint-centred body part classes. Numeric ids are part of every file format.
enum class Part : std::uint8_t {
  foot = 0,
  knee = 1,
  hip = 2,
  shoulder = 3,
  elbow = 4,
  hand = 5,
  head = 6,
  background = 7,
};

inline constexpr int kNumParts = 8;
inline constexpr int kNumJointParts = 7;
inline constexpr std::uint8_t kBackground = 7;

inline constexpr std::array<std::string_view, kNumParts> kPartNames = {
    "foot", "knee", "hip", "shoulder", "elbow", "hand", "head", "background"};

constexpr std::string_view part_name(int id) { return kPartNames.at(id); }

inline std::optional<int> part_from_name(std::string_view name) {
  for (int i = 0; i < kNumParts; ++i)
    if (kPartNames[i] == name) return i;
  return std::nullopt;
}

struct Rgb {
  std::uint8_t r, g, b;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

// Overlay palette, indexed by part id.
inline constexpr std::array<Rgb, kNumParts> kPalette = {{
    {230, 25, 75},    // foot: red
    {255, 225, 25},   // knee: yellow
    {60, 180, 75},    // hip: green
    {0, 130, 200},    // shoulder: blue
    {245, 130, 48},   // elbow: orange
    {145, 30, 180},   // hand: purple
    {70, 240, 240},   // head: cyan
    {128, 128, 128},  // background: grey
}};

}  // namespace dawood
