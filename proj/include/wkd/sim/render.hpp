#pragma once

#include <array>
#include <cstdint>

#include "wkd/image.hpp"
#include "wkd/sim/scene.hpp"
#include "wkd/sim/track.hpp"
#include "wkd/sim/weather.hpp"

namespace wkd::sim {

// Semantic classes produced by the geometry pass; the weather chain colors them.
enum class PixelClass : std::uint8_t { Sky = 0, Road = 1, Offroad = 2, Marking = 3 };

using ClassMap = std::array<PixelClass, Image::kWidth * Image::kHeight>;

// Camera: 1.4 m above ground, 1.0 m ahead of the rear axle, pitched 12 deg
// down, 90 deg horizontal field of view.
struct Camera {
  static constexpr double kHeight = 1.4;
  static constexpr double kForward = 1.0;
  static constexpr double kPitchDeg = 12.0;
  static constexpr double kFocalPx = 32.0;
  static constexpr double kMarkingWidth = 0.3;
};

inline constexpr std::array<float, 3> kSkyColor{0.55f, 0.70f, 0.92f};
inline constexpr std::array<float, 3> kFogColor{0.75f, 0.75f, 0.78f};
inline constexpr std::array<float, 3> kRainColor{0.80f, 0.80f, 0.85f};

// Geometry pass only.
ClassMap classify(const Track& track, const VehicleState& vehicle);

// Fog weight per image row in [0,1]; rows above the horizon are 1 and rows
// nearer the bottom edge approach 0. Depends on the row index only.
float row_fog_weight(std::size_t row);

// Additive palette error: color(class, x, y) += scale * (offset[class] + field(x, y)).
// Used by the parametric translator to model imperfect color transfer.
struct PaletteError {
  float scale = 0.0f;
  std::array<std::array<float, 3>, 4> class_offset{};
  std::array<float, 3> field_amplitude{};
  float freq_x = 1.0f, freq_y = 1.0f, phase_x = 0.0f, phase_y = 0.0f;
};

// Weather chain in fixed order: palette -> contrast -> brightness -> fog ->
// rain streaks -> additive noise -> clamp to [0,1].
Image shade(const ClassMap& classes, const WeatherParams& weather, std::uint64_t rng_stream,
            const PaletteError* error = nullptr);

Image render(const Track& track, const SceneState& scene, const WeatherTable& weathers);
// Looks up scene.track among the shipped tracks.
Image render(const SceneState& scene, const WeatherTable& weathers);

// Inverse of the weather-0 palette step: nearest class color per pixel.
ClassMap classify_colors(const Image& image, const WeatherParams& weather);

}  // namespace wkd::sim
