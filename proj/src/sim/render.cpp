#include "wkd/sim/render.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace wkd::sim {

namespace {

struct GroundRay {
  bool sky = true;
  double forward = 0.0;  // vehicle frame, from the rear axle
  double left = 0.0;
  double distance = 0.0;
};

using RayTable = std::array<GroundRay, Image::kWidth * Image::kHeight>;

const RayTable& rays() {
  static const RayTable table = [] {
    RayTable t{};
    const double pitch = Camera::kPitchDeg * std::numbers::pi / 180.0;
    const double cx = Image::kWidth / 2.0, cy = Image::kHeight / 2.0;
    for (std::size_t v = 0; v < Image::kHeight; ++v) {
      for (std::size_t u = 0; u < Image::kWidth; ++u) {
        const double left_c = -((static_cast<double>(u) + 0.5) - cx) / Camera::kFocalPx;
        const double up_c = -((static_cast<double>(v) + 0.5) - cy) / Camera::kFocalPx;
        const double fwd_w = std::cos(pitch) + std::sin(pitch) * up_c;
        const double up_w = -std::sin(pitch) + std::cos(pitch) * up_c;
        GroundRay r;
        if (up_w < -1e-9) {
          const double s = Camera::kHeight / -up_w;
          r.sky = false;
          r.forward = Camera::kForward + s * fwd_w;
          r.left = s * left_c;
          r.distance = s * fwd_w;
        }
        t[v * Image::kWidth + u] = r;
      }
    }
    return t;
  }();
  return table;
}

const std::array<float, Image::kHeight>& fog_rows() {
  static const std::array<float, Image::kHeight> rows = [] {
    std::array<float, Image::kHeight> w{};
    const auto& t = rays();
    for (std::size_t v = 0; v < Image::kHeight; ++v) {
      // Every pixel of a row shares the pitch-plane depth; use the center column.
      const GroundRay& r = t[v * Image::kWidth + Image::kWidth / 2];
      w[v] = r.sky ? 1.0f : static_cast<float>(1.0 - std::exp(-r.distance / 20.0));
    }
    return w;
  }();
  return rows;
}

std::array<float, 3> to_f(const Rgb& c) {
  return {static_cast<float>(c[0]), static_cast<float>(c[1]), static_cast<float>(c[2])};
}

}  // namespace

ClassMap classify(const Track& track, const VehicleState& vehicle) {
  ClassMap m{};
  const auto& t = rays();
  const double ch = std::cos(vehicle.heading), sh = std::sin(vehicle.heading);
  const double half = track.lane_width() / 2.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const GroundRay& r = t[i];
    if (r.sky) {
      m[i] = PixelClass::Sky;
      continue;
    }
    const Vec2 p{vehicle.position.x + ch * r.forward - sh * r.left,
                 vehicle.position.y + sh * r.forward + ch * r.left};
    const double d = track.band_distance(p);
    if (d < half - Camera::kMarkingWidth) {
      m[i] = PixelClass::Road;
    } else if (d < half) {
      m[i] = PixelClass::Marking;
    } else {
      m[i] = PixelClass::Offroad;
    }
  }
  return m;
}

float row_fog_weight(std::size_t row) { return fog_rows().at(row); }

Image shade(const ClassMap& classes, const WeatherParams& weather, std::uint64_t rng_stream,
            const PaletteError* error) {
  const std::array<std::array<float, 3>, 4> palette{
      kSkyColor, to_f(weather.road_palette), to_f(weather.offroad_palette), to_f(weather.marking_palette)};
  const float contrast = static_cast<float>(weather.contrast);
  const float bright = static_cast<float>(weather.brightness);
  const float fog = static_cast<float>(weather.fog_density);
  const auto& fog_w = fog_rows();

  Image img;
  for (std::size_t y = 0; y < Image::kHeight; ++y) {
    const float f = fog * fog_w[y];
    for (std::size_t x = 0; x < Image::kWidth; ++x) {
      const auto cls = static_cast<std::size_t>(classes[y * Image::kWidth + x]);
      for (std::size_t c = 0; c < 3; ++c) {
        float v = palette[cls][c];
        if (error != nullptr && error->scale != 0.0f) {
          const float field = error->field_amplitude[c] *
                              std::sin(2.0f * std::numbers::pi_v<float> *
                                       (error->freq_x * static_cast<float>(x) / Image::kWidth + error->phase_x)) *
                              std::cos(2.0f * std::numbers::pi_v<float> *
                                       (error->freq_y * static_cast<float>(y) / Image::kHeight + error->phase_y));
          v += error->scale * (error->class_offset[cls][c] + field);
        }
        v = 0.5f + contrast * (v - 0.5f);
        v *= bright;
        v = (1.0f - f) * v + f * (kFogColor[c] * bright);
        img.at(y, x, c) = v;
      }
    }
  }

  if (weather.rain_intensity > 0.0 || weather.noise_sigma > 0.0) {
    std::mt19937_64 gen(mix64(rng_stream ^ (0x5851f42d4c957f2dull * static_cast<std::uint64_t>(weather.id + 1))));
    const int streaks = static_cast<int>(std::lround(weather.rain_intensity * 80.0));
    std::uniform_int_distribution<int> px(0, Image::kWidth - 1);
    std::uniform_int_distribution<int> py(0, Image::kHeight - 1);
    std::uniform_int_distribution<int> plen(3, 7);
    for (int s = 0; s < streaks; ++s) {
      const int x0 = px(gen), y0 = py(gen), len = plen(gen);
      for (int k = 0; k < len; ++k) {
        const int yy = y0 + k, xx = x0 + k / 3;
        if (yy >= static_cast<int>(Image::kHeight) || xx >= static_cast<int>(Image::kWidth)) break;
        for (std::size_t c = 0; c < 3; ++c) {
          float& v = img.at(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx), c);
          v = 0.6f * v + 0.4f * kRainColor[c];
        }
      }
    }
    if (weather.noise_sigma > 0.0) {
      std::normal_distribution<float> noise(0.0f, static_cast<float>(weather.noise_sigma));
      for (auto& v : img.pixels) v += noise(gen);
    }
  }
  for (auto& v : img.pixels) v = std::clamp(v, 0.0f, 1.0f);
  return img;
}

Image render(const Track& track, const SceneState& scene, const WeatherTable& weathers) {
  const WeatherParams& w = weathers.at(scene.weather);
  return shade(classify(track, scene.vehicle), w, scene.rng_stream_id);
}

Image render(const SceneState& scene, const WeatherTable& weathers) {
  return render(track(scene.track), scene, weathers);
}

ClassMap classify_colors(const Image& image, const WeatherParams& weather) {
  const std::array<std::array<float, 3>, 4> palette{
      kSkyColor, to_f(weather.road_palette), to_f(weather.offroad_palette), to_f(weather.marking_palette)};
  ClassMap m{};
  for (std::size_t i = 0; i < m.size(); ++i) {
    float best = std::numeric_limits<float>::infinity();
    std::size_t arg = 0;
    for (std::size_t k = 0; k < 4; ++k) {
      float d = 0.0f;
      for (std::size_t c = 0; c < 3; ++c) {
        const float e = image.pixels[i * 3 + c] - palette[k][c];
        d += e * e;
      }
      if (d < best) {
        best = d;
        arg = k;
      }
    }
    m[i] = static_cast<PixelClass>(arg);
  }
  return m;
}

}  // namespace wkd::sim
