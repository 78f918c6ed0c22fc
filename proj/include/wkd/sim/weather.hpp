#pragma once

#include <array>
#include <filesystem>
#include <string>

#include "json.hpp"

namespace wkd::sim {

using Rgb = std::array<double, 3>;

inline constexpr int kWeatherCount = 15;

struct WeatherParams {
  int id = 0;
  Rgb road_palette{};
  Rgb offroad_palette{};
  Rgb marking_palette{};
  double brightness = 1.0;
  double contrast = 1.0;
  double fog_density = 0.0;
  double rain_intensity = 0.0;
  double noise_sigma = 0.0;

  friend bool operator==(const WeatherParams&, const WeatherParams&) = default;
};

// All 15 weather conditions, indexed by id. Weather 0 is the clear baseline.
class WeatherTable {
 public:
  static constexpr int kVersion = 1;

  static WeatherTable defaults();
  static WeatherTable from_json(const nlohmann::json& j);
  static WeatherTable load(const std::filesystem::path& path);

  nlohmann::json to_json() const;
  void save(const std::filesystem::path& path) const;

  // Throws ConfigError for ids outside 0..14.
  const WeatherParams& at(int id) const;
  const std::array<WeatherParams, kWeatherCount>& all() const { return params_; }

  friend bool operator==(const WeatherTable&, const WeatherTable&) = default;

 private:
  std::array<WeatherParams, kWeatherCount> params_{};
};

}  // namespace wkd::sim
