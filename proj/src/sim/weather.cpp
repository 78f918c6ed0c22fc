#include "wkd/sim/weather.hpp"

#include <fstream>
#include <set>

#include "json.hpp"

#include "wkd/errors.hpp"

namespace wkd::sim {

namespace {

const std::set<std::string> kKeys{"id",         "road_palette", "offroad_palette",
                                  "marking_palette", "brightness", "contrast",
                                  "fog_density", "rain_intensity", "noise_sigma"};

Rgb rgb_from(const nlohmann::json& j, const std::string& key, int id) {
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != 3) {
    throw ConfigError("weather " + std::to_string(id) + ": " + key + " must be an RGB triple");
  }
  Rgb c{};
  for (std::size_t i = 0; i < 3; ++i) {
    c[i] = a[i].get<double>();
    if (!(c[i] >= 0.0 && c[i] <= 1.0)) {
      throw ConfigError("weather " + std::to_string(id) + ": " + key + " component outside [0,1]");
    }
  }
  return c;
}

WeatherParams make(int id, Rgb road, Rgb off, Rgb mark, double bright, double contrast, double fog,
                   double rain, double noise) {
  return {id, road, off, mark, bright, contrast, fog, rain, noise};
}

}  // namespace

WeatherTable WeatherTable::defaults() {
  WeatherTable t;
  t.params_ = {{
      // Noon family: 0 clear, 1-2 mild, 3-6 wet/rainy with fog.
      make(0, {0.42, 0.42, 0.44}, {0.30, 0.55, 0.25}, {0.95, 0.95, 0.92}, 1.00, 1.00, 0.00, 0.00, 0.000),
      make(1, {0.40, 0.40, 0.43}, {0.28, 0.50, 0.26}, {0.92, 0.92, 0.90}, 0.92, 0.95, 0.05, 0.00, 0.005),
      make(2, {0.33, 0.33, 0.36}, {0.27, 0.50, 0.24}, {0.90, 0.90, 0.88}, 0.95, 1.00, 0.05, 0.05, 0.010),
      make(3, {0.24, 0.25, 0.30}, {0.22, 0.38, 0.30}, {0.80, 0.82, 0.85}, 0.80, 0.80, 0.45, 0.15, 0.020),
      make(4, {0.26, 0.26, 0.30}, {0.20, 0.35, 0.22}, {0.85, 0.85, 0.85}, 0.75, 0.85, 0.55, 0.50, 0.030),
      make(5, {0.22, 0.22, 0.26}, {0.18, 0.30, 0.20}, {0.80, 0.80, 0.82}, 0.65, 0.80, 0.65, 0.90, 0.050),
      make(6, {0.30, 0.30, 0.34}, {0.24, 0.42, 0.24}, {0.88, 0.88, 0.88}, 0.85, 0.75, 0.35, 0.30, 0.020),
      // Sunset family: warm palettes, off-road brighter than the road.
      make(7, {0.58, 0.45, 0.38}, {0.62, 0.50, 0.22}, {1.00, 0.88, 0.62}, 0.90, 1.20, 0.05, 0.00, 0.010),
      make(8, {0.50, 0.40, 0.38}, {0.55, 0.45, 0.30}, {0.95, 0.82, 0.65}, 0.80, 1.00, 0.30, 0.00, 0.020),
      make(9, {0.36, 0.28, 0.28}, {0.50, 0.40, 0.20}, {0.98, 0.80, 0.60}, 0.80, 1.15, 0.15, 0.10, 0.020),
      make(10, {0.34, 0.28, 0.30}, {0.45, 0.36, 0.24}, {0.90, 0.78, 0.62}, 0.70, 0.95, 0.40, 0.15, 0.030),
      make(11, {0.30, 0.24, 0.26}, {0.40, 0.30, 0.20}, {0.85, 0.72, 0.58}, 0.60, 0.90, 0.50, 0.50, 0.040),
      make(12, {0.26, 0.22, 0.26}, {0.34, 0.26, 0.20}, {0.80, 0.68, 0.55}, 0.50, 0.85, 0.60, 0.90, 0.050),
      make(13, {0.32, 0.26, 0.28}, {0.42, 0.32, 0.22}, {0.88, 0.75, 0.60}, 0.65, 0.80, 0.40, 0.30, 0.030),
      make(14, {0.30, 0.27, 0.30}, {0.38, 0.30, 0.22}, {0.85, 0.74, 0.60}, 0.55, 0.80, 0.55, 0.35, 0.040),
  }};
  return t;
}

WeatherTable WeatherTable::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("weathers")) throw ConfigError("weather config needs a 'weathers' array");
  if (j.value("version", 0) != kVersion) {
    throw ConfigError("unsupported weather config version " + j.value("version", nlohmann::json()).dump());
  }
  const auto& arr = j.at("weathers");
  if (!arr.is_array() || arr.size() != kWeatherCount) {
    throw ConfigError("weather config must hold exactly 15 records");
  }
  WeatherTable t;
  std::array<bool, kWeatherCount> seen{};
  for (const auto& rec : arr) {
    if (!rec.is_object()) throw ConfigError("weather record must be an object");
    for (const auto& [k, v] : rec.items()) {
      if (!kKeys.count(k)) throw ConfigError("unknown weather key '" + k + "'");
    }
    for (const auto& k : kKeys) {
      if (!rec.contains(k)) throw ConfigError("weather record missing key '" + k + "'");
    }
    const int id = rec.at("id").get<int>();
    if (id < 0 || id >= kWeatherCount) throw ConfigError("weather id " + std::to_string(id) + " out of range 0..14");
    if (seen[id]) throw ConfigError("duplicate weather id " + std::to_string(id));
    seen[id] = true;
    WeatherParams p;
    p.id = id;
    p.road_palette = rgb_from(rec, "road_palette", id);
    p.offroad_palette = rgb_from(rec, "offroad_palette", id);
    p.marking_palette = rgb_from(rec, "marking_palette", id);
    p.brightness = rec.at("brightness").get<double>();
    p.contrast = rec.at("contrast").get<double>();
    p.fog_density = rec.at("fog_density").get<double>();
    p.rain_intensity = rec.at("rain_intensity").get<double>();
    p.noise_sigma = rec.at("noise_sigma").get<double>();
    if (!(p.brightness > 0) || !(p.contrast > 0)) throw ConfigError("brightness and contrast must be positive");
    if (!(p.fog_density >= 0 && p.fog_density <= 1) || !(p.rain_intensity >= 0 && p.rain_intensity <= 1)) {
      throw ConfigError("fog_density and rain_intensity must lie in [0,1]");
    }
    if (!(p.noise_sigma >= 0)) throw ConfigError("noise_sigma must be >= 0");
    t.params_[id] = p;
  }
  const auto& w0 = t.params_[0];
  if (w0.fog_density != 0.0 || w0.rain_intensity != 0.0) {
    throw ConfigError("weather 0 must be the clear baseline (no fog, no rain)");
  }
  return t;
}

nlohmann::json WeatherTable::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : params_) {
    arr.push_back({{"id", p.id},
                   {"road_palette", p.road_palette},
                   {"offroad_palette", p.offroad_palette},
                   {"marking_palette", p.marking_palette},
                   {"brightness", p.brightness},
                   {"contrast", p.contrast},
                   {"fog_density", p.fog_density},
                   {"rain_intensity", p.rain_intensity},
                   {"noise_sigma", p.noise_sigma}});
  }
  return {{"version", kVersion}, {"weathers", arr}};
}

WeatherTable WeatherTable::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open weather config " + path.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("weather config " + path.string() + ": " + e.what());
  }
  try {
    return from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("weather config " + path.string() + ": " + e.what());
  }
}

void WeatherTable::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw ConfigError("cannot write weather config " + path.string());
  os << to_json().dump(2) << '\n';
}

const WeatherParams& WeatherTable::at(int id) const {
  if (id < 0 || id >= kWeatherCount) {
    throw ConfigError("unknown weather id " + std::to_string(id) + " (valid: 0..14)");
  }
  return params_[static_cast<std::size_t>(id)];
}

}  // namespace wkd::sim
