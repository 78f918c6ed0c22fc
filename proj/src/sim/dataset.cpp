#include "wkd/sim/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"
#include "wkd/errors.hpp"
#include "wkd/sim/expert.hpp"
#include "wkd/sim/render.hpp"
#include "wkd/sim/vehicle.hpp"

namespace wkd::sim {

static_assert(std::endian::native == std::endian::little, "dataset I/O assumes a little-endian host");

std::size_t Dataset::labeled_count() const {
  return static_cast<std::size_t>(std::count_if(samples.begin(), samples.end(),
                                                [](const Sample& s) { return s.label.has_value(); }));
}

std::vector<std::size_t> Dataset::labeled_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].label) out.push_back(i);
  return out;
}

std::vector<std::size_t> Dataset::unlabeled_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (!samples[i].label) out.push_back(i);
  return out;
}

Dataset collect_dataset(const CollectSpec& spec, const WeatherTable& weathers) {
  if (spec.n_labeled > spec.n_total) throw ConfigError("n_labeled exceeds n_total");
  if (spec.weathers.empty()) throw ConfigError("dataset needs at least one weather");
  for (int w : spec.weathers) weathers.at(w);

  const Track& tr = track(spec.track);
  std::mt19937_64 rng(mix64(spec.seed ^ 0xda7a5e7ull));
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> start_s(0.0, tr.length());

  Dataset ds;
  ds.track = spec.track;
  ds.seed = spec.seed;
  ds.weathers = spec.weathers;
  ds.samples.reserve(spec.n_total);

  const Pose p0 = tr.pose_at(start_s(rng));
  VehicleState v{p0.position, normalize_angle(p0.heading), kSpeed};
  for (std::size_t i = 0; i < spec.n_total; ++i) {
    if (spec.perturb_every > 0 && i > 0 && i % static_cast<std::size_t>(spec.perturb_every) == 0) {
      const double lat = spec.perturb_lateral * unit(rng);
      const double dh = spec.perturb_heading_deg * std::numbers::pi / 180.0 * unit(rng);
      v.position = v.position + lat * Vec2{-std::sin(v.heading), std::cos(v.heading)};
      v.heading = normalize_angle(v.heading + dh);
    }
    Sample s;
    SceneState sc;
    sc.track = spec.track;
    sc.vehicle = v;
    sc.weather = spec.weathers[i % spec.weathers.size()];
    sc.rng_stream_id = stream_id(spec.seed, i);
    s.image = render(tr, sc, weathers);
    s.weather = sc.weather;
    const double steer = expert_steering(tr, v);
    s.label = steer;
    s.scene = sc;
    ds.samples.push_back(std::move(s));
    v = step(v, steer);
  }

  // Uniformly chosen labeled subset.
  std::vector<std::size_t> order(spec.n_total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 pick(mix64(spec.seed ^ 0x1abe1ull));
  std::shuffle(order.begin(), order.end(), pick);
  for (std::size_t k = spec.n_labeled; k < spec.n_total; ++k) ds.samples[order[k]].label.reset();
  return ds;
}

Dataset collect_dataset(TrackId track, int weather, std::size_t n_total, std::size_t n_labeled,
                        std::uint64_t seed, const WeatherTable& weathers) {
  CollectSpec spec;
  spec.track = track;
  spec.weathers = {weather};
  spec.n_total = n_total;
  spec.n_labeled = n_labeled;
  spec.seed = seed;
  return collect_dataset(spec, weathers);
}

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json m;
  m["format_version"] = Dataset::kFormatVersion;
  m["count"] = ds.samples.size();
  m["labeled"] = ds.labeled_count();
  m["seed"] = ds.seed;
  m["track"] = track_name(ds.track);
  m["weathers"] = ds.weathers;
  m["image"] = {{"width", Image::kWidth}, {"height", Image::kHeight}, {"channels", Image::kChannels},
                {"dtype", "float32-le"}};
  {
    std::ofstream os(dir / "manifest.json", std::ios::trunc);
    if (!os) throw ConfigError("cannot write " + (dir / "manifest.json").string());
    os << m.dump(2) << '\n';
  }
  {
    std::ofstream os(dir / "images.bin", std::ios::binary | std::ios::trunc);
    for (const auto& s : ds.samples)
      os.write(reinterpret_cast<const char*>(s.image.pixels.data()),
               static_cast<std::streamsize>(Image::kSize * sizeof(float)));
    if (!os) throw ConfigError("failed writing images.bin");
  }
  {
    std::ofstream os(dir / "labels.csv", std::ios::trunc);
    os << "index,steering\n";
    for (std::size_t i = 0; i < ds.samples.size(); ++i)
      if (ds.samples[i].label) os << i << ',' << fmt17(*ds.samples[i].label) << '\n';
  }
  {
    std::ofstream os(dir / "scenes.csv", std::ios::trunc);
    os << "index,track,x,y,heading,speed,weather,rng_stream\n";
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
      const auto& s = ds.samples[i];
      if (!s.scene) continue;
      const auto& sc = *s.scene;
      os << i << ',' << track_name(sc.track) << ',' << fmt17(sc.vehicle.position.x) << ','
         << fmt17(sc.vehicle.position.y) << ',' << fmt17(sc.vehicle.heading) << ',' << fmt17(sc.vehicle.speed)
         << ',' << sc.weather << ',' << sc.rng_stream_id << '\n';
    }
  }
}

Dataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream ms(dir / "manifest.json");
  if (!ms) throw ConfigError("dataset manifest missing in " + dir.string());
  nlohmann::json m;
  try {
    ms >> m;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad dataset manifest: " + std::string(e.what()));
  }
  if (m.value("format_version", -1) != Dataset::kFormatVersion)
    throw ConfigError("unsupported dataset format version in " + dir.string());

  Dataset ds;
  ds.track = track_from_name(m.at("track").get<std::string>());
  ds.seed = m.at("seed").get<std::uint64_t>();
  ds.weathers = m.at("weathers").get<std::vector<int>>();
  const auto count = m.at("count").get<std::size_t>();
  ds.samples.resize(count);

  std::ifstream is(dir / "images.bin", std::ios::binary);
  if (!is) throw ConfigError("images.bin missing in " + dir.string());
  for (auto& s : ds.samples) {
    is.read(reinterpret_cast<char*>(s.image.pixels.data()), static_cast<std::streamsize>(Image::kSize * sizeof(float)));
    if (!is) throw ConfigError("images.bin truncated in " + dir.string());
  }
  for (std::size_t i = 0; i < count; ++i)
    ds.samples[i].weather = ds.weathers.empty() ? 0 : ds.weathers[i % ds.weathers.size()];

  std::string line;
  std::ifstream ls(dir / "labels.csv");
  if (!ls) throw ConfigError("labels.csv missing in " + dir.string());
  std::getline(ls, line);
  while (std::getline(ls, line)) {
    if (line.empty()) continue;
    const auto c = split_csv(line);
    if (c.size() != 2) throw ConfigError("bad labels.csv row: " + line);
    const auto idx = std::stoull(c[0]);
    if (idx >= count) throw ConfigError("label index out of range: " + line);
    ds.samples[idx].label = std::stod(c[1]);
  }

  std::ifstream ss(dir / "scenes.csv");
  if (ss) {
    std::getline(ss, line);
    while (std::getline(ss, line)) {
      if (line.empty()) continue;
      const auto c = split_csv(line);
      if (c.size() != 8) throw ConfigError("bad scenes.csv row: " + line);
      const auto idx = std::stoull(c[0]);
      if (idx >= count) throw ConfigError("scene index out of range: " + line);
      SceneState sc;
      sc.track = track_from_name(c[1]);
      sc.vehicle.position = {std::stod(c[2]), std::stod(c[3])};
      sc.vehicle.heading = std::stod(c[4]);
      sc.vehicle.speed = std::stod(c[5]);
      sc.weather = std::stoi(c[6]);
      sc.rng_stream_id = std::stoull(c[7]);
      ds.samples[idx].scene = sc;
      ds.samples[idx].weather = sc.weather;
    }
  }
  return ds;
}

}  // namespace wkd::sim
