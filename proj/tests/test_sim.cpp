#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

#include "doctest.h"
#include "support/golden.hpp"
#include "wkd/errors.hpp"
#include "wkd/sim/dataset.hpp"
#include "wkd/sim/episode.hpp"
#include "wkd/sim/expert.hpp"
#include "wkd/sim/render.hpp"
#include "wkd/sim/weather.hpp"

using namespace wkd;
using namespace wkd::sim;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

// Rounded square: four 60 m straights joined by left quarter circles.
Track rounded_square(double radius, double spacing) {
  std::vector<TrackPiece> pieces;
  for (int i = 0; i < 4; ++i) {
    pieces.push_back(TrackPiece::straight(60.0));
    pieces.push_back(TrackPiece::arc(radius, kPi / 2));
  }
  return Track::from_pieces(TrackId::Custom, pieces, kLaneWidth, spacing);
}

VehicleState mirror(const VehicleState& v) {
  VehicleState m = v;
  m.position.y = -v.position.y;
  m.heading = normalize_angle(-v.heading);
  return m;
}

SceneState reference_scene(TrackId id, int weather) {
  SceneState s;
  s.track = id;
  s.vehicle.position = track(id).turns().front().start.position;
  s.vehicle.heading = normalize_angle(track(id).turns().front().start.heading);
  s.weather = weather;
  s.rng_stream_id = 0;
  return s;
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

TEST_CASE("shipped tracks: closed, simple, distinct, eight turns on the centerline") {
  const Track& a = track(TrackId::A);
  const Track& b = track(TrackId::B);
  for (const Track* t : {&a, &b}) {
    CHECK(t->lane_width() == kLaneWidth);
    CHECK(t->is_simple());
    const auto& c = t->centerline();
    // closing segment is no longer than the sampling spacing
    CHECK((c.front() - c.back()).norm() <= 0.5 + 1e-9);
    REQUIRE(t->turns().size() == 8);
    for (const auto& turn : t->turns()) {
      CHECK(t->nearest(turn.start.position).distance < 1e-6);
      CHECK(turn.radius > 0.0);
    }
  }
  CHECK(a.length() != doctest::Approx(b.length()));
  CHECK(track_from_name(track_name(TrackId::B)) == TrackId::B);
}

TEST_CASE("step: zero steering advances speed*dt along the heading") {
  VehicleState s;
  s.position = {3.0, -2.0};
  s.heading = 0.7;
  const auto n = step(s, 0.0);
  CHECK(n.position.x == doctest::Approx(3.0 + kSpeed * kDt * std::cos(0.7)));
  CHECK(n.position.y == doctest::Approx(-2.0 + kSpeed * kDt * std::sin(0.7)));
  CHECK(n.heading == 0.7);
  CHECK(n.speed == kSpeed);
}

TEST_CASE("step: constant steering traces the closed-form circle") {
  const double steer = 0.25;
  const double R = kWheelbase / std::tan(steer * 70.0 * kPi / 180.0);
  VehicleState s;
  for (int i = 0; i < 120; ++i) s = step(s, steer);
  const double theta = kSpeed * 120 * kDt / R;
  // circle centered at (0, R) through the origin, heading 0 at the start
  CHECK(s.position.x == doctest::Approx(R * std::sin(theta)).epsilon(1e-9));
  CHECK(s.position.y == doctest::Approx(R * (1.0 - std::cos(theta))).epsilon(1e-9));
  CHECK(std::hypot(s.position.x, s.position.y - R) == doctest::Approx(R).epsilon(1e-9));
  CHECK(s.heading == doctest::Approx(normalize_angle(theta)).epsilon(1e-9));
}

TEST_CASE("step: mirrored states with negated steering stay mirrored") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    VehicleState a;
    a.position = {10 * u(rng), 10 * u(rng)};
    a.heading = kPi * u(rng);
    VehicleState b = mirror(a);
    for (int i = 0; i < 30; ++i) {
      const double s = u(rng);
      a = step(a, s);
      b = step(b, -s);
      CHECK(b.position.x == doctest::Approx(a.position.x).epsilon(1e-12));
      CHECK(b.position.y == doctest::Approx(-a.position.y).epsilon(1e-12));
      CHECK(std::fabs(normalize_angle(b.heading + a.heading)) < 1e-12);
    }
  }
}

TEST_CASE("step rejects non-finite steering and clamps large commands") {
  VehicleState s;
  CHECK_THROWS_AS(step(s, std::nan("")), NumericError);
  CHECK_THROWS_AS(step(s, INFINITY), NumericError);
  CHECK(step(s, 5.0) == step(s, 1.0));
  CHECK(normalize_angle(3 * kPi) == doctest::Approx(kPi));
  CHECK(normalize_angle(-kPi) == doctest::Approx(kPi));
}

TEST_CASE("expert: aligned on a straight gives exactly zero") {
  const Track t = rounded_square(20.0, 0.5);
  VehicleState v;
  v.position = {20.0, 0.0};
  v.heading = 0.0;
  CHECK(std::fabs(expert_steering(t, v)) < 1e-12);
}

TEST_CASE("expert: on a left arc matches the closed-form pure-pursuit value") {
  // On a circle of radius R the lookahead chord subtends alpha = asin(L/2R),
  // so curvature 2 sin(alpha)/L = 1/R and the wheel angle is atan(wheelbase/R).
  for (double R : {12.0, 20.0, 35.0}) {
    const Track t = rounded_square(R, 0.02);
    const double th = kPi / 8;
    VehicleState v;
    v.position = {60.0 + R * std::sin(th), R - R * std::cos(th)};
    v.heading = th;
    const double expected = std::atan(kWheelbase / R) / (70.0 * kPi / 180.0);
    const auto pp = pure_pursuit(t, v);
    CHECK(pp.alpha == doctest::Approx(std::asin(kLookahead / (2 * R))).epsilon(1e-4));
    CHECK(pp.curvature == doctest::Approx(1.0 / R).epsilon(1e-4));
    CHECK(expert_steering(t, v) == doctest::Approx(expected).epsilon(1e-4));
  }
}

TEST_CASE("expert: mirror-image scenes negate the steering exactly") {
  for (TrackId id : {TrackId::A, TrackId::B}) {
    const Track& t = track(id);
    const Track m = t.mirrored();
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> s(0.0, t.length());
    std::uniform_real_distribution<double> off(-1.5, 1.5);
    std::uniform_real_distribution<double> dh(-0.3, 0.3);
    for (int i = 0; i < 200; ++i) {
      const Pose p = t.pose_at(s(rng));
      VehicleState v;
      const double o = off(rng);
      v.position = p.position + o * Vec2{-std::sin(p.heading), std::cos(p.heading)};
      v.heading = normalize_angle(p.heading + dh(rng));
      CHECK(expert_steering(m, mirror(v)) == -expert_steering(t, v));
    }
  }
}

TEST_CASE("expert: weather does not affect the label; far off the road is an error") {
  SceneState s = reference_scene(TrackId::A, 0);
  s.vehicle.position = s.vehicle.position + Vec2{0.3, 0.4};
  const double base = expert_steering(s);
  for (int w = 1; w < kWeatherCount; ++w) {
    s.weather = w;
    s.rng_stream_id = static_cast<std::uint64_t>(w) * 977;
    CHECK(expert_steering(s) == base);
  }
  s.vehicle.position = s.vehicle.position + Vec2{0.0, 50.0};
  CHECK_THROWS_AS(expert_steering(s), OffTrackError);
}

TEST_CASE("weather table: 15 distinct sets, clear baseline, exact JSON round trip") {
  const auto t = WeatherTable::defaults();
  std::set<std::string> dumps;
  for (int i = 0; i < kWeatherCount; ++i) {
    CHECK(t.at(i).id == i);
    dumps.insert(t.to_json()["weathers"][static_cast<std::size_t>(i)].dump());
  }
  CHECK(dumps.size() == 15);
  CHECK(t.at(0).fog_density == 0.0);
  CHECK(t.at(0).rain_intensity == 0.0);
  CHECK(WeatherTable::from_json(t.to_json()) == t);
  CHECK_THROWS_AS(t.at(15), ConfigError);
  CHECK_THROWS_AS(t.at(-1), ConfigError);

  const auto rec = t.to_json()["weathers"][0];
  std::set<std::string> keys;
  for (auto it = rec.begin(); it != rec.end(); ++it) keys.insert(it.key());
  CHECK(keys == std::set<std::string>{"id", "road_palette", "offroad_palette", "marking_palette", "brightness",
                                      "contrast", "fog_density", "rain_intensity", "noise_sigma"});
}

TEST_CASE("weather table: shipped config file equals the built-in defaults") {
  const auto file = fs::path(WKD_SOURCE_DIR) / "config" / "weathers.json";
  CHECK(WeatherTable::load(file) == WeatherTable::defaults());
  const auto tmp = fs::temp_directory_path() / "wkd_weathers_rt.json";
  WeatherTable::defaults().save(tmp);
  CHECK(WeatherTable::load(tmp) == WeatherTable::defaults());
}

TEST_CASE("weather table: malformed files are configuration errors") {
  auto j = WeatherTable::defaults().to_json();
  auto missing = j;
  missing["weathers"].erase(3);
  CHECK_THROWS_AS(WeatherTable::from_json(missing), ConfigError);
  auto extra = j;
  extra["weathers"][2]["sun"] = 1.0;
  CHECK_THROWS_AS(WeatherTable::from_json(extra), ConfigError);
  auto bad_fog = j;
  bad_fog["weathers"][4]["fog_density"] = 1.5;
  CHECK_THROWS_AS(WeatherTable::from_json(bad_fog), ConfigError);
  CHECK_THROWS_AS(WeatherTable::load("/nonexistent/weathers.json"), ConfigError);
}

TEST_CASE("render: deterministic and within [0,1] for every weather") {
  const auto table = WeatherTable::defaults();
  for (int w = 0; w < kWeatherCount; ++w) {
    SceneState s = reference_scene(TrackId::B, w);
    s.rng_stream_id = 12345;
    const Image a = render(s, table);
    const Image b = render(s, table);
    CHECK(bitwise_equal(a, b));
    CHECK(a.in_range());
  }
}

TEST_CASE("render: weather 0 is the bare palette with no post-processing") {
  const auto table = WeatherTable::defaults();
  const SceneState s = reference_scene(TrackId::A, 0);
  const Image img = render(s, table);
  const ClassMap cls = classify(track(TrackId::A), s.vehicle);
  const auto& w = table.at(0);
  const std::array<Rgb, 4> pal{Rgb{kSkyColor[0], kSkyColor[1], kSkyColor[2]}, w.road_palette, w.offroad_palette,
                               w.marking_palette};
  bool same = true;
  for (std::size_t y = 0; y < Image::kHeight; ++y)
    for (std::size_t x = 0; x < Image::kWidth; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const float expect = static_cast<float>(pal[static_cast<std::size_t>(cls[y * Image::kWidth + x])][c]);
        same = same && img.at(y, x, c) == expect;
      }
  CHECK(same);
  // the rng stream has nothing to perturb under clear weather
  SceneState other = s;
  other.rng_stream_id = 99;
  CHECK(bitwise_equal(render(other, table), img));
}

TEST_CASE("render: scene contains sky, road, markings and off-road; far away is all off-road") {
  const SceneState s = reference_scene(TrackId::A, 0);
  const ClassMap cls = classify(track(TrackId::A), s.vehicle);
  std::array<int, 4> counts{};
  for (auto c : cls) ++counts[static_cast<std::size_t>(c)];
  for (int n : counts) CHECK(n > 0);
  // road directly ahead at the bottom centre
  CHECK(cls[63 * Image::kWidth + 32] == PixelClass::Road);

  SceneState far = s;
  far.vehicle.position = far.vehicle.position + Vec2{500.0, 500.0};
  const ClassMap fc = classify(track(TrackId::A), far.vehicle);
  for (auto c : fc) CHECK((c == PixelClass::Sky || c == PixelClass::Offroad));
  CHECK(render(far, WeatherTable::defaults()).in_range());
}

TEST_CASE("render: unknown weather id is a configuration error") {
  SceneState s = reference_scene(TrackId::A, 0);
  s.weather = 15;
  CHECK_THROWS_AS(render(s, WeatherTable::defaults()), ConfigError);
}

TEST_CASE("render: fog weight grows towards the horizon") {
  CHECK(row_fog_weight(0) == 1.0f);
  for (std::size_t r = 30; r < 63; ++r) CHECK(row_fog_weight(r) >= row_fog_weight(r + 1));
  CHECK(row_fog_weight(63) < 0.5f);
}

TEST_CASE("render: golden checksums") {
  const auto table = WeatherTable::defaults();
  std::map<std::string, std::string> actual;
  for (int w : {0, 1, 5, 9, 14}) {
    actual["trackA_turn1_w" + std::to_string(w)] = hex(render(reference_scene(TrackId::A, w), table).checksum());
  }
  actual["trackB_turn1_w0"] = hex(render(reference_scene(TrackId::B, 0), table).checksum());
  if (golden::regenerate()) {
    golden::write("render_checksums.txt", actual, "scene checksum (FNV-1a over f32 pixels)");
    return;
  }
  const auto expected = golden::read("render_checksums.txt");
  REQUIRE(expected.size() == actual.size());
  for (const auto& [k, v] : actual) {
    INFO(k);
    CHECK(expected.at(k) == v);
  }
}

TEST_CASE("episodes: exactly 120 records; expert stays in lane, hard left does not") {
  const auto table = WeatherTable::defaults();
  for (TrackId id : {TrackId::A, TrackId::B}) {
    const Track& t = track(id);
    for (const auto& turn : t.turns()) {
      const auto rec = run_episode(t, turn, table, expert_policy(), {3, kTurnFrames, 5});
      CHECK(rec.frames() == 120);
      CHECK(rec.in_lane_pct() == 100.0);
    }
  }
  // Full lock circles with radius wheelbase / tan(70 deg) = 0.91 m, so its
  // offset never exceeds the 1.82 m diameter and it stays inside the 2 m
  // half-lane. A gentle constant left (radius 6.5 m) does leave the lane.
  const Track& a = track(TrackId::A);
  const double lock_radius = kWheelbase / std::tan(kMaxSteerRad);
  for (const auto& turn : a.turns()) {
    const Policy hard = [](const Image&, const SceneState&) { return 1.0; };
    const auto rec = run_episode(a, turn, table, hard, {0, kTurnFrames, 5});
    CHECK(rec.frames() == 120);
    double worst = 0.0;
    for (double d : rec.deviation) worst = std::max(worst, std::fabs(d));
    CHECK(worst <= 2 * lock_radius + 1e-6);
    const Policy gentle = [](const Image&, const SceneState&) { return 0.3; };
    CHECK(run_episode(a, turn, table, gentle, {0, kTurnFrames, 5}).in_lane_pct() < 100.0);
  }
}

TEST_CASE("episodes: policy failures propagate") {
  const Policy bad = [](const Image&, const SceneState&) { return std::nan(""); };
  const Track& a = track(TrackId::A);
  CHECK_THROWS_AS(run_episode(a, a.turns()[0], WeatherTable::defaults(), bad, {}), NumericError);
}

TEST_CASE("in-lane percentage counts |deviation| < lane_width / 2") {
  InLaneRecord r;
  r.deviation = {0.0, 1.9, -1.99, 2.0, -2.5};
  CHECK(r.in_lane_pct(4.0) == doctest::Approx(60.0));
  CHECK(r.in_lane_pct(6.0) == doctest::Approx(100.0));
}

TEST_CASE("dataset: counts, labels and determinism") {
  const auto table = WeatherTable::defaults();
  const Dataset ds = collect_dataset(TrackId::B, 0, 6500, 3200, 21, table);
  CHECK(ds.size() == 6500);
  CHECK(ds.labeled_count() == 3200);
  CHECK(ds.labeled_indices().size() + ds.unlabeled_indices().size() == 6500);
  for (const auto& s : ds.samples) {
    REQUIRE(s.scene.has_value());
    CHECK(s.weather == 0);
    if (s.label) CHECK(*s.label == expert_steering(*s.scene));
  }

  const Dataset full = collect_dataset(TrackId::A, 0, 300, 300, 3, table);
  CHECK(full.labeled_count() == 300);

  const Dataset a = collect_dataset(TrackId::B, 0, 400, 150, 77, table);
  const Dataset b = collect_dataset(TrackId::B, 0, 400, 150, 77, table);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(bitwise_equal(a.samples[i].image, b.samples[i].image));
    CHECK(a.samples[i].label == b.samples[i].label);
    CHECK(a.samples[i].scene == b.samples[i].scene);
  }
  const Dataset c = collect_dataset(TrackId::B, 0, 400, 150, 78, table);
  CHECK(c.labeled_indices() != a.labeled_indices());
  CHECK_THROWS(collect_dataset(TrackId::B, 0, 10, 11, 1, table));
}

TEST_CASE("dataset: images are the render of the stored scene") {
  const auto table = WeatherTable::defaults();
  CollectSpec spec;
  spec.weathers = {0, 4, 9};
  spec.n_total = 60;
  spec.n_labeled = 20;
  const Dataset ds = collect_dataset(spec, table);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& s = ds.samples[i];
    CHECK(s.weather == spec.weathers[i % 3]);
    CHECK(s.scene->weather == s.weather);
    CHECK(bitwise_equal(s.image, render(*s.scene, table)));
  }
}

TEST_CASE("dataset: save and load round trip") {
  const auto table = WeatherTable::defaults();
  const Dataset ds = collect_dataset(TrackId::A, 0, 50, 20, 5, table);
  const auto dir = fs::temp_directory_path() / "wkd_ds_roundtrip";
  fs::remove_all(dir);
  save_dataset(ds, dir);
  CHECK(fs::exists(dir / "manifest.json"));
  CHECK(fs::file_size(dir / "images.bin") == 50 * Image::kSize * sizeof(float));
  const Dataset back = load_dataset(dir);
  REQUIRE(back.size() == ds.size());
  CHECK(back.seed == ds.seed);
  CHECK(back.track == ds.track);
  CHECK(back.weathers == ds.weathers);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(bitwise_equal(back.samples[i].image, ds.samples[i].image));
    CHECK(back.samples[i].label == ds.samples[i].label);
    CHECK(back.samples[i].scene == ds.samples[i].scene);
  }
  CHECK_THROWS_AS(load_dataset(dir / "nope"), ConfigError);
}
