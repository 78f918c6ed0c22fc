#include "wkd/sim/episode.hpp"

#include <cmath>
#include <string>

#include "wkd/errors.hpp"
#include "wkd/sim/expert.hpp"
#include "wkd/sim/render.hpp"

namespace wkd::sim {

double InLaneRecord::in_lane_pct(double lane_width) const {
  if (deviation.empty()) return 0.0;
  std::size_t in = 0;
  for (double d : deviation) {
    if (std::fabs(d) < lane_width / 2.0) ++in;
  }
  return 100.0 * static_cast<double>(in) / static_cast<double>(deviation.size());
}

InLaneRecord run_episode(const Track& track, const TurnSpec& turn, const WeatherTable& weathers,
                         const Policy& policy, const EpisodeSpec& spec) {
  weathers.at(spec.weather);
  InLaneRecord rec;
  rec.deviation.reserve(static_cast<std::size_t>(std::max(spec.frames, 0)));
  SceneState scene;
  scene.track = track.id();
  scene.weather = spec.weather;
  scene.vehicle.position = turn.start.position;
  scene.vehicle.heading = normalize_angle(turn.start.heading);
  scene.vehicle.speed = kSpeed;
  for (int f = 0; f < spec.frames; ++f) {
    scene.rng_stream_id = stream_id(spec.seed, static_cast<std::uint64_t>(f));
    const Image img = render(track, scene, weathers);
    const double s = policy(img, scene);
    if (!std::isfinite(s)) throw NumericError("policy returned non-finite steering at frame " + std::to_string(f));
    scene.vehicle = step(scene.vehicle, s);
    rec.deviation.push_back(track.nearest(scene.vehicle.position).signed_offset);
  }
  return rec;
}

Policy expert_policy() {
  return [](const Image&, const SceneState& scene) {
    // Off-track states hold the wheel straight rather than aborting the episode.
    try {
      return expert_steering(scene);
    } catch (const OffTrackError&) {
      return 0.0;
    }
  };
}

}  // namespace wkd::sim
