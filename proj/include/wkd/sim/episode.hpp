#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "wkd/image.hpp"
#include "wkd/sim/scene.hpp"
#include "wkd/sim/track.hpp"
#include "wkd/sim/weather.hpp"

namespace wkd::sim {

inline constexpr int kTurnFrames = 120;

// Maps the rendered frame (and, for privileged policies such as the expert,
// the true scene) to a steering command in [-1, 1].
using Policy = std::function<double(const Image&, const SceneState&)>;

struct InLaneRecord {
  std::vector<double> deviation;  // signed lateral offset after each frame, meters

  std::size_t frames() const { return deviation.size(); }
  // Percentage of frames with |deviation| < lane_width / 2.
  double in_lane_pct(double lane_width = kLaneWidth) const;
};

struct EpisodeSpec {
  int weather = 0;
  int frames = kTurnFrames;
  std::uint64_t seed = 0;  // per-frame rng streams derive from this
};

InLaneRecord run_episode(const Track& track, const TurnSpec& turn, const WeatherTable& weathers,
                         const Policy& policy, const EpisodeSpec& spec);

// Expert driving from the true scene, ignoring the image.
Policy expert_policy();

}  // namespace wkd::sim
