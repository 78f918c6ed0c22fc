#pragma once

#include "wkd/sim/scene.hpp"
#include "wkd/sim/track.hpp"
#include "wkd/sim/vehicle.hpp"

namespace wkd::sim {

inline constexpr double kLookahead = 6.0;  // m

struct PursuitTarget {
  Vec2 point;
  double alpha = 0.0;      // bearing of the target in the vehicle frame
  double curvature = 0.0;  // 2 sin(alpha) / L_d
  double wheel_angle = 0.0;
};

// Pure pursuit on the centerline: the target is the first centerline point,
// walking forward from the nearest point, at distance `lookahead` from the
// rear axle. Throws OffTrackError beyond 2 x lane width from the centerline.
PursuitTarget pure_pursuit(const Track& track, const VehicleState& vehicle, double lookahead = kLookahead);

// Wheel angle / 70 deg, clamped to [-1, 1]. Ignores the weather entirely.
double expert_steering(const Track& track, const VehicleState& vehicle, double lookahead = kLookahead);
double expert_steering(const SceneState& scene);

}  // namespace wkd::sim
