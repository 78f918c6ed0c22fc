#pragma once

#include <numbers>

#include "wkd/sim/track.hpp"

namespace wkd::sim {

inline constexpr double kWheelbase = 2.5;        // m
inline constexpr double kSpeed = 5.0;            // m/s, fixed throttle
inline constexpr double kDt = 0.1;               // s per frame
inline constexpr double kMaxSteerRad = 70.0 * std::numbers::pi / 180.0;

struct VehicleState {
  Vec2 position;         // rear axle, meters
  double heading = 0.0;  // radians, (-pi, pi]
  double speed = kSpeed;

  friend bool operator==(const VehicleState&, const VehicleState&) = default;
};

// Kinematic bicycle step with wheel angle = steering * 70 deg, integrated
// exactly for a constant wheel angle over dt. Steering is clamped to [-1,1].
VehicleState step(const VehicleState& state, double steering, double dt = kDt);

}  // namespace wkd::sim
