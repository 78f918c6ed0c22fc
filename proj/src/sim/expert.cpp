#include "wkd/sim/expert.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "wkd/errors.hpp"

namespace wkd::sim {

PursuitTarget pure_pursuit(const Track& track, const VehicleState& vehicle, double lookahead) {
  const Vec2 p = vehicle.position;
  const NearestPoint np = track.nearest(p);
  if (np.distance > 2.0 * track.lane_width()) {
    std::ostringstream msg;
    msg << "vehicle is " << np.distance << " m from the centerline (limit " << 2.0 * track.lane_width() << " m)";
    throw OffTrackError(msg.str());
  }

  // Walk forward until a segment leaves the lookahead circle; take the
  // exit intersection on that segment.
  Vec2 target = track.segment_end(np.segment);
  const std::size_t n = track.segment_count();
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = (np.segment + k) % n;
    const Vec2 a = k == 0 ? np.point : track.segment_start(i);
    const Vec2 b = track.segment_end(i);
    const Vec2 d = b - a, f = a - p;
    const double A = dot(d, d);
    const double B = 2.0 * dot(f, d);
    const double C = dot(f, f) - lookahead * lookahead;
    if (A <= 0.0) continue;
    const double disc = B * B - 4.0 * A * C;
    if (disc < 0.0) continue;
    const double t = (-B + std::sqrt(disc)) / (2.0 * A);
    if (t >= 0.0 && t <= 1.0) {
      target = a + t * d;
      break;
    }
  }

  PursuitTarget out;
  out.point = target;
  const double dx = target.x - p.x, dy = target.y - p.y;
  const double ch = std::cos(vehicle.heading), sh = std::sin(vehicle.heading);
  const double lx = ch * dx + sh * dy;
  const double ly = -sh * dx + ch * dy;
  out.alpha = std::atan2(ly, lx);
  out.curvature = 2.0 * std::sin(out.alpha) / lookahead;
  out.wheel_angle = std::atan(kWheelbase * out.curvature);
  return out;
}

double expert_steering(const Track& track, const VehicleState& vehicle, double lookahead) {
  return std::clamp(pure_pursuit(track, vehicle, lookahead).wheel_angle / kMaxSteerRad, -1.0, 1.0);
}

double expert_steering(const SceneState& scene) { return expert_steering(track(scene.track), scene.vehicle); }

}  // namespace wkd::sim
