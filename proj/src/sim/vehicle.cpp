#include "wkd/sim/vehicle.hpp"

#include <algorithm>
#include <cmath>

#include "wkd/errors.hpp"

namespace wkd::sim {

VehicleState step(const VehicleState& state, double steering, double dt) {
  if (!std::isfinite(steering)) throw NumericError("steering command is not finite");
  if (!(dt > 0.0)) throw UsageError("step needs dt > 0");
  const double wheel = std::clamp(steering, -1.0, 1.0) * kMaxSteerRad;
  const double omega = state.speed * std::tan(wheel) / kWheelbase;
  VehicleState next = state;
  const double h0 = state.heading;
  if (std::fabs(omega) < 1e-12) {
    next.position = state.position + (state.speed * dt) * Vec2{std::cos(h0), std::sin(h0)};
    next.heading = normalize_angle(h0);
    return next;
  }
  const double h1 = h0 + omega * dt;
  const double r = state.speed / omega;
  next.position = state.position + Vec2{r * (std::sin(h1) - std::sin(h0)), -r * (std::cos(h1) - std::cos(h0))};
  next.heading = normalize_angle(h1);
  return next;
}

}  // namespace wkd::sim
