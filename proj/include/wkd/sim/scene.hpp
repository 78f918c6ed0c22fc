#pragma once

#include <cstdint>

#include "wkd/sim/track.hpp"
#include "wkd/sim/vehicle.hpp"

namespace wkd::sim {

// Complete ground truth for one frame. Images and expert labels are pure
// functions of this record.
struct SceneState {
  TrackId track = TrackId::A;
  VehicleState vehicle;
  int weather = 0;
  std::uint64_t rng_stream_id = 0;  // seeds rain streaks and sensor noise

  friend bool operator==(const SceneState&, const SceneState&) = default;
};

// SplitMix64 finalizer; used to derive independent per-frame streams.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t stream_id(std::uint64_t seed, std::uint64_t index) {
  return mix64(seed ^ mix64(index));
}

}  // namespace wkd::sim
