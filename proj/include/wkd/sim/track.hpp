#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

namespace wkd::sim {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2, Vec2) = default;
  double norm() const { return std::hypot(x, y); }
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }

// Wraps to (-pi, pi].
double normalize_angle(double a);

struct Pose {
  Vec2 position;
  double heading = 0.0;
};

enum class TrackId { A, B, Custom };

std::string track_name(TrackId id);
TrackId track_from_name(const std::string& name);

// A straight (turn_angle == 0) or a circular arc turning by turn_angle
// radians (positive = left) over `length` meters.
struct TrackPiece {
  double length = 0.0;
  double turn_angle = 0.0;

  static TrackPiece straight(double len) { return {len, 0.0}; }
  static TrackPiece arc(double radius, double angle) { return {radius * std::fabs(angle), angle}; }
  double radius() const {
    return turn_angle == 0.0 ? std::numeric_limits<double>::infinity()
                             : length / std::fabs(turn_angle);
  }
};

struct TurnSpec {
  Pose start;              // on the centerline, `approach` meters before the arc
  double arc_start_s = 0;  // arc length where the curve begins
  double radius = 0;
  double angle = 0;        // signed, left positive
};

struct NearestPoint {
  double distance = std::numeric_limits<double>::infinity();
  double signed_offset = 0.0;  // left of travel direction is positive
  std::size_t segment = 0;
  double t = 0.0;              // position along the segment in [0,1]
  double s = 0.0;              // arc length of the closest point
  Vec2 point;
};

// Closed single-lane loop described by a sampled centerline.
class Track {
 public:
  static Track from_pieces(TrackId id, std::span<const TrackPiece> pieces, double lane_width,
                           double spacing = 0.5, Pose start = {}, double approach = 10.0);

  TrackId id() const { return id_; }
  const std::vector<Vec2>& centerline() const { return pts_; }
  double lane_width() const { return lane_width_; }
  double length() const { return total_length_; }
  const std::vector<TurnSpec>& turns() const { return turns_; }
  std::size_t segment_count() const { return pts_.size(); }
  Vec2 segment_start(std::size_t i) const { return pts_[i]; }
  Vec2 segment_end(std::size_t i) const { return pts_[(i + 1) % pts_.size()]; }
  double segment_s(std::size_t i) const { return cum_s_[i]; }

  // Exhaustive search over every segment.
  NearestPoint nearest(Vec2 p) const;
  // Unsigned distance to the centerline when it is within render_band(),
  // +inf otherwise. Uses a uniform grid of segment buckets.
  double band_distance(Vec2 p) const;
  double render_band() const { return band_; }

  Pose pose_at(double s) const;
  // Reflection across the x axis (y -> -y); left turns become right turns.
  Track mirrored() const;
  // True when no two non-adjacent centerline segments intersect.
  bool is_simple() const;

 private:
  void build_index();

  TrackId id_ = TrackId::Custom;
  std::vector<Vec2> pts_;
  std::vector<double> cum_s_;
  double total_length_ = 0.0;
  double lane_width_ = 4.0;
  double band_ = 2.5;
  std::vector<TurnSpec> turns_;

  double cell_ = 2.0;
  Vec2 origin_;
  long nx_ = 0, ny_ = 0;
  std::vector<std::vector<std::uint32_t>> cells_;
};

inline constexpr double kLaneWidth = 4.0;

// The two shipped loops; built once and cached.
const Track& track(TrackId id);

}  // namespace wkd::sim
