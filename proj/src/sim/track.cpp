#include "wkd/sim/track.hpp"

#include <algorithm>
#include <array>
#include <stdexcept>

#include "wkd/errors.hpp"

namespace wkd::sim {

double normalize_angle(double a) {
  constexpr double pi = std::numbers::pi;
  a = std::fmod(a, 2.0 * pi);
  if (a <= -pi) a += 2.0 * pi;
  if (a > pi) a -= 2.0 * pi;
  return a;
}

std::string track_name(TrackId id) {
  switch (id) {
    case TrackId::A:
      return "A";
    case TrackId::B:
      return "B";
    case TrackId::Custom:
      return "custom";
  }
  return "custom";
}

TrackId track_from_name(const std::string& name) {
  if (name == "A" || name == "TrackA") return TrackId::A;
  if (name == "B" || name == "TrackB") return TrackId::B;
  throw ConfigError("unknown track '" + name + "' (expected A or B)");
}

Track Track::from_pieces(TrackId id, std::span<const TrackPiece> pieces, double lane_width,
                         double spacing, Pose start, double approach) {
  if (!(lane_width > 0.0)) throw ConfigError("lane width must be positive");
  if (pieces.empty()) throw ConfigError("track needs at least one piece");
  Track t;
  t.id_ = id;
  t.lane_width_ = lane_width;
  t.band_ = lane_width / 2.0 + 0.5;

  Vec2 p = start.position;
  double h = start.heading;
  double s = 0.0;
  std::vector<std::pair<double, const TrackPiece*>> arcs;
  for (const auto& piece : pieces) {
    const std::size_t n = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(piece.length / spacing)));
    if (piece.turn_angle == 0.0) {
      const Vec2 dir{std::cos(h), std::sin(h)};
      for (std::size_t k = 0; k < n; ++k) {
        const double u = piece.length * static_cast<double>(k) / static_cast<double>(n);
        t.pts_.push_back(p + u * dir);
        t.cum_s_.push_back(s + u);
      }
      p = p + piece.length * dir;
    } else {
      arcs.emplace_back(s, &piece);
      const double r = piece.radius();
      const double sign = piece.turn_angle > 0 ? 1.0 : -1.0;
      const Vec2 center = p + (sign * r) * Vec2{-std::sin(h), std::cos(h)};
      for (std::size_t k = 0; k < n; ++k) {
        const double a = h + piece.turn_angle * static_cast<double>(k) / static_cast<double>(n);
        t.pts_.push_back(center + (sign * r) * Vec2{std::sin(a), -std::cos(a)});
        t.cum_s_.push_back(s + piece.length * static_cast<double>(k) / static_cast<double>(n));
      }
      h += piece.turn_angle;
      p = center + (sign * r) * Vec2{std::sin(h), -std::cos(h)};
    }
    s += piece.length;
  }
  if ((p - start.position).norm() > 1e-6 ||
      std::fabs(normalize_angle(h - start.heading)) > 1e-9) {
    throw ConfigError("track pieces do not close the loop");
  }
  t.total_length_ = s;
  for (const auto& [arc_s, piece] : arcs) {
    TurnSpec ts;
    ts.arc_start_s = arc_s;
    ts.radius = piece->radius();
    ts.angle = piece->turn_angle;
    ts.start = t.pose_at(arc_s - approach);
    t.turns_.push_back(ts);
  }
  t.build_index();
  return t;
}

void Track::build_index() {
  double minx = pts_[0].x, maxx = minx, miny = pts_[0].y, maxy = miny;
  for (const auto& q : pts_) {
    minx = std::min(minx, q.x);
    maxx = std::max(maxx, q.x);
    miny = std::min(miny, q.y);
    maxy = std::max(maxy, q.y);
  }
  origin_ = {minx - band_ - cell_, miny - band_ - cell_};
  nx_ = static_cast<long>(std::ceil((maxx - minx + 2 * band_ + 2 * cell_) / cell_)) + 1;
  ny_ = static_cast<long>(std::ceil((maxy - miny + 2 * band_ + 2 * cell_) / cell_)) + 1;
  cells_.assign(static_cast<std::size_t>(nx_ * ny_), {});
  for (std::size_t i = 0; i < pts_.size(); ++i) {
    const Vec2 a = segment_start(i), b = segment_end(i);
    const long x0 = static_cast<long>(std::floor((std::min(a.x, b.x) - band_ - origin_.x) / cell_));
    const long x1 = static_cast<long>(std::floor((std::max(a.x, b.x) + band_ - origin_.x) / cell_));
    const long y0 = static_cast<long>(std::floor((std::min(a.y, b.y) - band_ - origin_.y) / cell_));
    const long y1 = static_cast<long>(std::floor((std::max(a.y, b.y) + band_ - origin_.y) / cell_));
    for (long cy = y0; cy <= y1; ++cy)
      for (long cx = x0; cx <= x1; ++cx) cells_[static_cast<std::size_t>(cy * nx_ + cx)].push_back(static_cast<std::uint32_t>(i));
  }
}

namespace {

struct SegProj {
  double dist2;
  double t;
  Vec2 point;
};

inline SegProj project(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = dot(ab, ab);
  double t = len2 > 0.0 ? dot(p - a, ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const Vec2 q = a + t * ab;
  const Vec2 d = p - q;
  return {dot(d, d), t, q};
}

}  // namespace

NearestPoint Track::nearest(Vec2 p) const {
  NearestPoint best;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pts_.size(); ++i) {
    const SegProj sp = project(p, segment_start(i), segment_end(i));
    if (sp.dist2 < best_d2) {
      best_d2 = sp.dist2;
      best.segment = i;
      best.t = sp.t;
      best.point = sp.point;
    }
  }
  best.distance = std::sqrt(best_d2);
  const Vec2 a = segment_start(best.segment), b = segment_end(best.segment);
  const double seg_len = (b - a).norm();
  best.s = cum_s_[best.segment] + best.t * seg_len;
  best.signed_offset = cross(b - a, p - a) >= 0.0 ? best.distance : -best.distance;
  return best;
}

double Track::band_distance(Vec2 p) const {
  const long cx = static_cast<long>(std::floor((p.x - origin_.x) / cell_));
  const long cy = static_cast<long>(std::floor((p.y - origin_.y) / cell_));
  if (cx < 0 || cy < 0 || cx >= nx_ || cy >= ny_) return std::numeric_limits<double>::infinity();
  double best = std::numeric_limits<double>::infinity();
  for (std::uint32_t i : cells_[static_cast<std::size_t>(cy * nx_ + cx)]) {
    best = std::min(best, project(p, segment_start(i), segment_end(i)).dist2);
  }
  const double d = std::sqrt(best);
  return d <= band_ ? d : std::numeric_limits<double>::infinity();
}

Pose Track::pose_at(double s) const {
  s = std::fmod(s, total_length_);
  if (s < 0) s += total_length_;
  const auto it = std::upper_bound(cum_s_.begin(), cum_s_.end(), s);
  const std::size_t i = static_cast<std::size_t>(std::distance(cum_s_.begin(), it)) - 1;
  const Vec2 a = segment_start(i), b = segment_end(i);
  const double next_s = i + 1 < cum_s_.size() ? cum_s_[i + 1] : total_length_;
  const double t = (s - cum_s_[i]) / (next_s - cum_s_[i]);
  return {a + t * (b - a), std::atan2(b.y - a.y, b.x - a.x)};
}

Track Track::mirrored() const {
  Track m = *this;
  m.id_ = TrackId::Custom;
  for (auto& q : m.pts_) q.y = -q.y;
  for (auto& ts : m.turns_) {
    ts.start.position.y = -ts.start.position.y;
    ts.start.heading = normalize_angle(-ts.start.heading);
    ts.angle = -ts.angle;
  }
  m.build_index();
  return m;
}

bool Track::is_simple() const {
  const std::size_t n = pts_.size();
  auto orient = [](Vec2 a, Vec2 b, Vec2 c) { return cross(b - a, c - a); };
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = segment_start(i), b = segment_end(i);
    for (std::size_t j = i + 2; j < n; ++j) {
      if (i == 0 && j == n - 1) continue;
      const Vec2 c = segment_start(j), d = segment_end(j);
      if (std::max(a.x, b.x) < std::min(c.x, d.x) || std::max(c.x, d.x) < std::min(a.x, b.x) ||
          std::max(a.y, b.y) < std::min(c.y, d.y) || std::max(c.y, d.y) < std::min(a.y, b.y)) {
        continue;
      }
      const double o1 = orient(a, b, c), o2 = orient(a, b, d);
      const double o3 = orient(c, d, a), o4 = orient(c, d, b);
      if (((o1 > 0) != (o2 > 0)) && ((o3 > 0) != (o4 > 0))) return false;
    }
  }
  return true;
}

namespace {

// Rectilinear polygon (counter-clockwise) with filleted corners.
Track filleted_loop(TrackId id, std::span<const Vec2> verts, std::span<const double> radii) {
  const std::size_t n = verts.size();
  std::vector<TrackPiece> pieces;
  auto dir = [&](std::size_t i) {
    const Vec2 d = verts[(i + 1) % n] - verts[i];
    return (1.0 / d.norm()) * d;
  };
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = (i + 1) % n;
    const double edge = (verts[j] - verts[i]).norm();
    pieces.push_back(TrackPiece::straight(edge - radii[i] - radii[j]));
    const double turn = std::atan2(cross(dir(i), dir(j)), dot(dir(i), dir(j)));
    pieces.push_back(TrackPiece::arc(radii[j], turn));
  }
  const Vec2 d0 = dir(0);
  const Pose start{verts[0] + radii[0] * d0, std::atan2(d0.y, d0.x)};
  // Rotate so the loop begins with the straight before corner 1; the last
  // arc closes back onto the start pose.
  return Track::from_pieces(id, pieces, kLaneWidth, 0.5, start);
}

Track build_track_a() {
  // U-shaped loop: six left corners, two right corners.
  const std::array<Vec2, 8> v{{{0, 0}, {120, 0}, {120, 100}, {80, 100},
                               {80, 40}, {40, 40}, {40, 100}, {0, 100}}};
  const std::array<double, 8> r{10, 10, 10, 10, 10, 10, 10, 10};
  return filleted_loop(TrackId::A, v, r);
}

Track build_track_b() {
  // Stepped loop with mixed corner radii.
  const std::array<Vec2, 8> v{{{0, 0}, {100, 0}, {100, 50}, {150, 50},
                               {150, 120}, {50, 120}, {50, 70}, {0, 70}}};
  const std::array<double, 8> r{12, 9, 12, 9, 12, 9, 12, 12};
  return filleted_loop(TrackId::B, v, r);
}

}  // namespace

const Track& track(TrackId id) {
  static const Track a = build_track_a();
  static const Track b = build_track_b();
  switch (id) {
    case TrackId::A:
      return a;
    case TrackId::B:
      return b;
    case TrackId::Custom:
      break;
  }
  throw UsageError("custom tracks are not registered; pass the Track explicitly");
}

}  // namespace wkd::sim
