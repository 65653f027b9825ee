#pragma once

// Wall-plane geometry. Coordinates are in the wall frame: x lateral along the
// wall, z height above ground (both metres). The perpendicular axis y is
// handled by the localization and control code, never here.

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace mural::geom {

/// Endpoints closer than this are considered the same point when joining.
inline constexpr double kJoinTolerance = 1e-6;
/// Required continuity between consecutive segments of one chain.
inline constexpr double kContinuityTolerance = 1e-9;

struct Vec2 {
  double x = 0.0;
  double z = 0.0;

  constexpr Vec2 operator+(Vec2 o) const { return {x + o.x, z + o.z}; }
  constexpr Vec2 operator-(Vec2 o) const { return {x - o.x, z - o.z}; }
  constexpr Vec2 operator-() const { return {-x, -z}; }
  constexpr Vec2 operator*(double s) const { return {x * s, z * s}; }
  constexpr Vec2 operator/(double s) const { return {x / s, z / s}; }
  constexpr Vec2& operator+=(Vec2 o) { x += o.x; z += o.z; return *this; }
  constexpr Vec2& operator-=(Vec2 o) { x -= o.x; z -= o.z; return *this; }
  constexpr bool operator==(const Vec2&) const = default;

  double norm() const { return std::hypot(x, z); }
  bool finite() const { return std::isfinite(x) && std::isfinite(z); }
};

constexpr Vec2 operator*(double s, Vec2 v) { return v * s; }
constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.z * b.z; }
constexpr double cross(Vec2 a, Vec2 b) { return a.x * b.z - a.z * b.x; }
inline double distance(Vec2 a, Vec2 b) { return (a - b).norm(); }
/// Counter-clockwise quarter turn: the left-hand normal of a direction.
constexpr Vec2 left_normal(Vec2 d) { return {-d.z, d.x}; }
Vec2 normalized(Vec2 v);

/// Affine map in SVG matrix order: x' = a x + c y + e, y' = b x + d y + f.
struct Affine2 {
  double a = 1, b = 0, c = 0, d = 1, e = 0, f = 0;

  Vec2 apply(Vec2 p) const { return {a * p.x + c * p.z + e, b * p.x + d * p.z + f}; }
  /// (*this) after `inner`: apply(inner.apply(p)).
  Affine2 compose(const Affine2& inner) const;
  static Affine2 identity() { return {}; }
  static Affine2 translation(double tx, double tz) { return {1, 0, 0, 1, tx, tz}; }
  static Affine2 scaling(double sx, double sz) { return {sx, 0, 0, sz, 0, 0}; }
  static Affine2 rotation(double radians);
  /// Rotation about the origin followed by a translation.
  static Affine2 rigid(double radians, Vec2 t);
};

enum class SegmentKind { line, cubic };

/// A straight line or a cubic Bézier. Immutable once built; the factories
/// reject non-finite and fully coincident control points.
class CurveSegment {
 public:
  static CurveSegment line(Vec2 a, Vec2 b);
  static CurveSegment cubic(Vec2 p0, Vec2 p1, Vec2 p2, Vec2 p3);

  SegmentKind kind() const { return kind_; }
  std::span<const Vec2> points() const { return {pts_.data(), count()}; }
  std::size_t count() const { return kind_ == SegmentKind::line ? 2 : 4; }
  Vec2 start() const { return pts_[0]; }
  Vec2 end() const { return pts_[count() - 1]; }

  Vec2 point_at(double t) const;
  Vec2 derivative(double t) const;
  /// Unit direction leaving start() / arriving at end(), taken from the
  /// control polygon; falls back to the next distinct control point.
  Vec2 start_direction() const;
  Vec2 end_direction() const;

  CurveSegment reversed() const;
  CurveSegment transformed(const Affine2& m) const;
  /// Same segment with the first / last point moved (used to snap joins).
  CurveSegment with_start(Vec2 p) const;
  CurveSegment with_end(Vec2 p) const;
  /// De Casteljau split at parameter t (lines split linearly).
  std::array<CurveSegment, 2> split(double t) const;

  bool operator==(const CurveSegment&) const = default;

 private:
  CurveSegment(SegmentKind kind, std::array<Vec2, 4> pts) : kind_(kind), pts_(pts) {}
  static void validate(SegmentKind kind, const std::array<Vec2, 4>& pts);

  SegmentKind kind_;
  std::array<Vec2, 4> pts_;
};

double arc_length(const CurveSegment& seg);
/// Arc length between parameters t0 <= t1 of one segment.
double arc_length(const CurveSegment& seg, double t0, double t1);

/// Ordered, continuous sequence of segments.
class PathChain {
 public:
  explicit PathChain(std::vector<CurveSegment> segments);
  explicit PathChain(CurveSegment segment) : PathChain(std::vector<CurveSegment>{segment}) {}

  std::span<const CurveSegment> segments() const { return segments_; }
  std::size_t size() const { return segments_.size(); }
  Vec2 start() const { return segments_.front().start(); }
  Vec2 end() const { return segments_.back().end(); }
  Vec2 start_direction() const { return segments_.front().start_direction(); }
  Vec2 end_direction() const { return segments_.back().end_direction(); }
  double length() const { return length_; }
  bool closed(double tol = kJoinTolerance) const { return distance(start(), end()) <= tol; }

  PathChain reversed() const;
  PathChain transformed(const Affine2& m) const;

  bool operator==(const PathChain& o) const { return segments_ == o.segments_; }

 private:
  std::vector<CurveSegment> segments_;
  double length_ = 0.0;
};

/// Arc-length parametrized polyline. Consecutive samples are at most
/// `spacing` apart and the chain endpoints are reproduced exactly.
std::vector<Vec2> sample_path(const PathChain& chain, double spacing);

/// Angle in [0, pi] between a's terminal tangent and b's initial tangent.
/// Throws NotAdjacent unless a.end() and b.start() coincide within
/// kJoinTolerance.
double end_tangent_angle(const PathChain& a, const PathChain& b);
/// Same measure for two directions.
double direction_angle(Vec2 a, Vec2 b);

struct Box {
  Vec2 min{};
  Vec2 max{};
  bool empty = true;

  void expand(Vec2 p);
  void expand(const Box& o);
  double width() const { return empty ? 0.0 : max.x - min.x; }
  double height() const { return empty ? 0.0 : max.z - min.z; }
};

/// Bounding box of the control points (a superset of the curve's extent).
Box control_box(const PathChain& chain);

double polyline_length(std::span<const Vec2> pts);

}  // namespace mural::geom
