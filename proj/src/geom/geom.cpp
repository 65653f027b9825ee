#include "mural/geom.hpp"

#include <algorithm>
#include <numbers>
#include <string>

#include "mural/error.hpp"

namespace mural::geom {

namespace {

// 8-point Gauss-Legendre on [-1, 1].
constexpr std::array<double, 8> kGaussX = {
    -0.9602898564975363, -0.7966664774136267, -0.5255324099163290, -0.1834346424956498,
    0.1834346424956498,  0.5255324099163290,  0.7966664774136267,  0.9602898564975363};
constexpr std::array<double, 8> kGaussW = {
    0.1012285362903763, 0.2223810344533745, 0.3137066458778873, 0.3626837833783620,
    0.3626837833783620, 0.3137066458778873, 0.2223810344533745, 0.1012285362903763};

double gauss_speed(const CurveSegment& seg, double t0, double t1) {
  const double half = 0.5 * (t1 - t0);
  const double mid = 0.5 * (t1 + t0);
  double sum = 0.0;
  for (std::size_t i = 0; i < kGaussX.size(); ++i) {
    sum += kGaussW[i] * seg.derivative(mid + half * kGaussX[i]).norm();
  }
  return sum * half;
}

double adaptive_length(const CurveSegment& seg, double t0, double t1, double whole, int depth) {
  const double mid = 0.5 * (t0 + t1);
  const double left = gauss_speed(seg, t0, mid);
  const double right = gauss_speed(seg, mid, t1);
  const double both = left + right;
  if (depth >= 24 || std::abs(both - whole) <= 1e-13 * std::max(1.0, both)) {
    return both;
  }
  return adaptive_length(seg, t0, mid, left, depth + 1) +
         adaptive_length(seg, mid, t1, right, depth + 1);
}

double point_line_distance(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len = ab.norm();
  if (len == 0.0) return distance(p, a);
  return std::abs(cross(ab, p - a)) / len;
}

// Parameter intervals on which the cubic is flat to `tol`.
void flat_pieces(const CurveSegment& seg, double t0, double t1, double tol, int depth,
                 std::vector<double>& breaks) {
  const auto pts = seg.points();
  const double dev = std::max(point_line_distance(pts[1], pts[0], pts[3]),
                              point_line_distance(pts[2], pts[0], pts[3]));
  if (dev < tol || depth >= 20) {
    breaks.push_back(t1);
    return;
  }
  const auto halves = seg.split(0.5);
  const double tm = 0.5 * (t0 + t1);
  flat_pieces(halves[0], t0, tm, tol, depth + 1, breaks);
  flat_pieces(halves[1], tm, t1, tol, depth + 1, breaks);
}

// Parameter t in [ta, tb] with arc_length(seg, ta, t) == target.
double invert_length(const CurveSegment& seg, double ta, double tb, double target) {
  double lo = ta;
  double hi = tb;
  double t = ta + (tb - ta) * 0.5;
  for (int it = 0; it < 60; ++it) {
    const double f = arc_length(seg, ta, t) - target;
    if (std::abs(f) < 1e-14) break;
    if (f > 0) hi = t; else lo = t;
    const double speed = seg.derivative(t).norm();
    double next = speed > 1e-12 ? t - f / speed : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - t) < 1e-15) { t = next; break; }
    t = next;
  }
  return t;
}

void append_segment_samples(const CurveSegment& seg, double spacing, std::vector<Vec2>& out) {
  const double len = arc_length(seg);
  const auto n = static_cast<std::size_t>(std::max(1.0, std::ceil(len / spacing - 1e-12)));
  if (seg.kind() == SegmentKind::line) {
    for (std::size_t k = 1; k < n; ++k) {
      const double u = static_cast<double>(k) / static_cast<double>(n);
      out.push_back(seg.start() + (seg.end() - seg.start()) * u);
    }
    out.push_back(seg.end());
    return;
  }
  std::vector<double> breaks{0.0};
  flat_pieces(seg, 0.0, 1.0, spacing / 4.0, 0, breaks);
  std::vector<double> cumulative{0.0};
  for (std::size_t i = 1; i < breaks.size(); ++i) {
    cumulative.push_back(cumulative.back() + arc_length(seg, breaks[i - 1], breaks[i]));
  }
  std::size_t piece = 1;
  for (std::size_t k = 1; k < n; ++k) {
    const double target = len * static_cast<double>(k) / static_cast<double>(n);
    while (piece + 1 < cumulative.size() && cumulative[piece] < target) ++piece;
    const double t =
        invert_length(seg, breaks[piece - 1], breaks[piece], target - cumulative[piece - 1]);
    out.push_back(seg.point_at(t));
  }
  out.push_back(seg.end());
}

}  // namespace

Vec2 normalized(Vec2 v) {
  const double n = v.norm();
  if (n == 0.0) return {};
  return v / n;
}

Affine2 Affine2::compose(const Affine2& in) const {
  return {a * in.a + c * in.b,     b * in.a + d * in.b,     a * in.c + c * in.d,
          b * in.c + d * in.d,     a * in.e + c * in.f + e, b * in.e + d * in.f + f};
}

Affine2 Affine2::rotation(double radians) {
  const double cs = std::cos(radians);
  const double sn = std::sin(radians);
  return {cs, sn, -sn, cs, 0, 0};
}

Affine2 Affine2::rigid(double radians, Vec2 t) {
  return translation(t.x, t.z).compose(rotation(radians));
}

void CurveSegment::validate(SegmentKind kind, const std::array<Vec2, 4>& pts) {
  const std::size_t n = kind == SegmentKind::line ? 2 : 4;
  bool distinct = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (!pts[i].finite()) {
      throw Error(ErrorCode::degenerate_geometry, "non-finite control point");
    }
    if (distance(pts[i], pts[0]) > 1e-12) distinct = true;
  }
  if (!distinct) {
    throw Error(ErrorCode::degenerate_geometry, "segment with coincident control points");
  }
}

CurveSegment CurveSegment::line(Vec2 a, Vec2 b) {
  const std::array<Vec2, 4> pts{a, b, Vec2{}, Vec2{}};
  validate(SegmentKind::line, pts);
  return {SegmentKind::line, pts};
}

CurveSegment CurveSegment::cubic(Vec2 p0, Vec2 p1, Vec2 p2, Vec2 p3) {
  const std::array<Vec2, 4> pts{p0, p1, p2, p3};
  validate(SegmentKind::cubic, pts);
  return {SegmentKind::cubic, pts};
}

Vec2 CurveSegment::point_at(double t) const {
  if (kind_ == SegmentKind::line) return pts_[0] + (pts_[1] - pts_[0]) * t;
  const double u = 1.0 - t;
  return pts_[0] * (u * u * u) + pts_[1] * (3 * u * u * t) + pts_[2] * (3 * u * t * t) +
         pts_[3] * (t * t * t);
}

Vec2 CurveSegment::derivative(double t) const {
  if (kind_ == SegmentKind::line) return pts_[1] - pts_[0];
  const double u = 1.0 - t;
  return (pts_[1] - pts_[0]) * (3 * u * u) + (pts_[2] - pts_[1]) * (6 * u * t) +
         (pts_[3] - pts_[2]) * (3 * t * t);
}

Vec2 CurveSegment::start_direction() const {
  for (std::size_t i = 1; i < count(); ++i) {
    const Vec2 d = pts_[i] - pts_[0];
    if (d.norm() > 1e-12) return normalized(d);
  }
  return {};
}

Vec2 CurveSegment::end_direction() const {
  const std::size_t last = count() - 1;
  for (std::size_t i = last; i-- > 0;) {
    const Vec2 d = pts_[last] - pts_[i];
    if (d.norm() > 1e-12) return normalized(d);
  }
  return {};
}

CurveSegment CurveSegment::reversed() const {
  if (kind_ == SegmentKind::line) return {kind_, {pts_[1], pts_[0], Vec2{}, Vec2{}}};
  return {kind_, {pts_[3], pts_[2], pts_[1], pts_[0]}};
}

CurveSegment CurveSegment::transformed(const Affine2& m) const {
  std::array<Vec2, 4> pts{};
  for (std::size_t i = 0; i < count(); ++i) pts[i] = m.apply(pts_[i]);
  validate(kind_, pts);
  return {kind_, pts};
}

CurveSegment CurveSegment::with_start(Vec2 p) const {
  auto pts = pts_;
  pts[0] = p;
  validate(kind_, pts);
  return {kind_, pts};
}

CurveSegment CurveSegment::with_end(Vec2 p) const {
  auto pts = pts_;
  pts[count() - 1] = p;
  validate(kind_, pts);
  return {kind_, pts};
}

std::array<CurveSegment, 2> CurveSegment::split(double t) const {
  if (kind_ == SegmentKind::line) {
    const Vec2 m = point_at(t);
    return {CurveSegment{kind_, {pts_[0], m, Vec2{}, Vec2{}}},
            CurveSegment{kind_, {m, pts_[1], Vec2{}, Vec2{}}}};
  }
  auto lerp = [t](Vec2 a, Vec2 b) { return a + (b - a) * t; };
  const Vec2 p01 = lerp(pts_[0], pts_[1]);
  const Vec2 p12 = lerp(pts_[1], pts_[2]);
  const Vec2 p23 = lerp(pts_[2], pts_[3]);
  const Vec2 p012 = lerp(p01, p12);
  const Vec2 p123 = lerp(p12, p23);
  const Vec2 mid = lerp(p012, p123);
  return {CurveSegment{kind_, {pts_[0], p01, p012, mid}},
          CurveSegment{kind_, {mid, p123, p23, pts_[3]}}};
}

double arc_length(const CurveSegment& seg) {
  if (seg.kind() == SegmentKind::line) return distance(seg.start(), seg.end());
  return arc_length(seg, 0.0, 1.0);
}

double arc_length(const CurveSegment& seg, double t0, double t1) {
  if (t1 <= t0) return 0.0;
  if (seg.kind() == SegmentKind::line) return distance(seg.start(), seg.end()) * (t1 - t0);
  return adaptive_length(seg, t0, t1, gauss_speed(seg, t0, t1), 0);
}

PathChain::PathChain(std::vector<CurveSegment> segments) : segments_(std::move(segments)) {
  if (segments_.empty()) throw Error(ErrorCode::degenerate_geometry, "empty chain");
  for (std::size_t i = 1; i < segments_.size(); ++i) {
    if (distance(segments_[i - 1].end(), segments_[i].start()) > kContinuityTolerance) {
      throw Error(ErrorCode::invalid_argument,
                  "discontinuous chain at segment " + std::to_string(i));
    }
  }
  for (const auto& s : segments_) length_ += arc_length(s);
  if (!(length_ > 0.0)) throw Error(ErrorCode::degenerate_geometry, "zero-length chain");
}

PathChain PathChain::reversed() const {
  std::vector<CurveSegment> out;
  out.reserve(segments_.size());
  for (auto it = segments_.rbegin(); it != segments_.rend(); ++it) out.push_back(it->reversed());
  return PathChain(std::move(out));
}

PathChain PathChain::transformed(const Affine2& m) const {
  std::vector<CurveSegment> out;
  out.reserve(segments_.size());
  for (const auto& s : segments_) out.push_back(s.transformed(m));
  return PathChain(std::move(out));
}

std::vector<Vec2> sample_path(const PathChain& chain, double spacing) {
  if (!(spacing > 0.0)) throw Error(ErrorCode::invalid_argument, "spacing must be positive");
  std::vector<Vec2> out{chain.start()};
  for (const auto& seg : chain.segments()) append_segment_samples(seg, spacing, out);
  return out;
}

double direction_angle(Vec2 a, Vec2 b) {
  return std::atan2(std::abs(cross(a, b)), dot(a, b));
}

double end_tangent_angle(const PathChain& a, const PathChain& b) {
  if (distance(a.end(), b.start()) > kJoinTolerance) {
    throw Error(ErrorCode::not_adjacent, "chain endpoints do not meet");
  }
  return direction_angle(a.end_direction(), b.start_direction());
}

void Box::expand(Vec2 p) {
  if (empty) {
    min = max = p;
    empty = false;
    return;
  }
  min = {std::min(min.x, p.x), std::min(min.z, p.z)};
  max = {std::max(max.x, p.x), std::max(max.z, p.z)};
}

void Box::expand(const Box& o) {
  if (o.empty) return;
  expand(o.min);
  expand(o.max);
}

Box control_box(const PathChain& chain) {
  Box box;
  for (const auto& s : chain.segments()) {
    for (const auto& p : s.points()) box.expand(p);
  }
  return box;
}

double polyline_length(std::span<const Vec2> pts) {
  double len = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) len += distance(pts[i - 1], pts[i]);
  return len;
}

}  // namespace mural::geom
