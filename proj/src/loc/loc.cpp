#include "mural/loc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "mural/error.hpp"

namespace mural::loc {

using Eigen::Matrix3d;
using Eigen::Vector2d;
using Eigen::Vector3d;

// ---------------------------------------------------------------------------
// RANSAC wall fit.

namespace {

struct Line2 {
  Vector2d n;  // unit normal
  double c;    // n . p = c
};

std::vector<int> collect_inliers(std::span<const Vector2d> pts, const Line2& l, double tol) {
  std::vector<int> idx;
  for (int i = 0; i < static_cast<int>(pts.size()); ++i) {
    if (std::abs(l.n.dot(pts[i]) - l.c) <= tol) idx.push_back(i);
  }
  return idx;
}

// Orthogonal least squares through the given points.
Line2 total_least_squares(std::span<const Vector2d> pts, const std::vector<int>& idx) {
  Vector2d mean = Vector2d::Zero();
  for (int i : idx) mean += pts[i];
  mean /= static_cast<double>(idx.size());
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (int i : idx) {
    const Vector2d d = pts[i] - mean;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
  const Vector2d n = es.eigenvectors().col(0).normalized();
  return {n, n.dot(mean)};
}

}  // namespace

WallFit ransac_wall_fit(std::span<const Vector2d> scan, const RansacConfig& cfg, double stamp) {
  if (scan.size() < 2) throw Error(ErrorCode::insufficient_data, "wall fit needs at least 2 points");
  if (!(cfg.inlier_tol > 0.0)) throw Error(ErrorCode::invalid_argument, "inlier_tol must be > 0");
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, scan.size() - 1);
  std::size_t best_count = 0;
  Line2 best{{0, 1}, 0};
  for (int it = 0; it < cfg.iterations; ++it) {
    const std::size_t i = pick(rng);
    std::size_t j = pick(rng);
    if (i == j) continue;
    const Vector2d d = scan[j] - scan[i];
    if (d.norm() < 1e-12) continue;
    const Vector2d n = Vector2d(-d.y(), d.x()).normalized();
    const Line2 hyp{n, n.dot(scan[i])};
    std::size_t count = 0;
    for (const auto& p : scan) count += std::abs(hyp.n.dot(p) - hyp.c) <= cfg.inlier_tol;
    if (count > best_count) {
      best_count = count;
      best = hyp;
    }
  }
  if (best_count < 2) throw Error(ErrorCode::no_wall, "no line hypothesis");
  std::vector<int> inliers = collect_inliers(scan, best, cfg.inlier_tol);
  Line2 line = best;
  for (int pass = 0; pass < 3; ++pass) {
    line = total_least_squares(scan, inliers);
    auto next = collect_inliers(scan, line, cfg.inlier_tol);
    if (next.size() < 2) break;
    const bool stable = next == inliers;
    inliers = std::move(next);
    if (stable) break;
  }
  const double ratio = static_cast<double>(inliers.size()) / static_cast<double>(scan.size());
  if (ratio < cfg.min_inlier_ratio) {
    throw Error(ErrorCode::no_wall, "best inlier ratio " + std::to_string(ratio) + " below threshold");
  }
  // Orient the normal from the sensor towards the wall.
  if (line.c < 0) {
    line.n = -line.n;
    line.c = -line.c;
  }
  if (!(line.c > 0.0) || !(line.n.y() > 0.0)) throw Error(ErrorCode::no_wall, "wall not in front of the sensor");
  return {line.c, std::atan2(line.n.x(), line.n.y()), static_cast<int>(inliers.size()), stamp};
}

// ---------------------------------------------------------------------------
// LED pattern.

namespace {

std::optional<LedTriple> score_triple(const Blob& b0, const Blob& b1, const Blob& b2, double max_residual,
                                       double pixel_tolerance) {
  std::array<Vector2d, 3> p{Vector2d(b0.px, b0.py), Vector2d(b1.px, b1.py), Vector2d(b2.px, b2.py)};
  // The middle LED is opposite the longest side.
  const double d01 = (p[0] - p[1]).norm(), d12 = (p[1] - p[2]).norm(), d02 = (p[0] - p[2]).norm();
  int mid = 1;
  if (d01 >= d12 && d01 >= d02) mid = 2;
  else if (d12 >= d01 && d12 >= d02) mid = 0;
  Vector2d a = p[(mid + 1) % 3];
  Vector2d c = p[(mid + 2) % 3];
  if (c.x() < a.x() || (c.x() == a.x() && c.y() < a.y())) std::swap(a, c);
  const Vector2d b = p[mid];
  const double span = (c - a).norm();
  if (!(span > 0.0)) return std::nullopt;
  const Vector2d u = (c - a) / span;
  const Vector2d ab = b - a;
  const double collinearity = std::abs(u.x() * ab.y() - u.y() * ab.x()) / span;
  const double evenness = std::abs(ab.norm() - (c - b).norm()) / span;
  const double bound = max_residual + pixel_tolerance / span;
  if (collinearity >= bound || evenness >= bound) return std::nullopt;
  return LedTriple{{a, b, c}, collinearity + evenness};
}

}  // namespace

LedTriple detect_led_pattern(std::span<const Blob> blobs, double max_residual, double pixel_tolerance) {
  std::optional<LedTriple> best;
  const std::size_t n = blobs.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      for (std::size_t k = j + 1; k < n; ++k) {
        auto t = score_triple(blobs[i], blobs[j], blobs[k], max_residual, pixel_tolerance);
        if (t && (!best || t->score < best->score)) best = t;
      }
    }
  }
  if (!best) throw Error(ErrorCode::no_pattern, "no collinear evenly spaced triple among " + std::to_string(n) + " blobs");
  return *best;
}

LedTriple LedTracker::detect(std::span<const Blob> blobs) {
  if (last_) {
    const Vector2d c = (last_->centers[0] + last_->centers[1] + last_->centers[2]) / 3.0;
    const double half = 1.5 * last_->span();
    std::vector<Blob> roi;
    for (const auto& b : blobs) {
      if (std::abs(b.px - c.x()) <= half && std::abs(b.py - c.y()) <= half) roi.push_back(b);
    }
    try {
      last_ = detect_led_pattern(roi);
      return *last_;
    } catch (const Error&) {
      // fall through to the full search
    }
  }
  try {
    last_ = detect_led_pattern(blobs);
  } catch (const Error&) {
    last_.reset();
    throw;
  }
  return *last_;
}

// ---------------------------------------------------------------------------
// Camera.

Matrix3d Intrinsics::matrix() const {
  Matrix3d k;
  k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
  return k;
}

void Intrinsics::validate() const {
  if (!(fx > 0) || !(fy > 0)) throw Error(ErrorCode::invalid_argument, "focal lengths must be > 0");
  if (width <= 0 || height <= 0) throw Error(ErrorCode::invalid_argument, "resolution must be positive");
  if (!(cx >= 0 && cx <= width && cy >= 0 && cy <= height)) {
    throw Error(ErrorCode::invalid_argument, "principal point outside the image");
  }
}

std::optional<Vector2d> CameraModel::project(const Vector3d& world) const {
  const Vector3d pc = R * world + t;
  if (!(pc.z() > 1e-9)) return std::nullopt;
  return Vector2d(intrinsics.fx * pc.x() / pc.z() + intrinsics.cx, intrinsics.fy * pc.y() / pc.z() + intrinsics.cy);
}

Vector3d CameraModel::ray(const Vector2d& pixel) const {
  const Vector3d dc((pixel.x() - intrinsics.cx) / intrinsics.fx, (pixel.y() - intrinsics.cy) / intrinsics.fy, 1.0);
  return (R.transpose() * dc).normalized();
}

CameraModel CameraModel::look_at(const Vector3d& eye, const Vector3d& target, const Intrinsics& k) {
  const Vector3d z = (target - eye).normalized();
  Vector3d x = z.cross(Vector3d::UnitZ());
  if (x.norm() < 1e-9) throw Error(ErrorCode::invalid_argument, "look_at along the vertical");
  x.normalize();
  const Vector3d y = z.cross(x);
  CameraModel cam;
  cam.intrinsics = k;
  cam.R.row(0) = x;
  cam.R.row(1) = y;
  cam.R.row(2) = z;
  cam.t = -cam.R * eye;
  return cam;
}

CameraModel default_camera() { return CameraModel::look_at({5, 15, 5}, {5, 0, 5}); }

// ---------------------------------------------------------------------------
// Calibration.

namespace {

Matrix3d hartley(const std::vector<Vector2d>& pts) {
  Vector2d mean = Vector2d::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  double dist = 0.0;
  for (const auto& p : pts) dist += (p - mean).norm();
  dist /= static_cast<double>(pts.size());
  const double s = dist > 0 ? std::sqrt(2.0) / dist : 1.0;
  Matrix3d T;
  T << s, 0, -s * mean.x(), 0, s, -s * mean.y(), 0, 0, 1;
  return T;
}

Matrix3d skew(const Vector3d& v) {
  Matrix3d m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

Matrix3d rodrigues(const Vector3d& w) {
  const double th = w.norm();
  if (th < 1e-15) return Matrix3d::Identity() + skew(w);
  return Eigen::AngleAxisd(th, w / th).toRotationMatrix();
}

Matrix3d nearest_rotation(const Matrix3d& m) {
  Eigen::JacobiSVD<Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Matrix3d r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0) {
    Matrix3d u = svd.matrixU();
    u.col(2) *= -1;
    r = u * svd.matrixV().transpose();
  }
  return r;
}

bool nearly_collinear(const geom::Vec2& a, const geom::Vec2& b, const geom::Vec2& c, double scale) {
  return std::abs(geom::cross(b - a, c - a)) <= 1e-9 * scale * scale;
}

}  // namespace

double reprojection_rms(const CameraModel& cam, std::span<const Vector2d> image_pts,
                        std::span<const geom::Vec2> wall_pts) {
  double sum = 0.0;
  for (std::size_t i = 0; i < image_pts.size(); ++i) {
    const auto p = cam.project({wall_pts[i].x, 0.0, wall_pts[i].z});
    if (!p) return std::numeric_limits<double>::infinity();
    sum += (*p - image_pts[i]).squaredNorm();
  }
  return std::sqrt(sum / static_cast<double>(image_pts.size()));
}

Calibration calibrate_camera(std::span<const Vector2d> image_pts, std::span<const geom::Vec2> wall_pts,
                             const Intrinsics& intrinsics) {
  intrinsics.validate();
  if (image_pts.size() != wall_pts.size()) {
    throw Error(ErrorCode::invalid_argument, "image and wall point counts differ");
  }
  const std::size_t n = image_pts.size();
  if (n < 4) throw Error(ErrorCode::insufficient_data, "calibration needs at least 4 correspondences");
  geom::Box box;
  for (const auto& w : wall_pts) box.expand(w);
  const double scale = std::max(box.width(), box.height());
  // Degenerate when one line holds all but at most one point.
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (geom::distance(wall_pts[i], wall_pts[j]) <= 1e-9 * std::max(scale, 1.0)) {
        throw Error(ErrorCode::degenerate_config, "duplicate wall points");
      }
      std::size_t on_line = 0;
      for (std::size_t k = 0; k < n; ++k) on_line += nearly_collinear(wall_pts[i], wall_pts[j], wall_pts[k], scale);
      if (on_line + 1 >= n) throw Error(ErrorCode::degenerate_config, "wall points are (nearly) collinear");
    }
  }

  std::vector<Vector2d> src, dst;
  for (std::size_t i = 0; i < n; ++i) {
    src.emplace_back(wall_pts[i].x, wall_pts[i].z);
    dst.push_back(image_pts[i]);
  }
  const Matrix3d Ts = hartley(src);
  const Matrix3d Td = hartley(dst);
  Eigen::MatrixXd A(2 * n, 9);
  for (std::size_t i = 0; i < n; ++i) {
    const Vector3d s = Ts * src[i].homogeneous();
    const Vector3d d = Td * dst[i].homogeneous();
    const double u = d.x() / d.z(), v = d.y() / d.z();
    A.row(2 * i) << -s.x(), -s.y(), -s.z(), 0, 0, 0, u * s.x(), u * s.y(), u * s.z();
    A.row(2 * i + 1) << 0, 0, 0, -s.x(), -s.y(), -s.z(), v * s.x(), v * s.y(), v * s.z();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Matrix3d Hn;
  Hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  const Matrix3d H = Td.inverse() * Hn * Ts;

  // K^-1 H = lambda [r_x r_z t] (wall coordinates are world x and z).
  const Matrix3d M = intrinsics.matrix().inverse() * H;
  double lambda = 2.0 / (M.col(0).norm() + M.col(1).norm());
  const Vector3d probe = M * src[0].homogeneous();
  if (lambda * probe.z() < 0) lambda = -lambda;
  const Vector3d rx = lambda * M.col(0);
  const Vector3d rz = lambda * M.col(1);
  Matrix3d R0;
  R0.col(0) = rx;
  R0.col(2) = rz;
  R0.col(1) = rz.cross(rx);
  CameraModel cam;
  cam.intrinsics = intrinsics;
  cam.R = nearest_rotation(R0);
  cam.t = lambda * M.col(2);

  // Gauss-Newton on reprojection error; rotation updated on the left.
  const double fx = intrinsics.fx, fy = intrinsics.fy;
  double cost = reprojection_rms(cam, image_pts, wall_pts);
  for (int it = 0; it < 20 && cost > 1e-12; ++it) {
    Eigen::MatrixXd J(2 * n, 6);
    Eigen::VectorXd r(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
      const Vector3d pw(wall_pts[i].x, 0.0, wall_pts[i].z);
      const Vector3d rp = cam.R * pw;
      const Vector3d pc = rp + cam.t;
      const double iz = 1.0 / pc.z();
      Eigen::Matrix<double, 2, 3> dproj;
      dproj << fx * iz, 0, -fx * pc.x() * iz * iz, 0, fy * iz, -fy * pc.y() * iz * iz;
      J.block<2, 3>(2 * i, 0) = dproj * (-skew(rp));
      J.block<2, 3>(2 * i, 3) = dproj;
      r(2 * i) = fx * pc.x() * iz + intrinsics.cx - image_pts[i].x();
      r(2 * i + 1) = fy * pc.y() * iz + intrinsics.cy - image_pts[i].y();
    }
    const Eigen::VectorXd step = J.colPivHouseholderQr().solve(-r);
    CameraModel next = cam;
    next.R = nearest_rotation(rodrigues(step.head<3>()) * cam.R);
    next.t = cam.t + step.tail<3>();
    const double next_cost = reprojection_rms(next, image_pts, wall_pts);
    if (!(next_cost < cost)) break;
    cam = next;
    cost = next_cost;
  }
  return {cam, cost};
}

// ---------------------------------------------------------------------------
// Body geometry and fusion.

Vector3d forward_axis(double yaw) { return {std::sin(yaw), -std::cos(yaw), 0.0}; }
Vector3d right_axis(double yaw) { return {-std::cos(yaw), -std::sin(yaw), 0.0}; }

std::array<Vector3d, 3> led_points(const Pose& p, const DroneGeometry& g) {
  const Vector3d c(p.x, p.y, p.z);
  const Vector3d mid = c - g.led_rear_offset * forward_axis(p.yaw);
  const Vector3d r = right_axis(p.yaw);
  return {mid - g.led_spacing * r, mid, mid + g.led_spacing * r};
}

Vector3d lidar_origin(const Pose& p, const DroneGeometry& g) {
  return Vector3d(p.x, p.y, p.z) + g.lidar_forward_offset * forward_axis(p.yaw);
}

Vector3d nozzle_point(const Pose& p, const DroneGeometry& g) {
  return Vector3d(p.x, p.y, p.z) + g.nozzle_forward_offset * forward_axis(p.yaw);
}

PoseEstimate fuse_pose(const LedTriple& triple, const WallFit& fit, const CameraModel& camera,
                       const DroneGeometry& geometry, double now, double max_age) {
  if (now - fit.stamp > max_age) {
    throw Error(ErrorCode::stale_sensor, "wall fit is " + std::to_string(now - fit.stamp) + " s old");
  }
  const double yaw = fit.yaw;
  const Vector3d f = forward_axis(yaw);
  // Body centre and LED bar centre planes parallel to the wall.
  const double y_body = fit.distance - geometry.lidar_forward_offset * f.y();
  const double y_led = y_body - geometry.led_rear_offset * f.y();
  const Vector3d o = camera.center();
  const Vector3d d = camera.ray(triple.middle());
  if (std::abs(d.y()) < 1e-12) throw Error(ErrorCode::no_intersection, "pixel ray parallel to the LED plane");
  const double s = (y_led - o.y()) / d.y();
  if (!(s > 0.0)) throw Error(ErrorCode::no_intersection, "LED plane behind the camera");
  const Vector3d hit = o + s * d;
  const Vector3d body = hit + geometry.led_rear_offset * f;
  PoseEstimate est;
  est.x = body.x();
  est.y = y_body;
  est.z = body.z();
  est.yaw = yaw;
  est.valid_x = est.valid_y = est.valid_z = est.valid_yaw = true;
  est.stamp = now;
  return est;
}

}  // namespace mural::loc
