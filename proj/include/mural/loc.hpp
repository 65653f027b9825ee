#pragma once

// Localization. World coordinates are WallFrame (x lateral, y away from the
// wall, z up; the wall is the plane y = 0). Drone yaw 0 faces the wall.
// The LiDAR works in its own 2D frame (u = right, v = forward).

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mural/geom.hpp"

namespace mural::loc {

struct WallFit {
  double distance = 0.0;
  double yaw = 0.0;
  int inlier_count = 0;
  double stamp = 0.0;
};

struct RansacConfig {
  int iterations = 200;
  double inlier_tol = 0.02;
  double min_inlier_ratio = 0.3;
  std::uint64_t seed = 1;
};

/// Throws InsufficientData (< 2 points) and NoWall.
WallFit ransac_wall_fit(std::span<const Eigen::Vector2d> scan, const RansacConfig& cfg = {},
                        double stamp = 0.0);

struct Blob {
  double px = 0.0;
  double py = 0.0;
  double brightness = 1.0;
};

struct LedTriple {
  /// Left to right in the image; centers[1] is the middle LED.
  std::array<Eigen::Vector2d, 3> centers;
  double score = 0.0;

  Eigen::Vector2d middle() const { return centers[1]; }
  double span() const { return (centers[2] - centers[0]).norm(); }
};

/// Best collinear, evenly spaced triple. A triple is accepted when its
/// off-line and spacing residuals are each below max_residual * span +
/// pixel_tolerance, so centroid noise does not reject distant, small triples.
/// Throws NoPattern.
LedTriple detect_led_pattern(std::span<const Blob> blobs, double max_residual = 0.1, double pixel_tolerance = 3.0);

/// Region-of-interest tracking: after a detection only blobs within a window
/// of 3x the triple span around the last triple are considered; a miss
/// inside the window falls back to a full search.
class LedTracker {
 public:
  LedTriple detect(std::span<const Blob> blobs);
  void reset() { last_.reset(); }
  bool tracking() const { return last_.has_value(); }

 private:
  std::optional<LedTriple> last_;
};

struct Intrinsics {
  double fx = 2000.0;
  double fy = 2000.0;
  double cx = 2000.0;
  double cy = 1500.0;
  int width = 4000;
  int height = 3000;

  Eigen::Matrix3d matrix() const;
  /// Throws InvalidArgument.
  void validate() const;
};

/// Pinhole camera, p_cam = R * p_world + t, OpenCV axes (x right, y down,
/// z along the optical axis).
struct CameraModel {
  Intrinsics intrinsics;
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();

  Eigen::Vector3d center() const { return -R.transpose() * t; }
  /// Empty when the point is not in front of the camera.
  std::optional<Eigen::Vector2d> project(const Eigen::Vector3d& world) const;
  /// Unit ray direction in world coordinates.
  Eigen::Vector3d ray(const Eigen::Vector2d& pixel) const;

  static CameraModel look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                             const Intrinsics& k = {});
};

/// 15 m from the wall, level, centred on a 10 x 10 m wall.
CameraModel default_camera();

struct Calibration {
  CameraModel camera;
  double rms_px = 0.0;
};

/// Plane-based extrinsic calibration from wall points (x, z) and their
/// pixels. Throws InsufficientData and DegenerateConfig.
Calibration calibrate_camera(std::span<const Eigen::Vector2d> image_pts, std::span<const geom::Vec2> wall_pts,
                             const Intrinsics& intrinsics);

double reprojection_rms(const CameraModel& cam, std::span<const Eigen::Vector2d> image_pts,
                        std::span<const geom::Vec2> wall_pts);

/// Mounting geometry of the drone body, metres.
struct DroneGeometry {
  double led_spacing = 0.10;
  /// LED bar centre behind the body centre.
  double led_rear_offset = 0.20;
  /// LiDAR origin ahead of the body centre.
  double lidar_forward_offset = 0.05;
  /// Spray nozzle ahead of the body centre (towards the wall).
  double nozzle_forward_offset = 0.30;
};

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double yaw = 0.0;
};

Eigen::Vector3d forward_axis(double yaw);
Eigen::Vector3d right_axis(double yaw);
/// Left, middle, right LED (as seen from behind the drone, i.e. along +right).
std::array<Eigen::Vector3d, 3> led_points(const Pose& p, const DroneGeometry& g);
Eigen::Vector3d lidar_origin(const Pose& p, const DroneGeometry& g);
Eigen::Vector3d nozzle_point(const Pose& p, const DroneGeometry& g);

struct PoseEstimate {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double yaw = 0.0;
  bool valid_x = false;
  bool valid_y = false;
  bool valid_z = false;
  bool valid_yaw = false;
  double stamp = 0.0;

  bool all_valid() const { return valid_x && valid_y && valid_z && valid_yaw; }
};

/// Camera supplies (x, z) through the middle LED, the LiDAR fit y and yaw.
/// Throws StaleSensor when the fit is older than max_age at `now`, and
/// NoIntersection when the pixel ray misses the LED plane.
PoseEstimate fuse_pose(const LedTriple& triple, const WallFit& fit, const CameraModel& camera,
                       const DroneGeometry& geometry, double now, double max_age = 0.1);

// Calibration file (JSON): intrinsics, extrinsics, correspondences, rms.
struct CalibrationFile {
  Calibration calibration;
  std::vector<Eigen::Vector2d> image_pts;
  std::vector<geom::Vec2> wall_pts;
};
std::string calibration_to_json(const CalibrationFile& f);
CalibrationFile calibration_from_json(const std::string& text);
/// Reads {"intrinsics": {...}, "correspondences": [{"pixel": [u, v], "wall": [x, z]}]}
/// and solves it.
CalibrationFile calibrate_from_correspondences_json(const std::string& text);

}  // namespace mural::loc
