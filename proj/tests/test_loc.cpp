#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "mural/error.hpp"
#include "mural/loc.hpp"

using namespace mural;
using namespace mural::loc;
using Eigen::Vector2d;
using Eigen::Vector3d;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const mural::Error& e) {
    return e.code();
  }
  FAIL("expected mural::Error");
  return ErrorCode::invalid_argument;
}

constexpr double kDeg = std::numbers::pi / 180.0;

// Points on the wall line with normal angle `yaw` from forward, in (right, forward).
std::vector<Vector2d> wall_points(double distance, double yaw, int n, double half_len) {
  const Vector2d normal(std::sin(yaw), std::cos(yaw));
  const Vector2d along(std::cos(yaw), -std::sin(yaw));
  std::vector<Vector2d> pts;
  for (int i = 0; i < n; ++i) pts.push_back(distance * normal + (-half_len + 2 * half_len * i / (n - 1)) * along);
  return pts;
}

std::vector<Vector2d> noisy_scan(std::mt19937_64& rng, double distance, double yaw, int n, double sigma,
                                 double outlier_frac) {
  std::normal_distribution<double> noise(0.0, sigma);
  std::uniform_real_distribution<double> along(-2.0, 2.0);
  std::uniform_real_distribution<double> box_u(-2.0, 2.0);
  std::uniform_real_distribution<double> box_v(0.0, 4.0);
  std::bernoulli_distribution outlier(outlier_frac);
  const Vector2d normal(std::sin(yaw), std::cos(yaw));
  const Vector2d dir(std::cos(yaw), -std::sin(yaw));
  std::vector<Vector2d> pts;
  for (int i = 0; i < n; ++i) {
    if (outlier(rng)) {
      pts.emplace_back(box_u(rng), box_v(rng));
    } else {
      pts.push_back((distance + noise(rng)) * normal + along(rng) * dir);
    }
  }
  return pts;
}

// Oracle camera for the default placement: eye (5, 15, 5) looking along -y,
// image right = world -x, image down = world -z.
Vector2d oracle_project(const Vector3d& p) {
  const double depth = 15.0 - p.y();
  return {2000.0 + 2000.0 * (5.0 - p.x()) / depth, 1500.0 + 2000.0 * (5.0 - p.z()) / depth};
}

// Oracle body geometry: forward (sin yaw, -cos yaw), right (-cos yaw, -sin yaw).
Vector3d oracle_led_middle(const Pose& p, double rear) {
  return {p.x - rear * std::sin(p.yaw), p.y + rear * std::cos(p.yaw), p.z};
}

// Oracle LiDAR: 720 rays from the sensor origin, noiseless, wall at y = 0.
std::vector<Vector2d> oracle_scan(const Pose& p, double fwd_offset) {
  const double oy = p.y - fwd_offset * std::cos(p.yaw);
  std::vector<Vector2d> pts;
  for (int i = 0; i < 720; ++i) {
    const double a = 2 * std::numbers::pi * i / 720;
    const Vector2d s(std::sin(a), std::cos(a));  // (right, forward)
    // World y component of the ray: right.y * s.u + forward.y * s.v.
    const double dy = -std::sin(p.yaw) * s.x() - std::cos(p.yaw) * s.y();
    if (dy >= -1e-9) continue;
    const double range = -oy / dy;
    if (range > 10.0 || range < 0.12) continue;
    pts.push_back(range * s);
  }
  return pts;
}

}  // namespace

TEST_CASE("ransac: noiseless wall straight ahead") {
  const auto pts = wall_points(2.0, 0.0, 50, 1.5);
  const auto fit = ransac_wall_fit(pts);
  CHECK(fit.distance == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(std::abs(fit.yaw) < 1e-12);
  CHECK(fit.inlier_count == 50);
}

TEST_CASE("ransac: rotated wall") {
  const auto pts = wall_points(2.0, 10 * kDeg, 50, 1.5);
  const auto fit = ransac_wall_fit(pts);
  CHECK(std::abs(fit.yaw - 10 * kDeg) < 1e-6);
  CHECK(std::abs(fit.distance - 2.0) < 1e-6);
}

TEST_CASE("ransac: noiseless refit reproduces the generating line") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> d(0.3, 5.0);
  std::uniform_real_distribution<double> y(-1.2, 1.2);
  for (int i = 0; i < 100; ++i) {
    const double dist = d(rng), yaw = y(rng);
    const auto fit = ransac_wall_fit(wall_points(dist, yaw, 40, 2.0));
    CHECK(std::abs(fit.distance - dist) < 1e-9);
    CHECK(std::abs(fit.yaw - yaw) < 1e-9);
  }
}

TEST_CASE("ransac: rigid-motion equivariance") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> ang(-0.5, 0.5);
  std::uniform_real_distribution<double> off(-0.3, 0.3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto pts = noisy_scan(rng, 2.5, ang(rng), 200, 0.005, 0.2);
    const auto base = ransac_wall_fit(pts, {200, 0.02, 0.3, 7});
    // Rotate the scan counter-clockwise by theta and shift it by t in the sensor frame.
    const double th = ang(rng) * 0.5;
    const Vector2d t(off(rng), off(rng));
    Eigen::Matrix2d rot;
    rot << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
    std::vector<Vector2d> moved;
    for (const auto& p : pts) moved.push_back(rot * p + t);
    const auto fit = ransac_wall_fit(moved, {200, 0.02, 0.3, 7});
    const double yaw = base.yaw - th;
    const Vector2d n(std::sin(yaw), std::cos(yaw));
    CHECK(fit.yaw == doctest::Approx(yaw).epsilon(1e-9));
    CHECK(fit.distance == doctest::Approx(base.distance + n.dot(t)).epsilon(1e-9));
  }
}

TEST_CASE("ransac: Monte Carlo robustness with 40% outliers") {
  int good = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::mt19937_64 rng(1000 + trial);
    std::uniform_real_distribution<double> yawd(-15 * kDeg, 15 * kDeg);
    const double yaw = yawd(rng);
    const auto pts = noisy_scan(rng, 2.0, yaw, 200, 0.005, 0.4);
    const auto fit = ransac_wall_fit(pts, {200, 0.02, 0.3, static_cast<std::uint64_t>(trial)});
    good += std::abs(fit.distance - 2.0) < 0.01 && std::abs(fit.yaw - yaw) < 0.5 * kDeg;
  }
  CHECK(good >= 99);
}

TEST_CASE("ransac: errors") {
  const std::vector<Vector2d> one{{0, 1}};
  CHECK(code_of([&] { ransac_wall_fit(one); }) == ErrorCode::insufficient_data);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-3, 3);
  std::vector<Vector2d> cloud;
  for (int i = 0; i < 300; ++i) cloud.emplace_back(u(rng), u(rng));
  CHECK(code_of([&] { ransac_wall_fit(cloud); }) == ErrorCode::no_wall);
  auto behind = wall_points(2.0, 0.0, 20, 1.0);
  for (auto& p : behind) p.y() = -p.y();
  CHECK(code_of([&] { ransac_wall_fit(behind); }) == ErrorCode::no_wall);
}

TEST_CASE("led pattern: clean triple among distractors") {
  const std::vector<Blob> blobs{{400, 50, 1}, {150, 100, 1}, {30, 300, 1}, {200, 100, 1}, {100, 100, 1}};
  const auto t = detect_led_pattern(blobs);
  CHECK(t.centers[0] == Vector2d(100, 100));
  CHECK(t.centers[1] == Vector2d(150, 100));
  CHECK(t.centers[2] == Vector2d(200, 100));
  CHECK(t.score == 0.0);
  const std::vector<Blob> two{{0, 0, 1}, {10, 0, 1}};
  CHECK(code_of([&] { detect_led_pattern(two); }) == ErrorCode::no_pattern);
  const std::vector<Blob> bent{{0, 0, 1}, {50, 30, 1}, {100, 0, 1}};
  CHECK(code_of([&] { detect_led_pattern(bent); }) == ErrorCode::no_pattern);
}

TEST_CASE("led pattern: Monte Carlo with a perturbed middle dot") {
  int correct = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::mt19937_64 rng(500 + trial);
    std::uniform_real_distribution<double> pos(0, 1000);
    std::uniform_real_distribution<double> ang(0, 2 * std::numbers::pi);
    const Vector2d a(pos(rng), pos(rng));
    const double th = ang(rng);
    const Vector2d dir(std::cos(th), std::sin(th));
    const Vector2d perp(-dir.y(), dir.x());
    const Vector2d b = a + 50 * dir + perp * (trial % 2 ? 1.0 : -1.0);
    const Vector2d c = a + 100 * dir;
    std::vector<Blob> blobs{{a.x(), a.y(), 1}, {b.x(), b.y(), 1}, {c.x(), c.y(), 1}};
    for (int k = 0; k < 5; ++k) blobs.push_back({pos(rng), pos(rng), 1});
    std::shuffle(blobs.begin(), blobs.end(), rng);
    const auto t = detect_led_pattern(blobs);
    const bool match = (t.centers[1] - b).norm() < 1e-9 &&
                       std::min((t.centers[0] - a).norm(), (t.centers[0] - c).norm()) < 1e-9 &&
                       std::min((t.centers[2] - a).norm(), (t.centers[2] - c).norm()) < 1e-9;
    correct += match;
  }
  CHECK(correct == 100);
}

TEST_CASE("led tracker uses a window and falls back to a full search") {
  LedTracker tracker;
  std::vector<Blob> frame{{100, 100, 1}, {150, 100, 1}, {200, 100, 1}};
  CHECK(tracker.detect(frame).centers[1].x() == 150);
  CHECK(tracker.tracking());
  // A better-scoring triple far away is outside the window and ignored.
  frame = {{102, 100, 1}, {151, 101, 1}, {202, 100, 1}, {800, 800, 1}, {850, 800, 1}, {900, 800, 1}};
  CHECK(tracker.detect(frame).centers[1].x() == 151);
  // Only the far triple remains: the window misses and the full search finds it.
  frame = {{800, 800, 1}, {850, 800, 1}, {900, 800, 1}};
  CHECK(tracker.detect(frame).centers[1].x() == 850);
  frame = {{0, 0, 1}};
  CHECK(code_of([&] { tracker.detect(frame); }) == ErrorCode::no_pattern);
  CHECK_FALSE(tracker.tracking());
}

TEST_CASE("default camera matches the oracle projection") {
  const auto cam = default_camera();
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 10);
  for (int i = 0; i < 100; ++i) {
    const Vector3d p(u(rng), u(rng) * 0.3, u(rng));
    const auto px = cam.project(p);
    REQUIRE(px);
    CHECK((*px - oracle_project(p)).norm() < 1e-9);
    const Vector3d ray = cam.ray(*px);
    CHECK((ray - (p - cam.center()).normalized()).norm() < 1e-12);
  }
  CHECK_FALSE(cam.project({5, 20, 5}));
}

TEST_CASE("calibration round-trip from four markers") {
  const auto truth = default_camera();
  const std::vector<geom::Vec2> wall{{1, 1}, {9, 1}, {9, 9}, {1, 9}};
  std::vector<Vector2d> px;
  for (const auto& w : wall) px.push_back(oracle_project({w.x, 0, w.z}));
  const auto cal = calibrate_camera(px, wall, truth.intrinsics);
  CHECK(cal.rms_px < 1e-6);
  CHECK((cal.camera.center() - Vector3d(5, 15, 5)).norm() < 1e-3);
  CHECK((cal.camera.R - truth.R).norm() < 1e-6);
}

TEST_CASE("calibration: calibrate then project is identity on random poses") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 50; ++trial) {
    const Vector3d eye(5 + 3 * u(rng), 12 + 4 * u(rng), 4 + 2 * u(rng));
    const Vector3d target(5 + u(rng), 0, 5 + u(rng));
    const auto truth = CameraModel::look_at(eye, target);
    std::vector<geom::Vec2> wall;
    std::vector<Vector2d> px;
    for (int k = 0; k < 4 + trial % 4; ++k) {
      const geom::Vec2 w{5 + 4 * u(rng), 5 + 4 * u(rng)};
      wall.push_back(w);
      px.push_back(*truth.project({w.x, 0, w.z}));
    }
    const auto cal = calibrate_camera(px, wall, truth.intrinsics);
    CHECK(cal.rms_px < 1e-6);
    CHECK((cal.camera.center() - eye).norm() < 1e-6);
    CHECK((cal.camera.R - truth.R).norm() < 1e-6);
  }
}

TEST_CASE("calibration with pixel noise stays close") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0, 0.5);
  const std::vector<geom::Vec2> wall{{0, 0}, {10, 0}, {10, 10}, {0, 10}, {5, 5}, {2, 7}};
  std::vector<Vector2d> px;
  for (const auto& w : wall) px.push_back(oracle_project({w.x, 0, w.z}) + Vector2d(n(rng), n(rng)));
  const auto cal = calibrate_camera(px, wall, Intrinsics{});
  CHECK(cal.rms_px < 1.0);
  CHECK((cal.camera.center() - Vector3d(5, 15, 5)).norm() < 0.05);
}

TEST_CASE("calibration errors") {
  const std::vector<geom::Vec2> three{{0, 0}, {1, 0}, {0, 1}};
  const std::vector<Vector2d> px3{{0, 0}, {1, 0}, {0, 1}};
  CHECK(code_of([&] { calibrate_camera(px3, three, Intrinsics{}); }) == ErrorCode::insufficient_data);
  const std::vector<geom::Vec2> col{{0, 0}, {1, 0}, {2, 0}, {0, 1}};
  std::vector<Vector2d> px;
  for (const auto& w : col) px.push_back(oracle_project({w.x, 0, w.z}));
  CHECK(code_of([&] { calibrate_camera(px, col, Intrinsics{}); }) == ErrorCode::degenerate_config);
}

TEST_CASE("fuse: drone on the optical axis") {
  const auto cam = default_camera();
  const DroneGeometry g;
  const double body_y = 0.375;
  // Yaw 0: LED bar centre is rear_offset further from the wall than the body.
  const Vector2d px = oracle_project({5, body_y + g.led_rear_offset, 5});
  CHECK((px - Vector2d(2000, 1500)).norm() < 1e-9);
  LedTriple t{{Vector2d(1990, 1500), px, Vector2d(2010, 1500)}, 0};
  const WallFit fit{body_y - g.lidar_forward_offset, 0.0, 100, 1.0};
  const auto est = fuse_pose(t, fit, cam, g, 1.05);
  CHECK(est.x == doctest::Approx(5.0));
  CHECK(est.z == doctest::Approx(5.0));
  CHECK(est.y == doctest::Approx(body_y));
  CHECK(est.all_valid());
  CHECK(code_of([&] { fuse_pose(t, fit, cam, g, 1.2); }) == ErrorCode::stale_sensor);
}

TEST_CASE("fuse: ray parallel to the LED plane") {
  auto cam = CameraModel::look_at({5, 1, 5}, {15, 1, 5});
  LedTriple t{{Vector2d(1990, 1500), Vector2d(2000, 1500), Vector2d(2010, 1500)}, 0};
  CHECK(code_of([&] { fuse_pose(t, {1.0, 0.0, 10, 0.0}, cam, {}, 0.0); }) == ErrorCode::no_intersection);
}

TEST_CASE("fuse: noiseless round-trip over random poses") {
  const auto cam = default_camera();
  const DroneGeometry g;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> xz(0, 10), y(0.3, 3.0), yaw(-0.4, 0.4);
  for (int i = 0; i < 300; ++i) {
    const Pose p{xz(rng), y(rng), xz(rng), yaw(rng)};
    const Vector2d mid = oracle_project(oracle_led_middle(p, g.led_rear_offset));
    LedTriple t{{mid - Vector2d(10, 0), mid, mid + Vector2d(10, 0)}, 0};
    const auto fit = ransac_wall_fit(oracle_scan(p, g.lidar_forward_offset));
    const auto est = fuse_pose(t, fit, cam, g, fit.stamp);
    CHECK(std::abs(est.x - p.x) < 1e-6);
    CHECK(std::abs(est.y - p.y) < 1e-6);
    CHECK(std::abs(est.z - p.z) < 1e-6);
    CHECK(std::abs(est.yaw - p.yaw) < 1e-8);
  }
}

TEST_CASE("fuse: pixel noise propagates linearly") {
  const auto cam = default_camera();
  const DroneGeometry g;
  const Pose p{5.0, 0.375, 5.0, 0.0};
  const Vector3d led = oracle_led_middle(p, g.led_rear_offset);
  const double depth = 15.0 - led.y();
  const WallFit fit{p.y - g.lidar_forward_offset, 0.0, 100, 0.0};
  std::vector<double> measured;
  for (double sigma : {0.1, 0.5, 1.0}) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(sigma * 1000));
    std::normal_distribution<double> n(0, sigma);
    double sx = 0, sz = 0;
    const int trials = 1000;
    for (int i = 0; i < trials; ++i) {
      const Vector2d mid = oracle_project(led) + Vector2d(n(rng), n(rng));
      LedTriple t{{mid - Vector2d(10, 0), mid, mid + Vector2d(10, 0)}, 0};
      const auto est = fuse_pose(t, fit, cam, g, 0.0);
      sx += (est.x - p.x) * (est.x - p.x);
      sz += (est.z - p.z) * (est.z - p.z);
    }
    const double theory = depth * sigma / 2000.0;
    const double std_x = std::sqrt(sx / trials), std_z = std::sqrt(sz / trials);
    CHECK(std_x / theory > 1 / 1.5);
    CHECK(std_x / theory < 1.5);
    CHECK(std_z / theory > 1 / 1.5);
    CHECK(std_z / theory < 1.5);
    measured.push_back((std_x + std_z) / 2 / sigma);
  }
  // Slope (error per pixel) agrees across noise levels.
  for (double slope : measured) CHECK(slope / (depth / 2000.0) == doctest::Approx(1.0).epsilon(0.5));
}

TEST_CASE("calibration JSON round-trip") {
  const std::string input = R"({"intrinsics": {"fx": 2000, "cx": 2000, "cy": 1500, "width": 4000, "height": 3000},
    "correspondences": [)";
  std::string body = input;
  const std::vector<geom::Vec2> wall{{1, 1}, {9, 1}, {9, 9}, {1, 9}};
  for (std::size_t i = 0; i < wall.size(); ++i) {
    const Vector2d px = oracle_project({wall[i].x, 0, wall[i].z});
    body += (i ? "," : "") + std::string("{\"pixel\": [") + std::to_string(px.x()) + "," + std::to_string(px.y()) +
            "], \"wall\": [" + std::to_string(wall[i].x) + "," + std::to_string(wall[i].z) + "]}";
  }
  body += "]}";
  const auto solved = calibrate_from_correspondences_json(body);
  CHECK(solved.calibration.rms_px < 1e-3);
  const auto back = calibration_from_json(calibration_to_json(solved));
  CHECK((back.calibration.camera.R - solved.calibration.camera.R).norm() < 1e-12);
  CHECK((back.calibration.camera.t - solved.calibration.camera.t).norm() < 1e-12);
  CHECK(back.image_pts.size() == 4);
  CHECK(code_of([] { calibration_from_json("{}"); }) == ErrorCode::parse_error);
}

TEST_CASE("led pattern: small noisy triples are still found") {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> noise(0.0, 0.5);
  std::uniform_real_distribution<double> ang(-0.3, 0.3);
  int found = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    const double th = ang(rng);
    const Vector2d dir(std::cos(th), std::sin(th));
    const Vector2d a(600, 400);
    std::vector<Blob> blobs;
    for (int i = 0; i < 3; ++i) {
      const Vector2d p = a + 13.0 * i * dir;
      blobs.push_back({p.x() + noise(rng), p.y() + noise(rng), 1});
    }
    try {
      detect_led_pattern(blobs);
      ++found;
    } catch (const Error&) {
    }
  }
  CHECK(found == 2000);
  // A fixed pixel allowance does not admit a genuinely bent small triple.
  const std::vector<Blob> bent{{0, 0, 1}, {13, 8, 1}, {26, 0, 1}};
  CHECK(code_of([&] { detect_led_pattern(bent); }) == ErrorCode::no_pattern);
}
