#include <doctest.h>

#include <zlib.h>

#include <cmath>
#include <numbers>
#include <random>

#include "mural/error.hpp"
#include "mural/sim.hpp"
#include "support/loop.hpp"

using namespace mural;
using namespace mural::sim;
using Eigen::Vector3d;
using geom::Vec2;

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

DroneState hover(double x, double z, double yaw = 0.0) {
  DroneState s;
  s.position = {x, 0.375, z};
  s.yaw = yaw;
  return s;
}

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t at) {
  return (std::uint32_t(b[at]) << 24) | (std::uint32_t(b[at + 1]) << 16) | (std::uint32_t(b[at + 2]) << 8) | b[at + 3];
}

}  // namespace

TEST_CASE("zero command leaves the state unchanged except time") {
  DroneState s = hover(2, 3);
  const DroneState n = step_dynamics(s, {}, Vector3d::Zero(), 0.02);
  CHECK(n.position == s.position);
  CHECK(n.velocity == s.velocity);
  CHECK(n.yaw == s.yaw);
  CHECK(n.battery == s.battery);
  CHECK(n.paint == s.paint);
  CHECK(n.time_us == s.time_us + 20000);
  CHECK(code_of([&] { step_dynamics(s, {}, Vector3d::Zero(), 0.0); }) == ErrorCode::invalid_argument);
  CHECK(code_of([&] { step_dynamics(s, {}, Vector3d::Zero(), 0.2); }) == ErrorCode::invalid_argument);
}

TEST_CASE("first-order velocity response matches the exponential") {
  PlantParams pp;
  Command c;
  c.velocity = {0.8, 0, 0};
  for (double dt : {0.001, 0.02, 0.05}) {
    DroneState s;
    const int n = static_cast<int>(std::lround(pp.tau_v / dt));
    for (int i = 0; i < n; ++i) s = step_dynamics(s, c, Vector3d::Zero(), dt, pp);
    CHECK(std::abs(s.velocity.x() - 0.8 * (1 - std::exp(-1.0))) < 0.01 * 0.8 * 0.6321);
  }
}

TEST_CASE("steady wind under P control gives the linear offset") {
  PlantParams pp;
  const Vector3d wind(2.0, 0, 0);
  for (double kp : {1.0, 2.0, 4.0}) {
    DroneState s;
    for (int i = 0; i < 2000; ++i) {
      Command c;
      c.velocity.x() = -kp * s.position.x();
      s = step_dynamics(s, c, wind, 0.02, pp);
    }
    const double expected = pp.wind_coupling * wind.x() / kp;
    CHECK(s.position.x() == doctest::Approx(expected).epsilon(0.05));
  }
}

TEST_CASE("battery and paint bookkeeping") {
  PlantParams pp;
  DroneState s;
  s.airborne = true;
  s.spray_valve = true;
  const DroneState n = step_dynamics(s, {}, Vector3d::Zero(), 0.05, pp);
  CHECK(n.battery == doctest::Approx(1.0 - pp.battery_base_rate * 0.05));
  CHECK(n.paint == doctest::Approx(500.0 - pp.flow_rate * 0.05));
  s.paint = 0.01;
  CHECK(step_dynamics(s, {}, Vector3d::Zero(), 0.05, pp).paint == 0.0);
}

TEST_CASE("gust process has the configured spread") {
  WindParams wp;
  wp.gust_sigma = 0.5;
  wp.gust_tau = 0.5;
  WindModel w(wp, 9);
  double sum = 0, sum2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double g = w.step(0.02).x();
    sum += g;
    sum2 += g * g;
  }
  const double mean = sum / n;
  CHECK(std::abs(mean) < 0.05);
  CHECK(std::sqrt(sum2 / n - mean * mean) == doctest::Approx(0.5).epsilon(0.05));
  WindModel a(wp, 3), b(wp, 3);
  for (int i = 0; i < 100; ++i) CHECK(a.step(0.02) == b.step(0.02));
}

TEST_CASE("noiseless render then fuse recovers the pose") {
  const auto cam = loc::default_camera();
  const loc::DroneGeometry geo;
  SensorNoise quiet;
  quiet.pixel_sigma = 0;
  quiet.lidar_sigma = 0;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 50; ++trial) {
    DroneState s = hover(1 + 8 * u(rng), 1 + 8 * u(rng), (u(rng) - 0.5) * 20 * kDeg);
    s.position.y() = 0.3 + 2.5 * u(rng);
    const auto f = render_sensors(s, cam, geo, quiet, 17);
    REQUIRE(f.blobs.size() == 3);
    const auto fit = loc::ransac_wall_fit(f.scan.points);
    const auto tri = loc::detect_led_pattern(f.blobs);
    const auto est = loc::fuse_pose(tri, fit, cam, geo, 0.0);
    CHECK(std::abs(est.x - s.position.x()) < 1e-6);
    CHECK(std::abs(est.y - s.position.y()) < 1e-6);
    CHECK(std::abs(est.z - s.position.z()) < 1e-6);
    CHECK(std::abs(est.yaw - s.yaw) < 1e-8);
  }
}

TEST_CASE("yawed drone scan fits the yaw") {
  SensorNoise n;
  const DroneState s = hover(5, 5, 10 * kDeg);
  const auto f = render_sensors(s, loc::default_camera(), {}, n, 8);
  const auto fit = loc::ransac_wall_fit(f.scan.points);
  CHECK(fit.yaw == doctest::Approx(10 * kDeg).epsilon(0.02));
}

TEST_CASE("outlier fraction follows the configuration") {
  SensorNoise n;
  n.outlier_fraction = 0.4;
  std::size_t rays = 0, outliers = 0;
  for (std::uint64_t seed = 1; rays < 10000; ++seed) {
    const auto f = render_sensors(hover(5, 5), loc::default_camera(), {}, n, seed);
    for (bool o : f.scan.outlier) outliers += o;
    rays += f.scan.outlier.size();
  }
  CHECK(std::abs(double(outliers) / double(rays) - 0.4) < 0.02);
}

TEST_CASE("sensor rendering is a function of the seed") {
  SensorNoise n;
  n.distractors = 4;
  n.outlier_fraction = 0.2;
  const auto a = render_sensors(hover(3, 4), loc::default_camera(), {}, n, 99);
  const auto b = render_sensors(hover(3, 4), loc::default_camera(), {}, n, 99);
  REQUIRE(a.blobs.size() == b.blobs.size());
  for (std::size_t i = 0; i < a.blobs.size(); ++i) CHECK(a.blobs[i].px == b.blobs[i].px);
  CHECK(a.scan.points == b.scan.points);
  CHECK(a.blobs.size() == 7);
}

TEST_CASE("drone behind the camera renders no blobs") {
  DroneState s = hover(5, 5);
  s.position.y() = 16.0;
  CHECK(render_sensors(s, loc::default_camera(), {}, {}, 1).blobs.empty());
}

TEST_CASE("deposition: valve off, stationary disc, band") {
  const svg::WallRect wall{0, 0, 2, 2};
  const loc::DroneGeometry geo;
  PaintRaster r(wall, 0.01);
  CHECK(r.nx() == 200);
  CHECK(r.nz() == 200);
  DroneState s = hover(1, 1);
  CHECK(deposit_paint(r, s, SprayCap::thin(0.04), geo, 2, 0));
  CHECK(r.count(kBackground) == 200u * 200u);

  s.spray_valve = true;
  CHECK(deposit_paint(r, s, SprayCap::thin(0.04), geo, 2, 0));
  const double rad = 0.02;
  for (int j = 0; j < r.nz(); ++j) {
    for (int i = 0; i < r.nx(); ++i) {
      const double d = geom::distance(r.center(i, j), {1, 1});
      if (d <= rad - 0.01) CHECK(r.color(i, j) == 2);
      if (d > rad + 0.01) CHECK(r.color(i, j) == kBackground);
    }
  }
  PaintRaster far(wall, 0.01);
  s.position.y() = 0.5;
  CHECK_FALSE(deposit_paint(far, s, SprayCap::thin(0.04), geo, 2, 0));
  CHECK(far.count(kBackground) == 200u * 200u);
}

TEST_CASE("flat-wide cap stamps a vertical bar") {
  PaintRaster r({0, 0, 1, 1}, 0.01);
  r.stamp({0.505, 0.5}, SprayCap::flat_wide(0.03, 0.06), 3, 1);
  CHECK(r.count(3) == 3u * 6u);
  CHECK(r.color(50, 52) == 3);
  CHECK(r.color(50, 53) == kBackground);
  CHECK(r.color(52, 52) == kBackground);
}

TEST_CASE("stamps never write outside the raster") {
  PaintRaster r({0, 0, 0.5, 0.5}, 0.01);
  for (Vec2 p : {Vec2{0, 0}, Vec2{0.5, 0.5}, Vec2{-0.3, 0.2}, Vec2{0.2, 7}}) {
    r.stamp(p, SprayCap::thin(0.2), 1, 0);
  }
  CHECK(r.colors().size() == 50u * 50u);
  CHECK(r.count(1) > 0);
}

TEST_CASE("straight pass at speed leaves no gaps") {
  SimConfig cfg;
  cfg.wall = {0, 0, 4, 4};
  World w(cfg);
  w.settle_at({0.5, 0.375, 2.0, 0.0});
  w.command_valve(w.state().time_us - std::llround(cfg.spray_delay * 1e6), true);
  Command c;
  c.velocity = {0.5, 0, 0};
  w.mutable_state().velocity = {0.5, 0, 0};
  for (int i = 0; i < 100; ++i) w.step(c);
  const auto& r = w.raster();
  const int j = static_cast<int>(2.0 / r.cell());
  const int i0 = static_cast<int>(0.52 / r.cell());
  const int i1 = static_cast<int>((w.state().position.x() - 0.02) / r.cell());
  REQUIRE(i1 - i0 > 90);
  for (int i = i0; i <= i1; ++i) {
    CHECK(r.color(i, j) == 1);
    CHECK(r.color(i, j - 1) == 1);
  }
}

TEST_CASE("valve actuation is delayed and paint matches open time") {
  SimConfig cfg;
  World w(cfg);
  w.settle_at({5, 0.375, 5, 0});
  w.mutable_state().airborne = true;
  w.command_valve(5000, true);
  w.command_valve(405000, false);
  for (int i = 0; i < 40; ++i) w.step({});
  REQUIRE(w.transitions().size() == 2);
  CHECK(w.transitions()[0].time_us == 155000);
  CHECK(w.transitions()[1].time_us == 555000);
  CHECK(w.valve_open_seconds() == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(std::abs((cfg.plant.paint_capacity - w.state().paint) - cfg.plant.flow_rate * 0.4) < 1e-9);
}

TEST_CASE("resource projection") {
  CHECK(resource_projection({}, 0.5).paint_g == 0.0);
  CHECK(resource_projection({}, 0.5).energy == 0.0);
  std::vector<plan::DrawPath> paths;
  for (int i = 0; i < 5; ++i) {
    paths.push_back(plan::extend_path(geom::PathChain(geom::CurveSegment::line({0, 1.0 * i}, {2, 1.0 * i})), 0.3));
  }
  PlantParams pp;
  pp.flow_rate = 2.0;
  const auto need = resource_projection(paths, 0.5, pp);
  CHECK(need.paint_g == doctest::Approx(40.0));
  CHECK(need.energy == doctest::Approx(pp.battery_base_rate * 5 * 2.6 / 0.5));
}

TEST_CASE("projection agrees with simulated consumption") {
  SimConfig cfg;
  World w(cfg);
  std::vector<plan::DrawPath> paths;
  for (int i = 0; i < 3; ++i) {
    auto p = plan::extend_path(geom::PathChain(geom::CurveSegment::line({2, 2.0 + i}, {4, 2.0 + i})), 0.3);
    p.index = i;
    paths.push_back(p);
  }
  const double before = w.state().paint;
  ctl::ControllerGains g;
  for (const auto& p : paths) loop::run_path(w, p, g);
  const double used = before - w.state().paint;
  const auto need = resource_projection(paths, g.v_target, cfg.plant);
  CHECK(used == doctest::Approx(need.paint_g).epsilon(0.10));
}

TEST_CASE("identical seeds give identical rasters and traces") {
  const auto run = [](std::uint64_t seed) {
    SimConfig cfg;
    cfg.seed = seed;
    cfg.wind.gust_sigma = 0.3;
    World w(cfg);
    w.enable_trace(true);
    auto p = plan::extend_path(loop::sine_chain({3, 3}, 1.5, 0.2, 6), 0.3);
    loop::run_path(w, p, {});
    return std::make_pair(w.raster(), w.trace());
  };
  const auto [ra, ta] = run(5);
  const auto [rb, tb] = run(5);
  const auto [rc, tc] = run(6);
  CHECK(ra == rb);
  REQUIRE(ta.size() == tb.size());
  bool same = true;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    same = same && ta[i].state.position == tb[i].state.position && ta[i].state.paint == tb[i].state.paint;
  }
  CHECK(same);
  CHECK_FALSE(ra == rc);
  for (std::size_t i = 1; i < ta.size(); ++i) {
    CHECK(ta[i].state.paint <= ta[i - 1].state.paint);
    CHECK(ta[i].state.battery <= ta[i - 1].state.battery);
  }
}

TEST_CASE("episode seeds depend on path and attempt") {
  CHECK(episode_seed(1, 0, 0) == episode_seed(1, 0, 0));
  CHECK(episode_seed(1, 0, 0) != episode_seed(1, 1, 0));
  CHECK(episode_seed(1, 0, 0) != episode_seed(1, 0, 1));
  CHECK(episode_seed(1, 0, 0) != episode_seed(2, 0, 0));
}

TEST_CASE("raster exports") {
  PaintRaster r({0, 0, 0.05, 0.03}, 0.01);
  r.set(0, 0, 7, 2);
  r.set(4, 2, 9, 3);
  const std::string pgm = to_pgm(r);
  CHECK(pgm.rfind("P5\n5 3\n255\n", 0) == 0);
  const std::string body = pgm.substr(std::string("P5\n5 3\n255\n").size());
  REQUIRE(body.size() == 15);
  CHECK(static_cast<unsigned char>(body[4]) == 9);   // top row holds z = 2
  CHECK(static_cast<unsigned char>(body[10]) == 7);  // bottom row, x = 0

  const auto png = to_png(r);
  REQUIRE(png.size() > 8 + 25);
  CHECK(std::equal(png.begin(), png.begin() + 8, std::vector<std::uint8_t>{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'}.begin()));
  CHECK(be32(png, 16) == 5);
  CHECK(be32(png, 20) == 3);
  const std::size_t idat = 8 + 25;
  const std::uint32_t len = be32(png, idat);
  CHECK(std::string(png.begin() + idat + 4, png.begin() + idat + 8) == "IDAT");
  std::vector<std::uint8_t> raw(3 * 6);
  uLongf out_len = raw.size();
  REQUIRE(uncompress(raw.data(), &out_len, png.data() + idat + 8, len) == Z_OK);
  CHECK(out_len == 18);
  CHECK(raw[0] == 0);
  CHECK(raw[5] == 9);
  CHECK(raw[13] == 7);

  const auto bytes = serialize_raster(r);
  const PaintRaster back = deserialize_raster(bytes);
  CHECK(back == r);
  CHECK(back.path_index(4, 2) == 3);
  auto bad = bytes;
  bad.pop_back();
  CHECK(code_of([&] { deserialize_raster(bad); }) == ErrorCode::parse_error);
}

TEST_CASE("trace csv") {
  TraceRow row;
  row.time_us = 20000;
  row.state.position = {1, 2, 3};
  row.event = "spray_on";
  const std::vector<TraceRow> rows{row};
  const std::string csv = trace_csv(rows);
  CHECK(csv.rfind("time,x,y,z,", 0) == 0);
  CHECK(csv.find("\n0.02,1,2,3,") != std::string::npos);
  CHECK(csv.find("spray_on\n") != std::string::npos);
}

TEST_CASE("configuration validation") {
  SimConfig cfg;
  cfg.dt_us = 0;
  CHECK(code_of([&] { World w(cfg); }) == ErrorCode::invalid_argument);
  cfg = {};
  cfg.noise.outlier_fraction = 1.5;
  CHECK(code_of([&] { cfg.validate(); }) == ErrorCode::invalid_argument);
  cfg = {};
  cfg.plant.tau_v = 0;
  CHECK(code_of([&] { cfg.validate(); }) == ErrorCode::invalid_argument);
}

TEST_CASE("palette png") {
  PaintRaster r({0, 0, 0.02, 0.01}, 0.01);
  r.set(1, 0, 1, 0);
  const std::vector<std::string> palette{"#ffffff", "#c03020"};
  const auto png = to_png(r, palette);
  CHECK(png[25] == 2);
  const std::size_t idat = 8 + 25;
  std::vector<std::uint8_t> raw(1 + 2 * 3);
  uLongf out_len = raw.size();
  REQUIRE(uncompress(raw.data(), &out_len, png.data() + idat + 8, be32(png, idat)) == Z_OK);
  CHECK(out_len == 7);
  CHECK(std::vector<std::uint8_t>(raw.begin() + 1, raw.end()) == std::vector<std::uint8_t>{255, 255, 255, 0xc0, 0x30, 0x20});
  const std::vector<std::string> bad{"white"};
  CHECK(code_of([&] { to_png(r, bad); }) == ErrorCode::invalid_argument);
}
