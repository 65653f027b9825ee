#include "mural/sim.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mural/error.hpp"

namespace mural::sim {

using Eigen::Vector2d;
using Eigen::Vector3d;
using geom::Vec2;

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::invalid_argument, what);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

loc::Pose lerp_pose(const DroneState& a, const DroneState& b, double w) {
  const Vector3d p = a.position + (b.position - a.position) * w;
  return {p.x(), p.y(), p.z(), a.yaw + (b.yaw - a.yaw) * w};
}

}  // namespace

void PlantParams::validate() const {
  require(tau_v > 0, "tau_v must be positive");
  require(wind_coupling >= 0, "wind_coupling must be non-negative");
  require(battery_base_rate >= 0 && battery_thrust_rate >= 0, "battery rates must be non-negative");
  require(flow_rate >= 0, "flow_rate must be non-negative");
  require(paint_capacity > 0, "paint_capacity must be positive");
}

DroneState step_dynamics(const DroneState& state, const Command& cmd, const Vector3d& wind, double dt,
                         const PlantParams& params) {
  require(dt > 0 && dt <= 0.1, "dt must be in (0, 0.1]");
  DroneState next = state;
  const Vector3d u = cmd.velocity + params.wind_coupling * wind;
  const double decay = std::exp(-dt / params.tau_v);
  next.velocity = u + (state.velocity - u) * decay;
  next.position = state.position + next.velocity * dt;
  next.yaw = state.yaw + cmd.yaw_rate * dt;
  if (state.airborne) {
    const double accel = (next.velocity - state.velocity).norm() / dt;
    next.battery = std::max(0.0, state.battery - (params.battery_base_rate + params.battery_thrust_rate * accel) * dt);
  }
  if (state.spray_valve) next.paint = std::max(0.0, state.paint - params.flow_rate * dt);
  next.time_us = state.time_us + std::llround(dt * 1e6);
  return next;
}

WindModel::WindModel(WindParams params, std::uint64_t seed) : params_(std::move(params)) { reseed(seed); }

void WindModel::reseed(std::uint64_t seed) {
  rng_.seed(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int k = 0; k < 3; ++k) gust_[k] = params_.gust_sigma * n(rng_);
}

Vector3d WindModel::step(double dt) {
  if (params_.gust_sigma > 0) {
    std::normal_distribution<double> n(0.0, 1.0);
    const double rho = std::exp(-dt / params_.gust_tau);
    const double q = params_.gust_sigma * std::sqrt(1.0 - rho * rho);
    for (int k = 0; k < 3; ++k) gust_[k] = rho * gust_[k] + q * n(rng_);
  }
  return current();
}

SensorFrame render_sensors(const DroneState& state, const loc::CameraModel& camera,
                           const loc::DroneGeometry& geometry, const SensorNoise& noise, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SensorFrame out;
  const loc::Pose pose = state.pose();
  const auto& k = camera.intrinsics;

  bool visible = true;
  std::vector<loc::Blob> leds;
  for (const auto& p : loc::led_points(pose, geometry)) {
    const auto px = camera.project(p);
    if (!px) {
      visible = false;
      break;
    }
    const double u = px->x() + noise.pixel_sigma * gauss(rng);
    const double v = px->y() + noise.pixel_sigma * gauss(rng);
    if (u >= 0 && u < k.width && v >= 0 && v < k.height) leds.push_back({u, v, 1.0});
  }
  if (visible) {
    out.blobs = std::move(leds);
    for (int i = 0; i < noise.distractors; ++i) {
      out.blobs.push_back({unit(rng) * k.width, unit(rng) * k.height, 0.2 + 0.8 * unit(rng)});
    }
    std::shuffle(out.blobs.begin(), out.blobs.end(), rng);
  }

  const int rays = static_cast<int>(std::lround(360.0 / noise.lidar_resolution_deg));
  const Vector3d o = loc::lidar_origin(pose, geometry);
  const Vector3d f = loc::forward_axis(pose.yaw);
  const Vector3d r = loc::right_axis(pose.yaw);
  for (int i = 0; i < rays; ++i) {
    const double th = 2.0 * M_PI * i / rays;
    const Vector2d ds(std::sin(th), std::cos(th));
    const Vector3d dir = ds.x() * r + ds.y() * f;
    if (dir.y() >= -1e-12) continue;
    const double t = -o.y() / dir.y();
    if (t < noise.range_min || t > noise.range_max) continue;
    const bool outlier = unit(rng) < noise.outlier_fraction;
    const double range = outlier ? noise.range_min + (noise.range_max - noise.range_min) * unit(rng)
                                 : t + noise.lidar_sigma * gauss(rng);
    out.scan.points.push_back(range * ds);
    out.scan.outlier.push_back(outlier);
  }
  return out;
}

PaintRaster::PaintRaster(const svg::WallRect& wall, double cell) : wall_(wall), cell_(cell) {
  require(cell > 0, "cell size must be positive");
  require(wall.width > 0 && wall.height > 0, "wall must have positive size");
  nx_ = static_cast<int>(std::ceil(wall.width / cell - 1e-9));
  nz_ = static_cast<int>(std::ceil(wall.height / cell - 1e-9));
  color_.assign(static_cast<std::size_t>(nx_) * nz_, kBackground);
  path_.assign(color_.size(), -1);
}

Vec2 PaintRaster::center(int i, int j) const {
  return {wall_.x0 + (i + 0.5) * cell_, wall_.z0 + (j + 0.5) * cell_};
}

std::size_t PaintRaster::stamp(Vec2 p, const SprayCap& cap, std::uint8_t color, std::int32_t path_index) {
  const bool disc = cap.kind == SprayCap::Kind::thin;
  const double hw = 0.5 * cap.width;
  const double hh = disc ? hw : 0.5 * cap.height;
  const int i0 = std::max(0, static_cast<int>(std::floor((p.x - hw - wall_.x0) / cell_)));
  const int i1 = std::min(nx_ - 1, static_cast<int>(std::floor((p.x + hw - wall_.x0) / cell_)));
  const int j0 = std::max(0, static_cast<int>(std::floor((p.z - hh - wall_.z0) / cell_)));
  const int j1 = std::min(nz_ - 1, static_cast<int>(std::floor((p.z + hh - wall_.z0) / cell_)));
  std::size_t n = 0;
  for (int j = j0; j <= j1; ++j) {
    for (int i = i0; i <= i1; ++i) {
      const Vec2 d = center(i, j) - p;
      const bool inside = disc ? geom::dot(d, d) <= hw * hw : std::abs(d.x) <= hw && std::abs(d.z) <= hh;
      if (!inside) continue;
      color_[idx(i, j)] = color;
      path_[idx(i, j)] = path_index;
      ++n;
    }
  }
  return n;
}

std::size_t PaintRaster::sweep(Vec2 a, Vec2 b, const SprayCap& cap, std::uint8_t color, std::int32_t path_index) {
  const int steps = std::max(1, static_cast<int>(std::ceil(geom::distance(a, b) / (0.25 * cell_))));
  std::size_t n = 0;
  for (int k = 0; k <= steps; ++k) n += stamp(a + (b - a) * (static_cast<double>(k) / steps), cap, color, path_index);
  return n;
}

std::size_t PaintRaster::count(std::uint8_t color) const {
  return static_cast<std::size_t>(std::count(color_.begin(), color_.end(), color));
}

bool PaintRaster::operator==(const PaintRaster& o) const {
  return nx_ == o.nx_ && nz_ == o.nz_ && cell_ == o.cell_ && color_ == o.color_ && path_ == o.path_;
}

NozzleHit nozzle_hit(const loc::Pose& pose, const loc::DroneGeometry& geometry) {
  const Vector3d n = loc::nozzle_point(pose, geometry);
  const Vector3d f = loc::forward_axis(pose.yaw);
  NozzleHit h;
  h.distance = n.y();
  const double t = f.y() < -1e-12 ? -n.y() / f.y() : 0.0;
  const Vector3d w = n + t * f;
  h.point = {w.x(), w.z()};
  return h;
}

bool deposit_paint(PaintRaster& raster, const DroneState& state, const SprayCap& cap,
                   const loc::DroneGeometry& geometry, std::uint8_t color, std::int32_t path_index,
                   const DepositBand& band) {
  if (!state.spray_valve || state.paint <= 0) return true;
  const NozzleHit h = nozzle_hit(state.pose(), geometry);
  if (h.distance < band.min || h.distance > band.max) return false;
  raster.stamp(h.point, cap, color, path_index);
  return true;
}

ResourceNeed resource_projection(std::span<const plan::DrawPath> remaining, double v_target,
                                 const PlantParams& params) {
  require(v_target > 0, "v_target must be positive");
  ResourceNeed need;
  for (const auto& p : remaining) {
    need.paint_g += params.flow_rate * (p.spray_window.s_off - p.spray_window.s_on) / v_target;
    need.energy += params.battery_base_rate * p.extended_length() / v_target;
  }
  return need;
}

void SimConfig::validate() const {
  plant.validate();
  require(wind.gust_sigma >= 0 && wind.gust_tau > 0, "invalid gust parameters");
  require(noise.pixel_sigma >= 0 && noise.lidar_sigma >= 0, "noise must be non-negative");
  require(noise.outlier_fraction >= 0 && noise.outlier_fraction <= 1, "outlier_fraction must be in [0, 1]");
  require(noise.lidar_resolution_deg > 0, "lidar resolution must be positive");
  require(noise.range_min >= 0 && noise.range_max > noise.range_min, "invalid lidar range");
  require(cell > 0, "cell must be positive");
  require(stroke_cap.width > 0 && fill_cap.width > 0 && fill_cap.height > 0 && eraser_cap.width > 0,
          "cap sizes must be positive");
  require(spray_delay >= 0, "spray_delay must be non-negative");
  require(band.min < band.max, "invalid deposition band");
  require(dt_us > 0 && dt_us <= 100000, "dt must be in (0, 0.1] s");
}

std::uint64_t episode_seed(std::uint64_t seed, std::size_t path_index, int attempt) {
  return splitmix64(splitmix64(splitmix64(seed) ^ static_cast<std::uint64_t>(path_index)) ^
                    static_cast<std::uint64_t>(attempt));
}

World::World(SimConfig config)
    : config_(std::move(config)), wind_(config_.wind, config_.seed), raster_(config_.wall, config_.cell) {
  config_.validate();
  sensor_rng_.seed(splitmix64(config_.seed ^ 0x5e5e5e5eULL));
  state_.paint = config_.plant.paint_capacity;
  cap_ = config_.stroke_cap;
}

void World::begin_episode(std::size_t path_index, int attempt) {
  const std::uint64_t s = episode_seed(config_.seed, path_index, attempt);
  wind_.reseed(s);
  sensor_rng_.seed(splitmix64(s ^ 0x5e5e5e5eULL));
}

void World::settle_at(const loc::Pose& pose) {
  state_.position = {pose.x, pose.y, pose.z};
  state_.velocity.setZero();
  state_.yaw = pose.yaw;
  cut_valve();
}

void World::set_paint_target(const SprayCap& cap, std::uint8_t color, std::int32_t path_index) {
  cap_ = cap;
  color_ = color;
  path_index_ = path_index;
}

void World::command_valve(std::int64_t at_us, bool open) {
  const auto delay = std::llround(config_.spray_delay * 1e6);
  pending_.emplace_back(at_us + delay, open);
  std::stable_sort(pending_.begin(), pending_.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
}

void World::cut_valve() {
  pending_.clear();
  if (state_.spray_valve) {
    transitions_.push_back({state_.time_us, false, nozzle_hit(state_.pose(), config_.geometry).point, path_index_});
  }
  state_.spray_valve = false;
}

void World::step(const Command& cmd, const std::string& event) {
  const std::int64_t t0 = state_.time_us;
  const std::int64_t t1 = t0 + config_.dt_us;
  const double dt = static_cast<double>(config_.dt_us) * 1e-6;
  const Vector3d wind = wind_.step(dt);
  DroneState prev = state_;
  DroneState base = prev;
  base.spray_valve = false;
  DroneState next = step_dynamics(base, cmd, wind, dt, config_.plant);
  next.time_us = t1;
  next.spray_valve = prev.spray_valve;

  const auto pose_at = [&](std::int64_t t) {
    return lerp_pose(prev, next, static_cast<double>(t - t0) / static_cast<double>(config_.dt_us));
  };
  bool open = prev.spray_valve;
  const auto run = [&](std::int64_t ta, std::int64_t tb) {
    if (!open || tb <= ta) return;
    const double dur = static_cast<double>(tb - ta) * 1e-6;
    const bool had_paint = next.paint > 0;
    next.paint = std::max(0.0, next.paint - config_.plant.flow_rate * dur);
    open_seconds_ += dur;
    if (!had_paint) return;
    const NozzleHit a = nozzle_hit(pose_at(ta), config_.geometry);
    const NozzleHit b = nozzle_hit(pose_at(tb), config_.geometry);
    const auto in_band = [&](double d) { return d >= config_.band.min && d <= config_.band.max; };
    if (in_band(a.distance) && in_band(b.distance)) {
      raster_.sweep(a.point, b.point, cap_, color_, path_index_);
      in_band_warning_ = false;
    } else {
      ++band_violations_;
      if (!in_band_warning_) {
        warnings_.push_back("spray outside deposition band (nozzle " + std::to_string(b.distance) + " m)");
        in_band_warning_ = true;
      }
    }
  };

  std::int64_t cur = t0;
  std::size_t used = 0;
  for (; used < pending_.size() && pending_[used].first < t1; ++used) {
    const std::int64_t at = std::max(t0, pending_[used].first);
    run(cur, at);
    cur = at;
    if (open != pending_[used].second) {
      open = pending_[used].second;
      transitions_.push_back({at, open, nozzle_hit(pose_at(at), config_.geometry).point, path_index_});
    }
  }
  pending_.erase(pending_.begin(), pending_.begin() + static_cast<std::ptrdiff_t>(used));
  run(cur, t1);
  next.spray_valve = open;
  state_ = next;
  if (tracing_) trace_.push_back({t1, state_, cmd, event});
}

SensorFrame World::sense() {
  return render_sensors(state_, config_.camera, config_.geometry, config_.noise, sensor_rng_());
}

std::vector<std::string> World::take_warnings() {
  std::vector<std::string> out;
  out.swap(warnings_);
  return out;
}

}  // namespace mural::sim
