#pragma once

// Simulated plant. Time is integer microseconds so that replays are exact.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mural/geom.hpp"
#include "mural/loc.hpp"
#include "mural/plan.hpp"
#include "mural/svg.hpp"

namespace mural::sim {

struct DroneState {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();
  double yaw = 0.0;
  /// Fraction of full charge, [0, 1].
  double battery = 1.0;
  /// Grams, [0, paint_capacity].
  double paint = 500.0;
  bool spray_valve = false;
  /// The battery only drains while airborne.
  bool airborne = false;
  std::int64_t time_us = 0;

  double time() const { return static_cast<double>(time_us) * 1e-6; }
  loc::Pose pose() const { return {position.x(), position.y(), position.z(), yaw}; }
};

struct Command {
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();
  double yaw_rate = 0.0;
};

struct PlantParams {
  double tau_v = 0.3;
  double wind_coupling = 0.05;
  /// Battery fraction per second while airborne.
  double battery_base_rate = 1.0 / 900.0;
  /// Extra battery fraction per (m/s^2) of commanded acceleration per second.
  double battery_thrust_rate = 5e-4;
  /// Grams per second with the valve open.
  double flow_rate = 2.0;
  double paint_capacity = 500.0;

  void validate() const;
};

/// Pure plant update. dt in (0, 0.1]. Paint drains for the whole step when
/// state.spray_valve is set.
DroneState step_dynamics(const DroneState& state, const Command& cmd, const Eigen::Vector3d& wind, double dt,
                         const PlantParams& params = {});

struct WindParams {
  Eigen::Vector3d steady = Eigen::Vector3d::Zero();
  /// Stationary standard deviation of each gust component, m/s.
  double gust_sigma = 0.0;
  /// Gust correlation time, s.
  double gust_tau = 2.0;
};

/// Ornstein-Uhlenbeck gust process, exactly discretized.
class WindModel {
 public:
  explicit WindModel(WindParams params = {}, std::uint64_t seed = 1);
  void reseed(std::uint64_t seed);
  /// Advance by dt and return the total wind.
  Eigen::Vector3d step(double dt);
  Eigen::Vector3d current() const { return params_.steady + gust_; }
  const WindParams& params() const { return params_; }

 private:
  WindParams params_;
  Eigen::Vector3d gust_ = Eigen::Vector3d::Zero();
  std::mt19937_64 rng_;
};

struct SensorNoise {
  double pixel_sigma = 0.5;
  int distractors = 0;
  double lidar_sigma = 0.005;
  double outlier_fraction = 0.0;
  double lidar_resolution_deg = 0.5;
  double range_min = 0.12;
  double range_max = 10.0;
};

/// Points in the LiDAR frame (u right, v forward).
struct LidarScan {
  std::vector<Eigen::Vector2d> points;
  /// Ground truth: the return was replaced by a uniform random range.
  std::vector<bool> outlier;
};

struct SensorFrame {
  std::vector<loc::Blob> blobs;
  LidarScan scan;
};

/// Renders camera blobs and a LiDAR scan for the state. All random draws come
/// from a stream seeded by `seed`. An LED behind the camera or outside the
/// image produces no blob.
SensorFrame render_sensors(const DroneState& state, const loc::CameraModel& camera,
                           const loc::DroneGeometry& geometry, const SensorNoise& noise, std::uint64_t seed);

struct SprayCap {
  enum class Kind { flat_wide, thin };
  Kind kind = Kind::thin;
  /// Horizontal footprint (disc diameter for thin).
  double width = 0.02;
  /// Vertical footprint of the flat-wide bar.
  double height = 0.02;

  static SprayCap thin(double width = 0.02) { return {Kind::thin, width, width}; }
  static SprayCap flat_wide(double width = 0.03, double height = 0.06) { return {Kind::flat_wide, width, height}; }
  double radius() const { return 0.5 * width; }
};

inline constexpr std::uint8_t kBackground = 0;

/// Wall raster. Cell (i, j) covers x0 + [i, i+1) * cell, z0 + [j, j+1) * cell.
class PaintRaster {
 public:
  PaintRaster(const svg::WallRect& wall, double cell = 0.01);

  int nx() const { return nx_; }
  int nz() const { return nz_; }
  double cell() const { return cell_; }
  const svg::WallRect& wall() const { return wall_; }
  geom::Vec2 center(int i, int j) const;
  std::uint8_t color(int i, int j) const { return color_[idx(i, j)]; }
  std::int32_t path_index(int i, int j) const { return path_[idx(i, j)]; }
  const std::vector<std::uint8_t>& colors() const { return color_; }
  void set(int i, int j, std::uint8_t color, std::int32_t path_index) {
    color_[idx(i, j)] = color;
    path_[idx(i, j)] = path_index;
  }

  /// Paints every cell whose centre lies in the footprint centred at p.
  /// Returns the number of cells written.
  std::size_t stamp(geom::Vec2 p, const SprayCap& cap, std::uint8_t color, std::int32_t path_index);
  /// Stamps along the segment a -> b at quarter-cell steps.
  std::size_t sweep(geom::Vec2 a, geom::Vec2 b, const SprayCap& cap, std::uint8_t color, std::int32_t path_index);
  std::size_t count(std::uint8_t color) const;

  bool operator==(const PaintRaster& o) const;

 private:
  std::size_t idx(int i, int j) const { return static_cast<std::size_t>(j) * static_cast<std::size_t>(nx_) + i; }

  svg::WallRect wall_;
  double cell_;
  int nx_ = 0;
  int nz_ = 0;
  std::vector<std::uint8_t> color_;
  std::vector<std::int32_t> path_;
};

/// Nozzle wall projection along the forward axis and its distance to the wall.
struct NozzleHit {
  geom::Vec2 point;
  double distance = 0.0;
};
NozzleHit nozzle_hit(const loc::Pose& pose, const loc::DroneGeometry& geometry);

struct DepositBand {
  double min = 0.05;
  double max = 0.10;
};

/// Single-state deposition: stamps the cap at the nozzle projection when the
/// valve is open and the nozzle is inside the band. Returns false when the
/// valve is open but the band is violated (nothing stamped).
bool deposit_paint(PaintRaster& raster, const DroneState& state, const SprayCap& cap,
                   const loc::DroneGeometry& geometry, std::uint8_t color, std::int32_t path_index,
                   const DepositBand& band = {});

struct ResourceNeed {
  double paint_g = 0.0;
  double energy = 0.0;
};

/// Paint for the remaining spray windows and energy for the remaining
/// extended lengths, both at v_target.
ResourceNeed resource_projection(std::span<const plan::DrawPath> remaining, double v_target,
                                 const PlantParams& params = {});

struct SimConfig {
  PlantParams plant;
  WindParams wind;
  SensorNoise noise;
  loc::DroneGeometry geometry;
  loc::CameraModel camera = loc::default_camera();
  svg::WallRect wall{0.0, 0.0, 10.0, 10.0};
  double cell = 0.01;
  SprayCap stroke_cap = SprayCap::thin(0.02);
  SprayCap fill_cap = SprayCap::flat_wide(0.03, 0.06);
  SprayCap eraser_cap = SprayCap::thin(0.06);
  double spray_delay = 0.15;
  DepositBand band;
  std::int64_t dt_us = 20000;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SprayTransition {
  std::int64_t time_us = 0;
  bool open = false;
  geom::Vec2 wall_point;
  std::int32_t path_index = -1;
};

struct TraceRow {
  std::int64_t time_us = 0;
  DroneState state;
  Command command;
  std::string event;
};

/// Seed of the stream used for one path attempt.
std::uint64_t episode_seed(std::uint64_t seed, std::size_t path_index, int attempt);

/// The stepper. Owns the true state, the wind, the valve actuator and the raster.
class World {
 public:
  explicit World(SimConfig config);

  /// Restart the random streams for one path attempt.
  void begin_episode(std::size_t path_index, int attempt);
  /// Teleport to a settled hover at `pose` (velocity and gusts zeroed).
  void settle_at(const loc::Pose& pose);
  void set_paint_target(const SprayCap& cap, std::uint8_t color, std::int32_t path_index);
  /// Valve command issued at at_us; the valve moves spray_delay later.
  void command_valve(std::int64_t at_us, bool open);
  /// Close immediately and drop pending transitions.
  void cut_valve();
  void step(const Command& cmd, const std::string& event = {});
  SensorFrame sense();

  const DroneState& state() const { return state_; }
  DroneState& mutable_state() { return state_; }
  const PaintRaster& raster() const { return raster_; }
  PaintRaster& raster() { return raster_; }
  void set_raster(const PaintRaster& r) { raster_ = r; }
  const SimConfig& config() const { return config_; }
  const std::vector<SprayTransition>& transitions() const { return transitions_; }
  std::size_t band_violations() const { return band_violations_; }
  /// Valve events and band warnings since the last call.
  std::vector<std::string> take_warnings();
  void enable_trace(bool on) { tracing_ = on; }
  const std::vector<TraceRow>& trace() const { return trace_; }
  double valve_open_seconds() const { return open_seconds_; }

 private:
  SimConfig config_;
  DroneState state_;
  WindModel wind_;
  std::mt19937_64 sensor_rng_;
  PaintRaster raster_;
  SprayCap cap_;
  std::uint8_t color_ = 1;
  std::int32_t path_index_ = -1;
  std::vector<std::pair<std::int64_t, bool>> pending_;
  std::vector<SprayTransition> transitions_;
  std::vector<std::string> warnings_;
  std::size_t band_violations_ = 0;
  bool in_band_warning_ = false;
  bool tracing_ = false;
  std::vector<TraceRow> trace_;
  double open_seconds_ = 0.0;
};

std::string to_pgm(const PaintRaster& r);
/// Grey PNG of the raw colour indices.
std::vector<std::uint8_t> to_png(const PaintRaster& r);
/// RGB PNG through a "#rrggbb" palette; indices past its end show magenta.
std::vector<std::uint8_t> to_png(const PaintRaster& r, std::span<const std::string> palette);
void write_pgm(const PaintRaster& r, const std::filesystem::path& path);
void write_png(const PaintRaster& r, const std::filesystem::path& path);
std::string trace_csv(std::span<const TraceRow> rows);
void write_trace_csv(std::span<const TraceRow> rows, const std::filesystem::path& path);

/// Raster snapshot for checkpoints (binary: header, colors, path indices).
std::vector<std::uint8_t> serialize_raster(const PaintRaster& r);
PaintRaster deserialize_raster(std::span<const std::uint8_t> bytes);

}  // namespace mural::sim
