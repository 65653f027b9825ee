#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <vector>

#include "mural/geom.hpp"
#include "mural/loc.hpp"
#include "mural/plan.hpp"

namespace mural::ctl {

struct ControllerGains {
  double kp_n = 12.0;
  double kd_n = 2.0;
  double kp_y = 4.0;
  double kd_y = 1.0;
  double v_target = 0.5;
  double a_max = 0.5;
  double servo_delay = 0.15;
  double v_sat = 1.0;
  double k_yaw = 1.5;
  double retry_threshold = 0.03;
  int max_retries = 2;
  /// Smoothing of the finite-difference error rate.
  double ema_alpha = 0.5;
  /// Body distance from the wall that puts the nozzle mid operating band.
  double wall_distance = 0.375;
  /// Plant velocity time constant assumed for feedforward and prediction.
  double plant_tau = 0.3;
  /// Observer position correction per measurement, in (0, 1].
  double obs_gain = 0.3;
  /// Observer velocity-bias correction per measurement, 1/s.
  double obs_gain_bias = 2.0;
  /// Poses older than this at control time trigger HoldPosition, s.
  double pose_timeout = 0.1;
  double travel_speed = 1.0;
  double travel_kp = 1.5;

  /// Throws InvalidArgument.
  void validate() const;
};

/// Throws InfeasibleProfile when a lead segment is too short to reach or
/// leave v_target at a_max.
void validate_profile(const plan::MissionPlan& plan, const ControllerGains& gains);

struct Progress {
  double s = 0.0;
  double normal_error = 0.0;
};

/// Dense polyline of a path's extended geometry for projection queries.
class PathTrack {
 public:
  explicit PathTrack(const plan::DrawPath& path, double spacing = 0.002);

  /// Closest point over the whole path; ties go to the smaller s.
  Progress project(geom::Vec2 p) const;
  /// Closest point among samples within `window` of `s_hint`.
  Progress project_near(geom::Vec2 p, double s_hint, double window) const;
  geom::Vec2 point(double s) const;
  geom::Vec2 tangent(double s) const;
  /// Signed curvature (positive turns towards the left normal).
  double curvature(double s) const;
  double length() const { return cum_.back(); }
  const plan::DrawPath& path() const { return path_; }

 private:
  Progress project_range(geom::Vec2 p, std::size_t first, std::size_t last) const;
  std::size_t segment_at(double s) const;

  plan::DrawPath path_;
  std::vector<geom::Vec2> pts_;
  std::vector<double> cum_;
};

Progress path_progress(geom::Vec2 position, const plan::DrawPath& path);

/// Trapezoidal speed profile along the extended path.
double tangential_cmd(double s, double v_current, const plan::DrawPath& path, const ControllerGains& gains);

/// -(kp e + kd rate), saturated to +-v_sat.
double pd_control(double error, double error_rate, double kp, double kd, double v_sat = 1.0);

enum class SprayPhase { off, commanded, on };

/// Command-level spray state: commanded once within v*delay of s_on, on
/// from s_on, released v*delay before s_off.
SprayPhase spray_trigger(double s, double v_tangential, const plan::DrawPath& path, double servo_delay);

enum class RetryDecision { accept, retry, give_up };

RetryDecision check_retry(double normal_error_at_spray_on, double threshold, int attempts, int max_retries = 2);

struct VelocityCommand {
  double vx = 0.0;
  double vy = 0.0;
  double vz = 0.0;
  double yaw_rate = 0.0;
  double v_tangential = 0.0;
  double v_normal = 0.0;
  double v_wall = 0.0;
  bool hold = false;
};

struct ValveCommand {
  std::int64_t at_us = 0;
  bool open = false;
};

struct TrackState {
  std::size_t path_index = 0;
  double s = 0.0;
  double normal_error = 0.0;
  bool spray_commanded = false;
  bool spray_active = false;
  bool done = false;
};

struct StepOutput {
  VelocityCommand cmd;
  std::vector<ValveCommand> valve;
  /// Set on the tick the spray-on decision is taken.
  std::optional<RetryDecision> spray_decision;
  std::optional<double> spray_on_error;
  bool spray_released = false;
};

/// One axis of the latency-compensating observer. Velocity follows the
/// commanded velocity through the first-order plant model plus a slowly
/// estimated bias; delayed position measurements are compared against the
/// prediction at their stamp.
class AxisObserver {
 public:
  void reset(double position, std::int64_t now_us);
  void predict(double command, std::int64_t dt_us, double tau);
  void correct(double measurement, std::int64_t stamp_us, double gain, double gain_bias);
  double position() const { return p_; }
  /// Model velocity plus the estimated unmodelled drift.
  double velocity() const { return v_ + bias_; }
  std::int64_t time_us() const { return t_; }

 private:
  double p_ = 0.0;
  double v_ = 0.0;
  double bias_ = 0.0;
  std::int64_t t_ = 0;
  std::deque<std::pair<std::int64_t, double>> history_;
};

/// Pose observer over body x, y, z and yaw.
class PoseObserver {
 public:
  void reset(const loc::Pose& pose, std::int64_t now_us);
  void predict(const VelocityCommand& cmd, std::int64_t dt_us, double tau);
  void correct(const loc::PoseEstimate& est, std::int64_t stamp_us, const ControllerGains& g);
  loc::Pose pose() const;
  geom::Vec2 plane_velocity() const { return {x_.velocity(), z_.velocity()}; }
  double wall_velocity() const { return y_.velocity(); }
  bool initialized() const { return initialized_; }

 private:
  AxisObserver x_, y_, z_;
  double yaw_ = 0.0;
  bool initialized_ = false;
};

/// Where the spray lands for a body pose: the nozzle ray hits the wall at
/// x + y tan(yaw), z.
geom::Vec2 spray_point(const loc::Pose& body);

/// Drawing controller for one path at a time. Deterministic given its inputs.
class Controller {
 public:
  explicit Controller(ControllerGains gains = {});

  void begin_path(const plan::DrawPath& path, std::size_t index, int attempt, const loc::Pose& start,
                  std::int64_t now_us);
  /// Feed a fused pose measured at stamp_us (<= now).
  void observe(const loc::PoseEstimate& est, std::int64_t stamp_us);
  /// Advance one tick. With pose_ok false the output is HoldPosition and an
  /// open valve is closed immediately.
  StepOutput step(std::int64_t now_us, std::int64_t dt_us, bool pose_ok);
  /// observe + step; holds when an axis is invalid or the pose is older
  /// than pose_timeout.
  StepOutput control_step(const loc::PoseEstimate& pose, std::int64_t stamp_us, std::int64_t now_us,
                          std::int64_t dt_us);

  const TrackState& track() const { return track_; }
  const PoseObserver& observer() const { return obs_; }
  const ControllerGains& gains() const { return gains_; }
  bool active() const { return track_ready_; }

 private:
  double predict_crossing(double s_target, double s, double v, double u) const;

  ControllerGains gains_;
  std::optional<PathTrack> track_geom_;
  bool track_ready_ = false;
  TrackState track_;
  PoseObserver obs_;
  int attempt_ = 0;
  double rate_ema_ = 0.0;
  double prev_error_ = 0.0;
  double wall_rate_ema_ = 0.0;
  double prev_wall_error_ = 0.0;
  bool have_prev_ = false;
  bool spray_decided_ = false;
  bool valve_open_cmd_ = false;
  bool released_ = false;
  VelocityCommand last_cmd_;
};

/// Straight-line travel towards `target` (x, y, z) with speed limit.
VelocityCommand goto_cmd(const loc::Pose& estimate, const Eigen::Vector3d& target, const ControllerGains& g);

}  // namespace mural::ctl
