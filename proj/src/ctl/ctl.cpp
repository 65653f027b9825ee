#include "mural/ctl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mural/error.hpp"

namespace mural::ctl {

using geom::Vec2;

namespace {

constexpr double kUs = 1e-6;
/// Path completion: within this distance of the lead-out end.
constexpr double kDoneMargin = 0.02;
constexpr double kProjectWindow = 0.25;
constexpr std::size_t kHistory = 64;

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::invalid_argument, what);
}

}  // namespace

void ControllerGains::validate() const {
  require(kp_n >= 0 && kd_n >= 0 && kp_y >= 0 && kd_y >= 0 && k_yaw >= 0, "gains must be non-negative");
  require(v_target > 0, "v_target must be positive");
  require(a_max > 0, "a_max must be positive");
  require(servo_delay >= 0, "servo_delay must be non-negative");
  require(v_sat > 0, "v_sat must be positive");
  require(retry_threshold > 0, "retry_threshold must be positive");
  require(max_retries >= 0, "max_retries must be non-negative");
  require(ema_alpha > 0 && ema_alpha <= 1, "ema_alpha must be in (0, 1]");
  require(wall_distance > 0, "wall_distance must be positive");
  require(plant_tau > 0, "plant_tau must be positive");
  require(obs_gain > 0 && obs_gain <= 1, "obs_gain must be in (0, 1]");
  require(obs_gain_bias >= 0, "obs_gain_bias must be non-negative");
  require(pose_timeout > 0, "pose_timeout must be positive");
  require(travel_speed > 0 && travel_kp > 0, "travel parameters must be positive");
}

void validate_profile(const plan::MissionPlan& plan, const ControllerGains& gains) {
  gains.validate();
  const double need = gains.v_target * gains.v_target / (2.0 * gains.a_max);
  for (const auto& p : plan.paths) {
    const double in = p.lead_in_length();
    const double out = p.lead_out_length();
    if (in + 1e-9 < need || out + 1e-9 < need) {
      throw Error(ErrorCode::infeasible_profile,
                  "path " + std::to_string(p.index) + ": extensions " + std::to_string(in) + "/" +
                      std::to_string(out) + " m cannot reach " + std::to_string(gains.v_target) + " m/s at " +
                      std::to_string(gains.a_max) + " m/s^2 (need " + std::to_string(need) + " m)");
    }
  }
}

PathTrack::PathTrack(const plan::DrawPath& path, double spacing) : path_(path) {
  pts_ = geom::sample_path(path.extended(), spacing);
  cum_.resize(pts_.size());
  cum_[0] = 0.0;
  for (std::size_t i = 1; i < pts_.size(); ++i) cum_[i] = cum_[i - 1] + geom::distance(pts_[i - 1], pts_[i]);
}

Progress PathTrack::project_range(Vec2 p, std::size_t first, std::size_t last) const {
  Progress best;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (std::size_t i = first; i < last; ++i) {
    const Vec2 a = pts_[i];
    const Vec2 d = pts_[i + 1] - a;
    const double len2 = geom::dot(d, d);
    if (len2 <= 0) continue;
    const double t = std::clamp(geom::dot(p - a, d) / len2, 0.0, 1.0);
    const Vec2 q = a + d * t;
    const Vec2 r = p - q;
    const double d2 = geom::dot(r, r);
    if (d2 < best_d2) {
      best_d2 = d2;
      const double len = std::sqrt(len2);
      best.s = cum_[i] + t * len;
      best.normal_error = geom::dot(geom::left_normal(d / len), r);
    }
  }
  return best;
}

Progress PathTrack::project(Vec2 p) const { return project_range(p, 0, pts_.size() - 1); }

Progress PathTrack::project_near(Vec2 p, double s_hint, double window) const {
  const auto lo = std::lower_bound(cum_.begin(), cum_.end(), s_hint - window);
  const auto hi = std::upper_bound(cum_.begin(), cum_.end(), s_hint + window);
  std::size_t first = lo == cum_.begin() ? 0 : static_cast<std::size_t>(lo - cum_.begin()) - 1;
  std::size_t last = std::min(static_cast<std::size_t>(hi - cum_.begin()), pts_.size() - 1);
  if (last <= first) last = std::min(first + 1, pts_.size() - 1);
  return project_range(p, first, last);
}

std::size_t PathTrack::segment_at(double s) const {
  const auto it = std::upper_bound(cum_.begin(), cum_.end(), s);
  const std::size_t i = it == cum_.begin() ? 0 : static_cast<std::size_t>(it - cum_.begin()) - 1;
  return std::min(i, pts_.size() - 2);
}

Vec2 PathTrack::point(double s) const {
  const std::size_t i = segment_at(s);
  const double len = cum_[i + 1] - cum_[i];
  const double t = len > 0 ? std::clamp((s - cum_[i]) / len, 0.0, 1.0) : 0.0;
  return pts_[i] + (pts_[i + 1] - pts_[i]) * t;
}

Vec2 PathTrack::tangent(double s) const {
  const std::size_t i = segment_at(s);
  return geom::normalized(pts_[i + 1] - pts_[i]);
}

double PathTrack::curvature(double s) const {
  constexpr double h = 0.01;
  const double s0 = std::max(0.0, s - h);
  const double s1 = std::min(length(), s + h);
  if (s1 - s0 <= 0) return 0.0;
  const Vec2 t0 = tangent(s0);
  const Vec2 t1 = tangent(s1);
  return std::atan2(geom::cross(t0, t1), geom::dot(t0, t1)) / (s1 - s0);
}

Progress path_progress(Vec2 position, const plan::DrawPath& path) { return PathTrack(path).project(position); }

double tangential_cmd(double s, double /*v_current*/, const plan::DrawPath& path, const ControllerGains& gains) {
  const double L = path.extended_length();
  const double sc = std::clamp(s, 0.0, L);
  return std::min({gains.v_target, std::sqrt(2.0 * gains.a_max * sc), std::sqrt(2.0 * gains.a_max * (L - sc))});
}

double pd_control(double error, double error_rate, double kp, double kd, double v_sat) {
  return std::clamp(-(kp * error + kd * error_rate), -v_sat, v_sat);
}

SprayPhase spray_trigger(double s, double v_tangential, const plan::DrawPath& path, double servo_delay) {
  const double lead = std::max(0.0, v_tangential) * servo_delay;
  const auto [s_on, s_off] = path.spray_window;
  if (s < s_on - lead || s >= s_off - lead) return SprayPhase::off;
  return s < s_on ? SprayPhase::commanded : SprayPhase::on;
}

RetryDecision check_retry(double error, double threshold, int attempts, int max_retries) {
  require(attempts >= 0, "attempts must be non-negative");
  if (std::abs(error) <= threshold) return RetryDecision::accept;
  return attempts < max_retries ? RetryDecision::retry : RetryDecision::give_up;
}

void AxisObserver::reset(double position, std::int64_t now_us) {
  p_ = position;
  v_ = 0.0;
  bias_ = 0.0;
  t_ = now_us;
  history_.clear();
  history_.emplace_back(t_, p_);
}

void AxisObserver::predict(double command, std::int64_t dt_us, double tau) {
  const double dt = static_cast<double>(dt_us) * kUs;
  const double decay = std::exp(-dt / tau);
  p_ += (command + bias_) * dt + (v_ - command) * tau * (1.0 - decay);
  v_ = command + (v_ - command) * decay;
  t_ += dt_us;
  history_.emplace_back(t_, p_);
  while (history_.size() > kHistory) history_.pop_front();
}

void AxisObserver::correct(double measurement, std::int64_t stamp_us, double gain, double gain_bias) {
  double predicted = p_;
  if (stamp_us < t_) {
    const auto it = std::lower_bound(history_.begin(), history_.end(), stamp_us,
                                     [](const auto& h, std::int64_t t) { return h.first < t; });
    if (it == history_.begin()) {
      predicted = it->second;
    } else if (it != history_.end()) {
      const auto& [t1, p1] = *it;
      const auto& [t0, p0] = *(it - 1);
      const double w = static_cast<double>(stamp_us - t0) / static_cast<double>(t1 - t0);
      predicted = p0 + (p1 - p0) * w;
    }
  }
  const double innovation = measurement - predicted;
  const double delta = gain * innovation;
  bias_ += gain_bias * innovation;
  p_ += delta;
  for (auto& h : history_) h.second += delta;
}

void PoseObserver::reset(const loc::Pose& pose, std::int64_t now_us) {
  x_.reset(pose.x, now_us);
  y_.reset(pose.y, now_us);
  z_.reset(pose.z, now_us);
  yaw_ = pose.yaw;
  initialized_ = true;
}

void PoseObserver::predict(const VelocityCommand& cmd, std::int64_t dt_us, double tau) {
  x_.predict(cmd.vx, dt_us, tau);
  y_.predict(cmd.vy, dt_us, tau);
  z_.predict(cmd.vz, dt_us, tau);
  yaw_ += cmd.yaw_rate * static_cast<double>(dt_us) * kUs;
}

void PoseObserver::correct(const loc::PoseEstimate& est, std::int64_t stamp_us, const ControllerGains& g) {
  if (est.valid_x) x_.correct(est.x, stamp_us, g.obs_gain, g.obs_gain_bias);
  if (est.valid_y) y_.correct(est.y, stamp_us, g.obs_gain, g.obs_gain_bias);
  if (est.valid_z) z_.correct(est.z, stamp_us, g.obs_gain, g.obs_gain_bias);
  if (est.valid_yaw) yaw_ += g.obs_gain * (est.yaw - yaw_);
}

loc::Pose PoseObserver::pose() const { return {x_.position(), y_.position(), z_.position(), yaw_}; }

Vec2 spray_point(const loc::Pose& body) { return {body.x + body.y * std::tan(body.yaw), body.z}; }

Controller::Controller(ControllerGains gains) : gains_(gains) { gains_.validate(); }

void Controller::begin_path(const plan::DrawPath& path, std::size_t index, int attempt, const loc::Pose& start,
                            std::int64_t now_us) {
  track_geom_.emplace(path);
  track_ready_ = true;
  track_ = {};
  track_.path_index = index;
  obs_.reset(start, now_us);
  attempt_ = attempt;
  rate_ema_ = prev_error_ = wall_rate_ema_ = prev_wall_error_ = 0.0;
  have_prev_ = false;
  spray_decided_ = valve_open_cmd_ = released_ = false;
  last_cmd_ = {};
}

void Controller::observe(const loc::PoseEstimate& est, std::int64_t stamp_us) {
  obs_.correct(est, stamp_us, gains_);
}

double Controller::predict_crossing(double s_target, double s, double v, double u) const {
  if (s >= s_target) return 0.0;
  const double tau = gains_.plant_tau;
  const auto at = [&](double d) { return s + u * d + (v - u) * tau * (1.0 - std::exp(-d / tau)); };
  constexpr double step = 0.02;
  constexpr double horizon = 2.0;
  double lo = 0.0;
  for (double hi = step; hi <= horizon + 1e-12; hi += step) {
    if (at(hi) >= s_target) {
      for (int k = 0; k < 40; ++k) {
        const double mid = 0.5 * (lo + hi);
        (at(mid) >= s_target ? hi : lo) = mid;
      }
      return hi;
    }
    lo = hi;
  }
  return std::numeric_limits<double>::infinity();
}

StepOutput Controller::step(std::int64_t now_us, std::int64_t dt_us, bool pose_ok) {
  require(track_ready_, "no active path");
  require(dt_us > 0, "dt must be positive");
  StepOutput out;
  const double dt = static_cast<double>(dt_us) * kUs;

  if (!pose_ok) {
    out.cmd.hold = true;
    if (valve_open_cmd_ && !released_) {
      out.valve.push_back({now_us, false});
      released_ = true;
      out.spray_released = true;
    }
    track_.spray_commanded = false;
    track_.spray_active = false;
    last_cmd_ = out.cmd;
    obs_.predict(out.cmd, dt_us, gains_.plant_tau);
    return out;
  }

  const auto& tr = *track_geom_;
  const loc::Pose pose = obs_.pose();
  const Progress prog = have_prev_ ? tr.project_near(spray_point(pose), track_.s, kProjectWindow)
                                   : tr.project(spray_point(pose));
  const double L = tr.length();
  const double s = std::clamp(prog.s, 0.0, L);
  const double e = prog.normal_error;
  const double ey = pose.y - gains_.wall_distance;
  if (have_prev_) {
    const double a = gains_.ema_alpha;
    rate_ema_ = a * (e - prev_error_) / dt + (1 - a) * rate_ema_;
    wall_rate_ema_ = a * (ey - prev_wall_error_) / dt + (1 - a) * wall_rate_ema_;
  }
  prev_error_ = e;
  prev_wall_error_ = ey;
  have_prev_ = true;

  // Profile setpoint plus inverse-lag feedforward along and across the path.
  const auto& path = tr.path();
  double v_sp = tangential_cmd(s, 0.0, path, gains_);
  const double floor = std::min(gains_.v_target, gains_.a_max * dt);
  double a_t = 0.0;
  if (s < 0.5 * L && v_sp < floor) v_sp = floor;
  if (v_sp < gains_.v_target) a_t = s < 0.5 * L ? gains_.a_max : -gains_.a_max;
  const double tau = gains_.plant_tau;
  const Vec2 T = tr.tangent(s);
  const Vec2 N = geom::left_normal(T);
  const double v_t = std::max(0.0, v_sp + tau * a_t);
  const double v_n = pd_control(e, rate_ema_, gains_.kp_n, gains_.kd_n, gains_.v_sat) +
                     tau * v_sp * v_sp * tr.curvature(s);
  const Vec2 plane = T * v_t + N * v_n;

  out.cmd.vx = plane.x;
  out.cmd.vz = plane.z;
  out.cmd.vy = pd_control(ey, wall_rate_ema_, gains_.kp_y, gains_.kd_y, gains_.v_sat);
  out.cmd.yaw_rate = -gains_.k_yaw * pose.yaw;
  out.cmd.v_tangential = v_t;
  out.cmd.v_normal = v_n;
  out.cmd.v_wall = out.cmd.vy;

  // Valve commands at sub-tick resolution, lead time servo_delay.
  const double v_along = geom::dot(T, obs_.plane_velocity());
  const auto window = path.spray_window;
  const std::int64_t tick_end = now_us + dt_us;
  const auto command_time = [&](double s_target) -> std::optional<std::int64_t> {
    const double d = predict_crossing(s_target, s, v_along, v_t);
    if (!std::isfinite(d)) return std::nullopt;
    const auto t = now_us + static_cast<std::int64_t>(std::llround((d - gains_.servo_delay) / kUs));
    if (t >= tick_end) return std::nullopt;
    return std::max(now_us, t);
  };
  if (!spray_decided_) {
    if (const auto t = command_time(window.s_on)) {
      spray_decided_ = true;
      const RetryDecision d = check_retry(e, gains_.retry_threshold, attempt_, gains_.max_retries);
      out.spray_decision = d;
      out.spray_on_error = e;
      if (d == RetryDecision::accept) {
        out.valve.push_back({*t, true});
        valve_open_cmd_ = true;
      }
    }
  }
  if (valve_open_cmd_ && !released_) {
    if (const auto t = command_time(window.s_off)) {
      out.valve.push_back({*t, false});
      released_ = true;
      out.spray_released = true;
    }
  }

  track_.s = s;
  track_.normal_error = e;
  track_.spray_commanded = valve_open_cmd_ && !released_;
  track_.spray_active = track_.spray_commanded && s >= window.s_on;
  track_.done = L - s <= kDoneMargin;
  last_cmd_ = out.cmd;
  obs_.predict(out.cmd, dt_us, tau);
  return out;
}

StepOutput Controller::control_step(const loc::PoseEstimate& pose, std::int64_t stamp_us, std::int64_t now_us,
                                    std::int64_t dt_us) {
  const double age = static_cast<double>(now_us - stamp_us) * kUs;
  if (!pose.all_valid() || age > gains_.pose_timeout) return step(now_us, dt_us, false);
  observe(pose, stamp_us);
  return step(now_us, dt_us, true);
}

VelocityCommand goto_cmd(const loc::Pose& estimate, const Eigen::Vector3d& target, const ControllerGains& g) {
  Eigen::Vector3d v = g.travel_kp * (target - Eigen::Vector3d(estimate.x, estimate.y, estimate.z));
  const double n = v.norm();
  if (n > g.travel_speed) v *= g.travel_speed / n;
  VelocityCommand c;
  c.vx = v.x();
  c.vy = v.y();
  c.vz = v.z();
  c.yaw_rate = -g.k_yaw * estimate.yaw;
  return c;
}

}  // namespace mural::ctl
