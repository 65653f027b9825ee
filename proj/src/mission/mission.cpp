#include <algorithm>
#include <cmath>

#include "mural/error.hpp"
#include "mural/mission.hpp"

namespace mural::mission {

using nlohmann::json;

namespace {

constexpr double kUs = 1e-6;
/// Landing ends when the true height is within this of the ground.
constexpr double kTouchdown = 0.005;
constexpr double kBlindDescent = 0.3;
constexpr std::uint64_t kLinkSalt = 0x4c494e4b5345454dull;

std::int64_t us(double seconds) { return std::llround(seconds * 1e6); }

json pose_json(const Eigen::Vector3d& p) { return json::array({p.x(), p.y(), p.z()}); }

}  // namespace

void MissionConfig::validate() const {
  sim.validate();
  gains.validate();
  link.validate();
  guards.validate();
  const auto bad = [](const char* what) { throw Error(ErrorCode::invalid_argument, what); };
  if (!(takeoff_height > 0)) bad("takeoff_height must be > 0");
  if (!(climb_speed > 0)) bad("climb_speed must be > 0");
  if (!(goto_tolerance > 0)) bad("goto_tolerance must be > 0");
  if (!(telemetry_rate > 0)) bad("telemetry_rate must be > 0");
  if (!(max_duration > 0)) bad("max_duration must be > 0");
}

Mission::Mission(plan::MissionPlan plan, MissionConfig config)
    : plan_(std::move(plan)),
      config_((config.validate(), std::move(config))),
      world_(config_.sim),
      link_(config_.link, config_.sim.seed ^ kLinkSalt),
      controller_(config_.gains) {
  ctl::validate_profile(plan_, config_.gains);
  for (std::size_t i = 0; i < plan_.paths.size(); ++i) {
    if (plan_.paths[i].index != i) throw Error(ErrorCode::invalid_argument, "plan path indices must be dense");
  }
  plan_hash_ = plan::plan_hash(plan_);
  attempts_.assign(plan_.paths.size(), 0);
  world_.enable_trace(config_.trace);
  const geom::Vec2 h = home();
  auto& st = world_.mutable_state();
  st.position = {h.x, config_.gains.wall_distance, h.z};
  st.paint = config_.sim.plant.paint_capacity;
  last_battery_ = st.battery;
  checkpoint_.plan_hash = plan_hash_;
  checkpoint_.position = st.position;
}

geom::Vec2 Mission::home() const {
  if (config_.home) return *config_.home;
  const double z0 = plan_.wall.z0;
  if (plan_.paths.empty()) return {plan_.wall.x0 + plan_.wall.width / 2, z0};
  return {plan::start_anchor_point(plan_.paths, plan_.params.start_anchor).x, z0};
}

const plan::DrawPath& Mission::path_at(std::size_t index) const {
  if (index >= plan_.paths.size()) throw Error(ErrorCode::bad_selection, "path " + std::to_string(index));
  return plan_.paths[index];
}

Eigen::Vector3d Mission::path_start(std::size_t index) const {
  const geom::Vec2 s = path_at(index).start();
  return {s.x, config_.gains.wall_distance, s.z};
}

std::optional<std::size_t> Mission::current_path() const {
  if (queue_pos_ < queue_.size()) return queue_[queue_pos_];
  return std::nullopt;
}

void Mission::emit(Severity s, std::string code, std::string message, json payload) {
  Event e{now_us(), s, std::move(code), std::move(message), std::move(payload)};
  events_.push_back(e);
  if (event_sink_) event_sink_(e);
}

void Mission::set_phase(Phase to) {
  if (to == phase_) return;
  if (!legal_transition(phase_, to)) {
    throw Error(ErrorCode::invalid_argument,
                "illegal phase change " + std::string(to_string(phase_)) + " -> " + std::string(to_string(to)));
  }
  const Phase from = phase_;
  phase_log_.emplace_back(from, to);
  phase_ = to;
  json p = {{"from", to_string(from)}, {"to", to_string(to)}};
  emit(Severity::info, "phase", std::string(to_string(from)) + " -> " + std::string(to_string(to)), std::move(p));
}

void Mission::start(const std::vector<std::size_t>& selection) {
  if (started_) throw Error(ErrorCode::mission_busy, "mission already started");
  std::vector<std::size_t> q = selection;
  std::sort(q.begin(), q.end());
  if (std::adjacent_find(q.begin(), q.end()) != q.end()) throw Error(ErrorCode::bad_selection, "duplicate path");
  for (const auto i : q) path_at(i);
  started_ = true;
  queue_ = std::move(q);
  queue_pos_ = 0;
  allowed_.insert(queue_.begin(), queue_.end());
  mission_start_us_ = now_us();
  next_telemetry_us_ = now_us() + us(1.0 / config_.telemetry_rate);
  refresh_projection();
  if (queue_.empty()) {
    idle_finished_ = true;
    emit(Severity::info, "nothing_to_draw", "selection is empty");
    return;
  }
  emit(Severity::info, "mission_started", std::to_string(queue_.size()) + " paths queued",
       {{"queue", queue_}, {"plan_hash", plan_hash_}});
  world_.mutable_state().airborne = true;
  set_phase(Phase::takeoff);
}

void Mission::resume(const Checkpoint& checkpoint, const std::vector<std::size_t>& selection,
                     const std::optional<sim::PaintRaster>& raster) {
  const auto remaining = checkpoint_restore(checkpoint, plan_, selection);
  if (raster) {
    if (raster->nx() != world_.raster().nx() || raster->nz() != world_.raster().nz()) {
      throw Error(ErrorCode::plan_changed, "checkpoint raster does not match the wall");
    }
    world_.set_raster(*raster);
  }
  checkpoint_.last_completed_index = checkpoint.last_completed_index;
  for (const auto i : selection) {
    if (checkpoint.last_completed_index && i <= *checkpoint.last_completed_index) allowed_.insert(i);
  }
  emit(Severity::info, "resumed", "resuming from checkpoint",
       {{"last_completed_index", checkpoint.last_completed_index ? json(*checkpoint.last_completed_index) : json()},
        {"remaining", remaining}});
  start(remaining);
}

std::vector<std::size_t> Mission::add_eraser(const std::vector<geom::PathChain>& segments, int bg_color) {
  auto added = add_eraser_segments(plan_, segments, bg_color);
  ctl::validate_profile(plan_, config_.gains);
  plan_hash_ = plan::plan_hash(plan_);
  attempts_.resize(plan_.paths.size(), 0);
  for (const auto i : added) {
    allowed_.insert(i);
    if (started_ && !finished()) queue_.push_back(i);
  }
  refresh_projection();
  emit(Severity::info, "eraser_added", std::to_string(added.size()) + " eraser segments", {{"indices", added}});
  return added;
}

void Mission::set_link_outages(link::Source source, std::vector<link::Outage> outages) {
  link_.set_outages(source, std::move(outages));
}

void Mission::refresh_projection() {
  queued_paint_ = 0.0;
  for (std::size_t k = queue_pos_ + 1; k < queue_.size(); ++k) {
    const auto& p = path_at(queue_[k]);
    queued_paint_ += sim::resource_projection(std::span(&p, 1), config_.gains.v_target, config_.sim.plant).paint_g;
  }
}

Telemetry Mission::telemetry() const {
  const auto& s = world_.state();
  Telemetry t;
  t.time_us = s.time_us;
  t.phase = phase_;
  t.position = s.position;
  t.yaw = s.yaw;
  t.battery = s.battery;
  t.paint = s.paint;
  t.valve = s.spray_valve;
  if (phase_ == Phase::drawing) t.path_index = current_path();
  t.link_stale = link_stale_;
  return t;
}

void Mission::ground_station() {
  // The ground camera sees the LEDs; the observation goes out over the link.
  const auto frame = world_.sense();
  last_scan_ = frame.scan.points;
  try {
    const auto triple = ground_tracker_.detect(frame.blobs);
    link::CameraMessage m;
    m.capture_us = static_cast<std::uint64_t>(now_us());
    m.centers = triple.centers;
    link_.send(link::encode_camera(m), now_us());
  } catch (const Error&) {
  }
}

void Mission::drone_receive() {
  const auto now = now_us();
  estimate_fresh_ = false;
  if (const auto sel = link_.poll(now); sel && sel->fresh) {
    try {
      const auto m = link::decode_camera(sel->frame.payload);
      const double t = static_cast<double>(now - episode_start_us_) * kUs;
      const auto fit = loc::ransac_wall_fit(last_scan_, {}, t);
      auto est = loc::fuse_pose(link::to_triple(m), fit, config_.sim.camera, config_.sim.geometry, t);
      est.stamp = static_cast<double>(static_cast<std::int64_t>(m.capture_us) - episode_start_us_) * kUs;
      estimate_ = est;
      estimate_capture_us_ = static_cast<std::int64_t>(m.capture_us);
      estimate_fresh_ = true;
      pose_arrivals_.push_back(now);
    } catch (const Error&) {
    }
  }
  const std::int64_t last = estimate_ ? estimate_capture_us_ : mission_start_us_;
  const bool stale = now - last > us(config_.link.timeout);
  if (stale != link_stale_) {
    link_stale_ = stale;
    if (stale) {
      emit(Severity::warning, "link_stale", "pose stream stale", {{"last_capture_us", last}});
    } else {
      emit(Severity::info, "link_restored", "pose stream restored", {{"gap_us", now - last}});
    }
  }
}

void Mission::check_guards() {
  const auto& s = world_.state();
  const double dt = static_cast<double>(config_.sim.dt_us) * kUs;
  const double rate = (last_battery_ - s.battery) / dt;
  last_battery_ = s.battery;
  drain_rate_ = drain_rate_ == 0.0 ? rate : 0.9 * drain_rate_ + 0.1 * rate;
  if (drain_rate_ > config_.guards.drain_warn && !drain_warned_) {
    drain_warned_ = true;
    emit(Severity::warning, "high_drain", "battery drain above threshold", {{"rate", drain_rate_}});
  } else if (drain_rate_ < 0.8 * config_.guards.drain_warn) {
    drain_warned_ = false;
  }
  if (s.battery < config_.guards.battery_warn && !battery_warned_) {
    battery_warned_ = true;
    emit(Severity::warning, "battery_low", "battery below warning level", {{"battery", s.battery}});
  }

  double need = queued_paint_;
  if (const auto cur = current_path()) {
    const auto& p = path_at(*cur);
    const auto w = p.spray_window;
    double from = w.s_on;
    if (phase_ == Phase::drawing && controller_.active()) from = std::clamp(controller_.track().s, w.s_on, w.s_off);
    need += config_.sim.plant.flow_rate * (w.s_off - from) / config_.gains.v_target;
  }
  LandReason r = guard_decide(s.battery, s.paint, need, manual_land_, config_.guards);
  if (r == LandReason::none && static_cast<double>(now_us() - mission_start_us_) * kUs > config_.max_duration) {
    r = LandReason::timeout;
  }
  if (r != LandReason::none) {
    if (r == LandReason::manual) {
      emit(Severity::info, "land_requested", "manual landing", {{"reason", to_string(r)}});
    } else {
      emit(Severity::critical, "guard_trip", std::string(to_string(r)),
           {{"reason", to_string(r)}, {"battery", s.battery}, {"paint", s.paint}, {"paint_needed", need}});
    }
    begin_landing(r);
  }
}

void Mission::begin_landing(LandReason reason) {
  land_reason_ = reason;
  if (phase_ == Phase::drawing) {
    const bool was_open = world_.state().spray_valve;
    world_.command_valve(now_us(), false);
    if (was_open) emit(Severity::info, "spray_cut", "valve closed for landing");
  }
  set_phase(Phase::landing);
}

void Mission::begin_drawing() {
  const std::size_t idx = *current_path();
  const auto& path = path_at(idx);
  const int attempt = attempts_[idx];
  world_.begin_episode(idx, attempt);
  link_.reseed(sim::episode_seed(config_.sim.seed ^ kLinkSalt, idx, attempt));
  ground_tracker_.reset();
  const geom::Vec2 st = path.start();
  const loc::Pose start{st.x, config_.gains.wall_distance, st.z, 0.0};
  world_.settle_at(start);
  const auto& cap = path.mode == plan::PathMode::fill    ? config_.sim.fill_cap
                    : path.mode == plan::PathMode::erase ? config_.sim.eraser_cap
                                                         : config_.sim.stroke_cap;
  world_.set_paint_target(cap, static_cast<std::uint8_t>(path.color), static_cast<std::int32_t>(idx));
  episode_start_us_ = now_us();
  controller_.begin_path(path, idx, attempt, start, 0);
  track_.emplace(path);
  interrupted_ = false;
  estimate_fresh_ = false;
  set_phase(Phase::drawing);
  emit(Severity::info, "path_started", "path " + std::to_string(idx),
       {{"index", idx}, {"attempt", attempt}, {"mode", plan::to_string(path.mode)}});
}

void Mission::finish_path(bool completed) {
  const std::size_t idx = *current_path();
  if (completed) {
    completed_.insert(idx);
    if (!checkpoint_.last_completed_index || idx > *checkpoint_.last_completed_index) {
      checkpoint_.last_completed_index = idx;
    }
    emit(Severity::info, "path_completed", "path " + std::to_string(idx), {{"index", idx}, {"attempts", attempts_[idx] + 1}});
    save_progress();
  } else {
    emit(Severity::warning, "path_abandoned", "path " + std::to_string(idx) + " given up",
         {{"index", idx}, {"attempts", attempts_[idx] + 1}});
  }
  ++queue_pos_;
  refresh_projection();
  if (queue_pos_ < queue_.size()) {
    set_phase(Phase::travel);
  } else {
    begin_landing(LandReason::none);
  }
}

void Mission::save_progress() {
  checkpoint_.plan_hash = plan_hash_;
  checkpoint_.position = world_.state().position;
  checkpoint_.timestamp_us = now_us();
  if (config_.checkpoint_dir) save_checkpoint(*config_.checkpoint_dir, checkpoint_, world_.raster());
}

sim::Command Mission::drawing_command() {
  const std::int64_t dt = config_.sim.dt_us;
  const std::int64_t rel = now_us() - episode_start_us_;
  sim::Command cmd;
  if (link_stale_) {
    interrupted_ = true;
    const auto out = controller_.step(rel, dt, false);
    for (const auto& v : out.valve) world_.command_valve(v.at_us + episode_start_us_, v.open);
    return cmd;
  }
  const std::size_t idx = *current_path();
  if (interrupted_) {
    ++attempts_[idx];
    emit(Severity::warning, "path_retry", "path " + std::to_string(idx) + " interrupted by link loss",
         {{"index", idx}, {"attempt", attempts_[idx]}, {"reason", "link"}});
    set_phase(Phase::travel);
    return travel_command();
  }
  if (estimate_fresh_ && estimate_capture_us_ >= episode_start_us_) {
    controller_.observe(*estimate_, estimate_capture_us_ - episode_start_us_);
  }
  const auto out = controller_.step(rel, dt, true);
  for (const auto& v : out.valve) world_.command_valve(v.at_us + episode_start_us_, v.open);
  cmd.velocity = {out.cmd.vx, out.cmd.vy, out.cmd.vz};
  cmd.yaw_rate = out.cmd.yaw_rate;
  if (out.spray_decision && *out.spray_decision != ctl::RetryDecision::accept) {
    const double e = out.spray_on_error.value_or(0.0);
    if (*out.spray_decision == ctl::RetryDecision::retry) {
      ++attempts_[idx];
      emit(Severity::warning, "path_retry", "path " + std::to_string(idx) + " off track at spray-on",
           {{"index", idx}, {"attempt", attempts_[idx]}, {"reason", "deviation"}, {"error", e}});
      set_phase(Phase::travel);
    } else {
      finish_path(false);
    }
    return cmd;
  }
  if (controller_.track().done) finish_path(true);
  return cmd;
}

sim::Command Mission::travel_command() {
  sim::Command cmd;
  if (link_stale_ || !estimate_) return cmd;
  const Eigen::Vector3d target = path_start(*current_path());
  const loc::Pose est{estimate_->x, estimate_->y, estimate_->z, estimate_->yaw};
  if ((Eigen::Vector3d(est.x, est.y, est.z) - target).norm() <= config_.goto_tolerance) {
    begin_drawing();
    return drawing_command();
  }
  const auto v = ctl::goto_cmd(est, target, config_.gains);
  cmd.velocity = {v.vx, v.vy, v.vz};
  cmd.yaw_rate = v.yaw_rate;
  return cmd;
}

sim::Command Mission::landing_command() {
  sim::Command cmd;
  const geom::Vec2 h = home();
  if (link_stale_ || !estimate_) {
    cmd.velocity = {0.0, 0.0, -kBlindDescent};
    return cmd;
  }
  const loc::Pose est{estimate_->x, estimate_->y, estimate_->z, estimate_->yaw};
  // Approach above home, then descend vertically aiming below the ground so
  // the speed does not decay to zero at contact.
  const Eigen::Vector3d above{h.x, config_.gains.wall_distance, std::max(est.z, h.z + config_.takeoff_height)};
  if (!descending_ && (Eigen::Vector3d(est.x, est.y, est.z) - above).norm() <= config_.goto_tolerance) descending_ = true;
  const Eigen::Vector3d target = descending_ ? Eigen::Vector3d{h.x, config_.gains.wall_distance, h.z - 0.1} : above;
  const auto v = ctl::goto_cmd(est, target, config_.gains);
  cmd.velocity = {v.vx, v.vy, descending_ ? std::max(v.vz, -config_.climb_speed) : v.vz};
  cmd.yaw_rate = v.yaw_rate;
  return cmd;
}

void Mission::report_spray() {
  const auto& tr = world_.transitions();
  for (; transitions_seen_ < tr.size(); ++transitions_seen_) {
    const auto& t = tr[transitions_seen_];
    emit(Severity::info, t.open ? "spray_on" : "spray_off", t.open ? "valve open" : "valve closed",
         {{"path_index", t.path_index}, {"wall_point", {t.wall_point.x, t.wall_point.z}}, {"time_us", t.time_us}});
  }
  for (auto& w : world_.take_warnings()) emit(Severity::warning, "band_violation", std::move(w));
}

bool Mission::tick() {
  if (!started_ || finished()) return false;
  if (pre_tick_) pre_tick_(*this);
  if (rc_interrupt_) {
    world_.cut_valve();
    emit(Severity::critical, "rc_interrupt", "flight interrupted with RC, program terminated");
    set_phase(Phase::aborted);
    report_spray();
    return false;
  }

  ground_station();
  drone_receive();
  if (phase_ != Phase::landing) check_guards();

  sim::Command cmd;
  switch (phase_) {
    case Phase::takeoff:
      cmd.velocity = {0.0, 0.0, config_.climb_speed};
      if (world_.state().position.z() >= home().z + config_.takeoff_height) {
        set_phase(Phase::goto_start);
        cmd = travel_command();
      }
      break;
    case Phase::goto_start:
    case Phase::travel: cmd = travel_command(); break;
    case Phase::drawing: cmd = drawing_command(); break;
    case Phase::landing: cmd = landing_command(); break;
    default: break;
  }
  if (phase_ == Phase::landing && world_.state().position.z() <= home().z + kTouchdown) {
    auto& s = world_.mutable_state();
    s.position.z() = home().z;
    s.velocity.setZero();
    s.airborne = false;
    world_.cut_valve();
    report_spray();
    save_progress();
    set_phase(Phase::landed);
    emit(Severity::info, "mission_complete", "landed",
         {{"completed", std::vector<std::size_t>(completed_.begin(), completed_.end())},
          {"reason", to_string(land_reason_.value_or(LandReason::none))},
          {"position", pose_json(s.position)}});
    if (telemetry_sink_) telemetry_sink_(telemetry());
    return false;
  }

  world_.step(cmd);
  if (world_.state().spray_valve && track_) {
    const auto hit = sim::nozzle_hit(world_.state().pose(), config_.sim.geometry).point;
    spray_errors_.push_back(track_->project(hit).normal_error);
  }
  report_spray();
  if (now_us() >= next_telemetry_us_) {
    next_telemetry_us_ += us(1.0 / config_.telemetry_rate);
    if (telemetry_sink_) telemetry_sink_(telemetry());
  }
  return true;
}

void Mission::run() {
  while (tick()) {
  }
}

}  // namespace mural::mission
