#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mural/ctl.hpp"
#include "mural/link.hpp"
#include "mural/loc.hpp"
#include "mural/plan.hpp"
#include "mural/sim.hpp"

namespace mural::mission {

enum class Phase { idle, takeoff, goto_start, drawing, travel, landing, landed, aborted };

std::string_view to_string(Phase p);
/// idle->takeoff->goto->(drawing<->travel)*->landing->landed, landing from
/// any airborne phase, aborted from any non-terminal phase.
bool legal_transition(Phase from, Phase to);
bool terminal(Phase p);

enum class Severity { info, warning, critical };
std::string_view to_string(Severity s);

struct Event {
  std::int64_t time_us = 0;
  Severity severity = Severity::info;
  std::string code;
  std::string message;
  nlohmann::json payload = nlohmann::json::object();
};

nlohmann::json to_json(const Event& e);
Event event_from_json(const nlohmann::json& j);
/// One JSON object per line.
std::string events_jsonl(const std::vector<Event>& events);
std::vector<Event> events_from_jsonl(std::string_view text);

struct Telemetry {
  std::int64_t time_us = 0;
  Phase phase = Phase::idle;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  double yaw = 0.0;
  double battery = 0.0;
  double paint = 0.0;
  bool valve = false;
  std::optional<std::size_t> path_index;
  bool link_stale = false;
};

nlohmann::json to_json(const Telemetry& t);

// ---- selection ----

struct SelectionSpec {
  /// Half-open index range [first, last).
  std::optional<std::pair<std::size_t, std::size_t>> range;
  /// Explicit ids, in any order.
  std::vector<std::size_t> ids;
};

/// Plan order, duplicates rejected. Throws BadSelection. An empty spec
/// selects nothing.
std::vector<std::size_t> select_paths(const plan::MissionPlan& plan, const SelectionSpec& spec);
std::vector<std::size_t> select_all(const plan::MissionPlan& plan);

// ---- guards ----

struct GuardConfig {
  double battery_min = 0.15;
  double paint_reserve = 20.0;
  /// Warning only.
  double battery_warn = 0.25;
  /// Battery drain warning threshold, fraction per second.
  double drain_warn = 0.003;

  void validate() const;
};

enum class LandReason { none, low_battery, paint_runoff, manual, timeout };
std::string_view to_string(LandReason r);

LandReason guard_decide(double battery, double paint_remaining, double paint_needed, bool manual_land,
                        const GuardConfig& cfg);
/// Projection over the remaining paths at v_target.
LandReason guard_check(const sim::DroneState& state, std::span<const plan::DrawPath> remaining,
                       const GuardConfig& cfg, double v_target, const sim::PlantParams& plant, bool manual_land);

// ---- checkpoint ----

struct Checkpoint {
  std::string plan_hash;
  std::optional<std::size_t> last_completed_index;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  std::int64_t timestamp_us = 0;
};

std::string checkpoint_to_json(const Checkpoint& c);
/// Throws ParseError.
Checkpoint checkpoint_from_json(std::string_view text);
/// Selection minus indices up to the last completed one. Throws PlanChanged.
std::vector<std::size_t> checkpoint_restore(const Checkpoint& c, const plan::MissionPlan& plan,
                                            const std::vector<std::size_t>& selection);

/// checkpoint.json and raster.mrst in `dir`, each written via rename.
void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& c, const sim::PaintRaster& raster);
Checkpoint load_checkpoint(const std::filesystem::path& dir);
std::optional<sim::PaintRaster> load_checkpoint_raster(const std::filesystem::path& dir);

// ---- eraser ----

/// Extends each segment and appends it with colour bg_color, mode erase and
/// the next free indices, in the given order. Throws BadGeometry when a
/// segment leaves the wall.
std::vector<std::size_t> add_eraser_segments(plan::MissionPlan& plan, const std::vector<geom::PathChain>& segments,
                                             int bg_color = 0);

// ---- mission ----

struct MissionConfig {
  sim::SimConfig sim;
  ctl::ControllerGains gains;
  link::LinkConfig link;
  GuardConfig guards;
  /// Ground position (x, z) for takeoff and landing; defaults to the plan's
  /// start anchor at z = wall.z0.
  std::optional<geom::Vec2> home;
  double takeoff_height = 0.5;
  double climb_speed = 0.5;
  /// Travel target reached, metres.
  double goto_tolerance = 0.03;
  double telemetry_rate = 10.0;
  /// Guard against missions that never finish, s of sim time.
  double max_duration = 3600.0;
  std::optional<std::filesystem::path> checkpoint_dir;
  bool trace = false;

  /// Throws InvalidArgument.
  void validate() const;
};

using EventSink = std::function<void(const Event&)>;
using TelemetrySink = std::function<void(const Telemetry&)>;

/// Deterministic tick-driven mission. Not thread-safe; see MissionService.
class Mission {
 public:
  /// Throws InfeasibleProfile and InvalidArgument up front.
  Mission(plan::MissionPlan plan, MissionConfig config);

  void set_event_sink(EventSink sink) { event_sink_ = std::move(sink); }
  void set_telemetry_sink(TelemetrySink sink) { telemetry_sink_ = std::move(sink); }

  /// Starts with the selection in plan order; an empty one only emits
  /// nothing_to_draw. Throws MissionBusy when already started.
  void start(const std::vector<std::size_t>& selection);
  /// Continues from a checkpoint: selection minus completed, raster restored.
  void resume(const Checkpoint& checkpoint, const std::vector<std::size_t>& selection,
              const std::optional<sim::PaintRaster>& raster);

  /// One dt. Returns false once the mission is over.
  bool tick();
  /// Ticks until over.
  void run();

  void request_land() { manual_land_ = true; }
  void rc_interrupt() { rc_interrupt_ = true; }
  /// Appends eraser paths to the plan and the end of the queue.
  std::vector<std::size_t> add_eraser(const std::vector<geom::PathChain>& segments, int bg_color = 0);
  /// Primary/backup outages in absolute sim time.
  void set_link_outages(link::Source source, std::vector<link::Outage> outages);
  /// Runs before each tick's control (test and scenario hooks).
  void set_pre_tick(std::function<void(Mission&)> hook) { pre_tick_ = std::move(hook); }

  Phase phase() const { return phase_; }
  bool started() const { return started_; }
  bool finished() const { return started_ && (terminal(phase_) || idle_finished_); }
  const std::vector<Event>& events() const { return events_; }
  const std::vector<std::pair<Phase, Phase>>& transitions() const { return phase_log_; }
  const Checkpoint& checkpoint() const { return checkpoint_; }
  const sim::World& world() const { return world_; }
  sim::World& world() { return world_; }
  const plan::MissionPlan& plan() const { return plan_; }
  const std::vector<std::size_t>& queue() const { return queue_; }
  std::optional<std::size_t> current_path() const;
  const std::set<std::size_t>& completed() const { return completed_; }
  const std::set<std::size_t>& painted_allowed() const { return allowed_; }
  std::int64_t now_us() const { return world_.state().time_us; }
  bool link_stale() const { return link_stale_; }
  /// Sim times at which a fresh fused pose reached the drone.
  const std::vector<std::int64_t>& pose_arrivals() const { return pose_arrivals_; }
  /// Tracking error of the true spray point while the valve is open.
  const std::vector<double>& spray_errors() const { return spray_errors_; }
  std::optional<LandReason> land_reason() const { return land_reason_; }
  const MissionConfig& config() const { return config_; }
  Telemetry telemetry() const;

 private:
  void emit(Severity s, std::string code, std::string message, nlohmann::json payload = nlohmann::json::object());
  void set_phase(Phase to);
  void ground_station();
  void drone_receive();
  void check_guards();
  void begin_landing(LandReason reason);
  void begin_drawing();
  void finish_path(bool completed);
  void start_travel();
  sim::Command drawing_command();
  sim::Command travel_command();
  sim::Command landing_command();
  void save_progress();
  void report_spray();
  void refresh_projection();
  geom::Vec2 home() const;
  const plan::DrawPath& path_at(std::size_t index) const;
  Eigen::Vector3d path_start(std::size_t index) const;

  plan::MissionPlan plan_;
  MissionConfig config_;
  std::string plan_hash_;
  sim::World world_;
  link::DualLink link_;
  ctl::Controller controller_;
  std::optional<ctl::PathTrack> track_;
  loc::LedTracker ground_tracker_;

  Phase phase_ = Phase::idle;
  bool started_ = false;
  bool idle_finished_ = false;
  std::vector<std::size_t> queue_;
  std::size_t queue_pos_ = 0;
  std::set<std::size_t> completed_;
  std::set<std::size_t> allowed_;
  std::vector<int> attempts_;
  Checkpoint checkpoint_;

  bool manual_land_ = false;
  bool rc_interrupt_ = false;
  std::optional<LandReason> land_reason_;
  bool descending_ = false;

  std::int64_t episode_start_us_ = 0;
  bool interrupted_ = false;
  std::int64_t mission_start_us_ = 0;

  std::vector<Eigen::Vector2d> last_scan_;
  std::optional<loc::PoseEstimate> estimate_;
  std::int64_t estimate_capture_us_ = 0;
  bool estimate_fresh_ = false;
  bool link_stale_ = false;
  std::vector<std::int64_t> pose_arrivals_;

  double queued_paint_ = 0.0;
  bool battery_warned_ = false;
  bool drain_warned_ = false;
  double drain_rate_ = 0.0;
  double last_battery_ = 1.0;

  std::size_t transitions_seen_ = 0;
  std::int64_t next_telemetry_us_ = 0;
  std::vector<double> spray_errors_;

  std::vector<Event> events_;
  std::vector<std::pair<Phase, Phase>> phase_log_;
  EventSink event_sink_;
  TelemetrySink telemetry_sink_;
  std::function<void(Mission&)> pre_tick_;
};

}  // namespace mural::mission
