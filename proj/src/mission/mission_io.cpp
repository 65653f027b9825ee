#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "mural/error.hpp"
#include "mural/mission.hpp"

namespace mural::mission {

using nlohmann::json;

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::idle: return "idle";
    case Phase::takeoff: return "takeoff";
    case Phase::goto_start: return "goto";
    case Phase::drawing: return "drawing";
    case Phase::travel: return "travel";
    case Phase::landing: return "landing";
    case Phase::landed: return "landed";
    case Phase::aborted: return "aborted";
  }
  return "?";
}

bool terminal(Phase p) { return p == Phase::landed || p == Phase::aborted; }

bool legal_transition(Phase from, Phase to) {
  if (terminal(from)) return false;
  if (to == Phase::aborted) return true;
  const bool airborne = from == Phase::takeoff || from == Phase::goto_start || from == Phase::drawing ||
                        from == Phase::travel;
  switch (to) {
    case Phase::takeoff: return from == Phase::idle;
    case Phase::goto_start: return from == Phase::takeoff;
    case Phase::drawing: return from == Phase::goto_start || from == Phase::travel;
    case Phase::travel: return from == Phase::drawing;
    case Phase::landing: return airborne;
    case Phase::landed: return from == Phase::landing;
    default: return false;
  }
}

std::string_view to_string(Severity s) {
  switch (s) {
    case Severity::info: return "info";
    case Severity::warning: return "warning";
    case Severity::critical: return "critical";
  }
  return "?";
}

std::string_view to_string(LandReason r) {
  switch (r) {
    case LandReason::none: return "none";
    case LandReason::low_battery: return "low_battery";
    case LandReason::paint_runoff: return "paint_runoff";
    case LandReason::manual: return "manual";
    case LandReason::timeout: return "timeout";
  }
  return "?";
}

json to_json(const Event& e) {
  return {{"v", 1},         {"kind", "event"},  {"time", static_cast<double>(e.time_us) * 1e-6},
          {"time_us", e.time_us}, {"severity", to_string(e.severity)}, {"code", e.code},
          {"message", e.message}, {"payload", e.payload}};
}

Event event_from_json(const json& j) {
  try {
    Event e;
    e.time_us = j.at("time_us").get<std::int64_t>();
    const auto sev = j.at("severity").get<std::string>();
    if (sev == "info") {
      e.severity = Severity::info;
    } else if (sev == "warning") {
      e.severity = Severity::warning;
    } else if (sev == "critical") {
      e.severity = Severity::critical;
    } else {
      throw Error(ErrorCode::parse_error, "unknown severity " + sev);
    }
    e.code = j.at("code").get<std::string>();
    e.message = j.at("message").get<std::string>();
    e.payload = j.value("payload", json::object());
    return e;
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::parse_error, std::string("event: ") + ex.what());
  }
}

std::string events_jsonl(const std::vector<Event>& events) {
  std::string out;
  for (const auto& e : events) out += to_json(e).dump() + "\n";
  return out;
}

std::vector<Event> events_from_jsonl(std::string_view text) {
  std::vector<Event> out;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(event_from_json(json::parse(line)));
    } catch (const json::exception& ex) {
      throw Error(ErrorCode::parse_error, std::string("event line: ") + ex.what());
    }
  }
  return out;
}

json to_json(const Telemetry& t) {
  json j = {{"v", 1},
            {"kind", "telemetry"},
            {"time", static_cast<double>(t.time_us) * 1e-6},
            {"time_us", t.time_us},
            {"phase", to_string(t.phase)},
            {"position", {t.position.x(), t.position.y(), t.position.z()}},
            {"yaw", t.yaw},
            {"battery", t.battery},
            {"paint", t.paint},
            {"valve", t.valve},
            {"link_stale", t.link_stale}};
  j["path_index"] = t.path_index ? json(*t.path_index) : json(nullptr);
  return j;
}

std::vector<std::size_t> select_paths(const plan::MissionPlan& plan, const SelectionSpec& spec) {
  const std::size_t n = plan.paths.size();
  std::vector<std::size_t> out;
  if (spec.range) {
    const auto [a, b] = *spec.range;
    if (a > b || b > n) {
      throw Error(ErrorCode::bad_selection,
                  "range " + std::to_string(a) + ".." + std::to_string(b) + " outside 0.." + std::to_string(n));
    }
    for (std::size_t i = a; i < b; ++i) out.push_back(i);
  }
  for (const auto i : spec.ids) {
    if (i >= n) throw Error(ErrorCode::bad_selection, "path " + std::to_string(i) + " not in plan of " + std::to_string(n));
    out.push_back(i);
  }
  std::sort(out.begin(), out.end());
  if (std::adjacent_find(out.begin(), out.end()) != out.end()) {
    throw Error(ErrorCode::bad_selection, "duplicate path in selection");
  }
  return out;
}

std::vector<std::size_t> select_all(const plan::MissionPlan& plan) {
  std::vector<std::size_t> out(plan.paths.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = i;
  return out;
}

void GuardConfig::validate() const {
  if (!(battery_min >= 0 && battery_min <= 1)) throw Error(ErrorCode::invalid_argument, "battery_min in [0, 1]");
  if (!(battery_warn >= 0 && battery_warn <= 1)) throw Error(ErrorCode::invalid_argument, "battery_warn in [0, 1]");
  if (!(paint_reserve >= 0)) throw Error(ErrorCode::invalid_argument, "paint_reserve must be >= 0");
  if (!(drain_warn > 0)) throw Error(ErrorCode::invalid_argument, "drain_warn must be > 0");
}

LandReason guard_decide(double battery, double paint_remaining, double paint_needed, bool manual_land,
                        const GuardConfig& cfg) {
  if (battery < cfg.battery_min) return LandReason::low_battery;
  if (paint_needed > paint_remaining - cfg.paint_reserve) return LandReason::paint_runoff;
  if (manual_land) return LandReason::manual;
  return LandReason::none;
}

LandReason guard_check(const sim::DroneState& state, std::span<const plan::DrawPath> remaining,
                       const GuardConfig& cfg, double v_target, const sim::PlantParams& plant, bool manual_land) {
  const double need = sim::resource_projection(remaining, v_target, plant).paint_g;
  return guard_decide(state.battery, state.paint, need, manual_land, cfg);
}

std::string checkpoint_to_json(const Checkpoint& c) {
  json j = {{"plan_hash", c.plan_hash},
            {"position", {c.position.x(), c.position.y(), c.position.z()}},
            {"timestamp", static_cast<double>(c.timestamp_us) * 1e-6},
            {"timestamp_us", c.timestamp_us}};
  j["last_completed_index"] = c.last_completed_index ? json(*c.last_completed_index) : json(nullptr);
  return j.dump(2);
}

Checkpoint checkpoint_from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    Checkpoint c;
    c.plan_hash = j.at("plan_hash").get<std::string>();
    const auto& last = j.at("last_completed_index");
    if (!last.is_null()) c.last_completed_index = last.get<std::size_t>();
    const auto& p = j.at("position");
    if (!p.is_array() || p.size() != 3) throw Error(ErrorCode::parse_error, "checkpoint position must be [x, y, z]");
    c.position = {p[0].get<double>(), p[1].get<double>(), p[2].get<double>()};
    c.timestamp_us = j.contains("timestamp_us") ? j.at("timestamp_us").get<std::int64_t>()
                                                : std::llround(j.at("timestamp").get<double>() * 1e6);
    return c;
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::parse_error, std::string("checkpoint: ") + ex.what());
  }
}

std::vector<std::size_t> checkpoint_restore(const Checkpoint& c, const plan::MissionPlan& plan,
                                            const std::vector<std::size_t>& selection) {
  const std::string h = plan::plan_hash(plan);
  if (c.plan_hash != h) throw Error(ErrorCode::plan_changed, "checkpoint plan " + c.plan_hash + " != loaded " + h);
  std::vector<std::size_t> out;
  for (const auto i : selection) {
    if (i >= plan.paths.size()) throw Error(ErrorCode::bad_selection, "path " + std::to_string(i) + " not in plan");
    if (!c.last_completed_index || i > *c.last_completed_index) out.push_back(i);
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

void write_atomic(const std::filesystem::path& path, const void* data, std::size_t n) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw Error(ErrorCode::io_error, "cannot open " + tmp);
    f.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!f) throw Error(ErrorCode::io_error, "write failed: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::io_error, "rename " + tmp + ": " + ec.message());
}

std::string read_all(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::io_error, "cannot open " + path.string());
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& c, const sim::PaintRaster& raster) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::io_error, "create " + dir.string() + ": " + ec.message());
  const auto r = sim::serialize_raster(raster);
  write_atomic(dir / "raster.mrst", r.data(), r.size());
  const auto j = checkpoint_to_json(c);
  write_atomic(dir / "checkpoint.json", j.data(), j.size());
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) { return checkpoint_from_json(read_all(dir / "checkpoint.json")); }

std::optional<sim::PaintRaster> load_checkpoint_raster(const std::filesystem::path& dir) {
  const auto p = dir / "raster.mrst";
  if (!std::filesystem::exists(p)) return std::nullopt;
  const auto s = read_all(p);
  return sim::deserialize_raster(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

std::vector<std::size_t> add_eraser_segments(plan::MissionPlan& plan, const std::vector<geom::PathChain>& segments,
                                             int bg_color) {
  const auto& w = plan.wall;
  const auto inside = [&](geom::Vec2 p) {
    constexpr double eps = 1e-9;
    return p.x >= w.x0 - eps && p.x <= w.x0 + w.width + eps && p.z >= w.z0 - eps && p.z <= w.z0 + w.height + eps;
  };
  for (const auto& seg : segments) {
    if (seg.length() <= 0) throw Error(ErrorCode::bad_geometry, "empty eraser segment");
    for (const auto p : geom::sample_path(seg, 0.005)) {
      if (!inside(p)) throw Error(ErrorCode::bad_geometry, "eraser segment leaves the wall");
    }
  }
  if (bg_color < 0 || bg_color > 255) throw Error(ErrorCode::bad_geometry, "background colour out of range");
  std::vector<std::size_t> added;
  for (const auto& seg : segments) {
    plan::DrawPath p = plan::extend_path(seg, plan.params.extension_len);
    p.color = bg_color;
    p.mode = plan::PathMode::erase;
    p.index = plan.paths.size();
    p.origin = p.index;
    p.source_id = "eraser";
    added.push_back(p.index);
    plan.paths.push_back(std::move(p));
  }
  return added;
}

}  // namespace mural::mission
