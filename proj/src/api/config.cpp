#include <toml.hpp>

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "mural/error.hpp"
#include "mural/service.hpp"

namespace mural::service {

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::invalid_argument, "config: " + what); }

/// Reads one table; every key must be consumed.
class Section {
 public:
  Section(const toml::table* t, std::string name) : t_(t), name_(std::move(name)) {}

  bool present() const { return t_ != nullptr; }

  void num(const char* key, double& out) {
    if (const auto* n = node(key)) {
      const auto v = n->value<double>();
      if (!v) bad(name_ + "." + key + " must be a number");
      out = *v;
    }
  }
  void integer(const char* key, std::int64_t& out) {
    if (const auto* n = node(key)) {
      const auto v = n->value<std::int64_t>();
      if (!v) bad(name_ + "." + key + " must be an integer");
      out = *v;
    }
  }
  void integer(const char* key, int& out) {
    std::int64_t v = out;
    integer(key, v);
    out = static_cast<int>(v);
  }
  void boolean(const char* key, bool& out) {
    if (const auto* n = node(key)) {
      const auto v = n->value<bool>();
      if (!v) bad(name_ + "." + key + " must be a boolean");
      out = *v;
    }
  }
  std::optional<std::string> str(const char* key) {
    if (const auto* n = node(key)) {
      const auto v = n->value<std::string>();
      if (!v) bad(name_ + "." + key + " must be a string");
      return *v;
    }
    return std::nullopt;
  }
  std::optional<std::vector<double>> vec(const char* key, std::size_t n) {
    const auto* nd = node(key);
    if (!nd) return std::nullopt;
    const auto* a = nd->as_array();
    if (!a || a->size() != n) bad(name_ + "." + key + " must be an array of " + std::to_string(n) + " numbers");
    std::vector<double> out;
    for (const auto& e : *a) {
      const auto v = e.value<double>();
      if (!v) bad(name_ + "." + key + " must hold numbers");
      out.push_back(*v);
    }
    return out;
  }
  Section sub(const char* key) {
    const auto* n = node(key);
    if (!n) return {nullptr, name_ + "." + key};
    if (!n->is_table()) bad(name_ + "." + key + " must be a table");
    return {n->as_table(), name_ + "." + key};
  }
  void finish() const {
    if (!t_) return;
    for (const auto& [k, v] : *t_) {
      if (!seen_.count(std::string(k.str()))) bad("unknown key " + name_ + "." + std::string(k.str()));
    }
  }

 private:
  const toml::node* node(const char* key) {
    seen_.insert(key);
    return t_ ? t_->get(key) : nullptr;
  }

  const toml::table* t_;
  std::string name_;
  std::set<std::string> seen_;
};

std::string read_file(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw Error(ErrorCode::io_error, "cannot open " + p.string());
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

void read_channel(Section s, link::ChannelConfig& c) {
  s.num("latency", c.latency_mean);
  s.num("jitter", c.latency_jitter);
  s.num("drop", c.drop_prob);
  s.num("bandwidth", c.bandwidth);
  s.finish();
}

}  // namespace

ServiceConfig load_config(std::string_view toml_text, const std::filesystem::path& base_dir) {
  toml::table root;
  try {
    root = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    throw Error(ErrorCode::parse_error, std::string("config: ") + std::string(e.description()));
  }
  const std::set<std::string> known{"wall", "camera", "lidar", "controller", "sim", "link", "guards", "plan", "mission"};
  for (const auto& [k, v] : root) {
    if (!known.count(std::string(k.str()))) bad("unknown section [" + std::string(k.str()) + "]");
    if (!v.is_table()) bad("[" + std::string(k.str()) + "] must be a table");
  }
  const auto section = [&](const char* name) { return Section(root[name].as_table(), name); };

  ServiceConfig cfg;
  auto& m = cfg.mission;
  auto& sim = m.sim;

  {
    auto s = section("wall");
    s.num("x0", cfg.wall.x0);
    s.num("z0", cfg.wall.z0);
    s.num("width", cfg.wall.width);
    s.num("height", cfg.wall.height);
    s.finish();
    sim.wall = cfg.wall;
  }
  {
    auto s = section("camera");
    if (const auto file = s.str("calibration")) {
      std::filesystem::path p(*file);
      if (p.is_relative()) p = base_dir / p;
      sim.camera = loc::calibration_from_json(read_file(p)).calibration.camera;
    } else {
      loc::Intrinsics k = sim.camera.intrinsics;
      s.num("fx", k.fx);
      s.num("fy", k.fy);
      s.num("cx", k.cx);
      s.num("cy", k.cy);
      s.integer("width", k.width);
      s.integer("height", k.height);
      k.validate();
      const auto eye = s.vec("eye", 3);
      const auto target = s.vec("target", 3);
      if (eye || target) {
        if (!eye || !target) bad("camera.eye and camera.target go together");
        sim.camera = loc::CameraModel::look_at({(*eye)[0], (*eye)[1], (*eye)[2]},
                                               {(*target)[0], (*target)[1], (*target)[2]}, k);
      } else {
        sim.camera.intrinsics = k;
      }
    }
    s.num("pixel_sigma", sim.noise.pixel_sigma);
    s.integer("distractors", sim.noise.distractors);
    s.finish();
  }
  {
    auto s = section("lidar");
    s.num("sigma", sim.noise.lidar_sigma);
    s.num("outlier_fraction", sim.noise.outlier_fraction);
    s.num("resolution_deg", sim.noise.lidar_resolution_deg);
    s.num("range_min", sim.noise.range_min);
    s.num("range_max", sim.noise.range_max);
    s.finish();
  }
  {
    auto s = section("controller");
    auto& g = m.gains;
    s.num("kp_n", g.kp_n);
    s.num("kd_n", g.kd_n);
    s.num("kp_y", g.kp_y);
    s.num("kd_y", g.kd_y);
    s.num("v_target", g.v_target);
    s.num("a_max", g.a_max);
    s.num("servo_delay", g.servo_delay);
    s.num("v_sat", g.v_sat);
    s.num("k_yaw", g.k_yaw);
    s.num("retry_threshold", g.retry_threshold);
    s.integer("max_retries", g.max_retries);
    s.num("ema_alpha", g.ema_alpha);
    s.num("wall_distance", g.wall_distance);
    s.num("plant_tau", g.plant_tau);
    s.num("obs_gain", g.obs_gain);
    s.num("obs_gain_bias", g.obs_gain_bias);
    s.num("pose_timeout", g.pose_timeout);
    s.num("travel_speed", g.travel_speed);
    s.num("travel_kp", g.travel_kp);
    s.finish();
  }
  {
    auto s = section("sim");
    double dt = static_cast<double>(sim.dt_us) * 1e-6;
    s.num("dt", dt);
    if (!(dt > 0 && dt <= 0.1)) bad("sim.dt must be in (0, 0.1]");
    sim.dt_us = std::llround(dt * 1e6);
    std::int64_t seed = static_cast<std::int64_t>(sim.seed);
    s.integer("seed", seed);
    if (seed < 0) bad("sim.seed must be >= 0");
    sim.seed = static_cast<std::uint64_t>(seed);
    s.num("cell", sim.cell);
    s.num("spray_delay", sim.spray_delay);
    s.num("tau_v", sim.plant.tau_v);
    s.num("wind_coupling", sim.plant.wind_coupling);
    s.num("battery_base_rate", sim.plant.battery_base_rate);
    s.num("battery_thrust_rate", sim.plant.battery_thrust_rate);
    s.num("flow_rate", sim.plant.flow_rate);
    s.num("paint_capacity", sim.plant.paint_capacity);
    if (const auto w = s.vec("wind_steady", 3)) sim.wind.steady = {(*w)[0], (*w)[1], (*w)[2]};
    s.num("gust_sigma", sim.wind.gust_sigma);
    s.num("gust_tau", sim.wind.gust_tau);
    double stroke = sim.stroke_cap.width;
    double fill_w = sim.fill_cap.width;
    double fill_h = sim.fill_cap.height;
    double eraser = sim.eraser_cap.width;
    s.num("stroke_width", stroke);
    s.num("fill_width", fill_w);
    s.num("fill_height", fill_h);
    s.num("eraser_width", eraser);
    sim.stroke_cap = sim::SprayCap::thin(stroke);
    sim.fill_cap = sim::SprayCap::flat_wide(fill_w, fill_h);
    sim.eraser_cap = sim::SprayCap::thin(eraser);
    s.num("band_min", sim.band.min);
    s.num("band_max", sim.band.max);
    s.finish();
  }
  {
    auto s = section("link");
    if (const auto key = s.str("key")) m.link.key.assign(key->begin(), key->end());
    s.num("backup_period", m.link.backup_period);
    s.num("timeout", m.link.timeout);
    read_channel(s.sub("primary"), m.link.primary);
    read_channel(s.sub("backup"), m.link.backup);
    s.finish();
  }
  {
    auto s = section("guards");
    s.num("battery_min", m.guards.battery_min);
    s.num("paint_reserve", m.guards.paint_reserve);
    s.num("battery_warn", m.guards.battery_warn);
    s.num("drain_warn", m.guards.drain_warn);
    s.finish();
  }
  {
    auto s = section("plan");
    auto& p = cfg.plan;
    double join_deg = p.join_angle_max * 180.0 / std::numbers::pi;
    s.num("join_angle_max_deg", join_deg);
    p.join_angle_max = join_deg * std::numbers::pi / 180.0;
    s.num("min_path_len", p.min_path_len);
    s.num("extension_len", p.extension_len);
    s.num("infill_spacing", p.infill_spacing);
    s.num("infill_min_gap", p.infill_min_gap);
    s.num("rank_z_weight", p.rank_z_weight);
    s.num("target_speed", p.target_speed);
    if (const auto a = s.str("start_anchor")) p.start_anchor = plan::start_anchor_from_string(*a);
    s.finish();
  }
  {
    auto s = section("mission");
    s.num("takeoff_height", m.takeoff_height);
    s.num("climb_speed", m.climb_speed);
    s.num("goto_tolerance", m.goto_tolerance);
    s.num("telemetry_rate", m.telemetry_rate);
    s.num("max_duration", m.max_duration);
    if (const auto h = s.vec("home", 2)) m.home = geom::Vec2{(*h)[0], (*h)[1]};
    if (const auto d = s.str("checkpoint_dir")) {
      std::filesystem::path p(*d);
      if (p.is_relative()) p = base_dir / p;
      m.checkpoint_dir = p;
    }
    s.boolean("trace", m.trace);
    s.num("realtime_factor", cfg.realtime_factor);
    if (const auto h = s.str("host")) cfg.host = *h;
    s.integer("port", cfg.port);
    std::int64_t cap = static_cast<std::int64_t>(cfg.subscriber_capacity);
    s.integer("subscriber_capacity", cap);
    if (cap <= 0) bad("mission.subscriber_capacity must be > 0");
    cfg.subscriber_capacity = static_cast<std::size_t>(cap);
    s.finish();
  }
  if (cfg.realtime_factor < 0) bad("mission.realtime_factor must be >= 0");
  if (cfg.port < 0 || cfg.port > 65535) bad("mission.port out of range");
  m.validate();
  cfg.plan.validate();
  return cfg;
}

ServiceConfig load_config_file(const std::filesystem::path& path) {
  return load_config(read_file(path), path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

}  // namespace mural::service
