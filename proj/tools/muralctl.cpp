#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include "mural/error.hpp"
#include "mural/service.hpp"

#include <httplib.h>

using namespace mural;

namespace {

std::string read_text(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw Error(ErrorCode::io_error, "cannot open " + p.string());
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

void write_bytes(const std::filesystem::path& p, std::string_view data) {
  std::ofstream f(p, std::ios::binary);
  if (!f || !f.write(data.data(), static_cast<std::streamsize>(data.size()))) {
    throw Error(ErrorCode::io_error, "cannot write " + p.string());
  }
}

std::vector<double> split_numbers(const std::string& s, std::size_t n, const char* what) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorCode::invalid_argument, std::string(what) + ": bad number \"" + item + "\"");
    }
  }
  if (out.size() != n) throw Error(ErrorCode::invalid_argument, std::string(what) + ": expected " + std::to_string(n) + " numbers");
  return out;
}

service::ServiceConfig config_or_default(const std::string& path) {
  return path.empty() ? service::ServiceConfig{} : service::load_config_file(path);
}

plan::MissionPlan load_any_plan(const std::filesystem::path& p, const service::ServiceConfig& cfg) {
  const auto text = read_text(p);
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '<') return plan::compile_svg(text, cfg.wall, cfg.plan);
  return plan::from_json_text(text);
}

std::atomic<httplib::Server*> g_server{nullptr};

void on_signal(int) {
  if (auto* s = g_server.load()) s->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Plan, simulate and serve wall-painting drone missions"};
  app.require_subcommand(1);

  std::string config_path;

  auto* plan_cmd = app.add_subcommand("plan", "Compile an SVG into a mission plan");
  std::string svg_path;
  std::string wall_rect;
  std::string plan_out = "plan.mplan.json";
  plan_cmd->add_option("svg", svg_path, "Input SVG")->required()->check(CLI::ExistingFile);
  plan_cmd->add_option("--wall-rect", wall_rect, "x0,z0,width,height in metres");
  plan_cmd->add_option("-o,--output", plan_out, "Output .mplan.json");
  plan_cmd->add_option("--config", config_path, "TOML config for [wall] and [plan]");

  auto* sim_cmd = app.add_subcommand("simulate", "Fly a plan in the simulator");
  std::string sim_plan;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string wind;
  double gust = -1.0;
  std::string range;
  std::vector<std::size_t> ids;
  std::string out_dir = "sim_out";
  bool resume = false;
  sim_cmd->add_option("plan", sim_plan, "Plan (.mplan.json or .svg)")->required()->check(CLI::ExistingFile);
  sim_cmd->add_option("--seed", seed, "Simulation seed")->each([&](const std::string&) { seed_set = true; });
  sim_cmd->add_option("--wind", wind, "Steady wind vx,vy,vz in m/s");
  sim_cmd->add_option("--gust", gust, "Gust standard deviation, m/s");
  sim_cmd->add_option("--range", range, "Half-open path index range first,last");
  sim_cmd->add_option("--ids", ids, "Explicit path indices");
  sim_cmd->add_option("--out", out_dir, "Directory for raster.png, trace.csv, events.jsonl and the checkpoint");
  sim_cmd->add_flag("--resume", resume, "Continue from the checkpoint in --out");
  sim_cmd->add_option("--config", config_path, "TOML config");

  auto* serve_cmd = app.add_subcommand("serve", "Run the mission service over HTTP");
  std::string serve_plan;
  std::string host;
  int port = -1;
  serve_cmd->add_option("--config", config_path, "TOML config")->check(CLI::ExistingFile);
  serve_cmd->add_option("--plan", serve_plan, "Plan to preload")->check(CLI::ExistingFile);
  serve_cmd->add_option("--host", host, "Listen address");
  serve_cmd->add_option("--port", port, "Listen port");

  auto* cal_cmd = app.add_subcommand("calibrate", "Solve the camera pose from wall correspondences");
  std::string corr_path;
  std::string cal_out;
  cal_cmd->add_option("correspondences", corr_path, "Correspondences JSON")->required()->check(CLI::ExistingFile);
  cal_cmd->add_option("-o,--output", cal_out, "Write the calibration file here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*plan_cmd) {
      auto cfg = config_or_default(config_path);
      if (!wall_rect.empty()) {
        const auto w = split_numbers(wall_rect, 4, "--wall-rect");
        cfg.wall = {w[0], w[1], w[2], w[3]};
      }
      const auto p = plan::compile_svg(read_text(svg_path), cfg.wall, cfg.plan);
      plan::save_plan(p, plan_out);
      std::size_t strokes = 0;
      for (const auto& d : p.paths) strokes += d.mode == plan::PathMode::stroke;
      std::cout << p.paths.size() << " paths (" << strokes << " strokes, " << p.paths.size() - strokes
                << " infill) -> " << plan_out << "\n";
      for (const auto& w : p.warnings) std::cerr << "warning: " << w << "\n";
      return 0;
    }

    if (*sim_cmd) {
      auto cfg = config_or_default(config_path);
      auto& mc = cfg.mission;
      if (seed_set) mc.sim.seed = seed;
      if (!wind.empty()) {
        const auto w = split_numbers(wind, 3, "--wind");
        mc.sim.wind.steady = {w[0], w[1], w[2]};
      }
      if (gust >= 0) mc.sim.wind.gust_sigma = gust;
      mc.trace = true;
      mc.checkpoint_dir = out_dir;
      std::filesystem::create_directories(out_dir);

      const auto p = load_any_plan(sim_plan, cfg);
      mission::SelectionSpec spec;
      if (!range.empty()) {
        const auto r = split_numbers(range, 2, "--range");
        if (r[0] < 0 || r[1] < 0) throw Error(ErrorCode::bad_selection, "--range: negative index");
        spec.range = {static_cast<std::size_t>(r[0]), static_cast<std::size_t>(r[1])};
      }
      spec.ids = ids;
      const auto selection = (range.empty() && ids.empty()) ? mission::select_all(p) : mission::select_paths(p, spec);

      mission::Mission m(p, mc);
      m.set_event_sink([](const mission::Event& e) {
        if (e.code == "spray_on" || e.code == "spray_off") return;
        std::cerr << static_cast<double>(e.time_us) * 1e-6 << "s " << mission::to_string(e.severity) << " "
                  << e.code << ": " << e.message << "\n";
      });
      if (resume) {
        m.resume(mission::load_checkpoint(out_dir), selection, mission::load_checkpoint_raster(out_dir));
      } else {
        m.start(selection);
      }
      m.run();

      const auto dir = std::filesystem::path(out_dir);
      const auto png = sim::to_png(m.world().raster(), m.plan().palette);
      write_bytes(dir / "raster.png", std::string_view(reinterpret_cast<const char*>(png.data()), png.size()));
      sim::write_trace_csv(m.world().trace(), dir / "trace.csv");
      write_bytes(dir / "events.jsonl", mission::events_jsonl(m.events()));
      std::cout << "phase " << mission::to_string(m.phase()) << ", " << m.completed().size() << "/"
                << selection.size() << " paths, " << static_cast<double>(m.now_us()) * 1e-6 << " s -> "
                << dir.string() << "\n";
      return m.phase() == mission::Phase::landed ? 0 : 2;
    }

    if (*serve_cmd) {
      auto cfg = config_or_default(config_path);
      if (!host.empty()) cfg.host = host;
      if (port >= 0) cfg.port = port;
      service::MissionService svc(cfg);
      if (!serve_plan.empty()) svc.load_plan_text(read_text(serve_plan));
      httplib::Server server;
      service::mount_api(server, svc);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << "listening on http://" << cfg.host << ":" << cfg.port << "\n" << std::flush;
      const bool ok = server.listen(cfg.host, cfg.port);
      g_server = nullptr;
      if (!ok && !server.is_running()) {
        std::cerr << "cannot listen on " << cfg.host << ":" << cfg.port << "\n";
        return 1;
      }
      return 0;
    }

    if (*cal_cmd) {
      const auto f = loc::calibrate_from_correspondences_json(read_text(corr_path));
      const auto& cam = f.calibration.camera;
      std::cout << "reprojection rms " << f.calibration.rms_px << " px over " << f.image_pts.size()
                << " points\n";
      std::cout << "camera centre " << cam.center().transpose() << "\n";
      if (!cal_out.empty()) {
        write_bytes(cal_out, loc::calibration_to_json(f));
        std::cout << "-> " << cal_out << "\n";
      }
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
    return 1;
  }
  return 0;
}
