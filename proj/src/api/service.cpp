#include "mural/service.hpp"

#include <algorithm>
#include <filesystem>

#include "mural/error.hpp"

namespace mural::service {

using nlohmann::json;

void Subscriber::push(std::string msg) {
  {
    std::lock_guard lk(mu_);
    if (q_.size() >= capacity_) {
      ++dropped_;
      return;
    }
    q_.push_back(std::move(msg));
  }
  cv_.notify_one();
}

std::optional<std::string> Subscriber::pop(std::chrono::milliseconds timeout) {
  std::unique_lock lk(mu_);
  if (!cv_.wait_for(lk, timeout, [&] { return !q_.empty() || closed_; })) return std::nullopt;
  if (q_.empty()) return std::nullopt;
  std::string m = std::move(q_.front());
  q_.pop_front();
  return m;
}

void Subscriber::close() {
  closed_ = true;
  cv_.notify_all();
}

MissionService::MissionService(ServiceConfig config) : config_(std::move(config)) {
  config_.mission.validate();
  config_.plan.validate();
}

MissionService::~MissionService() {
  stop_ = true;
  if (thread_.joinable()) thread_.join();
  std::lock_guard lk(sub_mu_);
  for (auto& s : subs_) s->close();
}

void MissionService::load_plan_text(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  plan::MissionPlan p = first != std::string_view::npos && text[first] == '<'
                            ? plan::compile_svg(text, config_.wall, config_.plan)
                            : plan::from_json_text(text);
  load_plan(std::move(p));
}

void MissionService::load_plan(plan::MissionPlan p) {
  ctl::validate_profile(p, config_.mission.gains);
  std::lock_guard lk(state_mu_);
  if (running_) throw Error(ErrorCode::mission_busy, "cannot replace the plan while a mission runs");
  selection_ = mission::select_all(p);
  plan_ = std::move(p);
  mission_.reset();
  last_raster_.reset();
}

bool MissionService::has_plan() const {
  std::lock_guard lk(state_mu_);
  return plan_.has_value();
}

plan::MissionPlan MissionService::plan() const {
  std::lock_guard lk(state_mu_);
  if (mission_) return mission_->plan();
  if (!plan_) throw Error(ErrorCode::empty_plan, "no plan loaded");
  return *plan_;
}

std::string MissionService::plan_json() const { return plan::to_json_text(plan()); }

std::vector<std::size_t> MissionService::select(const mission::SelectionSpec& spec) {
  std::lock_guard lk(state_mu_);
  if (!plan_) throw Error(ErrorCode::empty_plan, "no plan loaded");
  if (running_) throw Error(ErrorCode::mission_busy, "selection is fixed while a mission runs");
  selection_ = mission::select_paths(*plan_, spec);
  return selection_;
}

std::vector<std::size_t> MissionService::selection() const {
  std::lock_guard lk(state_mu_);
  return selection_;
}

void MissionService::start(bool resume) {
  std::lock_guard lk(state_mu_);
  if (running_) throw Error(ErrorCode::mission_busy, "a mission is already running");
  if (!plan_) throw Error(ErrorCode::empty_plan, "no plan loaded");
  if (thread_.joinable()) thread_.join();
  auto m = std::make_unique<mission::Mission>(*plan_, config_.mission);
  m->set_event_sink([this](const mission::Event& e) {
    events_.push_back(e);
    broadcast(mission::to_json(e).dump());
  });
  m->set_telemetry_sink([this](const mission::Telemetry& t) { broadcast(mission::to_json(t).dump()); });
  events_.clear();
  if (resume) {
    const auto& dir = config_.mission.checkpoint_dir;
    std::optional<mission::Checkpoint> cp;
    std::optional<sim::PaintRaster> raster;
    if (dir && std::filesystem::exists(*dir / "checkpoint.json")) {
      cp = mission::load_checkpoint(*dir);
      raster = mission::load_checkpoint_raster(*dir);
    } else if (checkpoint_) {
      cp = checkpoint_;
      raster = last_raster_;
    }
    if (!cp) throw Error(ErrorCode::invalid_argument, "no checkpoint to resume from");
    m->resume(*cp, selection_, raster);
  } else {
    m->start(selection_);
  }
  mission_ = std::move(m);
  {
    std::lock_guard cl(cmd_mu_);
    commands_.clear();
  }
  running_ = true;
  stop_ = false;
  thread_ = std::thread([this] { worker(); });
}

void MissionService::enqueue(Command c) {
  std::lock_guard lk(cmd_mu_);
  commands_.push_back(std::move(c));
}

void MissionService::land() {
  if (!running_) throw Error(ErrorCode::invalid_argument, "no mission running");
  enqueue(Land{});
}

void MissionService::rc_interrupt() {
  if (!running_) throw Error(ErrorCode::invalid_argument, "no mission running");
  enqueue(Interrupt{});
}

std::vector<std::size_t> MissionService::add_eraser(const std::vector<geom::PathChain>& segments, int bg_color) {
  std::lock_guard lk(state_mu_);
  if (!plan_) throw Error(ErrorCode::empty_plan, "no plan loaded");
  if (running_ && mission_) {
    // Validate against a copy so the caller sees BadGeometry synchronously.
    plan::MissionPlan probe = mission_->plan();
    auto added = mission::add_eraser_segments(probe, segments, bg_color);
    enqueue(Eraser{segments, bg_color});
    return added;
  }
  auto added = mission::add_eraser_segments(*plan_, segments, bg_color);
  ctl::validate_profile(*plan_, config_.mission.gains);
  selection_.insert(selection_.end(), added.begin(), added.end());
  return added;
}

void MissionService::worker() {
  const auto wall_start = std::chrono::steady_clock::now();
  std::int64_t sim_start = 0;
  {
    std::lock_guard lk(state_mu_);
    sim_start = mission_->now_us();
  }
  while (!stop_) {
    std::vector<Command> cmds;
    {
      std::lock_guard cl(cmd_mu_);
      cmds.swap(commands_);
    }
    bool more = false;
    std::int64_t now = 0;
    {
      std::lock_guard lk(state_mu_);
      for (auto& c : cmds) {
        if (std::holds_alternative<Land>(c)) {
          mission_->request_land();
        } else if (std::holds_alternative<Interrupt>(c)) {
          mission_->rc_interrupt();
        } else {
          const auto& e = std::get<Eraser>(c);
          try {
            mission_->add_eraser(e.segments, e.bg_color);
          } catch (const Error&) {
          }
        }
      }
      more = mission_->tick();
      now = mission_->now_us();
    }
    if (!more) break;
    if (config_.realtime_factor > 0) {
      const auto target = wall_start + std::chrono::microseconds(static_cast<std::int64_t>(
                                           static_cast<double>(now - sim_start) / config_.realtime_factor));
      std::this_thread::sleep_until(target);
    }
  }
  {
    std::lock_guard lk(state_mu_);
    last_raster_ = mission_->world().raster();
    checkpoint_ = mission_->checkpoint();
    // Eraser paths added during the run stay selected for a resume.
    const std::size_t old_n = plan_->paths.size();
    plan_ = mission_->plan();
    for (std::size_t i = old_n; i < plan_->paths.size(); ++i) selection_.push_back(i);
  }
  {
    std::lock_guard lk(done_mu_);
    running_ = false;
  }
  broadcast(json{{"v", 1}, {"kind", "status"}, {"running", false}}.dump());
  done_cv_.notify_all();
}

bool MissionService::wait(std::chrono::milliseconds timeout) {
  std::unique_lock lk(done_mu_);
  return done_cv_.wait_for(lk, timeout, [&] { return !running_.load(); });
}

std::vector<std::uint8_t> MissionService::raster_png() const {
  std::lock_guard lk(state_mu_);
  if (mission_) return sim::to_png(mission_->world().raster(), mission_->plan().palette);
  const std::vector<std::string> bare{"#ffffff"};
  const auto& palette = plan_ ? plan_->palette : bare;
  if (last_raster_) return sim::to_png(*last_raster_, palette);
  const auto& w = plan_ ? plan_->wall : config_.wall;
  return sim::to_png(sim::PaintRaster(w, config_.mission.sim.cell), palette);
}

std::optional<std::string> MissionService::checkpoint_json() const {
  std::lock_guard lk(state_mu_);
  if (mission_ && mission_->started()) return mission::checkpoint_to_json(mission_->checkpoint());
  if (checkpoint_) return mission::checkpoint_to_json(*checkpoint_);
  const auto& dir = config_.mission.checkpoint_dir;
  if (dir && std::filesystem::exists(*dir / "checkpoint.json")) {
    return mission::checkpoint_to_json(mission::load_checkpoint(*dir));
  }
  return std::nullopt;
}

json MissionService::status() const {
  std::lock_guard lk(state_mu_);
  json j = {{"v", 1}, {"kind", "status"}, {"running", running_.load()}, {"has_plan", plan_.has_value()},
            {"selection", selection_}};
  if (mission_) {
    j["phase"] = mission::to_string(mission_->phase());
    j["time"] = static_cast<double>(mission_->now_us()) * 1e-6;
    j["completed"] = std::vector<std::size_t>(mission_->completed().begin(), mission_->completed().end());
    const auto cur = mission_->current_path();
    j["current_path"] = cur ? json(*cur) : json(nullptr);
    j["telemetry"] = mission::to_json(mission_->telemetry());
  } else {
    j["phase"] = mission::to_string(mission::Phase::idle);
  }
  if (plan_) j["paths"] = plan_->paths.size();
  return j;
}

std::vector<mission::Event> MissionService::events() const {
  std::lock_guard lk(state_mu_);
  return events_;
}

std::shared_ptr<Subscriber> MissionService::subscribe() {
  auto s = std::make_shared<Subscriber>(config_.subscriber_capacity);
  std::lock_guard lk(sub_mu_);
  subs_.push_back(s);
  return s;
}

void MissionService::unsubscribe(const std::shared_ptr<Subscriber>& s) {
  std::lock_guard lk(sub_mu_);
  s->close();
  subs_.erase(std::remove(subs_.begin(), subs_.end(), s), subs_.end());
}

void MissionService::broadcast(const std::string& msg) {
  std::lock_guard lk(sub_mu_);
  for (auto& s : subs_) s->push(msg);
}

}  // namespace mural::service
