#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "mural/mission.hpp"

namespace httplib {
class Server;
}

namespace mural::service {

struct ServiceConfig {
  mission::MissionConfig mission;
  plan::PlanParams plan;
  svg::WallRect wall{0.0, 0.0, 10.0, 10.0};
  /// Sim seconds per wall-clock second; 0 runs as fast as possible.
  double realtime_factor = 0.0;
  std::size_t subscriber_capacity = 1024;
  std::string host = "127.0.0.1";
  int port = 8080;
};

/// TOML sections [wall] [camera] [lidar] [controller] [sim] [link] [guards]
/// [plan] [mission]. Unknown keys are errors. Relative file paths resolve
/// against `base_dir`. Throws ParseError and InvalidArgument.
ServiceConfig load_config(std::string_view toml_text, const std::filesystem::path& base_dir = ".");
ServiceConfig load_config_file(const std::filesystem::path& path);

/// Bounded message queue for one stream consumer. When full, new messages
/// are dropped and counted; the mission loop never waits on it.
class Subscriber {
 public:
  explicit Subscriber(std::size_t capacity) : capacity_(capacity) {}
  void push(std::string msg);
  /// Waits up to `timeout` for a message.
  std::optional<std::string> pop(std::chrono::milliseconds timeout);
  std::size_t dropped() const { return dropped_; }
  void close();
  bool closed() const { return closed_; }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::string> q_;
  std::size_t capacity_;
  std::atomic<std::size_t> dropped_{0};
  std::atomic<bool> closed_{false};
};

/// One mission at a time on a worker thread. Operator commands are queued
/// and applied between ticks.
class MissionService {
 public:
  explicit MissionService(ServiceConfig config);
  ~MissionService();
  MissionService(const MissionService&) = delete;
  MissionService& operator=(const MissionService&) = delete;

  /// SVG text (mapped onto the configured wall) or .mplan.json text.
  /// Throws MissionBusy while running, ParseError and others from compiling.
  void load_plan_text(std::string_view text);
  void load_plan(plan::MissionPlan plan);
  bool has_plan() const;
  std::string plan_json() const;
  plan::MissionPlan plan() const;

  std::vector<std::size_t> select(const mission::SelectionSpec& spec);
  std::vector<std::size_t> selection() const;

  /// Throws MissionBusy when a mission is running, EmptyPlan without a plan,
  /// PlanChanged on resume against another plan.
  void start(bool resume = false);
  void land();
  void rc_interrupt();
  /// Queued into the running mission, or appended to the plan when idle.
  std::vector<std::size_t> add_eraser(const std::vector<geom::PathChain>& segments, int bg_color = 0);

  bool running() const { return running_; }
  /// Waits for the worker to finish; false on timeout.
  bool wait(std::chrono::milliseconds timeout);

  std::vector<std::uint8_t> raster_png() const;
  std::optional<std::string> checkpoint_json() const;
  nlohmann::json status() const;
  std::vector<mission::Event> events() const;

  std::shared_ptr<Subscriber> subscribe();
  void unsubscribe(const std::shared_ptr<Subscriber>& s);

  const ServiceConfig& config() const { return config_; }

 private:
  struct Land {};
  struct Interrupt {};
  struct Eraser {
    std::vector<geom::PathChain> segments;
    int bg_color;
  };
  using Command = std::variant<Land, Interrupt, Eraser>;

  void worker();
  void broadcast(const std::string& msg);
  void enqueue(Command c);

  ServiceConfig config_;
  mutable std::mutex state_mu_;
  std::optional<plan::MissionPlan> plan_;
  std::vector<std::size_t> selection_;
  std::unique_ptr<mission::Mission> mission_;
  std::optional<sim::PaintRaster> last_raster_;
  std::vector<mission::Event> events_;
  std::optional<mission::Checkpoint> checkpoint_;

  std::mutex cmd_mu_;
  std::vector<Command> commands_;

  std::mutex sub_mu_;
  std::vector<std::shared_ptr<Subscriber>> subs_;

  std::thread thread_;
  std::atomic<bool> running_{false};
  std::atomic<bool> stop_{false};
  std::mutex done_mu_;
  std::condition_variable done_cv_;
};

/// Routes for the operator API and the /stream endpoint.
void mount_api(httplib::Server& server, MissionService& svc);

/// Parses a stream command object {"v": 1, "type": ...} and applies it.
/// Returns the acknowledgment.
nlohmann::json apply_command(MissionService& svc, const nlohmann::json& cmd);

}  // namespace mural::service
