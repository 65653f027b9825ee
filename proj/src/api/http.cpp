// Eigen first: <resolv.h>, pulled in by httplib, defines a `_res` macro.
#include "mural/error.hpp"
#include "mural/service.hpp"

#include <httplib.h>

namespace mural::service {

using nlohmann::json;

namespace {

int status_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::mission_busy:
    case ErrorCode::plan_changed: return 409;
    case ErrorCode::io_error: return 500;
    default: return 400;
  }
}

void send_json(httplib::Response& res, const json& j, int status = 200) {
  res.status = status;
  res.set_content(j.dump(), "application/json");
}

/// Runs a handler and maps library errors to JSON error responses.
template <typename F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const Error& e) {
    send_json(res, {{"v", 1}, {"ok", false}, {"error", to_string(e.code())}, {"message", e.what()}},
              status_for(e.code()));
  } catch (const json::exception& e) {
    send_json(res, {{"v", 1}, {"ok", false}, {"error", to_string(ErrorCode::parse_error)}, {"message", e.what()}}, 400);
  }
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse_error, std::string("request body: ") + e.what());
  }
}

mission::SelectionSpec selection_from_json(const json& j) {
  mission::SelectionSpec spec;
  if (j.contains("range")) {
    const auto& r = j.at("range");
    if (!r.is_array() || r.size() != 2) throw Error(ErrorCode::bad_selection, "range must be [first, last)");
    const auto a = r[0].get<std::int64_t>();
    const auto b = r[1].get<std::int64_t>();
    if (a < 0 || b < 0) throw Error(ErrorCode::bad_selection, "negative index");
    spec.range = {static_cast<std::size_t>(a), static_cast<std::size_t>(b)};
  }
  if (j.contains("ids")) {
    for (const auto& v : j.at("ids")) {
      const auto i = v.get<std::int64_t>();
      if (i < 0) throw Error(ErrorCode::bad_selection, "negative index");
      spec.ids.push_back(static_cast<std::size_t>(i));
    }
  }
  return spec;
}

/// {"segments": [[[x, z], [x, z], ...], ...], "bg_color": 0}
std::vector<geom::PathChain> segments_from_json(const json& j) {
  std::vector<geom::PathChain> out;
  for (const auto& seg : j.at("segments")) {
    std::vector<geom::Vec2> pts;
    for (const auto& p : seg) {
      if (!p.is_array() || p.size() != 2) throw Error(ErrorCode::bad_geometry, "segment points are [x, z]");
      pts.push_back({p[0].get<double>(), p[1].get<double>()});
    }
    if (pts.size() < 2) throw Error(ErrorCode::bad_geometry, "segment needs two points");
    std::vector<geom::CurveSegment> parts;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
      if (geom::distance(pts[i], pts[i + 1]) <= 0) throw Error(ErrorCode::bad_geometry, "repeated segment point");
      parts.push_back(geom::CurveSegment::line(pts[i], pts[i + 1]));
    }
    out.emplace_back(std::move(parts));
  }
  return out;
}

}  // namespace

json apply_command(MissionService& svc, const json& cmd) {
  if (!cmd.is_object() || !cmd.contains("type")) throw Error(ErrorCode::parse_error, "command needs a type");
  if (cmd.value("v", 1) != 1) throw Error(ErrorCode::unsupported_feature, "unsupported message version");
  const auto type = cmd.at("type").get<std::string>();
  json ack = {{"v", 1}, {"kind", "ack"}, {"type", type}, {"ok", true}};
  if (type == "select") {
    ack["selected"] = svc.select(selection_from_json(cmd));
  } else if (type == "start") {
    svc.start(cmd.value("resume", false));
  } else if (type == "land") {
    svc.land();
  } else if (type == "abort") {
    svc.rc_interrupt();
  } else if (type == "eraser") {
    ack["indices"] = svc.add_eraser(segments_from_json(cmd), cmd.value("bg_color", 0));
  } else if (type == "status") {
    ack["status"] = svc.status();
  } else {
    throw Error(ErrorCode::parse_error, "unknown command " + type);
  }
  return ack;
}

void mount_api(httplib::Server& server, MissionService& svc) {
  server.Post("/plan", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      svc.load_plan_text(req.body);
      const auto p = svc.plan();
      send_json(res, {{"v", 1},
                      {"ok", true},
                      {"paths", p.paths.size()},
                      {"plan_hash", plan::plan_hash(p)},
                      {"warnings", p.warnings}});
    });
  });
  server.Get("/plan", [&svc](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { res.set_content(svc.plan_json(), "application/json"); });
  });
  server.Post("/mission/select", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      json cmd = parse_body(req);
      cmd["type"] = "select";
      send_json(res, apply_command(svc, cmd));
    });
  });
  const auto simple = [&svc](const char* type) {
    return [&svc, type](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        json cmd = parse_body(req);
        cmd["type"] = type;
        send_json(res, apply_command(svc, cmd));
      });
    };
  };
  server.Post("/mission/start", simple("start"));
  server.Post("/mission/land", simple("land"));
  server.Post("/mission/abort", simple("abort"));
  server.Post("/mission/eraser", simple("eraser"));
  server.Get("/mission/status", [&svc](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { send_json(res, svc.status()); });
  });
  server.Get("/raster.png", [&svc](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] {
      const auto png = svc.raster_png();
      res.set_content(std::string(png.begin(), png.end()), "image/png");
    });
  });
  server.Get("/checkpoint", [&svc](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] {
      const auto c = svc.checkpoint_json();
      if (!c) {
        send_json(res, {{"v", 1}, {"ok", false}, {"error", "NotFound"}, {"message", "no checkpoint"}}, 404);
        return;
      }
      res.set_content(*c, "application/json");
    });
  });
  // Server-sent events down, JSON commands up.
  server.Get("/stream", [&svc](const httplib::Request&, httplib::Response& res) {
    auto sub = svc.subscribe();
    sub->push(svc.status().dump());
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider(
        "text/event-stream",
        [sub](std::size_t, httplib::DataSink& sink) {
          if (sub->closed()) {
            sink.done();
            return true;
          }
          const auto m = sub->pop(std::chrono::milliseconds(250));
          const std::string chunk = m ? "data: " + *m + "\n\n" : std::string(":\n\n");
          return sink.write(chunk.data(), chunk.size());
        },
        [&svc, sub](bool) { svc.unsubscribe(sub); });
  });
  server.Post("/stream", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, apply_command(svc, parse_body(req))); });
  });
}

}  // namespace mural::service
