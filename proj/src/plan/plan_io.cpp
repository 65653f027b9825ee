#include <sodium.h>

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "mural/error.hpp"
#include "mural/plan.hpp"

namespace mural::plan {

using geom::CurveSegment;
using geom::PathChain;
using geom::Vec2;
using nlohmann::json;

namespace {

constexpr const char* kFormat = "mural-plan";
constexpr int kVersion = 1;

json point_json(Vec2 p) { return json::array({p.x, p.z}); }

Vec2 point_from(const json& j) {
  if (!j.is_array() || j.size() != 2) throw Error(ErrorCode::parse_error, "point must be [x, z]");
  return {j[0].get<double>(), j[1].get<double>()};
}

json segment_json(const CurveSegment& s) {
  json pts = json::array();
  for (const auto& p : s.points()) pts.push_back(point_json(p));
  return {{"kind", s.kind() == geom::SegmentKind::line ? "line" : "cubic"}, {"points", pts}};
}

CurveSegment segment_from(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  const auto& pts = j.at("points");
  if (kind == "line" && pts.size() == 2) return CurveSegment::line(point_from(pts[0]), point_from(pts[1]));
  if (kind == "cubic" && pts.size() == 4) {
    return CurveSegment::cubic(point_from(pts[0]), point_from(pts[1]), point_from(pts[2]),
                               point_from(pts[3]));
  }
  throw Error(ErrorCode::parse_error, "bad segment of kind \"" + kind + "\"");
}

PathMode mode_from(const std::string& s) {
  if (s == "stroke") return PathMode::stroke;
  if (s == "fill") return PathMode::fill;
  if (s == "erase") return PathMode::erase;
  throw Error(ErrorCode::parse_error, "unknown path mode \"" + s + "\"");
}

json to_json(const MissionPlan& plan) {
  const auto& pp = plan.params;
  json params = {{"join_angle_max", pp.join_angle_max},   {"min_path_len", pp.min_path_len},
                 {"extension_len", pp.extension_len},     {"infill_spacing", pp.infill_spacing},
                 {"infill_min_gap", pp.infill_min_gap},   {"rank_z_weight", pp.rank_z_weight},
                 {"target_speed", pp.target_speed},       {"start_anchor", to_string(pp.start_anchor)}};
  json paths = json::array();
  for (const auto& p : plan.paths) {
    json segs = json::array();
    for (const auto& s : p.chain.segments()) segs.push_back(segment_json(s));
    paths.push_back({{"index", p.index},
                     {"color", p.color},
                     {"mode", to_string(p.mode)},
                     {"source", p.source_id},
                     {"lead_in", p.lead_in ? segment_json(*p.lead_in) : json(nullptr)},
                     {"segments", segs},
                     {"lead_out", p.lead_out ? segment_json(*p.lead_out) : json(nullptr)},
                     {"spray_window", json::array({p.spray_window.s_on, p.spray_window.s_off})},
                     {"reversed", p.reversed}});
  }
  return {{"format", kFormat},
          {"version", kVersion},
          {"params", params},
          {"wall", json::array({plan.wall.x0, plan.wall.z0, plan.wall.width, plan.wall.height})},
          {"palette", plan.palette},
          {"paths", paths}};
}

}  // namespace

std::string to_json_text(const MissionPlan& plan) { return to_json(plan).dump(2) + "\n"; }

MissionPlan from_json_text(std::string_view text) {
  try {
    const json j = json::parse(text);
    if (j.at("format").get<std::string>() != kFormat) throw Error(ErrorCode::parse_error, "not a mission plan");
    if (j.at("version").get<int>() != kVersion) {
      throw Error(ErrorCode::parse_error, "unsupported plan version " + j.at("version").dump());
    }
    MissionPlan plan;
    const auto& pp = j.at("params");
    plan.params.join_angle_max = pp.at("join_angle_max").get<double>();
    plan.params.min_path_len = pp.at("min_path_len").get<double>();
    plan.params.extension_len = pp.at("extension_len").get<double>();
    plan.params.infill_spacing = pp.at("infill_spacing").get<double>();
    plan.params.infill_min_gap = pp.at("infill_min_gap").get<double>();
    plan.params.rank_z_weight = pp.at("rank_z_weight").get<double>();
    plan.params.target_speed = pp.at("target_speed").get<double>();
    plan.params.start_anchor = start_anchor_from_string(pp.at("start_anchor").get<std::string>());
    const auto& w = j.at("wall");
    plan.wall = {w.at(0).get<double>(), w.at(1).get<double>(), w.at(2).get<double>(), w.at(3).get<double>()};
    plan.palette = j.at("palette").get<std::vector<std::string>>();
    if (plan.palette.empty()) throw Error(ErrorCode::parse_error, "palette needs a background entry");
    for (const auto& jp : j.at("paths")) {
      std::vector<CurveSegment> segs;
      for (const auto& s : jp.at("segments")) segs.push_back(segment_from(s));
      DrawPath p{PathChain(std::move(segs)), std::nullopt, std::nullopt, {}, 1, PathMode::stroke, 0, false, {}, 0};
      if (!jp.at("lead_in").is_null()) p.lead_in = segment_from(jp.at("lead_in"));
      if (!jp.at("lead_out").is_null()) p.lead_out = segment_from(jp.at("lead_out"));
      p.index = jp.at("index").get<std::size_t>();
      p.origin = p.index;
      p.color = jp.at("color").get<int>();
      p.mode = mode_from(jp.at("mode").get<std::string>());
      p.source_id = jp.value("source", std::string{});
      p.spray_window = {jp.at("spray_window").at(0).get<double>(), jp.at("spray_window").at(1).get<double>()};
      p.reversed = jp.at("reversed").get<bool>();
      if (p.index != plan.paths.size()) throw Error(ErrorCode::parse_error, "path indices must be dense");
      if (p.color < 0 || static_cast<std::size_t>(p.color) >= plan.palette.size()) {
        throw Error(ErrorCode::parse_error, "path colour outside the palette");
      }
      plan.paths.push_back(std::move(p));
    }
    return plan;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse_error, e.what());
  }
}

std::string plan_hash(const MissionPlan& plan) {
  if (sodium_init() < 0) throw Error(ErrorCode::io_error, "libsodium init failed");
  const std::string text = to_json_text(plan);
  unsigned char digest[crypto_hash_sha256_BYTES];
  crypto_hash_sha256(digest, reinterpret_cast<const unsigned char*>(text.data()), text.size());
  char hex[crypto_hash_sha256_BYTES * 2 + 1];
  sodium_bin2hex(hex, sizeof hex, digest, sizeof digest);
  return hex;
}

void save_plan(const MissionPlan& plan, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  f << to_json_text(plan);
  if (!f) throw Error(ErrorCode::io_error, "cannot write " + path);
}

MissionPlan load_plan(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::io_error, "cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return from_json_text(ss.str());
}

}  // namespace mural::plan
