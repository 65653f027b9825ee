#include <json.hpp>

#include "mural/error.hpp"
#include "mural/loc.hpp"

namespace mural::loc {

using nlohmann::json;

namespace {

json intrinsics_json(const Intrinsics& k) {
  return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
}

Intrinsics intrinsics_from(const json& j) {
  Intrinsics k;
  k.fx = j.at("fx").get<double>();
  k.fy = j.value("fy", k.fx);
  k.cx = j.at("cx").get<double>();
  k.cy = j.at("cy").get<double>();
  k.width = j.at("width").get<int>();
  k.height = j.at("height").get<int>();
  return k;
}

void read_correspondences(const json& j, CalibrationFile& f) {
  for (const auto& c : j.at("correspondences")) {
    f.image_pts.emplace_back(c.at("pixel").at(0).get<double>(), c.at("pixel").at(1).get<double>());
    f.wall_pts.push_back({c.at("wall").at(0).get<double>(), c.at("wall").at(1).get<double>()});
  }
}

}  // namespace

std::string calibration_to_json(const CalibrationFile& f) {
  const auto& cam = f.calibration.camera;
  json R = json::array();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) R.push_back(cam.R(r, c));
  }
  json corr = json::array();
  for (std::size_t i = 0; i < f.image_pts.size(); ++i) {
    corr.push_back({{"pixel", {f.image_pts[i].x(), f.image_pts[i].y()}}, {"wall", {f.wall_pts[i].x, f.wall_pts[i].z}}});
  }
  const json out = {{"intrinsics", intrinsics_json(cam.intrinsics)},
                    {"extrinsics", {{"R", R}, {"t", {cam.t.x(), cam.t.y(), cam.t.z()}}}},
                    {"rms_px", f.calibration.rms_px},
                    {"correspondences", corr}};
  return out.dump(2) + "\n";
}

CalibrationFile calibration_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    CalibrationFile f;
    auto& cam = f.calibration.camera;
    cam.intrinsics = intrinsics_from(j.at("intrinsics"));
    cam.intrinsics.validate();
    const auto& R = j.at("extrinsics").at("R");
    if (R.size() != 9) throw Error(ErrorCode::parse_error, "extrinsics.R needs 9 numbers");
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) cam.R(r, c) = R.at(3 * r + c).get<double>();
    }
    const auto& t = j.at("extrinsics").at("t");
    cam.t = {t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>()};
    f.calibration.rms_px = j.value("rms_px", 0.0);
    if (j.contains("correspondences")) read_correspondences(j, f);
    return f;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse_error, e.what());
  }
}

CalibrationFile calibrate_from_correspondences_json(const std::string& text) {
  CalibrationFile f;
  Intrinsics k;
  try {
    const json j = json::parse(text);
    k = intrinsics_from(j.at("intrinsics"));
    read_correspondences(j, f);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse_error, e.what());
  }
  f.calibration = calibrate_camera(f.image_pts, f.wall_pts, k);
  return f;
}

}  // namespace mural::loc
