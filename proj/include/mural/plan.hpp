#pragma once

#include <cstddef>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mural/geom.hpp"
#include "mural/svg.hpp"

namespace mural::plan {

enum class PathMode { stroke, fill, erase };

/// Where the first path is looked for, on the drawing's bounding box.
enum class StartAnchor { bottom_center, bottom_left, bottom_right, top_left, top_right };

struct PlanParams {
  double join_angle_max = 30.0 * std::numbers::pi / 180.0;
  double min_path_len = 0.04;
  double extension_len = 0.30;
  double infill_spacing = 0.05;
  double infill_min_gap = 0.005;
  double rank_z_weight = -1.0;
  double target_speed = 0.5;
  StartAnchor start_anchor = StartAnchor::bottom_center;

  /// Throws InvalidArgument.
  void validate() const;
};

/// Arc-length interval on the extended path, lead-in included.
struct SprayWindow {
  double s_on = 0.0;
  double s_off = 0.0;
};

struct DrawPath {
  geom::PathChain chain;
  std::optional<geom::CurveSegment> lead_in;
  std::optional<geom::CurveSegment> lead_out;
  SprayWindow spray_window;
  int color = 1;
  PathMode mode = PathMode::stroke;
  std::size_t index = 0;
  bool reversed = false;
  std::string source_id;
  /// Position in the list handed to sort_paths.
  std::size_t origin = 0;

  double lead_in_length() const;
  double lead_out_length() const;
  double extended_length() const;
  geom::Vec2 start() const;
  geom::Vec2 end() const;
  /// Lead-in, drawing chain and lead-out as one chain.
  geom::PathChain extended() const;
  /// Same path flown the other way; spray window mirrored.
  DrawPath flipped() const;
};

struct MissionPlan {
  std::vector<DrawPath> paths;
  PlanParams params;
  svg::WallRect wall;
  /// palette[0] is the background.
  std::vector<std::string> palette{"#ffffff"};
  std::vector<std::string> warnings;
};

std::vector<geom::PathChain> join_or_split(const std::vector<geom::PathChain>& paths,
                                           double join_angle_max);

std::vector<geom::PathChain> prune_short(std::vector<geom::PathChain> paths, double min_path_len);

DrawPath extend_path(const geom::PathChain& chain, double extension_len);

/// Horizontal scanline fill of closed contours under the even-odd rule.
/// Throws OpenContour for an open contour.
std::vector<geom::PathChain> generate_infill(const std::vector<geom::PathChain>& contours,
                                             double spacing, double min_gap);

/// Bounding-box corner (or bottom centre) of the drawing portions.
geom::Vec2 start_anchor_point(const std::vector<DrawPath>& paths, StartAnchor anchor);

/// Greedy endpoint ordering. Output indices are 0..n-1; `origin` records
/// the input position. Throws EmptyPlan.
std::vector<DrawPath> sort_paths(std::vector<DrawPath> paths, double rank_z_weight,
                                 geom::Vec2 anchor);
std::vector<DrawPath> sort_paths(std::vector<DrawPath> paths, double rank_z_weight,
                                 StartAnchor anchor = StartAnchor::bottom_center);

/// Input must already be in the wall frame (see svg::map_to_wall).
MissionPlan compile_mission(const svg::SvgPathSet& wall_paths, const PlanParams& params,
                            const svg::WallRect& wall);

/// parse_svg + map_to_wall + compile_mission.
MissionPlan compile_svg(std::string_view document, const svg::WallRect& wall,
                        const PlanParams& params = {});

/// Palette id for a colour string, appended when new.
int palette_index(MissionPlan& plan, const std::string& color);

// Serialization (.mplan.json).
std::string to_json_text(const MissionPlan& plan);
MissionPlan from_json_text(std::string_view text);
/// Hex SHA-256 of to_json_text(plan).
std::string plan_hash(const MissionPlan& plan);
void save_plan(const MissionPlan& plan, const std::string& path);
MissionPlan load_plan(const std::string& path);

std::string_view to_string(PathMode m);
std::string_view to_string(StartAnchor a);
StartAnchor start_anchor_from_string(std::string_view s);

}  // namespace mural::plan
