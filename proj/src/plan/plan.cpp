#include "mural/plan.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <map>

#include "mural/error.hpp"

namespace mural::plan {

using geom::CurveSegment;
using geom::PathChain;
using geom::Vec2;

void PlanParams::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw Error(ErrorCode::invalid_argument, std::string(name) + " must be > 0");
    }
  };
  positive(min_path_len, "min_path_len");
  positive(extension_len, "extension_len");
  positive(infill_spacing, "infill_spacing");
  positive(infill_min_gap, "infill_min_gap");
  positive(target_speed, "target_speed");
  if (!(join_angle_max > 0.0 && join_angle_max < std::numbers::pi)) {
    throw Error(ErrorCode::invalid_argument, "join_angle_max must lie in (0, pi)");
  }
  if (!std::isfinite(rank_z_weight)) throw Error(ErrorCode::invalid_argument, "rank_z_weight must be finite");
}

double DrawPath::lead_in_length() const { return lead_in ? geom::arc_length(*lead_in) : 0.0; }
double DrawPath::lead_out_length() const { return lead_out ? geom::arc_length(*lead_out) : 0.0; }
double DrawPath::extended_length() const {
  return lead_in_length() + chain.length() + lead_out_length();
}
Vec2 DrawPath::start() const { return lead_in ? lead_in->start() : chain.start(); }
Vec2 DrawPath::end() const { return lead_out ? lead_out->end() : chain.end(); }

PathChain DrawPath::extended() const {
  std::vector<CurveSegment> segs;
  if (lead_in) segs.push_back(*lead_in);
  segs.insert(segs.end(), chain.segments().begin(), chain.segments().end());
  if (lead_out) segs.push_back(*lead_out);
  return PathChain(std::move(segs));
}

DrawPath DrawPath::flipped() const {
  DrawPath out = *this;
  out.chain = chain.reversed();
  out.lead_in = lead_out ? std::optional(lead_out->reversed()) : std::nullopt;
  out.lead_out = lead_in ? std::optional(lead_in->reversed()) : std::nullopt;
  const double total = extended_length();
  out.spray_window = {total - spray_window.s_off, total - spray_window.s_on};
  out.reversed = !reversed;
  return out;
}

// ---------------------------------------------------------------------------
// Joining and splitting.

namespace {

struct Tracked {
  PathChain chain;
  std::size_t origin;
};

std::vector<Tracked> split_sharp(const std::vector<Tracked>& in, double max_angle) {
  std::vector<Tracked> out;
  for (const auto& t : in) {
    const auto segs = t.chain.segments();
    std::vector<CurveSegment> cur{segs[0]};
    for (std::size_t i = 1; i < segs.size(); ++i) {
      if (geom::direction_angle(segs[i - 1].end_direction(), segs[i].start_direction()) > max_angle) {
        out.push_back({PathChain(std::move(cur)), t.origin});
        cur.clear();
      }
      cur.push_back(segs[i]);
    }
    out.push_back({PathChain(std::move(cur)), t.origin});
  }
  return out;
}

PathChain concat(const PathChain& a, const PathChain& b) {
  std::vector<CurveSegment> segs(a.segments().begin(), a.segments().end());
  const auto bs = b.segments();
  segs.push_back(bs[0].with_start(a.end()));
  segs.insert(segs.end(), bs.begin() + 1, bs.end());
  return PathChain(std::move(segs));
}

struct Candidate {
  std::size_t index = 0;
  bool flip = false;
  double angle = std::numeric_limits<double>::infinity();
};

// Best unconsumed piece continuing from `at` heading `dir`.
Candidate best_continuation(const std::vector<Tracked>& pieces, const std::vector<bool>& used, Vec2 at,
                            Vec2 dir, double max_angle) {
  Candidate best;
  for (std::size_t j = 0; j < pieces.size(); ++j) {
    if (used[j]) continue;
    const PathChain& c = pieces[j].chain;
    if (c.closed()) continue;  // a loop is a complete figure
    if (geom::distance(c.start(), at) <= geom::kJoinTolerance) {
      const double a = geom::direction_angle(dir, c.start_direction());
      if (a <= max_angle && a < best.angle) best = {j, false, a};
    }
    if (geom::distance(c.end(), at) <= geom::kJoinTolerance) {
      const double a = geom::direction_angle(dir, -c.end_direction());
      if (a <= max_angle && a < best.angle) best = {j, true, a};
    }
  }
  return best;
}

std::vector<Tracked> join_tracked(const std::vector<Tracked>& in, double max_angle) {
  const auto pieces = split_sharp(in, max_angle);
  std::vector<bool> used(pieces.size(), false);
  std::vector<Tracked> out;
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    if (used[i]) continue;
    used[i] = true;
    PathChain cur = pieces[i].chain;
    while (!cur.closed()) {
      const auto c = best_continuation(pieces, used, cur.end(), cur.end_direction(), max_angle);
      if (!std::isfinite(c.angle)) break;
      used[c.index] = true;
      cur = concat(cur, c.flip ? pieces[c.index].chain.reversed() : pieces[c.index].chain);
    }
    while (!cur.closed()) {
      // Growing backwards is growing the reversed chain forwards.
      const PathChain rev = cur.reversed();
      const auto c = best_continuation(pieces, used, rev.end(), rev.end_direction(), max_angle);
      if (!std::isfinite(c.angle)) break;
      used[c.index] = true;
      cur = concat(rev, c.flip ? pieces[c.index].chain.reversed() : pieces[c.index].chain).reversed();
    }
    out.push_back({std::move(cur), pieces[i].origin});
  }
  return out;
}

}  // namespace

std::vector<PathChain> join_or_split(const std::vector<PathChain>& paths, double join_angle_max) {
  std::vector<Tracked> in;
  for (std::size_t i = 0; i < paths.size(); ++i) in.push_back({paths[i], i});
  std::vector<PathChain> out;
  for (auto& t : join_tracked(in, join_angle_max)) out.push_back(std::move(t.chain));
  return out;
}

std::vector<PathChain> prune_short(std::vector<PathChain> paths, double min_path_len) {
  std::erase_if(paths, [&](const PathChain& c) { return c.length() < min_path_len; });
  return paths;
}

DrawPath extend_path(const PathChain& chain, double extension_len) {
  if (!(extension_len >= 0.0)) throw Error(ErrorCode::invalid_argument, "extension_len must be >= 0");
  DrawPath p{chain, std::nullopt, std::nullopt, {}, 1, PathMode::stroke, 0, false, {}, 0};
  if (extension_len > 0.0) {
    p.lead_in = CurveSegment::line(chain.start() - chain.start_direction() * extension_len, chain.start());
    p.lead_out = CurveSegment::line(chain.end(), chain.end() + chain.end_direction() * extension_len);
  }
  const double ext_in = p.lead_in_length();
  p.spray_window = {ext_in, ext_in + chain.length()};
  return p;
}

// ---------------------------------------------------------------------------
// Infill.

std::vector<PathChain> generate_infill(const std::vector<PathChain>& contours, double spacing,
                                       double min_gap) {
  if (!(spacing > 0.0)) throw Error(ErrorCode::invalid_argument, "infill spacing must be > 0");
  if (!(min_gap >= 0.0)) throw Error(ErrorCode::invalid_argument, "infill min_gap must be >= 0");
  std::vector<std::vector<Vec2>> rings;
  geom::Box box;
  for (const auto& c : contours) {
    if (!c.closed()) throw Error(ErrorCode::open_contour, "infill needs closed contours");
    auto ring = geom::sample_path(c, spacing / 10.0);
    ring.pop_back();
    for (const auto& p : ring) box.expand(p);
    rings.push_back(std::move(ring));
  }
  std::vector<PathChain> out;
  if (box.empty || !(box.height() > 0.0)) return out;

  std::vector<double> xs;
  std::vector<double> kept;
  for (int k = 0;; ++k) {
    const double z = box.min.z + spacing / 2 + k * spacing;
    if (!(z < box.max.z)) break;
    xs.clear();
    for (const auto& ring : rings) {
      for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
        const Vec2 a = ring[j];
        const Vec2 b = ring[i];
        // Half-open rule: a vertex exactly on the line counts for the edge above it.
        if ((a.z > z) != (b.z > z)) xs.push_back(a.x + (z - a.z) * (b.x - a.x) / (b.z - a.z));
      }
    }
    std::sort(xs.begin(), xs.end());
    // Close pairs bounding an inside sliver are dropped (parity is kept).
    // A close pair bounding an outside gap splits the span instead, so no
    // span ever crosses outside the region.
    kept.clear();
    bool inside = false;
    for (std::size_t i = 0; i < xs.size();) {
      if (!inside && i + 1 < xs.size() && xs[i + 1] - xs[i] < min_gap) {
        i += 2;
        continue;
      }
      kept.push_back(xs[i]);
      inside = !inside;
      ++i;
    }
    std::vector<PathChain> line;
    for (std::size_t i = 0; i + 1 < kept.size(); i += 2) {
      if (kept[i + 1] - kept[i] <= 1e-9) continue;
      line.emplace_back(CurveSegment::line({kept[i], z}, {kept[i + 1], z}));
    }
    if (k % 2 == 1) {
      std::reverse(line.begin(), line.end());
      for (auto& c : line) c = c.reversed();
    }
    for (auto& c : line) out.push_back(std::move(c));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ordering.

Vec2 start_anchor_point(const std::vector<DrawPath>& paths, StartAnchor anchor) {
  geom::Box box;
  for (const auto& p : paths) box.expand(geom::control_box(p.chain));
  if (box.empty) return {};
  switch (anchor) {
    case StartAnchor::bottom_center: return {(box.min.x + box.max.x) / 2, box.min.z};
    case StartAnchor::bottom_left: return {box.min.x, box.min.z};
    case StartAnchor::bottom_right: return {box.max.x, box.min.z};
    case StartAnchor::top_left: return {box.min.x, box.max.z};
    case StartAnchor::top_right: return {box.max.x, box.max.z};
  }
  return {};
}

std::vector<DrawPath> sort_paths(std::vector<DrawPath> paths, double rank_z_weight, Vec2 anchor) {
  if (paths.empty()) throw Error(ErrorCode::empty_plan, "nothing to sort");
  const std::size_t n = paths.size();
  std::vector<bool> used(n, false);
  std::vector<DrawPath> out;
  out.reserve(n);
  Vec2 prev = anchor;
  for (std::size_t step = 0; step < n; ++step) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t pick = 0;
    bool flip = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (used[i]) continue;
      const Vec2 ends[2] = {paths[i].start(), paths[i].end()};
      for (int e = 0; e < 2; ++e) {
        const Vec2 chosen = ends[e];
        const Vec2 other = ends[1 - e];
        const double rank = step == 0 ? geom::distance(chosen, anchor)
                                      : geom::distance(chosen, prev) + rank_z_weight * (chosen.z + other.z);
        if (rank < best) {
          best = rank;
          pick = i;
          flip = e == 1;
        }
      }
    }
    used[pick] = true;
    DrawPath p = flip ? paths[pick].flipped() : paths[pick];
    p.origin = pick;
    p.index = step;
    prev = p.end();
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<DrawPath> sort_paths(std::vector<DrawPath> paths, double rank_z_weight, StartAnchor anchor) {
  const Vec2 a = start_anchor_point(paths, anchor);
  return sort_paths(std::move(paths), rank_z_weight, a);
}

// ---------------------------------------------------------------------------
// Compilation.

int palette_index(MissionPlan& plan, const std::string& color) {
  const auto it = std::find(plan.palette.begin(), plan.palette.end(), color);
  if (it != plan.palette.end() && it != plan.palette.begin()) {
    return static_cast<int>(it - plan.palette.begin());
  }
  plan.palette.push_back(color);
  return static_cast<int>(plan.palette.size() - 1);
}

MissionPlan compile_mission(const svg::SvgPathSet& wall_paths, const PlanParams& params,
                            const svg::WallRect& wall) {
  params.validate();
  MissionPlan plan;
  plan.params = params;
  plan.wall = wall;
  plan.warnings = wall_paths.warnings;

  // Stroke contours are joined per colour; fill contours are grouped per
  // source element so that holes stay with their outline.
  std::vector<std::string> stroke_colors;
  std::map<std::string, std::vector<Tracked>> strokes;
  std::vector<std::string> fill_sources;
  std::map<std::string, std::vector<const svg::SvgPath*>> fills;
  for (std::size_t i = 0; i < wall_paths.paths.size(); ++i) {
    const auto& p = wall_paths.paths[i];
    if (p.mode == svg::DrawMode::stroke) {
      if (!strokes.contains(p.color)) stroke_colors.push_back(p.color);
      strokes[p.color].push_back({p.chain, i});
    } else {
      if (!fills.contains(p.source_id)) fill_sources.push_back(p.source_id);
      fills[p.source_id].push_back(&p);
    }
  }

  std::vector<std::future<std::vector<DrawPath>>> jobs;
  for (const auto& color : stroke_colors) {
    const int color_id = palette_index(plan, color);
    jobs.push_back(std::async(std::launch::async, [&, color_id, group = &strokes[color]] {
      std::vector<DrawPath> out;
      for (const auto& t : join_tracked(*group, params.join_angle_max)) {
        if (t.chain.length() < params.min_path_len) continue;
        DrawPath d = extend_path(t.chain, params.extension_len);
        d.color = color_id;
        d.mode = PathMode::stroke;
        d.source_id = wall_paths.paths[t.origin].source_id;
        out.push_back(std::move(d));
      }
      return out;
    }));
  }
  for (const auto& source : fill_sources) {
    const auto& group = fills[source];
    const int color_id = palette_index(plan, group.front()->color);
    jobs.push_back(std::async(std::launch::async, [&, color_id, group = &group, source] {
      std::vector<PathChain> contours;
      for (const auto* p : *group) contours.push_back(p->chain);
      std::vector<DrawPath> out;
      for (const auto& line : generate_infill(contours, params.infill_spacing, params.infill_min_gap)) {
        DrawPath d = extend_path(line, params.extension_len);
        d.color = color_id;
        d.mode = PathMode::fill;
        d.source_id = source;
        out.push_back(std::move(d));
      }
      return out;
    }));
  }
  std::vector<DrawPath> all;
  for (auto& j : jobs) {
    auto part = j.get();
    std::move(part.begin(), part.end(), std::back_inserter(all));
  }
  if (all.empty()) throw Error(ErrorCode::empty_plan, "no drawable paths");
  plan.paths = sort_paths(std::move(all), params.rank_z_weight, params.start_anchor);
  return plan;
}

MissionPlan compile_svg(std::string_view document, const svg::WallRect& wall, const PlanParams& params) {
  return compile_mission(svg::map_to_wall(svg::parse_svg(document), wall), params, wall);
}

std::string_view to_string(PathMode m) {
  switch (m) {
    case PathMode::stroke: return "stroke";
    case PathMode::fill: return "fill";
    case PathMode::erase: return "erase";
  }
  return "stroke";
}

std::string_view to_string(StartAnchor a) {
  switch (a) {
    case StartAnchor::bottom_center: return "bottom_center";
    case StartAnchor::bottom_left: return "bottom_left";
    case StartAnchor::bottom_right: return "bottom_right";
    case StartAnchor::top_left: return "top_left";
    case StartAnchor::top_right: return "top_right";
  }
  return "bottom_center";
}

StartAnchor start_anchor_from_string(std::string_view s) {
  for (auto a : {StartAnchor::bottom_center, StartAnchor::bottom_left, StartAnchor::bottom_right,
                 StartAnchor::top_left, StartAnchor::top_right}) {
    if (to_string(a) == s) return a;
  }
  throw Error(ErrorCode::invalid_argument, "unknown start anchor \"" + std::string(s) + "\"");
}

}  // namespace mural::plan
