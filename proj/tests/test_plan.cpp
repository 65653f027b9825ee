#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "mural/error.hpp"
#include "mural/plan.hpp"
#include "support/oracles.hpp"
#include "support/shapes.hpp"

using namespace mural;
using namespace mural::plan;
using geom::CurveSegment;
using geom::PathChain;
using geom::Vec2;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const mural::Error& e) {
    return e.code();
  }
  FAIL("expected mural::Error");
  return ErrorCode::invalid_argument;
}

constexpr double kDeg = std::numbers::pi / 180.0;

PathChain line(Vec2 a, Vec2 b) { return PathChain(CurveSegment::line(a, b)); }

PathChain unit_square() {
  return PathChain(std::vector<CurveSegment>{
      CurveSegment::line({0, 0}, {1, 0}), CurveSegment::line({1, 0}, {1, 1}),
      CurveSegment::line({1, 1}, {0, 1}), CurveSegment::line({0, 1}, {0, 0})});
}

// Five cubics of a sine-like wave, C1 at every junction.
std::vector<CurveSegment> smooth_wave() {
  std::vector<CurveSegment> segs;
  for (int i = 0; i < 5; ++i) {
    const double x = i;
    segs.push_back(CurveSegment::cubic({x, 0}, {x + 0.3, 0.3}, {x + 0.7, -0.3}, {x + 1, 0}));
  }
  return segs;
}

double total_length(const std::vector<PathChain>& v) {
  double s = 0.0;
  for (const auto& c : v) s += c.length();
  return s;
}

std::vector<oracle::Endpoints> endpoints(const std::vector<DrawPath>& paths) {
  std::vector<oracle::Endpoints> e;
  for (const auto& p : paths) e.push_back({{p.start().x, p.start().z}, {p.end().x, p.end().z}});
  return e;
}

std::vector<DrawPath> random_paths(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.0, 3.0);
  std::vector<DrawPath> out;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a{u(rng), u(rng)};
    Vec2 b{u(rng), u(rng)};
    if (geom::distance(a, b) < 0.1) b = a + Vec2{0.5, 0.1};
    out.push_back(extend_path(line(a, b), 0.3));
  }
  return out;
}

}  // namespace

TEST_CASE("join_or_split: sharp square corners split") {
  const auto out = join_or_split({unit_square()}, 30 * kDeg);
  CHECK(out.size() == 4);
  for (const auto& c : out) CHECK(c.size() == 1);
}

TEST_CASE("join_or_split: tangent-continuous cubics stay one chain") {
  const auto segs = smooth_wave();
  CHECK(join_or_split({PathChain(segs)}, 30 * kDeg).size() == 1);
  // The same pieces handed over separately, shuffled and partly reversed.
  std::vector<PathChain> parts;
  for (std::size_t i : {3, 0, 4, 1, 2}) {
    PathChain c(segs[i]);
    parts.push_back(i % 2 ? c.reversed() : c);
  }
  const auto joined = join_or_split(parts, 30 * kDeg);
  REQUIRE(joined.size() == 1);
  CHECK(joined[0].size() == 5);
  CHECK(joined[0].length() == doctest::Approx(PathChain(segs).length()).epsilon(1e-12));
}

TEST_CASE("join_or_split: 10 degree kink merges, 40 degree kink does not") {
  const double a = 10 * kDeg;
  const auto out = join_or_split({line({0, 0}, {1, 0}), line({1, 0}, {1 + std::cos(a), std::sin(a)})}, 30 * kDeg);
  REQUIRE(out.size() == 1);
  CHECK(geom::distance(out[0].end(), {1 + std::cos(a), std::sin(a)}) < 1e-12);
  // Check the angle arithmetic independently: 180 - 170 = 10 degrees.
  CHECK(std::acos(std::cos(a)) == doctest::Approx(10 * kDeg));
  const double b = 40 * kDeg;
  CHECK(join_or_split({line({0, 0}, {1, 0}), line({1, 0}, {1 + std::cos(b), std::sin(b)})}, 30 * kDeg).size() == 2);
}

TEST_CASE("join_or_split: empty in, empty out") { CHECK(join_or_split({}, 0.5).empty()); }

TEST_CASE("join_or_split is idempotent and conserves length") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> pick(0, 5);
  for (int trial = 0; trial < 200; ++trial) {
    // Random polylines on a coarse lattice so endpoints coincide often.
    std::vector<PathChain> in;
    const int n = 2 + pick(rng);
    for (int i = 0; i < n; ++i) {
      std::vector<CurveSegment> segs;
      Vec2 p{static_cast<double>(pick(rng)), static_cast<double>(pick(rng))};
      const int len = 1 + pick(rng) % 4;
      for (int k = 0; k < len; ++k) {
        Vec2 q = p + Vec2{static_cast<double>(pick(rng) % 3) - 1.0, static_cast<double>(pick(rng) % 3) - 1.0};
        if (q == p) q = p + Vec2{1, 0};
        if (k % 2) {
          segs.push_back(CurveSegment::cubic(p, p + Vec2{u(rng), u(rng)} * 0.3, q + Vec2{u(rng), u(rng)} * 0.3, q));
        } else {
          segs.push_back(CurveSegment::line(p, q));
        }
        p = q;
      }
      in.emplace_back(std::move(segs));
    }
    for (double thr : {10 * kDeg, 30 * kDeg, 60 * kDeg, 100 * kDeg}) {
      const auto once = join_or_split(in, thr);
      const auto twice = join_or_split(once, thr);
      REQUIRE(once.size() == twice.size());
      for (std::size_t i = 0; i < once.size(); ++i) CHECK(once[i] == twice[i]);
      CHECK(std::abs(total_length(once) - total_length(in)) < 1e-9);
      // Maximality: no two open output chains could be merged.
      for (std::size_t i = 0; i < once.size(); ++i) {
        for (std::size_t j = 0; j < once.size(); ++j) {
          if (i == j || once[i].closed() || once[j].closed()) continue;
          if (geom::distance(once[i].end(), once[j].start()) <= geom::kJoinTolerance) {
            CHECK(geom::end_tangent_angle(once[i], once[j]) > thr);
          }
          if (geom::distance(once[i].end(), once[j].end()) <= geom::kJoinTolerance && i < j) {
            CHECK(geom::end_tangent_angle(once[i], once[j].reversed()) > thr);
          }
        }
      }
    }
  }
}

TEST_CASE("prune_short") {
  CHECK(prune_short({line({0, 0}, {0.02, 0})}, 0.04).empty());
  CHECK(prune_short({}, 0.04).empty());
  // A 2 cm piece joined into a 1 m chain is kept.
  const auto joined = join_or_split({line({0, 0}, {1, 0}), line({1, 0}, {1.02, 0})}, 30 * kDeg);
  const auto kept = prune_short(joined, 0.04);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].length() == doctest::Approx(1.02));
}

TEST_CASE("extend_path") {
  const auto p = extend_path(line({0, 0}, {1, 0}), 0.3);
  REQUIRE(p.lead_in);
  REQUIRE(p.lead_out);
  CHECK(p.lead_in->start().x == doctest::Approx(-0.3));
  CHECK(p.lead_in->end() == Vec2{0, 0});
  CHECK(p.lead_out->end().x == doctest::Approx(1.3));
  CHECK(p.spray_window.s_on == doctest::Approx(0.3));
  CHECK(p.spray_window.s_off == doctest::Approx(1.3));
  CHECK(p.extended_length() == doctest::Approx(1.6));

  const auto bare = extend_path(line({0, 0}, {1, 0}), 0.0);
  CHECK_FALSE(bare.lead_in);
  CHECK_FALSE(bare.lead_out);
  CHECK(bare.spray_window.s_on == 0.0);
  CHECK(bare.spray_window.s_off == doctest::Approx(1.0));

  const auto c = extend_path(PathChain(CurveSegment::cubic({0, 0}, {0, 1}, {1, 0}, {2, 1})), 0.3);
  const Vec2 off = c.lead_out->end() - Vec2{2, 1};
  CHECK(off.x == doctest::Approx(0.3 / std::sqrt(2.0)));
  CHECK(off.z == doctest::Approx(0.3 / std::sqrt(2.0)));
  CHECK(code_of([] { extend_path(line({0, 0}, {1, 0}), -1); }) == ErrorCode::invalid_argument);
}

TEST_CASE("spray window covers exactly the drawing portion, also after flipping") {
  std::mt19937_64 rng(9);
  for (auto& p : random_paths(rng, 50)) {
    CHECK(std::abs((p.spray_window.s_off - p.spray_window.s_on) - p.chain.length()) < 1e-9);
    const auto f = p.flipped();
    CHECK(std::abs((f.spray_window.s_off - f.spray_window.s_on) - p.chain.length()) < 1e-9);
    CHECK(f.spray_window.s_on == doctest::Approx(f.lead_in_length()));
    CHECK(f.start() == p.end());
    CHECK(f.reversed);
    CHECK(f.flipped().chain == p.chain);
  }
}

TEST_CASE("infill: unit square") {
  const auto lines = generate_infill({unit_square()}, 0.25, 0.005);
  REQUIRE(lines.size() == 4);
  const double zs[] = {0.125, 0.375, 0.625, 0.875};
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(lines[k].start().z == doctest::Approx(zs[k]));
    const double x0 = k % 2 == 0 ? 0.0 : 1.0;
    CHECK(lines[k].start().x == doctest::Approx(x0).epsilon(1e-12));
    CHECK(lines[k].end().x == doctest::Approx(1.0 - x0).epsilon(1e-12));
    // Oracle: the 1 mm raster row through the line is inside from x=0 to x=1.
    const std::vector<oracle::Ring> rings{{{0, 0}, {1, 0}, {1, 1}, {0, 1}}};
    int inside = 0;
    for (int i = 0; i < 1000; ++i) inside += oracle::inside_even_odd(rings, (i + 0.5) / 1000, zs[k]);
    CHECK(inside == 1000);
  }
}

TEST_CASE("infill: annulus splits scanlines crossing the hole") {
  const oracle::Ring hole{{0.25, 0.25}, {0.25, 0.75}, {0.75, 0.75}, {0.75, 0.25}};
  const auto lines = generate_infill({unit_square(), shapes::ring_chain(hole)}, 0.25, 0.005);
  // z = 0.125 and 0.875 miss the hole; 0.375 and 0.625 cross it.
  REQUIRE(lines.size() == 6);
  CHECK(lines[0].start().z == doctest::Approx(0.125));
  CHECK(lines[1].start().z == doctest::Approx(0.375));
  CHECK(lines[2].start().z == doctest::Approx(0.375));
  // Odd scanline runs right to left: the right span comes first.
  CHECK(lines[1].start().x == doctest::Approx(1.0));
  CHECK(lines[1].end().x == doctest::Approx(0.75));
  CHECK(lines[2].start().x == doctest::Approx(0.25));
  CHECK(lines[2].end().x == doctest::Approx(0.0).scale(1));
  CHECK(lines[3].start().x == doctest::Approx(0.0).scale(1));
  CHECK(lines[3].end().x == doctest::Approx(0.25));
}

TEST_CASE("infill: degenerate and open contours") {
  const PathChain flat(std::vector<CurveSegment>{CurveSegment::line({0, 0}, {1, 0}),
                                                 CurveSegment::line({1, 0}, {0, 0})});
  CHECK(generate_infill({flat}, 0.1, 0.005).empty());
  CHECK(code_of([] { generate_infill({line({0, 0}, {1, 1})}, 0.1, 0.005); }) == ErrorCode::open_contour);
  CHECK(generate_infill({}, 0.1, 0.005).empty());
}

TEST_CASE("infill: line count follows the scanline phase") {
  for (double h : {1.0, 1.1, 0.6, 2.0, 0.26}) {
    const oracle::Ring r{{0, 0}, {1, 0}, {1, h}, {0, h}};
    const auto lines = generate_infill({shapes::ring_chain(r)}, 0.25, 0.005);
    // Lines at s/2 + k s strictly below the top.
    int expected = 0;
    while (0.125 + expected * 0.25 < h) ++expected;
    CHECK(lines.size() == static_cast<std::size_t>(expected));
    if (std::fmod(h / 0.25, 1.0) < 0.5) CHECK(lines.size() == static_cast<std::size_t>(std::floor(h / 0.25)));
  }
}

TEST_CASE("infill: curved contour") {
  // Circle of radius 1 made of four cubics.
  const double k = 0.551915024494;
  const PathChain circle(std::vector<CurveSegment>{
      CurveSegment::cubic({1, 0}, {1, k}, {k, 1}, {0, 1}), CurveSegment::cubic({0, 1}, {-k, 1}, {-1, k}, {-1, 0}),
      CurveSegment::cubic({-1, 0}, {-1, -k}, {-k, -1}, {0, -1}),
      CurveSegment::cubic({0, -1}, {k, -1}, {1, -k}, {1, 0})});
  const auto lines = generate_infill({circle}, 0.1, 0.005);
  CHECK(lines.size() == 20);
  for (const auto& l : lines) {
    const double z = l.start().z;
    const double half = std::abs(l.end().x - l.start().x) / 2;
    CHECK(half == doctest::Approx(std::sqrt(1 - z * z)).epsilon(2e-3));
  }
}

TEST_CASE("infill spans stay inside random polygons with holes") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 50; ++trial) {
    const auto rings = shapes::random_polygon_with_holes(rng);
    std::vector<PathChain> contours;
    for (const auto& r : rings) contours.push_back(shapes::ring_chain(r));
    const auto lines = generate_infill(contours, 0.05, 0.005);
    for (const auto& l : lines) {
      const double x0 = std::min(l.start().x, l.end().x), x1 = std::max(l.start().x, l.end().x);
      for (double x = x0 + 1e-6; x < x1 - 1e-6; x += 0.001) {
        CHECK(oracle::inside_even_odd(rings, x, l.start().z));
      }
      CHECK(oracle::inside_even_odd(rings, x1 - 1e-6, l.start().z));
    }
  }
}

TEST_CASE("sort_paths: single path nearer by its end is reversed") {
  // Anchor at bottom-centre (0.5, 0); the end (1, 0) side is nearer after extension.
  auto p = extend_path(line({0.2, 1}, {0.6, 0}), 0.3);
  const auto out = sort_paths({p}, -1.0);
  REQUIRE(out.size() == 1);
  CHECK(out[0].reversed);
  CHECK(out[0].index == 0);
  CHECK(geom::distance(out[0].start(), p.end()) < 1e-12);
  CHECK(sort_paths({p.flipped()}, -1.0)[0].reversed);
  CHECK(code_of([] { sort_paths({}, -1.0); }) == ErrorCode::empty_plan);
}

TEST_CASE("sort_paths: printed rank prefers the higher of two equidistant segments") {
  // Previous endpoint at (0, 0.5) after the first pick; two candidates equidistant.
  std::vector<DrawPath> paths{extend_path(line({-0.5, 0.5}, {0, 0.5}), 0.0),
                              extend_path(line({1, 0}, {2, 0}), 0.0), extend_path(line({1, 1}, {2, 1}), 0.0)};
  const auto out = sort_paths(paths, -1.0, Vec2{-0.5, 0.5});
  REQUIRE(out.size() == 3);
  CHECK(out[0].origin == 0);
  // dist is equal (sqrt(1.25)); rank z=1: d - 2, rank z=0: d - 0.
  CHECK(out[1].origin == 2);
  CHECK(out[2].origin == 1);
  const auto up = sort_paths(paths, 1.0, Vec2{-0.5, 0.5});
  CHECK(up[1].origin == 1);
}

TEST_CASE("sort_paths agrees with the step-by-step oracle") {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<std::size_t> count(1, 8);
  std::uniform_real_distribution<double> weight(-2.0, 2.0);
  for (int trial = 0; trial < 300; ++trial) {
    const auto paths = random_paths(rng, count(rng));
    const double w = trial % 3 == 0 ? -1.0 : weight(rng);
    const Vec2 anchor = start_anchor_point(paths, StartAnchor::bottom_center);
    const auto out = sort_paths(paths, w, anchor);
    const auto expected = oracle::greedy_order(endpoints(paths), {anchor.x, anchor.z}, w);
    REQUIRE(out.size() == expected.size());
    std::set<std::size_t> seen;
    for (std::size_t i = 0; i < out.size(); ++i) {
      CHECK(out[i].origin == expected[i].path);
      CHECK(out[i].reversed == expected[i].reversed);
      CHECK(out[i].index == i);
      seen.insert(out[i].origin);
    }
    CHECK(seen.size() == paths.size());
    // Greedy-choice consistency: every alternative at every step ranks no better.
    const auto ends = endpoints(paths);
    std::vector<bool> used(paths.size(), false);
    oracle::P prev{anchor.x, anchor.z};
    for (std::size_t s = 0; s < out.size(); ++s) {
      auto rank = [&](oracle::P c, oracle::P o) {
        return s == 0 ? std::hypot(c.x - prev.x, c.z - prev.z)
                      : std::hypot(c.x - prev.x, c.z - prev.z) + w * (c.z + o.z);
      };
      const auto& e = ends[out[s].origin];
      const double chosen = out[s].reversed ? rank(e.end, e.start) : rank(e.start, e.end);
      for (std::size_t i = 0; i < ends.size(); ++i) {
        if (used[i]) continue;
        CHECK(rank(ends[i].start, ends[i].end) >= chosen - 1e-12);
        CHECK(rank(ends[i].end, ends[i].start) >= chosen - 1e-12);
      }
      used[out[s].origin] = true;
      prev = out[s].reversed ? e.start : e.end;
    }
  }
}

TEST_CASE("sort_paths with zero weight is nearest-neighbour") {
  std::mt19937_64 rng(78);
  std::uniform_int_distribution<std::size_t> count(1, 8);
  for (int trial = 0; trial < 200; ++trial) {
    const auto paths = random_paths(rng, count(rng));
    const Vec2 anchor = start_anchor_point(paths, StartAnchor::bottom_center);
    const auto out = sort_paths(paths, 0.0, anchor);
    const auto nn = oracle::nearest_neighbour(endpoints(paths), {anchor.x, anchor.z});
    REQUIRE(out.size() == nn.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      CHECK(out[i].origin == nn[i].path);
      CHECK(out[i].reversed == nn[i].reversed);
    }
  }
}

TEST_CASE("start anchors") {
  std::vector<DrawPath> paths{extend_path(line({0, 1}, {2, 1}), 0.3), extend_path(line({1, 3}, {1, 4}), 0.3)};
  CHECK(start_anchor_point(paths, StartAnchor::bottom_center) == Vec2{1, 1});
  CHECK(start_anchor_point(paths, StartAnchor::top_right) == Vec2{2, 4});
  CHECK(start_anchor_point(paths, StartAnchor::bottom_left) == Vec2{0, 1});
  CHECK(start_anchor_from_string("top_left") == StartAnchor::top_left);
  CHECK(code_of([] { start_anchor_from_string("middle"); }) == ErrorCode::invalid_argument);
}

namespace {
const char* kSquareSvg =
    "<svg xmlns='http://www.w3.org/2000/svg' viewBox='0 0 100 100'>"
    "<rect x='0' y='0' width='100' height='100' fill='none' stroke='#000'/></svg>";
}

TEST_CASE("compile_mission: square outline") {
  const auto plan = compile_svg(kSquareSvg, {0, 0, 1, 1});
  REQUIRE(plan.paths.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& p = plan.paths[i];
    CHECK(p.index == i);
    CHECK(p.lead_in_length() == doctest::Approx(0.3));
    CHECK(p.lead_out_length() == doctest::Approx(0.3));
    CHECK(p.spray_window.s_on == doctest::Approx(0.3));
    CHECK(p.spray_window.s_off == doctest::Approx(1.3));
    CHECK(p.mode == PathMode::stroke);
    CHECK(plan.palette.at(p.color) == "#000");
  }
}

TEST_CASE("compile_mission: nothing to draw") {
  CHECK(code_of([] {
          compile_svg("<svg xmlns='http://www.w3.org/2000/svg' viewBox='0 0 10 10'/>", {0, 0, 1, 1});
        }) == ErrorCode::empty_plan);
  // Only pruned-away strokes.
  CHECK(code_of([] {
          compile_svg("<svg xmlns='http://www.w3.org/2000/svg' viewBox='0 0 100 100'>"
                      "<path d='M0 0 L1 0'/></svg>",
                      {0, 0, 1, 1});
        }) == ErrorCode::empty_plan);
}

TEST_CASE("compile_mission: filled rectangle infill count") {
  for (double h : {1.0, 1.1, 0.75}) {
    const std::string doc = "<svg xmlns='http://www.w3.org/2000/svg' viewBox='0 0 1 " + std::to_string(h) +
                            "'><rect x='0' y='0' width='1' height='" + std::to_string(h) +
                            "' fill='red'/></svg>";
    PlanParams params;
    params.infill_spacing = 0.25;
    const auto plan = compile_svg(doc, {0, 0, 1, h}, params);
    CHECK(plan.paths.size() == static_cast<std::size_t>(std::floor(h / 0.25)));
    for (const auto& p : plan.paths) {
      CHECK(p.mode == PathMode::fill);
      CHECK(plan.palette.at(p.color) == "red");
    }
  }
}

TEST_CASE("compile_mission is deterministic") {
  std::string doc = "<svg xmlns='http://www.w3.org/2000/svg' viewBox='0 0 100 100'>";
  for (int i = 0; i < 12; ++i) {
    doc += "<circle cx='" + std::to_string(10 + 7 * i) + "' cy='50' r='" + std::to_string(3 + i % 4) +
           "' fill='" + (i % 2 ? "#f00" : "#00f") + "'/>";
    doc += "<path d='M" + std::to_string(5 * i) + " 90 l 20 2 l 3 -20' stroke='#0f0' fill='none'/>";
  }
  doc += "</svg>";
  const auto a = compile_svg(doc, {0, 0, 5, 5});
  for (int i = 0; i < 3; ++i) CHECK(plan_hash(compile_svg(doc, {0, 0, 5, 5})) == plan_hash(a));
  CHECK(a.palette.size() == 4);
}

TEST_CASE("plan JSON round-trip and hash") {
  PlanParams params;
  params.infill_spacing = 0.1;
  const auto plan = compile_svg(
      "<svg xmlns='http://www.w3.org/2000/svg' viewBox='0 0 100 100'>"
      "<circle cx='50' cy='50' r='30' fill='#123'/><path d='M10 10 C20 30 40 30 60 10' stroke='#abc' fill='none'/></svg>",
      {1, 2, 3, 3}, params);
  const std::string text = to_json_text(plan);
  const auto back = from_json_text(text);
  CHECK(to_json_text(back) == text);
  CHECK(plan_hash(back) == plan_hash(plan));
  CHECK(plan_hash(plan).size() == 64);
  REQUIRE(back.paths.size() == plan.paths.size());
  for (std::size_t i = 0; i < plan.paths.size(); ++i) {
    CHECK(back.paths[i].chain == plan.paths[i].chain);
    CHECK(back.paths[i].spray_window.s_on == plan.paths[i].spray_window.s_on);
  }
  auto modified = back;
  modified.paths.pop_back();
  CHECK(plan_hash(modified) != plan_hash(plan));

  CHECK(code_of([] { from_json_text("{}"); }) == ErrorCode::parse_error);
  CHECK(code_of([] { from_json_text("nope"); }) == ErrorCode::parse_error);
  CHECK(code_of([&] {
          std::string bad = text;
          bad.replace(bad.find("\"version\": 1"), 12, "\"version\": 9");
          from_json_text(bad);
        }) == ErrorCode::parse_error);
}

TEST_CASE("PlanParams validation") {
  PlanParams p;
  CHECK_NOTHROW(p.validate());
  p.join_angle_max = 0;
  CHECK(code_of([&] { p.validate(); }) == ErrorCode::invalid_argument);
  p = {};
  p.infill_spacing = -1;
  CHECK(code_of([&] { p.validate(); }) == ErrorCode::invalid_argument);
}
