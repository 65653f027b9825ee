#include <doctest.h>

#include <numbers>
#include <random>

#include "mural/error.hpp"
#include "mural/geom.hpp"
#include "support/oracles.hpp"

using namespace mural::geom;
using mural::ErrorCode;

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

const std::array<oracle::P, 4> kArch{{{0, 0}, {0, 1}, {1, 1}, {1, 0}}};

CurveSegment arch() { return CurveSegment::cubic({0, 0}, {0, 1}, {1, 1}, {1, 0}); }

}  // namespace

TEST_CASE("sample_path on a straight line") {
  const auto pts = sample_path(PathChain(CurveSegment::line({0, 0}, {1, 0})), 0.5);
  REQUIRE(pts.size() == 3);
  CHECK(pts[0] == Vec2{0, 0});
  CHECK(pts[1].x == doctest::Approx(0.5));
  CHECK(pts[1].z == 0.0);
  CHECK(pts[2] == Vec2{1, 0});
}

TEST_CASE("sample_path on a collinear cubic matches the line case") {
  const auto pts =
      sample_path(PathChain(CurveSegment::cubic({0, 0}, {1.0 / 3, 0}, {2.0 / 3, 0}, {1, 0})), 0.5);
  REQUIRE(pts.size() == 3);
  CHECK(pts[0] == Vec2{0, 0});
  CHECK(pts[1].x == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(pts[1].z == doctest::Approx(0.0));
  CHECK(pts[2] == Vec2{1, 0});
}

TEST_CASE("sample_path on a generic cubic tracks the Simpson oracle") {
  const double truth = oracle::simpson_length(kArch, 100000);
  const auto pts = sample_path(PathChain(arch()), 0.01);
  CHECK(std::abs(polyline_length(pts) - truth) < 1e-4);
  for (std::size_t i = 1; i < pts.size(); ++i) CHECK(distance(pts[i - 1], pts[i]) <= 0.01 + 1e-12);
  CHECK(pts.front() == Vec2{0, 0});
  CHECK(pts.back() == Vec2{1, 0});
}

TEST_CASE("sample_path converges from below") {
  const PathChain chain(arch());
  double prev = 0.0;
  for (double spacing : {0.5, 0.2, 0.1, 0.05, 0.01, 0.002}) {
    const double len = polyline_length(sample_path(chain, spacing));
    CHECK(len >= prev - 1e-12);
    CHECK(len <= chain.length() + 1e-12);
    prev = len;
  }
  CHECK(prev == doctest::Approx(chain.length()).epsilon(1e-5));
}

TEST_CASE("sample_path rejects bad spacing") {
  CHECK(code_of([] { sample_path(PathChain(arch()), 0.0); }) == ErrorCode::invalid_argument);
}

TEST_CASE("arc_length") {
  CHECK(arc_length(CurveSegment::line({0, 0}, {3, 4})) == doctest::Approx(5.0));
  CHECK(arc_length(CurveSegment::cubic({0, 0}, {1.0 / 3, 0}, {2.0 / 3, 0}, {1, 0})) ==
        doctest::Approx(1.0).epsilon(1e-12));
  const double oracle_len = oracle::chord_length(kArch, 1000000);
  CHECK(std::abs(arc_length(arch()) - oracle_len) < 1e-5);
  CHECK(std::abs(arc_length(arch()) - oracle::simpson_length(kArch, 100000)) / oracle_len < 1e-6);
}

TEST_CASE("degenerate segments are rejected") {
  CHECK(code_of([] { CurveSegment::line({1, 1}, {1, 1}); }) == ErrorCode::degenerate_geometry);
  CHECK(code_of([] { CurveSegment::cubic({2, 0}, {2, 0}, {2, 0}, {2, 0}); }) ==
        ErrorCode::degenerate_geometry);
  CHECK(code_of([] { CurveSegment::line({0, 0}, {NAN, 1}); }) == ErrorCode::degenerate_geometry);
  CHECK(code_of([] { PathChain(std::vector<CurveSegment>{}); }) == ErrorCode::degenerate_geometry);
}

TEST_CASE("chains must be continuous") {
  std::vector<CurveSegment> segs{CurveSegment::line({0, 0}, {1, 0}),
                                 CurveSegment::line({1, 1e-6}, {2, 0})};
  CHECK(code_of([&] { PathChain chain(segs); }) == ErrorCode::invalid_argument);
}

TEST_CASE("end_tangent_angle") {
  const PathChain a(CurveSegment::line({0, 0}, {1, 0}));
  CHECK(end_tangent_angle(a, PathChain(CurveSegment::line({1, 0}, {2, 0}))) ==
        doctest::Approx(0.0));
  CHECK(end_tangent_angle(a, PathChain(CurveSegment::line({1, 0}, {1, 1}))) ==
        doctest::Approx(std::numbers::pi / 2));
  CHECK(end_tangent_angle(a, PathChain(CurveSegment::cubic({1, 0}, {2, 1}, {3, 1}, {4, 0}))) ==
        doctest::Approx(std::numbers::pi / 4));
  // Coincident first control point falls back to the next distinct one.
  CHECK(end_tangent_angle(a, PathChain(CurveSegment::cubic({1, 0}, {1, 0}, {1, 2}, {3, 3}))) ==
        doctest::Approx(std::numbers::pi / 2));
  CHECK(code_of([&] { end_tangent_angle(a, PathChain(CurveSegment::line({1.1, 0}, {2, 0}))); }) ==
        ErrorCode::not_adjacent);
}

TEST_CASE("end_tangent_angle is symmetric under reversing both chains") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int i = 0; i < 200; ++i) {
    const Vec2 j{u(rng), u(rng)};
    const PathChain a(CurveSegment::cubic({u(rng), u(rng)}, {u(rng), u(rng)}, {u(rng), u(rng)}, j));
    const PathChain b(CurveSegment::cubic(j, {u(rng), u(rng)}, {u(rng), u(rng)}, {u(rng), u(rng)}));
    CHECK(end_tangent_angle(a, b) == doctest::Approx(end_tangent_angle(b.reversed(), a.reversed())));
  }
}

TEST_CASE("geometry is rigid-motion equivariant") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::uniform_real_distribution<double> ang(-std::numbers::pi, std::numbers::pi);
  for (int i = 0; i < 50; ++i) {
    const Vec2 j{u(rng), u(rng)};
    const PathChain chain(std::vector<CurveSegment>{
        CurveSegment::cubic({u(rng), u(rng)}, {u(rng), u(rng)}, {u(rng), u(rng)}, j),
        CurveSegment::line(j, {u(rng), u(rng)})});
    const Affine2 m = Affine2::rigid(ang(rng), {u(rng), u(rng)});
    const PathChain moved = chain.transformed(m);
    CHECK(moved.length() == doctest::Approx(chain.length()).epsilon(1e-10));
    const auto a = sample_path(chain, 0.05);
    const auto b = sample_path(moved, 0.05);
    REQUIRE(a.size() == b.size());
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(distance(m.apply(a[k]), b[k]) < 1e-9);
  }
}
