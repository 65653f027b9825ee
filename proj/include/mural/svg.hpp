#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "mural/geom.hpp"

namespace mural::svg {

enum class DrawMode { stroke, fill };

struct SvgPath {
  geom::PathChain chain;
  DrawMode mode = DrawMode::stroke;
  std::string source_id;
  /// Paint colour as written in the document ("#ff0000", "red", ...).
  std::string color;
  bool closed = false;
};

struct ViewBox {
  double min_x = 0.0;
  double min_y = 0.0;
  double width = 0.0;
  double height = 0.0;

  bool empty() const { return !(width > 0.0) || !(height > 0.0); }
};

struct SvgPathSet {
  std::vector<SvgPath> paths;
  ViewBox view_box;
  /// Non-fatal findings, e.g. auto-closed fill contours.
  std::vector<std::string> warnings;
};

/// Target rectangle on the wall, metres.
struct WallRect {
  double x0 = 0.0;
  double z0 = 0.0;
  double width = 0.0;
  double height = 0.0;

  bool contains(geom::Vec2 p, double tol = 1e-9) const {
    return p.x >= x0 - tol && p.x <= x0 + width + tol && p.z >= z0 - tol &&
           p.z <= z0 + height + tol;
  }
};

/// Parses an SVG document. Supported: path (all commands), rect, line,
/// polyline, polygon, circle, ellipse, nested groups with transforms.
/// Quadratics and arcs come out as cubics.
SvgPathSet parse_svg(std::string_view document);

/// Parses only the `d` attribute grammar; chains come out in user units.
std::vector<geom::PathChain> parse_path_data(std::string_view d);

/// Uniform, aspect-preserving, centred placement of the view box inside
/// `wall`, with the SVG y axis flipped to point up.
SvgPathSet map_to_wall(const SvgPathSet& set, const WallRect& wall);

/// The affine map used by map_to_wall.
geom::Affine2 wall_transform(const ViewBox& box, const WallRect& wall);

/// Serializes a chain as path data ("M x y L ... C ..."), full precision.
std::string to_path_data(const geom::PathChain& chain);

/// Parses "x0,z0,w,h".
WallRect parse_wall_rect(std::string_view text);

}  // namespace mural::svg
