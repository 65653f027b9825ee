#include "mural/svg.hpp"

#include <expat.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>

#include "mural/error.hpp"

namespace mural::svg {

using geom::Affine2;
using geom::CurveSegment;
using geom::PathChain;
using geom::Vec2;

namespace {

// ---------------------------------------------------------------------------
// Minimal DOM on top of expat.

struct Node {
  std::string name;
  std::map<std::string, std::string> attrs;
  std::vector<std::unique_ptr<Node>> children;

  const std::string* attr(const std::string& key) const {
    auto it = attrs.find(key);
    return it == attrs.end() ? nullptr : &it->second;
  }
};

struct TreeBuilder {
  std::unique_ptr<Node> root;
  std::vector<Node*> stack;
};

void XMLCALL on_start(void* data, const XML_Char* name, const XML_Char** atts) {
  auto* b = static_cast<TreeBuilder*>(data);
  auto node = std::make_unique<Node>();
  node->name = name;
  for (int i = 0; atts[i] != nullptr; i += 2) node->attrs[atts[i]] = atts[i + 1];
  Node* raw = node.get();
  if (b->stack.empty()) {
    b->root = std::move(node);
  } else {
    b->stack.back()->children.push_back(std::move(node));
  }
  b->stack.push_back(raw);
}

void XMLCALL on_end(void* data, const XML_Char*) { static_cast<TreeBuilder*>(data)->stack.pop_back(); }

std::unique_ptr<Node> parse_xml(std::string_view doc) {
  TreeBuilder builder;
  std::unique_ptr<XML_ParserStruct, decltype(&XML_ParserFree)> parser(XML_ParserCreate(nullptr),
                                                                       &XML_ParserFree);
  XML_SetUserData(parser.get(), &builder);
  XML_SetElementHandler(parser.get(), on_start, on_end);
  if (XML_Parse(parser.get(), doc.data(), static_cast<int>(doc.size()), XML_TRUE) ==
      XML_STATUS_ERROR) {
    std::ostringstream msg;
    msg << XML_ErrorString(XML_GetErrorCode(parser.get())) << " at line "
        << XML_GetCurrentLineNumber(parser.get());
    throw Error(ErrorCode::parse_error, msg.str());
  }
  if (!builder.root) throw Error(ErrorCode::parse_error, "document has no root element");
  return std::move(builder.root);
}

// ---------------------------------------------------------------------------
// Number lists shared by path data, points and transforms.

class Lexer {
 public:
  explicit Lexer(std::string_view s) : s_(s) {}

  void skip_separators() {
    while (i_ < s_.size() && (std::isspace(static_cast<unsigned char>(s_[i_])) || s_[i_] == ',')) {
      ++i_;
    }
  }
  bool at_end() {
    skip_separators();
    return i_ >= s_.size();
  }
  char peek() {
    skip_separators();
    return i_ < s_.size() ? s_[i_] : '\0';
  }
  void advance() { ++i_; }
  bool next_is_number() {
    const char c = peek();
    return (c >= '0' && c <= '9') || c == '-' || c == '+' || c == '.';
  }

  double number() {
    skip_separators();
    const std::size_t begin = i_;
    if (i_ < s_.size() && (s_[i_] == '+' || s_[i_] == '-')) ++i_;
    bool digits = false;
    while (i_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[i_]))) { ++i_; digits = true; }
    if (i_ < s_.size() && s_[i_] == '.') {
      ++i_;
      while (i_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[i_]))) { ++i_; digits = true; }
    }
    if (!digits) fail("expected a number");
    if (i_ < s_.size() && (s_[i_] == 'e' || s_[i_] == 'E')) {
      std::size_t j = i_ + 1;
      if (j < s_.size() && (s_[j] == '+' || s_[j] == '-')) ++j;
      if (j < s_.size() && std::isdigit(static_cast<unsigned char>(s_[j]))) {
        while (j < s_.size() && std::isdigit(static_cast<unsigned char>(s_[j]))) ++j;
        i_ = j;
      }
    }
    std::size_t start = begin;
    if (s_[start] == '+') ++start;
    double value = 0.0;
    const auto res = std::from_chars(s_.data() + start, s_.data() + i_, value);
    if (res.ec != std::errc() || !std::isfinite(value)) fail("bad number");
    return value;
  }

  // Arc flags may be written without separators ("a1 1 0 011 1").
  bool flag() {
    const char c = peek();
    if (c != '0' && c != '1') fail("expected an arc flag");
    ++i_;
    return c == '1';
  }

  [[noreturn]] void fail(const char* what) const {
    throw Error(ErrorCode::parse_error,
                std::string(what) + " at offset " + std::to_string(i_) + " in \"" +
                    std::string(s_.substr(0, 80)) + "\"");
  }

 private:
  std::string_view s_;
  std::size_t i_ = 0;
};

std::vector<double> number_list(std::string_view text) {
  Lexer lex(text);
  std::vector<double> out;
  while (!lex.at_end()) out.push_back(lex.number());
  return out;
}

std::optional<double> length_attr(const Node& n, const std::string& key) {
  const std::string* v = n.attr(key);
  if (v == nullptr) return std::nullopt;
  double value = 0.0;
  const char* b = v->data();
  while (*b == ' ') ++b;
  const auto res = std::from_chars(b, v->data() + v->size(), value);
  if (res.ec != std::errc()) throw Error(ErrorCode::parse_error, "bad length in " + key + "=\"" + *v + "\"");
  return value;
}

double length_or(const Node& n, const std::string& key, double fallback) {
  return length_attr(n, key).value_or(fallback);
}

// ---------------------------------------------------------------------------
// Geometry builder: accumulates subpaths in user space.

struct Subpath {
  std::vector<CurveSegment> segments;
  bool closed = false;
};

class PathBuilder {
 public:
  void move_to(Vec2 p) {
    flush();
    cur_ = start_ = p;
    has_point_ = true;
  }
  void line_to(Vec2 p) {
    ensure_started();
    if (geom::distance(cur_, p) > 1e-12) open_.segments.push_back(CurveSegment::line(cur_, p));
    cur_ = p;
  }
  void cubic_to(Vec2 c1, Vec2 c2, Vec2 p) {
    ensure_started();
    if (geom::distance(cur_, c1) > 1e-12 || geom::distance(cur_, c2) > 1e-12 ||
        geom::distance(cur_, p) > 1e-12) {
      open_.segments.push_back(CurveSegment::cubic(cur_, c1, c2, p));
    }
    cur_ = p;
  }
  void quad_to(Vec2 q, Vec2 p) {
    const Vec2 c0 = cur_;
    cubic_to(c0 + (q - c0) * (2.0 / 3.0), p + (q - p) * (2.0 / 3.0), p);
  }
  void arc_to(double rx, double ry, double phi_deg, bool large, bool sweep, Vec2 p);
  void close() {
    ensure_started();
    if (geom::distance(cur_, start_) > 1e-12) {
      open_.segments.push_back(CurveSegment::line(cur_, start_));
    } else if (!open_.segments.empty()) {
      // Snap the final point onto the start so the contour is exactly closed.
      open_.segments.back() = open_.segments.back().with_end(start_);
    }
    cur_ = start_;
    open_.closed = true;
    flush();
    has_point_ = true;
  }
  Vec2 current() const { return cur_; }
  bool started() const { return has_point_; }

  std::vector<Subpath> finish() {
    flush();
    return std::move(done_);
  }

 private:
  void ensure_started() {
    if (!has_point_) throw Error(ErrorCode::parse_error, "path data must begin with a moveto");
  }
  void flush() {
    if (!open_.segments.empty()) done_.push_back(std::move(open_));
    open_ = Subpath{};
  }

  Vec2 cur_{};
  Vec2 start_{};
  bool has_point_ = false;
  Subpath open_;
  std::vector<Subpath> done_;
};

double vector_angle(Vec2 u, Vec2 v) {
  return std::atan2(geom::cross(u, v), geom::dot(u, v));
}

// Endpoint to centre parameterization, then pieces of at most a quarter turn.
void PathBuilder::arc_to(double rx, double ry, double phi_deg, bool large, bool sweep, Vec2 p) {
  ensure_started();
  const Vec2 p1 = cur_;
  if (geom::distance(p1, p) <= 1e-12) return;
  rx = std::abs(rx);
  ry = std::abs(ry);
  if (rx == 0.0 || ry == 0.0) {
    line_to(p);
    return;
  }
  const double phi = phi_deg * std::numbers::pi / 180.0;
  const double cphi = std::cos(phi);
  const double sphi = std::sin(phi);
  const Vec2 h = (p1 - p) * 0.5;
  const Vec2 q{cphi * h.x + sphi * h.z, -sphi * h.x + cphi * h.z};
  const double lambda = (q.x * q.x) / (rx * rx) + (q.z * q.z) / (ry * ry);
  if (lambda > 1.0) {
    rx *= std::sqrt(lambda);
    ry *= std::sqrt(lambda);
  }
  const double num = rx * rx * ry * ry - rx * rx * q.z * q.z - ry * ry * q.x * q.x;
  const double den = rx * rx * q.z * q.z + ry * ry * q.x * q.x;
  double coef = std::sqrt(std::max(0.0, num / den));
  if (large == sweep) coef = -coef;
  const Vec2 cq{coef * rx * q.z / ry, -coef * ry * q.x / rx};
  const Vec2 mid = (p1 + p) * 0.5;
  const Vec2 center{cphi * cq.x - sphi * cq.z + mid.x, sphi * cq.x + cphi * cq.z + mid.z};
  const Vec2 u{(q.x - cq.x) / rx, (q.z - cq.z) / ry};
  const Vec2 v{(-q.x - cq.x) / rx, (-q.z - cq.z) / ry};
  const double theta1 = vector_angle({1, 0}, u);
  double dtheta = std::fmod(vector_angle(u, v), 2 * std::numbers::pi);
  if (!sweep && dtheta > 0) dtheta -= 2 * std::numbers::pi;
  if (sweep && dtheta < 0) dtheta += 2 * std::numbers::pi;

  const int pieces = std::max(1, static_cast<int>(std::ceil(std::abs(dtheta) / (std::numbers::pi / 2) - 1e-9)));
  const double delta = dtheta / pieces;
  const double k = 4.0 / 3.0 * std::tan(delta / 4.0);
  auto map = [&](double x, double z) {
    return Vec2{center.x + cphi * rx * x - sphi * ry * z, center.z + sphi * rx * x + cphi * ry * z};
  };
  double a = theta1;
  for (int i = 0; i < pieces; ++i) {
    const double b = a + delta;
    const double ca = std::cos(a), sa = std::sin(a), cb = std::cos(b), sb = std::sin(b);
    const Vec2 c1 = map(ca - k * sa, sa + k * ca);
    const Vec2 c2 = map(cb + k * sb, sb - k * cb);
    const Vec2 end = i + 1 == pieces ? p : map(cb, sb);
    cubic_to(c1, c2, end);
    a = b;
  }
}

// Minimax quarter-circle constant: max radial error 1.96e-4 r.
constexpr double kCircleKappa = 0.551915024494;

void ellipse_path(PathBuilder& b, double cx, double cy, double rx, double ry) {
  const double kx = kCircleKappa * rx;
  const double ky = kCircleKappa * ry;
  b.move_to({cx + rx, cy});
  b.cubic_to({cx + rx, cy + ky}, {cx + kx, cy + ry}, {cx, cy + ry});
  b.cubic_to({cx - kx, cy + ry}, {cx - rx, cy + ky}, {cx - rx, cy});
  b.cubic_to({cx - rx, cy - ky}, {cx - kx, cy - ry}, {cx, cy - ry});
  b.cubic_to({cx + kx, cy - ry}, {cx + rx, cy - ky}, {cx + rx, cy});
  b.close();
}

void run_path_data(PathBuilder& b, std::string_view d) {
  Lexer lex(d);
  char cmd = 0;
  char prev = 0;
  Vec2 last_cubic_ctrl{};
  Vec2 last_quad_ctrl{};
  while (!lex.at_end()) {
    const char c = lex.peek();
    if (std::isalpha(static_cast<unsigned char>(c))) {
      cmd = c;
      lex.advance();
    } else if (cmd == 0) {
      lex.fail("path data must begin with a command");
    } else if (cmd == 'Z' || cmd == 'z') {
      lex.fail("number after closepath");
    }
    const bool rel = std::islower(static_cast<unsigned char>(cmd)) != 0;
    const Vec2 base = rel ? b.current() : Vec2{};
    auto point = [&] {
      const double x = lex.number();
      const double y = lex.number();
      return base + Vec2{x, y};
    };
    switch (std::toupper(static_cast<unsigned char>(cmd))) {
      case 'M': {
        // A relative first moveto is relative to the origin.
        const Vec2 p = (rel && !b.started()) ? Vec2{lex.number(), lex.number()} : point();
        b.move_to(p);
        cmd = rel ? 'l' : 'L';
        break;
      }
      case 'L': b.line_to(point()); break;
      case 'H': {
        const double x = lex.number();
        b.line_to({rel ? b.current().x + x : x, b.current().z});
        break;
      }
      case 'V': {
        const double y = lex.number();
        b.line_to({b.current().x, rel ? b.current().z + y : y});
        break;
      }
      case 'C': {
        const Vec2 c1 = point();
        const Vec2 c2 = point();
        const Vec2 p = point();
        b.cubic_to(c1, c2, p);
        last_cubic_ctrl = c2;
        break;
      }
      case 'S': {
        const Vec2 cur = b.current();
        const bool chained = prev == 'C' || prev == 'S';
        const Vec2 c1 = chained ? cur * 2.0 - last_cubic_ctrl : cur;
        const Vec2 c2 = point();
        const Vec2 p = point();
        b.cubic_to(c1, c2, p);
        last_cubic_ctrl = c2;
        break;
      }
      case 'Q': {
        const Vec2 q = point();
        const Vec2 p = point();
        b.quad_to(q, p);
        last_quad_ctrl = q;
        break;
      }
      case 'T': {
        const Vec2 cur = b.current();
        const bool chained = prev == 'Q' || prev == 'T';
        const Vec2 q = chained ? cur * 2.0 - last_quad_ctrl : cur;
        const Vec2 p = point();
        b.quad_to(q, p);
        last_quad_ctrl = q;
        break;
      }
      case 'A': {
        const double rx = lex.number();
        const double ry = lex.number();
        const double rot = lex.number();
        const bool large = lex.flag();
        const bool sweep = lex.flag();
        b.arc_to(rx, ry, rot, large, sweep, point());
        break;
      }
      case 'Z': b.close(); break;
      default: lex.fail("unknown path command");
    }
    prev = static_cast<char>(std::toupper(static_cast<unsigned char>(cmd)));
  }
}

// ---------------------------------------------------------------------------
// Transforms.

Affine2 parse_transform(std::string_view text) {
  Affine2 m;
  std::size_t i = 0;
  auto skip = [&] {
    while (i < text.size() && (std::isspace(static_cast<unsigned char>(text[i])) || text[i] == ',')) ++i;
  };
  while (true) {
    skip();
    if (i >= text.size()) break;
    const std::size_t name_begin = i;
    while (i < text.size() && std::isalpha(static_cast<unsigned char>(text[i]))) ++i;
    const std::string name(text.substr(name_begin, i - name_begin));
    skip();
    if (i >= text.size() || text[i] != '(') {
      throw Error(ErrorCode::parse_error, "bad transform \"" + std::string(text) + "\"");
    }
    const std::size_t close = text.find(')', i);
    if (close == std::string_view::npos) throw Error(ErrorCode::parse_error, "unterminated transform");
    const auto args = number_list(text.substr(i + 1, close - i - 1));
    i = close + 1;
    const double deg = std::numbers::pi / 180.0;
    Affine2 t;
    if (name == "matrix" && args.size() == 6) {
      t = {args[0], args[1], args[2], args[3], args[4], args[5]};
    } else if (name == "translate" && (args.size() == 1 || args.size() == 2)) {
      t = Affine2::translation(args[0], args.size() == 2 ? args[1] : 0.0);
    } else if (name == "scale" && (args.size() == 1 || args.size() == 2)) {
      t = Affine2::scaling(args[0], args.size() == 2 ? args[1] : args[0]);
    } else if (name == "rotate" && (args.size() == 1 || args.size() == 3)) {
      t = Affine2::rotation(args[0] * deg);
      if (args.size() == 3) {
        t = Affine2::translation(args[1], args[2])
                .compose(t)
                .compose(Affine2::translation(-args[1], -args[2]));
      }
    } else if (name == "skewX" && args.size() == 1) {
      t = {1, 0, std::tan(args[0] * deg), 1, 0, 0};
    } else if (name == "skewY" && args.size() == 1) {
      t = {1, std::tan(args[0] * deg), 0, 1, 0, 0};
    } else {
      throw Error(ErrorCode::parse_error, "bad transform \"" + std::string(text) + "\"");
    }
    m = m.compose(t);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Presentation attributes.

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

struct Style {
  std::optional<std::string> fill;
  std::optional<std::string> stroke;
  Affine2 ctm;
  bool hidden = false;
};

std::map<std::string, std::string> inline_style(const Node& n) {
  std::map<std::string, std::string> out;
  const std::string* style = n.attr("style");
  if (style == nullptr) return out;
  std::stringstream ss(*style);
  std::string decl;
  while (std::getline(ss, decl, ';')) {
    const auto colon = decl.find(':');
    if (colon == std::string::npos) continue;
    out[lower(trim(decl.substr(0, colon)))] = trim(decl.substr(colon + 1));
  }
  return out;
}

const std::set<std::string, std::less<>> kUnsupportedElements = {
    "text",  "tspan",   "textPath", "linearGradient", "radialGradient", "clipPath",
    "mask",  "pattern", "image",    "filter",         "foreignObject",  "style",
    "use",   "marker",  "symbol"};

const std::set<std::string, std::less<>> kIgnoredElements = {"title", "desc", "metadata"};

class Walker {
 public:
  explicit Walker(SvgPathSet& out) : out_(out) {}

  void visit(const Node& n, const Style& parent) {
    std::string name = n.name;
    if (name.rfind("svg:", 0) == 0) name = name.substr(4);
    if (name.find(':') != std::string::npos) return;  // foreign namespace (editor metadata)
    if (kUnsupportedElements.contains(name)) {
      throw Error(ErrorCode::unsupported_feature, "element <" + name + ">");
    }
    if (kIgnoredElements.contains(name)) return;
    for (const char* key : {"clip-path", "mask", "filter"}) {
      if (n.attr(key) != nullptr) {
        throw Error(ErrorCode::unsupported_feature, std::string(key) + " on <" + name + ">");
      }
    }

    Style style = parent;
    const auto css = inline_style(n);
    auto pick = [&](const char* key) -> std::optional<std::string> {
      if (auto it = css.find(key); it != css.end()) return it->second;
      if (const std::string* v = n.attr(key)) return trim(*v);
      return std::nullopt;
    };
    for (const char* key : {"clip-path", "mask", "filter"}) {
      if (css.contains(key)) throw Error(ErrorCode::unsupported_feature, std::string(key) + " on <" + name + ">");
    }
    if (auto f = pick("fill")) style.fill = lower(*f);
    if (auto s = pick("stroke")) style.stroke = lower(*s);
    for (const auto* paint : {&style.fill, &style.stroke}) {
      if (*paint && paint->value().find("url(") != std::string::npos) {
        throw Error(ErrorCode::unsupported_feature, "paint server on <" + name + ">");
      }
    }
    if (auto d = pick("display"); d && lower(*d) == "none") style.hidden = true;
    if (const std::string* t = n.attr("transform")) style.ctm = style.ctm.compose(parse_transform(*t));

    if (name == "defs") {
      // Only scanned for unsupported content; nothing in defs is drawn.
      Style inert = style;
      inert.hidden = true;
      for (const auto& c : n.children) visit(*c, inert);
      return;
    }
    if (name == "g" || name == "svg" || name == "a" || name == "switch") {
      for (const auto& c : n.children) visit(*c, style);
      return;
    }

    PathBuilder builder;
    bool force_closed = false;
    if (name == "path") {
      if (const std::string* d = n.attr("d")) run_path_data(builder, *d);
    } else if (name == "line") {
      builder.move_to({length_or(n, "x1", 0), length_or(n, "y1", 0)});
      builder.line_to({length_or(n, "x2", 0), length_or(n, "y2", 0)});
    } else if (name == "polyline" || name == "polygon") {
      const std::string* pts = n.attr("points");
      const auto nums = pts ? number_list(*pts) : std::vector<double>{};
      for (std::size_t i = 0; i + 1 < nums.size(); i += 2) {
        if (i == 0) builder.move_to({nums[0], nums[1]});
        else builder.line_to({nums[i], nums[i + 1]});
      }
      if (name == "polygon" && nums.size() >= 4) builder.close();
    } else if (name == "rect") {
      rect(builder, n);
      force_closed = true;
    } else if (name == "circle") {
      const double r = length_or(n, "r", 0);
      if (r > 0) ellipse_path(builder, length_or(n, "cx", 0), length_or(n, "cy", 0), r, r);
    } else if (name == "ellipse") {
      const double rx = length_or(n, "rx", 0);
      const double ry = length_or(n, "ry", 0);
      if (rx > 0 && ry > 0) ellipse_path(builder, length_or(n, "cx", 0), length_or(n, "cy", 0), rx, ry);
    } else {
      out_.warnings.push_back("ignored element <" + name + ">");
      return;
    }
    (void)force_closed;
    if (style.hidden) return;
    emit(n, name, style, builder.finish());
  }

 private:
  static void rect(PathBuilder& b, const Node& n) {
    const double x = length_or(n, "x", 0), y = length_or(n, "y", 0);
    const double w = length_or(n, "width", 0), h = length_or(n, "height", 0);
    if (!(w > 0) || !(h > 0)) return;
    auto rx_attr = length_attr(n, "rx");
    auto ry_attr = length_attr(n, "ry");
    double rx = rx_attr.value_or(ry_attr.value_or(0.0));
    double ry = ry_attr.value_or(rx_attr.value_or(0.0));
    rx = std::clamp(rx, 0.0, w / 2);
    ry = std::clamp(ry, 0.0, h / 2);
    if (rx <= 0 || ry <= 0) {
      b.move_to({x, y});
      b.line_to({x + w, y});
      b.line_to({x + w, y + h});
      b.line_to({x, y + h});
      b.close();
      return;
    }
    b.move_to({x + rx, y});
    b.line_to({x + w - rx, y});
    b.arc_to(rx, ry, 0, false, true, {x + w, y + ry});
    b.line_to({x + w, y + h - ry});
    b.arc_to(rx, ry, 0, false, true, {x + w - rx, y + h});
    b.line_to({x + rx, y + h});
    b.arc_to(rx, ry, 0, false, true, {x, y + h - ry});
    b.line_to({x, y + ry});
    b.arc_to(rx, ry, 0, false, true, {x + rx, y});
    b.close();
  }

  void emit(const Node& n, const std::string& name, const Style& style, std::vector<Subpath> subpaths) {
    const std::string* id_attr = n.attr("id");
    const std::string id = id_attr ? *id_attr : name + std::to_string(++counter_);
    const bool fill = style.fill.has_value() && *style.fill != "none";
    // Elements that are neither filled nor stroked are invisible.
    if (!fill && style.stroke.has_value() && *style.stroke == "none") return;
    for (auto& sp : subpaths) {
      std::vector<CurveSegment> segs;
      segs.reserve(sp.segments.size());
      try {
        for (const auto& s : sp.segments) segs.push_back(s.transformed(style.ctm));
      } catch (const Error&) {
        out_.warnings.push_back("dropped degenerate subpath in " + id);
        continue;
      }
      bool closed = sp.closed;
      if (fill && !closed) {
        const Vec2 a = segs.back().end();
        const Vec2 b = segs.front().start();
        if (geom::distance(a, b) > 1e-12) segs.push_back(CurveSegment::line(a, b));
        else segs.back() = segs.back().with_end(b);
        closed = true;
        out_.warnings.push_back("auto-closed open fill contour in " + id);
      }
      double length = 0.0;
      for (const auto& s : segs) length += geom::arc_length(s);
      if (!(length > 0.0)) continue;
      SvgPath path{PathChain(std::move(segs)), fill ? DrawMode::fill : DrawMode::stroke, id,
                   fill ? *style.fill : style.stroke.value_or("black"), closed};
      out_.paths.push_back(std::move(path));
    }
  }

  SvgPathSet& out_;
  int counter_ = 0;
};

ViewBox read_view_box(const Node& root) {
  ViewBox box;
  if (const std::string* vb = root.attr("viewBox")) {
    const auto v = number_list(*vb);
    if (v.size() != 4) throw Error(ErrorCode::parse_error, "viewBox needs four numbers");
    return {v[0], v[1], v[2], v[3]};
  }
  try {
    box.width = length_or(root, "width", 0.0);
    box.height = length_or(root, "height", 0.0);
  } catch (const Error&) {
    box.width = box.height = 0.0;  // percentages and the like: no intrinsic size
  }
  return box;
}

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

SvgPathSet parse_svg(std::string_view document) {
  const auto root = parse_xml(document);
  std::string root_name = root->name;
  if (root_name.rfind("svg:", 0) == 0) root_name = root_name.substr(4);
  if (root_name != "svg") throw Error(ErrorCode::parse_error, "root element is <" + root->name + ">, not <svg>");
  SvgPathSet out;
  out.view_box = read_view_box(*root);
  Walker walker(out);
  walker.visit(*root, Style{});
  return out;
}

std::vector<PathChain> parse_path_data(std::string_view d) {
  PathBuilder builder;
  run_path_data(builder, d);
  std::vector<PathChain> out;
  for (auto& sp : builder.finish()) out.emplace_back(std::move(sp.segments));
  return out;
}

Affine2 wall_transform(const ViewBox& box, const WallRect& wall) {
  if (box.empty()) throw Error(ErrorCode::parse_error, "empty view box");
  if (!(wall.width > 0) || !(wall.height > 0)) {
    throw Error(ErrorCode::invalid_argument, "wall rectangle must have positive size");
  }
  const double s = std::min(wall.width / box.width, wall.height / box.height);
  const double margin_x = (wall.width - s * box.width) / 2.0;
  const double margin_z = (wall.height - s * box.height) / 2.0;
  // x = x0 + margin_x + s (X - min_x);  z = z0 + height - margin_z - s (Y - min_y)
  return {s, 0, 0, -s, wall.x0 + margin_x - s * box.min_x,
          wall.z0 + wall.height - margin_z + s * box.min_y};
}

SvgPathSet map_to_wall(const SvgPathSet& set, const WallRect& wall) {
  const Affine2 m = wall_transform(set.view_box, wall);
  SvgPathSet out;
  out.view_box = {wall.x0, wall.z0, wall.width, wall.height};
  out.warnings = set.warnings;
  for (const auto& p : set.paths) {
    out.paths.push_back({p.chain.transformed(m), p.mode, p.source_id, p.color, p.closed});
  }
  return out;
}

std::string to_path_data(const PathChain& chain) {
  std::string out = "M" + format_number(chain.start().x) + " " + format_number(chain.start().z);
  for (const auto& seg : chain.segments()) {
    const auto pts = seg.points();
    out += seg.kind() == geom::SegmentKind::line ? " L" : " C";
    for (std::size_t i = 1; i < pts.size(); ++i) {
      out += (i == 1 ? "" : " ") + format_number(pts[i].x) + " " + format_number(pts[i].z);
    }
  }
  return out;
}

WallRect parse_wall_rect(std::string_view text) {
  const auto v = number_list(text);
  if (v.size() != 4) throw Error(ErrorCode::invalid_argument, "wall rect needs x0,z0,w,h");
  if (!(v[2] > 0) || !(v[3] > 0)) throw Error(ErrorCode::invalid_argument, "wall rect must have positive size");
  return {v[0], v[1], v[2], v[3]};
}

}  // namespace mural::svg
