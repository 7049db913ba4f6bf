#include "sirinv/phantom.hpp"

#include "sirinv/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <utility>

namespace sirinv {

namespace {

using UnitStroke = std::pair<std::pair<double, double>, std::pair<double, double>>;

// Polyline approximation of a circular arc in unit-box coordinates.
void add_arc(std::vector<UnitStroke>& out, double cx, double cy, double r, double deg0,
             double deg1, int pieces) {
  auto pt = [&](double deg) {
    const double a = deg * std::numbers::pi / 180.0;
    return std::pair{cx + r * std::cos(a), cy + r * std::sin(a)};
  };
  for (int k = 0; k < pieces; ++k) {
    const double a0 = deg0 + (deg1 - deg0) * k / pieces;
    const double a1 = deg0 + (deg1 - deg0) * (k + 1) / pieces;
    out.push_back({pt(a0), pt(a1)});
  }
}

std::vector<UnitStroke> unit_strokes(char name) {
  std::vector<UnitStroke> s;
  switch (name) {
    case 'A':
      s = {{{0.08, 0.0}, {0.5, 1.0}}, {{0.5, 1.0}, {0.92, 0.0}}, {{0.27, 0.4}, {0.73, 0.4}}};
      break;
    case 'M':
      s = {{{0.08, 0.0}, {0.08, 1.0}},
           {{0.08, 1.0}, {0.5, 0.3}},
           {{0.5, 0.3}, {0.92, 1.0}},
           {{0.92, 1.0}, {0.92, 0.0}}};
      break;
    case 'B':
      s = {{{0.12, 0.0}, {0.12, 1.0}},
           {{0.12, 1.0}, {0.55, 1.0}},
           {{0.12, 0.5}, {0.55, 0.5}},
           {{0.12, 0.0}, {0.55, 0.0}}};
      add_arc(s, 0.55, 0.75, 0.25, 90.0, -90.0, 8);
      add_arc(s, 0.55, 0.25, 0.25, 90.0, -90.0, 8);
      break;
    case 'O':  // capital omega: open arc with two feet
      add_arc(s, 0.5, 0.58, 0.4, -55.0, 235.0, 16);
      s.push_back({{0.27, 0.252}, {0.33, 0.0}});
      s.push_back({{0.73, 0.252}, {0.67, 0.0}});
      s.push_back({{0.06, 0.0}, {0.33, 0.0}});
      s.push_back({{0.67, 0.0}, {0.94, 0.0}});
      break;
    default:
      throw ConfigError(std::string("unknown glyph '") + name + "'");
  }
  return s;
}

double segment_distance(const Glyph::Segment& s, double x, double y) {
  const double dx = s.x1 - s.x0, dy = s.y1 - s.y0;
  const double len2 = dx * dx + dy * dy;
  double u = len2 > 0 ? ((x - s.x0) * dx + (y - s.y0) * dy) / len2 : 0.0;
  u = std::clamp(u, 0.0, 1.0);
  return std::hypot(x - (s.x0 + u * dx), y - (s.y0 + u * dy));
}

}  // namespace

Glyph Glyph::letter(char name, const Box& box, double half_width) {
  Glyph g;
  g.name_ = name;
  g.half_width_ = half_width;
  const double w = box.x_max - box.x_min, h = box.y_max - box.y_min;
  for (const auto& [a, b] : unit_strokes(name))
    g.segments_.push_back({box.x_min + a.first * w, box.y_min + a.second * h,
                           box.x_min + b.first * w, box.y_min + b.second * h});
  return g;
}

Glyph Glyph::strokes(std::vector<Segment> segments, double half_width) {
  Glyph g;
  g.segments_ = std::move(segments);
  g.half_width_ = half_width;
  return g;
}

bool Glyph::contains(double x, double y) const {
  return std::any_of(segments_.begin(), segments_.end(),
                     [&](const Segment& s) { return segment_distance(s, x, y) <= half_width_; });
}

Box Glyph::bounds() const {
  Box b{1e300, -1e300, 1e300, -1e300};
  for (const auto& s : segments_) {
    b.x_min = std::min({b.x_min, s.x0, s.x1});
    b.x_max = std::max({b.x_max, s.x0, s.x1});
    b.y_min = std::min({b.y_min, s.y0, s.y1});
    b.y_max = std::max({b.y_max, s.y0, s.y1});
  }
  return {b.x_min - half_width_, b.x_max + half_width_, b.y_min - half_width_,
          b.y_max + half_width_};
}

ScalarField rasterize(const Glyph& glyph, const GridSpec& grid) {
  return ScalarField::sample(grid.spatial_part(), [&](double x, double y, double) {
    return glyph.contains(x, y) ? 1.0 : 0.0;
  });
}

CoefficientFields build_phantom(const PhantomSpec& spec, const GridSpec& grid, const Box& omega) {
  const GridSpec g = grid.spatial_part();
  auto paint = [&](double background, const std::vector<Inclusion>& inclusions) {
    ScalarField f(g, background);
    for (const auto& inc : inclusions) {
      if (!omega.contains(inc.mask.bounds()))
        throw ConfigError(std::string("inclusion '") + inc.mask.name() +
                          "' does not lie inside the inversion domain");
      if (!(inc.value > 0.0)) throw ConfigError("inclusion values must be positive");
      for (int j = 0; j < g.ny(); ++j)
        for (int i = 0; i < g.nx(); ++i)
          if (inc.mask.contains(g.x().at(i), g.y().at(j))) f(i, j) = inc.value;
    }
    return f;
  };
  return {paint(spec.beta_background, spec.beta_inclusions),
          paint(spec.gamma_background, spec.gamma_inclusions)};
}

}  // namespace sirinv
