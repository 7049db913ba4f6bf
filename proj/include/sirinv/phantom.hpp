#pragma once

// Letter-shaped coefficient phantoms. A glyph is a union of thick strokes
// (capsules around line segments) placed inside a box in physical (x, y).

#include "sirinv/grid.hpp"

#include <string>
#include <vector>

namespace sirinv {

struct Box {
  double x_min, x_max, y_min, y_max;
  bool contains(const Box& other) const {
    return other.x_min > x_min && other.x_max < x_max && other.y_min > y_min &&
           other.y_max < y_max;
  }
};

class Glyph {
 public:
  struct Segment {
    double x0, y0, x1, y1;
  };

  /// Builds one of the shipped letters: 'A', 'M', 'B', and 'O' (capital omega).
  /// `half_width` is the stroke half-width in physical units.
  static Glyph letter(char name, const Box& box, double half_width);
  /// A free-form stroke set, segments in physical coordinates.
  static Glyph strokes(std::vector<Segment> segments, double half_width);

  bool contains(double x, double y) const;
  /// Bounding box including stroke width.
  Box bounds() const;
  const std::vector<Segment>& segments() const { return segments_; }
  double half_width() const { return half_width_; }
  char name() const { return name_; }

 private:
  std::vector<Segment> segments_;
  double half_width_ = 0.0;
  char name_ = '?';
};

struct Inclusion {
  Glyph mask;
  double value;
};

/// Background values plus letter inclusions for beta and gamma. Later
/// inclusions win where masks overlap.
struct PhantomSpec {
  double beta_background = 0.1;
  double gamma_background = 0.1;
  std::vector<Inclusion> beta_inclusions;
  std::vector<Inclusion> gamma_inclusions;
};

struct CoefficientFields {
  ScalarField beta;
  ScalarField gamma;
};

/// Rasterizes the phantom on `grid` (spatial). Every mask must lie strictly
/// inside `omega`; outside the masks the background value is used.
CoefficientFields build_phantom(const PhantomSpec& spec, const GridSpec& grid, const Box& omega);

/// Indicator (1 inside, 0 outside) of a glyph on a spatial grid.
ScalarField rasterize(const Glyph& glyph, const GridSpec& grid);

}  // namespace sirinv
