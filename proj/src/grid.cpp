#include "sirinv/grid.hpp"

#include "sirinv/errors.hpp"

#include <cmath>
#include <string>

namespace sirinv {

std::optional<int> Axis::node_of(double value) const {
  const double h = step();
  const double pos = (value - min) / h;
  const double nearest = std::round(pos);
  if (std::abs(pos - nearest) > 1e-9 || nearest < 0 || nearest > n - 1) return std::nullopt;
  return static_cast<int>(nearest);
}

GridSpec GridSpec::spatial(Axis x, Axis y) {
  GridSpec g(x, y, std::nullopt);
  g.validate();
  return g;
}

GridSpec GridSpec::space_time(Axis x, Axis y, Axis t) {
  GridSpec g(x, y, t);
  g.validate();
  return g;
}

namespace {

void check_axis(const Axis& a, const char* name) {
  if (!(a.min < a.max) || !std::isfinite(a.min) || !std::isfinite(a.max))
    throw ConfigError(std::string("axis ") + name + ": need min < max");
  if (a.n < 2) throw ConfigError(std::string("axis ") + name + ": need at least 2 points");
}

}  // namespace

void GridSpec::validate() const {
  check_axis(x_, "x");
  check_axis(y_, "y");
  if (t_) check_axis(*t_, "t");
}

const Axis& GridSpec::t() const {
  if (!t_) throw DimensionError("grid has no time axis");
  return *t_;
}

ScalarField::ScalarField(GridSpec grid, double fill)
    : grid_(std::move(grid)), values_(Eigen::VectorXd::Constant(grid_.size(), fill)) {}

ScalarField::ScalarField(GridSpec grid, Eigen::VectorXd values)
    : grid_(std::move(grid)), values_(std::move(values)) {
  if (values_.size() != grid_.size())
    throw DimensionError("field has " + std::to_string(values_.size()) + " values, grid needs " +
                         std::to_string(grid_.size()));
}

ScalarField ScalarField::slice(int k) const {
  if (k < 0 || k >= grid_.nt()) throw DimensionError("time slice out of range");
  const Index n = grid_.slice_size();
  return ScalarField(grid_.spatial_part(), values_.segment(k * n, n));
}

void ScalarField::set_slice(int k, const ScalarField& s) {
  const Index n = grid_.slice_size();
  if (s.grid() != grid_.spatial_part()) throw DimensionError("slice grid mismatch");
  if (k < 0 || k >= grid_.nt()) throw DimensionError("time slice out of range");
  values_.segment(k * n, n) = s.values();
}

VectorField2 VectorField2::constant(const GridSpec& grid, double qx, double qy) {
  const GridSpec g = grid.spatial_part();
  return {ScalarField(g, qx), ScalarField(g, qy)};
}

void VectorField2::validate() const {
  if (u.grid() != v.grid()) throw DimensionError("vector field components on different grids");
}

namespace {

// Walks every line of `grid` parallel to `axis` (0=x, 1=y, 2=t) and calls
// fn(offset, stride, n) with the flat index of the first point.
template <typename Fn>
void for_each_line(const GridSpec& g, int axis, Fn&& fn) {
  const Index nx = g.nx(), ny = g.ny(), nt = g.nt();
  if (axis == 0) {
    for (Index k = 0; k < nt; ++k)
      for (Index j = 0; j < ny; ++j) fn((k * ny + j) * nx, Index{1}, nx);
  } else if (axis == 1) {
    for (Index k = 0; k < nt; ++k)
      for (Index i = 0; i < nx; ++i) fn(k * ny * nx + i, nx, ny);
  } else {
    for (Index j = 0; j < ny; ++j)
      for (Index i = 0; i < nx; ++i) fn(j * nx + i, nx * ny, nt);
  }
}

double axis_step(const GridSpec& g, int axis) {
  return axis == 0 ? g.hx() : axis == 1 ? g.hy() : g.ht();
}

// First derivative along one axis.
Eigen::VectorXd first_diff(const ScalarField& f, int axis) {
  const GridSpec& g = f.grid();
  const double h = axis_step(g, axis);
  const Eigen::VectorXd& u = f.values();
  Eigen::VectorXd out(u.size());
  for_each_line(g, axis, [&](Index o, Index s, Index n) {
    auto at = [&](Index i) { return u[o + i * s]; };
    if (n == 2) {
      const double d = (at(1) - at(0)) / h;
      out[o] = d;
      out[o + s] = d;
      return;
    }
    out[o] = (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h);
    for (Index i = 1; i + 1 < n; ++i) out[o + i * s] = (at(i + 1) - at(i - 1)) / (2.0 * h);
    out[o + (n - 1) * s] = (3.0 * at(n - 1) - 4.0 * at(n - 2) + at(n - 3)) / (2.0 * h);
  });
  return out;
}

// Second derivative along one axis; edges use the 4-point one-sided stencil
// when the line is long enough.
Eigen::VectorXd second_diff(const ScalarField& f, int axis) {
  const GridSpec& g = f.grid();
  const double h2 = axis_step(g, axis) * axis_step(g, axis);
  const Eigen::VectorXd& u = f.values();
  Eigen::VectorXd out(u.size());
  for_each_line(g, axis, [&](Index o, Index s, Index n) {
    auto at = [&](Index i) { return u[o + i * s]; };
    for (Index i = 1; i + 1 < n; ++i)
      out[o + i * s] = (at(i - 1) - 2.0 * at(i) + at(i + 1)) / h2;
    if (n >= 4) {
      out[o] = (2.0 * at(0) - 5.0 * at(1) + 4.0 * at(2) - at(3)) / h2;
      out[o + (n - 1) * s] =
          (2.0 * at(n - 1) - 5.0 * at(n - 2) + 4.0 * at(n - 3) - at(n - 4)) / h2;
    } else {
      out[o] = out[o + s];
      out[o + (n - 1) * s] = out[o + (n - 2) * s];
    }
  });
  return out;
}

}  // namespace

ScalarField laplacian(const ScalarField& f) {
  const GridSpec& g = f.grid();
  if (g.nx() < 3 || g.ny() < 3) throw DimensionError("laplacian needs nx, ny >= 3");
  return ScalarField(g, second_diff(f, 0) + second_diff(f, 1));
}

ScalarField d_dx(const ScalarField& f) { return ScalarField(f.grid(), first_diff(f, 0)); }
ScalarField d_dy(const ScalarField& f) { return ScalarField(f.grid(), first_diff(f, 1)); }

ScalarField d_dt(const ScalarField& f) {
  if (!f.grid().has_time() || f.grid().nt() < 3) throw DimensionError("d_dt needs nt >= 3");
  return ScalarField(f.grid(), first_diff(f, 2));
}

ScalarField divergence(const ScalarField& f, const VectorField2& q) {
  q.validate();
  const GridSpec& g = f.grid();
  if (q.u.grid() != g.spatial_part()) throw DimensionError("divergence: grid mismatch");
  const Index n = g.slice_size();
  ScalarField fx(g), fy(g);
  for (int k = 0; k < g.nt(); ++k) {
    fx.values().segment(k * n, n) = f.values().segment(k * n, n).cwiseProduct(q.u.values());
    fy.values().segment(k * n, n) = f.values().segment(k * n, n).cwiseProduct(q.v.values());
  }
  return ScalarField(g, first_diff(fx, 0) + first_diff(fy, 1));
}

ScalarField time_integral_from_mid(const ScalarField& f, double t0) {
  const GridSpec& g = f.grid();
  const auto k0 = g.t().node_of(t0);
  if (!k0) throw ConfigError("time_integral_from_mid: t0 is not a grid time node");
  const double ht = g.ht();
  const Index n = g.slice_size();
  const Eigen::VectorXd& u = f.values();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(u.size());
  for (int k = *k0 + 1; k < g.nt(); ++k)
    out.segment(k * n, n) = out.segment((k - 1) * n, n) +
                            0.5 * ht * (u.segment((k - 1) * n, n) + u.segment(k * n, n));
  for (int k = *k0 - 1; k >= 0; --k)
    out.segment(k * n, n) = out.segment((k + 1) * n, n) -
                            0.5 * ht * (u.segment((k + 1) * n, n) + u.segment(k * n, n));
  return ScalarField(g, std::move(out));
}

Eigen::VectorXd trapezoid_weights(const Axis& axis) {
  Eigen::VectorXd w = Eigen::VectorXd::Constant(axis.n, axis.step());
  w[0] *= 0.5;
  w[axis.n - 1] *= 0.5;
  return w;
}

ScalarField quadrature_weights(const GridSpec& g) {
  const Eigen::VectorXd wx = trapezoid_weights(g.x());
  const Eigen::VectorXd wy = trapezoid_weights(g.y());
  const Eigen::VectorXd wt = g.has_time() ? trapezoid_weights(g.t()) : Eigen::VectorXd::Ones(1);
  ScalarField w(g);
  for (int k = 0; k < g.nt(); ++k)
    for (int j = 0; j < g.ny(); ++j)
      for (int i = 0; i < g.nx(); ++i) w(i, j, k) = wx[i] * wy[j] * wt[k];
  return w;
}

}  // namespace sirinv
