#pragma once

// Uniform tensor grids on rectangles in (x, y[, t]) and the fields living on
// them. Storage is row-major with t slowest and x fastest:
//   index(i, j, k) = (k * ny + j) * nx + i.

#include <Eigen/Core>

#include <optional>

namespace sirinv {

using Index = Eigen::Index;

/// One uniform axis: n points from min to max inclusive.
struct Axis {
  double min = 0.0;
  double max = 1.0;
  int n = 2;

  double step() const { return (max - min) / static_cast<double>(n - 1); }
  double at(int i) const { return min + static_cast<double>(i) * step(); }
  double length() const { return max - min; }

  /// Index of the node equal to `value` (within 1e-9 of a step), if any.
  std::optional<int> node_of(double value) const;

  bool operator==(const Axis&) const = default;
};

class GridSpec {
 public:
  GridSpec() = default;

  static GridSpec spatial(Axis x, Axis y);
  static GridSpec space_time(Axis x, Axis y, Axis t);

  /// Throws ConfigError when an invariant is broken.
  void validate() const;

  bool has_time() const { return t_.has_value(); }
  const Axis& x() const { return x_; }
  const Axis& y() const { return y_; }
  const Axis& t() const;

  int nx() const { return x_.n; }
  int ny() const { return y_.n; }
  int nt() const { return t_ ? t_->n : 1; }
  double hx() const { return x_.step(); }
  double hy() const { return y_.step(); }
  double ht() const { return t().step(); }

  Index slice_size() const { return static_cast<Index>(x_.n) * y_.n; }
  Index size() const { return slice_size() * nt(); }
  Index index(int i, int j, int k = 0) const {
    return (static_cast<Index>(k) * y_.n + j) * x_.n + i;
  }

  GridSpec spatial_part() const { return spatial(x_, y_); }

  bool operator==(const GridSpec&) const = default;

 private:
  GridSpec(Axis x, Axis y, std::optional<Axis> t) : x_(x), y_(y), t_(t) {}

  Axis x_;
  Axis y_;
  std::optional<Axis> t_;
};

/// Values of a scalar quantity on a spatial or space-time grid.
class ScalarField {
 public:
  ScalarField() = default;
  explicit ScalarField(GridSpec grid, double fill = 0.0);
  ScalarField(GridSpec grid, Eigen::VectorXd values);

  template <typename Fn>
  static ScalarField sample(const GridSpec& grid, Fn&& fn);

  const GridSpec& grid() const { return grid_; }
  const Eigen::VectorXd& values() const { return values_; }
  Eigen::VectorXd& values() { return values_; }

  double operator()(int i, int j, int k = 0) const { return values_[grid_.index(i, j, k)]; }
  double& operator()(int i, int j, int k = 0) { return values_[grid_.index(i, j, k)]; }

  /// Spatial field at time slice k.
  ScalarField slice(int k) const;
  void set_slice(int k, const ScalarField& s);

  bool all_finite() const { return values_.allFinite(); }

 private:
  GridSpec grid_;
  Eigen::VectorXd values_;
};

/// A 2-vector field (u, v) sharing one spatial grid.
struct VectorField2 {
  ScalarField u;
  ScalarField v;

  static VectorField2 constant(const GridSpec& grid, double qx, double qy);
  void validate() const;
};

template <typename Fn>
ScalarField ScalarField::sample(const GridSpec& grid, Fn&& fn) {
  ScalarField f(grid);
  for (int k = 0; k < grid.nt(); ++k) {
    const double t = grid.has_time() ? grid.t().at(k) : 0.0;
    for (int j = 0; j < grid.ny(); ++j) {
      const double y = grid.y().at(j);
      for (int i = 0; i < grid.nx(); ++i) f(i, j, k) = fn(grid.x().at(i), y, t);
    }
  }
  return f;
}

// Finite-difference operators. Spatial operators act slice by slice when the
// field carries a time axis.

/// 5-point Laplacian; second-order one-sided second differences on edges.
ScalarField laplacian(const ScalarField& f);

/// First derivatives: central inside, second-order one-sided on edges.
ScalarField d_dx(const ScalarField& f);
ScalarField d_dy(const ScalarField& f);
ScalarField d_dt(const ScalarField& f);

/// d/dx(f q_x) + d/dy(f q_y); q lives on the spatial part of f's grid.
ScalarField divergence(const ScalarField& f, const VectorField2& q);

/// Signed cumulative trapezoid integral from t0 to every grid time.
ScalarField time_integral_from_mid(const ScalarField& f, double t0);

/// Trapezoid weights of a single axis.
Eigen::VectorXd trapezoid_weights(const Axis& axis);

/// Tensor-product trapezoid weights; they sum to the measure of the box.
ScalarField quadrature_weights(const GridSpec& grid);

}  // namespace sirinv
