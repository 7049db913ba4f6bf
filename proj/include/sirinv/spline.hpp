#pragma once

// Cubic smoothing spline on a fixed set of abscissae.
//
// Minimizes  p * sum_i (y_i - f(x_i))^2 + (1 - p) * integral (f'')^2
// over cubic splines with knots at the abscissae and not-a-knot end
// conditions. p = 1 interpolates; smaller p smooths more. Because the
// abscissae are fixed, the fit and its derivatives at the nodes are linear
// maps of the data, precomputed once as dense matrices.

#include "sirinv/errors.hpp"

#include <Eigen/Dense>

namespace sirinv {

template <typename Scalar = double>
class SmoothingSpline {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  SmoothingSpline(const Vector& x, Scalar p) { build(x, p); }

  /// Uniform abscissae: n points on [a, b].
  static SmoothingSpline uniform(Scalar a, Scalar b, int n, Scalar p) {
    return SmoothingSpline(Vector::LinSpaced(n, a, b), p);
  }

  Eigen::Index size() const { return value_.rows(); }

  /// Node values, first and second derivatives of the fitted spline as
  /// linear operators on the data vector.
  const Matrix& value_operator() const { return value_; }
  const Matrix& first_derivative_operator() const { return d1_; }
  const Matrix& second_derivative_operator() const { return d2_; }

  Vector fit(const Vector& y) const { return value_ * y; }
  Vector first_derivative(const Vector& y) const { return d1_ * y; }
  Vector second_derivative(const Vector& y) const { return d2_ * y; }

 private:
  void build(const Vector& x, Scalar p) {
    const Eigen::Index n = x.size();
    if (n < 4) throw DimensionError("smoothing spline needs at least 4 nodes");
    if (!(p > Scalar(0) && p <= Scalar(1))) throw ConfigError("smoothing parameter must be in (0, 1]");
    Vector h = x.tail(n - 1) - x.head(n - 1);
    if ((h.array() <= Scalar(0)).any()) throw DimensionError("spline abscissae must increase strictly");

    // Second derivatives m at the nodes satisfy A m = B a for node values a:
    // interior rows are C1 continuity, end rows are not-a-knot.
    Matrix A = Matrix::Zero(n, n), B = Matrix::Zero(n, n);
    A(0, 0) = -1 / h[0];
    A(0, 1) = 1 / h[0] + 1 / h[1];
    A(0, 2) = -1 / h[1];
    A(n - 1, n - 3) = -1 / h[n - 3];
    A(n - 1, n - 2) = 1 / h[n - 3] + 1 / h[n - 2];
    A(n - 1, n - 1) = -1 / h[n - 2];
    for (Eigen::Index i = 1; i + 1 < n; ++i) {
      A(i, i - 1) = h[i - 1];
      A(i, i) = 2 * (h[i - 1] + h[i]);
      A(i, i + 1) = h[i];
      B(i, i - 1) = 6 / h[i - 1];
      B(i, i) = -6 / h[i - 1] - 6 / h[i];
      B(i, i + 1) = 6 / h[i];
    }
    const Matrix M = A.partialPivLu().solve(B);

    // Roughness of a piecewise-linear f'': m^T R m.
    Matrix R = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
      R(i, i) += h[i] / 3;
      R(i + 1, i + 1) += h[i] / 3;
      R(i, i + 1) += h[i] / 6;
      R(i + 1, i) += h[i] / 6;
    }
    const Matrix normal = p * Matrix::Identity(n, n) + (1 - p) * M.transpose() * R * M;
    value_ = normal.ldlt().solve(p * Matrix::Identity(n, n));
    d2_ = M * value_;

    d1_.resize(n, n);
    for (Eigen::Index i = 0; i + 1 < n; ++i)
      d1_.row(i) = (value_.row(i + 1) - value_.row(i)) / h[i] -
                   h[i] * (2 * d2_.row(i) + d2_.row(i + 1)) / 6;
    d1_.row(n - 1) = (value_.row(n - 1) - value_.row(n - 2)) / h[n - 2] +
                     h[n - 2] * (d2_.row(n - 2) + 2 * d2_.row(n - 1)) / 6;
  }

  Matrix value_, d1_, d2_;
};

}  // namespace sirinv
