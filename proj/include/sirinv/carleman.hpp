#pragma once

// Carleman weight phi_lambda(x, t) = exp(2 lambda (x^2 - (t - T/2)^2)),
// numerical checks of the two weighted estimates it enters, and the
// noise-driven parameter schedules lambda(delta), xi(delta).

#include "sirinv/errors.hpp"
#include "sirinv/grid.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace sirinv {

template <typename Scalar = double>
struct CarlemanWeight {
  Scalar lambda = 0;
  Scalar b = 1;  // right end of the x range
  Scalar T = 1;  // final time

  void validate() const {
    using std::isfinite;
    if (!isfinite(lambda) || lambda < 0) throw ConfigError("lambda must be finite and >= 0");
    if (!(b > 0) || !(T > 0)) throw ConfigError("b and T must be positive");
  }

  Scalar log_weight(Scalar x, Scalar t) const {
    const Scalar s = t - T / 2;
    return 2 * lambda * (x * x - s * s);
  }
  /// log of e^{-2 lambda b^2} phi_lambda; <= 0 for |x| <= b.
  Scalar log_normalized(Scalar x, Scalar t) const { return log_weight(x, t) - 2 * lambda * b * b; }

  Scalar eval(Scalar x, Scalar t) const { return checked_exp(log_weight(x, t)); }
  Scalar normalized(Scalar x, Scalar t) const { return checked_exp(log_normalized(x, t)); }

 private:
  static Scalar checked_exp(Scalar lw) {
    using std::exp;
    using std::log;
    if (lw > log(std::numeric_limits<Scalar>::max()))
      throw NumericalError("Carleman weight overflows (log weight " + std::to_string(double(lw)) + ")");
    return exp(lw);
  }
};

/// Normalized weight e^{-2 lambda b^2} phi_lambda on every node of a space-time grid.
ScalarField normalized_weight_field(const CarlemanWeight<double>& w, const GridSpec& grid);

struct VolterraRow {
  double lambda;
  double max_ratio;
  double mean_ratio;
};

struct VolterraReport {
  std::vector<VolterraRow> rows;
  double empirical_constant = 0.0;  // max ratio over all lambdas
  bool pass = false;
};

/// R(lambda, f) = int (int_{T/2}^t f)^2 phi / ((1/lambda) int f^2 phi), over
/// random f: half the trials i.i.d. uniform node values, half a random
/// spatial field times a random quadratic in t (the smooth ones come close to
/// the supremum). Passes when the per-lambda maximum never grows by more than
/// 3x from one lambda to the next. R is defined as 0 for f = 0.
VolterraReport check_volterra_estimate(std::span<const double> lambdas, int trials,
                                       std::uint64_t seed, const GridSpec& grid);

/// The ratio for one given f; exposed for tests.
double volterra_ratio(const ScalarField& f, double lambda);

struct CarlemanRow {
  double lambda;
  double min_constant;       // min over trials of lhs / main rhs term
  double cubic_share;        // mean share of the lambda^3 term in the main rhs
};

struct CarlemanReport {
  std::vector<CarlemanRow> rows;
  double calibrated_constant = 0.0;  // min constant at the smallest lambda
  bool pass = false;                 // monitoring only
};

struct CarlemanSides {
  double lhs;          // int (u_t - d Lap u)^2 phi
  double gradient;     // int |grad u|^2 phi
  double value;        // int u^2 phi
  double main_rhs(double lambda) const { return lambda * gradient + lambda * lambda * lambda * value; }
};

/// Both sides of the parabolic Carleman estimate for one field u, weights
/// normalized by e^{-2 lambda b^2}.
CarlemanSides carleman_sides(const ScalarField& u, double lambda, double d);

/// Random smooth fields times a cutoff that vanishes with its normal
/// derivative on the whole lateral boundary.
CarlemanReport check_carleman_estimate(std::span<const double> lambdas, int trials,
                                       std::uint64_t seed, const GridSpec& grid, double d);

struct TheoryParams {
  double alpha, m, s, lambda, xi, rho;
};

/// lambda(delta) = ln(delta^{-1/m}), xi(delta) = 2 exp(-lambda T^2 / 4),
/// m = alpha^2 T^2 / 2 + 2 b^2, s = T^2/4 ((1 - 2 alpha^2) - 8 b^2 / T^2),
/// rho = max(1, s/m). Requires T^2 > 8 b^2 / (1 - 2 alpha^2) and
/// lambda(delta) >= lambda_floor.
TheoryParams theory_schedule(double delta, double alpha, double b, double T, double lambda_floor);

}  // namespace sirinv
