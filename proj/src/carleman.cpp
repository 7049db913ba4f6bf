#include "sirinv/carleman.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace sirinv {

ScalarField normalized_weight_field(const CarlemanWeight<double>& w, const GridSpec& grid) {
  w.validate();
  return ScalarField::sample(grid, [&](double x, double, double t) { return w.normalized(x, t); });
}

namespace {

// exp(log phi - max log phi) on the grid; ratios of weighted integrals do not
// depend on the shift.
Eigen::ArrayXd relative_weight(const GridSpec& g, double lambda) {
  const CarlemanWeight<double> w{lambda, std::max(std::abs(g.x().min), std::abs(g.x().max)),
                                 g.t().max - g.t().min};
  const double t_shift = g.t().min;
  Eigen::ArrayXd lw(g.size());
  for (int k = 0; k < g.nt(); ++k)
    for (int j = 0; j < g.ny(); ++j)
      for (int i = 0; i < g.nx(); ++i)
        lw[g.index(i, j, k)] = w.log_weight(g.x().at(i), g.t().at(k) - t_shift);
  return (lw - lw.maxCoeff()).exp();
}

}  // namespace

double volterra_ratio(const ScalarField& f, double lambda) {
  const GridSpec& g = f.grid();
  const Eigen::ArrayXd q = quadrature_weights(g).values().array() * relative_weight(g, lambda);
  const double den = (q * f.values().array().square()).sum();
  if (den == 0.0) return 0.0;
  const ScalarField v = time_integral_from_mid(f, 0.5 * (g.t().min + g.t().max));
  const double num = (q * v.values().array().square()).sum();
  return lambda * num / den;
}

VolterraReport check_volterra_estimate(std::span<const double> lambdas, int trials,
                                       std::uint64_t seed, const GridSpec& grid) {
  if (lambdas.empty()) throw ConfigError("empty lambda list");
  for (double l : lambdas)
    if (!(l > 0)) throw ConfigError("Volterra check needs lambda > 0");
  if (trials < 1) throw ConfigError("trials must be >= 1");

  // Same random fields for every lambda.
  std::mt19937_64 engine(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<ScalarField> fields;
  fields.reserve(static_cast<std::size_t>(trials));
  const double tm = 0.5 * (grid.t().min + grid.t().max), len = grid.t().max - grid.t().min;
  const Index plane = static_cast<Index>(grid.nx()) * grid.ny();
  for (int n = 0; n < trials; ++n) {
    ScalarField f(grid);
    if (n % 2 == 0) {
      for (Index i = 0; i < f.values().size(); ++i) f.values()[i] = dist(engine);
    } else {
      Eigen::VectorXd g(plane);
      for (Index i = 0; i < plane; ++i) g[i] = dist(engine);
      const double c0 = dist(engine), c1 = dist(engine), c2 = dist(engine);
      for (int k = 0; k < grid.nt(); ++k) {
        const double s = (grid.t().at(k) - tm) / len;
        f.values().segment(k * plane, plane) = g * (c0 + c1 * s + c2 * s * s);
      }
    }
    fields.push_back(std::move(f));
  }

  VolterraReport rep;
  for (double lambda : lambdas) {
    VolterraRow row{lambda, 0.0, 0.0};
    for (const auto& f : fields) {
      const double r = volterra_ratio(f, lambda);
      row.max_ratio = std::max(row.max_ratio, r);
      row.mean_ratio += r / trials;
    }
    rep.rows.push_back(row);
  }
  double hi = 0.0;
  bool stepwise = true;
  for (std::size_t i = 0; i < rep.rows.size(); ++i) {
    hi = std::max(hi, rep.rows[i].max_ratio);
    if (i > 0 && rep.rows[i].max_ratio > 3.0 * rep.rows[i - 1].max_ratio) stepwise = false;
  }
  rep.empirical_constant = hi;
  rep.pass = stepwise && std::isfinite(hi);
  return rep;
}

CarlemanSides carleman_sides(const ScalarField& u, double lambda, double d) {
  const GridSpec& g = u.grid();
  const CarlemanWeight<double> w{lambda, g.x().max, g.t().max - g.t().min};
  Eigen::ArrayXd q = quadrature_weights(g).values().array();
  for (int k = 0; k < g.nt(); ++k)
    for (int j = 0; j < g.ny(); ++j)
      for (int i = 0; i < g.nx(); ++i)
        q[g.index(i, j, k)] *= w.normalized(g.x().at(i), g.t().at(k) - g.t().min);
  const Eigen::ArrayXd op = d_dt(u).values().array() - d * laplacian(u).values().array();
  const Eigen::ArrayXd grad2 =
      d_dx(u).values().array().square() + d_dy(u).values().array().square();
  return {(q * op.square()).sum(), (q * grad2).sum(), (q * u.values().array().square()).sum()};
}

CarlemanReport check_carleman_estimate(std::span<const double> lambdas, int trials,
                                       std::uint64_t seed, const GridSpec& grid, double d) {
  if (lambdas.empty()) throw ConfigError("empty lambda list");
  if (trials < 1) throw ConfigError("trials must be >= 1");
  std::vector<double> ls(lambdas.begin(), lambdas.end());
  std::sort(ls.begin(), ls.end());

  const double a = grid.x().min, b = grid.x().max, y0 = grid.y().min, y1 = grid.y().max;
  const double lx = b - a, ly = y1 - y0, T = grid.t().max - grid.t().min;
  auto cutoff = [&](double x, double y) {
    const double cx = (x - a) * (x - b) / (lx * lx), cy = (y - y0) * (y - y1) / (ly * ly);
    return 256.0 * cx * cx * cy * cy;
  };

  std::mt19937_64 engine(seed);
  std::uniform_real_distribution<double> amp(-1.0, 1.0);
  std::uniform_int_distribution<int> mode(0, 2);
  std::vector<ScalarField> fields;
  for (int n = 0; n < trials; ++n) {
    struct Term { double c; int mx, my, mt; };
    std::vector<Term> terms(4);
    for (auto& t : terms) t = {amp(engine), mode(engine), mode(engine), mode(engine)};
    fields.push_back(ScalarField::sample(grid, [&](double x, double y, double t) {
      double g = 0.0;
      for (const auto& tm : terms)
        g += tm.c * std::cos(std::numbers::pi * tm.mx * (x - a) / lx) *
             std::cos(std::numbers::pi * tm.my * (y - y0) / ly) *
             std::cos(std::numbers::pi * tm.mt * (t - grid.t().min) / T);
      return cutoff(x, y) * g;
    }));
  }

  CarlemanReport rep;
  for (double lambda : ls) {
    CarlemanRow row{lambda, std::numeric_limits<double>::infinity(), 0.0};
    int counted = 0;
    for (const auto& u : fields) {
      const CarlemanSides s = carleman_sides(u, lambda, d);
      const double rhs = s.main_rhs(lambda);
      if (rhs <= 0.0) continue;
      row.min_constant = std::min(row.min_constant, s.lhs / rhs);
      row.cubic_share += lambda * lambda * lambda * s.value / rhs;
      ++counted;
    }
    if (counted == 0) row.min_constant = 0.0;
    else row.cubic_share /= counted;
    rep.rows.push_back(row);
  }
  rep.calibrated_constant = rep.rows.front().min_constant;
  rep.pass = rep.rows.back().min_constant >= 0.5 * rep.calibrated_constant;
  return rep;
}

TheoryParams theory_schedule(double delta, double alpha, double b, double T, double lambda_floor) {
  if (!(alpha > 0.0 && alpha < 1.0 / std::numbers::sqrt2))
    throw ConfigError("alpha must lie in (0, 1/sqrt(2))");
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
  if (!(b > 0.0 && T > 0.0)) throw ConfigError("b and T must be positive");
  const double one_minus = 1.0 - 2.0 * alpha * alpha;
  if (!(T * T > 8.0 * b * b / one_minus))
    throw ScheduleError("T^2 = " + std::to_string(T * T) + " does not exceed 8 b^2 / (1 - 2 alpha^2) = " +
                        std::to_string(8.0 * b * b / one_minus) +
                        "; use a larger T or a smaller alpha");
  TheoryParams p;
  p.alpha = alpha;
  p.m = alpha * alpha * T * T / 2.0 + 2.0 * b * b;
  p.s = T * T / 4.0 * (one_minus - 8.0 * b * b / (T * T));
  p.lambda = -std::log(delta) / p.m;
  if (p.lambda < lambda_floor * (1.0 - 1e-12))
    throw ScheduleError("lambda(delta) = " + std::to_string(p.lambda) + " is below the floor " +
                        std::to_string(lambda_floor) + "; delta is too large");
  p.xi = 2.0 * std::exp(-p.lambda * T * T / 4.0);
  p.rho = std::max(1.0, p.s / p.m);
  return p;
}

}  // namespace sirinv
