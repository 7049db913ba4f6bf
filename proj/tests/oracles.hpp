#pragma once

// Reference solutions shared by the unit and acceptance tests.

#include "sirinv/inversion.hpp"
#include "sirinv/observation.hpp"

#include <array>
#include <cmath>
#include <random>

namespace oracle {

using namespace sirinv;

// Homogeneous model as written: S' = -b S I, I' = b S I, R' = g I.
struct Sir {
  double S, I, R;
};

inline Sir sir_rhs(const Sir& u, double beta, double gamma) {
  return {-beta * u.S * u.I, beta * u.S * u.I, gamma * u.I};
}

// Classical RK4 from t = 0 with n steps per unit time.
inline Sir rk4(Sir u, double beta, double gamma, double t, int steps_per_unit = 20000) {
  const int n = std::max(1, static_cast<int>(std::ceil(t * steps_per_unit)));
  const double h = t / n;
  auto add = [](Sir a, const Sir& b, double s) {
    a.S += s * b.S;
    a.I += s * b.I;
    a.R += s * b.R;
    return a;
  };
  for (int s = 0; s < n; ++s) {
    const Sir k1 = sir_rhs(u, beta, gamma);
    const Sir k2 = sir_rhs(add(u, k1, h / 2), beta, gamma);
    const Sir k3 = sir_rhs(add(u, k2, h / 2), beta, gamma);
    const Sir k4 = sir_rhs(add(u, k3, h), beta, gamma);
    u.S += h / 6 * (k1.S + 2 * k2.S + 2 * k3.S + k4.S);
    u.I += h / 6 * (k1.I + 2 * k2.I + 2 * k3.I + k4.I);
    u.R += h / 6 * (k1.R + 2 * k2.R + 2 * k3.R + k4.R);
  }
  return u;
}

// Exact W and data of the spatially constant problem with q = 0.
struct Homogeneous {
  WField w;
  DerivedData data;
};

inline Homogeneous homogeneous(const GridSpec& g, double beta, double gamma, Sir u0) {
  Homogeneous h;
  h.w = WField::zeros(g);
  const double t0 = g.t().min;
  for (int k = 0; k < g.nt(); ++k) {
    const Sir u = rk4(u0, beta, gamma, g.t().at(k) - t0);
    const Sir v = sir_rhs(u, beta, gamma);
    // second derivatives from the product rule
    const double a1 = -beta * (v.S * u.I + u.S * v.I);
    const std::array<double, 6> vals{v.S, v.I, v.R, a1, -a1, gamma * v.I};
    for (int c = 0; c < 6; ++c)
      for (int j = 0; j < g.ny(); ++j)
        for (int i = 0; i < g.nx(); ++i) h.w.w[c](i, j, k) = vals[c];
  }
  const Sir pm = rk4(u0, beta, gamma, 0.5 * (g.t().max - g.t().min));
  const GridSpec gs = g.spatial_part();
  DerivedData& d = h.data;
  d.grid = g;
  d.model = KnownModel::constant(gs, 0.1, 0.0, 0.0);
  d.p = {ScalarField(gs, pm.S), ScalarField(gs, pm.I), ScalarField(gs, pm.R)};
  d.s = compute_s_coefficients(d.p[0], d.p[1], d.p[2], d.model.q_S, d.model.q_R, d.model.d, 1e-3);
  d.c_floor = std::min(pm.S, pm.I);
  return h;
}

// Outward one-sided normal derivative (3, -4, 1)/(2h) on the lateral boundary.
inline Trace neumann_trace(const ScalarField& f) {
  const GridSpec& g = f.grid();
  Trace tr = Trace::zeros(lateral_boundary(g.spatial_part()), g.t());
  const int nx = g.nx(), ny = g.ny();
  for (std::size_t a = 0; a < tr.points.size(); ++a) {
    const auto& p = tr.points[a];
    for (int k = 0; k < g.nt(); ++k) {
      double v = 0.0;
      switch (p.face) {
        case Face::XMin: v = (3 * f(0, p.j, k) - 4 * f(1, p.j, k) + f(2, p.j, k)) / (2 * g.hx()); break;
        case Face::XMax:
          v = (3 * f(nx - 1, p.j, k) - 4 * f(nx - 2, p.j, k) + f(nx - 3, p.j, k)) / (2 * g.hx());
          break;
        case Face::YMin: v = (3 * f(p.i, 0, k) - 4 * f(p.i, 1, k) + f(p.i, 2, k)) / (2 * g.hy()); break;
        case Face::YMax:
          v = (3 * f(p.i, ny - 1, k) - 4 * f(p.i, ny - 2, k) + f(p.i, ny - 3, k)) / (2 * g.hy());
          break;
      }
      tr.values(static_cast<Index>(a), k) = v;
    }
  }
  return tr;
}

inline void fill_boundary_data(DerivedData& d, const WField& w) {
  const GridSpec gs = d.grid.spatial_part();
  for (int c = 0; c < kComponents; ++c) {
    d.G0[c] = Trace::sample(gamma_boundary(gs), w.w[c]);
    d.G1[c] = neumann_trace(w.w[c]);
  }
}

// Instance on which the discrete equations hold exactly at W*: smooth W*,
// boundary data sampled from it with the assembly stencils, and a source that
// absorbs L(W*) + Y(W*) at the interior nodes.
struct Consistent {
  WField w_star;
  DerivedData data;
  Components source;
};

inline Consistent consistent_instance(int nx, int ny, int nt) {
  const GridSpec g = GridSpec::space_time({1.0, 2.0, nx}, {-0.5, 0.5, ny}, {0.0, 1.0, nt});
  const GridSpec gs = g.spatial_part();
  Consistent c;
  c.w_star = WField::zeros(g);
  for (int m = 0; m < kComponents; ++m)
    c.w_star.w[m] = ScalarField::sample(g, [m](double x, double y, double t) {
      const double a = 0.05 * (1.0 + 0.2 * m);
      return a * (1.0 + 0.3 * std::sin(x + 0.5 * y + 0.3 * m) + 0.2 * t * (x - 1.0) - 0.1 * t * t * y);
    });
  DerivedData& d = c.data;
  d.grid = g;
  d.model = KnownModel::constant(gs, 0.1, 0.2, 0.2);
  d.p = {ScalarField::sample(gs, [](double x, double y, double) { return 0.5 + 0.1 * x + 0.05 * y * y; }),
         ScalarField::sample(gs, [](double x, double y, double) { return 0.6 + 0.1 * y - 0.05 * x * x; }),
         ScalarField::sample(gs, [](double x, double y, double) { return 0.1 + 0.05 * x * y; })};
  d.s = compute_s_coefficients(d.p[0], d.p[1], d.p[2], d.model.q_S, d.model.q_R, d.model.d, 1e-3);
  d.c_floor = 0.4;
  fill_boundary_data(d, c.w_star);

  const Eigen::VectorXd lw = assemble_L(g, d.model) * c.w_star.stacked();
  const Components y = eval_Y(c.w_star, d.s, d.p[0], d.p[1]);
  Index row = 0;
  for (int m = 0; m < kComponents; ++m) {
    c.source[m] = ScalarField(g);
    for (int k = 0; k < g.nt(); ++k)
      for (int j = 1; j < g.ny() - 1; ++j)
        for (int i = 1; i < g.nx() - 1; ++i) c.source[m](i, j, k) = lw[row++] + y[m](i, j, k);
  }
  return c;
}

inline WField random_wfield(const GridSpec& g, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  WField w = WField::zeros(g);
  for (auto& c : w.w)
    for (Index i = 0; i < c.values().size(); ++i) c.values()[i] = u(rng);
  return w;
}

inline Eigen::VectorXd random_vector(Index n, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Eigen::VectorXd v(n);
  for (Index i = 0; i < n; ++i) v[i] = u(rng);
  return v;
}

}  // namespace oracle
