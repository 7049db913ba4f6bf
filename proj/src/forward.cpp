#include "sirinv/forward.hpp"

#include "sirinv/errors.hpp"

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace sirinv {

SirParams SirParams::defaults(const GridSpec& g_spatial, ScalarField beta, ScalarField gamma) {
  const GridSpec g = g_spatial.spatial_part();
  SirParams p;
  p.d = 0.1;
  p.q_S = p.q_I = p.q_R = VectorField2::constant(g, 0.2, 0.2);
  p.beta = std::move(beta);
  p.gamma = std::move(gamma);
  p.rho0_S = ScalarField(g, 0.6);
  p.rho0_I = ScalarField(g, 0.8);
  p.rho0_R = ScalarField(g, 0.0);
  return p;
}

void SirParams::validate(const GridSpec& g_spatial) const {
  const GridSpec g = g_spatial.spatial_part();
  if (!(d > 0.0) || !std::isfinite(d)) throw ConfigError("diffusivity d must be positive");
  for (const auto* q : {&q_S, &q_I, &q_R}) {
    q->validate();
    if (q->u.grid() != g) throw DimensionError("velocity field not on the forward grid");
    if (!q->u.all_finite() || !q->v.all_finite()) throw ConfigError("velocity not finite");
  }
  for (const auto* f : {&beta, &gamma, &rho0_S, &rho0_I, &rho0_R}) {
    if (f->grid() != g) throw DimensionError("coefficient or initial state not on the forward grid");
    if (!f->all_finite()) throw ConfigError("coefficient or initial state not finite");
  }
}

double max_stable_step(const SirParams& p, const GridSpec& g_spatial) {
  const GridSpec g = g_spatial.spatial_part();
  double cfl = 0.0, q2 = 0.0;
  for (const auto* q : {&p.q_S, &p.q_I, &p.q_R}) {
    const double ux = q->u.values().cwiseAbs().maxCoeff();
    const double vy = q->v.values().cwiseAbs().maxCoeff();
    cfl = std::max(cfl, ux / g.hx() + vy / g.hy());
    q2 = std::max(q2, (q->u.values().array().square() + q->v.values().array().square()).maxCoeff());
  }
  const double scale = std::max({p.rho0_S.values().cwiseAbs().maxCoeff(),
                                 p.rho0_I.values().cwiseAbs().maxCoeff(),
                                 p.rho0_R.values().cwiseAbs().maxCoeff(), 1.0});
  const double reaction = p.beta.values().cwiseAbs().maxCoeff() * 2.0 * scale +
                          p.gamma.values().cwiseAbs().maxCoeff();
  double bound = std::numeric_limits<double>::infinity();
  if (cfl > 0) bound = std::min(bound, 1.0 / cfl);
  if (q2 > 0) bound = std::min(bound, 2.0 * p.d / q2);
  if (reaction > 0) bound = std::min(bound, 0.5 / reaction);
  return bound;
}

namespace {

enum class Side { Interior, XMin, XMax, YMin, YMax, Corner };

// Implicit diffusion operator (I - tau d Lap) with one-sided Neumann rows on
// the boundary. Corner rows average the two face equations.
Eigen::SparseMatrix<double> diffusion_matrix(const GridSpec& g, double tau, double d) {
  const int nx = g.nx(), ny = g.ny();
  const double hx = g.hx(), hy = g.hy();
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(g.slice_size()) * 5);
  auto id = [&](int i, int j) { return g.index(i, j); };
  auto face_x = [&](int i, int j, double s) {  // outward d/dn along x
    const int dir = (i == 0) ? 1 : -1;
    const Index r = id(i, j);
    trips.emplace_back(r, id(i, j), s * 3.0 / (2.0 * hx));
    trips.emplace_back(r, id(i + dir, j), s * -4.0 / (2.0 * hx));
    trips.emplace_back(r, id(i + 2 * dir, j), s * 1.0 / (2.0 * hx));
  };
  auto face_y = [&](int i, int j, double s) {
    const int dir = (j == 0) ? 1 : -1;
    const Index r = id(i, j);
    trips.emplace_back(r, id(i, j), s * 3.0 / (2.0 * hy));
    trips.emplace_back(r, id(i, j + dir), s * -4.0 / (2.0 * hy));
    trips.emplace_back(r, id(i, j + 2 * dir), s * 1.0 / (2.0 * hy));
  };
  const double cx = tau * d / (hx * hx), cy = tau * d / (hy * hy);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const bool bx = (i == 0 || i == nx - 1), by = (j == 0 || j == ny - 1);
      if (bx && by) {
        face_x(i, j, 0.5);
        face_y(i, j, 0.5);
      } else if (bx) {
        face_x(i, j, 1.0);
      } else if (by) {
        face_y(i, j, 1.0);
      } else {
        const Index r = id(i, j);
        trips.emplace_back(r, r, 1.0 + 2.0 * cx + 2.0 * cy);
        trips.emplace_back(r, id(i - 1, j), -cx);
        trips.emplace_back(r, id(i + 1, j), -cx);
        trips.emplace_back(r, id(i, j - 1), -cy);
        trips.emplace_back(r, id(i, j + 1), -cy);
      }
    }
  }
  Eigen::SparseMatrix<double> a(g.slice_size(), g.slice_size());
  a.setFromTriplets(trips.begin(), trips.end());
  a.makeCompressed();
  return a;
}

// Replaces boundary entries of rhs with the Neumann data at time t.
void set_boundary_rhs(Eigen::VectorXd& rhs, const GridSpec& g, const FluxFn& flux, double t) {
  const int nx = g.nx(), ny = g.ny();
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      if (i != 0 && i != nx - 1 && j != 0 && j != ny - 1) continue;
      rhs[g.index(i, j)] = flux ? flux(g.x().at(i), g.y().at(j), t) : 0.0;
    }
}

}  // namespace

SirFields forward_solve(const SirParams& p, const GridSpec& grid, const ForwardOptions& opt) {
  if (!grid.has_time()) throw DimensionError("forward_solve needs a space-time grid");
  if (grid.nx() < 3 || grid.ny() < 3) throw DimensionError("forward grid needs nx, ny >= 3");
  if (opt.substeps < 1) throw ConfigError("substeps must be >= 1");
  const GridSpec gs = grid.spatial_part();
  p.validate(gs);

  const double tau = grid.ht() / opt.substeps;
  const double tau_max = max_stable_step(p, gs);
  if (tau > tau_max)
    throw NumericalError("forward time step " + std::to_string(tau) +
                         " exceeds the stability bound; max admissible ht is " +
                         std::to_string(tau_max));

  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(diffusion_matrix(gs, tau, p.d));
  if (lu.info() != Eigen::Success) throw NumericalError("diffusion matrix factorization failed");

  ScalarField S = p.rho0_S, I = p.rho0_I, R = p.rho0_R;
  SirFields out{ScalarField(grid), ScalarField(grid), ScalarField(grid)};
  out.rho_S.set_slice(0, S);
  out.rho_I.set_slice(0, I);
  out.rho_R.set_slice(0, R);

  const Eigen::ArrayXd beta = p.beta.values().array();
  const Eigen::ArrayXd gamma = p.gamma.values().array();
  const int total = (grid.nt() - 1) * opt.substeps;
  Eigen::VectorXd rhs;
  for (int step = 1; step <= total; ++step) {
    const double t_new = grid.t().min + step * tau;
    const Eigen::ArrayXd si = S.values().array() * I.values().array();
    const Eigen::VectorXd rate_S = -divergence(S, p.q_S).values().array() - beta * si;
    const Eigen::VectorXd rate_I = -divergence(I, p.q_I).values().array() + beta * si;
    const Eigen::VectorXd rate_R =
        -divergence(R, p.q_R).values().array() + gamma * I.values().array();

    rhs = S.values() + tau * rate_S;
    set_boundary_rhs(rhs, gs, p.g1, t_new);
    Eigen::VectorXd s_new = lu.solve(rhs);
    rhs = I.values() + tau * rate_I;
    set_boundary_rhs(rhs, gs, p.g2, t_new);
    Eigen::VectorXd i_new = lu.solve(rhs);
    rhs = R.values() + tau * rate_R;
    set_boundary_rhs(rhs, gs, p.g3, t_new);
    Eigen::VectorXd r_new = lu.solve(rhs);

    if (!s_new.allFinite() || !i_new.allFinite() || !r_new.allFinite())
      throw NumericalError("forward march diverged at step " + std::to_string(step));
    S.values() = std::move(s_new);
    I.values() = std::move(i_new);
    R.values() = std::move(r_new);
    if (step % opt.substeps == 0) {
      const int k = step / opt.substeps;
      out.rho_S.set_slice(k, S);
      out.rho_I.set_slice(k, I);
      out.rho_R.set_slice(k, R);
    }
  }
  return out;
}

namespace {

// Locates `v` on an axis: cell index and fractional offset in [0, 1].
bool locate(const Axis& a, double v, int& cell, double& frac) {
  const double h = a.step();
  const double tol = 1e-9 * h;
  if (v < a.min - tol || v > a.max + tol) return false;
  double pos = (v - a.min) / h;
  pos = std::clamp(pos, 0.0, static_cast<double>(a.n - 1));
  cell = std::min(static_cast<int>(std::floor(pos)), a.n - 2);
  frac = pos - cell;
  return true;
}

}  // namespace

double interpolate(const ScalarField& f, double x, double y, double t) {
  const GridSpec& g = f.grid();
  int i = 0, j = 0, k = 0;
  double fx = 0, fy = 0, ft = 0;
  if (!locate(g.x(), x, i, fx) || !locate(g.y(), y, j, fy))
    throw ConfigError("interpolation point outside the grid hull");
  if (g.has_time() && !locate(g.t(), t, k, ft))
    throw ConfigError("interpolation time outside the grid hull");
  auto bilinear = [&](int kk) {
    return (1 - fy) * ((1 - fx) * f(i, j, kk) + fx * f(i + 1, j, kk)) +
           fy * ((1 - fx) * f(i, j + 1, kk) + fx * f(i + 1, j + 1, kk));
  };
  if (!g.has_time()) return bilinear(0);
  if (ft == 0.0) return bilinear(k);
  return (1 - ft) * bilinear(k) + ft * bilinear(k + 1);
}

ScalarField restrict_to_grid(const ScalarField& fine, const GridSpec& target) {
  if (target.has_time() && !fine.grid().has_time())
    throw DimensionError("cannot restrict a spatial field to a space-time grid");
  return ScalarField::sample(target, [&](double x, double y, double t) {
    return interpolate(fine, x, y, t);
  });
}

SirFields restrict_to_inverse_grid(const SirFields& fine, const GridSpec& target) {
  return {restrict_to_grid(fine.rho_S, target), restrict_to_grid(fine.rho_I, target),
          restrict_to_grid(fine.rho_R, target)};
}

}  // namespace sirinv
