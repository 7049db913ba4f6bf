#include "sirinv/inversion.hpp"

#include "sirinv/errors.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <string>

namespace sirinv {

using Triplet = Eigen::Triplet<double>;
using RowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

WField WField::zeros(const GridSpec& grid) {
  WField w;
  for (auto& c : w.w) c = ScalarField(grid);
  return w;
}

Eigen::VectorXd WField::stacked() const {
  const Index n = grid().size();
  Eigen::VectorXd v(kComponents * n);
  for (int c = 0; c < kComponents; ++c) v.segment(c * n, n) = w[c].values();
  return v;
}

WField WField::from_stacked(const GridSpec& grid, const Eigen::VectorXd& v) {
  const Index n = grid.size();
  if (v.size() != kComponents * n) throw DimensionError("stacked vector has the wrong length");
  WField out;
  for (int c = 0; c < kComponents; ++c) out.w[c] = ScalarField(grid, Eigen::VectorXd(v.segment(c * n, n)));
  return out;
}

double WField::rms() const {
  double s = 0.0;
  for (const auto& c : w) s += c.values().squaredNorm();
  return std::sqrt(s / (kComponents * static_cast<double>(grid().size())));
}

void InverseConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be finite and >= 0");
  if (!(xi > 0.0) || !std::isfinite(xi)) throw ConfigError("xi must be > 0");
  if (!std::isfinite(neumann_penalty)) throw ConfigError("neumann_penalty must be finite");
  if (!(compat_penalty >= 0.0) || !std::isfinite(compat_penalty))
    throw ConfigError("compat_penalty must be >= 0");
  if (reg_order != 2) throw ConfigError("only reg_order = 2 is supported");
  if (!(stop_tol > 0.0)) throw ConfigError("stop_tol must be > 0");
  if (max_iter < 0) throw ConfigError("max_iter must be >= 0");
  if (!(ls_tol > 0.0)) throw ConfigError("ls_tol must be > 0");
  if (ls_max_iter < 1) throw ConfigError("ls_max_iter must be >= 1");
}

int mid_time_index(const GridSpec& grid) {
  if (!grid.has_time()) throw DimensionError("a space-time grid is needed");
  const auto k = grid.t().node_of(0.5 * (grid.t().min + grid.t().max));
  if (!k) throw ConfigError("T/2 is not a node of the time axis (nt must be odd)");
  return *k;
}

namespace {

const VectorField2& flux_of(const KnownModel& m, int c) {
  switch (c % 3) {
    case 0: return m.q_S;
    case 1: return m.q_I;
    default: return m.q_R;
  }
}

void check_inverse_grid(const GridSpec& g) {
  if (!g.has_time()) throw DimensionError("inverse grid needs a time axis");
  if (g.nx() < 4 || g.ny() < 4) throw DimensionError("inverse grid needs nx, ny >= 4");
  if (g.nt() < 3) throw DimensionError("inverse grid needs nt >= 3");
}

// Row of L for component c at interior node (i, j, k), appended as triplets
// with weight applied later.
void emit_L_row(std::vector<Triplet>& out, Index row, const GridSpec& g, const KnownModel& m,
                int c, int i, int j, int k) {
  const Index base = c * g.size();
  const double hx = g.hx(), hy = g.hy(), ht = g.ht();
  const int nt = g.nt();
  const VectorField2& q = flux_of(m, c);
  auto col = [&](int ii, int jj, int kk) { return base + g.index(ii, jj, kk); };

  if (k == 0) {
    out.emplace_back(row, col(i, j, 0), -3.0 / (2 * ht));
    out.emplace_back(row, col(i, j, 1), 4.0 / (2 * ht));
    out.emplace_back(row, col(i, j, 2), -1.0 / (2 * ht));
  } else if (k == nt - 1) {
    out.emplace_back(row, col(i, j, nt - 1), 3.0 / (2 * ht));
    out.emplace_back(row, col(i, j, nt - 2), -4.0 / (2 * ht));
    out.emplace_back(row, col(i, j, nt - 3), 1.0 / (2 * ht));
  } else {
    out.emplace_back(row, col(i, j, k + 1), 1.0 / (2 * ht));
    out.emplace_back(row, col(i, j, k - 1), -1.0 / (2 * ht));
  }
  const double ax = m.d / (hx * hx), ay = m.d / (hy * hy);
  out.emplace_back(row, col(i, j, k), 2 * ax + 2 * ay);
  out.emplace_back(row, col(i - 1, j, k), -ax + (-q.u(i - 1, j)) / (2 * hx));
  out.emplace_back(row, col(i + 1, j, k), -ax + q.u(i + 1, j) / (2 * hx));
  out.emplace_back(row, col(i, j - 1, k), -ay + (-q.v(i, j - 1)) / (2 * hy));
  out.emplace_back(row, col(i, j + 1, k), -ay + q.v(i, j + 1) / (2 * hy));
}

template <typename Fn>
void for_interior(const GridSpec& g, Fn&& fn) {
  for (int k = 0; k < g.nt(); ++k)
    for (int j = 1; j < g.ny() - 1; ++j)
      for (int i = 1; i < g.nx() - 1; ++i) fn(i, j, k);
}

Index interior_count(const GridSpec& g) {
  return static_cast<Index>(g.nx() - 2) * (g.ny() - 2) * g.nt();
}

ScalarField broadcast(const ScalarField& spatial, const GridSpec& g) {
  ScalarField out(g);
  for (int k = 0; k < g.nt(); ++k) out.set_slice(k, spatial);
  return out;
}

Eigen::ArrayXd arr(const ScalarField& f) { return f.values().array(); }

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

}  // namespace

Components apply_L(const WField& w, const KnownModel& m) {
  Components out;
  for (int c = 0; c < kComponents; ++c) {
    const ScalarField& u = w.w[c];
    out[c] = ScalarField(u.grid(), (d_dt(u).values() - m.d * laplacian(u).values() +
                                    divergence(u, flux_of(m, c)).values()));
  }
  return out;
}

RowMatrix assemble_L(const GridSpec& g, const KnownModel& m) {
  check_inverse_grid(g);
  std::vector<Triplet> trip;
  const Index per = interior_count(g);
  trip.reserve(static_cast<std::size_t>(kComponents * per * 9));
  Index row = 0;
  for (int c = 0; c < kComponents; ++c)
    for_interior(g, [&](int i, int j, int k) { emit_L_row(trip, row++, g, m, c, i, j, k); });
  RowMatrix L(kComponents * per, kComponents * g.size());
  L.setFromTriplets(trip.begin(), trip.end());
  return L;
}

CoefficientSurrogates coefficient_surrogates(const WField& w, const SCoefficients& s) {
  const GridSpec& g = w.grid();
  const double tm = g.t().at(mid_time_index(g));
  const ScalarField i4 = time_integral_from_mid(w.w[3], tm);
  const ScalarField i6 = time_integral_from_mid(w.w[5], tm);
  const ScalarField s1 = broadcast(s.s1, g), s2 = broadcast(s.s2, g);
  const ScalarField s3 = broadcast(s.s3, g), s4 = broadcast(s.s4, g);
  CoefficientSurrogates out;
  out.B = ScalarField(g, ((arr(w.w[0]) - arr(i4)) * arr(s1) + arr(s2)).matrix());
  out.Gamma = ScalarField(g, ((arr(w.w[2]) - arr(i6)) * arr(s3) + arr(s4)).matrix());
  return out;
}

Components eval_Y(const WField& w, const SCoefficients& s, const ScalarField& p1,
                  const ScalarField& p2) {
  const GridSpec& g = w.grid();
  const double tm = g.t().at(mid_time_index(g));
  const auto [B, Gm] = coefficient_surrogates(w, s);
  const Eigen::ArrayXd J1 = arr(time_integral_from_mid(w.w[0], tm)) + arr(broadcast(p1, g));
  const Eigen::ArrayXd J2 = arr(time_integral_from_mid(w.w[1], tm)) + arr(broadcast(p2, g));
  const Eigen::ArrayXd w1 = arr(w.w[0]), w2 = arr(w.w[1]), w4 = arr(w.w[3]), w5 = arr(w.w[4]);
  const Eigen::ArrayXd b = arr(B), gm = arr(Gm);

  Components y;
  const Eigen::ArrayXd y1 = b * (w1 * J2 + J1 * w2);
  const Eigen::ArrayXd y4 = b * (w4 * J2 + 2.0 * w1 * w2 + J1 * w5);
  y[0] = ScalarField(g, y1.matrix());
  y[1] = ScalarField(g, (-y1).matrix());
  y[2] = ScalarField(g, (-gm * w2).matrix());
  y[3] = ScalarField(g, y4.matrix());
  y[4] = ScalarField(g, (-y4).matrix());
  y[5] = ScalarField(g, (-gm * w5).matrix());
  for (int c = 0; c < kComponents; ++c) {
    const Eigen::VectorXd& v = y[c].values();
    for (Index n = 0; n < v.size(); ++n)
      if (!std::isfinite(v[n]))
        throw NumericalError("Y" + std::to_string(c + 1) + " is not finite at node " +
                             std::to_string(n));
  }
  return y;
}

Eigen::VectorXd pde_forcing(const WField* w_prev, const DerivedData& data, const Components* source) {
  const GridSpec& g = data.grid;
  Eigen::VectorXd f = Eigen::VectorXd::Zero(kComponents * interior_count(g));
  std::optional<Components> y;
  if (w_prev) y = eval_Y(*w_prev, data.s, data.p[0], data.p[1]);
  Index row = 0;
  for (int c = 0; c < kComponents; ++c)
    for_interior(g, [&](int i, int j, int k) {
      double v = 0.0;
      if (y) v -= (*y)[c](i, j, k);
      if (source) v += (*source)[c](i, j, k);
      f[row++] = v;
    });
  return f;
}

void SparseLS::set_pde_forcing(const Eigen::VectorXd& forcing) {
  const auto [b, e] = blocks[static_cast<int>(RowBlock::Pde)];
  if (forcing.size() != e - b) throw DimensionError("PDE forcing has the wrong length");
  data_rhs.segment(b, e - b) = forcing;
}

Eigen::VectorXd SparseLS::to_free(const WField& w) const {
  const Eigen::VectorXd full = w.stacked();
  Eigen::VectorXd x(n_free());
  for (Index a = 0; a < n_free(); ++a) x[a] = full[free_to_full[static_cast<std::size_t>(a)]];
  return x;
}

WField SparseLS::to_field(const Eigen::VectorXd& free) const {
  Eigen::VectorXd full = fixed_values;
  for (Index a = 0; a < n_free(); ++a) full[free_to_full[static_cast<std::size_t>(a)]] = free[a];
  return WField::from_stacked(grid, full);
}

Eigen::VectorXd SparseLS::weighted_residual(const Eigen::VectorXd& free) const {
  return weights.cwiseProduct(matrix * free - rhs());
}

double SparseLS::functional(const Eigen::VectorXd& free) const {
  return weighted_residual(free).squaredNorm();
}

Eigen::VectorXd SparseLS::gradient(const Eigen::VectorXd& free) const {
  const Eigen::VectorXd r = weights.cwiseProduct(weighted_residual(free));
  return 2.0 * (matrix.transpose() * r);
}

double SparseLS::block_value(RowBlock blk, const Eigen::VectorXd& free) const {
  const auto [b, e] = blocks[static_cast<int>(blk)];
  if (e <= b) return 0.0;
  return weighted_residual(free).segment(b, e - b).squaredNorm();
}

SparseLS assemble_functional(const WField* w_prev, const DerivedData& data,
                             const InverseConfig& cfg, const Components* source) {
  cfg.validate();
  const GridSpec& g = data.grid;
  check_inverse_grid(g);
  mid_time_index(g);
  const KnownModel& m = data.model;
  const Index N = g.size();
  const int nx = g.nx(), ny = g.ny(), nt = g.nt();
  const double hx = g.hx(), hy = g.hy(), ht = g.ht();

  std::vector<Triplet> trip;
  std::vector<double> w, rhs;
  Index row = 0;
  SparseLS sys;
  sys.grid = g;

  // PDE rows with Carleman-weighted quadrature.
  const ScalarField qw = quadrature_weights(g);
  const CarlemanWeight<double> cwf{cfg.lambda, g.x().max, g.t().max - g.t().min};
  const double t0 = g.t().min;
  sys.blocks[0].first = row;
  for (int c = 0; c < kComponents; ++c)
    for_interior(g, [&](int i, int j, int k) {
      emit_L_row(trip, row, g, m, c, i, j, k);
      w.push_back(std::sqrt(qw(i, j, k) * cwf.normalized(g.x().at(i), g.t().at(k) - t0)));
      ++row;
    });
  sys.blocks[0].second = row;
  {
    const Eigen::VectorXd f = pde_forcing(w_prev, data, source);
    rhs.assign(f.data(), f.data() + f.size());
  }

  // Neumann rows: one-sided normal derivative on every lateral boundary node.
  double kn = cfg.neumann_penalty;
  if (kn <= 0.0) kn = 1e3 * median(w);
  sys.neumann_weight = kn;
  const auto lateral = lateral_boundary(g);
  sys.blocks[1].first = row;
  for (int c = 0; c < kComponents; ++c) {
    const Index base = c * N;
    const Trace& G1 = data.G1[c];
    if (G1.values.rows() != static_cast<Index>(lateral.size()) || G1.values.cols() != nt)
      throw DimensionError("Neumann data does not match the inverse grid");
    for (std::size_t a = 0; a < lateral.size(); ++a) {
      const auto& bp = lateral[a];
      for (int k = 0; k < nt; ++k) {
        auto col = [&](int ii, int jj) { return base + g.index(ii, jj, k); };
        switch (bp.face) {
          case Face::XMin:
            trip.emplace_back(row, col(0, bp.j), 3.0 / (2 * hx));
            trip.emplace_back(row, col(1, bp.j), -4.0 / (2 * hx));
            trip.emplace_back(row, col(2, bp.j), 1.0 / (2 * hx));
            break;
          case Face::XMax:
            trip.emplace_back(row, col(nx - 1, bp.j), 3.0 / (2 * hx));
            trip.emplace_back(row, col(nx - 2, bp.j), -4.0 / (2 * hx));
            trip.emplace_back(row, col(nx - 3, bp.j), 1.0 / (2 * hx));
            break;
          case Face::YMin:
            trip.emplace_back(row, col(bp.i, 0), 3.0 / (2 * hy));
            trip.emplace_back(row, col(bp.i, 1), -4.0 / (2 * hy));
            trip.emplace_back(row, col(bp.i, 2), 1.0 / (2 * hy));
            break;
          case Face::YMax:
            trip.emplace_back(row, col(bp.i, ny - 1), 3.0 / (2 * hy));
            trip.emplace_back(row, col(bp.i, ny - 2), -4.0 / (2 * hy));
            trip.emplace_back(row, col(bp.i, ny - 3), 1.0 / (2 * hy));
            break;
        }
        w.push_back(kn);
        rhs.push_back(G1.values(static_cast<Index>(a), k));
        ++row;
      }
    }
  }
  sys.blocks[1].second = row;

  // Compatibility rows d_dt(w_c) - w_{c+3}.
  sys.blocks[2].first = row;
  if (cfg.compat_penalty > 0.0) {
    for (int c = 0; c < 3; ++c)
      for (int k = 0; k < nt; ++k)
        for (int j = 0; j < ny; ++j)
          for (int i = 0; i < nx; ++i) {
            auto col = [&](int kk) { return c * N + g.index(i, j, kk); };
            if (k == 0) {
              trip.emplace_back(row, col(0), -3.0 / (2 * ht));
              trip.emplace_back(row, col(1), 4.0 / (2 * ht));
              trip.emplace_back(row, col(2), -1.0 / (2 * ht));
            } else if (k == nt - 1) {
              trip.emplace_back(row, col(nt - 1), 3.0 / (2 * ht));
              trip.emplace_back(row, col(nt - 2), -4.0 / (2 * ht));
              trip.emplace_back(row, col(nt - 3), 1.0 / (2 * ht));
            } else {
              trip.emplace_back(row, col(k + 1), 1.0 / (2 * ht));
              trip.emplace_back(row, col(k - 1), -1.0 / (2 * ht));
            }
            trip.emplace_back(row, (c + 3) * N + g.index(i, j, k), -1.0);
            w.push_back(std::sqrt(cfg.compat_penalty * qw(i, j, k)));
            rhs.push_back(0.0);
            ++row;
          }
  }
  sys.blocks[2].second = row;

  // Discrete H^2 regularization: values, first differences on edges, pure
  // second differences at nodes interior along the axis.
  const Eigen::VectorXd wx = trapezoid_weights(g.x()), wy = trapezoid_weights(g.y()),
                        wt = trapezoid_weights(g.t());
  const std::array<double, 3> h{hx, hy, ht};
  const std::array<int, 3> n{nx, ny, nt};
  sys.blocks[3].first = row;
  for (int c = 0; c < kComponents; ++c) {
    const Index base = c * N;
    for (int k = 0; k < nt; ++k)
      for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
          const std::array<int, 3> ix{i, j, k};
          const std::array<double, 3> tw{wx[i], wy[j], wt[k]};
          auto idx = [&](int axis, int off) {
            std::array<int, 3> p = ix;
            p[axis] += off;
            return base + g.index(p[0], p[1], p[2]);
          };
          trip.emplace_back(row, base + g.index(i, j, k), 1.0);
          w.push_back(std::sqrt(cfg.xi * tw[0] * tw[1] * tw[2]));
          rhs.push_back(0.0);
          ++row;
          for (int a = 0; a < 3; ++a) {
            double other = 1.0;
            for (int b = 0; b < 3; ++b)
              if (b != a) other *= tw[b];
            const double wr = std::sqrt(cfg.xi * h[a] * other);
            if (ix[a] + 1 < n[a]) {
              trip.emplace_back(row, idx(a, 1), 1.0 / h[a]);
              trip.emplace_back(row, idx(a, 0), -1.0 / h[a]);
              w.push_back(wr);
              rhs.push_back(0.0);
              ++row;
            }
            if (ix[a] > 0 && ix[a] + 1 < n[a]) {
              const double s = 1.0 / (h[a] * h[a]);
              trip.emplace_back(row, idx(a, -1), s);
              trip.emplace_back(row, idx(a, 0), -2.0 * s);
              trip.emplace_back(row, idx(a, 1), s);
              w.push_back(wr);
              rhs.push_back(0.0);
              ++row;
            }
          }
        }
  }
  sys.blocks[3].second = row;

  // Dirichlet values on the x = b face are fixed.
  const Index total = kComponents * N;
  sys.fixed_values = Eigen::VectorXd::Zero(total);
  sys.full_to_free.assign(static_cast<std::size_t>(total), 0);
  for (int c = 0; c < kComponents; ++c) {
    const Trace& G0 = data.G0[c];
    if (G0.values.rows() != ny || G0.values.cols() != nt)
      throw DimensionError("Dirichlet data does not match the inverse grid");
    for (int k = 0; k < nt; ++k)
      for (int j = 0; j < ny; ++j) {
        const Index col = c * N + g.index(nx - 1, j, k);
        sys.full_to_free[static_cast<std::size_t>(col)] = -1;
        sys.fixed_values[col] = G0.values(j, k);
      }
  }
  for (Index col = 0; col < total; ++col)
    if (sys.full_to_free[static_cast<std::size_t>(col)] >= 0) {
      sys.full_to_free[static_cast<std::size_t>(col)] = static_cast<Index>(sys.free_to_full.size());
      sys.free_to_full.push_back(col);
    }

  sys.fixed_part = Eigen::VectorXd::Zero(row);
  std::vector<Triplet> free_trip;
  free_trip.reserve(trip.size());
  for (const auto& t : trip) {
    const Index f = sys.full_to_free[static_cast<std::size_t>(t.col())];
    if (f < 0) sys.fixed_part[t.row()] += t.value() * sys.fixed_values[t.col()];
    else free_trip.emplace_back(t.row(), f, t.value());
  }
  sys.matrix.resize(row, sys.n_free());
  sys.matrix.setFromTriplets(free_trip.begin(), free_trip.end());
  sys.weights = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Index>(w.size()));
  sys.data_rhs = Eigen::Map<const Eigen::VectorXd>(rhs.data(), static_cast<Index>(rhs.size()));
  if (!sys.weights.allFinite() || sys.weights.minCoeff() <= 0.0)
    throw NumericalError("row weights must be finite and positive (lambda too large for this grid?)");
  return sys;
}

struct QrmSolver::Impl {
  InverseConfig cfg;
  Eigen::SparseMatrix<double> normal;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
  Eigen::VectorXd inv_diag;
};

QrmSolver::QrmSolver(const SparseLS& sys, const InverseConfig& cfg) : impl_(std::make_unique<Impl>()) {
  impl_->cfg = cfg;
  const Eigen::SparseMatrix<double> wa = sys.weights.asDiagonal() * sys.matrix;
  impl_->normal = Eigen::SparseMatrix<double>(wa.transpose()) * wa;
  impl_->normal.makeCompressed();
  if (cfg.solver == LsSolver::Direct) {
    impl_->ldlt.compute(impl_->normal);
    if (impl_->ldlt.info() != Eigen::Success)
      throw NumericalError("factorization of the normal matrix failed");
  } else {
    impl_->inv_diag = impl_->normal.diagonal().cwiseInverse();
  }
}

QrmSolver::~QrmSolver() = default;
QrmSolver::QrmSolver(QrmSolver&&) noexcept = default;
QrmSolver& QrmSolver::operator=(QrmSolver&&) noexcept = default;

Eigen::VectorXd QrmSolver::solve(const SparseLS& sys, SolveInfo* info) const {
  const Impl& s = *impl_;
  if (sys.n_free() != s.normal.rows()) throw DimensionError("system does not match the solver");
  const Eigen::VectorXd b =
      sys.matrix.transpose() * (sys.weights.array().square() * sys.rhs().array()).matrix();
  const double bn = b.norm();
  SolveInfo local;
  SolveInfo& inf = info ? *info : local;
  inf = {};
  if (bn == 0.0) return Eigen::VectorXd::Zero(sys.n_free());

  Eigen::VectorXd x = Eigen::VectorXd::Zero(sys.n_free());
  if (s.cfg.solver == LsSolver::Direct) {
    x = s.ldlt.solve(b);
    Eigen::VectorXd r = b - s.normal * x;
    inf.residual_history.push_back(r.norm() / bn);
    // Iterative refinement against the same factorization.
    while (inf.residual_history.back() > s.cfg.ls_tol && inf.iterations < s.cfg.ls_max_iter) {
      const Eigen::VectorXd dx = s.ldlt.solve(r);
      x += dx;
      r = b - s.normal * x;
      const double rel = r.norm() / bn;
      ++inf.iterations;
      const bool stalled = rel >= 0.5 * inf.residual_history.back();
      inf.residual_history.push_back(rel);
      if (stalled) break;
    }
  } else {
    // Jacobi-preconditioned CG on the normal equations.
    Eigen::VectorXd r = b;
    Eigen::VectorXd z = s.inv_diag.cwiseProduct(r);
    Eigen::VectorXd p = z;
    double rz = r.dot(z);
    inf.residual_history.push_back(1.0);
    while (inf.iterations < s.cfg.ls_max_iter) {
      const Eigen::VectorXd ap = s.normal * p;
      const double alpha = rz / p.dot(ap);
      x += alpha * p;
      r -= alpha * ap;
      ++inf.iterations;
      const double rel = r.norm() / bn;
      inf.residual_history.push_back(rel);
      if (rel <= s.cfg.ls_tol) break;
      z = s.inv_diag.cwiseProduct(r);
      const double rz_new = r.dot(z);
      p = z + (rz_new / rz) * p;
      rz = rz_new;
    }
  }
  if (!x.allFinite()) throw NumericalError("least-squares solve produced non-finite values");
  if (inf.residual_history.back() > s.cfg.ls_tol)
    throw ConvergenceError("least-squares solve reached relative residual " +
                               std::to_string(inf.residual_history.back()) + " > ls_tol " +
                               std::to_string(s.cfg.ls_tol) + " after " +
                               std::to_string(inf.iterations) + " iterations",
                           inf.residual_history);
  return x;
}

WField solve_qrm_step(const SparseLS& sys, const InverseConfig& cfg, SolveInfo* info) {
  const QrmSolver solver(sys, cfg);
  return sys.to_field(solver.solve(sys, info));
}

double compatibility_defect(const WField& w) {
  double s = 0.0;
  for (int c = 0; c < 3; ++c) s += (d_dt(w.w[c]).values() - w.w[c + 3].values()).squaredNorm();
  return std::sqrt(s / (3.0 * static_cast<double>(w.grid().size())));
}

double mean_time_variance(const ScalarField& f) {
  const GridSpec& g = f.grid();
  const Index m = g.slice_size();
  Eigen::Map<const Eigen::MatrixXd> a(f.values().data(), m, g.nt());
  const Eigen::VectorXd mean = a.rowwise().mean();
  return ((a.colwise() - mean).array().square().rowwise().sum() / g.nt()).mean();
}

double carleman_weighted_norm(const WField& w, double lambda) {
  const GridSpec& g = w.grid();
  const CarlemanWeight<double> cwf{lambda, g.x().max, g.t().max - g.t().min};
  const ScalarField qw = quadrature_weights(g);
  double s = 0.0;
  for (int k = 0; k < g.nt(); ++k)
    for (int j = 0; j < g.ny(); ++j)
      for (int i = 0; i < g.nx(); ++i) {
        double v = 0.0;
        for (const auto& c : w.w) v += c(i, j, k) * c(i, j, k);
        s += qw(i, j, k) * cwf.normalized(g.x().at(i), g.t().at(k) - g.t().min) * v;
      }
  return std::sqrt(s);
}

CcmmResult ccmm_iterate(const DerivedData& data, const InverseConfig& cfg, const CcmmOptions& options) {
  cfg.validate();
  SparseLS sys = assemble_functional(nullptr, data, cfg, options.source);
  const QrmSolver solver(sys, cfg);

  CcmmResult res;
  auto record = [&](int n, const WField& w, const Eigen::VectorXd& x, double step, const SolveInfo& info) {
    IterationRecord r;
    r.iteration = n;
    r.step_norm = step;
    r.functional = sys.functional(x);
    r.compat_defect = compatibility_defect(w);
    const auto sur = coefficient_surrogates(w, data.s);
    r.beta_tvar = mean_time_variance(sur.B);
    r.gamma_tvar = mean_time_variance(sur.Gamma);
    r.w_norm = w.rms();
    r.ls_residual = info.residual_history.empty() ? 0.0 : info.residual_history.back();
    res.history.push_back(r);
  };

  SolveInfo info;
  Eigen::VectorXd x = solver.solve(sys, &info);
  WField w = sys.to_field(x);
  record(0, w, x, w.rms(), info);
  if (options.keep_iterates) res.iterates.push_back(w);

  for (int n = 1; n <= cfg.max_iter; ++n) {
    sys.set_pde_forcing(pde_forcing(&w, data, options.source));
    x = solver.solve(sys, &info);
    WField next = sys.to_field(x);
    WField diff = next;
    for (int c = 0; c < kComponents; ++c) diff.w[c].values() -= w.w[c].values();
    const double step = diff.rms();
    w = std::move(next);
    record(n, w, x, step, info);
    if (options.keep_iterates) res.iterates.push_back(w);
    res.iterations = n;
    if (!std::isfinite(step)) throw NumericalError("outer iteration " + std::to_string(n) + " diverged");
    if (step < cfg.stop_tol) {
      res.converged = true;
      break;
    }
    if (n >= 3) {
      const double a = res.history[n - 1].step_norm, b = res.history[n].step_norm;
      if (b > 0.95 * a && b > res.history[n - 2].step_norm)
        res.warnings.push_back("step norm stagnating at iteration " + std::to_string(n));
    }
  }
  if (cfg.max_iter == 0) res.converged = true;
  res.w = std::move(w);
  return res;
}

GradientDescentResult gradient_descent_minimize(const SparseLS& sys, double step, int iterations,
                                                const Eigen::VectorXd* start) {
  if (!(step > 0.0)) throw ConfigError("gradient step must be > 0");
  if (iterations < 0) throw ConfigError("iterations must be >= 0");
  GradientDescentResult res;
  res.free = start ? *start : Eigen::VectorXd::Zero(sys.n_free());
  if (res.free.size() != sys.n_free()) throw DimensionError("start vector has the wrong length");
  double j = sys.functional(res.free);
  res.trace.push_back(j);
  for (int it = 0; it < iterations; ++it) {
    const Eigen::VectorXd next = res.free - step * sys.gradient(res.free);
    const double jn = sys.functional(next);
    // round-off near the minimum may raise J by a few ulps
    if (!(jn <= j + 1e-12 * j))
      throw NumericalError("functional increased at step size " + std::to_string(step) +
                           "; try " + std::to_string(step / 2));
    res.free = next;
    j = jn;
    res.trace.push_back(j);
  }
  if (kComponents * sys.grid.size() == sys.n_unknowns()) res.w = sys.to_field(res.free);
  return res;
}

}  // namespace sirinv
