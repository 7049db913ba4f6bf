#include "sirinv/observation.hpp"

#include "sirinv/errors.hpp"
#include "sirinv/spline.hpp"

#include <cmath>
#include <random>
#include <string>

namespace sirinv {

std::vector<BoundaryPoint> lateral_boundary(const GridSpec& g) {
  std::vector<BoundaryPoint> pts;
  pts.reserve(2 * static_cast<std::size_t>(g.nx() + g.ny()));
  for (int j = 0; j < g.ny(); ++j) pts.push_back({Face::XMin, 0, j, -1.0, 0.0});
  for (int j = 0; j < g.ny(); ++j) pts.push_back({Face::XMax, g.nx() - 1, j, 1.0, 0.0});
  for (int i = 0; i < g.nx(); ++i) pts.push_back({Face::YMin, i, 0, 0.0, -1.0});
  for (int i = 0; i < g.nx(); ++i) pts.push_back({Face::YMax, i, g.ny() - 1, 0.0, 1.0});
  return pts;
}

std::vector<BoundaryPoint> gamma_boundary(const GridSpec& g) {
  std::vector<BoundaryPoint> pts;
  for (int j = 0; j < g.ny(); ++j) pts.push_back({Face::XMax, g.nx() - 1, j, 1.0, 0.0});
  return pts;
}

Trace Trace::zeros(std::vector<BoundaryPoint> points, const Axis& t) {
  Trace tr;
  tr.values = Eigen::MatrixXd::Zero(static_cast<Index>(points.size()), t.n);
  tr.points = std::move(points);
  tr.t = t;
  return tr;
}

Trace Trace::sample(std::vector<BoundaryPoint> points, const ScalarField& f) {
  Trace tr = zeros(std::move(points), f.grid().t());
  for (Index a = 0; a < tr.values.rows(); ++a)
    for (int k = 0; k < f.grid().nt(); ++k) {
      const auto& bp = tr.points[static_cast<std::size_t>(a)];
      tr.values(a, k) = f(bp.i, bp.j, k);
    }
  return tr;
}

KnownModel KnownModel::constant(const GridSpec& grid, double d, double qx, double qy) {
  KnownModel m;
  m.d = d;
  m.q_S = m.q_I = m.q_R = VectorField2::constant(grid, qx, qy);
  return m;
}

double check_floor(const ScalarField& p1, const ScalarField& p2, double c_floor) {
  const double m1 = p1.values().cwiseAbs().minCoeff();
  const double m2 = p2.values().cwiseAbs().minCoeff();
  const double m = std::min(m1, m2);
  if (!(m >= c_floor))
    throw DataValidityError("min |p1| = " + std::to_string(m1) + ", min |p2| = " +
                            std::to_string(m2) + " fall below the floor " +
                            std::to_string(c_floor));
  return m;
}

CauchyData extract_measurements(const SirFields& fine, const GridSpec& inverse, double c_floor) {
  if (!inverse.has_time()) throw DimensionError("inverse grid needs a time axis");
  const Axis& t = inverse.t();
  const auto k_mid = t.node_of(0.5 * (t.min + t.max));
  if (!k_mid) throw ConfigError("T/2 is not a node of the inverse time axis (nt must be odd)");

  const SirFields coarse = restrict_to_inverse_grid(fine, inverse);
  const std::array<const ScalarField*, 3> fine_rho{&fine.rho_S, &fine.rho_I, &fine.rho_R};
  const std::array<const ScalarField*, 3> rho{&coarse.rho_S, &coarse.rho_I, &coarse.rho_R};

  CauchyData data;
  data.grid = inverse;
  const auto lateral = lateral_boundary(inverse);
  for (std::size_t c = 0; c < 3; ++c) {
    data.p[c] = rho[c]->slice(*k_mid);
    data.f[c] = Trace::sample(gamma_boundary(inverse), *rho[c]);

    const ScalarField gx = d_dx(*fine_rho[c]);
    const ScalarField gy = d_dy(*fine_rho[c]);
    Trace r = Trace::zeros(lateral, t);
    for (Index a = 0; a < r.values.rows(); ++a) {
      const auto& bp = lateral[static_cast<std::size_t>(a)];
      const double x = inverse.x().at(bp.i), y = inverse.y().at(bp.j);
      for (int k = 0; k < t.n; ++k) {
        double v = 0.0;
        if (bp.nx != 0.0) v += bp.nx * interpolate(gx, x, y, t.at(k));
        if (bp.ny != 0.0) v += bp.ny * interpolate(gy, x, y, t.at(k));
        r.values(a, k) = v;
      }
    }
    data.r[c] = std::move(r);
  }
  check_floor(data.p[0], data.p[1], c_floor);
  return data;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

template <typename Derived>
void perturb(Eigen::DenseBase<Derived>& a, double delta, std::uint64_t seed, std::uint64_t stream) {
  if (delta == 0.0) return;
  const double scale = delta * a.derived().cwiseAbs().maxCoeff();
  const Eigen::VectorXd u = uniform_noise(seed, stream, a.size());
  // Column-major traversal matches the storage of both fields and traces.
  Eigen::Map<Eigen::VectorXd>(a.derived().data(), a.size()) += scale * u;
}

}  // namespace

Eigen::VectorXd uniform_noise(std::uint64_t seed, std::uint64_t stream, Index count) {
  std::mt19937_64 engine(splitmix64(seed + stream));
  Eigen::VectorXd u(count);
  for (Index i = 0; i < count; ++i) {
    double v;
    do {
      v = static_cast<double>(engine() >> 11) * 0x1.0p-53 * 2.0 - 1.0;
    } while (v == -1.0);
    u[i] = v;
  }
  return u;
}

CauchyData add_noise(const CauchyData& data, const NoiseModel& model) {
  if (!(model.delta >= 0.0 && model.delta < 1.0)) throw ConfigError("noise level must be in [0, 1)");
  CauchyData out = data;
  out.delta = model.delta;
  out.seed = model.seed;
  for (std::uint64_t c = 0; c < 3; ++c) {
    perturb(out.p[c].values(), model.delta, model.seed, c);
    perturb(out.r[c].values, model.delta, model.seed, 3 + c);
    perturb(out.f[c].values, model.delta, model.seed, 6 + c);
  }
  return out;
}

TraceDerivatives smooth_diff_time(const Trace& trace, double p_time) {
  if (trace.t.n < 5) throw DimensionError("smooth_diff_time needs nt >= 5");
  if (!(trace.t.min < trace.t.max)) throw DimensionError("degenerate time axis");
  const auto spline = SmoothingSpline<double>::uniform(trace.t.min, trace.t.max, trace.t.n, p_time);
  TraceDerivatives out{trace, trace};
  // Rows are nodes: apply the operators from the right.
  out.d1.values = trace.values * spline.first_derivative_operator().transpose();
  out.d2.values = trace.values * spline.second_derivative_operator().transpose();
  return out;
}

ScalarField smooth_2d(const ScalarField& f, double p_space) {
  const GridSpec& g = f.grid();
  if (g.has_time()) throw DimensionError("smooth_2d expects a spatial field");
  if (p_space >= 1.0) return f;
  const auto sx = SmoothingSpline<double>::uniform(g.x().min, g.x().max, g.nx(), p_space);
  const auto sy = SmoothingSpline<double>::uniform(g.y().min, g.y().max, g.ny(), p_space);
  Eigen::Map<const Eigen::MatrixXd> m(f.values().data(), g.nx(), g.ny());
  const Eigen::MatrixXd smoothed = sx.value_operator() * m * sy.value_operator().transpose();
  return ScalarField(g, Eigen::Map<const Eigen::VectorXd>(smoothed.data(), smoothed.size()));
}

SCoefficients compute_s_coefficients(const ScalarField& p1, const ScalarField& p2,
                                     const ScalarField& p3, const VectorField2& q_S,
                                     const VectorField2& q_R, double d, double c_floor) {
  check_floor(p1, p2, c_floor);
  const GridSpec& g = p1.grid();
  if (p2.grid() != g || p3.grid() != g) throw DimensionError("p fields on different grids");
  SCoefficients s;
  s.s1 = ScalarField(g, -(p1.values().array() * p2.values().array()).inverse().matrix());
  const Eigen::ArrayXd drift1 =
      d * laplacian(p1).values().array() - divergence(p1, q_S).values().array();
  s.s2 = ScalarField(g, (-s.s1.values().array() * drift1).matrix());
  s.s3 = ScalarField(g, p2.values().array().inverse().matrix());
  const Eigen::ArrayXd drift3 =
      d * laplacian(p3).values().array() - divergence(p3, q_R).values().array();
  s.s4 = ScalarField(g, (-s.s3.values().array() * drift3).matrix());
  return s;
}

DerivedData build_boundary_vectors(const CauchyData& data, const KnownModel& model,
                                   const ObservationConfig& cfg) {
  DerivedData out;
  out.grid = data.grid;
  for (std::size_t c = 0; c < 3; ++c) {
    auto df = smooth_diff_time(data.f[c], cfg.p_time);
    auto dr = smooth_diff_time(data.r[c], cfg.p_time);
    out.G0[c] = std::move(df.d1);
    out.G0[c + 3] = std::move(df.d2);
    out.G1[c] = std::move(dr.d1);
    out.G1[c + 3] = std::move(dr.d2);
    out.p[c] = smooth_2d(data.p[c], cfg.spatial_parameter(data.delta));
  }
  out.c_floor = check_floor(data.p[0], data.p[1], cfg.c_floor);
  out.s = compute_s_coefficients(out.p[0], out.p[1], out.p[2], model.q_S, model.q_R, model.d,
                                 cfg.c_floor);
  out.model = model;
  return out;
}

}  // namespace sirinv
