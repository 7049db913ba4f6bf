#include "oracles.hpp"

#include "sirinv/errors.hpp"
#include "sirinv/inversion.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <random>

using namespace sirinv;

namespace {

// Free-standing least-squares system with identity unknown maps.
SparseLS toy_system(const Eigen::MatrixXd& a, const Eigen::VectorXd& w, const Eigen::VectorXd& b) {
  SparseLS s;
  s.matrix = a.sparseView();
  s.weights = w;
  s.data_rhs = b;
  s.fixed_part = Eigen::VectorXd::Zero(b.size());
  s.fixed_values = Eigen::VectorXd::Zero(a.cols());
  for (Index i = 0; i < a.cols(); ++i) {
    s.free_to_full.push_back(i);
    s.full_to_free.push_back(i);
  }
  s.blocks[0] = {0, a.rows()};
  return s;
}

Eigen::VectorXd interior_rows(const Components& f, const GridSpec& g) {
  Eigen::VectorXd v(kComponents * (g.nx() - 2) * (g.ny() - 2) * g.nt());
  Index r = 0;
  for (int c = 0; c < kComponents; ++c)
    for (int k = 0; k < g.nt(); ++k)
      for (int j = 1; j < g.ny() - 1; ++j)
        for (int i = 1; i < g.nx() - 1; ++i) v[r++] = f[c](i, j, k);
  return v;
}

GridSpec grid(int n, int nt) { return GridSpec::space_time({1, 2, n}, {-0.5, 0.5, n}, {0, 1, nt}); }

}  // namespace

TEST_CASE("inverse config validation") {
  InverseConfig c;
  CHECK_NOTHROW(c.validate());
  c.lambda = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.xi = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.reg_order = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.max_iter = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(mid_time_index(grid(5, 11)) == 5);
  CHECK_THROWS_AS(mid_time_index(grid(5, 10)), ConfigError);
}

TEST_CASE("assembled L") {
  const GridSpec g = grid(9, 5);
  const KnownModel m0 = KnownModel::constant(g.spatial_part(), 0.1, 0.0, 0.0);
  const auto L = assemble_L(g, m0);
  CHECK(L.rows() == 6 * 7 * 7 * 5);
  CHECK(L.cols() == 6 * g.size());

  WField c = WField::zeros(g);
  for (auto& f : c.w) f.values().setConstant(1.7);
  CHECK((L * c.stacked()).cwiseAbs().maxCoeff() < 1e-12);

  WField x2 = WField::zeros(g);
  x2.w[0] = ScalarField::sample(g, [](double x, double, double) { return x * x; });
  const Eigen::VectorXd r = L * x2.stacked();
  const Index per = 7 * 7 * 5;
  CHECK((r.head(per).array() + 0.2).abs().maxCoeff() < 1e-10);
  CHECK(r.tail(r.size() - per).cwiseAbs().maxCoeff() == 0.0);

  // rows agree with the field operators and converge at second order
  auto u = [](double x, double y, double t) { return std::sin(2 * x + y) * std::exp(-t); };
  auto Lu = [](double x, double y, double t) {
    const double s = std::sin(2 * x + y), co = std::cos(2 * x + y), e = std::exp(-t);
    // dt u - d Lap u + div(u q), q = (0.2, 0.2)
    return -s * e + 0.1 * 5 * s * e + 0.2 * (2 * co * e + co * e);
  };
  std::vector<double> err;
  for (int n : {9, 17, 33}) {
    const GridSpec gn = grid(n, n);
    const KnownModel m = KnownModel::constant(gn.spatial_part(), 0.1, 0.2, 0.2);
    WField w = WField::zeros(gn);
    for (auto& f : w.w) f = ScalarField::sample(gn, u);
    const Eigen::VectorXd rows = assemble_L(gn, m) * w.stacked();
    const Eigen::VectorXd via_fields = interior_rows(apply_L(w, m), gn);
    CHECK((rows - via_fields).cwiseAbs().maxCoeff() < 1e-9);
    Components exact;
    for (auto& f : exact) f = ScalarField::sample(gn, Lu);
    err.push_back((rows - interior_rows(exact, gn)).cwiseAbs().maxCoeff());
  }
  CHECK(std::log2(err[0] / err[1]) > 1.8);
  CHECK(std::log2(err[1] / err[2]) > 1.8);
}

TEST_CASE("nonlinear term") {
  const GridSpec g = grid(9, 5);
  const GridSpec gs = g.spatial_part();
  SCoefficients s{ScalarField(gs, -2.0), ScalarField(gs, 0.0), ScalarField(gs, 1.5), ScalarField(gs, 0.0)};
  const auto y = eval_Y(WField::zeros(g), s, ScalarField(gs, 0.5), ScalarField(gs, 0.6));
  for (const auto& f : y) CHECK(f.values().cwiseAbs().maxCoeff() == 0.0);

  // homogeneous problem: B equals beta and Gamma equals gamma at every node
  const auto h = oracle::homogeneous(grid(5, 41), 0.3, 0.2, {0.6, 0.8, 0.0});
  const auto sur = coefficient_surrogates(h.w, h.data.s);
  CHECK((sur.B.values().array() - 0.3).abs().maxCoeff() < 1e-4);
  CHECK((sur.Gamma.values().array() - 0.2).abs().maxCoeff() < 1e-4);
  const auto y2 = eval_Y(h.w, h.data.s, h.data.p[0], h.data.p[1]);
  for (const auto& f : y2) CHECK(f.all_finite());
  CHECK((y2[0].values() + y2[1].values()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((y2[3].values() + y2[4].values()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("assembled functional") {
  auto inst = oracle::consistent_instance(9, 9, 5);
  InverseConfig cfg;
  cfg.lambda = 0.0;
  const SparseLS s0 = assemble_functional(nullptr, inst.data, cfg);
  const auto [pb, pe] = s0.blocks[static_cast<int>(RowBlock::Pde)];
  const ScalarField qw = quadrature_weights(inst.data.grid);
  Index r = pb;
  for (int c = 0; c < kComponents; ++c)
    for (int k = 0; k < 5; ++k)
      for (int j = 1; j < 8; ++j)
        for (int i = 1; i < 8; ++i) CHECK(s0.weights[r++] == doctest::Approx(std::sqrt(qw(i, j, k))).epsilon(1e-14));
  CHECK(r == pe);
  CHECK((s0.weights.array() > 0).all());
  CHECK(s0.n_fixed() == 6 * 9 * 5);
  CHECK(s0.blocks[static_cast<int>(RowBlock::Compat)].first == s0.blocks[static_cast<int>(RowBlock::Compat)].second);

  cfg.compat_penalty = 1.0;
  const SparseLS sc = assemble_functional(nullptr, inst.data, cfg);
  const auto [cb, ce] = sc.blocks[static_cast<int>(RowBlock::Compat)];
  CHECK(ce - cb == 3 * inst.data.grid.size());

  // zero data: the minimizer is zero
  for (auto& t : inst.data.G0) t.values.setZero();
  for (auto& t : inst.data.G1) t.values.setZero();
  const WField z = solve_qrm_step(assemble_functional(nullptr, inst.data, {}), {});
  CHECK(z.rms() == 0.0);

  // unknown count on the reference grid
  auto big = oracle::consistent_instance(33, 33, 11);
  const SparseLS sb = assemble_functional(nullptr, big.data, {});
  CHECK(sb.n_free() == 6 * 33 * 33 * 11 - 6 * 33 * 11);
  CHECK(sb.n_unknowns() == 6 * 33 * 33 * 11);
}

TEST_CASE("least-squares solves") {
  // diagonal toy: closed form x_i = b_i / a_i
  Eigen::MatrixXd a = Eigen::Vector3d(2, -4, 0.5).asDiagonal();
  const SparseLS d = toy_system(a, Eigen::Vector3d::Ones(), Eigen::Vector3d(1, 2, 3));
  const Eigen::VectorXd x = QrmSolver(d, {}).solve(d);
  CHECK(x[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(x[1] == doctest::Approx(-0.5).epsilon(1e-14));
  CHECK(x[2] == doctest::Approx(6.0).epsilon(1e-14));

  // random system against a dense QR oracle
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1, 1), pw(0.5, 2.0);
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(300, 150);
  for (int i = 0; i < 300; ++i)
    for (int j = 0; j < 150; ++j)
      if (u(rng) > 0.6 || i == j) m(i, j) = u(rng);
  Eigen::VectorXd w(300), b(300);
  for (int i = 0; i < 300; ++i) {
    w[i] = pw(rng);
    b[i] = u(rng);
  }
  const SparseLS sys = toy_system(m, w, b);
  const Eigen::VectorXd qr = (w.asDiagonal() * m).householderQr().solve(w.cwiseProduct(b));
  InverseConfig cfg;
  const Eigen::VectorXd direct = QrmSolver(sys, cfg).solve(sys);
  CHECK((direct - qr).cwiseAbs().maxCoeff() < 1e-8 * std::max(1.0, qr.cwiseAbs().maxCoeff()));
  cfg.solver = LsSolver::ConjugateGradient;
  cfg.ls_tol = 1e-12;
  SolveInfo info;
  const Eigen::VectorXd cg = QrmSolver(sys, cfg).solve(sys, &info);
  CHECK((cg - qr).cwiseAbs().maxCoeff() < 1e-8 * std::max(1.0, qr.cwiseAbs().maxCoeff()));
  CHECK(info.iterations > 0);

  cfg.ls_max_iter = 2;
  try {
    QrmSolver(sys, cfg).solve(sys);
    FAIL("expected a convergence error");
  } catch (const ConvergenceError& e) {
    CHECK(e.residual_history().size() == 3);
  }

  // gradient descent reaches the same minimizer; too large a step is reported
  const double lip = 2 * (w.asDiagonal() * m).operatorNorm() * (w.asDiagonal() * m).operatorNorm();
  Eigen::MatrixXd well = Eigen::MatrixXd::Identity(40, 20) * 3.0;
  well.block(20, 0, 20, 20) = m.block(0, 0, 20, 20);
  const SparseLS ws = toy_system(well, Eigen::VectorXd::Ones(40), b.head(40));
  const Eigen::VectorXd opt = QrmSolver(ws, {}).solve(ws);
  const double lw = 2 * well.operatorNorm() * well.operatorNorm();
  const auto gd = gradient_descent_minimize(ws, 1.0 / lw, 3000);
  CHECK((gd.free - opt).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(gd.trace.front() > gd.trace.back());
  CHECK_THROWS_AS(gradient_descent_minimize(sys, 4.0 / lip, 50), NumericalError);
}

TEST_CASE("gradient matches finite differences") {
  const auto inst = oracle::consistent_instance(9, 9, 5);
  const SparseLS s = assemble_functional(nullptr, inst.data, {});
  std::mt19937_64 rng(2);
  const Eigen::VectorXd w1 = oracle::random_vector(s.n_free(), rng, 0.1);
  const Eigen::VectorXd g = s.gradient(w1);
  for (int d = 0; d < 5; ++d) {
    const Eigen::VectorXd h = oracle::random_vector(s.n_free(), rng).normalized();
    const double e = 1e-4;
    const double fd = (s.functional(w1 + e * h) - s.functional(w1 - e * h)) / (2 * e);
    CHECK(std::abs(fd - g.dot(h)) <= 1e-6 * std::abs(g.dot(h)));
  }
}

TEST_CASE("outer iteration") {
  // zero data stop at once with W = 0
  auto z = oracle::consistent_instance(9, 9, 5);
  for (auto& t : z.data.G0) t.values.setZero();
  for (auto& t : z.data.G1) t.values.setZero();
  const auto r0 = ccmm_iterate(z.data, {});
  CHECK(r0.converged);
  CHECK(r0.iterations == 1);
  CHECK(r0.w.rms() == 0.0);

  // consistent instance converges near W*
  const auto inst = oracle::consistent_instance(9, 9, 5);
  InverseConfig cfg;
  cfg.xi = 1e-6;
  CcmmOptions opt;
  opt.source = &inst.source;
  opt.keep_iterates = true;
  const auto r = ccmm_iterate(inst.data, cfg, opt);
  CHECK(r.converged);
  CHECK(r.iterates.size() == r.history.size());
  WField diff = r.w;
  for (int c = 0; c < kComponents; ++c) diff.w[c].values() -= inst.w_star.w[c].values();
  CHECK(diff.rms() < 0.05 * inst.w_star.rms());
  for (std::size_t n = 1; n < r.history.size(); ++n) CHECK(r.history[n].step_norm < r.history[n - 1].step_norm);

  cfg.max_iter = 0;
  CHECK(ccmm_iterate(inst.data, cfg, opt).history.size() == 1);
}

TEST_CASE("diagnostics") {
  const GridSpec g = grid(5, 5);
  WField w = WField::zeros(g);
  for (int c = 0; c < 3; ++c) {
    w.w[c] = ScalarField::sample(g, [](double, double, double t) { return t * t; });
    w.w[c + 3] = ScalarField::sample(g, [](double, double, double t) { return 2 * t; });
  }
  CHECK(compatibility_defect(w) < 1e-12);
  CHECK(mean_time_variance(ScalarField(g, 3.0)) == 0.0);
  const auto lin = ScalarField::sample(g, [](double, double, double t) { return t; });
  CHECK(mean_time_variance(lin) == doctest::Approx(0.125));
  WField one = WField::zeros(g);
  for (auto& c : one.w) c.values().setOnes();
  CHECK(carleman_weighted_norm(one, 0.0) == doctest::Approx(std::sqrt(6.0)));
  CHECK(carleman_weighted_norm(one, 5.0) < carleman_weighted_norm(one, 0.0));
  CHECK(WField::from_stacked(g, one.stacked()).stacked() == one.stacked());
}
