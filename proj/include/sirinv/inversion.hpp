#pragma once

// Carleman-weighted quasi-reversibility for the six-component W system
//
//   L(W) + Y(W, S) = 0 in Omega x (0, T),
//   W = G0 on the x = b face,  dW/dn = G1 on the lateral boundary,
//
// with W = (v1, v2, v3, dv1/dt, dv2/dt, dv3/dt), v_j = d rho_j / dt, and
//
//   L(W)_c = dW_c/dt - d Lap W_c + div(W_c q_c),  q_c = q_S, q_I, q_R for
//   c in {1,4}, {2,5}, {3,6}.
//
// Every outer iteration freezes Y at the previous iterate, so each step is a
// sparse weighted linear least-squares problem:
//
//   J_n(W) = sum_pde  w_r^2 (L(W) + Y(W_{n-1}))_r^2       (Carleman weights)
//          + sum_neu  kappa_N^2 (dW/dn - G1)^2
//          + sum_cmp  kappa_C q_r (dW_c/dt - W_{c+3})^2    (optional)
//          + xi * |W|^2_{H^2, discrete}
//
// with the Dirichlet nodes eliminated.

#include "sirinv/carleman.hpp"
#include "sirinv/grid.hpp"
#include "sirinv/observation.hpp"

#include <Eigen/SparseCore>

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace sirinv {

constexpr int kComponents = 6;

struct WField {
  std::array<ScalarField, kComponents> w;

  static WField zeros(const GridSpec& grid);
  const GridSpec& grid() const { return w[0].grid(); }

  /// Components concatenated: index c * N + node.
  Eigen::VectorXd stacked() const;
  static WField from_stacked(const GridSpec& grid, const Eigen::VectorXd& v);

  /// RMS over all components and nodes.
  double rms() const;
};

using Components = std::array<ScalarField, kComponents>;

enum class LsSolver { Direct, ConjugateGradient };

struct InverseConfig {
  double lambda = 5.0;
  double xi = 1e-2;
  double neumann_penalty = 0.0;  // <= 0 selects 1e3 * median PDE row weight
  double compat_penalty = 0.0;
  int reg_order = 2;
  double stop_tol = 1e-5;
  int max_iter = 10;
  double ls_tol = 1e-9;
  int ls_max_iter = 5000;
  LsSolver solver = LsSolver::Direct;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Time index of T/2; throws ConfigError if it is not a node.
int mid_time_index(const GridSpec& grid);

/// L applied with field operators (every node, one-sided stencils on edges).
Components apply_L(const WField& w, const KnownModel& model);

/// Rows of L at every spatially interior node and every time node, for each
/// component (component-major, then k, j, i). Columns index the stacked W.
Eigen::SparseMatrix<double, Eigen::RowMajor> assemble_L(const GridSpec& grid, const KnownModel& model);

/// The frozen coefficients B (beta surrogate) and Gamma (gamma surrogate):
///   B = (w1 - int_{T/2}^t w4) s1 + s2,  Gamma = (w3 - int_{T/2}^t w6) s3 + s4.
struct CoefficientSurrogates {
  ScalarField B;
  ScalarField Gamma;
};
CoefficientSurrogates coefficient_surrogates(const WField& w, const SCoefficients& s);

/// The nonlinear term Y(W, S) with I_k = int_{T/2}^t w_k:
///   Y1 = B (w1 (I2 + p2) + (I1 + p1) w2),  Y2 = -Y1,  Y3 = -Gamma w2,
///   Y4 = B (w4 (I2 + p2) + 2 w1 w2 + (I1 + p1) w5),  Y5 = -Y4,  Y6 = -Gamma w5.
Components eval_Y(const WField& w, const SCoefficients& s, const ScalarField& p1,
                  const ScalarField& p2);

enum class RowBlock { Pde = 0, Neumann = 1, Compat = 2, Regularization = 3 };

/// Weighted sparse least-squares system over the free unknowns.
struct SparseLS {
  GridSpec grid;
  Eigen::SparseMatrix<double, Eigen::RowMajor> matrix;  // rows x free unknowns
  Eigen::VectorXd weights;      // row weights, all > 0
  Eigen::VectorXd data_rhs;     // right-hand side before folding fixed values
  Eigen::VectorXd fixed_part;   // contribution of fixed unknowns to every row
  Eigen::VectorXd fixed_values; // full length; meaningful where fixed
  std::vector<Index> free_to_full;
  std::vector<Index> full_to_free;  // -1 for fixed unknowns
  std::array<std::pair<Index, Index>, 4> blocks{};  // [begin, end) rows per RowBlock
  double neumann_weight = 0.0;

  Index n_unknowns() const { return static_cast<Index>(full_to_free.size()); }
  Index n_free() const { return static_cast<Index>(free_to_full.size()); }
  Index n_fixed() const { return n_unknowns() - n_free(); }
  Index rows() const { return matrix.rows(); }

  Eigen::VectorXd rhs() const { return data_rhs - fixed_part; }

  /// Replaces the right-hand side of the PDE rows (forcing per component at
  /// the interior nodes, same order as assemble_L).
  void set_pde_forcing(const Eigen::VectorXd& forcing);

  Eigen::VectorXd to_free(const WField& w) const;
  WField to_field(const Eigen::VectorXd& free) const;

  /// Weighted residual w_r (A x - rhs)_r.
  Eigen::VectorXd weighted_residual(const Eigen::VectorXd& free) const;
  double functional(const Eigen::VectorXd& free) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& free) const;
  /// Sum of squared weighted residuals restricted to one block.
  double block_value(RowBlock b, const Eigen::VectorXd& free) const;
};

/// Assembles J_0 (w_prev absent) or J_n (Y frozen at *w_prev). An optional
/// `source` is added to the PDE right-hand side: L(W) = -Y + source.
SparseLS assemble_functional(const WField* w_prev, const DerivedData& data,
                             const InverseConfig& cfg, const Components* source = nullptr);

/// PDE forcing vector (-Y(w_prev) + source) in assemble_L row order.
Eigen::VectorXd pde_forcing(const WField* w_prev, const DerivedData& data,
                            const Components* source = nullptr);

struct SolveInfo {
  std::vector<double> residual_history;  // relative normal-equation residuals
  int iterations = 0;
};

/// Solves the normal equations of a SparseLS. The factorization (direct) or
/// operator (CG) is built once and reused for new right-hand sides, which is
/// what the outer iteration needs since only the PDE forcing changes.
class QrmSolver {
 public:
  QrmSolver(const SparseLS& sys, const InverseConfig& cfg);
  ~QrmSolver();
  QrmSolver(QrmSolver&&) noexcept;
  QrmSolver& operator=(QrmSolver&&) noexcept;

  /// Minimizer over the free unknowns for the current rhs of `sys` (which
  /// must share the matrix this solver was built from).
  Eigen::VectorXd solve(const SparseLS& sys, SolveInfo* info = nullptr) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// One quasi-reversibility solve; fixed values are re-inserted.
WField solve_qrm_step(const SparseLS& sys, const InverseConfig& cfg, SolveInfo* info = nullptr);

struct IterationRecord {
  int iteration = 0;
  double step_norm = 0.0;     // RMS of W_n - W_{n-1} (W_0 - 0 for n = 0)
  double functional = 0.0;    // J_n(W_n)
  double compat_defect = 0.0; // RMS of d_dt(w_c) - w_{c+3}
  double beta_tvar = 0.0;     // mean over Omega of the time variance of B
  double gamma_tvar = 0.0;
  double w_norm = 0.0;        // RMS of W_n, monitored in place of the ball constraint
  double ls_residual = 0.0;
};

struct CcmmResult {
  WField w;
  std::vector<IterationRecord> history;
  std::vector<WField> iterates;  // kept only when requested
  int iterations = 0;            // outer iterations after the zeroth solve
  bool converged = false;
  std::vector<std::string> warnings;
};

struct CcmmOptions {
  bool keep_iterates = false;
  const Components* source = nullptr;  // manufactured forcing for tests
};

/// Zeroth functional, then J_n with Y frozen at W_{n-1}, until the RMS step
/// drops below stop_tol or max_iter outer iterations ran.
CcmmResult ccmm_iterate(const DerivedData& data, const InverseConfig& cfg,
                        const CcmmOptions& options = {});

double compatibility_defect(const WField& w);

/// Mean over spatial nodes of the variance over time slices.
double mean_time_variance(const ScalarField& f);

/// sqrt(sum_nodes qw * normalized CWF * sum_c w_c^2).
double carleman_weighted_norm(const WField& w, double lambda);

struct GradientDescentResult {
  WField w;  // left empty for systems not built on a grid
  Eigen::VectorXd free;
  std::vector<double> trace;  // functional value per iteration, starting point first
};

/// W_k = W_{k-1} - step * grad J(W_{k-1}) on the free unknowns. Throws
/// NumericalError when the functional increases.
GradientDescentResult gradient_descent_minimize(const SparseLS& sys, double step, int iterations,
                                                const Eigen::VectorXd* start = nullptr);

}  // namespace sirinv
