#pragma once

// Measurement data for the coefficient inverse problem and its
// preprocessing: extraction from a forward run, multiplicative-bound noise,
// spline smoothing/differentiation, s-coefficients and the boundary vectors
// of the six-component W system.

#include "sirinv/forward.hpp"
#include "sirinv/grid.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <vector>

namespace sirinv {

enum class Face { XMin, XMax, YMin, YMax };

/// A boundary node of a spatial grid with its outward unit normal.
struct BoundaryPoint {
  Face face;
  int i, j;
  double nx, ny;
};

/// Lateral boundary, face by face: x_min (j ascending), x_max, y_min
/// (i ascending), y_max. Corners appear once on each adjacent face.
std::vector<BoundaryPoint> lateral_boundary(const GridSpec& grid);

/// The x = x_max face (j ascending).
std::vector<BoundaryPoint> gamma_boundary(const GridSpec& grid);

/// Values on a set of boundary nodes over time; values(point, k).
struct Trace {
  std::vector<BoundaryPoint> points;
  Axis t;
  Eigen::MatrixXd values;

  static Trace zeros(std::vector<BoundaryPoint> points, const Axis& t);
  /// Samples a space-time field of the same spatial grid at the points.
  static Trace sample(std::vector<BoundaryPoint> points, const ScalarField& f);
};

/// Measured data: p_j on Omega at t = T/2, Neumann traces r_j on the lateral
/// boundary, Dirichlet traces f_j on the x = b face.
struct CauchyData {
  GridSpec grid;  // inverse space-time grid
  std::array<ScalarField, 3> p;
  std::array<Trace, 3> r;
  std::array<Trace, 3> f;
  double delta = 0.0;
  std::uint64_t seed = 0;
};

struct NoiseModel {
  double delta = 0.0;
  std::uint64_t seed = 0;
};

/// The known part of the model on the inverse grid.
struct KnownModel {
  double d = 0.1;
  VectorField2 q_S, q_I, q_R;

  static KnownModel constant(const GridSpec& grid, double d, double qx, double qy);
};

struct ObservationConfig {
  double p_time = 0.99995;   // smoothing parameter for time traces
  double p_space = 0.0;      // spatial smoothing of p; <= 0 selects by noise level
  double c_floor = 1e-3;     // required lower bound on |p1|, |p2|

  /// p_space when set, otherwise 1 (no smoothing) for exact data and 0.9995
  /// for noisy data.
  double spatial_parameter(double delta) const {
    if (p_space > 0.0) return p_space;
    return delta == 0.0 ? 1.0 : 0.9995;
  }
};

struct SCoefficients {
  ScalarField s1, s2, s3, s4;
};

/// Preprocessed data consumed by the inversion.
struct DerivedData {
  GridSpec grid;
  std::array<Trace, 6> G0;  // Dirichlet data of W on the x = b face
  std::array<Trace, 6> G1;  // Neumann data of W on the lateral boundary
  SCoefficients s;
  std::array<ScalarField, 3> p;  // smoothed p_j
  KnownModel model;
  double c_floor = 0.0;  // verified min(|p1|, |p2|)
};

/// Throws DataValidityError when min |p1| or min |p2| falls below c_floor.
/// Returns the observed minimum.
double check_floor(const ScalarField& p1, const ScalarField& p2, double c_floor);

/// Extracts p_j, r_j, f_j from fine forward fields. The inverse grid must
/// have T/2 as a node and lie inside the fine grid hull.
CauchyData extract_measurements(const SirFields& fine, const GridSpec& inverse, double c_floor);

/// A + delta * max|A| * U with U uniform on (-1, 1), independently for each
/// of p1, p2, p3, r1, r2, r3, f1, f2, f3 (in this order); stream k is seeded
/// from splitmix64(seed + k).
CauchyData add_noise(const CauchyData& data, const NoiseModel& model);

/// Uniform deviates on (-1, 1) from the given stream; exposed for tests.
Eigen::VectorXd uniform_noise(std::uint64_t seed, std::uint64_t stream, Index count);

struct TraceDerivatives {
  Trace d1;
  Trace d2;
};

/// Cubic smoothing spline in t per boundary node, differentiated once and twice.
TraceDerivatives smooth_diff_time(const Trace& trace, double p_time);

/// Separable smoothing of a spatial field: spline pass along x, then along y.
ScalarField smooth_2d(const ScalarField& f, double p_space);

/// s1 = -1/(p1 p2), s2 = -s1 (d Lap p1 - div(p1 q_S)), s3 = 1/p2,
/// s4 = -s3 (d Lap p3 - div(p3 q_R)). Inputs are used as given (callers
/// smooth first when the data are noisy).
SCoefficients compute_s_coefficients(const ScalarField& p1, const ScalarField& p2,
                                     const ScalarField& p3, const VectorField2& q_S,
                                     const VectorField2& q_R, double d, double c_floor);

/// Smooths the data and assembles G0, G1 and the s-coefficients.
DerivedData build_boundary_vectors(const CauchyData& data, const KnownModel& model,
                                   const ObservationConfig& config);

}  // namespace sirinv
