#pragma once

// Forward SIR reaction-advection-diffusion system on a rectangle G:
//
//   dS/dt - d Lap S + div(S q_S) + beta S I = 0
//   dI/dt - d Lap I + div(I q_I) - beta S I = 0
//   dR/dt - d Lap R + div(R q_R) - gamma I  = 0
//
// with Neumann data dS/dn = g1, dI/dn = g2, dR/dn = g3 on the boundary of G
// and initial states at t = t_min.

#include "sirinv/grid.hpp"

#include <functional>

namespace sirinv {

/// Outward normal flux g(x, y, t) on the boundary of G.
using FluxFn = std::function<double(double x, double y, double t)>;

struct SirParams {
  double d = 0.1;
  VectorField2 q_S, q_I, q_R;
  ScalarField beta, gamma;
  FluxFn g1, g2, g3;  // empty means zero flux
  ScalarField rho0_S, rho0_I, rho0_R;

  /// Defaults of the shipped scenarios: d = 0.1, q = (0.2, 0.2) for all
  /// species, zero flux, initial states (0.6, 0.8, 0).
  static SirParams defaults(const GridSpec& g_spatial, ScalarField beta, ScalarField gamma);

  void validate(const GridSpec& g_spatial) const;
};

struct SirFields {
  ScalarField rho_S, rho_I, rho_R;
};

struct ForwardOptions {
  /// Internal time steps per output interval of the space-time grid.
  int substeps = 4;
};

/// Largest internal time step accepted by the explicit advection/reaction part.
double max_stable_step(const SirParams& params, const GridSpec& g_spatial);

/// Semi-implicit march: backward Euler for diffusion (factored once),
/// forward Euler for advection and reaction. Output is stored on every node
/// of `grid` (space-time).
SirFields forward_solve(const SirParams& params, const GridSpec& grid,
                        const ForwardOptions& options = {});

/// Multilinear interpolation of a field at a point. Throws ConfigError when
/// the point lies outside the grid hull.
double interpolate(const ScalarField& f, double x, double y, double t = 0.0);

/// Samples `fine` (space-time) on the nodes of `target` by multilinear
/// interpolation.
ScalarField restrict_to_grid(const ScalarField& fine, const GridSpec& target);

SirFields restrict_to_inverse_grid(const SirFields& fine, const GridSpec& target);

}  // namespace sirinv
