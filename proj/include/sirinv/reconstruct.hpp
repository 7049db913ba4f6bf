#pragma once

// Backwards recovery of beta and gamma from a converged W, error metrics
// against a known phantom, and CSV heatmap export.

#include "sirinv/grid.hpp"
#include "sirinv/inversion.hpp"
#include "sirinv/observation.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace sirinv {

enum class ReconMode { Midpoint, Average };

ReconMode parse_recon_mode(const std::string& s);
std::string to_string(ReconMode m);

struct Reconstruction {
  ScalarField beta_rec;
  ScalarField gamma_rec;
  ScalarField beta_tvar;   // variance of B(x, t) over time slices
  ScalarField gamma_tvar;
  std::map<std::string, double> metrics;
};

/// midpoint: beta = w1(., T/2) s1 + s2, gamma = w3(., T/2) s3 + s4.
/// average: time means of B and Gamma. The variances are reported in both modes.
Reconstruction reconstruct_coefficients(const WField& w, const SCoefficients& s, ReconMode mode);

/// Known shape of one coefficient: indicator mask plus inside/background values.
struct ShapeTruth {
  ScalarField mask;
  double inside = 0.0;
  double background = 0.0;

  double half_max() const { return background + 0.5 * (inside - background); }
};

struct Truth {
  ScalarField beta;
  ScalarField gamma;
  std::optional<ShapeTruth> beta_shape;
  std::optional<ShapeTruth> gamma_shape;
};

/// Keys: {beta,gamma}_rel_l2, {beta,gamma}_rel_linf and, when a shape is
/// known, {beta,gamma}_incl_mean, _incl_error (mean minus inside value) and
/// _jaccard (half-max level set against the mask).
std::map<std::string, double> error_metrics(const Reconstruction& rec, const Truth& truth);

double relative_l2(const ScalarField& rec, const ScalarField& truth);
double relative_linf(const ScalarField& rec, const ScalarField& truth);
/// Jaccard index of {rec >= threshold} against {mask > 0.5}; 1 when both are empty.
double jaccard(const ScalarField& rec, const ScalarField& mask, double threshold);
/// Mean of rec over {mask > 0.5}.
double masked_mean(const ScalarField& rec, const ScalarField& mask);

/// One CSV per field (spatial) or per field and time slice.
std::vector<std::filesystem::path> export_heatmaps(
    const std::vector<std::pair<std::string, const ScalarField*>>& fields,
    const std::filesystem::path& out_dir);

}  // namespace sirinv
