#pragma once

// Run configuration (flat JSON keys, named presets) and the stages of the
// end-to-end experiment: forward -> observe -> invert -> report.

#include "sirinv/forward.hpp"
#include "sirinv/inversion.hpp"
#include "sirinv/observation.hpp"
#include "sirinv/phantom.hpp"
#include "sirinv/reconstruct.hpp"

#include <json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace sirinv {

struct LetterSpec {
  std::string letter = "none";  // A, M, B, Omega or none
  double inside = 0.0;
};

struct RunConfig {
  std::string scenario = "A-M";

  // Geometry
  Box omega{1.0, 2.0, -0.5, 0.5};
  Box domain_g{0.45, 2.55, -1.05, 1.05};
  double T = 1.0;
  int fine_n = 271;
  int fine_nt = 81;
  int substeps = 4;
  int inv_nx = 33, inv_ny = 33, inv_nt = 11;

  // Known model
  double d = 0.1;
  double qx = 0.2, qy = 0.2;
  double rho0_S = 0.6, rho0_I = 0.8, rho0_R = 0.0;

  // Phantom
  double beta_background = 0.1, gamma_background = 0.1;
  LetterSpec beta_letter{"M", 0.6};
  LetterSpec gamma_letter{"A", 0.4};
  Box letter_box{1.2, 1.8, -0.3, 0.3};
  double stroke_half_width = 0.07;

  // Noise and preprocessing
  double delta = 0.0;
  std::uint64_t seed = 0;
  ObservationConfig obs;

  // Inversion and reconstruction
  InverseConfig inv;
  ReconMode recon = ReconMode::Midpoint;

  // Sweeps and checks
  std::vector<double> sweep_lambdas{0, 3, 5, 7, 10};
  std::vector<double> sweep_deltas{0, 0.02, 0.05};
  std::vector<double> check_lambdas{1, 2, 5, 10};
  int check_trials = 100;

  /// Throws ConfigError naming the offending key.
  void validate() const;
};

/// A-M, Omega-B-low, Omega-B-high.
std::vector<std::string> preset_names();
RunConfig preset(const std::string& name);

/// Flat JSON view of every key; unknown keys in apply_json are errors.
nlohmann::json to_json(const RunConfig& cfg);
void apply_json(RunConfig& cfg, const nlohmann::json& j);
RunConfig load_config(const std::string& path, RunConfig base);

struct ConfigKeyInfo {
  std::string key;
  std::string help;
  std::string note;  // where the default comes from
};
const std::vector<ConfigKeyInfo>& config_keys();
/// One line per key: name, default (from `defaults`), help and note.
std::string describe_config_keys(const RunConfig& defaults);

GridSpec fine_spatial_grid(const RunConfig& cfg);
GridSpec fine_grid(const RunConfig& cfg);
GridSpec inverse_grid(const RunConfig& cfg);

PhantomSpec phantom_spec(const RunConfig& cfg);
KnownModel known_model(const RunConfig& cfg);
/// True coefficients, masks and inclusion values on the inverse spatial grid.
Truth truth_on_inverse_grid(const RunConfig& cfg);

struct ForwardResult {
  SirFields fine;
  CoefficientFields coefficients;  // on the fine spatial grid
};
ForwardResult run_forward(const RunConfig& cfg);

struct ObserveResult {
  CauchyData clean;
  CauchyData noisy;
  DerivedData derived;
};
ObserveResult run_observe(const RunConfig& cfg, const SirFields& fine);

struct ExperimentResult {
  CcmmResult ccmm;
  Reconstruction rec;
  std::map<std::string, double> metrics;
};
/// Inversion, reconstruction and metrics against the configured phantom.
ExperimentResult run_inverse(const RunConfig& cfg, const DerivedData& derived);

/// Metrics augmented with the iteration count and convergence flag.
std::map<std::string, double> summary_metrics(const ExperimentResult& r);

}  // namespace sirinv
