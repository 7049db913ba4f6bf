#include "sirinv/reconstruct.hpp"

#include "sirinv/errors.hpp"
#include "sirinv/field_io.hpp"

#include <cmath>

namespace sirinv {

ReconMode parse_recon_mode(const std::string& s) {
  if (s == "midpoint") return ReconMode::Midpoint;
  if (s == "average") return ReconMode::Average;
  throw ConfigError("unknown reconstruction mode '" + s + "' (midpoint or average)");
}

std::string to_string(ReconMode m) { return m == ReconMode::Midpoint ? "midpoint" : "average"; }

namespace {

// Time mean and variance per spatial node.
void time_moments(const ScalarField& f, ScalarField& mean, ScalarField& var) {
  const GridSpec& g = f.grid();
  const Index m = g.slice_size();
  Eigen::Map<const Eigen::MatrixXd> a(f.values().data(), m, g.nt());
  const Eigen::VectorXd mu = a.rowwise().mean();
  const Eigen::VectorXd v = (a.colwise() - mu).array().square().rowwise().sum() / g.nt();
  mean = ScalarField(g.spatial_part(), mu);
  var = ScalarField(g.spatial_part(), v);
}

void check_same(const ScalarField& a, const ScalarField& b) {
  if (a.grid() != b.grid()) throw DimensionError("fields live on different grids");
}

}  // namespace

Reconstruction reconstruct_coefficients(const WField& w, const SCoefficients& s, ReconMode mode) {
  const auto sur = coefficient_surrogates(w, s);
  Reconstruction rec;
  ScalarField bmean, gmean;
  time_moments(sur.B, bmean, rec.beta_tvar);
  time_moments(sur.Gamma, gmean, rec.gamma_tvar);
  if (mode == ReconMode::Midpoint) {
    const int k = mid_time_index(w.grid());
    rec.beta_rec = sur.B.slice(k);
    rec.gamma_rec = sur.Gamma.slice(k);
  } else {
    rec.beta_rec = std::move(bmean);
    rec.gamma_rec = std::move(gmean);
  }
  rec.metrics["beta_tvar_mean"] = rec.beta_tvar.values().mean();
  rec.metrics["gamma_tvar_mean"] = rec.gamma_tvar.values().mean();
  return rec;
}

double relative_l2(const ScalarField& rec, const ScalarField& truth) {
  check_same(rec, truth);
  const double n = truth.values().norm();
  const double e = (rec.values() - truth.values()).norm();
  return n > 0.0 ? e / n : e;
}

double relative_linf(const ScalarField& rec, const ScalarField& truth) {
  check_same(rec, truth);
  const double n = truth.values().cwiseAbs().maxCoeff();
  const double e = (rec.values() - truth.values()).cwiseAbs().maxCoeff();
  return n > 0.0 ? e / n : e;
}

double jaccard(const ScalarField& rec, const ScalarField& mask, double threshold) {
  check_same(rec, mask);
  Index inter = 0, uni = 0;
  for (Index i = 0; i < rec.values().size(); ++i) {
    const bool a = rec.values()[i] >= threshold;
    const bool b = mask.values()[i] > 0.5;
    inter += a && b;
    uni += a || b;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double masked_mean(const ScalarField& rec, const ScalarField& mask) {
  check_same(rec, mask);
  double s = 0.0;
  Index n = 0;
  for (Index i = 0; i < rec.values().size(); ++i)
    if (mask.values()[i] > 0.5) {
      s += rec.values()[i];
      ++n;
    }
  if (n == 0) throw ConfigError("mask is empty on this grid");
  return s / static_cast<double>(n);
}

std::map<std::string, double> error_metrics(const Reconstruction& rec, const Truth& truth) {
  std::map<std::string, double> m;
  auto one = [&](const std::string& name, const ScalarField& r, const ScalarField& t,
                 const std::optional<ShapeTruth>& shape) {
    m[name + "_rel_l2"] = relative_l2(r, t);
    m[name + "_rel_linf"] = relative_linf(r, t);
    if (shape) {
      const double mean = masked_mean(r, shape->mask);
      m[name + "_incl_mean"] = mean;
      m[name + "_incl_error"] = mean - shape->inside;
      m[name + "_jaccard"] = jaccard(r, shape->mask, shape->half_max());
    }
  };
  one("beta", rec.beta_rec, truth.beta, truth.beta_shape);
  one("gamma", rec.gamma_rec, truth.gamma, truth.gamma_shape);
  return m;
}

std::vector<std::filesystem::path> export_heatmaps(
    const std::vector<std::pair<std::string, const ScalarField*>>& fields,
    const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw ConfigError("cannot create " + out_dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> out;
  for (const auto& [name, f] : fields) {
    auto p = write_csv_slices(out_dir, name, *f);
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

}  // namespace sirinv
