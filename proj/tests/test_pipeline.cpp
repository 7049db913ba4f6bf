#include "oracles.hpp"

#include "sirinv/bundle.hpp"
#include "sirinv/errors.hpp"
#include "sirinv/field_io.hpp"
#include "sirinv/pipeline.hpp"
#include "sirinv/reconstruct.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace sirinv;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "sirinv_tests" / name;
  fs::remove_all(p);
  fs::create_directories(p.parent_path());
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

RunConfig tiny() {
  RunConfig c = preset("A-M");
  c.fine_n = 43;
  c.fine_nt = 21;
  c.inv_nx = c.inv_ny = 9;
  c.inv_nt = 5;
  c.delta = 0.02;
  c.seed = 5;
  return c;
}

}  // namespace

TEST_CASE("reconstruction from W") {
  const auto h = oracle::homogeneous(GridSpec::space_time({1, 2, 9}, {-0.5, 0.5, 9}, {0, 1, 11}), 0.1, 0.1,
                                     {0.6, 0.8, 0.0});
  for (ReconMode m : {ReconMode::Midpoint, ReconMode::Average}) {
    const auto r = reconstruct_coefficients(h.w, h.data.s, m);
    CHECK((r.beta_rec.values().array() - 0.1).abs().maxCoeff() < 1e-3);
    CHECK((r.gamma_rec.values().array() - 0.1).abs().maxCoeff() < 1e-3);
    CHECK(r.metrics.at("beta_tvar_mean") < 1e-6);
  }
  const GridSpec g = GridSpec::space_time({1, 2, 5}, {-0.5, 0.5, 5}, {0, 1, 5});
  const GridSpec gs = g.spatial_part();
  SCoefficients s{ScalarField(gs, -3.0), ScalarField(gs, 0.1), ScalarField(gs, 2.0), ScalarField(gs, 0.2)};
  const auto r = reconstruct_coefficients(WField::zeros(g), s, ReconMode::Midpoint);
  CHECK((r.beta_rec.values().array() == 0.1).all());
  CHECK((r.gamma_rec.values().array() == 0.2).all());
  CHECK(parse_recon_mode("average") == ReconMode::Average);
  CHECK(to_string(ReconMode::Midpoint) == "midpoint");
  CHECK_THROWS_AS(parse_recon_mode("mean"), ConfigError);
}

TEST_CASE("error metrics") {
  const GridSpec gs = GridSpec::spatial({1, 2, 11}, {-0.5, 0.5, 11});
  ScalarField mask(gs, 0.0);
  for (int j = 3; j < 7; ++j)
    for (int i = 3; i < 7; ++i) mask(i, j) = 1.0;
  ScalarField truth(gs);
  truth.values() = (0.1 + 0.3 * mask.values().array()).matrix();
  Truth t{truth, truth, ShapeTruth{mask, 0.4, 0.1}, ShapeTruth{mask, 0.4, 0.1}};
  Reconstruction same{truth, truth, ScalarField(gs), ScalarField(gs), {}};
  const auto m = error_metrics(same, t);
  CHECK(m.at("beta_rel_l2") == 0.0);
  CHECK(m.at("gamma_rel_linf") == 0.0);
  CHECK(m.at("beta_jaccard") == 1.0);
  CHECK(m.at("gamma_incl_mean") == doctest::Approx(0.4));
  CHECK(m.at("gamma_incl_error") == doctest::Approx(0.0));

  const ScalarField flat(gs, 0.1), off(gs, 0.2);
  CHECK(relative_l2(off, flat) == doctest::Approx(1.0));
  CHECK(relative_linf(off, flat) == doctest::Approx(1.0));
  CHECK(jaccard(flat, ScalarField(gs, 0.0), 0.25) == 1.0);
  CHECK(jaccard(off, mask, 0.15) == doctest::Approx(16.0 / 121.0));
  CHECK_THROWS(masked_mean(flat, ScalarField(gs, 0.0)));
}

TEST_CASE("heatmap export") {
  const GridSpec gs = GridSpec::spatial({0, 1, 2}, {0, 1, 2});
  const ScalarField f(gs, Eigen::Vector4d(1, 2, 3, 4));
  const fs::path dir = scratch("heat");
  const auto files = export_heatmaps({{"beta_rec", &f}}, dir);
  REQUIRE(files.size() == 1);
  CHECK(slurp(files[0]) == "1,2\n3,4\n");
  CHECK(read_csv_matrix(files[0], gs).values() == f.values());
}

TEST_CASE("run configuration") {
  const RunConfig a = preset("A-M");
  CHECK(a.gamma_letter.letter == "A");
  CHECK(a.gamma_letter.inside == 0.4);
  CHECK(a.beta_letter.letter == "M");
  CHECK(a.beta_letter.inside == 0.6);
  const RunConfig hi = preset("Omega-B-high");
  CHECK(hi.gamma_letter.inside == 0.8);
  CHECK(hi.beta_letter.inside == 1.0);
  CHECK_THROWS_AS(preset("X"), ConfigError);

  RunConfig r = a;
  apply_json(r, to_json(hi));
  CHECK(to_json(r) == to_json(hi));
  CHECK_THROWS_AS(apply_json(r, {{"nope", 1}}), ConfigError);
  CHECK_THROWS_AS(apply_json(r, {{"lambda", "five"}}), ConfigError);
  RunConfig bad = a;
  bad.inv_nt = 10;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  const fs::path p = scratch("cfg") += ".json";
  std::ofstream(p) << R"({"preset": "Omega-B-low", "lambda": 3, "solver": "cg"})";
  const RunConfig l = load_config(p.string(), a);
  CHECK(l.scenario == "Omega-B-low");
  CHECK(l.inv.lambda == 3.0);
  CHECK(l.inv.solver == LsSolver::ConjugateGradient);

  const std::string help = describe_config_keys(a);
  for (const auto& k : config_keys()) {
    CHECK(help.find(k.key) != std::string::npos);
    CHECK(!k.note.empty());
  }
  CHECK(config_keys().size() == to_json(a).size());
}

TEST_CASE("bundles chain with content hashes") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  const RunConfig cfg = tiny();
  const fs::path root = scratch("chain");
  const ForwardResult fwd = run_forward(cfg);
  const Manifest mf = write_forward_bundle(root / "fwd", cfg, fwd);
  const Manifest mf_read = read_manifest(root / "fwd", "forward");
  CHECK(mf_read.hash == mf.hash);
  CHECK(to_json(mf_read.config()) == to_json(cfg));
  CHECK(read_forward_fields(mf_read).rho_I.values() == fwd.fine.rho_I.values());

  const ObserveResult obs = run_observe(cfg, fwd.fine);
  const Manifest mo = write_observation_bundle(root / "obs", cfg, obs, mf);
  const DerivedData dd = read_derived_data(read_manifest(root / "obs", "observe"));
  for (int c = 0; c < 6; ++c) {
    CHECK(dd.G0[c].values == obs.derived.G0[c].values);
    CHECK(dd.G1[c].values == obs.derived.G1[c].values);
  }
  CHECK(dd.s.s4.values() == obs.derived.s.s4.values());

  const CcmmResult res = ccmm_iterate(dd, cfg.inv);
  const Manifest mi = write_inversion_bundle(root / "inv", cfg, res, mo);
  CHECK(read_wfield(read_manifest(root / "inv", "invert")).stacked() == res.w.stacked());
  CHECK(read_parent(mi, "observe").hash == mo.hash);

  // rewriting yields byte-identical manifests and files
  const std::string before = slurp(root / "obs" / "manifest.json");
  write_observation_bundle(root / "obs2", cfg, obs, mf);
  CHECK(slurp(root / "obs2" / "manifest.json").find("\"stage\": \"observe\"") != std::string::npos);
  CHECK(slurp(root / "obs2" / "p1.fld") == slurp(root / "obs" / "p1.fld"));
  CHECK(before == slurp(root / "obs" / "manifest.json"));

  // wrong stage, tampered file, replaced parent
  CHECK_THROWS_AS(read_manifest(root / "fwd", "observe"), ProvenanceError);
  { std::ofstream(root / "obs" / "s2.fld", std::ios::app) << "x"; }
  CHECK_THROWS_AS(read_manifest(root / "obs", "observe"), ProvenanceError);
  RunConfig other = cfg;
  other.seed = 6;
  write_forward_bundle(root / "fwd", other, fwd);
  CHECK_THROWS_AS(read_parent(mo, "forward"), ProvenanceError);
}
