// Command-line front end: forward, observe, invert, report, sweeps and the
// Carleman estimate checks.

#include "sirinv/bundle.hpp"
#include "sirinv/carleman.hpp"
#include "sirinv/errors.hpp"
#include "sirinv/pipeline.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

using namespace sirinv;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitProvenance = 4;

struct Options {
  std::string config;
  std::string out;
  std::string in;
  std::string preset;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
};

// Keys fixed by each stage; later stages may not change them.
const std::set<std::string> kForwardKeys{
    "omega", "domain_g", "T", "fine_n", "fine_nt", "substeps", "d", "qx", "qy", "rho0_S", "rho0_I",
    "rho0_R", "beta_background", "gamma_background", "beta_letter", "beta_inside", "gamma_letter",
    "gamma_inside", "letter_box", "stroke_half_width"};
const std::set<std::string> kObserveKeys{"inv_nx", "inv_ny", "inv_nt", "delta", "seed",
                                         "p_time", "p_space", "c_floor"};

void apply_overrides(RunConfig& cfg, const Options& o) {
  if (!o.config.empty()) cfg = load_config(o.config, cfg);
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    const std::string key = s.substr(0, eq), raw = s.substr(eq + 1);
    json v;
    try {
      v = json::parse(raw);
    } catch (const json::parse_error&) {
      v = raw;  // bare strings
    }
    apply_json(cfg, json{{key, v}});
  }
  if (o.seed) cfg.seed = *o.seed;
  cfg.validate();
}

RunConfig base_config(const Options& o) {
  RunConfig cfg = preset(o.preset.empty() ? "A-M" : o.preset);
  apply_overrides(cfg, o);
  return cfg;
}

// Config for a stage that continues a bundle: the parent's config plus
// overrides, which may not touch keys owned by earlier stages.
RunConfig continued_config(const Manifest& parent, const Options& o, bool freeze_observe) {
  if (!o.preset.empty()) throw ConfigError("--preset only applies to stages that start a run");
  const RunConfig before = parent.config();
  RunConfig cfg = before;
  apply_overrides(cfg, o);
  const json a = to_json(before), b = to_json(cfg);
  for (const auto& [key, value] : a.items()) {
    const bool frozen = kForwardKeys.count(key) || (freeze_observe && kObserveKeys.count(key));
    if (frozen && b.at(key) != value)
      throw ConfigError("config key '" + key + "' was fixed by an earlier stage (" + parent.dir.string() + ")");
  }
  return cfg;
}

std::string need_out(const Options& o) {
  if (o.out.empty()) throw ConfigError("--out is required");
  return o.out;
}

std::string need_in(const Options& o) {
  if (o.in.empty()) throw ConfigError("--in is required");
  return o.in;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + p.string());
  out << s;
}

void print_history(const CcmmResult& r) {
  std::printf("%4s %12s %12s %12s\n", "iter", "step", "J", "compat");
  for (const auto& h : r.history)
    std::printf("%4d %12.4e %12.4e %12.4e\n", h.iteration, h.step_norm, h.functional, h.compat_defect);
  for (const auto& w : r.warnings) std::printf("warning: %s\n", w.c_str());
  std::printf("%s after %d iterations\n", r.converged ? "converged" : "stopped (not converged)", r.iterations);
}

int cmd_forward(const Options& o) {
  const RunConfig cfg = base_config(o);
  const fs::path out = need_out(o);
  const ForwardResult fwd = run_forward(cfg);
  const Manifest m = write_forward_bundle(out, cfg, fwd);
  std::printf("forward bundle %s (%s)\n", out.c_str(), m.hash.substr(0, 12).c_str());
  return 0;
}

int cmd_observe(const Options& o) {
  const Manifest parent = read_manifest(need_in(o), "forward");
  const RunConfig cfg = continued_config(parent, o, false);
  const fs::path out = need_out(o);
  const ObserveResult obs = run_observe(cfg, read_forward_fields(parent));
  const Manifest m = write_observation_bundle(out, cfg, obs, parent);
  std::printf("observation bundle %s (%s), delta = %g, min |p1|,|p2| = %g\n", out.c_str(),
              m.hash.substr(0, 12).c_str(), cfg.delta, obs.derived.c_floor);
  return 0;
}

int cmd_invert(const Options& o) {
  const Manifest parent = read_manifest(need_in(o), "observe");
  read_parent(parent, "forward");
  const RunConfig cfg = continued_config(parent, o, true);
  const fs::path out = need_out(o);
  const CcmmResult res = ccmm_iterate(read_derived_data(parent), cfg.inv);
  const Manifest m = write_inversion_bundle(out, cfg, res, parent);
  print_history(res);
  std::printf("inversion bundle %s (%s)\n", out.c_str(), m.hash.substr(0, 12).c_str());
  return 0;
}

int cmd_report(const Options& o) {
  const Manifest inv = read_manifest(need_in(o), "invert");
  const Manifest obs = read_parent(inv, "observe");
  read_parent(obs, "forward");
  RunConfig cfg = continued_config(inv, o, true);
  const fs::path out = need_out(o);
  const DerivedData derived = read_derived_data(obs);
  const Reconstruction rec = reconstruct_coefficients(read_wfield(inv), derived.s, cfg.recon);
  auto metrics = error_metrics(rec, truth_on_inverse_grid(cfg));
  for (const auto& [k, v] : rec.metrics) metrics[k] = v;
  metrics["iterations"] = inv.body.at("info").at("iterations").get<int>();
  metrics["converged"] = inv.body.at("info").at("converged").get<bool>() ? 1.0 : 0.0;
  const Manifest m = write_report_bundle(out, cfg, rec, metrics, inv);
  for (const auto& [k, v] : metrics) std::printf("%-20s %.6g\n", k.c_str(), v);
  std::printf("report bundle %s (%s)\n", out.c_str(), m.hash.substr(0, 12).c_str());
  return 0;
}

// Forward fields for a sweep: an existing bundle (--in) or a fresh run.
std::pair<RunConfig, SirFields> sweep_inputs(const Options& o, fs::path out) {
  if (!o.in.empty()) {
    const Manifest fwd = read_manifest(o.in, "forward");
    return {continued_config(fwd, o, false), read_forward_fields(fwd)};
  }
  const RunConfig cfg = base_config(o);
  ForwardResult f = run_forward(cfg);
  write_forward_bundle(out / "forward", cfg, f);
  return {cfg, std::move(f.fine)};
}

std::string sweep_table(const std::string& param, const std::vector<double>& values,
                        const std::vector<std::map<std::string, double>>& rows) {
  std::set<std::string> keys;
  for (const auto& r : rows)
    for (const auto& [k, v] : r) keys.insert(k);
  std::ostringstream os;
  os.precision(10);
  os << param;
  for (const auto& k : keys) os << ',' << k;
  os << '\n';
  for (std::size_t i = 0; i < rows.size(); ++i) {
    os << values[i];
    for (const auto& k : keys) {
      os << ',';
      if (auto it = rows[i].find(k); it != rows[i].end()) os << it->second;
    }
    os << '\n';
  }
  return os.str();
}

int cmd_sweep_lambda(const Options& o) {
  const fs::path out = need_out(o);
  fs::create_directories(out);
  auto [cfg, fine] = sweep_inputs(o, out);
  if (cfg.sweep_lambdas.empty()) throw ConfigError("sweep_lambdas is empty");
  const ObserveResult obs = run_observe(cfg, fine);
  std::vector<std::map<std::string, double>> rows;
  for (double lambda : cfg.sweep_lambdas) {
    RunConfig c = cfg;
    c.inv.lambda = lambda;
    const ExperimentResult r = run_inverse(c, obs.derived);
    rows.push_back(summary_metrics(r));
    std::printf("lambda %-6g beta_rel_l2 %.4f gamma_rel_l2 %.4f iterations %d\n", lambda,
                r.metrics.at("beta_rel_l2"), r.metrics.at("gamma_rel_l2"), r.ccmm.iterations);
  }
  write_text(out / "sweep_lambda.csv", sweep_table("lambda", cfg.sweep_lambdas, rows));
  return 0;
}

int cmd_sweep_noise(const Options& o) {
  const fs::path out = need_out(o);
  fs::create_directories(out);
  auto [cfg, fine] = sweep_inputs(o, out);
  if (cfg.sweep_deltas.empty()) throw ConfigError("sweep_deltas is empty");
  std::vector<std::map<std::string, double>> rows;
  for (double delta : cfg.sweep_deltas) {
    RunConfig c = cfg;
    c.delta = delta;
    c.validate();
    const ObserveResult obs = run_observe(c, fine);
    const ExperimentResult r = run_inverse(c, obs.derived);
    rows.push_back(summary_metrics(r));
    std::printf("delta %-6g beta_rel_l2 %.4f gamma_rel_l2 %.4f iterations %d\n", delta,
                r.metrics.at("beta_rel_l2"), r.metrics.at("gamma_rel_l2"), r.ccmm.iterations);
  }
  write_text(out / "sweep_noise.csv", sweep_table("delta", cfg.sweep_deltas, rows));
  return 0;
}

int cmd_check(const Options& o) {
  const RunConfig cfg = base_config(o);
  if (cfg.check_lambdas.empty()) throw ConfigError("check_lambdas is empty");
  const GridSpec g = inverse_grid(cfg);
  const auto vol = check_volterra_estimate(cfg.check_lambdas, cfg.check_trials, cfg.seed, g);
  const auto car = check_carleman_estimate(cfg.check_lambdas, cfg.check_trials, cfg.seed, g, cfg.d);
  std::ostringstream csv;
  csv.precision(10);
  csv << "lambda,volterra_max_ratio,volterra_mean_ratio,carleman_min_constant,carleman_cubic_share\n";
  std::printf("%8s %14s %14s %14s %14s\n", "lambda", "volterra max", "volterra mean", "carleman C", "cubic share");
  for (std::size_t i = 0; i < vol.rows.size(); ++i) {
    const auto& v = vol.rows[i];
    const auto& c = car.rows[i];
    std::printf("%8g %14.6g %14.6g %14.6g %14.6g\n", v.lambda, v.max_ratio, v.mean_ratio, c.min_constant,
                c.cubic_share);
    csv << v.lambda << ',' << v.max_ratio << ',' << v.mean_ratio << ',' << c.min_constant << ','
        << c.cubic_share << '\n';
  }
  std::printf("volterra: %s (empirical constant %.6g)\n", vol.pass ? "pass" : "FAIL", vol.empirical_constant);
  std::printf("carleman (monitor only): %s\n", car.pass ? "pass" : "below calibration");
  const fs::path out = o.out.empty() ? fs::path(".") : fs::path(o.out);
  fs::create_directories(out);
  write_text(out / "estimates.csv", csv.str());
  return vol.pass ? 0 : kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reconstruction of infection and recovery rates of a diffusive SIR model from lateral Cauchy data"};
  app.require_subcommand(1);
  std::ostringstream footer;
  footer << "Config keys (flat JSON for --config, or --set key=value):\n"
         << describe_config_keys(preset("A-M")) << "Presets:";
  for (const auto& p : preset_names()) footer << ' ' << p;
  footer << "\nExit codes: 0 success, 2 config error, 3 numerical failure, 4 provenance error.";
  app.footer(footer.str());

  Options opt;
  auto add_common = [&](CLI::App* sc, bool in, bool preset_flag) {
    sc->add_option("--config", opt.config, "JSON config file (flat keys)");
    sc->add_option("--out", opt.out, "output directory");
    sc->add_option("--seed", opt.seed, "noise seed (u64)");
    sc->add_option("--set", opt.sets, "override one config key: key=value")->take_all();
    if (preset_flag) sc->add_option("--preset", opt.preset, "named scenario");
    if (in) sc->add_option("--in", opt.in, "input bundle directory");
  };

  struct Cmd {
    const char* name;
    const char* help;
    bool in, preset;
    int (*fn)(const Options&);
  };
  const Cmd cmds[] = {
      {"forward", "run the forward solver on a phantom and write a forward bundle", false, true, cmd_forward},
      {"observe", "extract, perturb and preprocess data from a forward bundle (--in)", true, false, cmd_observe},
      {"invert", "run the iterated Carleman quasi-reversibility solve on an observation bundle (--in)", true,
       false, cmd_invert},
      {"report", "reconstruct beta, gamma from an inversion bundle (--in) and score them", true, false,
       cmd_report},
      {"sweep-lambda", "invert once per lambda in sweep_lambdas", true, true, cmd_sweep_lambda},
      {"sweep-noise", "observe and invert once per noise level in sweep_deltas", true, true, cmd_sweep_noise},
      {"check-estimates", "numerical checks of the Volterra and Carleman estimates", false, true, cmd_check},
  };
  int (*chosen)(const Options&) = nullptr;
  for (const auto& c : cmds) {
    CLI::App* sc = app.add_subcommand(c.name, c.help);
    add_common(sc, c.in, c.preset);
    sc->callback([&chosen, fn = c.fn] { chosen = fn; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    return chosen(opt);
  } catch (const ProvenanceError& e) {
    std::cerr << "provenance error: " << e.what() << '\n';
    return kExitProvenance;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DimensionError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ParseError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ConvergenceError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const Error& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
}
