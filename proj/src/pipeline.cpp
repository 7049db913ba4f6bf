#include "sirinv/pipeline.hpp"

#include "sirinv/errors.hpp"

#include <fstream>
#include <functional>
#include <sstream>

namespace sirinv {

using nlohmann::json;

namespace {

struct KeyDef {
  ConfigKeyInfo info;
  std::function<json(const RunConfig&)> get;
  std::function<void(RunConfig&, const json&)> set;
};

template <typename T>
T as(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type: " + v.dump());
  }
}

json box_json(const Box& b) { return json::array({b.x_min, b.x_max, b.y_min, b.y_max}); }

Box box_from(const json& v, const std::string& key) {
  const auto a = as<std::vector<double>>(v, key);
  if (a.size() != 4) throw ConfigError("config key '" + key + "' needs [x_min, x_max, y_min, y_max]");
  return {a[0], a[1], a[2], a[3]};
}

// Member pointer helpers keep the table short.
template <typename T>
KeyDef field(std::string key, T RunConfig::*m, std::string help, std::string note) {
  return {{key, std::move(help), std::move(note)},
          [m](const RunConfig& c) { return json(c.*m); },
          [m, key](RunConfig& c, const json& v) { c.*m = as<T>(v, key); }};
}

template <typename Get, typename Set>
KeyDef custom(std::string key, Get get, Set set, std::string help, std::string note) {
  return {{std::move(key), std::move(help), std::move(note)}, get, set};
}

const std::vector<KeyDef>& table() {
  static const std::vector<KeyDef> keys = [] {
    std::vector<KeyDef> k;
    k.push_back(field("scenario", &RunConfig::scenario, "scenario label stored in manifests", "artifact plumbing"));
    k.push_back(custom("omega", [](const RunConfig& c) { return box_json(c.omega); },
                       [](RunConfig& c, const json& v) { c.omega = box_from(v, "omega"); },
                       "inverse domain [x_min, x_max, y_min, y_max]", "reference setup: (1,2) x (-0.5,0.5)"));
    k.push_back(custom("domain_g", [](const RunConfig& c) { return box_json(c.domain_g); },
                       [](RunConfig& c, const json& v) { c.domain_g = box_from(v, "domain_g"); },
                       "forward domain G (rectangle containing omega)",
                       "rectangle in place of the disk (x-1.5)^2+y^2<1"));
    k.push_back(field("T", &RunConfig::T, "final time", "reference setup"));
    k.push_back(field("fine_n", &RunConfig::fine_n, "forward grid points per spatial axis",
                      "chosen: >= 4x denser than the inverse grid"));
    k.push_back(field("fine_nt", &RunConfig::fine_nt, "forward output time slices",
                      "chosen: >= 8x denser than the inverse grid"));
    k.push_back(field("substeps", &RunConfig::substeps, "internal forward steps per output slice", "chosen"));
    k.push_back(field("inv_nx", &RunConfig::inv_nx, "inverse grid points in x", "reference setup: 33"));
    k.push_back(field("inv_ny", &RunConfig::inv_ny, "inverse grid points in y", "reference setup: 33"));
    k.push_back(field("inv_nt", &RunConfig::inv_nt, "inverse grid time points (odd)", "reference setup: 11"));
    k.push_back(field("d", &RunConfig::d, "diffusivity", "reference setup: 0.1"));
    k.push_back(field("qx", &RunConfig::qx, "x velocity of all species", "reference setup: 0.2"));
    k.push_back(field("qy", &RunConfig::qy, "y velocity of all species", "reference setup: 0.2"));
    k.push_back(field("rho0_S", &RunConfig::rho0_S, "initial susceptible density", "reference setup: 0.6"));
    k.push_back(field("rho0_I", &RunConfig::rho0_I, "initial infected density", "reference setup: 0.8"));
    k.push_back(field("rho0_R", &RunConfig::rho0_R, "initial recovered density", "reference setup: 0"));
    k.push_back(field("beta_background", &RunConfig::beta_background, "beta outside the letter", "reference setup: 0.1"));
    k.push_back(field("gamma_background", &RunConfig::gamma_background, "gamma outside the letter", "reference setup: 0.1"));
    k.push_back(custom("beta_letter", [](const RunConfig& c) { return json(c.beta_letter.letter); },
                       [](RunConfig& c, const json& v) { c.beta_letter.letter = as<std::string>(v, "beta_letter"); },
                       "letter shape of beta (A, M, B, Omega, none)", "reference phantoms"));
    k.push_back(custom("beta_inside", [](const RunConfig& c) { return json(c.beta_letter.inside); },
                       [](RunConfig& c, const json& v) { c.beta_letter.inside = as<double>(v, "beta_inside"); },
                       "beta inside the letter", "reference phantoms"));
    k.push_back(custom("gamma_letter", [](const RunConfig& c) { return json(c.gamma_letter.letter); },
                       [](RunConfig& c, const json& v) { c.gamma_letter.letter = as<std::string>(v, "gamma_letter"); },
                       "letter shape of gamma (A, M, B, Omega, none)", "reference phantoms"));
    k.push_back(custom("gamma_inside", [](const RunConfig& c) { return json(c.gamma_letter.inside); },
                       [](RunConfig& c, const json& v) { c.gamma_letter.inside = as<double>(v, "gamma_inside"); },
                       "gamma inside the letter", "reference phantoms"));
    k.push_back(custom("letter_box", [](const RunConfig& c) { return box_json(c.letter_box); },
                       [](RunConfig& c, const json& v) { c.letter_box = box_from(v, "letter_box"); },
                       "box holding the letters", "chosen: no glyph geometry given"));
    k.push_back(field("stroke_half_width", &RunConfig::stroke_half_width, "letter stroke half-width",
                      "chosen: bold strokes, about 4.5 inverse cells wide"));
    k.push_back(field("delta", &RunConfig::delta, "noise level in [0, 1)", "multiplicative uniform noise"));
    k.push_back(field("seed", &RunConfig::seed, "noise seed", "artifact plumbing"));
    k.push_back(custom("p_time", [](const RunConfig& c) { return json(c.obs.p_time); },
                       [](RunConfig& c, const json& v) { c.obs.p_time = as<double>(v, "p_time"); },
                       "time smoothing spline parameter", "fixed by a Monte-Carlo oracle"));
    k.push_back(custom("p_space", [](const RunConfig& c) { return json(c.obs.p_space); },
                       [](RunConfig& c, const json& v) { c.obs.p_space = as<double>(v, "p_space"); },
                       "spatial smoothing parameter for p (<= 0: 1 for delta = 0, else 0.9995)",
                       "fixed by reference runs"));
    k.push_back(custom("c_floor", [](const RunConfig& c) { return json(c.obs.c_floor); },
                       [](RunConfig& c, const json& v) { c.obs.c_floor = as<double>(v, "c_floor"); },
                       "required lower bound on |p1|, |p2|", "chosen; only existence is assumed"));
    k.push_back(custom("lambda", [](const RunConfig& c) { return json(c.inv.lambda); },
                       [](RunConfig& c, const json& v) { c.inv.lambda = as<double>(v, "lambda"); },
                       "Carleman weight parameter", "reference value 5"));
    k.push_back(custom("xi", [](const RunConfig& c) { return json(c.inv.xi); },
                       [](RunConfig& c, const json& v) { c.inv.xi = as<double>(v, "xi"); },
                       "regularization parameter", "reference value, found by trial and error"));
    k.push_back(custom("neumann_penalty", [](const RunConfig& c) { return json(c.inv.neumann_penalty); },
                       [](RunConfig& c, const json& v) { c.inv.neumann_penalty = as<double>(v, "neumann_penalty"); },
                       "Neumann row weight (<= 0: 1e3 x median PDE row weight)", "chosen"));
    k.push_back(custom("compat_penalty", [](const RunConfig& c) { return json(c.inv.compat_penalty); },
                       [](RunConfig& c, const json& v) { c.inv.compat_penalty = as<double>(v, "compat_penalty"); },
                       "weight of d_dt(w_j) = w_{j+3} rows (0 = off)", "off by default"));
    k.push_back(custom("reg_order", [](const RunConfig& c) { return json(c.inv.reg_order); },
                       [](RunConfig& c, const json& v) { c.inv.reg_order = as<int>(v, "reg_order"); },
                       "order of the regularization norm (2 only)", "H^2 norm"));
    k.push_back(custom("stop_tol", [](const RunConfig& c) { return json(c.inv.stop_tol); },
                       [](RunConfig& c, const json& v) { c.inv.stop_tol = as<double>(v, "stop_tol"); },
                       "outer iteration stops when the RMS step is below this", "reference value"));
    k.push_back(custom("max_iter", [](const RunConfig& c) { return json(c.inv.max_iter); },
                       [](RunConfig& c, const json& v) { c.inv.max_iter = as<int>(v, "max_iter"); },
                       "outer iteration cap", "chosen"));
    k.push_back(custom("ls_tol", [](const RunConfig& c) { return json(c.inv.ls_tol); },
                       [](RunConfig& c, const json& v) { c.inv.ls_tol = as<double>(v, "ls_tol"); },
                       "relative normal-equation residual of each least-squares solve", "chosen"));
    k.push_back(custom("ls_max_iter", [](const RunConfig& c) { return json(c.inv.ls_max_iter); },
                       [](RunConfig& c, const json& v) { c.inv.ls_max_iter = as<int>(v, "ls_max_iter"); },
                       "iteration cap of the least-squares solver", "chosen"));
    k.push_back(custom("solver",
                       [](const RunConfig& c) { return json(c.inv.solver == LsSolver::Direct ? "direct" : "cg"); },
                       [](RunConfig& c, const json& v) {
                         const auto s = as<std::string>(v, "solver");
                         if (s == "direct") c.inv.solver = LsSolver::Direct;
                         else if (s == "cg") c.inv.solver = LsSolver::ConjugateGradient;
                         else throw ConfigError("config key 'solver' must be direct or cg");
                       },
                       "least-squares solver: direct (LDLT + refinement) or cg", "chosen"));
    k.push_back(custom("recon_mode", [](const RunConfig& c) { return json(to_string(c.recon)); },
                       [](RunConfig& c, const json& v) { c.recon = parse_recon_mode(as<std::string>(v, "recon_mode")); },
                       "midpoint or average", "midpoint: evaluation at t = T/2"));
    k.push_back(field("sweep_lambdas", &RunConfig::sweep_lambdas, "lambda values of sweep-lambda",
                      "lambda experiment"));
    k.push_back(field("sweep_deltas", &RunConfig::sweep_deltas, "noise levels of sweep-noise",
                      "noise experiment"));
    k.push_back(field("check_lambdas", &RunConfig::check_lambdas, "lambda values of check-estimates",
                      "range of the lambda experiment"));
    k.push_back(field("check_trials", &RunConfig::check_trials, "random fields per check", "chosen"));
    return k;
  }();
  return keys;
}

Glyph glyph_for(const std::string& letter, const RunConfig& cfg) {
  char c;
  if (letter == "A") c = 'A';
  else if (letter == "M") c = 'M';
  else if (letter == "B") c = 'B';
  else if (letter == "Omega" || letter == "O") c = 'O';
  else throw ConfigError("unknown letter '" + letter + "' (A, M, B, Omega, none)");
  return Glyph::letter(c, cfg.letter_box, cfg.stroke_half_width);
}

}  // namespace

void RunConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  need(omega.x_min < omega.x_max && omega.y_min < omega.y_max, "omega: empty box");
  need(domain_g.contains(omega), "domain_g must contain omega strictly");
  need(omega.x_max > 0.0, "omega: x_max must be positive (Carleman weight uses b = x_max)");
  need(T > 0.0, "T must be positive");
  need(fine_n >= 5, "fine_n must be >= 5");
  need(fine_nt >= 3, "fine_nt must be >= 3");
  need(substeps >= 1, "substeps must be >= 1");
  need(inv_nx >= 5 && inv_ny >= 5, "inv_nx, inv_ny must be >= 5");
  need(inv_nt >= 5 && inv_nt % 2 == 1, "inv_nt must be odd and >= 5 (T/2 must be a node)");
  need(d > 0.0, "d must be positive");
  need(delta >= 0.0 && delta < 1.0, "delta must be in [0, 1)");
  need(obs.p_time > 0.0 && obs.p_time <= 1.0, "p_time must be in (0, 1]");
  need(obs.p_space <= 1.0, "p_space must be <= 1");
  need(obs.c_floor > 0.0, "c_floor must be positive");
  need(stroke_half_width > 0.0, "stroke_half_width must be positive");
  need(check_trials >= 1, "check_trials must be >= 1");
  for (const auto* l : {&beta_letter, &gamma_letter})
    if (l->letter != "none") need(l->inside > 0.0, "letter inside values must be positive");
  inv.validate();
}

std::vector<std::string> preset_names() { return {"A-M", "Omega-B-low", "Omega-B-high"}; }

RunConfig preset(const std::string& name) {
  RunConfig c;
  c.scenario = name;
  if (name == "A-M") return c;
  if (name == "Omega-B-low" || name == "Omega-B-high") {
    const bool high = name == "Omega-B-high";
    c.gamma_letter = {"Omega", high ? 0.8 : 0.4};
    c.beta_letter = {"B", high ? 1.0 : 0.6};
    c.delta = 0.02;
    return c;
  }
  std::string known;
  for (const auto& n : preset_names()) known += " " + n;
  throw ConfigError("unknown preset '" + name + "' (known:" + known + ")");
}

json to_json(const RunConfig& cfg) {
  json j = json::object();
  for (const auto& k : table()) j[k.info.key] = k.get(cfg);
  return j;
}

void apply_json(RunConfig& cfg, const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool found = false;
    for (const auto& k : table())
      if (k.info.key == key) {
        k.set(cfg, value);
        found = true;
        break;
      }
    if (!found) throw ConfigError("unknown config key '" + key + "'");
  }
}

RunConfig load_config(const std::string& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  // A "preset" key selects the base before the other keys apply.
  if (j.is_object() && j.contains("preset")) {
    base = preset(as<std::string>(j["preset"], "preset"));
    j.erase("preset");
  }
  apply_json(base, j);
  return base;
}

const std::vector<ConfigKeyInfo>& config_keys() {
  static const std::vector<ConfigKeyInfo> infos = [] {
    std::vector<ConfigKeyInfo> v;
    for (const auto& k : table()) v.push_back(k.info);
    return v;
  }();
  return infos;
}

std::string describe_config_keys(const RunConfig& defaults) {
  std::ostringstream os;
  for (const auto& k : table())
    os << "  " << k.info.key << " = " << k.get(defaults).dump() << "\n      " << k.info.help << " ["
       << k.info.note << "]\n";
  return os.str();
}

GridSpec fine_spatial_grid(const RunConfig& c) {
  return GridSpec::spatial({c.domain_g.x_min, c.domain_g.x_max, c.fine_n},
                           {c.domain_g.y_min, c.domain_g.y_max, c.fine_n});
}

GridSpec fine_grid(const RunConfig& c) {
  return GridSpec::space_time({c.domain_g.x_min, c.domain_g.x_max, c.fine_n},
                              {c.domain_g.y_min, c.domain_g.y_max, c.fine_n}, {0.0, c.T, c.fine_nt});
}

GridSpec inverse_grid(const RunConfig& c) {
  return GridSpec::space_time({c.omega.x_min, c.omega.x_max, c.inv_nx},
                              {c.omega.y_min, c.omega.y_max, c.inv_ny}, {0.0, c.T, c.inv_nt});
}

PhantomSpec phantom_spec(const RunConfig& c) {
  PhantomSpec p;
  p.beta_background = c.beta_background;
  p.gamma_background = c.gamma_background;
  if (c.beta_letter.letter != "none")
    p.beta_inclusions.push_back({glyph_for(c.beta_letter.letter, c), c.beta_letter.inside});
  if (c.gamma_letter.letter != "none")
    p.gamma_inclusions.push_back({glyph_for(c.gamma_letter.letter, c), c.gamma_letter.inside});
  return p;
}

KnownModel known_model(const RunConfig& c) {
  return KnownModel::constant(inverse_grid(c).spatial_part(), c.d, c.qx, c.qy);
}

Truth truth_on_inverse_grid(const RunConfig& c) {
  const GridSpec g = inverse_grid(c).spatial_part();
  const PhantomSpec spec = phantom_spec(c);
  const CoefficientFields f = build_phantom(spec, g, c.omega);
  Truth t{f.beta, f.gamma, std::nullopt, std::nullopt};
  if (!spec.beta_inclusions.empty())
    t.beta_shape = ShapeTruth{rasterize(spec.beta_inclusions.front().mask, g),
                              spec.beta_inclusions.front().value, c.beta_background};
  if (!spec.gamma_inclusions.empty())
    t.gamma_shape = ShapeTruth{rasterize(spec.gamma_inclusions.front().mask, g),
                               spec.gamma_inclusions.front().value, c.gamma_background};
  return t;
}

ForwardResult run_forward(const RunConfig& c) {
  c.validate();
  const GridSpec gs = fine_spatial_grid(c);
  ForwardResult r;
  r.coefficients = build_phantom(phantom_spec(c), gs, c.omega);
  SirParams p = SirParams::defaults(gs, r.coefficients.beta, r.coefficients.gamma);
  p.d = c.d;
  p.q_S = p.q_I = p.q_R = VectorField2::constant(gs, c.qx, c.qy);
  p.rho0_S = ScalarField(gs, c.rho0_S);
  p.rho0_I = ScalarField(gs, c.rho0_I);
  p.rho0_R = ScalarField(gs, c.rho0_R);
  r.fine = forward_solve(p, fine_grid(c), {c.substeps});
  return r;
}

ObserveResult run_observe(const RunConfig& c, const SirFields& fine) {
  c.validate();
  ObserveResult r;
  r.clean = extract_measurements(fine, inverse_grid(c), c.obs.c_floor);
  r.noisy = add_noise(r.clean, {c.delta, c.seed});
  r.derived = build_boundary_vectors(r.noisy, known_model(c), c.obs);
  return r;
}

ExperimentResult run_inverse(const RunConfig& c, const DerivedData& derived) {
  c.validate();
  ExperimentResult r;
  r.ccmm = ccmm_iterate(derived, c.inv);
  r.rec = reconstruct_coefficients(r.ccmm.w, derived.s, c.recon);
  r.metrics = error_metrics(r.rec, truth_on_inverse_grid(c));
  return r;
}

std::map<std::string, double> summary_metrics(const ExperimentResult& r) {
  auto m = r.metrics;
  for (const auto& [k, v] : r.rec.metrics) m[k] = v;
  m["iterations"] = r.ccmm.iterations;
  m["converged"] = r.ccmm.converged ? 1.0 : 0.0;
  m["final_step_norm"] = r.ccmm.history.back().step_norm;
  return m;
}

}  // namespace sirinv
