#include "sirinv/bundle.hpp"

#include "sirinv/errors.hpp"
#include "sirinv/field_io.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#ifndef SIRINV_VERSION
#define SIRINV_VERSION "unknown"
#endif

namespace sirinv {

using nlohmann::json;

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 computation failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return os.str();
}

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ProvenanceError("missing file " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + p.string());
  out << s;
  if (!out) throw ConfigError("write failed: " + p.string());
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create " + dir.string() + ": " + ec.message());
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

std::string sha256_file(const fs::path& path) { return sha256_hex(slurp(path)); }

std::string version_string() { return SIRINV_VERSION; }

RunConfig Manifest::config() const {
  RunConfig c;
  apply_json(c, body.at("config"));
  return c;
}

Manifest write_manifest(const fs::path& dir, const std::string& stage, const RunConfig& cfg,
                        const std::vector<std::string>& files, const Manifest* parent, json extra) {
  json files_j = json::object();
  for (const auto& f : files) files_j[f] = sha256_file(dir / f);
  json body = {{"stage", stage},
               {"version", version_string()},
               {"config", to_json(cfg)},
               {"seed", cfg.seed},
               {"files", files_j},
               {"info", std::move(extra)}};
  if (parent)
    body["parent"] = {{"stage", parent->stage()},
                      // relative, so bundle trees can move and reruns elsewhere match byte for byte
                      {"dir", fs::relative(fs::weakly_canonical(parent->dir), fs::weakly_canonical(dir)).generic_string()},
                      {"hash", parent->hash}};
  const std::string text = body.dump(2) + "\n";
  spit(dir / "manifest.json", text);
  spit(dir / "manifest.time.json", json{{"written_utc", utc_now()}}.dump(2) + "\n");
  return {std::move(body), sha256_hex(text), dir};
}

Manifest read_manifest(const fs::path& dir, const std::string& expected_stage) {
  const fs::path p = dir / "manifest.json";
  if (!fs::exists(p)) throw ProvenanceError("no manifest.json in " + dir.string());
  const std::string text = slurp(p);
  Manifest m;
  try {
    m.body = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ProvenanceError("unreadable manifest " + p.string() + ": " + e.what());
  }
  m.hash = sha256_hex(text);
  m.dir = dir;
  if (!m.body.contains("stage") || m.stage() != expected_stage)
    throw ProvenanceError(p.string() + " is not a " + expected_stage + " bundle");
  for (const auto& [name, hash] : m.body.at("files").items())
    if (sha256_file(dir / name) != hash.get<std::string>())
      throw ProvenanceError("content hash mismatch for " + (dir / name).string());
  return m;
}

Manifest read_parent(const Manifest& child, const std::string& expected_stage) {
  if (!child.body.contains("parent")) throw ProvenanceError("bundle " + child.dir.string() + " records no parent");
  const auto& par = child.body.at("parent");
  fs::path pdir = par.at("dir").get<std::string>();
  if (pdir.is_relative()) pdir = child.dir / pdir;
  Manifest m = read_manifest(pdir.lexically_normal(), expected_stage);
  if (m.hash != par.at("hash").get<std::string>())
    throw ProvenanceError("parent bundle " + m.dir.string() + " does not match the hash recorded in " +
                          child.dir.string());
  return m;
}

void write_trace(const fs::path& path, const Trace& tr) {
  const auto n = static_cast<int>(tr.points.size());
  FieldFile f;
  f.axes = {Axis{0.0, static_cast<double>(n - 1), n}, tr.t};
  // First axis fastest: point index, then time.
  f.values = Eigen::Map<const Eigen::VectorXd>(tr.values.data(), tr.values.size());
  write_fld1(path, f);
}

Trace read_trace(const fs::path& path, std::vector<BoundaryPoint> points) {
  const FieldFile f = read_fld1(path);
  if (f.axes.size() != 2 || f.axes[0].n != static_cast<int>(points.size()))
    throw DimensionError(path.string() + " does not match the expected boundary");
  Trace tr = Trace::zeros(std::move(points), f.axes[1]);
  tr.values = Eigen::Map<const Eigen::MatrixXd>(f.values.data(), f.axes[0].n, f.axes[1].n);
  return tr;
}

Manifest write_forward_bundle(const fs::path& dir, const RunConfig& cfg, const ForwardResult& fwd) {
  make_dir(dir);
  write_field(dir / "rho_S.fld", fwd.fine.rho_S);
  write_field(dir / "rho_I.fld", fwd.fine.rho_I);
  write_field(dir / "rho_R.fld", fwd.fine.rho_R);
  write_field(dir / "beta_true.fld", fwd.coefficients.beta);
  write_field(dir / "gamma_true.fld", fwd.coefficients.gamma);
  return write_manifest(dir, "forward", cfg,
                        {"rho_S.fld", "rho_I.fld", "rho_R.fld", "beta_true.fld", "gamma_true.fld"}, nullptr,
                        {{"fine_grid", {cfg.fine_n, cfg.fine_n, cfg.fine_nt}}});
}

SirFields read_forward_fields(const Manifest& m) {
  return {read_field(m.dir / "rho_S.fld"), read_field(m.dir / "rho_I.fld"), read_field(m.dir / "rho_R.fld")};
}

Manifest write_observation_bundle(const fs::path& dir, const RunConfig& cfg, const ObserveResult& obs,
                                  const Manifest& parent) {
  make_dir(dir);
  std::vector<std::string> files;
  auto field = [&](const std::string& name, const ScalarField& f) {
    write_field(dir / name, f);
    files.push_back(name);
  };
  auto trace = [&](const std::string& name, const Trace& t) {
    write_trace(dir / name, t);
    files.push_back(name);
  };
  for (int c = 0; c < 3; ++c) {
    const std::string k = std::to_string(c + 1);
    field("p" + k + "_clean.fld", obs.clean.p[c]);
    field("p" + k + ".fld", obs.noisy.p[c]);
    trace("r" + k + "_clean.fld", obs.clean.r[c]);
    trace("r" + k + ".fld", obs.noisy.r[c]);
    trace("f" + k + "_clean.fld", obs.clean.f[c]);
    trace("f" + k + ".fld", obs.noisy.f[c]);
    field("p" + k + "_smooth.fld", obs.derived.p[c]);
  }
  for (int c = 0; c < kComponents; ++c) {
    const std::string k = std::to_string(c + 1);
    trace("G0_" + k + ".fld", obs.derived.G0[c]);
    trace("G1_" + k + ".fld", obs.derived.G1[c]);
  }
  field("s1.fld", obs.derived.s.s1);
  field("s2.fld", obs.derived.s.s2);
  field("s3.fld", obs.derived.s.s3);
  field("s4.fld", obs.derived.s.s4);
  return write_manifest(dir, "observe", cfg, files, &parent,
                        {{"delta", cfg.delta},
                         {"p_time", cfg.obs.p_time},
                         {"p_space", cfg.obs.spatial_parameter(cfg.delta)},
                         {"c_floor_verified", obs.derived.c_floor}});
}

DerivedData read_derived_data(const Manifest& m) {
  const RunConfig cfg = m.config();
  const GridSpec g = inverse_grid(cfg);
  DerivedData d;
  d.grid = g;
  for (int c = 0; c < kComponents; ++c) {
    const std::string k = std::to_string(c + 1);
    d.G0[c] = read_trace(m.dir / ("G0_" + k + ".fld"), gamma_boundary(g));
    d.G1[c] = read_trace(m.dir / ("G1_" + k + ".fld"), lateral_boundary(g));
  }
  for (int c = 0; c < 3; ++c) d.p[c] = read_field(m.dir / ("p" + std::to_string(c + 1) + "_smooth.fld"));
  d.s = {read_field(m.dir / "s1.fld"), read_field(m.dir / "s2.fld"), read_field(m.dir / "s3.fld"),
         read_field(m.dir / "s4.fld")};
  d.model = known_model(cfg);
  d.c_floor = m.body.at("info").at("c_floor_verified").get<double>();
  if (d.s.s1.grid() != g.spatial_part()) throw DimensionError("observation bundle grid does not match its config");
  return d;
}

std::string history_csv(const CcmmResult& res) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "iteration,step_norm,functional,compat_defect,beta_tvar,gamma_tvar,w_norm,ls_residual\n";
  for (const auto& h : res.history)
    os << h.iteration << ',' << h.step_norm << ',' << h.functional << ',' << h.compat_defect << ','
       << h.beta_tvar << ',' << h.gamma_tvar << ',' << h.w_norm << ',' << h.ls_residual << '\n';
  return os.str();
}

Manifest write_inversion_bundle(const fs::path& dir, const RunConfig& cfg, const CcmmResult& res,
                                const Manifest& parent) {
  make_dir(dir);
  std::vector<std::string> files;
  for (int c = 0; c < kComponents; ++c) {
    const std::string name = "w" + std::to_string(c + 1) + ".fld";
    write_field(dir / name, res.w.w[c]);
    files.push_back(name);
  }
  spit(dir / "history.csv", history_csv(res));
  files.push_back("history.csv");
  return write_manifest(dir, "invert", cfg, files, &parent,
                        {{"iterations", res.iterations},
                         {"converged", res.converged},
                         {"warnings", res.warnings}});
}

WField read_wfield(const Manifest& m) {
  WField w;
  for (int c = 0; c < kComponents; ++c) w.w[c] = read_field(m.dir / ("w" + std::to_string(c + 1) + ".fld"));
  for (int c = 1; c < kComponents; ++c)
    if (w.w[c].grid() != w.w[0].grid()) throw DimensionError("W components on different grids");
  return w;
}

std::string metrics_json(const std::map<std::string, double>& metrics) {
  json j = json::object();
  for (const auto& [k, v] : metrics) j[k] = v;
  return j.dump(2) + "\n";
}

Manifest write_report_bundle(const fs::path& dir, const RunConfig& cfg, const Reconstruction& rec,
                             const std::map<std::string, double>& metrics, const Manifest& parent) {
  make_dir(dir);
  std::vector<std::string> files{"metrics.json", "beta_rec.fld", "gamma_rec.fld", "beta_tvar.fld",
                                 "gamma_tvar.fld"};
  spit(dir / "metrics.json", metrics_json(metrics));
  write_field(dir / "beta_rec.fld", rec.beta_rec);
  write_field(dir / "gamma_rec.fld", rec.gamma_rec);
  write_field(dir / "beta_tvar.fld", rec.beta_tvar);
  write_field(dir / "gamma_tvar.fld", rec.gamma_tvar);
  const Truth truth = truth_on_inverse_grid(cfg);
  const auto csv = export_heatmaps({{"beta_rec", &rec.beta_rec},
                                    {"gamma_rec", &rec.gamma_rec},
                                    {"beta_true", &truth.beta},
                                    {"gamma_true", &truth.gamma}},
                                   dir / "heatmaps");
  for (const auto& p : csv) files.push_back(fs::relative(p, dir).generic_string());
  return write_manifest(dir, "report", cfg, files, &parent);
}

}  // namespace sirinv
