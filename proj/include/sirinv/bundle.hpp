#pragma once

// On-disk bundles of the pipeline stages. Each bundle directory holds its
// files plus manifest.json (config, file hashes, parent manifest hash) and
// manifest.time.json (wall-clock timestamp, kept apart so manifests are
// reproducible byte for byte).

#include "sirinv/observation.hpp"
#include "sirinv/pipeline.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace sirinv {

namespace fs = std::filesystem;

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const fs::path& path);

/// Version string baked in at build time (git describe when available).
std::string version_string();

struct Manifest {
  nlohmann::json body;
  std::string hash;  // sha256 of manifest.json as written
  fs::path dir;

  RunConfig config() const;
  std::string stage() const { return body.at("stage").get<std::string>(); }
};

/// Writes manifest.json and the timestamp sidecar; `files` are relative to
/// dir and get hashed. Returns the manifest.
Manifest write_manifest(const fs::path& dir, const std::string& stage, const RunConfig& cfg,
                        const std::vector<std::string>& files, const Manifest* parent,
                        nlohmann::json extra = nlohmann::json::object());

/// Reads a manifest, checks its stage and re-hashes every listed file.
/// Throws ProvenanceError on any mismatch.
Manifest read_manifest(const fs::path& dir, const std::string& expected_stage);

/// Loads the parent recorded in `child` and checks its hash.
Manifest read_parent(const Manifest& child, const std::string& expected_stage);

// Traces are stored as FLD1 files with axes (boundary point index, t).
void write_trace(const fs::path& path, const Trace& trace);
Trace read_trace(const fs::path& path, std::vector<BoundaryPoint> points);

Manifest write_forward_bundle(const fs::path& dir, const RunConfig& cfg, const ForwardResult& fwd);
SirFields read_forward_fields(const Manifest& m);

Manifest write_observation_bundle(const fs::path& dir, const RunConfig& cfg, const ObserveResult& obs,
                                  const Manifest& parent);
DerivedData read_derived_data(const Manifest& m);

Manifest write_inversion_bundle(const fs::path& dir, const RunConfig& cfg, const CcmmResult& res,
                                const Manifest& parent);
WField read_wfield(const Manifest& m);

/// history.csv content for a CCMM run.
std::string history_csv(const CcmmResult& res);

/// Metrics as pretty-printed JSON with sorted keys.
std::string metrics_json(const std::map<std::string, double>& metrics);

Manifest write_report_bundle(const fs::path& dir, const RunConfig& cfg, const Reconstruction& rec,
                             const std::map<std::string, double>& metrics, const Manifest& parent);

}  // namespace sirinv
