#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "biref/discretization.hpp"
#include "biref/optics.hpp"

namespace biref {

/// Intensity as written in a job file. A bitmap path is stored resolved
/// against the job file's directory, so re-parsing an echo is stable.
struct IntensityConfig {
  std::string kind = "uniform";  ///< uniform | gaussian | ring | bitmap
  std::array<double, 2> center{0.0, 0.0};
  double sigma = 1.0;
  double radius = 0.0;
  double width = 1.0;
  std::string path;

  /// Loads the bitmap file when kind == "bitmap".
  IntensityModel model() const;

  friend bool operator==(const IntensityConfig&, const IntensityConfig&) = default;
};

struct OpticalSection {
  double ell = 0.0;
  double d = 0.0;
  double gauge = 0.0;
  std::optional<double> delta;  ///< if present, must equal 1/(2 ell)

  friend bool operator==(const OpticalSection&, const OpticalSection&) = default;
};

struct SourceSection {
  SourceAperture aperture;
  int n_mz = 0;
  int n_phi = 0;
  IntensityConfig intensity;

  friend bool operator==(const SourceSection&, const SourceSection&) = default;
};

struct TargetSection {
  TargetAperture aperture;
  int nx = 0;
  int ny = 0;
  IntensityConfig intensity;

  friend bool operator==(const TargetSection&, const TargetSection&) = default;
};

struct SolverSection {
  double tolerance = 1e-9;
  NormalizationPolicy normalization = NormalizationPolicy::kScaleTarget;

  friend bool operator==(const SolverSection&, const SolverSection&) = default;
};

struct OutputSection {
  std::string directory = "out";
  std::array<int, 2> mesh_resolution{64, 64};

  friend bool operator==(const OutputSection&, const OutputSection&) = default;
};

/// One JSON document:
///   optical {ell, d, gauge?, delta?}
///   source  {mz_min, mz_max, phi_min, phi_max, n_mz, n_phi, intensity?}
///   target  {x_min, x_max, y_min, y_max, nx, ny, intensity?}
///   solver  {tolerance?, normalization?}           (optional)
///   outputs {directory?, mesh_resolution? [nu, nv]} (optional)
/// intensity is {kind: uniform} | {kind: gaussian, center?, sigma}
///   | {kind: ring, center?, radius, width} | {kind: bitmap, path}.
/// Unknown keys anywhere are rejected.
struct JobConfig {
  OpticalSection optical;
  SourceSection source;
  TargetSection target;
  SolverSection solver;
  OutputSection outputs;

  OpticalConfig optical_config() const;
  /// Checks every section against the module invariants (kInvalidInput).
  void check() const;

  friend bool operator==(const JobConfig&, const JobConfig&) = default;
};

/// Throws kParseError on schema violations and kInvalidInput on bad values.
JobConfig parse_job(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
/// Reads and parses a job file; kIoError if unreadable, kParseError if not JSON.
JobConfig load_job(const std::filesystem::path& path);
nlohmann::json to_json(const JobConfig& job);

}  // namespace biref
