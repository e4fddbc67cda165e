#include "biref/job.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <set>

#include "biref/errors.hpp"
#include "biref/io.hpp"

namespace biref {

namespace {

using nlohmann::json;

[[noreturn]] void schema_fail(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::kParseError, where + ": " + what);
}

const json& require_object(const json& j, const std::string& where) {
  if (!j.is_object()) schema_fail(where, "expected an object");
  return j;
}

void reject_unknown(const json& j, const std::string& where,
                    std::initializer_list<const char*> allowed) {
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!ok.count(it.key())) schema_fail(where, "unknown key '" + it.key() + "'");
  }
}

double get_number(const json& j, const std::string& where, const char* key) {
  if (!j.contains(key)) schema_fail(where, std::string("missing '") + key + "'");
  const json& v = j.at(key);
  if (!v.is_number()) schema_fail(where + "." + key, "expected a number");
  return v.get<double>();
}

double get_number_or(const json& j, const std::string& where, const char* key, double fallback) {
  return j.contains(key) ? get_number(j, where, key) : fallback;
}

int get_int(const json& j, const std::string& where, const char* key) {
  if (!j.contains(key)) schema_fail(where, std::string("missing '") + key + "'");
  const json& v = j.at(key);
  if (!v.is_number_integer()) schema_fail(where + "." + key, "expected an integer");
  return v.get<int>();
}

std::string get_string(const json& j, const std::string& where, const char* key) {
  if (!j.contains(key)) schema_fail(where, std::string("missing '") + key + "'");
  const json& v = j.at(key);
  if (!v.is_string()) schema_fail(where + "." + key, "expected a string");
  return v.get<std::string>();
}

std::array<double, 2> get_pair(const json& j, const std::string& where, const char* key) {
  const json& v = j.at(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
    schema_fail(where + "." + key, "expected [number, number]");
  }
  return {v[0].get<double>(), v[1].get<double>()};
}

IntensityConfig parse_intensity(const json& j, const std::string& where,
                                const std::filesystem::path& base_dir) {
  require_object(j, where);
  IntensityConfig ic;
  ic.kind = get_string(j, where, "kind");
  if (ic.kind == "uniform") {
    reject_unknown(j, where, {"kind"});
  } else if (ic.kind == "gaussian") {
    reject_unknown(j, where, {"kind", "center", "sigma"});
    if (j.contains("center")) ic.center = get_pair(j, where, "center");
    ic.sigma = get_number(j, where, "sigma");
  } else if (ic.kind == "ring") {
    reject_unknown(j, where, {"kind", "center", "radius", "width"});
    if (j.contains("center")) ic.center = get_pair(j, where, "center");
    ic.radius = get_number(j, where, "radius");
    ic.width = get_number(j, where, "width");
  } else if (ic.kind == "bitmap") {
    reject_unknown(j, where, {"kind", "path"});
    std::filesystem::path p = get_string(j, where, "path");
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    ic.path = p.lexically_normal().string();
  } else {
    schema_fail(where + ".kind", "unknown intensity kind '" + ic.kind + "'");
  }
  return ic;
}

json intensity_to_json(const IntensityConfig& ic) {
  json j{{"kind", ic.kind}};
  if (ic.kind == "gaussian") {
    j["center"] = ic.center;
    j["sigma"] = ic.sigma;
  } else if (ic.kind == "ring") {
    j["center"] = ic.center;
    j["radius"] = ic.radius;
    j["width"] = ic.width;
  } else if (ic.kind == "bitmap") {
    j["path"] = ic.path;
  }
  return j;
}

NormalizationPolicy parse_policy(const std::string& s) {
  for (auto p : {NormalizationPolicy::kScaleTarget, NormalizationPolicy::kScaleSource,
                 NormalizationPolicy::kError}) {
    if (s == to_string(p)) return p;
  }
  schema_fail("solver.normalization", "expected scale_target, scale_source or error");
}

}  // namespace

IntensityModel IntensityConfig::model() const {
  if (kind == "uniform") return IntensityModel::uniform();
  if (kind == "gaussian") return IntensityModel::gaussian({center[0], center[1]}, sigma);
  if (kind == "ring") return IntensityModel::ring({center[0], center[1]}, radius, width);
  if (kind == "bitmap") return IntensityModel::from_bitmap(read_bitmap_csv(std::filesystem::path(path)));
  throw Error(ErrorCode::kInvalidInput, "unknown intensity kind '" + kind + "'");
}

OpticalConfig JobConfig::optical_config() const {
  OpticalConfig cfg = OpticalConfig::make(optical.ell, optical.d, optical.gauge);
  if (optical.delta) {
    cfg.delta = *optical.delta;
    cfg.check();
  }
  return cfg;
}

void JobConfig::check() const {
  optical_config();
  source.aperture.check();
  target.aperture.check();
  if (source.n_mz < 1 || source.n_phi < 1 || target.nx < 1 || target.ny < 1) {
    throw Error(ErrorCode::kInvalidInput, "grid resolutions must be >= 1");
  }
  for (const IntensityConfig* ic : {&source.intensity, &target.intensity}) {
    if (ic->kind != "bitmap") ic->model();
  }
  if (!(solver.tolerance > 0.0)) throw Error(ErrorCode::kInvalidInput, "tolerance must be > 0");
  if (outputs.mesh_resolution[0] < 2 || outputs.mesh_resolution[1] < 2) {
    throw Error(ErrorCode::kInvalidInput, "mesh resolution must be >= 2");
  }
  if (outputs.directory.empty()) throw Error(ErrorCode::kInvalidInput, "empty output directory");
}

JobConfig parse_job(const json& doc, const std::filesystem::path& base_dir) {
  require_object(doc, "config");
  reject_unknown(doc, "config", {"optical", "source", "target", "solver", "outputs"});
  JobConfig job;

  if (!doc.contains("optical")) schema_fail("config", "missing 'optical'");
  const json& o = require_object(doc.at("optical"), "optical");
  reject_unknown(o, "optical", {"ell", "d", "gauge", "delta"});
  job.optical.ell = get_number(o, "optical", "ell");
  job.optical.d = get_number(o, "optical", "d");
  job.optical.gauge = get_number_or(o, "optical", "gauge", 0.0);
  if (o.contains("delta")) job.optical.delta = get_number(o, "optical", "delta");

  if (!doc.contains("source")) schema_fail("config", "missing 'source'");
  const json& s = require_object(doc.at("source"), "source");
  reject_unknown(s, "source", {"mz_min", "mz_max", "phi_min", "phi_max", "n_mz", "n_phi", "intensity"});
  job.source.aperture = {get_number(s, "source", "mz_min"), get_number(s, "source", "mz_max"),
                         get_number(s, "source", "phi_min"), get_number(s, "source", "phi_max")};
  job.source.n_mz = get_int(s, "source", "n_mz");
  job.source.n_phi = get_int(s, "source", "n_phi");
  if (s.contains("intensity")) {
    job.source.intensity = parse_intensity(s.at("intensity"), "source.intensity", base_dir);
  }

  if (!doc.contains("target")) schema_fail("config", "missing 'target'");
  const json& t = require_object(doc.at("target"), "target");
  reject_unknown(t, "target", {"x_min", "x_max", "y_min", "y_max", "nx", "ny", "intensity"});
  job.target.aperture = {get_number(t, "target", "x_min"), get_number(t, "target", "x_max"),
                         get_number(t, "target", "y_min"), get_number(t, "target", "y_max")};
  job.target.nx = get_int(t, "target", "nx");
  job.target.ny = get_int(t, "target", "ny");
  if (t.contains("intensity")) {
    job.target.intensity = parse_intensity(t.at("intensity"), "target.intensity", base_dir);
  }

  if (doc.contains("solver")) {
    const json& v = require_object(doc.at("solver"), "solver");
    reject_unknown(v, "solver", {"tolerance", "normalization"});
    job.solver.tolerance = get_number_or(v, "solver", "tolerance", job.solver.tolerance);
    if (v.contains("normalization")) {
      job.solver.normalization = parse_policy(get_string(v, "solver", "normalization"));
    }
  }

  if (doc.contains("outputs")) {
    const json& v = require_object(doc.at("outputs"), "outputs");
    reject_unknown(v, "outputs", {"directory", "mesh_resolution"});
    if (v.contains("directory")) job.outputs.directory = get_string(v, "outputs", "directory");
    if (v.contains("mesh_resolution")) {
      const json& r = v.at("mesh_resolution");
      if (!r.is_array() || r.size() != 2 || !r[0].is_number_integer() ||
          !r[1].is_number_integer()) {
        schema_fail("outputs.mesh_resolution", "expected [integer, integer]");
      }
      job.outputs.mesh_resolution = {r[0].get<int>(), r[1].get<int>()};
    }
  }

  job.check();
  return job;
}

JobConfig load_job(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, path.string() + ": " + e.what());
  }
  return parse_job(doc, path.parent_path());
}

json to_json(const JobConfig& job) {
  json optical{{"ell", job.optical.ell}, {"d", job.optical.d}, {"gauge", job.optical.gauge}};
  if (job.optical.delta) optical["delta"] = *job.optical.delta;
  const auto& sa = job.source.aperture;
  const auto& ta = job.target.aperture;
  return json{
      {"optical", optical},
      {"source",
       {{"mz_min", sa.mz_min},
        {"mz_max", sa.mz_max},
        {"phi_min", sa.phi_min},
        {"phi_max", sa.phi_max},
        {"n_mz", job.source.n_mz},
        {"n_phi", job.source.n_phi},
        {"intensity", intensity_to_json(job.source.intensity)}}},
      {"target",
       {{"x_min", ta.x_min},
        {"x_max", ta.x_max},
        {"y_min", ta.y_min},
        {"y_max", ta.y_max},
        {"nx", job.target.nx},
        {"ny", job.target.ny},
        {"intensity", intensity_to_json(job.target.intensity)}}},
      {"solver",
       {{"tolerance", job.solver.tolerance},
        {"normalization", to_string(job.solver.normalization)}}},
      {"outputs",
       {{"directory", job.outputs.directory}, {"mesh_resolution", job.outputs.mesh_resolution}}},
  };
}

}  // namespace biref
