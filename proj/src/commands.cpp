#include "biref/commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "biref/discretization.hpp"
#include "biref/io.hpp"
#include "biref/job.hpp"
#include "biref/optics.hpp"
#include "biref/parallel.hpp"
#include "biref/raytrace.hpp"
#include "biref/reflector.hpp"
#include "biref/transport.hpp"

namespace biref {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInfeasibleEll:
    case ErrorCode::kNoFeasibleEll:
    case ErrorCode::kNonPositiveKernel:
      return kExitInfeasible;
    case ErrorCode::kStalled:
      return kExitStalled;
    case ErrorCode::kNotTight:
    case ErrorCode::kInfeasiblePotentials:
    case ErrorCode::kNotSupporting:
    case ErrorCode::kNotOnSurface:
    case ErrorCode::kPlaneTooClose:
      return kExitVerificationFailed;
    default:
      return kExitInputError;
  }
}

namespace {

constexpr int kLipschitzSamples = 2000;

struct Options {
  std::string config;
  std::string out;
  std::string mesh_res;
  std::optional<double> gauge;
  std::optional<double> tol;
  std::uint64_t seed = 0;
  int n = 0;
  int trials = 20;
};

class Stopwatch {
 public:
  // Milliseconds since the previous lap, recorded under `stage`.
  void lap(const std::string& stage) {
    auto now = std::chrono::steady_clock::now();
    timings_[stage] = std::chrono::duration<double, std::milli>(now - last_).count();
    last_ = now;
  }
  json to_json() const { return json(timings_); }

 private:
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
  std::map<std::string, double> timings_;
};

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json certificate_json(const OptimalityCertificate& c) {
  return {{"primal_value", num(c.primal_value)},
          {"dual_value", num(c.dual_value)},
          {"duality_gap", num(c.duality_gap)},
          {"max_feasibility_violation", num(c.max_feasibility_violation)},
          {"complementary_slackness_violation", num(c.complementary_slackness_violation)},
          {"dual_violation", num(c.dual_violation)},
          {"marginal_violation", num(c.marginal_violation)},
          {"negative_mass", num(c.negative_mass)},
          {"tolerance", num(c.tolerance)},
          {"ok", c.ok()}};
}

json stats_json(const SolveStats& s) {
  return {{"pivots", s.pivots},
          {"degenerate_pivots", s.degenerate_pivots},
          {"refinement_rounds", s.refinement_rounds},
          {"dropped_source_nodes", s.dropped_source_nodes},
          {"dropped_target_nodes", s.dropped_target_nodes}};
}

json verification_json(const VerificationReport& v) {
  return {{"max_parallel_err_rad", num(v.max_parallel_err_rad)},
          {"max_opl_rel_err", num(v.max_opl_rel_err)},
          {"max_marginal_err", num(v.max_marginal_err)},
          {"map_plan_mismatches", v.map_plan_mismatches},
          {"multivalued_count", v.multivalued_count},
          {"single_valued_fraction", num(v.single_valued_fraction)},
          {"max_exit_x_err", num(v.max_exit_x_err)},
          {"max_focal_err", num(v.max_focal_err)},
          {"max_reflection_law_err_rad", num(v.max_reflection_law_err)},
          {"all_branches",
           {{"max_parallel_err_rad", num(v.all_branches_max_parallel_err_rad)},
            {"max_opl_rel_err", num(v.all_branches_max_opl_rel_err)},
            {"max_exit_x_err", num(v.all_branches_max_exit_x_err)},
            {"traced_branches", v.traced_branches}}},
          {"degenerate_count", v.degenerate_count},
          {"ties",
           {{"max_branches", v.max_branches},
            {"tie_pairs", v.tie_pairs},
            {"min_spheroid_normal_angle_rad", num(v.min_tie_normal_angle_rad)}}},
          {"mesh_normals",
           {{"max_err_rad", num(v.max_mesh_normal_err)}, {"samples", v.mesh_normal_samples}}},
          {"failures", v.failures},
          {"ok", v.ok()}};
}

json lipschitz_json(const LipschitzReport& l) {
  return {{"K1", num(l.K1)},
          {"K2", num(l.K2)},
          {"max_ratio_x", num(l.max_ratio_x)},
          {"max_ratio_m", num(l.max_ratio_m)},
          {"samples", l.samples},
          {"source_diameter", num(l.source_diameter)},
          {"target_diameter", num(l.target_diameter)},
          {"r_bound", num(l.r_bound)},
          {"r_max_dev", num(l.r_max_dev)},
          {"zeta_bound", num(l.zeta_bound)},
          {"zeta_max_dev", num(l.zeta_max_dev)},
          {"bounds_ok", l.bounds_ok()}};
}

std::vector<std::string> lipschitz_failures(const LipschitzReport& l, double limit) {
  std::vector<std::string> out;
  auto fmt = [](const char* what, double v, double lim) {
    std::ostringstream s;
    s << what << " " << v << " exceeds " << lim;
    return s.str();
  };
  if (!(l.max_ratio_x <= limit)) out.push_back(fmt("Lipschitz ratio in x", l.max_ratio_x, limit));
  if (!(l.max_ratio_m <= limit)) out.push_back(fmt("Lipschitz ratio in m", l.max_ratio_m, limit));
  if (!(l.r_max_dev <= l.r_bound)) out.push_back(fmt("|r - gauge|", l.r_max_dev, l.r_bound));
  if (!(l.zeta_max_dev <= l.zeta_bound)) {
    out.push_back(fmt("|zeta + gauge|", l.zeta_max_dev, l.zeta_bound));
  }
  return out;
}

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

JobConfig load_with_overrides(const Options& opt) {
  JobConfig job = load_job(opt.config);
  if (!opt.out.empty()) job.outputs.directory = opt.out;
  if (opt.gauge) job.optical.gauge = *opt.gauge;
  if (opt.tol) job.solver.tolerance = *opt.tol;
  if (!opt.mesh_res.empty()) {
    int nu = 0, nv = 0;
    char x = 0, tail = 0;
    std::istringstream in(opt.mesh_res);
    if (!(in >> nu >> x >> nv) || (x != 'x' && x != 'X') || (in >> tail)) {
      throw Error(ErrorCode::kInvalidInput, "--mesh-res expects NxM, got '" + opt.mesh_res + "'");
    }
    job.outputs.mesh_resolution = {nu, nv};
  }
  job.check();
  return job;
}

// Everything up to the cost matrix, shared by solve and verify.
struct Problem {
  JobConfig job;
  OpticalConfig cfg;
  double margin = 0.0;
  NormalizedMeasures measures;
  CostMatrix cost;
};

Problem prepare(const JobConfig& job, Stopwatch& clock) {
  Problem p{job, job.optical_config(), 0.0, {}, {}};
  p.margin = validate_config(p.cfg, job.source.aperture, job.target.aperture);
  clock.lap("validate");
  SourceMeasure src = build_source_grid(job.source.aperture, job.source.n_mz, job.source.n_phi,
                                        job.source.intensity.model());
  TargetMeasure tgt = build_target_grid(job.target.aperture, job.target.nx, job.target.ny,
                                        job.target.intensity.model());
  p.measures = normalize_masses(src, tgt, job.solver.normalization);
  clock.lap("discretize");
  p.cost = assemble_cost_matrix(p.measures.source, p.measures.target, p.cfg);
  clock.lap("cost_matrix");
  return p;
}

json base_report(const Problem& p) {
  return {{"config", to_json(p.job)},
          {"gauge", p.job.optical.gauge},
          {"gauge_node", 0},
          {"positivity_margin", num(p.margin)},
          {"mass_scale", num(p.measures.scale)},
          {"normalization", to_string(p.job.solver.normalization)},
          {"n_source", p.measures.source.size()},
          {"n_target", p.measures.target.size()}};
}

int cmd_validate(const Options& opt, std::ostream& out, std::ostream& err) {
  JobConfig job = load_with_overrides(opt);
  const auto& sa = job.source.aperture;
  const auto& ta = job.target.aperture;
  auto suggestion = [&]() -> std::string {
    try {
      return format_double(minimal_ell(sa, ta, 1e-3));
    } catch (const Error& e) {
      return std::string("unavailable (") + e.what() + ")";
    }
  };
  try {
    double margin = validate_config(job.optical_config(), sa, ta);
    out << "positivity margin: " << format_double(margin) << "\n";
    out << "minimal ell (tol 1e-3): " << suggestion() << "\n";
    return kExitOk;
  } catch (const Error& e) {
    if (exit_code_for(e.code()) != kExitInfeasible) throw;
    err << "error: " << e.what() << "\n";
    err << "increase ell to at least " << suggestion() << "\n";
    return kExitInfeasible;
  }
}

int cmd_solve(const Options& opt, std::ostream& out, std::ostream& err) {
  JobConfig job = load_with_overrides(opt);
  Stopwatch clock;
  Problem p = prepare(job, clock);
  const fs::path dir = job.outputs.directory;
  fs::create_directories(dir);
  json report = base_report(p);

  SolveOptions so;
  so.tol = job.solver.tolerance;
  so.gauge = job.optical.gauge;
  so.gauge_node = 0;
  KantorovichSolution sol;
  try {
    sol = solve_kantorovich(p.measures.source, p.measures.target, p.cost, so);
  } catch (const StalledError& e) {
    clock.lap("solve");
    report["status"] = "stalled";
    report["message"] = e.what();
    report["certificate"] = certificate_json(e.partial().certificate);
    report["solver"] = stats_json(e.partial().stats);
    report["timings_ms"] = clock.to_json();
    write_plan_csv(dir / "plan.csv", e.partial().plan);
    write_potentials_csv(dir / "potentials.csv", e.partial().potentials);
    write_json(dir / "report.json", report);
    err << "error: " << e.what() << "\n";
    return kExitStalled;
  }
  clock.lap("solve");

  DualPotentials pot = tighten_potentials(sol.potentials, p.cost, job.optical.gauge);
  OptimalityCertificate cert =
      check_certificate(sol.plan, pot, p.cost, p.measures.source, p.measures.target, so.tol);
  clock.lap("tighten");

  ReflectorPair pair = build_reflector_pair(pot, p.cfg, p.measures.source, p.measures.target);
  ReflectorMap map = reflector_map(pair);
  clock.lap("build");
  VerificationReport ver = verify_design(pair, map, sol.plan, p.measures.target,
                                         job.source.aperture, job.target.aperture);
  LipschitzReport lip = lipschitz_report(pair, job.source.aperture, job.target.aperture,
                                         kLipschitzSamples, opt.seed);
  for (auto& f : lipschitz_failures(lip, VerificationThresholds{}.lipschitz_ratio)) {
    ver.failures.push_back(f);
  }
  clock.lap("verify");

  const auto [nu, nv] = job.outputs.mesh_resolution;
  ReflectorMeshes meshes = export_meshes(pair, job.source.aperture, job.target.aperture, nu, nv);
  write_plan_csv(dir / "plan.csv", sol.plan);
  write_potentials_csv(dir / "potentials.csv", pot);
  write_obj(dir / "reflector1.obj", meshes.reflector1, "reflector1");
  write_obj(dir / "reflector2.obj", meshes.reflector2, "reflector2");
  clock.lap("export");

  report["status"] = cert.ok() ? "ok" : "certificate_failed";
  report["certificate"] = certificate_json(cert);
  report["lp_certificate"] = certificate_json(sol.certificate);
  report["solver"] = stats_json(sol.stats);
  report["verification"] = verification_json(ver);
  report["lipschitz"] = lipschitz_json(lip);
  report["artifacts"] = {"plan.csv", "potentials.csv", "reflector1.obj", "reflector2.obj",
                         "report.json"};
  report["timings_ms"] = clock.to_json();
  write_json(dir / "report.json", report);

  out << "solved " << p.measures.source.size() << " x " << p.measures.target.size()
      << ": C = " << format_double(cert.primal_value)
      << ", gap = " << format_double(cert.duality_gap) << ", pivots = " << sol.stats.pivots
      << "\n";
  out << "single-valued fraction " << ver.single_valued_fraction << ", verification "
      << (ver.ok() ? "passed" : "FAILED") << "\n";
  for (const auto& f : ver.failures) err << "verification: " << f << "\n";
  out << "artifacts written to " << dir.string() << "\n";
  if (!cert.ok()) {
    err << "error: certificate above tolerance after tightening\n";
    return kExitStalled;
  }
  return kExitOk;
}

int cmd_verify(const Options& opt, std::ostream& out, std::ostream& err) {
  JobConfig job = load_with_overrides(opt);
  const fs::path dir = job.outputs.directory;
  TransportPlan plan = read_plan_csv(dir / "plan.csv");
  DualPotentials pot = read_potentials_csv(dir / "potentials.csv", 0);
  Stopwatch clock;
  Problem p = prepare(job, clock);
  const double tol = job.solver.tolerance;

  OptimalityCertificate cert =
      check_certificate(plan, pot, p.cost, p.measures.source, p.measures.target, tol);
  std::vector<std::string> failures;
  json section{{"certificate", certificate_json(cert)}};
  if (!cert.ok()) {
    std::ostringstream s;
    s << "certificate: gap " << cert.duality_gap << ", feasibility violation "
      << cert.max_feasibility_violation << ", slackness violation "
      << cert.complementary_slackness_violation << " (tolerance " << tol << ")";
    failures.push_back(s.str());
  }
  clock.lap("certificate");

  try {
    ReflectorPair pair = build_reflector_pair(pot, p.cfg, p.measures.source, p.measures.target);
    ReflectorMap map = reflector_map(pair);
    VerificationReport ver = verify_design(pair, map, plan, p.measures.target,
                                           job.source.aperture, job.target.aperture);
    LipschitzReport lip = lipschitz_report(pair, job.source.aperture, job.target.aperture,
                                           kLipschitzSamples, opt.seed);
    for (auto& f : lipschitz_failures(lip, VerificationThresholds{}.lipschitz_ratio)) {
      ver.failures.push_back(f);
    }
    failures.insert(failures.end(), ver.failures.begin(), ver.failures.end());
    section["verification"] = verification_json(ver);
    section["lipschitz"] = lipschitz_json(lip);
  } catch (const Error& e) {
    if (exit_code_for(e.code()) != kExitVerificationFailed) throw;
    failures.push_back(std::string("reflector pair: ") + e.what());
  }
  clock.lap("verify");
  section["failures"] = failures;
  section["ok"] = failures.empty();
  section["timings_ms"] = clock.to_json();

  json report = base_report(p);
  if (std::ifstream in(dir / "report.json"); in) {
    json old = json::parse(in, nullptr, false);
    if (old.is_object()) report = old;
  }
  report["verify"] = section;
  write_json(dir / "report.json", report);

  for (const auto& f : failures) err << "verification: " << f << "\n";
  out << "verification " << (failures.empty() ? "passed" : "FAILED") << " for "
      << dir.string() << "\n";
  return failures.empty() ? kExitOk : kExitVerificationFailed;
}

int cmd_oracle(const Options& opt, std::ostream& out, std::ostream& err) {
  if (opt.n < 2) throw Error(ErrorCode::kInvalidInput, "--n must be >= 2");
  if (opt.n > 6) throw Error(ErrorCode::kTooLarge, "--n must be <= 6 for exhaustive enumeration");
  if (opt.trials < 1) throw Error(ErrorCode::kInvalidInput, "--trials must be >= 1");

  OpticalConfig cfg = OpticalConfig::make(8.0, 3.0);
  SourceAperture sa{-0.5, 0.5, 0.0, 2.0 * std::numbers::pi};
  TargetAperture ta{-1.0, 1.0, -1.0, 1.0};
  if (!opt.config.empty()) {
    JobConfig job = load_with_overrides(opt);
    cfg = job.optical_config();
    sa = job.source.aperture;
    ta = job.target.aperture;
  }
  validate_config(cfg, sa, ta);

  const auto n = static_cast<std::size_t>(opt.n);
  double worst = 0.0;
  for (int t = 0; t < opt.trials; ++t) {
    std::mt19937_64 rng(opt.seed + static_cast<std::uint64_t>(t));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    SourceMeasure src;
    TargetMeasure tgt;
    for (std::size_t k = 0; k < n; ++k) {
      double mz = sa.mz_min + (sa.mz_max - sa.mz_min) * u(rng);
      double phi = sa.phi_min + sa.phi_span() * u(rng);
      src.nodes.push_back(Direction::from_chart(mz, phi));
      src.weights.push_back(1.0 / static_cast<double>(n));
    }
    for (std::size_t k = 0; k < n; ++k) {
      double x = ta.x_min + (ta.x_max - ta.x_min) * u(rng);
      double y = ta.y_min + (ta.y_max - ta.y_min) * u(rng);
      tgt.nodes.push_back(TargetPoint{{x, y}});
      tgt.weights.push_back(1.0 / static_cast<double>(n));
    }
    CostMatrix cost = assemble_cost_matrix(src, tgt, cfg);
    double solver = solve_kantorovich(src, tgt, cost).certificate.primal_value;
    double brute = brute_force_oracle(src, tgt, cost);
    worst = std::max(worst, std::abs(solver - brute));
    if (!(std::abs(solver - brute) <= 1e-9)) {
      err << "mismatch at seed " << opt.seed + static_cast<std::uint64_t>(t) << ": solver "
          << format_double(solver) << ", brute force " << format_double(brute) << "\n";
      err << "cost matrix:\n";
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) err << (j ? "," : "") << format_double(cost(i, j));
        err << "\n";
      }
      return kExitOracleMismatch;
    }
  }
  out << "oracle: n = " << n << ", " << opt.trials << " instances from seed " << opt.seed
      << ", max |solver - brute force| = " << format_double(worst) << "\n";
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  configure_threads_from_env();
  CLI::App app{"Two-reflector beam shaping by discrete Kantorovich duality", "biref"};
  app.require_subcommand(1);
  Options opt;

  auto* validate = app.add_subcommand("validate", "check the positivity margin of a job's ell");
  validate->add_option("--config", opt.config, "job file (JSON)")->required();

  auto* solve = app.add_subcommand("solve", "solve, build, verify and export a design");
  solve->add_option("--config", opt.config, "job file (JSON)")->required();
  solve->add_option("--out", opt.out, "artifact directory (overrides outputs.directory)");
  solve->add_option("--mesh-res", opt.mesh_res, "mesh resolution NxM");
  solve->add_option("--gauge", opt.gauge, "value of r at the first source node");
  solve->add_option("--tol", opt.tol, "certificate tolerance");
  solve->add_option("--seed", opt.seed, "seed for Lipschitz sampling");

  auto* verify = app.add_subcommand("verify", "re-verify artifacts written by solve");
  verify->add_option("--config", opt.config, "job file (JSON)")->required();
  verify->add_option("--out", opt.out, "artifact directory (overrides outputs.directory)");
  verify->add_option("--tol", opt.tol, "certificate tolerance");
  verify->add_option("--seed", opt.seed, "seed for Lipschitz sampling");

  auto* oracle = app.add_subcommand("oracle", "compare the solver with permutation enumeration");
  oracle->add_option("--n", opt.n, "instance size, 2..6")->required();
  oracle->add_option("--seed", opt.seed, "first seed");
  oracle->add_option("--trials", opt.trials, "number of instances (default 20)");
  oracle->add_option("--config", opt.config, "take geometry from a job file instead of E0");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInputError;
  }

  try {
    if (*validate) return cmd_validate(opt, out, err);
    if (*solve) return cmd_solve(opt, out, err);
    if (*verify) return cmd_verify(opt, out, err);
    return cmd_oracle(opt, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInputError;
  }
}

}  // namespace biref
