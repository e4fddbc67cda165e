#include "biref/raytrace.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "biref/errors.hpp"

namespace biref {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// atan2 form keeps full relative precision for tiny angles, where acos does not.
double angle_between(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  return std::atan2(a.cross(b).norm(), a.dot(b));
}

std::string describe(const char* what, double value, double limit) {
  std::ostringstream msg;
  msg << what << " " << value << " exceeds " << limit;
  return msg.str();
}

}  // namespace

Eigen::Vector3d reflect(const Eigen::Vector3d& dir, const Eigen::Vector3d& normal) {
  return dir - 2.0 * dir.dot(normal) * normal;
}

Eigen::Vector3d quadric_normal_spheroid(const Eigen::Vector3d& p, const SupportingSpheroid& s) {
  double res = s.residual(p);
  if (!(std::abs(res) <= 1e-6 * std::max(1.0, s.major_sum))) {
    std::ostringstream msg;
    msg << "point is off the spheroid by " << res;
    throw Error(ErrorCode::kNotOnSurface, msg.str());
  }
  Eigen::Vector3d u1 = p.normalized();
  Eigen::Vector3d w = p - s.focus2;
  Eigen::Vector3d u2 = w.norm() > 0.0 ? Eigen::Vector3d(w.normalized()) : u1;
  return (u1 + u2).normalized();
}

Eigen::Vector3d quadric_normal_paraboloid(const Eigen::Vector3d& p,
                                          const SupportingParaboloid& q) {
  Eigen::Vector2d s = p.head<2>() - q.focus.head<2>();
  double res = q.residual(p);
  if (!(std::abs(res) <= 1e-6 * std::max(1.0, s.squaredNorm() + 4.0 * q.a * q.a))) {
    std::ostringstream msg;
    msg << "point is off the paraboloid by " << res;
    throw Error(ErrorCode::kNotOnSurface, msg.str());
  }
  return Eigen::Vector3d(2.0 * s.x(), 2.0 * s.y(), -4.0 * q.a).normalized();
}

TraceBranches trace_ray(std::size_t i, const ReflectorPair& pair, const ReflectorMap& map) {
  if (i >= pair.n_source() || i >= map.assignments.size()) {
    throw Error(ErrorCode::kInvalidInput, "source index out of range");
  }
  const OpticalConfig& cfg = pair.config();
  const Eigen::Vector3d down(0.0, 0.0, -1.0);
  TraceBranches out;
  out.multivalued = map.assignments[i].size() > 1;

  for (std::size_t j : map.assignments[i]) {
    if (!(cfg.d > -pair.z(j))) {
      std::ostringstream msg;
      msg << "output plane z = " << -cfg.d << " is not below reflector 2 at target " << j
          << " (z = " << pair.z(j) << ")";
      throw Error(ErrorCode::kPlaneTooClose, msg.str());
    }
    TraceResult t;
    t.i = i;
    t.j = j;
    const SupportingSpheroid sph = spheroid_of_target(j, pair);
    const SupportingParaboloid par = paraboloid_of_source(i, pair);

    t.hit1 = pair.point1(i);
    t.mid_dir = reflect(pair.source_nodes()[i].vec(), quadric_normal_spheroid(t.hit1, sph));
    t.hit2 = pair.point2(j);
    t.degenerate = sph.focus2.norm() <= 1e-12 * cfg.ell;

    Eigen::Vector3d leg = t.hit2 - t.hit1;
    double leg_len = leg.norm();
    t.reflection_law_err = angle_between(t.mid_dir, leg);
    t.focal_err = (leg - leg.dot(t.mid_dir) * t.mid_dir).norm() / leg_len;

    t.exit_dir = reflect(t.mid_dir, quadric_normal_paraboloid(t.hit2, par));
    t.parallel_err_rad = angle_between(t.exit_dir, down);
    if (t.exit_dir.z() < 0.0) {
      double run = (-cfg.d - t.hit2.z()) / t.exit_dir.z();
      t.exit_x = t.hit2.head<2>() + run * t.exit_dir.head<2>();
      t.opl = t.hit1.norm() + leg_len + run;
      t.exit_x_err = (t.exit_x - pair.target_nodes()[j].x).norm();
    } else {
      t.exit_x.setConstant(std::numeric_limits<double>::quiet_NaN());
      t.opl = kInf;
      t.exit_x_err = kInf;
    }
    out.branches.push_back(t);
  }
  return out;
}

PushforwardResult pushforward_check(const ReflectorPair& pair, const ReflectorMap& map,
                                    const TransportPlan& plan, const TargetMeasure& tgt) {
  if (tgt.size() != pair.n_target() || map.assignments.size() != pair.n_source()) {
    throw Error(ErrorCode::kInvalidInput, "map, plan and measures have inconsistent sizes");
  }
  PushforwardResult out;
  auto cols = plan.col_sums(tgt.size());
  for (std::size_t j = 0; j < cols.size(); ++j) {
    out.max_marginal_err = std::max(out.max_marginal_err, std::abs(cols[j] - tgt.weights[j]));
  }

  std::vector<std::size_t> count(pair.n_source(), 0);
  std::vector<std::size_t> column(pair.n_source(), 0);
  for (const PlanEntry& e : plan.entries) {
    if (e.i >= pair.n_source()) throw Error(ErrorCode::kInvalidInput, "plan row out of range");
    ++count[e.i];
    column[e.i] = e.j;
  }
  for (std::size_t i = 0; i < pair.n_source(); ++i) {
    if (count[i] != 1 || map.assignments[i].size() != 1) continue;
    ++out.compared_nodes;
    if (map.assignments[i].front() != column[i]) ++out.map_plan_mismatches;
  }
  return out;
}

namespace {

struct MeshNormalCheck {
  double max_err = 0.0;
  std::size_t samples = 0;
};

// Reflector 2: z is smooth where one paraboloid is active on the whole stencil.
MeshNormalCheck check_reflector2_normals(const ReflectorPair& pair, const TargetAperture& ap,
                                         int n) {
  MeshNormalCheck out;
  const double h = 1e-5 * ap.diameter();
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      Eigen::Vector2d x(ap.x_min + (ap.x_max - ap.x_min) * (a + 0.5) / n,
                        ap.y_min + (ap.y_max - ap.y_min) * (b + 0.5) / n);
      EnvelopeValue c = pair.envelope_z({x});
      std::array<EnvelopeValue, 4> nb{pair.envelope_z({x + Eigen::Vector2d(h, 0)}),
                                      pair.envelope_z({x - Eigen::Vector2d(h, 0)}),
                                      pair.envelope_z({x + Eigen::Vector2d(0, h)}),
                                      pair.envelope_z({x - Eigen::Vector2d(0, h)})};
      if (!std::all_of(nb.begin(), nb.end(), [&](const auto& e) { return e.argmax == c.argmax; })) {
        continue;
      }
      Eigen::Vector3d fd(-(nb[0].value - nb[1].value) / (2 * h),
                         -(nb[2].value - nb[3].value) / (2 * h), 1.0);
      Eigen::Vector3d p(x.x(), x.y(), c.value);
      Eigen::Vector3d exact = quadric_normal_paraboloid(p, paraboloid_of_source(c.argmax, pair));
      out.max_err = std::max(out.max_err, angle_between(fd.normalized(), exact));
      ++out.samples;
    }
  }
  return out;
}

// Reflector 1: surface rho(m) m, tangents by central differences in the chart.
MeshNormalCheck check_reflector1_normals(const ReflectorPair& pair, const SourceAperture& ap,
                                         int n) {
  MeshNormalCheck out;
  const double h = 1e-5;
  auto surface = [&](double mz, double phi, std::size_t& arg) {
    Direction m = Direction::from_chart(mz, phi);
    EnvelopeValue e = pair.envelope_rho(m);
    arg = e.argmax;
    return Eigen::Vector3d(e.value * m.vec());
  };
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      double mz = ap.mz_min + (ap.mz_max - ap.mz_min) * (a + 0.5) / n;
      double phi = ap.phi_min + ap.phi_span() * (b + 0.5) / n;
      std::size_t c = 0;
      std::array<std::size_t, 4> args{};
      Eigen::Vector3d p = surface(mz, phi, c);
      Eigen::Vector3d pz1 = surface(mz + h, phi, args[0]);
      Eigen::Vector3d pz0 = surface(mz - h, phi, args[1]);
      Eigen::Vector3d pf1 = surface(mz, phi + h, args[2]);
      Eigen::Vector3d pf0 = surface(mz, phi - h, args[3]);
      if (!std::all_of(args.begin(), args.end(), [c](std::size_t v) { return v == c; })) continue;
      Eigen::Vector3d fd = ((pf1 - pf0) / (2 * h)).cross((pz1 - pz0) / (2 * h));
      Eigen::Vector3d exact = quadric_normal_spheroid(p, spheroid_of_target(c, pair));
      out.max_err = std::max(out.max_err, angle_between(fd.normalized(), exact));
      ++out.samples;
    }
  }
  return out;
}

}  // namespace

VerificationReport verify_design(const ReflectorPair& pair, const ReflectorMap& map,
                                 const TransportPlan& plan, const TargetMeasure& tgt,
                                 const SourceAperture& src_ap, const TargetAperture& tgt_ap,
                                 const VerificationThresholds& thr) {
  VerificationReport rep;
  const OpticalConfig& cfg = pair.config();
  const double total = cfg.ell + cfg.d;
  const std::size_t n = pair.n_source();

  double lowest_z = kInf;
  for (std::size_t j = 0; j < pair.n_target(); ++j) lowest_z = std::min(lowest_z, pair.z(j));
  if (!(cfg.d > -lowest_z)) {
    std::ostringstream msg;
    msg << "output plane z = " << -cfg.d << " is not below reflector 2 (min z = " << lowest_z
        << ")";
    rep.failures.push_back(msg.str());
    return rep;
  }

  std::vector<TraceBranches> traced(n);
  std::vector<std::string> errors(n);
  const auto ni = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t ii = 0; ii < ni; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    try {
      traced[i] = trace_ray(i, pair, map);
    } catch (const Error& e) {
      errors[i] = e.what();
    }
  }

  rep.min_tie_normal_angle_rad = kInf;
  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i].empty()) {
      rep.failures.push_back("source " + std::to_string(i) + ": " + errors[i]);
      continue;
    }
    const auto& tb = traced[i];
    rep.max_branches = std::max(rep.max_branches, tb.branches.size());
    for (const TraceResult& t : tb.branches) {
      ++rep.traced_branches;
      if (t.degenerate) ++rep.degenerate_count;
      double opl_rel = std::abs(t.opl - total) / total;
      rep.all_branches_max_parallel_err_rad =
          std::max(rep.all_branches_max_parallel_err_rad, t.parallel_err_rad);
      rep.all_branches_max_opl_rel_err = std::max(rep.all_branches_max_opl_rel_err, opl_rel);
      rep.all_branches_max_exit_x_err = std::max(rep.all_branches_max_exit_x_err, t.exit_x_err);
      if (!tb.multivalued) {
        rep.max_parallel_err_rad = std::max(rep.max_parallel_err_rad, t.parallel_err_rad);
        rep.max_opl_rel_err = std::max(rep.max_opl_rel_err, opl_rel);
        rep.max_exit_x_err = std::max(rep.max_exit_x_err, t.exit_x_err);
        rep.max_focal_err = std::max(rep.max_focal_err, t.focal_err);
        rep.max_reflection_law_err = std::max(rep.max_reflection_law_err, t.reflection_law_err);
      }
    }
    if (tb.multivalued) {
      const auto& js = map.assignments[i];
      Eigen::Vector3d p = pair.point1(i);
      for (std::size_t a = 0; a < js.size(); ++a) {
        for (std::size_t b = a + 1; b < js.size(); ++b) {
          Eigen::Vector3d na = quadric_normal_spheroid(p, spheroid_of_target(js[a], pair));
          Eigen::Vector3d nb = quadric_normal_spheroid(p, spheroid_of_target(js[b], pair));
          rep.min_tie_normal_angle_rad = std::min(rep.min_tie_normal_angle_rad, angle_between(na, nb));
          ++rep.tie_pairs;
        }
      }
    }
  }
  if (rep.tie_pairs == 0) rep.min_tie_normal_angle_rad = 0.0;
  rep.multivalued_count = map.multivalued_count();
  rep.single_valued_fraction = map.single_valued_fraction();

  PushforwardResult pf = pushforward_check(pair, map, plan, tgt);
  rep.max_marginal_err = pf.max_marginal_err;
  rep.map_plan_mismatches = pf.map_plan_mismatches;

  MeshNormalCheck m1 = check_reflector1_normals(pair, src_ap, 16);
  MeshNormalCheck m2 = check_reflector2_normals(pair, tgt_ap, 16);
  rep.max_mesh_normal_err = std::max(m1.max_err, m2.max_err);
  rep.mesh_normal_samples = m1.samples + m2.samples;

  auto require = [&rep](const char* what, double value, double limit) {
    if (!(value <= limit)) rep.failures.push_back(describe(what, value, limit));
  };
  require("exit-direction angle (rad)", rep.all_branches_max_parallel_err_rad, thr.parallel_rad);
  require("relative optical path length error", rep.all_branches_max_opl_rel_err, thr.opl_rel);
  require("exit point error", rep.all_branches_max_exit_x_err, thr.exit_x);
  require("focal error", rep.max_focal_err, thr.focal);
  require("reflection-law error (rad)", rep.max_reflection_law_err, thr.focal);
  require("plan marginal error", rep.max_marginal_err, thr.marginal);
  require("mesh normal error (rad)", rep.max_mesh_normal_err, thr.mesh_normal);
  if (rep.map_plan_mismatches != 0) {
    rep.failures.push_back(std::to_string(rep.map_plan_mismatches) +
                           " source nodes where the map disagrees with the plan");
  }
  if (rep.tie_pairs > 0 && !(rep.min_tie_normal_angle_rad > 1e-6)) {
    std::ostringstream msg;
    msg << "tied supporting spheroids meet tangentially (normal angle "
        << rep.min_tie_normal_angle_rad << " rad)";
    rep.failures.push_back(msg.str());
  }
  return rep;
}

}  // namespace biref
