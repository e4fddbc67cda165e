#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "biref/reflector.hpp"
#include "biref/transport.hpp"

namespace biref {

struct Ray {
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  Eigen::Vector3d dir = Eigen::Vector3d::UnitZ();
};

/// dir - 2 (dir . normal) normal.
Eigen::Vector3d reflect(const Eigen::Vector3d& dir, const Eigen::Vector3d& normal);

/// Outward unit normal, along p/|p| + (p - f2)/|p - f2|. Throws kNotOnSurface
/// when |residual| > 1e-6 * max(1, major_sum).
Eigen::Vector3d quadric_normal_spheroid(const Eigen::Vector3d& p, const SupportingSpheroid& s);

/// Unit normal on the +z side, along (2 s, -4 a) in focus-shifted coordinates,
/// i.e. the bisector of the direction away from the focus and the axis (0, 0, 1).
/// Throws kNotOnSurface when |residual| > 1e-6 * max(1, 4 a^2).
Eigen::Vector3d quadric_normal_paraboloid(const Eigen::Vector3d& p,
                                          const SupportingParaboloid& q);

/// One traced branch: source i -> reflector 1 -> target j on reflector 2 -> output plane.
struct TraceResult {
  std::size_t i = 0;
  std::size_t j = 0;
  Eigen::Vector3d hit1 = Eigen::Vector3d::Zero();
  Eigen::Vector3d mid_dir = Eigen::Vector3d::Zero();
  Eigen::Vector3d hit2 = Eigen::Vector3d::Zero();
  Eigen::Vector3d exit_dir = Eigen::Vector3d::Zero();
  Eigen::Vector2d exit_x = Eigen::Vector2d::Zero();
  double opl = 0.0;
  double parallel_err_rad = 0.0;  ///< angle(exit_dir, (0, 0, -1))
  double focal_err = 0.0;         ///< distance from focus2 to the mid-leg line / leg length
  double reflection_law_err = 0.0;  ///< angle(reflected mid_dir, unit(hit2 - hit1))
  double exit_x_err = 0.0;        ///< |exit_x - x_j|
  /// Second focus at the source: the mid leg returns through the origin.
  bool degenerate = false;
};

struct TraceBranches {
  std::vector<TraceResult> branches;
  bool multivalued = false;
};

/// Traces the ray emitted along m_i through every branch of the reflector map.
/// Throws kPlaneTooClose when d <= -z_j for a traced target.
TraceBranches trace_ray(std::size_t i, const ReflectorPair& pair, const ReflectorMap& map);

struct PushforwardResult {
  double max_marginal_err = 0.0;
  std::size_t map_plan_mismatches = 0;
  std::size_t compared_nodes = 0;  ///< nodes with a single plan entry and single argmax
};

/// Column sums of the plan against target weights, and agreement of the map
/// with the plan on nodes where both are single-valued.
PushforwardResult pushforward_check(const ReflectorPair& pair, const ReflectorMap& map,
                                    const TransportPlan& plan, const TargetMeasure& tgt);

struct VerificationThresholds {
  double parallel_rad = 1e-8;
  double opl_rel = 1e-9;
  double exit_x = 1e-8;
  double focal = 1e-8;
  double marginal = 1e-9;
  double mesh_normal = 1e-4;
  double lipschitz_ratio = 1.0 + 1e-6;
};

struct VerificationReport {
  // Single-valued nodes only.
  double max_parallel_err_rad = 0.0;
  double max_opl_rel_err = 0.0;
  double max_exit_x_err = 0.0;
  double max_focal_err = 0.0;
  double max_reflection_law_err = 0.0;
  // Every branch of every node, multi-valued included.
  double all_branches_max_parallel_err_rad = 0.0;
  double all_branches_max_opl_rel_err = 0.0;
  double all_branches_max_exit_x_err = 0.0;
  std::size_t traced_branches = 0;
  std::size_t degenerate_count = 0;

  double max_marginal_err = 0.0;
  std::size_t map_plan_mismatches = 0;
  std::size_t multivalued_count = 0;
  double single_valued_fraction = 0.0;

  // Tie diagnostics: at multi-valued nodes, the smallest angle between the
  // normals of two supporting spheroids at the shared reflector point.
  std::size_t max_branches = 0;
  double min_tie_normal_angle_rad = 0.0;
  std::size_t tie_pairs = 0;

  // Finite-difference mesh normals against supporting-quadric normals at
  // sampled smooth points.
  double max_mesh_normal_err = 0.0;
  std::size_t mesh_normal_samples = 0;

  std::vector<std::string> failures;
  bool ok() const { return failures.empty(); }
};

/// Full physical check of a reflector pair against its plan.
VerificationReport verify_design(const ReflectorPair& pair, const ReflectorMap& map,
                                 const TransportPlan& plan, const TargetMeasure& tgt,
                                 const SourceAperture& src_ap, const TargetAperture& tgt_ap,
                                 const VerificationThresholds& thr = {});

}  // namespace biref
