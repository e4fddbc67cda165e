#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "biref/discretization.hpp"
#include "biref/optics.hpp"
#include "biref/transport.hpp"

namespace biref {

/// Spheroid with foci at the origin and `focus2`; points p satisfy
/// |p| + |p - focus2| = major_sum.
struct SupportingSpheroid {
  Eigen::Vector3d focus2 = Eigen::Vector3d::Zero();
  double major_sum = 0.0;

  /// |p| + |p - focus2| - major_sum.
  double residual(const Eigen::Vector3d& p) const;
  /// Distance from the origin along unit direction m to the surface.
  double radius_along(const Eigen::Vector3d& m) const;
};

/// Downward-opening paraboloid with the given focus: in coordinates (s, q)
/// shifted by the focus, 4 a q = |s|^2 - 4 a^2 with a < 0.
struct SupportingParaboloid {
  Eigen::Vector3d focus = Eigen::Vector3d::Zero();
  double a = 0.0;

  /// 4 a q - (|s|^2 - 4 a^2).
  double residual(const Eigen::Vector3d& p) const;
  /// Height z of the surface above the plane point x.
  double height_at(const Eigen::Vector2d& x) const;
};

/// Per source node, the target nodes attaining rho_hat_i = K(m_i, x_j) / z_tilde_j
/// within the tie tolerance, in increasing j.
struct ReflectorMap {
  std::vector<std::vector<std::size_t>> assignments;
  double tie_tol = 0.0;

  std::size_t multivalued_count() const;
  double single_valued_fraction() const;
};

struct EnvelopeValue {
  double value = 0.0;       ///< z or rho, after the inverse transform
  double transformed = 0.0; ///< z_tilde or rho_hat
  std::size_t argmax = 0;   ///< lowest maximizing node
};

/// Reflector pair generated by tight discrete potentials: rho_hat_i = exp(r_i),
/// z_tilde_j = exp(zeta_j). The continuum surfaces are the envelopes
/// z_tilde(x) = max_i K(m_i, x) / rho_hat_i and rho_hat(m) = max_j K(m, x_j) / z_tilde_j.
class ReflectorPair {
 public:
  /// Throws kInfeasiblePotentials if some c_ij - r_i - zeta_j exceeds `tol`,
  /// and kNotTight if a row or column minimum of r_i + zeta_j - c_ij exceeds `tol`.
  ReflectorPair(DualPotentials pot, const OpticalConfig& cfg, std::vector<Direction> source,
                std::vector<TargetPoint> target, double tol = 1e-9);

  const DualPotentials& potentials() const { return pot_; }
  const OpticalConfig& config() const { return cfg_; }
  const std::vector<Direction>& source_nodes() const { return source_; }
  const std::vector<TargetPoint>& target_nodes() const { return target_; }
  std::size_t n_source() const { return source_.size(); }
  std::size_t n_target() const { return target_.size(); }

  double rho_hat(std::size_t i) const { return rho_hat_[i]; }
  double z_tilde(std::size_t j) const { return z_tilde_[j]; }
  double rho(std::size_t i) const { return rho_[i]; }
  double z(std::size_t j) const { return z_[j]; }
  /// Reflector 1 point rho_i m_i.
  Eigen::Vector3d point1(std::size_t i) const;
  /// Reflector 2 point (x_j, z_j).
  Eigen::Vector3d point2(std::size_t j) const;

  EnvelopeValue envelope_z(const TargetPoint& xq) const;
  EnvelopeValue envelope_rho(const Direction& mq) const;

 private:
  DualPotentials pot_;
  OpticalConfig cfg_;
  std::vector<Direction> source_;
  std::vector<TargetPoint> target_;
  std::vector<double> rho_hat_, z_tilde_, rho_, z_;
};

ReflectorPair build_reflector_pair(const DualPotentials& pot, const OpticalConfig& cfg,
                                   const SourceMeasure& src, const TargetMeasure& tgt,
                                   double tol = 1e-9);

/// Height of reflector 2 above xq.
double evaluate_z(const TargetPoint& xq, const ReflectorPair& pair);
/// Radius of reflector 1 along mq.
double evaluate_rho(const Direction& mq, const ReflectorPair& pair);

/// Batched evaluators, parallel over query points.
std::vector<double> evaluate_z(const std::vector<TargetPoint>& xq, const ReflectorPair& pair);
std::vector<double> evaluate_rho(const std::vector<Direction>& mq, const ReflectorPair& pair);

namespace serial {
std::vector<double> evaluate_z(const std::vector<TargetPoint>& xq, const ReflectorPair& pair);
std::vector<double> evaluate_rho(const std::vector<Direction>& mq, const ReflectorPair& pair);
}  // namespace serial

ReflectorMap reflector_map(const ReflectorPair& pair, double tie_tol = 1e-9);

/// Throws kNotSupporting unless |rho_hat_i - K(m_i, x_j) / z_tilde_j| <= tie_tol * rho_hat_i.
SupportingSpheroid supporting_spheroid(std::size_t i, std::size_t j, const ReflectorPair& pair,
                                       double tie_tol = 1e-9);
SupportingParaboloid supporting_paraboloid(std::size_t i, std::size_t j, const ReflectorPair& pair,
                                           double tie_tol = 1e-9);

/// Spheroid of target node j and paraboloid of source node i, with no support check.
SupportingSpheroid spheroid_of_target(std::size_t j, const ReflectorPair& pair);
SupportingParaboloid paraboloid_of_source(std::size_t i, const ReflectorPair& pair);

struct LipschitzReport {
  double K1 = 0.0;  ///< max |grad_x log K| over the apertures
  double K2 = 0.0;  ///< max |grad_m log K| (spherical) over the apertures
  double max_ratio_x = 0.0;  ///< max |zeta(x1) - zeta(x2)| / (K1 |x1 - x2|)
  double max_ratio_m = 0.0;  ///< max |r(m1) - r(m2)| / (K2 d(m1, m2)), geodesic d
  double source_diameter = 0.0;
  double target_diameter = 0.0;
  double r_bound = 0.0;       ///< K2 * diam(D)
  double r_max_dev = 0.0;     ///< max_i |r_i - gauge|
  double zeta_bound = 0.0;    ///< max_j |log K(m*, x_j)| + K1 * diam(T)
  double zeta_max_dev = 0.0;  ///< max_j |zeta_j + gauge|
  std::size_t samples = 0;

  bool bounds_ok() const { return r_max_dev <= r_bound && zeta_max_dev <= zeta_bound; }
};

/// Gradient maxima from an n_probe^4 grid over (mz, phi, x, y) polished by
/// pattern search; ratios from n_samples random point pairs in each aperture.
LipschitzReport lipschitz_report(const ReflectorPair& pair, const SourceAperture& src_ap,
                                 const TargetAperture& tgt_ap, int n_samples,
                                 std::uint64_t seed = 0, int n_probe = 17);

struct Mesh {
  std::vector<Eigen::Vector3d> vertices;
  std::vector<std::array<std::size_t, 3>> faces;
};

struct ReflectorMeshes {
  Mesh reflector1;
  Mesh reflector2;
};

/// Reflector 1 on an n_u x n_v grid over (mz, phi), vertex rho(m) m, face
/// normals pointing away from the origin; the seam is closed for a full
/// azimuth range. Reflector 2 on an n_u x n_v grid over (x, y), vertex
/// (x, y, z(x)), face normals along +z.
ReflectorMeshes export_meshes(const ReflectorPair& pair, const SourceAperture& src_ap,
                              const TargetAperture& tgt_ap, int n_u, int n_v);

namespace serial {
ReflectorMeshes export_meshes(const ReflectorPair& pair, const SourceAperture& src_ap,
                              const TargetAperture& tgt_ap, int n_u, int n_v);
}  // namespace serial

}  // namespace biref
