#pragma once

#include <Eigen/Core>

namespace biref {

/// Unit vector m = (mx, mz) on the sphere of emitted directions.
struct Direction {
  Eigen::Vector2d mx = Eigen::Vector2d::Zero();
  double mz = 0.0;

  /// Builds the direction with axial component `mz` and azimuth `phi`.
  static Direction from_chart(double mz, double phi);
  /// Normalizes an arbitrary nonzero 3-vector.
  static Direction from_vector(const Eigen::Vector3d& v);

  Eigen::Vector3d vec() const { return {mx.x(), mx.y(), mz}; }
  double azimuth() const;
};

/// Point in the output plane.
struct TargetPoint {
  Eigen::Vector2d x = Eigen::Vector2d::Zero();
};

/// Reduced optical path length `ell`, its companion `delta = 1/(2 ell)`, the
/// output-plane offset `d` (plane z = -d) and the additive gauge constant.
struct OpticalConfig {
  double ell = 0.0;
  double delta = 0.0;
  double d = 0.0;
  double gauge = 0.0;

  static OpticalConfig make(double ell, double d, double gauge = 0.0);

  /// Throws kInvalidInput when delta no longer matches ell or a field is out of range.
  void check() const;
};

/// Band of directions mz_min <= mz <= mz_max, phi_min <= phi <= phi_max.
struct SourceAperture {
  double mz_min = -0.5;
  double mz_max = 0.5;
  double phi_min = 0.0;
  double phi_max = 0.0;

  void check() const;
  double phi_span() const { return phi_max - phi_min; }
  bool full_azimuth() const;
  /// Geodesic diameter on the unit sphere (probed, see implementation).
  double geodesic_diameter() const;

  friend bool operator==(const SourceAperture&, const SourceAperture&) = default;
};

/// Axis-aligned rectangle in the output plane.
struct TargetAperture {
  double x_min = -1.0;
  double x_max = 1.0;
  double y_min = -1.0;
  double y_max = 1.0;

  void check() const;
  double max_modulus() const;
  double diameter() const;

  friend bool operator==(const TargetAperture&, const TargetAperture&) = default;
};

/// Kernel values below this are treated as zero; the positivity margin must exceed it.
inline constexpr double kMarginFloor = 1e-12;

/// Numerator (1 - mz) ell^2 - 2 ell <mx, x> + (1 + mz) |x|^2 of the margin,
/// evaluated as a sum of two nonnegative terms so it never cancels.
double margin_numerator(const Direction& m, const TargetPoint& x, double ell);

/// (ell - <mx,x>) / ((ell^2 - |x|^2)(1 + mz)) - 1/(2 ell). Not range checked.
double positivity_margin(const Direction& m, const TargetPoint& x, const OpticalConfig& cfg);

/// K(m, x) without the positivity check; may be <= 0 outside the admissible region.
double kernel_value(const Direction& m, const TargetPoint& x, const OpticalConfig& cfg);

/// K(m, x) = delta (ell - <mx,x>) / ((ell^2 - |x|^2)(1 + mz)) - delta^2.
/// Throws kNonPositiveKernel when the value is not above kMarginFloor * delta.
double cost_kernel(const Direction& m, const TargetPoint& x, const OpticalConfig& cfg);

/// log K(m, x), same error contract as cost_kernel.
double log_cost(const Direction& m, const TargetPoint& x, const OpticalConfig& cfg);

struct LogCostGradients {
  Eigen::Vector2d wrt_x;  ///< gradient of log K in the output plane
  Eigen::Vector3d wrt_m;  ///< spherical gradient, tangent to the sphere at m
};

LogCostGradients log_cost_gradients(const Direction& m, const TargetPoint& x,
                                    const OpticalConfig& cfg);

// Changes of variables between reflector coordinates and the potentials.
double z_tilde(double z, const TargetPoint& x, const OpticalConfig& cfg);
double z_from_tilde(double zt, const TargetPoint& x, const OpticalConfig& cfg);
double rho_hat(double rho, const Direction& m, const OpticalConfig& cfg);
/// Inverse of rho_hat; throws kDomainError when rh <= -delta.
double rho_from_hat(double rh, const Direction& m, const OpticalConfig& cfg);

/// Minimum of the positivity margin over the apertures. The search runs on an
/// n_probe^3 grid over (mz, x, y), including all extremes, with the azimuth
/// set to its worst admissible value, then polishes the best grid points by
/// pattern search. Throws kInfeasibleEll when the minimum is <= kMarginFloor.
double validate_config(const OpticalConfig& cfg, const SourceAperture& src,
                       const TargetAperture& tgt, int n_probe = 33);

/// Same search as validate_config but returns the margin without throwing
/// (requires ell > max |x|).
double probe_margin(const OpticalConfig& cfg, const SourceAperture& src,
                    const TargetAperture& tgt, int n_probe = 33);

/// Smallest ell (to within tol) accepted by validate_config, found by bisection.
/// Throws kNoFeasibleEll above 1e6 times the target aperture diameter.
double minimal_ell(const SourceAperture& src, const TargetAperture& tgt, double tol,
                   int n_probe = 33);

}  // namespace biref
