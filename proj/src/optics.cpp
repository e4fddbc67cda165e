#include "biref/optics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include "biref/errors.hpp"

namespace biref {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Azimuth in [phi_min, phi_max] maximizing cos(phi - theta).
double worst_azimuth(double theta, const SourceAperture& src) {
  if (src.full_azimuth()) return theta;
  double t = src.phi_min + std::fmod(theta - src.phi_min, kTwoPi);
  if (t < src.phi_min) t += kTwoPi;
  if (t <= src.phi_max) return t;
  double to_max = t - src.phi_max;
  double to_min = src.phi_min + kTwoPi - t;
  return to_max <= to_min ? src.phi_max : src.phi_min;
}

double margin_worst_azimuth(double mz, double x, double y, const OpticalConfig& cfg,
                            const SourceAperture& src) {
  double theta = (x == 0.0 && y == 0.0) ? src.phi_min : std::atan2(y, x);
  Direction m = Direction::from_chart(mz, worst_azimuth(theta, src));
  return positivity_margin(m, TargetPoint{{x, y}}, cfg);
}

struct ProbePoint {
  double margin;
  double mz, x, y;
};

double pattern_search(ProbePoint p, double step_mz, double step_x, double step_y,
                      const OpticalConfig& cfg, const SourceAperture& src,
                      const TargetAperture& tgt) {
  const double lo[3] = {src.mz_min, tgt.x_min, tgt.y_min};
  const double hi[3] = {src.mz_max, tgt.x_max, tgt.y_max};
  double pos[3] = {p.mz, p.x, p.y};
  double step[3] = {step_mz, step_x, step_y};
  double best = p.margin;
  for (int iter = 0; iter < 400; ++iter) {
    bool improved = false;
    for (int axis = 0; axis < 3; ++axis) {
      for (double sign : {-1.0, 1.0}) {
        double trial[3] = {pos[0], pos[1], pos[2]};
        trial[axis] = std::clamp(pos[axis] + sign * step[axis], lo[axis], hi[axis]);
        double value = margin_worst_azimuth(trial[0], trial[1], trial[2], cfg, src);
        if (value < best) {
          best = value;
          std::copy(trial, trial + 3, pos);
          improved = true;
        }
      }
    }
    if (!improved) {
      for (double& s : step) s *= 0.5;
      if (step[0] < 1e-15 && step[1] < 1e-15 * cfg.ell && step[2] < 1e-15 * cfg.ell) break;
    }
  }
  return best;
}

}  // namespace

Direction Direction::from_chart(double mz, double phi) {
  double s = std::sqrt(std::max(0.0, 1.0 - mz * mz));
  return Direction{{s * std::cos(phi), s * std::sin(phi)}, mz};
}

Direction Direction::from_vector(const Eigen::Vector3d& v) {
  Eigen::Vector3d u = v.normalized();
  return Direction{{u.x(), u.y()}, u.z()};
}

double Direction::azimuth() const { return std::atan2(mx.y(), mx.x()); }

OpticalConfig OpticalConfig::make(double ell, double d, double gauge) {
  OpticalConfig cfg{ell, 1.0 / (2.0 * ell), d, gauge};
  cfg.check();
  return cfg;
}

void OpticalConfig::check() const {
  if (!(ell > 0.0) || !std::isfinite(ell)) {
    throw Error(ErrorCode::kInvalidInput, "ell must be positive and finite");
  }
  if (!(d > 0.0) || !std::isfinite(d)) {
    throw Error(ErrorCode::kInvalidInput, "d must be positive and finite");
  }
  if (!std::isfinite(gauge)) throw Error(ErrorCode::kInvalidInput, "gauge must be finite");
  if (std::abs(delta * ell - 0.5) > 1e-15) {
    throw Error(ErrorCode::kInvalidInput, "delta is not 1/(2 ell)");
  }
}

void SourceAperture::check() const {
  if (!(-1.0 < mz_min && mz_min < mz_max && mz_max < 1.0)) {
    throw Error(ErrorCode::kInvalidInput, "source band needs -1 < mz_min < mz_max < 1");
  }
  double span = phi_span();
  if (!(span > 0.0 && span <= kTwoPi + 1e-12)) {
    throw Error(ErrorCode::kInvalidInput, "azimuth span must lie in (0, 2 pi]");
  }
}

bool SourceAperture::full_azimuth() const { return phi_span() >= kTwoPi - 1e-12; }

double SourceAperture::geodesic_diameter() const {
  // m1.m2 = s1 s2 cos(dphi) + mz1 mz2 is smallest at the largest reachable dphi.
  double cos_dphi = std::cos(std::min(phi_span(), std::numbers::pi));
  constexpr int n = 257;
  double min_dot = 1.0;
  for (int a = 0; a < n; ++a) {
    double mz1 = mz_min + (mz_max - mz_min) * a / (n - 1);
    double s1 = std::sqrt(1.0 - mz1 * mz1);
    for (int b = 0; b < n; ++b) {
      double mz2 = mz_min + (mz_max - mz_min) * b / (n - 1);
      double s2 = std::sqrt(1.0 - mz2 * mz2);
      min_dot = std::min(min_dot, s1 * s2 * cos_dphi + mz1 * mz2);
    }
  }
  return std::acos(std::clamp(min_dot, -1.0, 1.0));
}

void TargetAperture::check() const {
  if (!(x_min < x_max && y_min < y_max)) {
    throw Error(ErrorCode::kInvalidInput, "target aperture must have nonempty interior");
  }
}

double TargetAperture::max_modulus() const {
  double ax = std::max(std::abs(x_min), std::abs(x_max));
  double ay = std::max(std::abs(y_min), std::abs(y_max));
  return std::hypot(ax, ay);
}

double TargetAperture::diameter() const { return std::hypot(x_max - x_min, y_max - y_min); }

double margin_numerator(const Direction& m, const TargetPoint& x, double ell) {
  double t = x.x.norm();
  double s = m.mx.norm();
  double square = std::sqrt(1.0 - m.mz) * ell - std::sqrt(1.0 + m.mz) * t;
  double alignment = std::max(0.0, s * t - m.mx.dot(x.x));
  return square * square + 2.0 * ell * alignment;
}

double positivity_margin(const Direction& m, const TargetPoint& x, const OpticalConfig& cfg) {
  double ell = cfg.ell;
  double denom = 2.0 * ell * (ell * ell - x.x.squaredNorm()) * (1.0 + m.mz);
  return margin_numerator(m, x, ell) / denom;
}

double kernel_value(const Direction& m, const TargetPoint& x, const OpticalConfig& cfg) {
  return cfg.delta * positivity_margin(m, x, cfg);
}

double cost_kernel(const Direction& m, const TargetPoint& x, const OpticalConfig& cfg) {
  double k = kernel_value(m, x, cfg);
  if (!(k > kMarginFloor * cfg.delta) || !std::isfinite(k)) {
    std::ostringstream msg;
    msg << "K(m, x) = " << k << " at m = (" << m.mx.x() << ", " << m.mx.y() << ", " << m.mz
        << "), x = (" << x.x.x() << ", " << x.x.y() << "); increase ell";
    throw Error(ErrorCode::kNonPositiveKernel, msg.str());
  }
  return k;
}

double log_cost(const Direction& m, const TargetPoint& x, const OpticalConfig& cfg) {
  return std::log(cost_kernel(m, x, cfg));
}

LogCostGradients log_cost_gradients(const Direction& m, const TargetPoint& x,
                                    const OpticalConfig& cfg) {
  const double ell = cfg.ell;
  const double n = margin_numerator(m, x, ell);
  const double q = ell * ell - x.x.squaredNorm();

  LogCostGradients g;
  g.wrt_x = (-2.0 * ell * m.mx + 2.0 * (1.0 + m.mz) * x.x) / n + 2.0 * x.x / q;

  // Euclidean gradient of the extension to R^3, then projected onto the tangent plane.
  Eigen::Vector3d e;
  e.head<2>() = -2.0 * ell * x.x / n;
  e.z() = (x.x.squaredNorm() - ell * ell) / n - 1.0 / (1.0 + m.mz);
  Eigen::Vector3d mv = m.vec();
  g.wrt_m = e - e.dot(mv) * mv;
  return g;
}

double z_tilde(double z, const TargetPoint& x, const OpticalConfig& cfg) {
  return cfg.delta - z / (cfg.ell * cfg.ell - x.x.squaredNorm());
}

double z_from_tilde(double zt, const TargetPoint& x, const OpticalConfig& cfg) {
  return (cfg.delta - zt) * (cfg.ell * cfg.ell - x.x.squaredNorm());
}

double rho_hat(double rho, const Direction& m, const OpticalConfig& cfg) {
  return -cfg.delta + 1.0 / (2.0 * rho * (m.mz + 1.0));
}

double rho_from_hat(double rh, const Direction& m, const OpticalConfig& cfg) {
  if (!(rh > -cfg.delta)) {
    throw Error(ErrorCode::kDomainError, "rho_hat must exceed -delta");
  }
  return 1.0 / (2.0 * (m.mz + 1.0) * (rh + cfg.delta));
}

double probe_margin(const OpticalConfig& cfg, const SourceAperture& src,
                    const TargetAperture& tgt, int n_probe) {
  cfg.check();
  src.check();
  tgt.check();
  if (n_probe < 2) throw Error(ErrorCode::kInvalidInput, "n_probe must be >= 2");
  if (!(tgt.max_modulus() < cfg.ell)) {
    throw Error(ErrorCode::kInfeasibleEll, "ell must exceed the largest |x| on the target");
  }

  auto lerp = [n_probe](double a, double b, int k) {
    return k == n_probe - 1 ? b : a + (b - a) * k / (n_probe - 1);
  };

  std::vector<ProbePoint> grid;
  grid.reserve(static_cast<size_t>(n_probe) * n_probe * n_probe);
  for (int a = 0; a < n_probe; ++a) {
    double mz = lerp(src.mz_min, src.mz_max, a);
    for (int b = 0; b < n_probe; ++b) {
      double x = lerp(tgt.x_min, tgt.x_max, b);
      for (int c = 0; c < n_probe; ++c) {
        double y = lerp(tgt.y_min, tgt.y_max, c);
        grid.push_back({margin_worst_azimuth(mz, x, y, cfg, src), mz, x, y});
      }
    }
  }

  constexpr size_t kPolished = 8;
  size_t keep = std::min(kPolished, grid.size());
  std::partial_sort(grid.begin(), grid.begin() + static_cast<std::ptrdiff_t>(keep), grid.end(),
                    [](const ProbePoint& l, const ProbePoint& r) { return l.margin < r.margin; });

  double best = grid.front().margin;
  double step_mz = (src.mz_max - src.mz_min) / (n_probe - 1);
  double step_x = (tgt.x_max - tgt.x_min) / (n_probe - 1);
  double step_y = (tgt.y_max - tgt.y_min) / (n_probe - 1);
  for (size_t k = 0; k < keep; ++k) {
    best = std::min(best, pattern_search(grid[k], step_mz, step_x, step_y, cfg, src, tgt));
  }
  return best;
}

double validate_config(const OpticalConfig& cfg, const SourceAperture& src,
                       const TargetAperture& tgt, int n_probe) {
  double margin = probe_margin(cfg, src, tgt, n_probe);
  if (!(margin > kMarginFloor)) {
    std::ostringstream msg;
    msg << "positivity margin " << margin << " <= " << kMarginFloor << " at ell = " << cfg.ell
        << "; increase ell";
    throw Error(ErrorCode::kInfeasibleEll, msg.str());
  }
  return margin;
}

double minimal_ell(const SourceAperture& src, const TargetAperture& tgt, double tol,
                   int n_probe) {
  src.check();
  tgt.check();
  if (!(tol > 0.0)) throw Error(ErrorCode::kInvalidInput, "tol must be positive");

  auto feasible = [&](double ell) {
    try {
      validate_config(OpticalConfig::make(ell, 1.0), src, tgt, n_probe);
      return true;
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kInfeasibleEll) return false;
      throw;
    }
  };

  const double cap = 1e6 * tgt.diameter();
  double lo = tgt.max_modulus();
  double hi = std::max(2.0 * lo, tol);
  while (!feasible(hi)) {
    lo = hi;
    hi *= 2.0;
    if (hi > cap) {
      throw Error(ErrorCode::kNoFeasibleEll, "no feasible ell below 1e6 x aperture diameter");
    }
  }
  while (hi - lo > tol) {
    double mid = 0.5 * (lo + hi);
    (feasible(mid) ? hi : lo) = mid;
  }
  if (!feasible(hi)) {
    throw Error(ErrorCode::kNoFeasibleEll, "bisection result failed re-validation");
  }
  return hi;
}

}  // namespace biref
