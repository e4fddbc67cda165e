#include "biref/discretization.hpp"

#include <cmath>
#include <sstream>

#include "biref/errors.hpp"

namespace biref {

namespace {

double cell_center(double lo, double hi, int n, int k) {
  return lo + (hi - lo) * (k + 0.5) / n;
}

void check_weights(const std::vector<double>& weights, const char* side) {
  bool any_positive = false;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw Error(ErrorCode::kInvalidInput, std::string(side) + " intensity is negative or NaN");
    }
    any_positive = any_positive || w > 0.0;
  }
  if (!any_positive) throw Error(ErrorCode::kZeroMass, std::string(side) + " weights all vanish");
}

std::string cost_error_message(std::size_t i, std::size_t j, const Error& e) {
  std::ostringstream msg;
  msg << "at (i, j) = (" << i << ", " << j << "): " << e.what();
  return msg.str();
}

}  // namespace

double Bitmap::sample(double x, double y) const {
  if (nx <= 0 || ny <= 0) return 0.0;
  if (x < x_min || x > x_max || y < y_min || y > y_max) return 0.0;
  int l = static_cast<int>((x - x_min) / (x_max - x_min) * nx);
  int k = static_cast<int>((y - y_min) / (y_max - y_min) * ny);
  l = std::min(std::max(l, 0), nx - 1);
  k = std::min(std::max(k, 0), ny - 1);
  return values[static_cast<std::size_t>(k) * nx + l];
}

IntensityModel IntensityModel::gaussian(Eigen::Vector2d center, double sigma) {
  IntensityModel m;
  m.kind = Kind::kGaussian;
  m.center = center;
  m.sigma = sigma;
  m.check();
  return m;
}

IntensityModel IntensityModel::ring(Eigen::Vector2d center, double radius, double width) {
  IntensityModel m;
  m.kind = Kind::kRing;
  m.center = center;
  m.radius = radius;
  m.width = width;
  m.check();
  return m;
}

IntensityModel IntensityModel::from_bitmap(Bitmap bitmap) {
  IntensityModel m;
  m.kind = Kind::kBitmap;
  m.bitmap = std::move(bitmap);
  m.check();
  return m;
}

void IntensityModel::check() const {
  switch (kind) {
    case Kind::kUniform:
      return;
    case Kind::kGaussian:
      if (!(sigma > 0.0)) throw Error(ErrorCode::kInvalidInput, "gaussian sigma must be > 0");
      return;
    case Kind::kRing:
      if (!(width > 0.0) || !(radius >= 0.0)) {
        throw Error(ErrorCode::kInvalidInput, "ring needs radius >= 0 and width > 0");
      }
      return;
    case Kind::kBitmap: {
      const Bitmap& b = bitmap;
      if (b.nx < 1 || b.ny < 1 || b.values.size() != static_cast<std::size_t>(b.nx) * b.ny) {
        throw Error(ErrorCode::kInvalidInput, "bitmap dimensions do not match its data");
      }
      if (!(b.x_min < b.x_max && b.y_min < b.y_max)) {
        throw Error(ErrorCode::kInvalidInput, "bitmap extent is empty");
      }
      for (double v : b.values) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
          throw Error(ErrorCode::kInvalidInput, "bitmap values must be finite and >= 0");
        }
      }
      return;
    }
  }
}

double IntensityModel::operator()(double u, double v) const {
  switch (kind) {
    case Kind::kUniform:
      return 1.0;
    case Kind::kGaussian: {
      double r2 = (Eigen::Vector2d(u, v) - center).squaredNorm();
      return std::exp(-r2 / (2.0 * sigma * sigma));
    }
    case Kind::kRing: {
      double r = (Eigen::Vector2d(u, v) - center).norm() - radius;
      return std::exp(-r * r / (2.0 * width * width));
    }
    case Kind::kBitmap:
      return bitmap.sample(u, v);
  }
  return 0.0;
}

const char* to_string(IntensityModel::Kind kind) {
  switch (kind) {
    case IntensityModel::Kind::kUniform: return "uniform";
    case IntensityModel::Kind::kGaussian: return "gaussian";
    case IntensityModel::Kind::kRing: return "ring";
    case IntensityModel::Kind::kBitmap: return "bitmap";
  }
  return "?";
}

const char* to_string(NormalizationPolicy policy) {
  switch (policy) {
    case NormalizationPolicy::kScaleTarget: return "scale_target";
    case NormalizationPolicy::kScaleSource: return "scale_source";
    case NormalizationPolicy::kError: return "error";
  }
  return "?";
}

double stable_sum(const std::vector<double>& values) {
  double sum = 0.0;
  double comp = 0.0;
  for (double v : values) {
    double t = sum + v;
    if (std::abs(sum) >= std::abs(v)) {
      comp += (sum - t) + v;
    } else {
      comp += (v - t) + sum;
    }
    sum = t;
  }
  return sum + comp;
}

SourceMeasure build_source_grid(const SourceAperture& ap, int n_mz, int n_phi,
                                const IntensityModel& model) {
  ap.check();
  model.check();
  if (n_mz < 1 || n_phi < 1) throw Error(ErrorCode::kInvalidInput, "grid resolution must be >= 1");
  const double dmz = (ap.mz_max - ap.mz_min) / n_mz;
  const double dphi = ap.phi_span() / n_phi;

  SourceMeasure out;
  out.nodes.reserve(static_cast<std::size_t>(n_mz) * n_phi);
  out.weights.reserve(out.nodes.capacity());
  for (int k = 0; k < n_mz; ++k) {
    double mz = cell_center(ap.mz_min, ap.mz_max, n_mz, k);
    for (int l = 0; l < n_phi; ++l) {
      double phi = cell_center(ap.phi_min, ap.phi_max, n_phi, l);
      out.nodes.push_back(Direction::from_chart(mz, phi));
      out.weights.push_back(model(phi, mz) * dmz * dphi);
    }
  }
  check_weights(out.weights, "source");
  return out;
}

TargetMeasure build_target_grid(const TargetAperture& ap, int nx, int ny,
                                const IntensityModel& model) {
  ap.check();
  model.check();
  if (nx < 1 || ny < 1) throw Error(ErrorCode::kInvalidInput, "grid resolution must be >= 1");
  const double dx = (ap.x_max - ap.x_min) / nx;
  const double dy = (ap.y_max - ap.y_min) / ny;

  TargetMeasure out;
  out.nodes.reserve(static_cast<std::size_t>(nx) * ny);
  out.weights.reserve(out.nodes.capacity());
  for (int k = 0; k < ny; ++k) {
    double y = cell_center(ap.y_min, ap.y_max, ny, k);
    for (int l = 0; l < nx; ++l) {
      double x = cell_center(ap.x_min, ap.x_max, nx, l);
      out.nodes.push_back(TargetPoint{{x, y}});
      out.weights.push_back(model(x, y) * dx * dy);
    }
  }
  check_weights(out.weights, "target");
  return out;
}

NormalizedMeasures normalize_masses(const SourceMeasure& src, const TargetMeasure& tgt,
                                    NormalizationPolicy policy, double rel_tol) {
  const double ms = src.total_mass();
  const double mt = tgt.total_mass();
  if (!(ms > 0.0) || !(mt > 0.0)) throw Error(ErrorCode::kZeroMass, "both masses must be > 0");

  NormalizedMeasures out{src, tgt, 1.0};
  if (ms == mt) return out;
  switch (policy) {
    case NormalizationPolicy::kScaleTarget:
      out.scale = ms / mt;
      for (double& w : out.target.weights) w *= out.scale;
      break;
    case NormalizationPolicy::kScaleSource:
      out.scale = mt / ms;
      for (double& w : out.source.weights) w *= out.scale;
      break;
    case NormalizationPolicy::kError: {
      double rel = std::abs(ms - mt) / std::max(ms, mt);
      if (rel > rel_tol) {
        std::ostringstream msg;
        msg << "source mass " << ms << " vs target mass " << mt << " (relative " << rel << ")";
        throw Error(ErrorCode::kMassMismatch, msg.str());
      }
      break;
    }
  }
  return out;
}

CostMatrix assemble_cost_matrix(const SourceMeasure& src, const TargetMeasure& tgt,
                                const OpticalConfig& cfg) {
  cfg.check();
  const auto n = static_cast<std::ptrdiff_t>(src.size());
  const std::size_t m = tgt.size();
  CostMatrix c(src.size(), m);
  // Each row records its first failing column; the lowest failing row is reported.
  std::vector<std::ptrdiff_t> bad_col(src.size(), -1);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto row = static_cast<std::size_t>(i);
    for (std::size_t j = 0; j < m; ++j) {
      double k = kernel_value(src.nodes[row], tgt.nodes[j], cfg);
      if (!(k > kMarginFloor * cfg.delta) || !std::isfinite(k)) {
        bad_col[row] = static_cast<std::ptrdiff_t>(j);
        break;
      }
      c(row, j) = std::log(k);
    }
  }

  for (std::size_t i = 0; i < src.size(); ++i) {
    if (bad_col[i] >= 0) {
      auto j = static_cast<std::size_t>(bad_col[i]);
      try {
        cost_kernel(src.nodes[i], tgt.nodes[j], cfg);
      } catch (const Error& e) {
        throw Error(ErrorCode::kNonPositiveKernel, cost_error_message(i, j, e));
      }
    }
  }
  return c;
}

namespace serial {

CostMatrix assemble_cost_matrix(const SourceMeasure& src, const TargetMeasure& tgt,
                                const OpticalConfig& cfg) {
  cfg.check();
  CostMatrix c(src.size(), tgt.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    for (std::size_t j = 0; j < tgt.size(); ++j) {
      try {
        c(i, j) = log_cost(src.nodes[i], tgt.nodes[j], cfg);
      } catch (const Error& e) {
        throw Error(ErrorCode::kNonPositiveKernel, cost_error_message(i, j, e));
      }
    }
  }
  return c;
}

}  // namespace serial

}  // namespace biref
