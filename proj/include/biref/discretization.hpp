#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "biref/optics.hpp"

namespace biref {

/// Sampled nonnegative values on a regular grid over [x_min,x_max]x[y_min,y_max];
/// row k holds y-index k (y_min first), column l holds x-index l.
struct Bitmap {
  int nx = 0;
  int ny = 0;
  double x_min = 0.0, x_max = 1.0, y_min = 0.0, y_max = 1.0;
  std::vector<double> values;  // row-major, ny * nx

  /// Nearest-cell lookup; zero outside the sampled rectangle.
  double sample(double x, double y) const;
};

/// Intensity profile evaluated in a 2D chart: (x, y) on the target plane and
/// (phi, mz) on the source band.
struct IntensityModel {
  enum class Kind { kUniform, kGaussian, kRing, kBitmap };

  Kind kind = Kind::kUniform;
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  double sigma = 1.0;   // gaussian
  double radius = 0.0;  // ring
  double width = 1.0;   // ring
  Bitmap bitmap;

  static IntensityModel uniform() { return {}; }
  static IntensityModel gaussian(Eigen::Vector2d center, double sigma);
  static IntensityModel ring(Eigen::Vector2d center, double radius, double width);
  static IntensityModel from_bitmap(Bitmap bitmap);

  double operator()(double u, double v) const;
  void check() const;
};

const char* to_string(IntensityModel::Kind kind);

template <typename Node>
struct DiscreteMeasure {
  std::vector<Node> nodes;
  std::vector<double> weights;

  std::size_t size() const { return nodes.size(); }
  double total_mass() const;
};

using SourceMeasure = DiscreteMeasure<Direction>;
using TargetMeasure = DiscreteMeasure<TargetPoint>;

/// Compensated (Neumaier) summation.
double stable_sum(const std::vector<double>& values);

template <typename Node>
double DiscreteMeasure<Node>::total_mass() const {
  return stable_sum(weights);
}

/// Dense row-major matrix c(i, j) = log K(m_i, x_j).
struct CostMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  CostMatrix() = default;
  CostMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0) {}

  double operator()(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
  double& operator()(std::size_t i, std::size_t j) { return values[i * cols + j]; }
  const double* row(std::size_t i) const { return values.data() + i * cols; }
};

/// Cell-center nodes of the (mz, phi) product grid, node index k * n_phi + l for
/// mz-cell k and phi-cell l. Weights I(phi, mz) * dmz * dphi, which is exact
/// spherical area for constant I. Throws kZeroMass if every weight vanishes.
SourceMeasure build_source_grid(const SourceAperture& ap, int n_mz, int n_phi,
                                const IntensityModel& model);

/// Cell-center nodes of the (x, y) grid, index k * nx + l for y-cell k, x-cell l.
TargetMeasure build_target_grid(const TargetAperture& ap, int nx, int ny,
                                const IntensityModel& model);

enum class NormalizationPolicy { kScaleTarget, kScaleSource, kError };

const char* to_string(NormalizationPolicy policy);

struct NormalizedMeasures {
  SourceMeasure source;
  TargetMeasure target;
  double scale = 1.0;  ///< factor applied to the scaled side (1 when untouched)
};

/// Equalizes total masses per policy; kError throws kMassMismatch when the
/// relative mismatch exceeds rel_tol and otherwise leaves the inputs unchanged.
NormalizedMeasures normalize_masses(const SourceMeasure& src, const TargetMeasure& tgt,
                                    NormalizationPolicy policy, double rel_tol = 1e-12);

/// Assembles c(i, j) = log K(m_i, x_j), rows in parallel. Throws
/// kNonPositiveKernel naming the first offending (i, j) in row-major order.
CostMatrix assemble_cost_matrix(const SourceMeasure& src, const TargetMeasure& tgt,
                                const OpticalConfig& cfg);

namespace serial {
/// Single-threaded reference for assemble_cost_matrix.
CostMatrix assemble_cost_matrix(const SourceMeasure& src, const TargetMeasure& tgt,
                                const OpticalConfig& cfg);
}  // namespace serial

}  // namespace biref
