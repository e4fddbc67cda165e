#pragma once

// Shared fixtures for the test binaries: the canonical E0 geometry, seeded
// generators and a scratch directory.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>

#include <Eigen/Geometry>

#include "biref/discretization.hpp"
#include "biref/optics.hpp"
#include "biref/reflector.hpp"
#include "biref/transport.hpp"

namespace biref::test {

inline constexpr double kPi = std::numbers::pi;

inline OpticalConfig e0_config() { return OpticalConfig::make(8.0, 3.0); }
inline SourceAperture e0_source() { return {-0.5, 0.5, 0.0, 2.0 * kPi}; }
inline TargetAperture e0_target() { return {-1.0, 1.0, -1.0, 1.0}; }

struct Solved {
  OpticalConfig cfg;
  SourceAperture sa;
  TargetAperture ta;
  NormalizedMeasures measures;
  CostMatrix cost;
  KantorovichSolution sol;
  DualPotentials tight;
};

/// E0 at n x n source cells and n x n target cells, solved and tightened.
inline Solved solve_e0(int n, double gauge = 0.0) {
  Solved s{e0_config(), e0_source(), e0_target(), {}, {}, {}, {}};
  auto src = build_source_grid(s.sa, n, n, IntensityModel::uniform());
  auto tgt = build_target_grid(s.ta, n, n, IntensityModel::gaussian({0.0, 0.0}, 0.4));
  s.measures = normalize_masses(src, tgt, NormalizationPolicy::kScaleTarget);
  s.cost = assemble_cost_matrix(s.measures.source, s.measures.target, s.cfg);
  SolveOptions opt;
  opt.gauge = gauge;
  s.sol = solve_kantorovich(s.measures.source, s.measures.target, s.cost, opt);
  s.tight = tighten_potentials(s.sol.potentials, s.cost, gauge);
  return s;
}

inline ReflectorPair pair_of(const Solved& s) {
  return build_reflector_pair(s.tight, s.cfg, s.measures.source, s.measures.target);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(gen_); }
  Direction direction(const SourceAperture& ap) {
    return Direction::from_chart(uniform(ap.mz_min, ap.mz_max), uniform(ap.phi_min, ap.phi_max));
  }
  TargetPoint point(const TargetAperture& ap) {
    return TargetPoint{{uniform(ap.x_min, ap.x_max), uniform(ap.y_min, ap.y_max)}};
  }
  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

/// n random E0 nodes on each side with equal weights 1/n.
struct RandomInstance {
  SourceMeasure src;
  TargetMeasure tgt;
  CostMatrix cost;
};

inline RandomInstance random_e0_instance(std::size_t n, Rng& rng) {
  RandomInstance in;
  for (std::size_t k = 0; k < n; ++k) {
    in.src.nodes.push_back(rng.direction(e0_source()));
    in.src.weights.push_back(1.0 / static_cast<double>(n));
    in.tgt.nodes.push_back(rng.point(e0_target()));
    in.tgt.weights.push_back(1.0 / static_cast<double>(n));
  }
  in.cost = assemble_cost_matrix(in.src, in.tgt, e0_config());
  return in;
}

/// Abstract measures (node geometry unused) for pure LP tests.
inline SourceMeasure abstract_source(std::vector<double> w) {
  SourceMeasure m;
  m.weights = std::move(w);
  m.nodes.assign(m.weights.size(), Direction::from_chart(0.0, 0.0));
  return m;
}

inline TargetMeasure abstract_target(std::vector<double> w) {
  TargetMeasure m;
  m.weights = std::move(w);
  m.nodes.assign(m.weights.size(), TargetPoint{});
  return m;
}

inline CostMatrix matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  CostMatrix c(rows, cols);
  c.values = std::move(values);
  return c;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("biref_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace biref::test
