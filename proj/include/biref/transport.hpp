#pragma once

#include <cstddef>
#include <vector>

#include "biref/discretization.hpp"
#include "biref/errors.hpp"

namespace biref {

/// r_i = log rho_hat(m_i) on source nodes and zeta_j = log z_tilde(x_j) on
/// target nodes, with r_i + zeta_j >= c(i, j).
struct DualPotentials {
  std::vector<double> r;
  std::vector<double> zeta;
  std::size_t gauge_node = 0;

  /// Adds `a` to r and subtracts it from zeta.
  void shift(double a);
  /// Shifts so that r[gauge_node] == value exactly.
  void regauge(double value);
};

struct PlanEntry {
  std::size_t i = 0;
  std::size_t j = 0;
  double mass = 0.0;

  friend bool operator==(const PlanEntry&, const PlanEntry&) = default;
};

/// Sparse coupling; entries sorted by (i, j) with strictly positive mass.
struct TransportPlan {
  std::vector<PlanEntry> entries;

  std::vector<double> row_sums(std::size_t n_source) const;
  std::vector<double> col_sums(std::size_t n_target) const;
};

struct OptimalityCertificate {
  double primal_value = 0.0;  ///< sum pi_ij c_ij
  double dual_value = 0.0;    ///< F(r, zeta)
  double duality_gap = 0.0;   ///< F - C
  /// Worst of the dual, marginal and sign violations below.
  double max_feasibility_violation = 0.0;
  double complementary_slackness_violation = 0.0;
  double dual_violation = 0.0;      ///< max(c_ij - r_i - zeta_j, 0)
  double marginal_violation = 0.0;  ///< max |row/col sum - weight|
  double negative_mass = 0.0;       ///< max(-pi_ij, 0)
  double tolerance = 0.0;

  bool gap_ok() const;
  bool ok() const;
};

struct SolveStats {
  long long pivots = 0;
  long long degenerate_pivots = 0;
  int refinement_rounds = 0;
  std::size_t dropped_source_nodes = 0;
  std::size_t dropped_target_nodes = 0;
};

struct KantorovichSolution {
  TransportPlan plan;
  DualPotentials potentials;
  OptimalityCertificate certificate;
  SolveStats stats;
};

/// Raised when the pivot cap is reached or the final certificate misses the
/// tolerance; carries the last iterate and its certificate.
class StalledError : public Error {
 public:
  StalledError(const std::string& what, KantorovichSolution partial)
      : Error(ErrorCode::kStalled, what), partial_(std::move(partial)) {}
  const KantorovichSolution& partial() const noexcept { return partial_; }

 private:
  KantorovichSolution partial_;
};

struct SolveOptions {
  double tol = 1e-9;
  double gauge = 0.0;
  std::size_t gauge_node = 0;
  long long max_pivots = 0;  ///< 0 picks a cap from the problem size
};

/// Maximizes sum pi_ij c_ij over couplings of the two measures with an exact
/// network simplex and returns a basic optimal plan with matching duals.
/// Zero-weight nodes are removed before pivoting and get c-transform duals.
/// Throws kUnbalanced on mass mismatch (> 1e-12 relative); throws kStalled
/// when the pivot cap is hit or the final certificate misses `tol`.
KantorovichSolution solve_kantorovich(const SourceMeasure& src, const TargetMeasure& tgt,
                                      const CostMatrix& cost, const SolveOptions& options = {});

/// F(r, zeta) = sum r_i w_i + sum zeta_j v_j.
double objective_F(const DualPotentials& pot, const SourceMeasure& src,
                   const TargetMeasure& tgt);

/// C(pi) = sum pi_ij c_ij.
double transport_cost_C(const TransportPlan& plan, const CostMatrix& cost);

struct CTransform {
  std::vector<double> values;
  std::vector<std::size_t> argmax;  ///< lowest index among ties
};

/// r*_i = max_j (c_ij - zeta_j).
CTransform c_transform_source(const std::vector<double>& zeta, const CostMatrix& cost);
/// zeta*_j = max_i (c_ij - r_i).
CTransform c_transform_target(const std::vector<double>& r, const CostMatrix& cost);

namespace serial {
CTransform c_transform_source(const std::vector<double>& zeta, const CostMatrix& cost);
CTransform c_transform_target(const std::vector<double>& r, const CostMatrix& cost);
}  // namespace serial

/// r <- max_j (c_ij - zeta_j), then zeta <- max_i (c_ij - r_i), then re-gauge to
/// `gauge`. The result is a fixed point of both transforms.
DualPotentials tighten_potentials(const DualPotentials& pot, const CostMatrix& cost,
                                  double gauge = 0.0);

/// Max over permutations sigma of w * sum_i c(i, sigma(i)); square, equal weights, n <= 7.
double brute_force_oracle(const SourceMeasure& src, const TargetMeasure& tgt,
                          const CostMatrix& cost);

/// Recomputes every certificate quantity from scratch.
OptimalityCertificate check_certificate(const TransportPlan& plan, const DualPotentials& pot,
                                        const CostMatrix& cost, const SourceMeasure& src,
                                        const TargetMeasure& tgt, double tol);

/// max(c_ij - r_i - zeta_j, 0) over the whole matrix.
double max_dual_violation(const DualPotentials& pot, const CostMatrix& cost);

namespace serial {
double max_dual_violation(const DualPotentials& pot, const CostMatrix& cost);
}  // namespace serial

}  // namespace biref
