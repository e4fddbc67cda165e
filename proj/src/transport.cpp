#include "biref/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "network_simplex.hpp"

namespace biref {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

class CompensatedSum {
 public:
  void add(double v) {
    double t = sum_ + v;
    comp_ += std::abs(sum_) >= std::abs(v) ? (sum_ - t) + v : (v - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

void check_shapes(const DualPotentials& pot, const CostMatrix& cost) {
  if (pot.r.size() != cost.rows || pot.zeta.size() != cost.cols) {
    throw Error(ErrorCode::kInvalidInput, "potential sizes do not match the cost matrix");
  }
}

}  // namespace

void DualPotentials::shift(double a) {
  for (double& v : r) v += a;
  for (double& v : zeta) v -= a;
}

void DualPotentials::regauge(double value) {
  if (gauge_node >= r.size()) throw Error(ErrorCode::kInvalidInput, "gauge node out of range");
  const double a = value - r[gauge_node];
  shift(a);
  r[gauge_node] = value;
}

std::vector<double> TransportPlan::row_sums(std::size_t n_source) const {
  std::vector<CompensatedSum> acc(n_source);
  for (const PlanEntry& e : entries) acc.at(e.i).add(e.mass);
  std::vector<double> out(n_source);
  for (std::size_t i = 0; i < n_source; ++i) out[i] = acc[i].value();
  return out;
}

std::vector<double> TransportPlan::col_sums(std::size_t n_target) const {
  std::vector<CompensatedSum> acc(n_target);
  for (const PlanEntry& e : entries) acc.at(e.j).add(e.mass);
  std::vector<double> out(n_target);
  for (std::size_t j = 0; j < n_target; ++j) out[j] = acc[j].value();
  return out;
}

bool OptimalityCertificate::gap_ok() const {
  return std::abs(duality_gap) <= tolerance * (1.0 + std::abs(primal_value));
}

bool OptimalityCertificate::ok() const {
  return gap_ok() && max_feasibility_violation <= tolerance &&
         complementary_slackness_violation <= tolerance;
}

double objective_F(const DualPotentials& pot, const SourceMeasure& src,
                   const TargetMeasure& tgt) {
  if (pot.r.size() != src.size() || pot.zeta.size() != tgt.size()) {
    throw Error(ErrorCode::kInvalidInput, "potential sizes do not match the measures");
  }
  CompensatedSum f;
  for (std::size_t i = 0; i < src.size(); ++i) f.add(pot.r[i] * src.weights[i]);
  for (std::size_t j = 0; j < tgt.size(); ++j) f.add(pot.zeta[j] * tgt.weights[j]);
  return f.value();
}

double transport_cost_C(const TransportPlan& plan, const CostMatrix& cost) {
  CompensatedSum c;
  for (const PlanEntry& e : plan.entries) c.add(e.mass * cost(e.i, e.j));
  return c.value();
}

CTransform c_transform_source(const std::vector<double>& zeta, const CostMatrix& cost) {
  if (zeta.size() != cost.cols) throw Error(ErrorCode::kInvalidInput, "zeta size mismatch");
  CTransform out{std::vector<double>(cost.rows), std::vector<std::size_t>(cost.rows)};
  const auto n = static_cast<std::ptrdiff_t>(cost.rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < n; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const double* row = cost.row(i);
    double best = kNegInf;
    std::size_t arg = 0;
    for (std::size_t j = 0; j < cost.cols; ++j) {
      double v = row[j] - zeta[j];
      if (v > best) {
        best = v;
        arg = j;
      }
    }
    out.values[i] = best;
    out.argmax[i] = arg;
  }
  return out;
}

CTransform c_transform_target(const std::vector<double>& r, const CostMatrix& cost) {
  if (r.size() != cost.rows) throw Error(ErrorCode::kInvalidInput, "r size mismatch");
  CTransform out{std::vector<double>(cost.cols, kNegInf), std::vector<std::size_t>(cost.cols, 0)};
  // Columns are split into contiguous chunks; each chunk scans rows in order so
  // the first maximizer (lowest i) is kept exactly as in the serial sweep.
  constexpr std::ptrdiff_t kChunk = 64;
  const auto m = static_cast<std::ptrdiff_t>(cost.cols);
  const std::ptrdiff_t chunks = (m + kChunk - 1) / kChunk;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < chunks; ++c) {
    const auto j0 = static_cast<std::size_t>(c * kChunk);
    const std::size_t j1 = std::min(cost.cols, j0 + kChunk);
    for (std::size_t i = 0; i < cost.rows; ++i) {
      const double* row = cost.row(i);
      const double ri = r[i];
      for (std::size_t j = j0; j < j1; ++j) {
        double v = row[j] - ri;
        if (v > out.values[j]) {
          out.values[j] = v;
          out.argmax[j] = i;
        }
      }
    }
  }
  return out;
}

namespace serial {

CTransform c_transform_source(const std::vector<double>& zeta, const CostMatrix& cost) {
  if (zeta.size() != cost.cols) throw Error(ErrorCode::kInvalidInput, "zeta size mismatch");
  CTransform out{std::vector<double>(cost.rows), std::vector<std::size_t>(cost.rows)};
  for (std::size_t i = 0; i < cost.rows; ++i) {
    double best = kNegInf;
    std::size_t arg = 0;
    for (std::size_t j = 0; j < cost.cols; ++j) {
      double v = cost(i, j) - zeta[j];
      if (v > best) {
        best = v;
        arg = j;
      }
    }
    out.values[i] = best;
    out.argmax[i] = arg;
  }
  return out;
}

CTransform c_transform_target(const std::vector<double>& r, const CostMatrix& cost) {
  if (r.size() != cost.rows) throw Error(ErrorCode::kInvalidInput, "r size mismatch");
  CTransform out{std::vector<double>(cost.cols), std::vector<std::size_t>(cost.cols)};
  for (std::size_t j = 0; j < cost.cols; ++j) {
    double best = kNegInf;
    std::size_t arg = 0;
    for (std::size_t i = 0; i < cost.rows; ++i) {
      double v = cost(i, j) - r[i];
      if (v > best) {
        best = v;
        arg = i;
      }
    }
    out.values[j] = best;
    out.argmax[j] = arg;
  }
  return out;
}

double max_dual_violation(const DualPotentials& pot, const CostMatrix& cost) {
  check_shapes(pot, cost);
  double worst = 0.0;
  for (std::size_t i = 0; i < cost.rows; ++i) {
    for (std::size_t j = 0; j < cost.cols; ++j) {
      worst = std::max(worst, cost(i, j) - pot.r[i] - pot.zeta[j]);
    }
  }
  return worst;
}

}  // namespace serial

double max_dual_violation(const DualPotentials& pot, const CostMatrix& cost) {
  check_shapes(pot, cost);
  std::vector<double> per_row(cost.rows, 0.0);
  const auto n = static_cast<std::ptrdiff_t>(cost.rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < n; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const double* row = cost.row(i);
    double worst = 0.0;
    for (std::size_t j = 0; j < cost.cols; ++j) {
      worst = std::max(worst, row[j] - pot.r[i] - pot.zeta[j]);
    }
    per_row[i] = worst;
  }
  double worst = 0.0;
  for (double v : per_row) worst = std::max(worst, v);
  return worst;
}

DualPotentials tighten_potentials(const DualPotentials& pot, const CostMatrix& cost,
                                  double gauge) {
  check_shapes(pot, cost);
  DualPotentials out;
  out.gauge_node = pot.gauge_node;
  out.r = c_transform_source(pot.zeta, cost).values;
  out.zeta = c_transform_target(out.r, cost).values;
  out.regauge(gauge);
  return out;
}

double brute_force_oracle(const SourceMeasure& src, const TargetMeasure& tgt,
                          const CostMatrix& cost) {
  const std::size_t n = src.size();
  if (n != tgt.size() || cost.rows != n || cost.cols != n) {
    throw Error(ErrorCode::kInvalidInput, "brute force needs a square instance");
  }
  if (n > 7) throw Error(ErrorCode::kTooLarge, "brute force limited to n <= 7");
  if (n == 0) return 0.0;
  const double w = src.weights.front();
  auto same = [w](double v) { return std::abs(v - w) <= 1e-12 * std::abs(w); };
  if (!std::all_of(src.weights.begin(), src.weights.end(), same) ||
      !std::all_of(tgt.weights.begin(), tgt.weights.end(), same)) {
    throw Error(ErrorCode::kUnequalWeights, "brute force needs equal weights on both sides");
  }

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  double best = kNegInf;
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += cost(i, perm[i]);
    best = std::max(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return w * best;
}

OptimalityCertificate check_certificate(const TransportPlan& plan, const DualPotentials& pot,
                                        const CostMatrix& cost, const SourceMeasure& src,
                                        const TargetMeasure& tgt, double tol) {
  check_shapes(pot, cost);
  if (cost.rows != src.size() || cost.cols != tgt.size()) {
    throw Error(ErrorCode::kInvalidInput, "cost matrix does not match the measures");
  }
  OptimalityCertificate cert;
  cert.tolerance = tol;
  for (const PlanEntry& e : plan.entries) {
    if (e.i >= cost.rows || e.j >= cost.cols) {
      throw Error(ErrorCode::kInvalidInput, "plan entry out of range");
    }
    cert.negative_mass = std::max(cert.negative_mass, -e.mass);
    if (e.mass > 0.0) {
      double residual = std::abs(pot.r[e.i] + pot.zeta[e.j] - cost(e.i, e.j));
      cert.complementary_slackness_violation =
          std::max(cert.complementary_slackness_violation, residual);
    }
  }
  auto rows = plan.row_sums(src.size());
  auto cols = plan.col_sums(tgt.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    cert.marginal_violation = std::max(cert.marginal_violation, std::abs(rows[i] - src.weights[i]));
  }
  for (std::size_t j = 0; j < cols.size(); ++j) {
    cert.marginal_violation = std::max(cert.marginal_violation, std::abs(cols[j] - tgt.weights[j]));
  }
  cert.dual_violation = max_dual_violation(pot, cost);
  cert.max_feasibility_violation =
      std::max({cert.dual_violation, cert.marginal_violation, cert.negative_mass});
  cert.primal_value = transport_cost_C(plan, cost);
  cert.dual_value = objective_F(pot, src, tgt);
  cert.duality_gap = cert.dual_value - cert.primal_value;
  return cert;
}

KantorovichSolution solve_kantorovich(const SourceMeasure& src, const TargetMeasure& tgt,
                                      const CostMatrix& cost, const SolveOptions& options) {
  if (cost.rows != src.size() || cost.cols != tgt.size()) {
    throw Error(ErrorCode::kInvalidInput, "cost matrix does not match the measures");
  }
  for (double v : cost.values) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kInvalidInput, "cost matrix has a non-finite entry");
  }
  const double ms = src.total_mass();
  const double mt = tgt.total_mass();
  if (!(ms > 0.0) || !(mt > 0.0)) throw Error(ErrorCode::kZeroMass, "both masses must be > 0");
  if (std::abs(ms - mt) > 1e-12 * std::max(ms, mt)) {
    std::ostringstream msg;
    msg << "source mass " << ms << " vs target mass " << mt;
    throw Error(ErrorCode::kUnbalanced, msg.str());
  }

  std::vector<std::size_t> rows;
  std::vector<std::size_t> cols;
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src.weights[i] > 0.0) rows.push_back(i);
  }
  for (std::size_t j = 0; j < tgt.size(); ++j) {
    if (tgt.weights[j] > 0.0) cols.push_back(j);
  }

  double cmax = kNegInf;
  for (std::size_t i : rows) {
    for (std::size_t j : cols) cmax = std::max(cmax, cost(i, j));
  }
  std::vector<double> supply(rows.size());
  std::vector<double> demand(cols.size());
  std::vector<double> reduced(rows.size() * cols.size());
  for (std::size_t a = 0; a < rows.size(); ++a) {
    supply[a] = src.weights[rows[a]];
    for (std::size_t b = 0; b < cols.size(); ++b) {
      reduced[a * cols.size() + b] = cmax - cost(rows[a], cols[b]);
    }
  }
  for (std::size_t b = 0; b < cols.size(); ++b) demand[b] = tgt.weights[cols[b]];

  detail::NetworkSimplex simplex(std::move(supply), std::move(demand), std::move(reduced));
  const long long cap = options.max_pivots > 0
                            ? options.max_pivots
                            : 10000 + 1000LL * static_cast<long long>(rows.size() + cols.size());
  const auto status = simplex.run(cap);

  KantorovichSolution sol;
  sol.stats.pivots = simplex.pivots();
  sol.stats.degenerate_pivots = simplex.degenerate_pivots();
  sol.stats.refinement_rounds = simplex.refinement_rounds();
  sol.stats.dropped_source_nodes = src.size() - rows.size();
  sol.stats.dropped_target_nodes = tgt.size() - cols.size();

  for (const auto& arc : simplex.tree_arcs()) {
    if (arc.flow > 0.0) sol.plan.entries.push_back({rows[arc.i], cols[arc.j], arc.flow});
  }

  // Reduced cost (cmax - c_ij) + pi_i - pi_j >= 0  <=>  (cmax + pi_i) + (-pi_j) >= c_ij.
  DualPotentials& pot = sol.potentials;
  pot.gauge_node = options.gauge_node;
  pot.r.assign(src.size(), 0.0);
  pot.zeta.assign(tgt.size(), 0.0);
  for (std::size_t a = 0; a < rows.size(); ++a) pot.r[rows[a]] = cmax + simplex.source_potential(a);
  for (std::size_t b = 0; b < cols.size(); ++b) pot.zeta[cols[b]] = -simplex.target_potential(b);

  // Dropped nodes carry no mass; give them the tightest feasible values.
  std::vector<char> kept_row(src.size(), 0);
  for (std::size_t i : rows) kept_row[i] = 1;
  std::vector<char> kept_col(tgt.size(), 0);
  for (std::size_t j : cols) kept_col[j] = 1;
  for (std::size_t j = 0; j < tgt.size(); ++j) {
    if (kept_col[j]) continue;
    double best = kNegInf;
    for (std::size_t i : rows) best = std::max(best, cost(i, j) - pot.r[i]);
    pot.zeta[j] = best;
  }
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (kept_row[i]) continue;
    double best = kNegInf;
    for (std::size_t j = 0; j < tgt.size(); ++j) best = std::max(best, cost(i, j) - pot.zeta[j]);
    pot.r[i] = best;
  }
  pot.regauge(options.gauge);

  sol.certificate = check_certificate(sol.plan, pot, cost, src, tgt, options.tol);
  if (status == detail::NetworkSimplex::Status::kPivotLimit) {
    throw StalledError("pivot limit reached after " + std::to_string(sol.stats.pivots) + " pivots",
                       sol);
  }
  if (!sol.certificate.ok()) {
    std::ostringstream msg;
    msg << "certificate above tolerance: gap " << sol.certificate.duality_gap << ", feasibility "
        << sol.certificate.max_feasibility_violation << ", slackness "
        << sol.certificate.complementary_slackness_violation;
    throw StalledError(msg.str(), sol);
  }
  return sol;
}

}  // namespace biref
