#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "biref/errors.hpp"
#include "biref/parallel.hpp"
#include "biref/transport.hpp"
#include "support.hpp"

using namespace biref;
using test::abstract_source;
using test::abstract_target;
using test::matrix;

namespace {

void check_plan_is_coupling(const KantorovichSolution& sol, const SourceMeasure& src,
                            const TargetMeasure& tgt) {
  auto rows = sol.plan.row_sums(src.size());
  auto cols = sol.plan.col_sums(tgt.size());
  for (std::size_t i = 0; i < src.size(); ++i) CHECK(std::abs(rows[i] - src.weights[i]) < 1e-12);
  for (std::size_t j = 0; j < tgt.size(); ++j) CHECK(std::abs(cols[j] - tgt.weights[j]) < 1e-12);
  for (std::size_t k = 1; k < sol.plan.entries.size(); ++k) {
    const auto& a = sol.plan.entries[k - 1];
    const auto& b = sol.plan.entries[k];
    CHECK((a.i < b.i || (a.i == b.i && a.j < b.j)));
  }
  for (const auto& e : sol.plan.entries) CHECK(e.mass > 0.0);
}

}  // namespace

TEST_CASE("2x2 fixture picks the diagonal") {
  auto src = abstract_source({0.5, 0.5});
  auto tgt = abstract_target({0.5, 0.5});
  auto cost = matrix(2, 2, {1.0, 0.0, 0.0, 1.0});
  auto sol = solve_kantorovich(src, tgt, cost);
  REQUIRE(sol.plan.entries.size() == 2);
  CHECK(sol.plan.entries[0] == PlanEntry{0, 0, 0.5});
  CHECK(sol.plan.entries[1] == PlanEntry{1, 1, 0.5});
  CHECK(sol.certificate.primal_value == doctest::Approx(1.0));
  CHECK(sol.certificate.ok());
  CHECK(sol.potentials.r[0] == 0.0);
}

TEST_CASE("unequal weights: 2x3 fixture") {
  // Row 0 prefers column 2, row 1 prefers column 0; column 1 takes the rest.
  auto src = abstract_source({0.6, 0.4});
  auto tgt = abstract_target({0.3, 0.3, 0.4});
  auto cost = matrix(2, 3, {0.0, 0.5, 1.0, 1.0, 0.5, 0.0});
  auto sol = solve_kantorovich(src, tgt, cost);
  check_plan_is_coupling(sol, src, tgt);
  // Optimal value: 0.4 * 1 + 0.2 * 0.5 + 0.3 * 1 + 0.1 * 0.5 = 0.85.
  CHECK(sol.certificate.primal_value == doctest::Approx(0.85).epsilon(1e-14));
  CHECK(sol.certificate.ok());
}

TEST_CASE("random equal-weight instances match the permutation oracle") {
  test::Rng rng(101);
  for (int trial = 0; trial < 300; ++trial) {
    std::size_t n = static_cast<std::size_t>(rng.integer(2, 6));
    auto in = test::random_e0_instance(n, rng);
    auto sol = solve_kantorovich(in.src, in.tgt, in.cost);
    double oracle = brute_force_oracle(in.src, in.tgt, in.cost);
    CHECK(std::abs(sol.certificate.primal_value - oracle) <= 1e-12 * (1.0 + std::abs(oracle)));
    CHECK(sol.certificate.ok());
    check_plan_is_coupling(sol, in.src, in.tgt);
  }
}

TEST_CASE("brute-force oracle on a hand-checked 3x3") {
  auto src = abstract_source({1.0 / 3, 1.0 / 3, 1.0 / 3});
  auto tgt = abstract_target({1.0 / 3, 1.0 / 3, 1.0 / 3});
  // Best permutation (0->1, 1->2, 2->0): 5 + 6 + 7 = 18.
  auto cost = matrix(3, 3, {1, 5, 2, 3, 1, 6, 7, 2, 1});
  CHECK(brute_force_oracle(src, tgt, cost) == doctest::Approx(6.0));
  CHECK(solve_kantorovich(src, tgt, cost).certificate.primal_value == doctest::Approx(6.0));
}

TEST_CASE("5x5 E0 subgrid against the oracle") {
  SourceMeasure src;
  TargetMeasure tgt;
  for (int k = 0; k < 5; ++k) {
    src.nodes.push_back(Direction::from_chart(-0.4 + 0.2 * k, 2 * test::kPi * k / 5.0));
    src.weights.push_back(0.2);
    tgt.nodes.push_back(TargetPoint{{-0.8 + 0.4 * k, 0.8 - 0.3 * k}});
    tgt.weights.push_back(0.2);
  }
  auto cost = assemble_cost_matrix(src, tgt, test::e0_config());
  auto sol = solve_kantorovich(src, tgt, cost);
  double oracle = brute_force_oracle(src, tgt, cost);
  CHECK(sol.certificate.primal_value == doctest::Approx(oracle).epsilon(1e-13));
  CHECK(std::abs(sol.certificate.duality_gap) < 1e-12);
}

TEST_CASE("certificate detects perturbed potentials") {
  test::Rng rng(7);
  auto in = test::random_e0_instance(5, rng);
  auto sol = solve_kantorovich(in.src, in.tgt, in.cost);
  const double tol = 1e-9;
  auto base = check_certificate(sol.plan, sol.potentials, in.cost, in.src, in.tgt, tol);
  CHECK(base.ok());
  CHECK(base.dual_violation <= tol);

  auto up = sol.potentials;
  up.r[2] += 0.1;
  auto cu = check_certificate(sol.plan, up, in.cost, in.src, in.tgt, tol);
  CHECK(cu.complementary_slackness_violation == doctest::Approx(0.1).epsilon(1e-9));
  CHECK(cu.duality_gap == doctest::Approx(0.1 * 0.2).epsilon(1e-9));
  CHECK_FALSE(cu.ok());

  auto down = sol.potentials;
  down.zeta[3] -= 0.1;
  auto cd = check_certificate(sol.plan, down, in.cost, in.src, in.tgt, tol);
  CHECK(cd.dual_violation >= 0.1 - 1e-12);
  CHECK_FALSE(cd.ok());

  TransportPlan bad = sol.plan;
  bad.entries[0].mass += 1e-3;
  auto cb = check_certificate(bad, sol.potentials, in.cost, in.src, in.tgt, tol);
  CHECK(cb.marginal_violation == doctest::Approx(1e-3).epsilon(1e-6));
  CHECK_FALSE(cb.ok());

  bad = sol.plan;
  bad.entries[0].mass = -1e-3;
  auto cn = check_certificate(bad, sol.potentials, in.cost, in.src, in.tgt, tol);
  CHECK(cn.negative_mass == doctest::Approx(1e-3));
}

TEST_CASE("gap tolerance is relative to the objective") {
  OptimalityCertificate c;
  c.tolerance = 1e-9;
  c.primal_value = 1000.0;
  c.duality_gap = 5e-7;
  CHECK(c.gap_ok());
  c.duality_gap = 2e-6;
  CHECK_FALSE(c.gap_ok());
}

TEST_CASE("unbalanced and malformed inputs") {
  auto cost = matrix(2, 2, {1.0, 0.0, 0.0, 1.0});
  try {
    solve_kantorovich(abstract_source({0.5, 0.5}), abstract_target({0.5, 0.6}), cost);
    FAIL("expected Unbalanced");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kUnbalanced);
  }
  auto nan_cost = matrix(2, 2, {1.0, NAN, 0.0, 1.0});
  CHECK_THROWS_AS(solve_kantorovich(abstract_source({0.5, 0.5}), abstract_target({0.5, 0.5}), nan_cost),
                  Error);
  CHECK_THROWS_AS(solve_kantorovich(abstract_source({1.0}), abstract_target({0.5, 0.5}), cost), Error);
}

TEST_CASE("pivot cap raises Stalled with the partial iterate") {
  test::Rng rng(3);
  auto in = test::random_e0_instance(6, rng);
  SolveOptions opt;
  opt.max_pivots = 1;
  try {
    solve_kantorovich(in.src, in.tgt, in.cost, opt);
    FAIL("expected Stalled");
  } catch (const StalledError& e) {
    CHECK(e.code() == ErrorCode::kStalled);
    CHECK(e.partial().stats.pivots == 1);
    CHECK(e.partial().potentials.r.size() == 6);
  }
}

TEST_CASE("zero-weight nodes are dropped and receive feasible duals") {
  auto src = abstract_source({0.5, 0.0, 0.5});
  auto tgt = abstract_target({0.0, 0.5, 0.5});
  auto cost = matrix(3, 3, {0.1, 1.0, 0.0, 2.0, 2.0, 2.0, 0.3, 0.0, 1.0});
  auto sol = solve_kantorovich(src, tgt, cost);
  CHECK(sol.stats.dropped_source_nodes == 1);
  CHECK(sol.stats.dropped_target_nodes == 1);
  CHECK(sol.certificate.ok());
  CHECK(sol.certificate.primal_value == doctest::Approx(1.0));
  for (const auto& e : sol.plan.entries) {
    CHECK(e.i != 1);
    CHECK(e.j != 0);
  }
  // The dropped row is tight somewhere: r_1 = max_j (c_1j - zeta_j).
  double best = -1e300;
  for (std::size_t j = 0; j < 3; ++j) best = std::max(best, cost(1, j) - sol.potentials.zeta[j]);
  CHECK(sol.potentials.r[1] == doctest::Approx(best));
}

TEST_CASE("optimal value is invariant under node permutation") {
  test::Rng rng(55);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 12;
    SourceMeasure src;
    TargetMeasure tgt;
    for (std::size_t k = 0; k < n; ++k) {
      src.nodes.push_back(rng.direction(test::e0_source()));
      src.weights.push_back(rng.uniform(0.1, 1.0));
      tgt.nodes.push_back(rng.point(test::e0_target()));
      tgt.weights.push_back(rng.uniform(0.1, 1.0));
    }
    auto norm = normalize_masses(src, tgt, NormalizationPolicy::kScaleTarget);
    auto cost = assemble_cost_matrix(norm.source, norm.target, test::e0_config());
    auto sol = solve_kantorovich(norm.source, norm.target, cost);

    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), 0);
    std::shuffle(p.begin(), p.end(), rng.engine());
    SourceMeasure s2 = norm.source;
    TargetMeasure t2 = norm.target;
    for (std::size_t k = 0; k < n; ++k) {
      s2.nodes[k] = norm.source.nodes[p[k]];
      s2.weights[k] = norm.source.weights[p[k]];
      t2.nodes[k] = norm.target.nodes[p[n - 1 - k]];
      t2.weights[k] = norm.target.weights[p[n - 1 - k]];
    }
    auto sol2 = solve_kantorovich(s2, t2, assemble_cost_matrix(s2, t2, test::e0_config()));
    CHECK(sol2.certificate.primal_value ==
          doctest::Approx(sol.certificate.primal_value).epsilon(1e-12));
  }
}

TEST_CASE("gauge and shift") {
  auto s = test::solve_e0(6, 0.7);
  CHECK(s.sol.potentials.r[0] == 0.7);
  CHECK(s.tight.r[0] == 0.7);
  DualPotentials p = s.tight;
  p.shift(0.25);
  CHECK(p.r[3] == doctest::Approx(s.tight.r[3] + 0.25));
  CHECK(p.zeta[3] == doctest::Approx(s.tight.zeta[3] - 0.25));
  // F is gauge invariant because the masses balance.
  CHECK(objective_F(p, s.measures.source, s.measures.target) ==
        doctest::Approx(objective_F(s.tight, s.measures.source, s.measures.target)).epsilon(1e-12));
  p.regauge(-1.0);
  CHECK(p.r[0] == -1.0);
}

TEST_CASE("tightened potentials are a c-transform fixed point with the same value") {
  auto s = test::solve_e0(8);
  auto r_star = c_transform_source(s.tight.zeta, s.cost);
  auto z_star = c_transform_target(s.tight.r, s.cost);
  for (std::size_t i = 0; i < s.tight.r.size(); ++i) CHECK(std::abs(r_star.values[i] - s.tight.r[i]) < 1e-12);
  for (std::size_t j = 0; j < s.tight.zeta.size(); ++j) {
    CHECK(std::abs(z_star.values[j] - s.tight.zeta[j]) < 1e-12);
  }
  auto cert = check_certificate(s.sol.plan, s.tight, s.cost, s.measures.source, s.measures.target, 1e-9);
  CHECK(cert.ok());
  CHECK(objective_F(s.tight, s.measures.source, s.measures.target) <=
        objective_F(s.sol.potentials, s.measures.source, s.measures.target) + 1e-12);
}

TEST_CASE("parallel c-transforms and violation equal the serial reference") {
  auto s = test::solve_e0(10);
  const int saved = max_threads();
  for (int threads : {1, 3, 8}) {
    set_threads(threads);
    auto a = c_transform_source(s.tight.zeta, s.cost);
    auto b = serial::c_transform_source(s.tight.zeta, s.cost);
    CHECK(a.values == b.values);
    CHECK(a.argmax == b.argmax);
    auto c = c_transform_target(s.tight.r, s.cost);
    auto d = serial::c_transform_target(s.tight.r, s.cost);
    CHECK(c.values == d.values);
    CHECK(c.argmax == d.argmax);
    CHECK(max_dual_violation(s.sol.potentials, s.cost) == serial::max_dual_violation(s.sol.potentials, s.cost));
  }
  set_threads(saved);
}

TEST_CASE("c-transform ties resolve to the lowest index") {
  auto cost = matrix(2, 3, {1.0, 2.0, 2.0, 0.0, 0.0, 0.0});
  auto t = c_transform_source({0.0, 0.0, 0.0}, cost);
  CHECK(t.argmax[0] == 1);
  CHECK(t.argmax[1] == 0);
  auto u = c_transform_target({0.0, 1.0}, cost);
  CHECK(u.argmax == std::vector<std::size_t>{0, 0, 0});
  CHECK(u.values == std::vector<double>{1.0, 2.0, 2.0});
}
