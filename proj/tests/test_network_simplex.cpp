#include <doctest.h>

#include <cmath>
#include <random>

#include "network_simplex.hpp"

using biref::detail::NetworkSimplex;

namespace {

struct Instance {
  std::vector<double> supply, demand, cost;
};

// Integer masses and small integer costs force many ties and degenerate pivots.
Instance random_instance(std::size_t n1, std::size_t n2, std::mt19937_64& gen, int cost_levels) {
  std::uniform_int_distribution<int> mass(0, 4);
  std::uniform_int_distribution<int> c(0, cost_levels);
  Instance in;
  double total = 0.0;
  for (std::size_t i = 0; i < n1; ++i) {
    in.supply.push_back(1 + mass(gen));
    total += in.supply.back();
  }
  in.demand.assign(n2, 0.0);
  for (std::size_t u = 0; u < static_cast<std::size_t>(total); ++u) in.demand[u % n2] += 1.0;
  for (std::size_t k = 0; k < n1 * n2; ++k) in.cost.push_back(c(gen));
  return in;
}

void check_optimal(const NetworkSimplex& ns, const Instance& in) {
  const std::size_t n1 = in.supply.size();
  const std::size_t n2 = in.demand.size();
  std::vector<double> rows(n1, 0.0), cols(n2, 0.0);
  double primal = 0.0;
  for (const auto& a : ns.tree_arcs()) {
    CHECK(a.flow >= 0.0);
    rows[a.i] += a.flow;
    cols[a.j] += a.flow;
    primal += a.flow * in.cost[a.i * n2 + a.j];
    double reduced = in.cost[a.i * n2 + a.j] + ns.source_potential(a.i) - ns.target_potential(a.j);
    CHECK(std::abs(reduced) < 1e-9);
  }
  for (std::size_t i = 0; i < n1; ++i) CHECK(std::abs(rows[i] - in.supply[i]) < 1e-9);
  for (std::size_t j = 0; j < n2; ++j) CHECK(std::abs(cols[j] - in.demand[j]) < 1e-9);
  double dual = 0.0;
  for (std::size_t i = 0; i < n1; ++i) {
    dual -= ns.source_potential(i) * in.supply[i];
    for (std::size_t j = 0; j < n2; ++j) {
      CHECK(in.cost[i * n2 + j] + ns.source_potential(i) - ns.target_potential(j) >= -1e-9);
    }
  }
  for (std::size_t j = 0; j < n2; ++j) dual += ns.target_potential(j) * in.demand[j];
  CHECK(std::abs(primal - dual) < 1e-8 * (1.0 + std::abs(primal)));
}

}  // namespace

TEST_CASE("tree stays consistent after every pivot on degenerate instances") {
  std::mt19937_64 gen(2024);
  for (int trial = 0; trial < 60; ++trial) {
    std::size_t n1 = 2 + trial % 7;
    std::size_t n2 = 2 + (trial * 5) % 9;
    auto in = random_instance(n1, n2, gen, trial % 2 == 0 ? 2 : 50);
    NetworkSimplex ns(in.supply, in.demand, in.cost);
    ns.set_debug_checks(true);
    auto status = ns.run(100000);
    CHECK(status == NetworkSimplex::Status::kOptimal);
    CHECK(ns.debug_failure().empty());
    CHECK(ns.check_tree().empty());
    check_optimal(ns, in);
  }
}

TEST_CASE("constant cost matrix is solved with any feasible tree") {
  Instance in{{1, 1, 1}, {1, 1, 1}, std::vector<double>(9, 3.0)};
  NetworkSimplex ns(in.supply, in.demand, in.cost);
  ns.set_debug_checks(true);
  CHECK(ns.run(1000) == NetworkSimplex::Status::kOptimal);
  CHECK(ns.check_tree().empty());
  check_optimal(ns, in);
}

TEST_CASE("rectangular 1 x n and n x 1") {
  Instance a{{3.0}, {1.0, 1.0, 1.0}, {0.5, 0.2, 0.9}};
  NetworkSimplex na(a.supply, a.demand, a.cost);
  CHECK(na.run(100) == NetworkSimplex::Status::kOptimal);
  check_optimal(na, a);
  Instance b{{1.0, 2.0}, {3.0}, {0.5, 0.1}};
  NetworkSimplex nb(b.supply, b.demand, b.cost);
  CHECK(nb.run(100) == NetworkSimplex::Status::kOptimal);
  check_optimal(nb, b);
}

TEST_CASE("real-valued random instances") {
  std::mt19937_64 gen(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 20 + static_cast<std::size_t>(trial);
    Instance in;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      in.supply.push_back(u(gen) + 0.01);
      total += in.supply.back();
    }
    double rest = total;
    for (std::size_t j = 0; j + 1 < n; ++j) {
      in.demand.push_back(total / n);
      rest -= total / n;
    }
    in.demand.push_back(rest);
    for (std::size_t k = 0; k < n * n; ++k) in.cost.push_back(u(gen));
    NetworkSimplex ns(in.supply, in.demand, in.cost);
    CHECK(ns.run(1000000) == NetworkSimplex::Status::kOptimal);
    CHECK(ns.check_tree().empty());
    check_optimal(ns, in);
    CHECK(ns.pivots() >= ns.degenerate_pivots());
  }
}

TEST_CASE("pivot limit is reported") {
  std::mt19937_64 gen(1);
  auto in = random_instance(8, 8, gen, 100);
  NetworkSimplex ns(in.supply, in.demand, in.cost);
  CHECK(ns.run(2) == NetworkSimplex::Status::kPivotLimit);
  CHECK(ns.pivots() == 2);
}
