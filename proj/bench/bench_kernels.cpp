// Parallel kernels against their serial references on E0 geometry.
// BIREF_THREADS caps the OpenMP team.

#include <benchmark/benchmark.h>

#include <map>
#include <numbers>
#include <random>

#include "biref/discretization.hpp"
#include "biref/parallel.hpp"
#include "biref/reflector.hpp"
#include "biref/transport.hpp"

namespace {

using namespace biref;

struct Instance {
  OpticalConfig cfg = OpticalConfig::make(8.0, 3.0);
  SourceAperture sa{-0.5, 0.5, 0.0, 2.0 * std::numbers::pi};
  TargetAperture ta{-1.0, 1.0, -1.0, 1.0};
  SourceMeasure src;
  TargetMeasure tgt;
  CostMatrix cost;
  std::vector<double> zeta;

  explicit Instance(int n) {
    src = build_source_grid(sa, n, n, IntensityModel::uniform());
    tgt = build_target_grid(ta, n, n, IntensityModel::gaussian({0.0, 0.0}, 0.4));
    cost = serial::assemble_cost_matrix(src, tgt, cfg);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    zeta.resize(tgt.size());
    for (double& z : zeta) z = u(rng);
  }
};

const Instance& instance(int n) {
  static std::map<int, Instance> cache;
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, Instance(n)).first;
  return it->second;
}

void BM_CostMatrixParallel(benchmark::State& st) {
  const auto& in = instance(static_cast<int>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(assemble_cost_matrix(in.src, in.tgt, in.cfg));
}

void BM_CostMatrixSerial(benchmark::State& st) {
  const auto& in = instance(static_cast<int>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(serial::assemble_cost_matrix(in.src, in.tgt, in.cfg));
}

void BM_CTransformParallel(benchmark::State& st) {
  const auto& in = instance(static_cast<int>(st.range(0)));
  for (auto _ : st) {
    auto r = c_transform_source(in.zeta, in.cost);
    benchmark::DoNotOptimize(c_transform_target(r.values, in.cost));
  }
}

void BM_CTransformSerial(benchmark::State& st) {
  const auto& in = instance(static_cast<int>(st.range(0)));
  for (auto _ : st) {
    auto r = serial::c_transform_source(in.zeta, in.cost);
    benchmark::DoNotOptimize(serial::c_transform_target(r.values, in.cost));
  }
}

ReflectorPair make_pair(const Instance& in) {
  DualPotentials pot{std::vector<double>(in.src.size(), 0.0), in.zeta, 0};
  pot = tighten_potentials(pot, in.cost);
  return build_reflector_pair(pot, in.cfg, in.src, in.tgt);
}

std::vector<TargetPoint> query_points(const Instance& in, int n) {
  std::vector<TargetPoint> q;
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      q.push_back({{in.ta.x_min + (in.ta.x_max - in.ta.x_min) * (a + 0.5) / n,
                    in.ta.y_min + (in.ta.y_max - in.ta.y_min) * (b + 0.5) / n}});
    }
  }
  return q;
}

void BM_EnvelopeParallel(benchmark::State& st) {
  const auto& in = instance(static_cast<int>(st.range(0)));
  auto pair = make_pair(in);
  auto q = query_points(in, 64);
  for (auto _ : st) benchmark::DoNotOptimize(evaluate_z(q, pair));
}

void BM_EnvelopeSerial(benchmark::State& st) {
  const auto& in = instance(static_cast<int>(st.range(0)));
  auto pair = make_pair(in);
  auto q = query_points(in, 64);
  for (auto _ : st) benchmark::DoNotOptimize(serial::evaluate_z(q, pair));
}

BENCHMARK(BM_CostMatrixParallel)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CostMatrixSerial)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CTransformParallel)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CTransformSerial)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EnvelopeParallel)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EnvelopeSerial)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

}  // namespace

int main(int argc, char** argv) {
  biref::configure_threads_from_env();
  benchmark::Initialize(&argc, argv);
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
