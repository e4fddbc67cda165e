#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "biref/discretization.hpp"
#include "biref/errors.hpp"
#include "biref/parallel.hpp"
#include "support.hpp"

using namespace biref;
using biref::test::kPi;

namespace {

// Exact integral of exp(-(x^2 + y^2) / (2 sigma^2)) over [-a, a]^2.
double gaussian_square_mass(double sigma, double a) {
  double one_d = sigma * std::sqrt(2.0 * kPi) * std::erf(a / (sigma * std::sqrt(2.0)));
  return one_d * one_d;
}

}  // namespace

TEST_CASE("uniform grids carry the exact areas") {
  auto src = build_source_grid(test::e0_source(), 8, 8, IntensityModel::uniform());
  auto tgt = build_target_grid(test::e0_target(), 8, 8, IntensityModel::uniform());
  CHECK(src.size() == 64);
  CHECK(tgt.size() == 64);
  // Spherical band area 2 pi (mz_max - mz_min) = 2 pi; square area 4.
  CHECK(src.total_mass() == doctest::Approx(2 * kPi).epsilon(1e-14));
  CHECK(tgt.total_mass() == doctest::Approx(4.0).epsilon(1e-14));
  for (const auto& m : src.nodes) CHECK(std::abs(m.vec().norm() - 1.0) < 1e-15);
}

TEST_CASE("node ordering follows the documented indices") {
  auto sa = test::e0_source();
  auto src = build_source_grid(sa, 3, 4, IntensityModel::uniform());
  // Index k * n_phi + l: mz-cell k = 1, phi-cell l = 2.
  const auto& m = src.nodes[1 * 4 + 2];
  CHECK(m.mz == doctest::Approx(0.0).epsilon(1e-15));
  // azimuth() reports (-pi, pi].
  CHECK(m.azimuth() + 2 * kPi == doctest::Approx(2 * kPi * 2.5 / 4));

  auto tgt = build_target_grid(test::e0_target(), 4, 2, IntensityModel::uniform());
  CHECK(tgt.nodes[1 * 4 + 3].x.x() == doctest::Approx(0.75));
  CHECK(tgt.nodes[1 * 4 + 3].x.y() == doctest::Approx(0.5));
}

TEST_CASE("gaussian target mass converges at second order") {
  const double sigma = 0.4;
  const double exact = gaussian_square_mass(sigma, 1.0);
  CHECK(std::abs(exact / (2 * kPi * sigma * sigma) - 1.0) < 0.03);

  auto model = IntensityModel::gaussian({0.0, 0.0}, sigma);
  auto err = [&](int n) {
    return std::abs(build_target_grid(test::e0_target(), n, n, model).total_mass() - exact);
  };
  CHECK(err(8) / exact < 0.02);
  double e16 = err(16);
  double e32 = err(32);
  CHECK(e16 / e32 >= 3.0);
  CHECK(e16 / e32 <= 5.0);
}

TEST_CASE("source intensity is evaluated in (phi, mz) chart coordinates") {
  auto model = IntensityModel::gaussian({kPi, 0.0}, 0.5);
  auto src = build_source_grid(test::e0_source(), 4, 16, model);
  std::size_t best = static_cast<std::size_t>(
      std::max_element(src.weights.begin(), src.weights.end()) - src.weights.begin());
  CHECK(std::abs(src.nodes[best].azimuth() - kPi) < 2 * kPi / 16);
}

TEST_CASE("ring and bitmap intensities") {
  auto ring = IntensityModel::ring({0.0, 0.0}, 0.5, 0.1);
  CHECK(ring(0.5, 0.0) == doctest::Approx(1.0));
  CHECK(ring(0.0, 0.0) < 1e-5);

  Bitmap b;
  b.nx = 2;
  b.ny = 2;
  b.x_min = -1;
  b.x_max = 1;
  b.y_min = -1;
  b.y_max = 1;
  b.values = {1.0, 2.0, 3.0, 4.0};
  auto model = IntensityModel::from_bitmap(b);
  CHECK(model(-0.5, -0.5) == 1.0);
  CHECK(model(0.5, -0.5) == 2.0);
  CHECK(model(-0.5, 0.5) == 3.0);
  CHECK(model(0.5, 0.5) == 4.0);
  CHECK(model(2.0, 0.0) == 0.0);

  b.values.pop_back();
  CHECK_THROWS_AS(IntensityModel::from_bitmap(b), Error);
  CHECK_THROWS_AS(IntensityModel::gaussian({0.0, 0.0}, 0.0), Error);
  CHECK_THROWS_AS(IntensityModel::ring({0.0, 0.0}, 1.0, -1.0), Error);
}

TEST_CASE("zero mass is rejected") {
  Bitmap b;
  b.nx = 1;
  b.ny = 1;
  b.x_min = 5;
  b.x_max = 6;
  b.y_min = 5;
  b.y_max = 6;
  b.values = {1.0};
  try {
    build_target_grid(test::e0_target(), 4, 4, IntensityModel::from_bitmap(b));
    FAIL("expected ZeroMass");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kZeroMass);
  }
  CHECK_THROWS_AS(build_target_grid(test::e0_target(), 0, 4, IntensityModel::uniform()), Error);
}

TEST_CASE("normalization policies") {
  auto src = build_source_grid(test::e0_source(), 4, 4, IntensityModel::uniform());
  auto tgt = build_target_grid(test::e0_target(), 4, 4, IntensityModel::uniform());

  auto a = normalize_masses(src, tgt, NormalizationPolicy::kScaleTarget);
  CHECK(a.target.total_mass() == doctest::Approx(2 * kPi).epsilon(1e-14));
  CHECK(a.scale == doctest::Approx(2 * kPi / 4));
  CHECK(a.source.weights == src.weights);

  auto b = normalize_masses(src, tgt, NormalizationPolicy::kScaleSource);
  CHECK(b.source.total_mass() == doctest::Approx(4.0).epsilon(1e-14));
  CHECK(b.target.weights == tgt.weights);

  try {
    normalize_masses(src, tgt, NormalizationPolicy::kError);
    FAIL("expected MassMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kMassMismatch);
  }
  auto c = normalize_masses(src, a.target, NormalizationPolicy::kError);
  CHECK(c.scale == 1.0);
}

TEST_CASE("stable_sum is compensated") {
  std::vector<double> v{1.0, 1e-16, 1e-16, 1e-16, 1e-16, -1.0};
  CHECK(stable_sum(v) == doctest::Approx(4e-16).epsilon(1e-6));
  std::vector<double> big(100000, 0.1);
  CHECK(std::abs(stable_sum(big) - 10000.0) < 1e-9);
}

TEST_CASE("single-entry cost matrix") {
  SourceMeasure src;
  src.nodes = {Direction{{1.0, 0.0}, 0.0}};
  src.weights = {1.0};
  TargetMeasure tgt;
  tgt.nodes = {TargetPoint{}};
  tgt.weights = {1.0};
  auto c = assemble_cost_matrix(src, tgt, test::e0_config());
  CHECK(c.rows == 1);
  CHECK(c.cols == 1);
  CHECK(c(0, 0) == doctest::Approx(std::log(1.0 / 256)).epsilon(1e-15));
}

TEST_CASE("parallel cost matrix equals the serial reference bit for bit") {
  auto src = build_source_grid(test::e0_source(), 12, 12, IntensityModel::uniform());
  auto tgt = build_target_grid(test::e0_target(), 12, 12, IntensityModel::uniform());
  auto cfg = test::e0_config();
  auto serial_c = serial::assemble_cost_matrix(src, tgt, cfg);
  const int saved = max_threads();
  for (int threads : {1, 2, 4}) {
    set_threads(threads);
    auto par = assemble_cost_matrix(src, tgt, cfg);
    CHECK(par.values == serial_c.values);
  }
  set_threads(saved);
}

TEST_CASE("cost matrix permutes with its nodes") {
  test::Rng rng(21);
  auto in = test::random_e0_instance(7, rng);
  std::vector<std::size_t> p(7), q(7);
  std::iota(p.begin(), p.end(), 0);
  std::iota(q.begin(), q.end(), 0);
  std::shuffle(p.begin(), p.end(), rng.engine());
  std::shuffle(q.begin(), q.end(), rng.engine());
  SourceMeasure s2 = in.src;
  TargetMeasure t2 = in.tgt;
  for (std::size_t k = 0; k < 7; ++k) {
    s2.nodes[k] = in.src.nodes[p[k]];
    t2.nodes[k] = in.tgt.nodes[q[k]];
  }
  auto c2 = assemble_cost_matrix(s2, t2, test::e0_config());
  for (std::size_t i = 0; i < 7; ++i) {
    for (std::size_t j = 0; j < 7; ++j) CHECK(c2(i, j) == in.cost(p[i], q[j]));
  }
}

TEST_CASE("cost assembly names the first offending pair") {
  auto cfg = OpticalConfig::make(2.0, 3.0);
  SourceMeasure src;
  src.nodes = {Direction{{1.0, 0.0}, 0.0}, Direction::from_chart(0.5, 0.0)};
  src.weights = {1.0, 1.0};
  TargetMeasure tgt;
  tgt.nodes = {TargetPoint{}, TargetPoint{{2.0 * std::sqrt(1.0 / 3.0), 0.0}}};
  tgt.weights = {1.0, 1.0};
  for (bool use_serial : {false, true}) {
    try {
      if (use_serial) {
        serial::assemble_cost_matrix(src, tgt, cfg);
      } else {
        assemble_cost_matrix(src, tgt, cfg);
      }
      FAIL("expected NonPositiveKernel");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kNonPositiveKernel);
      CHECK(std::string(e.what()).find("(1, 1)") != std::string::npos);
    }
  }
}
