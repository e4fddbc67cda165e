#include "biref/reflector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "biref/errors.hpp"

namespace biref {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_kernel_or_neg_inf(const Direction& m, const TargetPoint& x, const OpticalConfig& cfg) {
  double k = kernel_value(m, x, cfg);
  return k > 0.0 && std::isfinite(k) ? std::log(k) : kNegInf;
}

// c(m_i, x_j) - r_i - zeta_j in log space; 0 on the support of a tight pair.
double log_excess(const ReflectorPair& pair, std::size_t i, std::size_t j) {
  const auto& pot = pair.potentials();
  return log_cost(pair.source_nodes()[i], pair.target_nodes()[j], pair.config()) - pot.r[i] -
         pot.zeta[j];
}

void require_support(std::size_t i, std::size_t j, const ReflectorPair& pair, double tie_tol) {
  if (i >= pair.n_source() || j >= pair.n_target()) {
    throw Error(ErrorCode::kInvalidInput, "node index out of range");
  }
  double ratio = std::exp(log_excess(pair, i, j));
  if (std::abs(1.0 - ratio) > tie_tol) {
    std::ostringstream msg;
    msg << "target " << j << " is not in the reflector map of source " << i
        << " (K / (rho_hat z_tilde) = " << ratio << ")";
    throw Error(ErrorCode::kNotSupporting, msg.str());
  }
}

std::vector<double> linspace(double lo, double hi, int n, bool closed) {
  std::vector<double> out(static_cast<std::size_t>(n));
  const int div = closed ? std::max(n - 1, 1) : n;
  for (int k = 0; k < n; ++k) out[static_cast<std::size_t>(k)] = lo + (hi - lo) * k / div;
  return out;
}

struct MeshGrids {
  std::vector<Direction> directions;
  std::vector<TargetPoint> points;
  bool wrap_phi = false;
};

MeshGrids mesh_grids(const SourceAperture& src_ap, const TargetAperture& tgt_ap, int n_u,
                     int n_v) {
  if (n_u < 2 || n_v < 2) throw Error(ErrorCode::kInvalidInput, "mesh resolution must be >= 2");
  src_ap.check();
  tgt_ap.check();
  MeshGrids g;
  g.wrap_phi = src_ap.full_azimuth();
  auto mz = linspace(src_ap.mz_min, src_ap.mz_max, n_u, true);
  auto phi = linspace(src_ap.phi_min, src_ap.phi_max, n_v, !g.wrap_phi);
  auto xs = linspace(tgt_ap.x_min, tgt_ap.x_max, n_u, true);
  auto ys = linspace(tgt_ap.y_min, tgt_ap.y_max, n_v, true);
  g.directions.reserve(static_cast<std::size_t>(n_u) * n_v);
  g.points.reserve(g.directions.capacity());
  for (int u = 0; u < n_u; ++u) {
    for (int v = 0; v < n_v; ++v) {
      g.directions.push_back(Direction::from_chart(mz[u], phi[v]));
      g.points.push_back(TargetPoint{{xs[u], ys[v]}});
    }
  }
  return g;
}

// Vertex index u * n_v + v; first triangle edges run along +v then +u.
std::vector<std::array<std::size_t, 3>> grid_faces(int n_u, int n_v, bool wrap_v) {
  std::vector<std::array<std::size_t, 3>> faces;
  const int v_cells = wrap_v ? n_v : n_v - 1;
  auto id = [n_v](int u, int v) { return static_cast<std::size_t>(u) * n_v + (v % n_v); };
  for (int u = 0; u + 1 < n_u; ++u) {
    for (int v = 0; v < v_cells; ++v) {
      faces.push_back({id(u, v), id(u, v + 1), id(u + 1, v)});
      faces.push_back({id(u, v + 1), id(u + 1, v + 1), id(u + 1, v)});
    }
  }
  return faces;
}

// Reflector 2 faces use (x, y) = (u, v), whose +z orientation is u then v.
std::vector<std::array<std::size_t, 3>> grid_faces_xy(int n_u, int n_v) {
  auto faces = grid_faces(n_u, n_v, false);
  for (auto& f : faces) std::swap(f[1], f[2]);
  return faces;
}

ReflectorMeshes assemble_meshes(const MeshGrids& g, const std::vector<double>& rho,
                                const std::vector<double>& z, int n_u, int n_v) {
  ReflectorMeshes out;
  out.reflector1.vertices.resize(rho.size());
  out.reflector2.vertices.resize(z.size());
  for (std::size_t k = 0; k < rho.size(); ++k) {
    out.reflector1.vertices[k] = rho[k] * g.directions[k].vec();
    out.reflector2.vertices[k] = {g.points[k].x.x(), g.points[k].x.y(), z[k]};
  }
  out.reflector1.faces = grid_faces(n_u, n_v, g.wrap_phi);
  out.reflector2.faces = grid_faces_xy(n_u, n_v);
  return out;
}

}  // namespace

double SupportingSpheroid::residual(const Eigen::Vector3d& p) const {
  return p.norm() + (p - focus2).norm() - major_sum;
}

double SupportingSpheroid::radius_along(const Eigen::Vector3d& m) const {
  return (major_sum * major_sum - focus2.squaredNorm()) / (2.0 * (major_sum - focus2.dot(m)));
}

double SupportingParaboloid::residual(const Eigen::Vector3d& p) const {
  Eigen::Vector2d s = p.head<2>() - focus.head<2>();
  double q = p.z() - focus.z();
  return 4.0 * a * q - (s.squaredNorm() - 4.0 * a * a);
}

double SupportingParaboloid::height_at(const Eigen::Vector2d& x) const {
  Eigen::Vector2d s = x - focus.head<2>();
  return focus.z() + (s.squaredNorm() - 4.0 * a * a) / (4.0 * a);
}

std::size_t ReflectorMap::multivalued_count() const {
  return static_cast<std::size_t>(std::count_if(assignments.begin(), assignments.end(),
                                                [](const auto& a) { return a.size() > 1; }));
}

double ReflectorMap::single_valued_fraction() const {
  if (assignments.empty()) return 1.0;
  return 1.0 - static_cast<double>(multivalued_count()) / static_cast<double>(assignments.size());
}

ReflectorPair::ReflectorPair(DualPotentials pot, const OpticalConfig& cfg,
                             std::vector<Direction> source, std::vector<TargetPoint> target,
                             double tol)
    : pot_(std::move(pot)), cfg_(cfg), source_(std::move(source)), target_(std::move(target)) {
  cfg_.check();
  const std::size_t n = source_.size();
  const std::size_t m = target_.size();
  if (pot_.r.size() != n || pot_.zeta.size() != m || n == 0 || m == 0) {
    throw Error(ErrorCode::kInvalidInput, "potentials do not match the node sets");
  }

  // Row pass: worst violation and tightest slack per source; column slack per target.
  std::vector<double> row_violation(n), row_slack(n);
  std::vector<double> col_slack(m, std::numeric_limits<double>::infinity());
  const auto ni = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel
  {
    std::vector<double> local_col(m, std::numeric_limits<double>::infinity());
#pragma omp for schedule(static)
    for (std::ptrdiff_t ii = 0; ii < ni; ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      double viol = kNegInf;
      double slack = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < m; ++j) {
        double s = pot_.r[i] + pot_.zeta[j] - log_cost(source_[i], target_[j], cfg_);
        viol = std::max(viol, -s);
        slack = std::min(slack, s);
        local_col[j] = std::min(local_col[j], s);
      }
      row_violation[i] = viol;
      row_slack[i] = slack;
    }
#pragma omp critical
    for (std::size_t j = 0; j < m; ++j) col_slack[j] = std::min(col_slack[j], local_col[j]);
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (row_violation[i] > tol) {
      std::ostringstream msg;
      msg << "constraint r + zeta >= log K violated by " << row_violation[i] << " at source " << i;
      throw Error(ErrorCode::kInfeasiblePotentials, msg.str());
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (row_slack[i] > tol) {
      std::ostringstream msg;
      msg << "sup over targets not attained at source " << i << " (slack " << row_slack[i] << ")";
      throw Error(ErrorCode::kNotTight, msg.str());
    }
  }
  for (std::size_t j = 0; j < m; ++j) {
    if (col_slack[j] > tol) {
      std::ostringstream msg;
      msg << "sup over sources not attained at target " << j << " (slack " << col_slack[j] << ")";
      throw Error(ErrorCode::kNotTight, msg.str());
    }
  }

  rho_hat_.resize(n);
  rho_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    rho_hat_[i] = std::exp(pot_.r[i]);
    rho_[i] = rho_from_hat(rho_hat_[i], source_[i], cfg_);
  }
  z_tilde_.resize(m);
  z_.resize(m);
  for (std::size_t j = 0; j < m; ++j) {
    z_tilde_[j] = std::exp(pot_.zeta[j]);
    z_[j] = z_from_tilde(z_tilde_[j], target_[j], cfg_);
  }
}

Eigen::Vector3d ReflectorPair::point1(std::size_t i) const { return rho_[i] * source_[i].vec(); }

Eigen::Vector3d ReflectorPair::point2(std::size_t j) const {
  return {target_[j].x.x(), target_[j].x.y(), z_[j]};
}

EnvelopeValue ReflectorPair::envelope_z(const TargetPoint& xq) const {
  double best = kNegInf;
  std::size_t arg = 0;
  for (std::size_t i = 0; i < source_.size(); ++i) {
    double v = log_kernel_or_neg_inf(source_[i], xq, cfg_) - pot_.r[i];
    if (v > best) {
      best = v;
      arg = i;
    }
  }
  EnvelopeValue out;
  out.transformed = std::exp(best);
  out.value = z_from_tilde(out.transformed, xq, cfg_);
  out.argmax = arg;
  return out;
}

EnvelopeValue ReflectorPair::envelope_rho(const Direction& mq) const {
  double best = kNegInf;
  std::size_t arg = 0;
  for (std::size_t j = 0; j < target_.size(); ++j) {
    double v = log_kernel_or_neg_inf(mq, target_[j], cfg_) - pot_.zeta[j];
    if (v > best) {
      best = v;
      arg = j;
    }
  }
  EnvelopeValue out;
  out.transformed = std::exp(best);
  out.value = rho_from_hat(out.transformed, mq, cfg_);
  out.argmax = arg;
  return out;
}

ReflectorPair build_reflector_pair(const DualPotentials& pot, const OpticalConfig& cfg,
                                   const SourceMeasure& src, const TargetMeasure& tgt,
                                   double tol) {
  return ReflectorPair(pot, cfg, src.nodes, tgt.nodes, tol);
}

double evaluate_z(const TargetPoint& xq, const ReflectorPair& pair) {
  return pair.envelope_z(xq).value;
}

double evaluate_rho(const Direction& mq, const ReflectorPair& pair) {
  return pair.envelope_rho(mq).value;
}

std::vector<double> evaluate_z(const std::vector<TargetPoint>& xq, const ReflectorPair& pair) {
  std::vector<double> out(xq.size());
  const auto n = static_cast<std::ptrdiff_t>(xq.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    out[static_cast<std::size_t>(k)] = pair.envelope_z(xq[static_cast<std::size_t>(k)]).value;
  }
  return out;
}

std::vector<double> evaluate_rho(const std::vector<Direction>& mq, const ReflectorPair& pair) {
  std::vector<double> out(mq.size());
  const auto n = static_cast<std::ptrdiff_t>(mq.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    out[static_cast<std::size_t>(k)] = pair.envelope_rho(mq[static_cast<std::size_t>(k)]).value;
  }
  return out;
}

namespace serial {

std::vector<double> evaluate_z(const std::vector<TargetPoint>& xq, const ReflectorPair& pair) {
  std::vector<double> out;
  out.reserve(xq.size());
  for (const auto& x : xq) out.push_back(pair.envelope_z(x).value);
  return out;
}

std::vector<double> evaluate_rho(const std::vector<Direction>& mq, const ReflectorPair& pair) {
  std::vector<double> out;
  out.reserve(mq.size());
  for (const auto& m : mq) out.push_back(pair.envelope_rho(m).value);
  return out;
}

ReflectorMeshes export_meshes(const ReflectorPair& pair, const SourceAperture& src_ap,
                              const TargetAperture& tgt_ap, int n_u, int n_v) {
  MeshGrids g = mesh_grids(src_ap, tgt_ap, n_u, n_v);
  return assemble_meshes(g, serial::evaluate_rho(g.directions, pair),
                         serial::evaluate_z(g.points, pair), n_u, n_v);
}

}  // namespace serial

ReflectorMap reflector_map(const ReflectorPair& pair, double tie_tol) {
  ReflectorMap map;
  map.tie_tol = tie_tol;
  map.assignments.resize(pair.n_source());
  const auto n = static_cast<std::ptrdiff_t>(pair.n_source());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < n; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    auto& list = map.assignments[i];
    double best = kNegInf;
    std::size_t arg = 0;
    for (std::size_t j = 0; j < pair.n_target(); ++j) {
      double e = log_excess(pair, i, j);
      if (std::abs(1.0 - std::exp(e)) <= tie_tol) list.push_back(j);
      if (e > best) {
        best = e;
        arg = j;
      }
    }
    if (list.empty()) list.push_back(arg);
  }
  return map;
}

SupportingSpheroid spheroid_of_target(std::size_t j, const ReflectorPair& pair) {
  return {pair.point2(j), pair.config().ell - pair.z(j)};
}

SupportingParaboloid paraboloid_of_source(std::size_t i, const ReflectorPair& pair) {
  const double delta = pair.config().delta;
  const double rho = pair.rho(i);
  const double mz = pair.source_nodes()[i].mz;
  return {pair.point1(i), (2.0 * rho * delta * (1.0 + mz) - 1.0) / (4.0 * delta)};
}

SupportingSpheroid supporting_spheroid(std::size_t i, std::size_t j, const ReflectorPair& pair,
                                       double tie_tol) {
  require_support(i, j, pair, tie_tol);
  return spheroid_of_target(j, pair);
}

SupportingParaboloid supporting_paraboloid(std::size_t i, std::size_t j,
                                           const ReflectorPair& pair, double tie_tol) {
  require_support(i, j, pair, tie_tol);
  return paraboloid_of_source(i, pair);
}

namespace {

// Point of the product aperture D x T in coordinates (mz, phi, x, y).
using Probe = std::array<double, 4>;

struct ProbeBox {
  std::array<double, 4> lo, hi;
  bool wrap_phi;

  Probe clamp(Probe p) const {
    for (int k = 0; k < 4; ++k) {
      if (k == 1 && wrap_phi) continue;
      p[k] = std::clamp(p[k], lo[k], hi[k]);
    }
    return p;
  }
};

std::array<double, 2> gradient_norms(const Probe& p, const OpticalConfig& cfg) {
  Direction m = Direction::from_chart(p[0], p[1]);
  TargetPoint x{{p[2], p[3]}};
  auto g = log_cost_gradients(m, x, cfg);
  return {g.wrt_x.norm(), g.wrt_m.norm()};
}

double polish_max(Probe p, int which, const ProbeBox& box, const OpticalConfig& cfg,
                  std::array<double, 4> step) {
  double best = gradient_norms(p, cfg)[which];
  for (int iter = 0; iter < 200; ++iter) {
    bool moved = false;
    for (int k = 0; k < 4; ++k) {
      for (double sgn : {1.0, -1.0}) {
        Probe q = p;
        q[k] += sgn * step[k];
        q = box.clamp(q);
        double v = gradient_norms(q, cfg)[which];
        if (v > best) {
          best = v;
          p = q;
          moved = true;
        }
      }
    }
    if (!moved) {
      bool tiny = true;
      for (int k = 0; k < 4; ++k) {
        step[k] *= 0.5;
        tiny = tiny && step[k] < 1e-10;
      }
      if (tiny) break;
    }
  }
  return best;
}

double envelope_zeta(const ReflectorPair& pair, const TargetPoint& x) {
  return std::log(pair.envelope_z(x).transformed);
}

double envelope_r(const ReflectorPair& pair, const Direction& m) {
  return std::log(pair.envelope_rho(m).transformed);
}

}  // namespace

LipschitzReport lipschitz_report(const ReflectorPair& pair, const SourceAperture& src_ap,
                                 const TargetAperture& tgt_ap, int n_samples, std::uint64_t seed,
                                 int n_probe) {
  src_ap.check();
  tgt_ap.check();
  if (n_probe < 2) throw Error(ErrorCode::kInvalidInput, "n_probe must be >= 2");
  const OpticalConfig& cfg = pair.config();
  const bool wrap = src_ap.full_azimuth();
  ProbeBox box{{src_ap.mz_min, src_ap.phi_min, tgt_ap.x_min, tgt_ap.y_min},
               {src_ap.mz_max, src_ap.phi_max, tgt_ap.x_max, tgt_ap.y_max},
               wrap};
  auto mz = linspace(src_ap.mz_min, src_ap.mz_max, n_probe, true);
  auto phi = linspace(src_ap.phi_min, src_ap.phi_max, n_probe, !wrap);
  auto xs = linspace(tgt_ap.x_min, tgt_ap.x_max, n_probe, true);
  auto ys = linspace(tgt_ap.y_min, tgt_ap.y_max, n_probe, true);

  const std::size_t np = static_cast<std::size_t>(n_probe);
  const std::size_t total = np * np * np * np;
  std::vector<std::array<double, 2>> norms(total);
  auto probe_at = [&](std::size_t k) {
    return Probe{mz[k / (np * np * np)], phi[(k / (np * np)) % np], xs[(k / np) % np], ys[k % np]};
  };
  const auto nt = static_cast<std::ptrdiff_t>(total);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t k = 0; k < nt; ++k) {
    norms[static_cast<std::size_t>(k)] = gradient_norms(probe_at(static_cast<std::size_t>(k)), cfg);
  }

  std::array<double, 4> step{(src_ap.mz_max - src_ap.mz_min) / (n_probe - 1),
                             src_ap.phi_span() / (n_probe - 1),
                             (tgt_ap.x_max - tgt_ap.x_min) / (n_probe - 1),
                             (tgt_ap.y_max - tgt_ap.y_min) / (n_probe - 1)};
  std::array<double, 2> maxima{0.0, 0.0};
  for (int which = 0; which < 2; ++which) {
    std::vector<std::size_t> order(total);
    for (std::size_t k = 0; k < total; ++k) order[k] = k;
    const std::size_t top = std::min<std::size_t>(8, total);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        return norms[a][which] > norms[b][which] ||
                               (norms[a][which] == norms[b][which] && a < b);
                      });
    for (std::size_t t = 0; t < top; ++t) {
      maxima[which] = std::max(maxima[which], polish_max(probe_at(order[t]), which, box, cfg, step));
    }
  }

  LipschitzReport rep;
  rep.K1 = maxima[0];
  rep.K2 = maxima[1];
  rep.source_diameter = src_ap.geodesic_diameter();
  rep.target_diameter = tgt_ap.diameter();
  rep.samples = static_cast<std::size_t>(std::max(n_samples, 0));

  // Half the pairs are far apart, half are short hops where the slope is sharpest.
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto random_probe = [&]() {
    return Probe{src_ap.mz_min + (src_ap.mz_max - src_ap.mz_min) * unit(rng),
                 src_ap.phi_min + src_ap.phi_span() * unit(rng),
                 tgt_ap.x_min + (tgt_ap.x_max - tgt_ap.x_min) * unit(rng),
                 tgt_ap.y_min + (tgt_ap.y_max - tgt_ap.y_min) * unit(rng)};
  };
  std::vector<std::pair<Probe, Probe>> pairs(rep.samples);
  for (std::size_t s = 0; s < rep.samples; ++s) {
    Probe a = random_probe();
    Probe b = random_probe();
    if (s % 2 == 1) {
      for (int k = 0; k < 4; ++k) b[k] = a[k] + 1e-3 * (b[k] - a[k]);
      b = box.clamp(b);
    }
    pairs[s] = {a, b};
  }
  std::vector<double> ratio_x(rep.samples, 0.0), ratio_m(rep.samples, 0.0);
  const auto ns = static_cast<std::ptrdiff_t>(rep.samples);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ss = 0; ss < ns; ++ss) {
    const auto s = static_cast<std::size_t>(ss);
    const auto& [a, b] = pairs[s];
    TargetPoint x1{{a[2], a[3]}}, x2{{b[2], b[3]}};
    double dx = (x1.x - x2.x).norm();
    if (dx > 1e-12 && rep.K1 > 0.0) {
      ratio_x[s] = std::abs(envelope_zeta(pair, x1) - envelope_zeta(pair, x2)) / (rep.K1 * dx);
    }
    Direction m1 = Direction::from_chart(a[0], a[1]);
    Direction m2 = Direction::from_chart(b[0], b[1]);
    double dm = std::acos(std::clamp(m1.vec().dot(m2.vec()), -1.0, 1.0));
    if (dm > 1e-12 && rep.K2 > 0.0) {
      ratio_m[s] = std::abs(envelope_r(pair, m1) - envelope_r(pair, m2)) / (rep.K2 * dm);
    }
  }
  for (std::size_t s = 0; s < rep.samples; ++s) {
    rep.max_ratio_x = std::max(rep.max_ratio_x, ratio_x[s]);
    rep.max_ratio_m = std::max(rep.max_ratio_m, ratio_m[s]);
  }

  const auto& pot = pair.potentials();
  const std::size_t star = pot.gauge_node;
  const double gauge = pot.r.at(star);
  for (double r : pot.r) rep.r_max_dev = std::max(rep.r_max_dev, std::abs(r - gauge));
  for (double z : pot.zeta) rep.zeta_max_dev = std::max(rep.zeta_max_dev, std::abs(z + gauge));
  double max_log_k = 0.0;
  for (const auto& x : pair.target_nodes()) {
    max_log_k = std::max(max_log_k, std::abs(log_cost(pair.source_nodes()[star], x, cfg)));
  }
  rep.r_bound = rep.K2 * rep.source_diameter;
  rep.zeta_bound = max_log_k + rep.K1 * rep.target_diameter;
  return rep;
}

ReflectorMeshes export_meshes(const ReflectorPair& pair, const SourceAperture& src_ap,
                              const TargetAperture& tgt_ap, int n_u, int n_v) {
  MeshGrids g = mesh_grids(src_ap, tgt_ap, n_u, n_v);
  return assemble_meshes(g, evaluate_rho(g.directions, pair), evaluate_z(g.points, pair), n_u,
                         n_v);
}

}  // namespace biref
