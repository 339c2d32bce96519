#pragma once

#include "boundary.hpp"
#include "errors.hpp"
#include "linalg.hpp"
#include "mesh.hpp"
#include "operators.hpp"
#include "timestepper.hpp"

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace stdg {

/// A named flow problem: defaults for the run, the box used for generated
/// meshes, and the exact solution when one is known.
struct CaseDefinition {
  std::string name;
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Ones();
  CaseConfig config;
  VectorFunction exact_velocity;
  ScalarFunction exact_pressure;

  [[nodiscard]] bool has_exact() const { return bool(exact_velocity) && bool(exact_pressure); }
};

/// Arnold–Beltrami–Childress flow, an exact Navier–Stokes solution decaying
/// like e^{−νt} (steady for ν = 0).
inline VectorFunction abc_velocity(double nu) {
  return [nu](const Vec3 &x, double t) -> Vec3 {
    const double d = std::exp(-nu * t);
    return Vec3(std::sin(x[2]) + std::cos(x[1]), std::sin(x[0]) + std::cos(x[2]),
                std::sin(x[1]) + std::cos(x[0])) *
           d;
  };
}

inline ScalarFunction abc_pressure(double nu) {
  return [nu](const Vec3 &x, double t) -> double {
    return -(std::cos(x[0]) * std::sin(x[1]) + std::sin(x[0]) * std::cos(x[2]) +
             std::sin(x[2]) * std::cos(x[1])) *
           std::exp(-2.0 * nu * t);
  };
}

inline Vec3 taylor_green_velocity(const Vec3 &x) {
  return {std::sin(x[0]) * std::cos(x[1]) * std::cos(x[2]), -std::cos(x[0]) * std::sin(x[1]) * std::cos(x[2]), 0.0};
}

inline double taylor_green_pressure(const Vec3 &x) {
  return (std::cos(2 * x[0]) + std::cos(2 * x[1])) * (std::cos(2 * x[2]) + 2.0) / 16.0;
}

inline std::vector<std::string> case_names() {
  return {"abc-steady", "abc-unsteady", "taylor-green", "cavity", "custom"};
}

/// Built-in case by name; `nu` overrides the case's default viscosity.
inline CaseDefinition make_case(const std::string &name, std::optional<double> nu = std::nullopt) {
  constexpr double pi = std::numbers::pi;
  CaseDefinition c;
  c.name = name;
  auto &cfg = c.config;
  if (name == "abc-steady" || name == "abc-unsteady") {
    const bool steady = name == "abc-steady";
    cfg.nu = nu.value_or(steady ? 0.0 : 1.0);
    cfg.p = 1;
    cfg.p_gamma = steady ? 0 : 1;
    cfg.t_end = 0.1;
    c.lo = Vec3::Constant(-pi);
    c.hi = Vec3::Constant(pi);
    c.exact_velocity = abc_velocity(cfg.nu);
    c.exact_pressure = abc_pressure(cfg.nu);
    cfg.initial_velocity = c.exact_velocity;
    cfg.initial_pressure = c.exact_pressure;
    cfg.boundary = all_periodic();
  } else if (name == "taylor-green") {
    cfg.nu = nu.value_or(0.01);
    cfg.p = 2;
    cfg.p_gamma = 0;
    cfg.scheme = Scheme::picard;
    cfg.t_end = 1.0;
    c.lo = Vec3::Constant(-pi);
    c.hi = Vec3::Constant(pi);
    cfg.initial_velocity = [](const Vec3 &x, double) -> Vec3 { return taylor_green_velocity(x); };
    cfg.initial_pressure = [](const Vec3 &x, double) { return taylor_green_pressure(x); };
    cfg.boundary = all_periodic();
  } else if (name == "cavity") {
    // Re = U L / ν with unit lid speed and cavity width.
    cfg.nu = nu.value_or(0.01);
    cfg.p = 2;
    cfg.p_gamma = 0;
    cfg.theta = 1.0;
    // Only the steady state matters here; convection stays stable well above
    // the default CFL number, which shortens the transient considerably.
    cfg.cfl = 8.0;
    cfg.t_end = 200.0;
    cfg.steady_tolerance = 1e-6;
    c.lo = Vec3::Constant(-0.5);
    c.hi = Vec3::Constant(0.5);
    cfg.initial_velocity = [](const Vec3 &, double) -> Vec3 { return Vec3::Zero(); };
    cfg.initial_pressure = [](const Vec3 &, double) { return 1.0; };
    cfg.boundary = uniform_boundary({BcKind::no_slip, {}, {}});
    cfg.boundary.set(4, {BcKind::velocity, [](const Vec3 &, double) -> Vec3 { return {1.0, 0.0, 0.0}; }, {}});
  } else if (name == "custom") {
    cfg.nu = nu.value_or(0.0);
    cfg.boundary = all_periodic();
  } else {
    std::string known;
    for (const auto &n : case_names())
      known += " " + n;
    throw ConfigError("unknown case '" + name + "' (known:" + known + ")");
  }
  return c;
}

/// Mesh specification: "cube:n" for the built-in generator on the case box,
/// anything else is left to the caller as a file path.
inline std::optional<int> parse_cube_spec(const std::string &spec) {
  if (spec.rfind("cube:", 0) != 0)
    return std::nullopt;
  const std::string n = spec.substr(5);
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(n, &used);
  } catch (const std::exception &) {
    throw ConfigError("bad cube mesh specification '" + spec + "'");
  }
  if (used != n.size() || v < 1)
    throw ConfigError("bad cube mesh specification '" + spec + "'");
  return v;
}

// ---------------------------------------------------------------------------
// Errors against exact solutions.

struct L2Errors {
  double pressure = 0.0;
  double velocity = 0.0;
};

/// L2 errors of the end-of-slab state at time t. The exact pressure is shifted
/// by the constant that equalises the two domain means.
inline L2Errors l2_errors(const Discretization &disc, const SolutionState &state, const VectorFunction &exact_v,
                          const ScalarFunction &exact_p, double t) {
  const auto &b = disc.bases();
  const auto &mesh = disc.mesh();
  const int degree = 2 * b.p() + 4;
  const auto tet_rule = quad_rule(Domain::tetrahedron, degree);
  L2Errors out;

  double ev = 0.0;
  for (int j = 0; j < disc.num_faces(); ++j)
    for (const auto &pt : dual_quadrature(disc.dual().elements[j], tet_rule)) {
      const Vec3 vh = eval_dual(disc, state.velocity, j, pt.x, 1.0);
      const Vec3 ve = exact_v ? exact_v(pt.x, t) : Vec3::Zero().eval();
      ev += pt.weight * (vh - ve).squaredNorm();
    }
  out.velocity = std::sqrt(ev);

  // Pressure values at the quadrature points, then the gauge shift.
  const int nphi = b.n_phi(), np = disc.primal_block();
  std::vector<Vector> phi(tet_rule.size());
  for (std::size_t q = 0; q < tet_rule.size(); ++q)
    phi[q] = b.nodal.values(tet_rule.points[q]);
  std::vector<double> ph, pe, w;
  double mean_h = 0.0, mean_e = 0.0, vol = 0.0;
  for (int i = 0; i < disc.num_tets(); ++i) {
    const auto &g = mesh.geometry[i];
    const Vector c = at_time(b, state.pressure.data() + Eigen::Index(i) * np, nphi, 1.0);
    for (std::size_t q = 0; q < tet_rule.size(); ++q) {
      const double wq = tet_rule.weights[q] * std::abs(g.det);
      const double a = c.dot(phi[q]);
      const double e = exact_p ? exact_p(g.to_physical(tet_rule.points[q]), t) : 0.0;
      ph.push_back(a);
      pe.push_back(e);
      w.push_back(wq);
      mean_h += wq * a;
      mean_e += wq * e;
      vol += wq;
    }
  }
  const double shift = (mean_h - mean_e) / vol;
  double epr = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k)
    epr += w[k] * std::pow(ph[k] - pe[k] - shift, 2);
  out.pressure = std::sqrt(epr);
  return out;
}

// ---------------------------------------------------------------------------
// Convergence study.

struct ConvergenceRow {
  int p = 0;
  int p_gamma = 0;
  int n_elements = 0;
  double error_p = 0.0;
  double error_v = 0.0;
  /// Observed orders; absent on the first (coarsest) row.
  std::optional<double> order_p;
  std::optional<double> order_v;
  /// Domain volume, used for the mesh size h = (|Ω| / N_e)^{1/3}.
  double volume = 1.0;

  [[nodiscard]] double h() const { return std::cbrt(volume / n_elements); }
};

/// Fills the observed orders log(ε_c/ε_f)/log(h_c/h_f) from consecutive rows.
inline void compute_orders(std::vector<ConvergenceRow> &rows) {
  for (std::size_t k = 0; k < rows.size(); ++k) {
    rows[k].order_p.reset();
    rows[k].order_v.reset();
    if (k == 0)
      continue;
    const auto &c = rows[k - 1];
    auto &f = rows[k];
    const double lh = std::log(c.h() / f.h());
    if (!std::isfinite(c.error_p) || !std::isfinite(f.error_p) || lh == 0.0)
      continue;
    f.order_p = std::log(c.error_p / f.error_p) / lh;
    f.order_v = std::log(c.error_v / f.error_v) / lh;
  }
}

struct CaseRun {
  std::unique_ptr<Discretization> disc;
  RunResult result;
};

/// Builds the discretisation for a mesh and runs a configured case.
inline CaseRun run_case(const RawMesh &raw, const CaseConfig &cfg, const OutputCallback &output = {}) {
  cfg.validate();
  CaseRun r;
  r.disc = make_discretization(raw, cfg.boundary, cfg.p, cfg.p_gamma);
  r.result = run(*r.disc, cfg, initial_state(*r.disc, cfg), output);
  return r;
}

struct HarnessResult {
  std::vector<ConvergenceRow> rows;
  /// Failure messages of rows that could not be computed.
  std::vector<std::string> failures;
};

/// Runs a case with an exact solution on a sequence of cube meshes and
/// tabulates errors and observed orders. A failing mesh is reported and
/// skipped; the remaining meshes still run.
inline HarnessResult convergence_harness(const CaseDefinition &c, const std::vector<int> &cube_sizes) {
  if (!c.has_exact())
    throw ConfigError("case '" + c.name + "' has no exact solution");
  if (cube_sizes.size() < 2)
    throw ConfigError("a convergence study needs at least two meshes");
  HarnessResult out;
  for (int n : cube_sizes) {
    try {
      const auto raw = cube_mesh(n, c.lo, c.hi);
      auto run = run_case(raw, c.config);
      const auto err = l2_errors(*run.disc, run.result.state, c.exact_velocity, c.exact_pressure,
                                 run.result.state.time);
      ConvergenceRow row;
      row.p = c.config.p;
      row.p_gamma = c.config.p_gamma;
      row.n_elements = run.disc->num_tets();
      row.error_p = err.pressure;
      row.error_v = err.velocity;
      row.volume = run.disc->mesh().total_volume();
      out.rows.push_back(row);
    } catch (const Error &e) {
      out.failures.push_back("cube:" + std::to_string(n) + ": " + e.what());
    }
  }
  compute_orders(out.rows);
  return out;
}

} // namespace stdg
