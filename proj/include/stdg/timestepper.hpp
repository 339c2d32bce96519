#pragma once

#include "boundary.hpp"
#include "errors.hpp"
#include "krylov.hpp"
#include "operators.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace stdg {

/// Time-stepping algorithm. `automatic` uses the θ-scheme when p_γ = 0 and
/// the space-time Picard iteration otherwise.
enum class Scheme { automatic, picard, theta };

inline Scheme parse_scheme(const std::string &s) {
  if (s == "auto")
    return Scheme::automatic;
  if (s == "picard")
    return Scheme::picard;
  if (s == "theta")
    return Scheme::theta;
  throw ConfigError("unknown scheme '" + s + "'");
}

struct CaseConfig {
  int p = 1;
  int p_gamma = 0;
  /// Kinematic viscosity.
  double nu = 0.0;
  /// Implicitness factor of the θ-scheme.
  double theta = 1.0;
  double cfl = 0.5;
  double t_end = 0.1;
  /// Fixed slab size; CFL-based when ≤ 0.
  double dt = 0.0;
  Scheme scheme = Scheme::automatic;

  VectorFunction source;
  VectorFunction initial_velocity;
  ScalarFunction initial_pressure;
  BoundarySpec boundary;

  SolverConfig pressure_solver;
  SolverConfig viscous_solver;

  /// Simulated-time interval between outputs; ≤ 0 writes only the first and
  /// last states.
  double output_interval = 0.0;
  /// Stop once ‖v̂^{n+1} − v̂^n‖∞/Δt falls below this value (disabled when ≤ 0).
  double steady_tolerance = 0.0;
  int max_steps = std::numeric_limits<int>::max();

  void validate() const {
    if (p < 0 || p > max_space_degree)
      throw ParameterError("p out of range");
    if (p_gamma < 0 || p_gamma > max_time_degree)
      throw ParameterError("p_gamma out of range");
    if (!(theta >= 0.5 && theta <= 1.0))
      throw ParameterError("theta must lie in [1/2, 1]");
    if (!(cfl > 0.0))
      throw ParameterError("CFL number must be positive");
    if (!(nu >= 0.0))
      throw ParameterError("viscosity must be non-negative");
    if (!(t_end >= 0.0))
      throw ParameterError("end time must be non-negative");
    if (scheme == Scheme::theta && p_gamma != 0)
      throw ConfigError("the theta scheme requires p_gamma = 0");
    pressure_solver.validate();
    viscous_solver.validate();
  }

  [[nodiscard]] Scheme resolved_scheme() const {
    if (scheme != Scheme::automatic)
      return scheme;
    return p_gamma == 0 ? Scheme::theta : Scheme::picard;
  }
};

/// Solver statistics of one time step.
struct StepStats {
  int pressure_iterations = 0;
  int viscous_iterations = 0;
  /// ‖δp̂‖₂ of every Picard iteration.
  std::vector<double> corrections;
  SolveStats last_pressure;
  SolveStats last_viscous;
};

/// Linear-solver failure inside a time step.
class StepFailure : public Error {
public:
  StepFailure(const std::string &what, int step, SolveStats stats)
      : Error("step " + std::to_string(step) + ": " + what), step_(step), stats_(stats) {}

  [[nodiscard]] int step() const noexcept { return step_; }
  [[nodiscard]] const SolveStats &stats() const noexcept { return stats_; }

private:
  int step_;
  SolveStats stats_;
};

namespace detail {

/// Replicates the end-of-slab state of a space-time field over the whole slab.
inline Field replicate_end(const Bases &b, const Field &f, int n_space) {
  const int ng = b.n_gamma();
  const auto nb = Eigen::Index(n_space) * ng;
  Field out(f.size());
  for (Eigen::Index e = 0; e < f.size() / nb; ++e) {
    const Vector end = at_time(b, f.data() + e * nb, n_space, 1.0);
    for (int a = 0; a < ng; ++a)
      out.segment(e * nb + Eigen::Index(a) * n_space, n_space) = end;
  }
  return out;
}

inline void require(const SolveStats &s, const char *what, int step) {
  if (!s.converged)
    throw StepFailure(std::string(what) + " solve did not converge (residual " + std::to_string(s.residual) +
                          " after " + std::to_string(s.iterations) + " iterations)",
                      step, s);
}

/// Solves the viscous system for one component in incremental form around x:
/// the tolerance applies to the correction, which keeps near-steady updates
/// accurate.
inline SolveStats viscous_solve(const Discretization &disc, const CaseConfig &cfg, double dt, const Field &rhs,
                                Field &x) {
  const auto &ops = disc.ops();
  if (cfg.nu == 0.0) {
    // Block-diagonal mass system: invert directly.
    Field out = disc.primal_zero();
    const int np = disc.primal_block();
    for (int i = 0; i < disc.num_tets(); ++i)
      kron_apply(ops.time_step_inv, ops.tet_mass_inv(i), block(rhs, i, np), block(out, i, np));
    x = std::move(out);
    return {0, 0.0, true};
  }
  auto apply = [&](const Vector &v) { return viscous_apply(disc, v, cfg.nu, dt); };
  const Vector r0 = rhs - apply(x);
  Vector e = Vector::Zero(r0.size());
  const auto st = solve(apply, r0, e, cfg.viscous_solver, disc.bases().p_gamma());
  x += e;
  return st;
}

/// Pressure solve from a zero initial guess. `reference_norm` sets the scale of
/// the relative tolerance when the right side is an increment.
inline SolveStats pressure_solve(const Discretization &disc, const CaseConfig &cfg, double dt, Field rhs, Field &x,
                                 double reference_norm = 0.0) {
  auto apply = [&](const Vector &v) { return pressure_apply(disc, v, dt); };
  project_to_range(disc, rhs);
  x = Vector::Zero(rhs.size());
  return solve(apply, rhs, x, cfg.pressure_solver, disc.bases().p_gamma(), reference_norm);
}

/// Common first half of a step: convection, viscous solve and projection to
/// the dual grid, giving F̂v. `lambda` is the pressure contribution to subtract.
inline VectorField predictor(const Discretization &disc, const CaseConfig &cfg, const VectorField &vbar_prev,
                             const VectorField &vhat, const VectorField *lambda, const VectorField &bc_rhs,
                             double t_n, double dt, StepStats &stats, int step) {
  const auto &ops = disc.ops();
  const VectorField vbar = dual_to_primal(disc, vhat);
  const VectorField ups = convective_residual(disc, vbar, t_n, dt);
  VectorField vnew;
  for (int c = 0; c < 3; ++c) {
    Field rhs = primal_mass_apply(disc, ops.time_minus, vbar_prev[c]) - ups[c] + bc_rhs[c];
    if (lambda)
      rhs -= primal_mass_apply(disc, ops.time_plus - ops.time_circ, (*lambda)[c]);
    vnew[c] = vbar[c];
    const auto st = viscous_solve(disc, cfg, dt, rhs, vnew[c]);
    stats.viscous_iterations += st.iterations;
    stats.last_viscous = st;
    require(st, "viscous", step);
  }
  VectorField fv = primal_to_dual(disc, vnew);
  add_source(disc, fv, cfg.source, t_n, dt);
  add_outlet_pressure(disc, fv, t_n, dt);
  apply_velocity_bc(disc, fv, t_n, dt);
  return fv;
}

inline VectorField initial_guess(const Discretization &disc, const SolutionState &s, double dt) {
  VectorField v;
  for (int c = 0; c < 3; ++c)
    v[c] = replicate_end(disc.bases(), s.velocity[c], disc.bases().n_psi());
  apply_velocity_bc(disc, v, s.time + 0.0, dt);
  return v;
}

inline SolutionState finish(const Discretization &disc, const SolutionState &s, double dt, VectorField vhat,
                            Field p) {
  SolutionState out;
  out.time = s.time + dt;
  out.dt = dt;
  out.velocity = std::move(vhat);
  out.pressure = std::move(p);
  out.primal_velocity = dual_to_primal(disc, out.velocity);
  return out;
}

} // namespace detail

/// L2-projected initial state: velocity on the dual grid, pressure on the
/// primal grid, both constant in time over the first slab.
inline SolutionState initial_state(const Discretization &disc, const CaseConfig &cfg) {
  SolutionState s;
  s.time = 0.0;
  if (cfg.initial_velocity) {
    const VectorFunction v0 = [&cfg](const Vec3 &x, double) { return cfg.initial_velocity(x, 0.0); };
    s.velocity = project_dual(disc, v0, 0.0, 1.0);
  } else {
    s.velocity = disc.dual_zero3();
  }
  if (cfg.initial_pressure) {
    const ScalarFunction p0 = [&cfg](const Vec3 &x, double) { return cfg.initial_pressure(x, 0.0); };
    s.pressure = project_primal(disc, p0, 0.0, 1.0);
  } else {
    s.pressure = disc.primal_zero();
  }
  s.primal_velocity = dual_to_primal(disc, s.velocity);
  return s;
}

/// Largest velocity component sampled at the vertices and centre of every dual
/// element at the end of the slab, with prescribed boundary velocities imposed
/// so that a fluid at rest driven by a moving wall still sees the wall speed.
inline double max_velocity(const Discretization &disc, const SolutionState &state) {
  SolutionState s;
  s.velocity = state.velocity;
  apply_velocity_bc(disc, s.velocity, state.time, 1.0);
  double vmax = 0.0;
  for (int j = 0; j < disc.num_faces(); ++j) {
    const auto &e = disc.dual().elements[j];
    std::vector<Vec3> pts{e.face_points[0], e.face_points[1], e.face_points[2], e.left_apex, e.center};
    if (e.has_right)
      pts.push_back(e.right_apex);
    for (const auto &x : pts)
      vmax = std::max(vmax, eval_dual(disc, s.velocity, j, x, 1.0).cwiseAbs().maxCoeff());
  }
  return vmax;
}

/// Δt = CFL h_min / ((2p+1)(max|v| + ε)), reduced so that an integer number
/// of equal steps reaches t_end.
inline double cfl_dt(const Discretization &disc, const SolutionState &s, const CaseConfig &cfg) {
  double dt = cfg.dt;
  if (!(dt > 0.0)) {
    const double h = disc.mesh().min_insphere_diameter();
    dt = cfg.cfl * h / ((2 * disc.bases().p() + 1) * (max_velocity(disc, s) + 1e-14));
  }
  // Spread the remaining interval over equal steps so that no short final step
  // appears; the run still ends exactly on t_end.
  const double remaining = cfg.t_end - s.time;
  if (remaining > 0.0) {
    const double steps = std::max(1.0, std::ceil(remaining / dt * (1.0 - 1e-12)));
    dt = remaining / steps;
  }
  return dt;
}

/// One space-time slab with N_pic = p_γ + 1 Picard iterations of the
/// pressure-correction algorithm.
inline SolutionState picard_step(const Discretization &disc, const SolutionState &s, double dt,
                                 const CaseConfig &cfg, StepStats *stats_out = nullptr, int step = 0) {
  StepStats stats;
  const double t_n = s.time;
  const VectorField vbar_prev = dual_to_primal(disc, s.velocity);
  const VectorField bc_rhs = viscous_boundary_rhs(disc, cfg.nu, t_n, dt);
  VectorField vhat = detail::initial_guess(disc, s, dt);
  Field p = disc.primal_zero();
  const int n_pic = disc.bases().p_gamma() + 1;
  for (int k = 0; k < n_pic; ++k) {
    VectorField lambda;
    if (k > 0)
      lambda = pressure_lambda(disc, p, dt);
    const VectorField fv =
        detail::predictor(disc, cfg, vbar_prev, vhat, k > 0 ? &lambda : nullptr, bc_rhs, t_n, dt, stats, step);
    Field dp;
    const auto st = detail::pressure_solve(disc, cfg, dt, pressure_rhs(disc, fv, dt), dp);
    stats.pressure_iterations += st.iterations;
    stats.last_pressure = st;
    detail::require(st, "pressure", step);
    vhat = velocity_update(disc, fv, dp, dt);
    p += dp;
    stats.corrections.push_back(dp.norm());
  }
  if (!disc.has_outlet())
    subtract_mean(disc, p);
  auto out = detail::finish(disc, s, dt, std::move(vhat), std::move(p));
  if (!out.finite())
    throw NumericalBreakdown("non-finite state after step " + std::to_string(step));
  if (stats_out)
    *stats_out = std::move(stats);
  return out;
}

/// One step of the θ-scheme (p_γ = 0): the pressure unknown is
/// p̂^{n+θ} = θ p̂^{n+1} + (1 − θ) p̂^n, solved for the increment p̂^{n+1} − p̂^n.
inline SolutionState advance_theta(const Discretization &disc, const SolutionState &s, double dt,
                                   const CaseConfig &cfg, StepStats *stats_out = nullptr, int step = 0) {
  if (disc.bases().p_gamma() != 0)
    throw ConfigError("the theta scheme requires p_gamma = 0");
  StepStats stats;
  const double t_n = s.time;
  const VectorField vbar_prev = dual_to_primal(disc, s.velocity);
  const VectorField bc_rhs = viscous_boundary_rhs(disc, cfg.nu, t_n, dt);
  const VectorField vhat0 = detail::initial_guess(disc, s, dt);
  const VectorField fv = detail::predictor(disc, cfg, vbar_prev, vhat0, nullptr, bc_rhs, t_n, dt, stats, step);

  // The increment's right side shrinks to zero near a steady state, so the
  // tolerance is taken relative to the full pressure right side instead.
  const Field full = pressure_rhs(disc, fv, dt);
  const Field rhs = (full - pressure_apply(disc, s.pressure, dt)) / cfg.theta;
  Field delta;
  const auto st = detail::pressure_solve(disc, cfg, dt, rhs, delta, full.norm() / cfg.theta);
  stats.pressure_iterations += st.iterations;
  stats.last_pressure = st;
  detail::require(st, "pressure", step);
  if (!disc.has_outlet())
    subtract_mean(disc, delta);
  stats.corrections.push_back(delta.norm());

  VectorField vhat = velocity_update(disc, fv, s.pressure + cfg.theta * delta, dt);
  Field p = s.pressure + delta;
  auto out = detail::finish(disc, s, dt, std::move(vhat), std::move(p));
  if (!out.finite())
    throw NumericalBreakdown("non-finite state after step " + std::to_string(step));
  if (stats_out)
    *stats_out = std::move(stats);
  return out;
}

/// Per-step diagnostics.
struct StepRecord {
  int step = 0;
  double time = 0.0;
  double dt = 0.0;
  int pressure_iterations = 0;
  int viscous_iterations = 0;
  double kinetic_energy = 0.0;
  /// −dk/dt by a backward difference over the step.
  double dissipation = 0.0;
  /// max_i ‖Σ_j 𝒟_{i,j} v̂_j‖∞ after the step.
  double divergence = 0.0;
  /// ‖v̂^{n+1} − v̂^n‖∞ / Δt at the end of the slab.
  double steady_residual = 0.0;
};

struct RunResult {
  SolutionState state;
  std::vector<StepRecord> records;
  double initial_energy = 0.0;
  bool steady = false;
};

using OutputCallback = std::function<void(const SolutionState &, int step)>;

/// Largest end-of-slab coefficient change between two states.
inline double end_state_change(const Discretization &disc, const SolutionState &a, const SolutionState &b) {
  const int npsi = disc.bases().n_psi(), nd = disc.dual_block();
  double m = 0.0;
  for (int j = 0; j < disc.num_faces(); ++j)
    for (int c = 0; c < 3; ++c) {
      const Vector va = at_time(disc.bases(), detail::block(a.velocity[c], j, nd), npsi, 1.0);
      const Vector vb = at_time(disc.bases(), detail::block(b.velocity[c], j, nd), npsi, 1.0);
      m = std::max(m, (va - vb).cwiseAbs().maxCoeff());
    }
  return m;
}

/// Advances one step with the configured scheme.
inline SolutionState step(const Discretization &disc, const SolutionState &s, double dt, const CaseConfig &cfg,
                          StepStats *stats = nullptr, int index = 0) {
  return cfg.resolved_scheme() == Scheme::theta ? advance_theta(disc, s, dt, cfg, stats, index)
                                                : picard_step(disc, s, dt, cfg, stats, index);
}

/// Time loop from the given state to t_end (or a steady state).
inline RunResult run(const Discretization &disc, const CaseConfig &cfg, SolutionState state,
                     const OutputCallback &output = {}) {
  cfg.validate();
  RunResult res;
  res.initial_energy = kinetic_energy(disc, state.velocity);
  if (output)
    output(state, 0);
  double energy = res.initial_energy;
  double next_output = cfg.output_interval > 0.0 ? state.time + cfg.output_interval : cfg.t_end;
  int n = 0;
  while (state.time < cfg.t_end * (1.0 - 1e-14) && n < cfg.max_steps) {
    const double dt = cfl_dt(disc, state, cfg);
    StepStats stats;
    SolutionState next = step(disc, state, dt, cfg, &stats, n + 1);
    ++n;
    StepRecord rec;
    rec.step = n;
    rec.time = next.time;
    rec.dt = dt;
    rec.pressure_iterations = stats.pressure_iterations;
    rec.viscous_iterations = stats.viscous_iterations;
    rec.kinetic_energy = kinetic_energy(disc, next.velocity);
    rec.dissipation = -(rec.kinetic_energy - energy) / dt;
    rec.divergence = divergence(disc, next.velocity, dt).cwiseAbs().maxCoeff();
    rec.steady_residual = end_state_change(disc, next, state) / dt;
    energy = rec.kinetic_energy;
    res.records.push_back(rec);
    state = std::move(next);
    const bool steady = cfg.steady_tolerance > 0.0 && rec.steady_residual < cfg.steady_tolerance;
    const bool last = steady || state.time >= cfg.t_end * (1.0 - 1e-14) || n >= cfg.max_steps;
    if (output && (state.time >= next_output * (1.0 - 1e-12) || last)) {
      output(state, n);
      while (cfg.output_interval > 0.0 && next_output <= state.time * (1.0 + 1e-12))
        next_output += cfg.output_interval;
    }
    if (steady) {
      res.steady = true;
      break;
    }
  }
  res.state = std::move(state);
  return res;
}

} // namespace stdg
