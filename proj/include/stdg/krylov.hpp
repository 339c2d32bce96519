#pragma once

#include "errors.hpp"
#include "linalg.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace stdg {

enum class SolverKind { gmres, cg, automatic };

inline SolverKind parse_solver_kind(const std::string &s) {
  if (s == "gmres")
    return SolverKind::gmres;
  if (s == "cg")
    return SolverKind::cg;
  if (s == "auto")
    return SolverKind::automatic;
  throw ConfigError("unknown solver kind '" + s + "'");
}

struct SolverConfig {
  double tolerance = 1e-8;
  int restart = 40;
  int max_iterations = 10000;
  SolverKind kind = SolverKind::automatic;

  void validate() const {
    if (!(tolerance > 0.0))
      throw ParameterError("solver tolerance must be positive");
    if (restart < 1)
      throw ParameterError("GMRES restart length must be at least 1");
    if (max_iterations < 1)
      throw ParameterError("iteration cap must be at least 1");
  }
};

struct SolveStats {
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
};

using LinearOperator = std::function<Vector(const Vector &)>;

namespace detail {

inline void check_finite(double v, const char *where) {
  if (!std::isfinite(v))
    throw NumericalBreakdown(std::string("non-finite value in ") + where);
}

/// Relative breakdown threshold for Arnoldi / Lanczos vectors.
inline constexpr double breakdown_ratio = 1e-14;

} // namespace detail

/// Restarted GMRES with modified Gram-Schmidt and Givens rotations. Returns the
/// iterate with relative residual ‖b − Ax‖/‖b‖ ≤ tolerance, or the last
/// iterate with converged = false when the iteration cap is reached.
///
/// A positive `reference_norm` replaces ‖b‖ in the relative residual when it
/// is larger, for right sides that are increments of a larger system.
inline SolveStats gmres(const LinearOperator &apply, const Vector &rhs, Vector &x, const SolverConfig &cfg = {},
                        double reference_norm = 0.0) {
  cfg.validate();
  SolveStats st;
  const double rhs_norm = rhs.norm();
  detail::check_finite(rhs_norm, "gmres right side");
  const double bnorm = std::max(rhs_norm, reference_norm);
  if (x.size() != rhs.size())
    x = Vector::Zero(rhs.size());
  if (rhs_norm == 0.0) {
    x.setZero();
    st.converged = true;
    return st;
  }
  const int m = cfg.restart;
  std::vector<Vector> v(m + 1);
  Matrix h = Matrix::Zero(m + 1, m);
  Vector cs(m), sn(m), g(m + 1);

  Vector r = rhs - apply(x);
  double beta = r.norm();
  detail::check_finite(beta, "gmres residual");
  st.residual = beta / bnorm;
  while (st.iterations < cfg.max_iterations) {
    if (st.residual <= cfg.tolerance) {
      st.converged = true;
      return st;
    }
    v[0] = r / beta;
    g.setZero();
    g[0] = beta;
    int k = 0;
    bool breakdown = false;
    for (; k < m && st.iterations < cfg.max_iterations; ++k) {
      ++st.iterations;
      Vector w = apply(v[k]);
      for (int i = 0; i <= k; ++i) {
        h(i, k) = v[i].dot(w);
        w -= h(i, k) * v[i];
      }
      h(k + 1, k) = w.norm();
      detail::check_finite(h(k + 1, k), "gmres Arnoldi step");
      breakdown = h(k + 1, k) < detail::breakdown_ratio * bnorm;
      if (!breakdown)
        v[k + 1] = w / h(k + 1, k);
      for (int i = 0; i < k; ++i) {
        const double t = cs[i] * h(i, k) + sn[i] * h(i + 1, k);
        h(i + 1, k) = -sn[i] * h(i, k) + cs[i] * h(i + 1, k);
        h(i, k) = t;
      }
      const double den = std::hypot(h(k, k), h(k + 1, k));
      cs[k] = den == 0.0 ? 1.0 : h(k, k) / den;
      sn[k] = den == 0.0 ? 0.0 : h(k + 1, k) / den;
      h(k, k) = den;
      h(k + 1, k) = 0.0;
      g[k + 1] = -sn[k] * g[k];
      g[k] = cs[k] * g[k];
      st.residual = std::abs(g[k + 1]) / bnorm;
      if (breakdown || st.residual <= cfg.tolerance) {
        ++k;
        break;
      }
    }
    // Back substitution for the least-squares coefficients.
    Vector y = Vector::Zero(k);
    for (int i = k - 1; i >= 0; --i) {
      double s = g[i];
      for (int l = i + 1; l < k; ++l)
        s -= h(i, l) * y[l];
      y[i] = h(i, i) == 0.0 ? 0.0 : s / h(i, i);
    }
    for (int i = 0; i < k; ++i)
      x += y[i] * v[i];
    r = rhs - apply(x);
    beta = r.norm();
    detail::check_finite(beta, "gmres residual");
    st.residual = beta / bnorm;
    if (breakdown) {
      // Lucky breakdown: the Krylov space is invariant, so no further progress
      // is possible; report convergence only if the true residual agrees.
      st.converged = st.residual <= cfg.tolerance;
      return st;
    }
  }
  st.converged = st.residual <= cfg.tolerance;
  return st;
}

/// Conjugate gradients for symmetric positive (semi-)definite operators;
/// `reference_norm` as for gmres.
inline SolveStats cg(const LinearOperator &apply, const Vector &rhs, Vector &x, const SolverConfig &cfg = {},
                     double reference_norm = 0.0) {
  cfg.validate();
  SolveStats st;
  const double rhs_norm = rhs.norm();
  detail::check_finite(rhs_norm, "cg right side");
  const double bnorm = std::max(rhs_norm, reference_norm);
  if (x.size() != rhs.size())
    x = Vector::Zero(rhs.size());
  if (rhs_norm == 0.0) {
    x.setZero();
    st.converged = true;
    return st;
  }
  // Outer loop restarts from the true residual whenever the recursively
  // updated one claims convergence but the true one disagrees.
  for (;;) {
    Vector r = rhs - apply(x);
    double rr = r.squaredNorm();
    detail::check_finite(rr, "cg residual");
    st.residual = std::sqrt(rr) / bnorm;
    if (st.residual <= cfg.tolerance) {
      st.converged = true;
      return st;
    }
    if (st.iterations >= cfg.max_iterations)
      return st;
    Vector p = r;
    double rec = st.residual;
    while (rec > cfg.tolerance && st.iterations < cfg.max_iterations) {
      ++st.iterations;
      const Vector ap = apply(p);
      const double pap = p.dot(ap);
      detail::check_finite(pap, "cg step");
      if (std::abs(pap) <= detail::breakdown_ratio * detail::breakdown_ratio * bnorm * bnorm) {
        st.residual = (rhs - apply(x)).norm() / bnorm;
        st.converged = st.residual <= cfg.tolerance;
        return st;
      }
      const double alpha = rr / pap;
      x += alpha * p;
      r -= alpha * ap;
      const double rr_new = r.squaredNorm();
      detail::check_finite(rr_new, "cg residual");
      rec = std::sqrt(rr_new) / bnorm;
      p = r + (rr_new / rr) * p;
      rr = rr_new;
    }
  }
}

/// Resolves SolverKind::automatic: CG for the symmetric p_γ = 0 systems,
/// GMRES otherwise.
inline SolverKind resolve_kind(SolverKind kind, int p_gamma) {
  if (kind != SolverKind::automatic)
    return kind;
  return p_gamma == 0 ? SolverKind::cg : SolverKind::gmres;
}

inline SolveStats solve(const LinearOperator &apply, const Vector &rhs, Vector &x, const SolverConfig &cfg,
                        int p_gamma, double reference_norm = 0.0) {
  return resolve_kind(cfg.kind, p_gamma) == SolverKind::cg ? cg(apply, rhs, x, cfg, reference_norm)
                                                           : gmres(apply, rhs, x, cfg, reference_norm);
}

} // namespace stdg
