#pragma once

#include "errors.hpp"
#include "linalg.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace stdg {

enum class Domain { tetrahedron, triangle, interval };

/// Quadrature rule on a reference domain: the unit interval [0,1], the
/// triangle {ξ,η ≥ 0, ξ+η ≤ 1} or the tetrahedron {ξ,η,ζ ≥ 0, ξ+η+ζ ≤ 1}.
/// Points carry as many coordinates as the domain dimension; unused trailing
/// coordinates are zero.
struct QuadratureRule {
  Domain domain = Domain::interval;
  int degree = 0;
  std::vector<Vec3> points;
  std::vector<double> weights;

  [[nodiscard]] std::size_t size() const noexcept { return weights.size(); }
};

inline constexpr int max_quadrature_degree = 63;

namespace detail {

/// Gauss–Jacobi rule with n points for the weight (1−t)^alpha on [0,1],
/// computed with the Golub–Welsch eigenvalue method and polished by Newton.
inline void gauss_jacobi_unit(int n, double alpha, std::vector<double> &x, std::vector<double> &w) {
  // Recurrence on [-1,1] for weight (1-s)^alpha (1+s)^0.
  const double beta = 0.0;
  Matrix jac = Matrix::Zero(n, n);
  for (int k = 0; k < n; ++k) {
    const double ab = 2.0 * k + alpha + beta;
    double ak;
    if (k == 0)
      ak = (beta - alpha) / (alpha + beta + 2.0);
    else
      ak = (beta * beta - alpha * alpha) / (ab * (ab + 2.0));
    jac(k, k) = ak;
    if (k + 1 < n) {
      const double m = k + 1.0;
      const double c = 2.0 * m + alpha + beta;
      const double bk = std::sqrt(4.0 * m * (m + alpha) * (m + beta) * (m + alpha + beta) /
                                  (c * c * (c + 1.0) * (c - 1.0)));
      jac(k, k + 1) = bk;
      jac(k + 1, k) = bk;
    }
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(jac);
  const double mu0 = std::pow(2.0, alpha + beta + 1.0) * std::tgamma(alpha + 1.0) *
                     std::tgamma(beta + 1.0) / std::tgamma(alpha + beta + 2.0);

  // Newton polish of the nodes on the Jacobi polynomial P_n^{(alpha,0)}.
  auto jacobi = [&](double s, double &p, double &dp) {
    double p0 = 1.0;
    double p1 = 0.5 * (alpha - beta + (alpha + beta + 2.0) * s);
    if (n == 0) {
      p = p0;
      dp = 0.0;
      return;
    }
    for (int k = 1; k < n; ++k) {
      const double kk = k + 1.0;
      const double c = 2.0 * kk + alpha + beta;
      const double a1 = 2.0 * kk * (kk + alpha + beta) * (c - 2.0);
      const double a2 = (c - 1.0) * (alpha * alpha - beta * beta);
      const double a3 = (c - 2.0) * (c - 1.0) * c;
      const double a4 = 2.0 * (kk + alpha - 1.0) * (kk + beta - 1.0) * c;
      const double p2 = ((a2 + a3 * s) * p1 - a4 * p0) / a1;
      p0 = p1;
      p1 = p2;
    }
    p = p1;
    const double nn = n;
    // d/ds P_n = (n+a+b+1)/2 P_{n-1}^{(a+1,b+1)}; use the derivative identity
    // (1-s^2) P_n' = n (a - b - (2n+a+b) s)/(2n+a+b) P_n + 2(n+a)(n+b)/(2n+a+b) P_{n-1}.
    const double c = 2.0 * nn + alpha + beta;
    dp = (nn * (alpha - beta - c * s) * p1 + 2.0 * (nn + alpha) * (nn + beta) * p0) /
         (c * (1.0 - s * s));
  };

  x.resize(n);
  w.resize(n);
  for (int k = 0; k < n; ++k) {
    double s = es.eigenvalues()(k);
    for (int it = 0; it < 3; ++it) {
      double p, dp;
      jacobi(s, p, dp);
      if (dp == 0.0)
        break;
      const double ds = p / dp;
      s -= ds;
      if (std::abs(ds) < 1e-16)
        break;
    }
    const double v0 = es.eigenvectors()(0, k);
    x[k] = 0.5 * (s + 1.0);
    w[k] = mu0 * v0 * v0 / std::pow(2.0, alpha + 1.0);
  }
}

inline int points_for_degree(int degree) { return degree / 2 + 1; }

} // namespace detail

/// Gauss–Legendre points on [0,1].
inline std::vector<double> gauss_legendre_nodes(int n) {
  std::vector<double> x, w;
  detail::gauss_jacobi_unit(n, 0.0, x, w);
  return x;
}

/// Quadrature rule exact for all polynomials of total degree ≤ `degree`.
/// Simplex rules are collapsed-coordinate (conical) products of Gauss–Jacobi
/// rules, so the point count grows as (degree/2 + 1)^dim.
inline QuadratureRule quad_rule(Domain domain, int degree) {
  if (degree < 0)
    throw ParameterError("quadrature degree must be non-negative, got " + std::to_string(degree));
  if (degree > max_quadrature_degree)
    throw ParameterError("quadrature degree " + std::to_string(degree) +
                         " not supported; maximum is " + std::to_string(max_quadrature_degree));
  const int n = detail::points_for_degree(degree);
  QuadratureRule rule;
  rule.domain = domain;
  rule.degree = degree;
  std::vector<double> x0, w0, x1, w1, x2, w2;
  switch (domain) {
  case Domain::interval:
    detail::gauss_jacobi_unit(n, 0.0, x0, w0);
    for (int a = 0; a < n; ++a) {
      rule.points.emplace_back(x0[a], 0.0, 0.0);
      rule.weights.push_back(w0[a]);
    }
    break;
  case Domain::triangle:
    detail::gauss_jacobi_unit(n, 1.0, x0, w0);
    detail::gauss_jacobi_unit(n, 0.0, x1, w1);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        rule.points.emplace_back(x0[a], x1[b] * (1.0 - x0[a]), 0.0);
        rule.weights.push_back(w0[a] * w1[b]);
      }
    break;
  case Domain::tetrahedron:
    detail::gauss_jacobi_unit(n, 2.0, x0, w0);
    detail::gauss_jacobi_unit(n, 1.0, x1, w1);
    detail::gauss_jacobi_unit(n, 0.0, x2, w2);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        for (int c = 0; c < n; ++c) {
          const double xi = x0[a];
          const double eta = x1[b] * (1.0 - xi);
          const double zeta = x2[c] * (1.0 - xi) * (1.0 - x1[b]);
          rule.points.emplace_back(xi, eta, zeta);
          rule.weights.push_back(w0[a] * w1[b] * w2[c]);
        }
    break;
  }
  return rule;
}

} // namespace stdg
