#pragma once

#include "errors.hpp"
#include "linalg.hpp"
#include "quadrature.hpp"

#include <array>
#include <cmath>
#include <string>
#include <vector>

namespace stdg {

inline constexpr int max_space_degree = 5;
inline constexpr int max_time_degree = 4;

/// Number of polynomials of total degree ≤ p in three variables.
constexpr int space_dofs(int p) noexcept { return (p + 1) * (p + 2) * (p + 3) / 6; }

/// Exponent triples with total degree ≤ p, ordered by total degree and then
/// lexicographically descending in the first exponent. The first entry is the
/// constant and, for p ≥ 1, the next three are x, y, z.
inline std::vector<std::array<int, 3>> exponent_triples(int p) {
  std::vector<std::array<int, 3>> out;
  for (int deg = 0; deg <= p; ++deg)
    for (int a = deg; a >= 0; --a)
      for (int b = deg - a; b >= 0; --b)
        out.push_back({a, b, deg - a - b});
  return out;
}

namespace detail {

inline void check_space_degree(int p) {
  if (p < 0 || p > max_space_degree)
    throw ParameterError("spatial degree must lie in [0, " + std::to_string(max_space_degree) +
                         "], got " + std::to_string(p));
}

/// Monomials x^a y^b z^c of a triple list, with optional gradients.
inline void eval_monomials(const std::vector<std::array<int, 3>> &exps, const Vec3 &x, double *values,
                           Vec3 *grads) {
  int pmax = 0;
  for (const auto &e : exps)
    pmax = std::max({pmax, e[0], e[1], e[2]});
  std::array<std::array<double, max_space_degree * 3 + 2>, 3> pw{};
  for (int d = 0; d < 3; ++d) {
    pw[d][0] = 1.0;
    for (int k = 1; k <= pmax; ++k)
      pw[d][k] = pw[d][k - 1] * x[d];
  }
  for (std::size_t k = 0; k < exps.size(); ++k) {
    const auto &e = exps[k];
    values[k] = pw[0][e[0]] * pw[1][e[1]] * pw[2][e[2]];
    if (grads) {
      grads[k][0] = e[0] ? e[0] * pw[0][e[0] - 1] * pw[1][e[1]] * pw[2][e[2]] : 0.0;
      grads[k][1] = e[1] ? e[1] * pw[0][e[0]] * pw[1][e[1] - 1] * pw[2][e[2]] : 0.0;
      grads[k][2] = e[2] ? e[2] * pw[0][e[0]] * pw[1][e[1]] * pw[2][e[2] - 1] : 0.0;
    }
  }
}

} // namespace detail

/// Lagrange basis on the reference tetrahedron through the equispaced nodes
/// (j1/p, j2/p, j3/p). Each basis function is stored as monomial coefficients
/// obtained from the interpolation (Vandermonde) system.
class NodalBasis {
public:
  explicit NodalBasis(int p) : degree_(p) {
    detail::check_space_degree(p);
    exps_ = exponent_triples(p);
    const int n = static_cast<int>(exps_.size());
    nodes_.reserve(n);
    if (p == 0) {
      nodes_.emplace_back(0.25, 0.25, 0.25);
    } else {
      for (const auto &e : exps_)
        nodes_.emplace_back(double(e[0]) / p, double(e[1]) / p, double(e[2]) / p);
    }
    // vandermonde(j, r) = node_j^r; coeffs(k, r) solves coeffs * V^T = I.
    Matrix vander(n, n);
    std::vector<double> row(n);
    for (int j = 0; j < n; ++j) {
      detail::eval_monomials(exps_, nodes_[j], row.data(), nullptr);
      for (int r = 0; r < n; ++r)
        vander(j, r) = row[r];
    }
    coeffs_ = vander.fullPivLu().inverse().transpose();
  }

  [[nodiscard]] int degree() const noexcept { return degree_; }
  [[nodiscard]] int size() const noexcept { return static_cast<int>(exps_.size()); }
  [[nodiscard]] const std::vector<Vec3> &nodes() const noexcept { return nodes_; }
  /// coefficients()(k, r): coefficient of monomial r in basis function k.
  [[nodiscard]] const Matrix &coefficients() const noexcept { return coeffs_; }
  [[nodiscard]] const std::vector<std::array<int, 3>> &monomials() const noexcept { return exps_; }

  /// Values of all basis functions at a reference point.
  void eval(const Vec3 &xi, double *values) const {
    std::array<double, space_dofs(max_space_degree)> mono{};
    detail::eval_monomials(exps_, xi, mono.data(), nullptr);
    Eigen::Map<const Vector> m(mono.data(), size());
    Eigen::Map<Vector>(values, size()).noalias() = coeffs_ * m;
  }

  /// Values and reference gradients at a reference point.
  void eval(const Vec3 &xi, double *values, Vec3 *grads) const {
    std::array<double, space_dofs(max_space_degree)> mono{};
    std::array<Vec3, space_dofs(max_space_degree)> mgrad{};
    detail::eval_monomials(exps_, xi, mono.data(), mgrad.data());
    const int n = size();
    for (int k = 0; k < n; ++k) {
      double v = 0.0;
      Vec3 g = Vec3::Zero();
      for (int r = 0; r < n; ++r) {
        v += coeffs_(k, r) * mono[r];
        g += coeffs_(k, r) * mgrad[r];
      }
      values[k] = v;
      grads[k] = g;
    }
  }

  [[nodiscard]] Vector values(const Vec3 &xi) const {
    Vector v(size());
    eval(xi, v.data());
    return v;
  }

private:
  int degree_;
  std::vector<std::array<int, 3>> exps_;
  std::vector<Vec3> nodes_;
  Matrix coeffs_;
};

/// Taylor-type modal basis ψ_k(x) = Π_d ((x_d − c_d)/h)^{k_d} with total
/// degree ≤ p. Gradients pick up a factor 1/h per derivative.
class TaylorBasis {
public:
  explicit TaylorBasis(int p) : degree_(p) {
    detail::check_space_degree(p);
    exps_ = exponent_triples(p);
  }

  [[nodiscard]] int degree() const noexcept { return degree_; }
  [[nodiscard]] int size() const noexcept { return static_cast<int>(exps_.size()); }
  [[nodiscard]] const std::vector<std::array<int, 3>> &exponents() const noexcept { return exps_; }

  void eval(const Vec3 &x, const Vec3 &center, double h, double *values, Vec3 *grads = nullptr) const {
    if (!(h > 0.0))
      throw ParameterError("Taylor basis scaling length must be positive");
    const Vec3 s = (x - center) / h;
    detail::eval_monomials(exps_, s, values, grads);
    if (grads)
      for (int k = 0; k < size(); ++k)
        grads[k] /= h;
  }

private:
  int degree_;
  std::vector<std::array<int, 3>> exps_;
};

/// Values (and optionally gradients) of every Taylor mode at x.
inline Vector taylor_eval(const Vec3 &x, const Vec3 &center, double h, int p,
                          std::vector<Vec3> *gradients = nullptr) {
  TaylorBasis basis(p);
  Vector v(basis.size());
  if (gradients) {
    gradients->resize(basis.size());
    basis.eval(x, center, h, v.data(), gradients->data());
  } else {
    basis.eval(x, center, h, v.data());
  }
  return v;
}

/// Lagrange polynomials on [0,1] through the Gauss–Legendre points.
class TimeBasis {
public:
  explicit TimeBasis(int p_gamma) : degree_(p_gamma) {
    if (p_gamma < 0 || p_gamma > max_time_degree)
      throw ParameterError("time degree must lie in [0, " + std::to_string(max_time_degree) +
                           "], got " + std::to_string(p_gamma));
    nodes_ = gauss_legendre_nodes(p_gamma + 1);
  }

  [[nodiscard]] int degree() const noexcept { return degree_; }
  [[nodiscard]] int size() const noexcept { return degree_ + 1; }
  [[nodiscard]] const std::vector<double> &nodes() const noexcept { return nodes_; }

  [[nodiscard]] double value(int k, double tau) const {
    double v = 1.0;
    for (int m = 0; m < size(); ++m)
      if (m != k)
        v *= (tau - nodes_[m]) / (nodes_[k] - nodes_[m]);
    return v;
  }

  [[nodiscard]] double derivative(int k, double tau) const {
    double sum = 0.0;
    for (int m = 0; m < size(); ++m) {
      if (m == k)
        continue;
      double term = 1.0 / (nodes_[k] - nodes_[m]);
      for (int q = 0; q < size(); ++q)
        if (q != k && q != m)
          term *= (tau - nodes_[q]) / (nodes_[k] - nodes_[q]);
      sum += term;
    }
    return sum;
  }

  [[nodiscard]] Vector values(double tau) const {
    Vector v(size());
    for (int k = 0; k < size(); ++k)
      v[k] = value(k, tau);
    return v;
  }

  [[nodiscard]] Vector derivatives(double tau) const {
    Vector v(size());
    for (int k = 0; k < size(); ++k)
      v[k] = derivative(k, tau);
    return v;
  }

private:
  int degree_;
  std::vector<double> nodes_;
};

inline NodalBasis nodal_coeffs(int p) { return NodalBasis(p); }
inline TimeBasis time_basis(int p_gamma) { return TimeBasis(p_gamma); }

} // namespace stdg
