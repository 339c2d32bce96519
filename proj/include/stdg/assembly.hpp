#pragma once

#include "basis.hpp"
#include "errors.hpp"
#include "linalg.hpp"
#include "mesh.hpp"
#include "quadrature.hpp"

#include <array>
#include <functional>
#include <string>
#include <vector>

namespace stdg {

/// σ_ij = (r − 2i + ℓ)/(r − ℓ): +1 for the left tet, −1 for the right tet.
inline double sigma_sign(int left, int right, int i) {
  if (i != left && i != right)
    throw AdjacencyError("tet " + std::to_string(i) + " is neither left (" + std::to_string(left) +
                         ") nor right (" + std::to_string(right) + ")");
  return double(right - 2 * i + left) / double(right - left);
}

/// Sign of tet i relative to the orientation of face j.
inline double sigma_sign(const PrimalMesh &mesh, int i, int j) {
  const auto &f = mesh.faces.at(j);
  if (f.is_boundary()) {
    if (i == f.left)
      return 1.0;
    throw AdjacencyError("tet " + std::to_string(i) + " is not adjacent to face " + std::to_string(j));
  }
  return sigma_sign(f.left, f.right, i);
}

/// Polynomial degrees plus the three basis families shared by all elements.
struct Bases {
  Bases(int p, int p_gamma) : nodal(p), taylor(p), time(p_gamma) {}

  NodalBasis nodal;
  TaylorBasis taylor;
  TimeBasis time;

  [[nodiscard]] int p() const noexcept { return nodal.degree(); }
  [[nodiscard]] int p_gamma() const noexcept { return time.degree(); }
  [[nodiscard]] int n_phi() const noexcept { return nodal.size(); }
  [[nodiscard]] int n_psi() const noexcept { return taylor.size(); }
  [[nodiscard]] int n_gamma() const noexcept { return time.size(); }
  [[nodiscard]] int n_phi_st() const noexcept { return n_phi() * n_gamma(); }
  [[nodiscard]] int n_psi_st() const noexcept { return n_psi() * n_gamma(); }
};

/// One quadrature point of a physical region, in a given frame.
struct PhysicalPoint {
  Vec3 x;
  double weight;
};

/// Quadrature points covering the dual element of face j (both sub-tets),
/// expressed in the face frame.
inline std::vector<PhysicalPoint> dual_quadrature(const DualElement &e, const QuadratureRule &rule) {
  std::vector<PhysicalPoint> pts;
  for (int side = 0; side < (e.has_right ? 2 : 1); ++side) {
    const auto v = e.sub_tet(side);
    Mat3 b;
    for (int d = 0; d < 3; ++d)
      b.col(d) = v[d + 1] - v[0];
    const double det = std::abs(b.determinant());
    for (std::size_t q = 0; q < rule.size(); ++q)
      pts.push_back({v[0] + b * rule.points[q], rule.weights[q] * det});
  }
  return pts;
}

/// Quadrature points on a physical triangle.
inline std::vector<PhysicalPoint> triangle_quadrature(const std::array<Vec3, 3> &tri,
                                                      const QuadratureRule &rule) {
  const Vec3 e1 = tri[1] - tri[0], e2 = tri[2] - tri[0];
  const double jac = e1.cross(e2).norm();
  std::vector<PhysicalPoint> pts;
  for (std::size_t q = 0; q < rule.size(); ++q)
    pts.push_back({tri[0] + rule.points[q][0] * e1 + rule.points[q][1] * e2, rule.weights[q] * jac});
  return pts;
}

/// Reference-coordinate vertices of the sub-tet of the reference tetrahedron
/// spanned by local face f and the centroid.
inline std::array<Vec3, 4> reference_sub_tet(int f) {
  static const std::array<Vec3, 4> verts{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
  const auto &lf = local_face_vertices[f];
  return {verts[lf[0]], verts[lf[1]], verts[lf[2]], Vec3::Constant(0.25)};
}

/// Spatial blocks of one side (left or right tet) of a dual element.
struct SideBlocks {
  int tet = no_tet;
  int local_face = -1;
  /// ∫_{T_ij} φ_k ψ_l  (N_φ × N_ψ)
  Matrix proj;
  /// ∫_Γ φ_k ψ_l n_ij,d − ∫_{T_ij} ∂_d φ_k ψ_l  (N_φ × N_ψ)
  std::array<Matrix, 3> div;
  /// ∫_{T_ij} ψ_k ∂_d φ_l − σ_ij ∫_Γ ψ_k φ_l n_j,d  (N_ψ × N_φ)
  std::array<Matrix, 3> grad;

  // Products used by the matrix-free operators.
  /// M_i⁻¹ M_ij
  Matrix average;
  /// S_j⁻¹ M_ijᵀ
  Matrix back;
  /// S_j⁻¹ Q^d_ij
  std::array<Matrix, 3> mass_inv_grad;
};

struct FaceBlocks {
  /// Spatial Taylor mass ∫_{H_j} ψ_k ψ_l and its inverse.
  Matrix mass;
  Matrix mass_inv;
  int sides = 1;
  std::array<SideBlocks, 2> side;
  /// stiffness[a][b] = −Σ_d D^d_a S⁻¹ Q^d_b  (N_φ × N_φ)
  std::array<std::array<Matrix, 2>, 2> stiffness;
};

/// Per-tet spatial blocks as produced by assemble_tet.
struct TetBlocks {
  /// ∫_{T_i} φ_k φ_l
  Matrix mass;
  std::array<Matrix, 4> proj;
  std::array<std::array<Matrix, 3>, 4> div;
};

/// Per-face spatial blocks as produced by assemble_face.
struct FaceAssembly {
  Matrix mass;
  int sides = 1;
  std::array<std::array<Matrix, 3>, 2> grad;
};

/// Precomputed element operators for a mesh and a pair of degrees.
///
/// Every space-time block factors as (time matrix) ⊗ (spatial block); only the
/// factors are stored. Blocks that integrate over the slab scale with Δt and
/// are stored for Δt = 1. The `*_st` accessors materialise the dense
/// space-time blocks for a given slab size.
class ElementOperators {
public:
  ElementOperators(const PrimalMesh &mesh, const DualMesh &dual, const Bases &bases);

  [[nodiscard]] const Bases &bases() const noexcept { return *bases_; }
  [[nodiscard]] const FaceBlocks &face(int j) const { return faces_.at(j); }
  [[nodiscard]] const Matrix &tet_mass(int i) const { return tet_mass_.at(i); }
  [[nodiscard]] const Matrix &tet_mass_inv(int i) const { return tet_mass_inv_.at(i); }
  [[nodiscard]] int num_faces() const noexcept { return static_cast<int>(faces_.size()); }
  [[nodiscard]] int num_tets() const noexcept { return static_cast<int>(tet_mass_.size()); }

  /// Side index (0 = left, 1 = right) of tet i in face j.
  [[nodiscard]] int side_of(int i, int j) const {
    const auto &f = faces_.at(j);
    for (int s = 0; s < f.sides; ++s)
      if (f.side[s].tet == i)
        return s;
    throw AdjacencyError("tet " + std::to_string(i) + " is not adjacent to face " + std::to_string(j));
  }

  // Time factors on [0,1].
  /// ∫ γ_a γ_b dτ
  Matrix time_mass;
  /// γ_a(1) γ_b(1)
  Matrix time_plus;
  /// γ_a(0) γ_b(1): couples the previous slab's end state.
  Matrix time_minus;
  /// ∫ γ_a' γ_b dτ
  Matrix time_circ;
  Matrix time_mass_inv;
  /// (time_plus − time_circ)⁻¹
  Matrix time_step_inv;
  /// (time_plus − time_circ)⁻¹ time_mass
  Matrix time_step_inv_mass;
  /// time_mass (time_plus − time_circ)⁻¹ time_mass
  Matrix time_pressure;

  // Dense space-time blocks.
  [[nodiscard]] Matrix m_plus_st(int j) const { return kron(time_plus, face(j).mass); }
  [[nodiscard]] Matrix m_minus_st(int j) const { return kron(time_minus, face(j).mass); }
  [[nodiscard]] Matrix m_circ_st(int j) const { return kron(time_circ, face(j).mass); }
  /// M_j = M_j⁺ − M_j∘
  [[nodiscard]] Matrix m_step_st(int j) const { return kron(time_plus - time_circ, face(j).mass); }
  [[nodiscard]] Matrix mbar_dual_st(int j, double dt) const { return kron(dt * time_mass, face(j).mass); }
  [[nodiscard]] Matrix div_st(int i, int j, int d, double dt) const {
    return kron(dt * time_mass, face(j).side[side_of(i, j)].div[d]);
  }
  [[nodiscard]] Matrix grad_st(int i, int j, int d, double dt) const {
    return kron(dt * time_mass, face(j).side[side_of(i, j)].grad[d]);
  }
  [[nodiscard]] Matrix proj_st(int i, int j, double dt) const {
    return kron(dt * time_mass, face(j).side[side_of(i, j)].proj);
  }
  [[nodiscard]] Matrix m_primal_st(int i, double dt) const { return kron(dt * time_mass, tet_mass(i)); }
  [[nodiscard]] Matrix mbar_plus_st(int i) const { return kron(time_plus, tet_mass(i)); }
  [[nodiscard]] Matrix mbar_minus_st(int i) const { return kron(time_minus, tet_mass(i)); }
  [[nodiscard]] Matrix mbar_circ_st(int i) const { return kron(time_circ, tet_mass(i)); }

private:
  const Bases *bases_;
  std::vector<FaceBlocks> faces_;
  std::vector<Matrix> tet_mass_;
  std::vector<Matrix> tet_mass_inv_;
};

namespace detail {

inline int spatial_degree(const Bases &b) { return 2 * b.p() + 2; }

} // namespace detail

/// Dual mass and gradient blocks of face j: sub-tet quadrature for the
/// volume part, face quadrature for the jump part weighted by σ_ij.
inline FaceAssembly assemble_face(const PrimalMesh &mesh, const DualMesh &dual, int j, const Bases &bases) {
  const auto &f = mesh.faces.at(j);
  const auto &e = dual.elements.at(j);
  const int nphi = bases.n_phi(), npsi = bases.n_psi();
  const auto tet_rule = quad_rule(Domain::tetrahedron, detail::spatial_degree(bases));
  const auto tri_rule = quad_rule(Domain::triangle, detail::spatial_degree(bases));

  FaceAssembly out;
  out.sides = f.is_boundary() ? 1 : 2;
  out.mass = Matrix::Zero(npsi, npsi);
  std::vector<double> psi(npsi), phi(nphi);
  std::vector<Vec3> dphi(nphi);

  for (int s = 0; s < out.sides; ++s) {
    const int i = s == 0 ? f.left : f.right;
    const int lf = s == 0 ? f.left_local : f.right_local;
    const auto &g = mesh.geometry[i];
    const Vec3 shift = s == 0 ? Vec3::Zero() : f.right_shift;
    const auto ref = reference_sub_tet(lf);
    Mat3 b;
    for (int d = 0; d < 3; ++d)
      b.col(d) = ref[d + 1] - ref[0];
    const double wscale = std::abs(b.determinant()) * std::abs(g.det);
    const Mat3 jinv_t = g.inverse.transpose();
    for (int d = 0; d < 3; ++d)
      out.grad[s][d] = Matrix::Zero(npsi, nphi);

    for (std::size_t q = 0; q < tet_rule.size(); ++q) {
      const Vec3 xi = ref[0] + b * tet_rule.points[q];
      const Vec3 x = g.to_physical(xi) + shift;
      const double w = tet_rule.weights[q] * wscale;
      bases.taylor.eval(x, e.center, e.h, psi.data());
      bases.nodal.eval(xi, phi.data(), dphi.data());
      for (int k = 0; k < npsi; ++k)
        for (int l = 0; l < npsi; ++l)
          out.mass(k, l) += w * psi[k] * psi[l];
      for (int l = 0; l < nphi; ++l) {
        const Vec3 gx = jinv_t * dphi[l];
        for (int d = 0; d < 3; ++d)
          for (int k = 0; k < npsi; ++k)
            out.grad[s][d](k, l) += w * psi[k] * gx[d];
      }
    }

    const double sigma = s == 0 ? 1.0 : -1.0;
    for (const auto &pt : triangle_quadrature(e.face_points, tri_rule)) {
      bases.taylor.eval(pt.x, e.center, e.h, psi.data());
      bases.nodal.eval(g.to_reference(pt.x - shift), phi.data());
      for (int d = 0; d < 3; ++d) {
        const double c = -sigma * pt.weight * f.normal[d];
        for (int k = 0; k < npsi; ++k)
          for (int l = 0; l < nphi; ++l)
            out.grad[s][d](k, l) += c * psi[k] * phi[l];
      }
    }
  }
  return out;
}

/// Primal mass plus, for each face of tet i, the projection block M_ij and the
/// divergence blocks: face integral over Γ_j minus volume integral over T_ij.
inline TetBlocks assemble_tet(const PrimalMesh &mesh, const DualMesh &dual, int i, const Bases &bases) {
  const int nphi = bases.n_phi(), npsi = bases.n_psi();
  const auto tet_rule = quad_rule(Domain::tetrahedron, detail::spatial_degree(bases));
  const auto tri_rule = quad_rule(Domain::triangle, detail::spatial_degree(bases));
  const auto &g = mesh.geometry.at(i);
  const Mat3 jinv_t = g.inverse.transpose();

  TetBlocks out;
  out.mass = Matrix::Zero(nphi, nphi);
  std::vector<double> psi(npsi), phi(nphi);
  std::vector<Vec3> dphi(nphi);
  for (std::size_t q = 0; q < tet_rule.size(); ++q) {
    bases.nodal.eval(tet_rule.points[q], phi.data());
    const double w = tet_rule.weights[q] * std::abs(g.det);
    for (int k = 0; k < nphi; ++k)
      for (int l = 0; l < nphi; ++l)
        out.mass(k, l) += w * phi[k] * phi[l];
  }

  for (int lf = 0; lf < 4; ++lf) {
    const int j = mesh.tet_faces[i][lf];
    const auto &e = dual.elements.at(j);
    const Vec3 shift = mesh.frame_shift(i, j);
    const Vec3 n_out = mesh.outward_normal(i, j);
    out.proj[lf] = Matrix::Zero(nphi, npsi);
    for (int d = 0; d < 3; ++d)
      out.div[lf][d] = Matrix::Zero(nphi, npsi);

    const auto ref = reference_sub_tet(lf);
    Mat3 b;
    for (int d = 0; d < 3; ++d)
      b.col(d) = ref[d + 1] - ref[0];
    const double wscale = std::abs(b.determinant()) * std::abs(g.det);
    for (std::size_t q = 0; q < tet_rule.size(); ++q) {
      const Vec3 xi = ref[0] + b * tet_rule.points[q];
      const Vec3 x = g.to_physical(xi) + shift;
      const double w = tet_rule.weights[q] * wscale;
      bases.taylor.eval(x, e.center, e.h, psi.data());
      bases.nodal.eval(xi, phi.data(), dphi.data());
      for (int k = 0; k < nphi; ++k) {
        const Vec3 gx = jinv_t * dphi[k];
        for (int l = 0; l < npsi; ++l) {
          out.proj[lf](k, l) += w * phi[k] * psi[l];
          for (int d = 0; d < 3; ++d)
            out.div[lf][d](k, l) -= w * gx[d] * psi[l];
        }
      }
    }
    for (const auto &pt : triangle_quadrature(e.face_points, tri_rule)) {
      bases.taylor.eval(pt.x, e.center, e.h, psi.data());
      bases.nodal.eval(g.to_reference(pt.x - shift), phi.data());
      for (int d = 0; d < 3; ++d) {
        const double c = pt.weight * n_out[d];
        for (int k = 0; k < nphi; ++k)
          for (int l = 0; l < npsi; ++l)
            out.div[lf][d](k, l) += c * phi[k] * psi[l];
      }
    }
  }
  return out;
}

/// Space-time moments ∫_{H_j^st} ψ̃_k S_c of a vector source over one slab,
/// one vector of length N_ψ^st per component.
inline std::array<Vector, 3>
assemble_source(const DualMesh &dual, int j, const Bases &bases,
                const std::function<Vec3(const Vec3 &, double)> &source, double t_n, double dt) {
  const auto &e = dual.elements.at(j);
  const int npsi = bases.n_psi(), ng = bases.n_gamma();
  const auto pts = dual_quadrature(e, quad_rule(Domain::tetrahedron, detail::spatial_degree(bases)));
  const auto trule = quad_rule(Domain::interval, 2 * bases.p_gamma() + 2);
  std::array<Vector, 3> out;
  for (auto &v : out)
    v = Vector::Zero(npsi * ng);
  if (!source)
    return out;
  std::vector<double> psi(npsi);
  for (std::size_t m = 0; m < trule.size(); ++m) {
    const double tau = trule.points[m][0];
    const Vector gam = bases.time.values(tau);
    for (const auto &pt : pts) {
      const Vec3 s = source(pt.x, t_n + tau * dt);
      bases.taylor.eval(pt.x, e.center, e.h, psi.data());
      const double w = dt * trule.weights[m] * pt.weight;
      for (int a = 0; a < ng; ++a)
        for (int k = 0; k < npsi; ++k)
          for (int c = 0; c < 3; ++c)
            out[c][a * npsi + k] += w * gam[a] * psi[k] * s[c];
    }
  }
  return out;
}

inline ElementOperators::ElementOperators(const PrimalMesh &mesh, const DualMesh &dual, const Bases &bases)
    : bases_(&bases) {
  const int ng = bases.n_gamma();
  const auto trule = quad_rule(Domain::interval, 2 * bases.p_gamma() + 2);
  time_mass = Matrix::Zero(ng, ng);
  time_circ = Matrix::Zero(ng, ng);
  for (std::size_t m = 0; m < trule.size(); ++m) {
    const double tau = trule.points[m][0];
    const Vector g = bases.time.values(tau);
    const Vector dg = bases.time.derivatives(tau);
    time_mass += trule.weights[m] * g * g.transpose();
    time_circ += trule.weights[m] * dg * g.transpose();
  }
  const Vector g1 = bases.time.values(1.0);
  const Vector g0 = bases.time.values(0.0);
  time_plus = g1 * g1.transpose();
  time_minus = g0 * g1.transpose();
  time_mass_inv = time_mass.inverse();
  time_step_inv = (time_plus - time_circ).inverse();
  time_step_inv_mass = time_step_inv * time_mass;
  time_pressure = time_mass * time_step_inv * time_mass;

  const int ne = mesh.num_tets();
  tet_mass_.resize(ne);
  tet_mass_inv_.resize(ne);
  faces_.resize(mesh.num_faces());
  for (int j = 0; j < mesh.num_faces(); ++j) {
    auto fa = assemble_face(mesh, dual, j, bases);
    auto &fb = faces_[j];
    fb.mass = std::move(fa.mass);
    if (symmetric_condition(fb.mass) > 1e14)
      throw ConditioningError("dual mass matrix of face " + std::to_string(j) + " is singular");
    fb.mass_inv = spd_inverse(fb.mass);
    fb.sides = fa.sides;
    const auto &f = mesh.faces[j];
    for (int s = 0; s < fb.sides; ++s) {
      fb.side[s].tet = s == 0 ? f.left : f.right;
      fb.side[s].local_face = s == 0 ? f.left_local : f.right_local;
      fb.side[s].grad = std::move(fa.grad[s]);
    }
  }
  for (int i = 0; i < ne; ++i) {
    auto tb = assemble_tet(mesh, dual, i, bases);
    tet_mass_[i] = std::move(tb.mass);
    tet_mass_inv_[i] = spd_inverse(tet_mass_[i]);
    for (int lf = 0; lf < 4; ++lf) {
      const int j = mesh.tet_faces[i][lf];
      auto &sb = faces_[j].side[side_of(i, j)];
      sb.proj = std::move(tb.proj[lf]);
      sb.div = std::move(tb.div[lf]);
    }
  }
  for (auto &fb : faces_) {
    for (int s = 0; s < fb.sides; ++s) {
      auto &sb = fb.side[s];
      sb.average = tet_mass_inv_[sb.tet] * sb.proj;
      sb.back = fb.mass_inv * sb.proj.transpose();
      for (int d = 0; d < 3; ++d)
        sb.mass_inv_grad[d] = fb.mass_inv * sb.grad[d];
    }
    for (int a = 0; a < fb.sides; ++a)
      for (int b = 0; b < fb.sides; ++b) {
        Matrix k = Matrix::Zero(bases.n_phi(), bases.n_phi());
        for (int d = 0; d < 3; ++d)
          k.noalias() -= fb.side[a].div[d] * fb.side[b].mass_inv_grad[d];
        fb.stiffness[a][b] = std::move(k);
      }
  }
}

} // namespace stdg
