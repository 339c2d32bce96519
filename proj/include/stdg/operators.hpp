#pragma once

#include "assembly.hpp"
#include "boundary.hpp"
#include "errors.hpp"
#include "linalg.hpp"
#include "mesh.hpp"
#include "quadrature.hpp"

#include <array>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

namespace stdg {

/// Coefficients of one scalar field, element blocks stored back to back.
using Field = Vector;
/// One Field per Cartesian velocity component.
using VectorField = std::array<Vector, 3>;

/// How a face enters the operators.
enum class FaceKind { interior, dirichlet, slip, outlet };

/// Tables for the convective residual: basis values at quadrature points.
struct ConvectiveTables {
  QuadratureRule volume_rule;
  QuadratureRule time_rule;
  /// φ_k at the volume points (N_φ × N_q).
  Matrix phi;
  /// Reference-coordinate derivatives of φ_k at the volume points.
  std::array<Matrix, 3> dphi;
  /// γ_a at the time points (N_γ × N_m).
  Matrix gamma;

  struct FaceTable {
    /// Physical points in the face frame and area-scaled weights.
    std::vector<Vec3> x;
    Vector w;
    /// φ values of each side at the face points (N_q × N_φ).
    std::array<Matrix, 2> phi;
  };
  std::vector<FaceTable> faces;
};

/// Mesh, dual mesh, bases, assembled element operators and boundary data for
/// one discretisation. Holds internal pointers, so it is neither copyable nor
/// movable; use make_discretization.
class Discretization {
public:
  Discretization(const RawMesh &raw, BoundarySpec bc, int p, int p_gamma)
      : bc_(std::move(bc)), mesh_(prepare(raw, bc_)), dual_(build_dual(mesh_)), bases_(p, p_gamma),
        ops_(mesh_, dual_, bases_) {
    kinds_.resize(mesh_.num_faces(), FaceKind::interior);
    for (int j : mesh_.boundary_faces) {
      switch (bc_.at(mesh_.faces[j].tag).kind) {
      case BcKind::velocity:
      case BcKind::no_slip:
        kinds_[j] = FaceKind::dirichlet;
        break;
      case BcKind::slip:
        kinds_[j] = FaceKind::slip;
        break;
      case BcKind::pressure_outlet:
        kinds_[j] = FaceKind::outlet;
        has_outlet_ = true;
        break;
      case BcKind::periodic:
        throw PairingError("periodic face " + std::to_string(j) + " left unpaired");
      }
    }
    build_tables();
  }

  Discretization(const Discretization &) = delete;
  Discretization &operator=(const Discretization &) = delete;

  [[nodiscard]] const PrimalMesh &mesh() const noexcept { return mesh_; }
  [[nodiscard]] const DualMesh &dual() const noexcept { return dual_; }
  [[nodiscard]] const Bases &bases() const noexcept { return bases_; }
  [[nodiscard]] const ElementOperators &ops() const noexcept { return ops_; }
  [[nodiscard]] const BoundarySpec &boundary() const noexcept { return bc_; }
  [[nodiscard]] const ConvectiveTables &tables() const noexcept { return tables_; }

  [[nodiscard]] FaceKind kind(int j) const { return kinds_.at(j); }
  [[nodiscard]] const BoundaryCondition &condition(int j) const { return bc_.at(mesh_.faces.at(j).tag); }
  /// True when some face carries a prescribed pressure, which fixes the gauge.
  [[nodiscard]] bool has_outlet() const noexcept { return has_outlet_; }

  [[nodiscard]] int num_tets() const noexcept { return mesh_.num_tets(); }
  [[nodiscard]] int num_faces() const noexcept { return mesh_.num_faces(); }
  /// Space-time coefficients per tet / per dual element.
  [[nodiscard]] int primal_block() const noexcept { return bases_.n_phi_st(); }
  [[nodiscard]] int dual_block() const noexcept { return bases_.n_psi_st(); }
  [[nodiscard]] Eigen::Index primal_size() const noexcept {
    return Eigen::Index(num_tets()) * primal_block();
  }
  [[nodiscard]] Eigen::Index dual_size() const noexcept { return Eigen::Index(num_faces()) * dual_block(); }

  [[nodiscard]] Field primal_zero() const { return Field::Zero(primal_size()); }
  [[nodiscard]] Field dual_zero() const { return Field::Zero(dual_size()); }
  [[nodiscard]] VectorField primal_zero3() const { return {primal_zero(), primal_zero(), primal_zero()}; }
  [[nodiscard]] VectorField dual_zero3() const { return {dual_zero(), dual_zero(), dual_zero()}; }

private:
  static PrimalMesh prepare(const RawMesh &raw, const BoundarySpec &bc) {
    PrimalMesh m = build_connectivity(raw);
    bc.validate(m);
    const auto axes = bc.periodic_axes(m);
    if (axes[0] || axes[1] || axes[2])
      m = pair_periodic_faces(m, axes);
    return m;
  }

  void build_tables() {
    const int p = bases_.p(), pg = bases_.p_gamma();
    const int nphi = bases_.n_phi();
    auto &t = tables_;
    t.volume_rule = quad_rule(Domain::tetrahedron, 3 * p + 1);
    t.time_rule = quad_rule(Domain::interval, 3 * pg + 1);
    const auto nq = Eigen::Index(t.volume_rule.size());
    t.phi.resize(nphi, nq);
    for (auto &d : t.dphi)
      d.resize(nphi, nq);
    std::vector<double> phi(nphi);
    std::vector<Vec3> dphi(nphi);
    for (Eigen::Index q = 0; q < nq; ++q) {
      bases_.nodal.eval(t.volume_rule.points[q], phi.data(), dphi.data());
      for (int k = 0; k < nphi; ++k) {
        t.phi(k, q) = phi[k];
        for (int d = 0; d < 3; ++d)
          t.dphi[d](k, q) = dphi[k][d];
      }
    }
    t.gamma.resize(bases_.n_gamma(), Eigen::Index(t.time_rule.size()));
    for (std::size_t m = 0; m < t.time_rule.size(); ++m)
      t.gamma.col(Eigen::Index(m)) = bases_.time.values(t.time_rule.points[m][0]);

    const auto tri = quad_rule(Domain::triangle, 3 * p + 1);
    t.faces.resize(mesh_.num_faces());
    for (int j = 0; j < mesh_.num_faces(); ++j) {
      const auto &f = mesh_.faces[j];
      auto &ft = t.faces[j];
      const auto pts = triangle_quadrature(mesh_.face_points(j), tri);
      ft.w.resize(Eigen::Index(pts.size()));
      for (int s = 0; s < (f.is_boundary() ? 1 : 2); ++s)
        ft.phi[s].resize(Eigen::Index(pts.size()), nphi);
      for (std::size_t q = 0; q < pts.size(); ++q) {
        ft.x.push_back(pts[q].x);
        ft.w[Eigen::Index(q)] = pts[q].weight;
        for (int s = 0; s < (f.is_boundary() ? 1 : 2); ++s) {
          const int i = s == 0 ? f.left : f.right;
          const Vec3 shift = s == 0 ? Vec3::Zero() : f.right_shift;
          bases_.nodal.eval(mesh_.geometry[i].to_reference(pts[q].x - shift), phi.data());
          for (int k = 0; k < nphi; ++k)
            ft.phi[s](Eigen::Index(q), k) = phi[k];
        }
      }
    }
  }

  BoundarySpec bc_;
  PrimalMesh mesh_;
  DualMesh dual_;
  Bases bases_;
  ElementOperators ops_;
  std::vector<FaceKind> kinds_;
  bool has_outlet_ = false;
  ConvectiveTables tables_;
};

inline std::unique_ptr<Discretization> make_discretization(const RawMesh &raw, BoundarySpec bc, int p,
                                                           int p_gamma) {
  return std::make_unique<Discretization>(raw, std::move(bc), p, p_gamma);
}

/// Discrete solution on one slab [t, t + dt].
struct SolutionState {
  /// p̂_i per tet.
  Field pressure;
  /// v̂_j per dual element, per component.
  VectorField velocity;
  /// v̄_i per tet, per component.
  VectorField primal_velocity;
  double time = 0.0;
  double dt = 0.0;

  [[nodiscard]] bool finite() const {
    if (!pressure.allFinite())
      return false;
    for (int c = 0; c < 3; ++c)
      if (!velocity[c].allFinite() || !primal_velocity[c].allFinite())
        return false;
    return true;
  }
};

namespace detail {

inline const double *block(const Field &f, int e, int n) { return f.data() + Eigen::Index(e) * n; }
inline double *block(Field &f, int e, int n) { return f.data() + Eigen::Index(e) * n; }

inline void check_size(const Field &f, Eigen::Index n, const char *what) {
  if (f.size() != n)
    throw ParameterError(std::string(what) + ": expected " + std::to_string(n) + " coefficients, got " +
                         std::to_string(f.size()));
}

inline Matrix identity(int n) { return Matrix::Identity(n, n); }

/// Faces whose dual velocity is free (not fixed by a boundary condition).
inline bool velocity_free(FaceKind k) { return k == FaceKind::interior || k == FaceKind::outlet; }

} // namespace detail

// ---------------------------------------------------------------------------
// Projections between the grids.

/// v̄_i = M_i⁻¹ Σ_{j∈S_i} M_{i,j} v̂_j.
inline Field dual_to_primal(const Discretization &disc, const Field &vhat) {
  detail::check_size(vhat, disc.dual_size(), "dual_to_primal");
  const auto &ops = disc.ops();
  const Matrix id = detail::identity(disc.bases().n_gamma());
  const int np = disc.primal_block(), nd = disc.dual_block();
  Field out = disc.primal_zero();
  for (int j = 0; j < disc.num_faces(); ++j) {
    const auto &fb = ops.face(j);
    for (int s = 0; s < fb.sides; ++s)
      kron_apply(id, fb.side[s].average, detail::block(vhat, j, nd), detail::block(out, fb.side[s].tet, np));
  }
  return out;
}

inline VectorField dual_to_primal(const Discretization &disc, const VectorField &vhat) {
  return {dual_to_primal(disc, vhat[0]), dual_to_primal(disc, vhat[1]), dual_to_primal(disc, vhat[2])};
}

/// v̂_j = M̄_j⁻¹ (M_{ℓ,j}ᵀ v̄_ℓ + M_{r,j}ᵀ v̄_r); boundary faces use the interior side only.
inline Field primal_to_dual(const Discretization &disc, const Field &vbar) {
  detail::check_size(vbar, disc.primal_size(), "primal_to_dual");
  const auto &ops = disc.ops();
  const Matrix id = detail::identity(disc.bases().n_gamma());
  const int np = disc.primal_block(), nd = disc.dual_block();
  Field out = disc.dual_zero();
  for (int j = 0; j < disc.num_faces(); ++j) {
    const auto &fb = ops.face(j);
    for (int s = 0; s < fb.sides; ++s)
      kron_apply(id, fb.side[s].back, detail::block(vbar, fb.side[s].tet, np), detail::block(out, j, nd));
  }
  return out;
}

inline VectorField primal_to_dual(const Discretization &disc, const VectorField &vbar) {
  return {primal_to_dual(disc, vbar[0]), primal_to_dual(disc, vbar[1]), primal_to_dual(disc, vbar[2])};
}

// ---------------------------------------------------------------------------
// Convection.

/// Rusanov flux ½(F(v⁺) + F(v⁻))·n − ½ s_max (v⁺ − v⁻), F(v)·n = v (v·n),
/// s_max = 2 max(|v⁺|, |v⁻|).
inline Vec3 rusanov(const Vec3 &vm, const Vec3 &vp, const Vec3 &n) {
  const double smax = 2.0 * std::max(vm.norm(), vp.norm());
  return 0.5 * (vp * vp.dot(n) + vm * vm.dot(n)) - 0.5 * smax * (vp - vm);
}

/// Exterior velocity trace on a boundary face for the convective flux.
inline Vec3 exterior_velocity(const Discretization &disc, int j, const Vec3 &interior, const Vec3 &x,
                              double t) {
  const Vec3 &n = disc.mesh().faces[j].normal;
  switch (disc.kind(j)) {
  case FaceKind::dirichlet:
    return disc.condition(j).velocity_at(x, t);
  case FaceKind::slip:
    return interior - 2.0 * interior.dot(n) * n;
  case FaceKind::outlet:
  case FaceKind::interior:
    break;
  }
  return interior;
}

/// Space-time DG residual of the convective terms on every tet:
/// ∫_{∂T_i^st} φ̃ F̂·n − ∫_{T_i^st} ∇φ̃ · F(v̄), per component.
inline VectorField convective_residual(const Discretization &disc, const VectorField &vbar, double t_n,
                                       double dt) {
  for (const auto &v : vbar)
    detail::check_size(v, disc.primal_size(), "convective_residual");
  const auto &t = disc.tables();
  const auto &mesh = disc.mesh();
  const int nphi = disc.bases().n_phi(), ng = disc.bases().n_gamma();
  const int np = disc.primal_block();
  const auto nm = Eigen::Index(t.time_rule.size());
  Vector wt(nm);
  for (Eigen::Index m = 0; m < nm; ++m)
    wt[m] = dt * t.time_rule.weights[m];
  const Vector wq = Eigen::Map<const Vector>(t.volume_rule.weights.data(), Eigen::Index(t.volume_rule.size()));

  VectorField out = disc.primal_zero3();
  auto coeffs = [&](const Field &f, int i) { return Eigen::Map<const RowMatrix>(detail::block(f, i, np), ng, nphi); };
  auto residual = [&](Field &f, int i) { return Eigen::Map<RowMatrix>(detail::block(f, i, np), ng, nphi); };

  // Volume terms.
  std::array<Matrix, 3> vals;
  for (int i = 0; i < disc.num_tets(); ++i) {
    const auto &g = mesh.geometry[i];
    const Matrix w = wt * wq.transpose() * std::abs(g.det);
    for (int c = 0; c < 3; ++c)
      vals[c] = t.gamma.transpose() * coeffs(vbar[c], i) * t.phi; // N_m × N_q
    for (int c = 0; c < 3; ++c) {
      auto r = residual(out[c], i);
      for (int e = 0; e < 3; ++e) {
        Matrix h = Matrix::Zero(vals[0].rows(), vals[0].cols());
        for (int d = 0; d < 3; ++d)
          if (g.inverse(e, d) != 0.0)
            h += g.inverse(e, d) * vals[c].cwiseProduct(vals[d]);
        r.noalias() -= t.gamma * w.cwiseProduct(h) * t.dphi[e].transpose();
      }
    }
  }

  // Face terms.
  std::array<Matrix, 3> vl, vr, flux;
  for (int j = 0; j < disc.num_faces(); ++j) {
    const auto &f = mesh.faces[j];
    const auto &ft = t.faces[j];
    const auto nq = ft.w.size();
    const Matrix w = wt * ft.w.transpose();
    for (int c = 0; c < 3; ++c) {
      vl[c] = t.gamma.transpose() * coeffs(vbar[c], f.left) * ft.phi[0].transpose();
      if (!f.is_boundary())
        vr[c] = t.gamma.transpose() * coeffs(vbar[c], f.right) * ft.phi[1].transpose();
      else
        vr[c].resize(nm, nq);
      flux[c].resize(nm, nq);
    }
    for (Eigen::Index m = 0; m < nm; ++m) {
      const double time = t_n + dt * t.time_rule.points[m][0];
      for (Eigen::Index q = 0; q < nq; ++q) {
        const Vec3 a(vl[0](m, q), vl[1](m, q), vl[2](m, q));
        const Vec3 b = f.is_boundary() ? exterior_velocity(disc, j, a, ft.x[q], time)
                                       : Vec3(vr[0](m, q), vr[1](m, q), vr[2](m, q));
        const Vec3 fl = rusanov(a, b, f.normal);
        for (int c = 0; c < 3; ++c)
          flux[c](m, q) = w(m, q) * fl[c];
      }
    }
    for (int c = 0; c < 3; ++c) {
      const Matrix gf = t.gamma * flux[c];
      residual(out[c], f.left).noalias() += gf * ft.phi[0];
      if (!f.is_boundary())
        residual(out[c], f.right).noalias() -= gf * ft.phi[1];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Mass applications on the primal grid.

/// Applies (time ⊗ M_i) tet by tet.
inline Field primal_mass_apply(const Discretization &disc, const Matrix &time, const Field &x) {
  detail::check_size(x, disc.primal_size(), "primal_mass_apply");
  const int np = disc.primal_block();
  Field out = disc.primal_zero();
  for (int i = 0; i < disc.num_tets(); ++i)
    kron_apply(time, disc.ops().tet_mass(i), detail::block(x, i, np), detail::block(out, i, np));
  return out;
}

// ---------------------------------------------------------------------------
// Viscous system.

/// (M̄_i − ν Σ_j 𝒟_{i,j} M̄_j⁻¹ 𝒬_{·,j}) v̄ for one component. Faces with a
/// prescribed velocity keep their interior term; slip and outlet faces carry
/// no viscous flux.
inline Field viscous_apply(const Discretization &disc, const Field &vbar, double nu, double dt) {
  if (nu < 0.0)
    throw ParameterError("viscosity must be non-negative");
  const auto &ops = disc.ops();
  Field out = primal_mass_apply(disc, ops.time_plus - ops.time_circ, vbar);
  if (nu == 0.0)
    return out;
  const int np = disc.primal_block();
  for (int j = 0; j < disc.num_faces(); ++j) {
    const auto kind = disc.kind(j);
    if (kind == FaceKind::slip || kind == FaceKind::outlet)
      continue;
    const auto &fb = ops.face(j);
    for (int a = 0; a < fb.sides; ++a)
      for (int b = 0; b < fb.sides; ++b)
        kron_apply(ops.time_mass, fb.stiffness[a][b], detail::block(vbar, fb.side[b].tet, np),
                   detail::block(out, fb.side[a].tet, np), nu * dt);
  }
  return out;
}

/// Right-side contribution of prescribed boundary velocities to the viscous
/// system: ν Σ_d (I ⊗ D^d S⁻¹) ∫∫_Γ γ ψ g n_d.
inline VectorField viscous_boundary_rhs(const Discretization &disc, double nu, double t_n, double dt) {
  VectorField out = disc.primal_zero3();
  if (nu == 0.0)
    return out;
  const auto &mesh = disc.mesh();
  const auto &b = disc.bases();
  const int npsi = b.n_psi(), ng = b.n_gamma(), nd = disc.dual_block(), np = disc.primal_block();
  const auto tri = quad_rule(Domain::triangle, 2 * b.p() + 2);
  const auto trule = quad_rule(Domain::interval, 2 * b.p_gamma() + 2);
  const Matrix id = detail::identity(ng);
  std::vector<double> psi(npsi);
  for (int j : mesh.boundary_faces) {
    if (disc.kind(j) != FaceKind::dirichlet)
      continue;
    const auto &bc = disc.condition(j);
    if (bc.kind == BcKind::no_slip)
      continue;
    const auto &f = mesh.faces[j];
    const auto &e = disc.dual().elements[j];
    const auto &fb = disc.ops().face(j);
    std::array<std::array<Vector, 3>, 3> g; // [component][direction]
    for (auto &gc : g)
      for (auto &v : gc)
        v = Vector::Zero(nd);
    const auto pts = triangle_quadrature(e.face_points, tri);
    for (std::size_t m = 0; m < trule.size(); ++m) {
      const double tau = trule.points[m][0];
      const Vector gam = b.time.values(tau);
      for (const auto &pt : pts) {
        const Vec3 val = bc.velocity_at(pt.x, t_n + tau * dt);
        b.taylor.eval(pt.x, e.center, e.h, psi.data());
        const double w = dt * trule.weights[m] * pt.weight;
        for (int c = 0; c < 3; ++c)
          for (int d = 0; d < 3; ++d) {
            const double s = w * val[c] * f.normal[d];
            for (int a = 0; a < ng; ++a)
              for (int k = 0; k < npsi; ++k)
                g[c][d][a * npsi + k] += s * gam[a] * psi[k];
          }
      }
    }
    Vector tmp(nd);
    for (int c = 0; c < 3; ++c)
      for (int d = 0; d < 3; ++d) {
        tmp.setZero();
        kron_apply(id, fb.mass_inv, g[c][d].data(), tmp.data());
        kron_apply(id, fb.side[0].div[d], tmp.data(), detail::block(out[c], f.left, np), nu);
      }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pressure system.

/// A q̂ with A = −Σ_j 𝒟_{i,j} M_j⁻¹ 𝒬_{·,j} restricted to faces whose velocity
/// is free. A is the negated pressure matrix, so it is positive semi-definite.
inline Field pressure_apply(const Discretization &disc, const Field &q, double dt) {
  detail::check_size(q, disc.primal_size(), "pressure_apply");
  const auto &ops = disc.ops();
  const int np = disc.primal_block();
  Field out = disc.primal_zero();
  for (int j = 0; j < disc.num_faces(); ++j) {
    if (!detail::velocity_free(disc.kind(j)))
      continue;
    const auto &fb = ops.face(j);
    for (int a = 0; a < fb.sides; ++a)
      for (int b = 0; b < fb.sides; ++b)
        kron_apply(ops.time_pressure, fb.stiffness[a][b], detail::block(q, fb.side[b].tet, np),
                   detail::block(out, fb.side[a].tet, np), dt * dt);
  }
  return out;
}

/// Discrete divergence Σ_{j∈S_i} 𝒟_{i,j} v̂_j per tet.
inline Field divergence(const Discretization &disc, const VectorField &vhat, double dt) {
  const auto &ops = disc.ops();
  const int np = disc.primal_block(), nd = disc.dual_block();
  Field out = disc.primal_zero();
  for (int j = 0; j < disc.num_faces(); ++j) {
    const auto &fb = ops.face(j);
    for (int s = 0; s < fb.sides; ++s)
      for (int d = 0; d < 3; ++d)
        kron_apply(ops.time_mass, fb.side[s].div[d], detail::block(vhat[d], j, nd),
                   detail::block(out, fb.side[s].tet, np), dt);
  }
  return out;
}

/// Right side of the pressure-correction system, −Σ_j 𝒟_{i,j} F̂v_j.
inline Field pressure_rhs(const Discretization &disc, const VectorField &fv, double dt) {
  return -divergence(disc, fv, dt);
}

/// M_j⁻¹ 𝒬 q̂ on face j, per component; outlet faces use the interior side only.
inline void pressure_gradient_face(const Discretization &disc, int j, const Field &q, double dt,
                                   std::array<double *, 3> out, double alpha) {
  const auto &ops = disc.ops();
  const auto &fb = ops.face(j);
  const int np = disc.primal_block();
  for (int s = 0; s < fb.sides; ++s)
    for (int d = 0; d < 3; ++d)
      kron_apply(ops.time_step_inv_mass, fb.side[s].mass_inv_grad[d], detail::block(q, fb.side[s].tet, np),
                 out[d], alpha * dt);
}

/// Λ_i = M_i⁻¹ Σ_j M_{i,j} M_j⁻¹ 𝒬_{·,j} p̂: the pressure contribution of
/// the previous Picard iterate, averaged onto the primal grid.
inline VectorField pressure_lambda(const Discretization &disc, const Field &p, double dt) {
  detail::check_size(p, disc.primal_size(), "pressure_lambda");
  const int nd = disc.dual_block();
  VectorField w = disc.dual_zero3();
  for (int j = 0; j < disc.num_faces(); ++j)
    if (detail::velocity_free(disc.kind(j)))
      pressure_gradient_face(disc, j, p, dt,
                             {detail::block(w[0], j, nd), detail::block(w[1], j, nd), detail::block(w[2], j, nd)},
                             1.0);
  return dual_to_primal(disc, w);
}

/// v̂_j = F̂v_j − M_j⁻¹ 𝒬_{·,j} δp̂ on faces with free velocity.
inline VectorField velocity_update(const Discretization &disc, const VectorField &fv, const Field &dp, double dt) {
  detail::check_size(dp, disc.primal_size(), "velocity_update");
  const int nd = disc.dual_block();
  VectorField out = fv;
  for (int j = 0; j < disc.num_faces(); ++j)
    if (detail::velocity_free(disc.kind(j)))
      pressure_gradient_face(disc, j, dp, dt,
                             {detail::block(out[0], j, nd), detail::block(out[1], j, nd),
                              detail::block(out[2], j, nd)},
                             -1.0);
  return out;
}

// ---------------------------------------------------------------------------
// Projections of analytic data.

/// Space-time L2 projection of a vector function onto the dual space of the
/// slab [t_n, t_n + dt].
inline VectorField project_dual(const Discretization &disc, const VectorFunction &fn, double t_n, double dt) {
  const auto &ops = disc.ops();
  const int nd = disc.dual_block();
  VectorField out = disc.dual_zero3();
  for (int j = 0; j < disc.num_faces(); ++j) {
    const auto mom = assemble_source(disc.dual(), j, disc.bases(), fn, t_n, dt);
    for (int c = 0; c < 3; ++c)
      kron_apply(ops.time_mass_inv, ops.face(j).mass_inv, mom[c].data(), detail::block(out[c], j, nd), 1.0 / dt);
  }
  return out;
}

/// Space-time L2 projection of a scalar function onto the primal space.
inline Field project_primal(const Discretization &disc, const ScalarFunction &fn, double t_n, double dt) {
  const auto &mesh = disc.mesh();
  const auto &b = disc.bases();
  const auto &ops = disc.ops();
  const int nphi = b.n_phi(), ng = b.n_gamma(), np = disc.primal_block();
  const auto rule = quad_rule(Domain::tetrahedron, 2 * b.p() + 2);
  const auto trule = quad_rule(Domain::interval, 2 * b.p_gamma() + 2);
  Field out = disc.primal_zero();
  Vector mom(np);
  std::vector<double> phi(nphi);
  for (int i = 0; i < disc.num_tets(); ++i) {
    const auto &g = mesh.geometry[i];
    mom.setZero();
    for (std::size_t m = 0; m < trule.size(); ++m) {
      const double tau = trule.points[m][0];
      const Vector gam = b.time.values(tau);
      for (std::size_t q = 0; q < rule.size(); ++q) {
        b.nodal.eval(rule.points[q], phi.data());
        const double v = fn(g.to_physical(rule.points[q]), t_n + tau * dt);
        const double w = trule.weights[m] * rule.weights[q] * std::abs(g.det) * v;
        for (int a = 0; a < ng; ++a)
          for (int k = 0; k < nphi; ++k)
            mom[a * nphi + k] += w * gam[a] * phi[k];
      }
    }
    kron_apply(ops.time_mass_inv, ops.tet_mass_inv(i), mom.data(), detail::block(out, i, np));
  }
  return out;
}

/// Space-time L2 projection of a vector function onto the primal space.
inline VectorField project_primal(const Discretization &disc, const VectorFunction &fn, double t_n, double dt) {
  VectorField out;
  for (int c = 0; c < 3; ++c)
    out[c] = project_primal(disc, ScalarFunction([&fn, c](const Vec3 &x, double t) { return fn(x, t)[c]; }),
                            t_n, dt);
  return out;
}

/// Overwrites dual velocities fixed by boundary conditions: prescribed-velocity
/// faces get the projection of the data onto their sub-tet; slip faces lose the
/// normal component.
inline void apply_velocity_bc(const Discretization &disc, VectorField &vhat, double t_n, double dt) {
  const auto &mesh = disc.mesh();
  const auto &ops = disc.ops();
  const int nd = disc.dual_block();
  for (int j : mesh.boundary_faces) {
    const auto kind = disc.kind(j);
    if (kind == FaceKind::dirichlet) {
      const auto &bc = disc.condition(j);
      for (int c = 0; c < 3; ++c)
        vhat[c].segment(Eigen::Index(j) * nd, nd).setZero();
      if (bc.kind == BcKind::no_slip)
        continue;
      const auto mom = assemble_source(disc.dual(), j, disc.bases(), bc.velocity, t_n, dt);
      for (int c = 0; c < 3; ++c)
        kron_apply(ops.time_mass_inv, ops.face(j).mass_inv, mom[c].data(), detail::block(vhat[c], j, nd),
                   1.0 / dt);
    } else if (kind == FaceKind::slip) {
      const Vec3 &n = mesh.faces[j].normal;
      for (int k = 0; k < nd; ++k) {
        const auto idx = Eigen::Index(j) * nd + k;
        const double vn = vhat[0][idx] * n[0] + vhat[1][idx] * n[1] + vhat[2][idx] * n[2];
        for (int c = 0; c < 3; ++c)
          vhat[c][idx] -= vn * n[c];
      }
    }
  }
}

/// Adds the prescribed outlet pressure to F̂v: F̂v_j −= M_j⁻¹ ∫∫_Γ γ ψ p_out n.
inline void add_outlet_pressure(const Discretization &disc, VectorField &fv, double t_n, double dt) {
  const auto &mesh = disc.mesh();
  const auto &b = disc.bases();
  const auto &ops = disc.ops();
  const int npsi = b.n_psi(), ng = b.n_gamma(), nd = disc.dual_block();
  const auto tri = quad_rule(Domain::triangle, 2 * b.p() + 2);
  const auto trule = quad_rule(Domain::interval, 2 * b.p_gamma() + 2);
  std::vector<double> psi(npsi);
  for (int j : mesh.boundary_faces) {
    if (disc.kind(j) != FaceKind::outlet)
      continue;
    const auto &bc = disc.condition(j);
    if (!bc.pressure)
      continue;
    const auto &e = disc.dual().elements[j];
    const Vec3 &n = mesh.faces[j].normal;
    Vector mom = Vector::Zero(nd);
    for (std::size_t m = 0; m < trule.size(); ++m) {
      const double tau = trule.points[m][0];
      const Vector gam = b.time.values(tau);
      for (const auto &pt : triangle_quadrature(e.face_points, tri)) {
        b.taylor.eval(pt.x, e.center, e.h, psi.data());
        const double w = dt * trule.weights[m] * pt.weight * bc.pressure_at(pt.x, t_n + tau * dt);
        for (int a = 0; a < ng; ++a)
          for (int k = 0; k < npsi; ++k)
            mom[a * npsi + k] += w * gam[a] * psi[k];
      }
    }
    for (int d = 0; d < 3; ++d)
      kron_apply(ops.time_step_inv, ops.face(j).mass_inv, mom.data(), detail::block(fv[d], j, nd), -n[d]);
  }
}

/// Adds a volume source to F̂v: F̂v_j += M_j⁻¹ 𝒮_j.
inline void add_source(const Discretization &disc, VectorField &fv, const VectorFunction &source, double t_n,
                       double dt) {
  if (!source)
    return;
  const auto &ops = disc.ops();
  const int nd = disc.dual_block();
  for (int j = 0; j < disc.num_faces(); ++j) {
    const auto mom = assemble_source(disc.dual(), j, disc.bases(), source, t_n, dt);
    for (int c = 0; c < 3; ++c)
      kron_apply(ops.time_step_inv, ops.face(j).mass_inv, mom[c].data(), detail::block(fv[c], j, nd));
  }
}

// ---------------------------------------------------------------------------
// Diagnostics.

/// Spatial coefficients of a space-time block at time τ.
inline Vector at_time(const Bases &b, const double *block, int n_space, double tau) {
  const Vector gam = b.time.values(tau);
  Vector out = Vector::Zero(n_space);
  for (int a = 0; a < b.n_gamma(); ++a)
    out += gam[a] * Eigen::Map<const Vector>(block + Eigen::Index(a) * n_space, n_space);
  return out;
}

/// Mean kinetic energy ½|Ω|⁻¹ Σ_j v̂_jᵀ S_j v̂_j of the end-of-slab state.
inline double kinetic_energy(const Discretization &disc, const VectorField &vhat) {
  const int npsi = disc.bases().n_psi(), nd = disc.dual_block();
  double e = 0.0;
  for (int j = 0; j < disc.num_faces(); ++j)
    for (int c = 0; c < 3; ++c) {
      const Vector v = at_time(disc.bases(), detail::block(vhat[c], j, nd), npsi, 1.0);
      e += v.dot(disc.ops().face(j).mass * v);
    }
  return 0.5 * e / disc.mesh().total_volume();
}

/// Space-time mass-weighted mean of a primal field over the slab.
inline double mean_value(const Discretization &disc, const Field &p) {
  const int np = disc.primal_block(), nphi = disc.bases().n_phi();
  const Vector ones_t = disc.ops().time_mass * Vector::Ones(disc.bases().n_gamma());
  double s = 0.0;
  for (int i = 0; i < disc.num_tets(); ++i) {
    const Vector w = disc.ops().tet_mass(i) * Vector::Ones(nphi);
    Eigen::Map<const RowMatrix> x(detail::block(p, i, np), disc.bases().n_gamma(), nphi);
    s += ones_t.dot(x * w);
  }
  return s / disc.mesh().total_volume();
}

/// Removes the mass-weighted mean; the nodal and Lagrange bases both sum to
/// one, so shifting every coefficient shifts the field by a constant.
inline void subtract_mean(const Discretization &disc, Field &p) { p.array() -= mean_value(disc, p); }

/// Removes from a pressure right side its component along the operator's
/// left null space when no outlet fixes the pressure level: for every time
/// function, the vector with a one at every nodal coefficient. In exact
/// arithmetic that component vanishes; this strips round-off that would
/// otherwise make the singular system inconsistent.
inline void project_to_range(const Discretization &disc, Field &rhs) {
  if (disc.has_outlet())
    return;
  const int ng = disc.bases().n_gamma(), nphi = disc.bases().n_phi(), np = disc.primal_block();
  for (int a = 0; a < ng; ++a) {
    double s = 0.0;
    for (int i = 0; i < disc.num_tets(); ++i)
      s += Eigen::Map<const Vector>(detail::block(rhs, i, np) + Eigen::Index(a) * nphi, nphi).sum();
    const double mean = s / (double(disc.num_tets()) * nphi);
    for (int i = 0; i < disc.num_tets(); ++i)
      Eigen::Map<Vector>(detail::block(rhs, i, np) + Eigen::Index(a) * nphi, nphi).array() -= mean;
  }
}

/// v̂ at point x (face frame) and slab time τ.
inline Vec3 eval_dual(const Discretization &disc, const VectorField &vhat, int j, const Vec3 &x, double tau) {
  const auto &b = disc.bases();
  const auto &e = disc.dual().elements.at(j);
  const int npsi = b.n_psi(), nd = disc.dual_block();
  Vector psi(npsi);
  b.taylor.eval(x, e.center, e.h, psi.data());
  Vec3 out;
  for (int c = 0; c < 3; ++c)
    out[c] = at_time(b, detail::block(vhat[c], j, nd), npsi, tau).dot(psi);
  return out;
}

/// Primal field at reference point ξ of tet i and slab time τ.
inline double eval_primal(const Discretization &disc, const Field &f, int i, const Vec3 &xi, double tau) {
  const auto &b = disc.bases();
  const int nphi = b.n_phi(), np = disc.primal_block();
  return at_time(b, detail::block(f, i, np), nphi, tau).dot(b.nodal.values(xi));
}

} // namespace stdg
