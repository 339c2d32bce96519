// Matrix-free operators: grid projections, convection, viscous and pressure
// systems, the pressure-gradient terms and diagnostics.

#include "oracle.hpp"

#include <stdg/stdg.hpp>

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <memory>
#include <random>
#include <set>

namespace {

using stdg::Field;
using stdg::Matrix;
using stdg::Vec3;
using stdg::Vector;
using stdg::VectorField;

std::unique_ptr<stdg::Discretization> periodic(int n, int p, int pg) {
  return stdg::make_discretization(stdg::cube_mesh(n), stdg::all_periodic(), p, pg);
}

std::unique_ptr<stdg::Discretization> walled(int n, int p, int pg) {
  return stdg::make_discretization(stdg::cube_mesh(n), stdg::uniform_boundary({stdg::BcKind::no_slip, {}, {}}), p,
                                   pg);
}

stdg::RawMesh single_tet() {
  stdg::RawMesh m;
  m.nodes = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
  m.tets = {{0, 1, 2, 3}};
  return m;
}

stdg::VectorFunction constant(const Vec3 &c) {
  return [c](const Vec3 &, double) { return c; };
}

Vec3 random_reference_point(std::mt19937 &rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (;;) {
    const Vec3 x(u(rng), u(rng), u(rng));
    if (x.sum() <= 1.0)
      return x;
  }
}

/// Dense matrix of a linear map by applying it to every unit vector.
template <class Apply> Matrix probe(Eigen::Index n, const Apply &apply) {
  Matrix m(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    Field e = Field::Zero(n);
    e[k] = 1.0;
    m.col(k) = apply(e);
  }
  return m;
}

double max_abs(const VectorField &v) {
  double m = 0.0;
  for (const auto &c : v)
    m = std::max(m, c.cwiseAbs().maxCoeff());
  return m;
}

// ---------------------------------------------------------------------------
// Projections between the grids.

// The monomial dual basis gives mass matrices with condition numbers near 1e5,
// so coefficient identities hold to this relative level rather than 1e-12.
constexpr double coefficient_tol = 1e-10;

TEST(DualToPrimal, ZeroMapsToZero) {
  const auto disc = periodic(1, 2, 1);
  EXPECT_EQ(max_abs(stdg::dual_to_primal(*disc, disc->dual_zero3())), 0.0);
}

TEST(DualToPrimal, ConstantGivesConstantNodalCoefficients) {
  const Vec3 c(1.5, -2.0, 0.25);
  for (int p : {0, 1, 3}) {
    const auto disc = periodic(1, p, 1);
    const auto vbar = stdg::dual_to_primal(*disc, stdg::project_dual(*disc, constant(c), 0.0, 1.0));
    for (int d = 0; d < 3; ++d)
      EXPECT_LT((vbar[d].array() - c[d]).abs().maxCoeff(), coefficient_tol * std::abs(c[d])) << "p=" << p;
  }
}

TEST(DualToPrimal, LinearFieldIsReproducedAtLinearDegree) {
  const auto disc = walled(2, 1, 0);
  const stdg::VectorFunction f = [](const Vec3 &x, double) {
    return Vec3(1 + 2 * x[0] - x[1], 0.5 * x[2], x[0] + x[1] + x[2]);
  };
  const auto vbar = stdg::dual_to_primal(*disc, stdg::project_dual(*disc, f, 0.0, 1.0));
  std::mt19937 rng(17);
  for (int i = 0; i < disc->num_tets(); ++i)
    for (int k = 0; k < 3; ++k) {
      const Vec3 xi = random_reference_point(rng);
      const Vec3 exact = f(disc->mesh().geometry[i].to_physical(xi), 0.0);
      for (int d = 0; d < 3; ++d)
        EXPECT_NEAR(stdg::eval_primal(*disc, vbar[d], i, xi, 0.5), exact[d], 1e-12);
    }
}

TEST(PrimalToDual, ConstantRoundTripIsIdentity) {
  const auto disc = periodic(2, 2, 1);
  const auto vhat = stdg::project_dual(*disc, constant(Vec3(0.3, -1.0, 2.0)), 0.0, 1.0);
  const auto back = stdg::primal_to_dual(*disc, stdg::dual_to_primal(*disc, vhat));
  for (int d = 0; d < 3; ++d)
    EXPECT_LT((back[d] - vhat[d]).cwiseAbs().maxCoeff(), coefficient_tol * vhat[d].cwiseAbs().maxCoeff());
}

TEST(PrimalToDual, PolynomialRoundTripIsExact) {
  for (int p : {1, 2}) {
    const auto disc = walled(2, p, 0);
    const stdg::VectorFunction f = [p](const Vec3 &x, double) {
      const double q = p == 1 ? 0.0 : x[0] * x[1] - 0.5 * x[2] * x[2];
      return Vec3(x[0] + q, 2 * x[1] - x[2], 1 - x[0] + 3 * q);
    };
    const auto vhat = stdg::project_dual(*disc, f, 0.0, 1.0);
    const auto back = stdg::primal_to_dual(*disc, stdg::dual_to_primal(*disc, vhat));
    for (int d = 0; d < 3; ++d)
      EXPECT_LT((back[d] - vhat[d]).cwiseAbs().maxCoeff(), coefficient_tol * vhat[d].cwiseAbs().maxCoeff())
          << "p=" << p;
  }
}

TEST(PrimalToDual, BoundaryFaceUsesOnlyTheInteriorSide) {
  // Every face of a lone tet is a boundary face; a field on that tet must come
  // back unchanged on each single-sub-tet dual element.
  const auto disc =
      stdg::make_discretization(single_tet(), stdg::uniform_boundary({stdg::BcKind::no_slip, {}, {}}).set(0, {}), 2, 0);
  const stdg::VectorFunction f = [](const Vec3 &x, double) { return Vec3(x[0] * x[0], 1.0, x[1] - x[2]); };
  const auto vbar = stdg::project_primal(*disc, f, 0.0, 1.0);
  const auto vhat = stdg::primal_to_dual(*disc, vbar);
  std::mt19937 rng(4);
  for (int j = 0; j < disc->num_faces(); ++j) {
    const auto sub = disc->dual().elements[j].sub_tet(0);
    for (int k = 0; k < 5; ++k) {
      const Vec3 b = random_reference_point(rng);
      const Vec3 x = sub[0] + b[0] * (sub[1] - sub[0]) + b[1] * (sub[2] - sub[0]) + b[2] * (sub[3] - sub[0]);
      EXPECT_LT((stdg::eval_dual(*disc, vhat, j, x, 0.5) - f(x, 0.0)).norm(), 1e-12);
    }
  }
}

// ---------------------------------------------------------------------------
// Convection.

TEST(Rusanov, ConsistentForEqualStates) {
  const Vec3 v(0.3, -1.2, 0.7), n = Vec3(1, 2, -2).normalized();
  const Vec3 f = stdg::rusanov(v, v, n);
  EXPECT_LT((f - v * v.dot(n)).norm(), 1e-15);
  EXPECT_EQ(stdg::rusanov(Vec3::Zero(), Vec3::Zero(), n), Vec3::Zero());
}

TEST(Rusanov, MaximumSpeedIsTwiceTheLargerMagnitude) {
  // With a tangential normal the central part vanishes and only the
  // dissipation −½ s_max (v⁺ − v⁻) with s_max = 2 remains.
  const Vec3 f = stdg::rusanov(Vec3::Zero(), Vec3(1, 0, 0), Vec3(0, 1, 0));
  EXPECT_NEAR(f[0], -1.0, 1e-15);
  EXPECT_EQ(f[1], 0.0);
  EXPECT_EQ(f[2], 0.0);
  const Vec3 g = stdg::rusanov(Vec3::Zero(), Vec3(1, 0, 0), Vec3(1, 0, 0));
  EXPECT_NEAR(g[0], 0.5 - 1.0, 1e-15);
}

TEST(ConvectiveResidual, ZeroAndFreeStreamVanish) {
  for (int pg : {0, 1}) {
    const auto disc = periodic(2, 2, pg);
    EXPECT_EQ(max_abs(stdg::convective_residual(*disc, disc->primal_zero3(), 0.0, 0.3)), 0.0);
    const auto vbar = stdg::project_primal(*disc, constant(Vec3(1.0, -0.5, 2.0)), 0.0, 0.3);
    EXPECT_LT(max_abs(stdg::convective_residual(*disc, vbar, 0.0, 0.3)), 1e-12) << "pg=" << pg;
  }
}

TEST(ConvectiveResidual, SingleTetMatchesBruteForce) {
  // Linear field (x, −y, 0) on one tet; the exterior state on every face is a
  // prescribed constant, so both the central and the dissipative parts of the
  // flux are exercised.
  const Vec3 wall(0.4, 1.0, -0.6);
  const double dt = 0.35, t_n = 0.2;
  stdg::BoundarySpec bc;
  bc.set(0, {stdg::BcKind::velocity, constant(wall), {}});
  for (int pg : {0, 1}) {
    const auto disc = stdg::make_discretization(single_tet(), bc, 2, pg);
    const stdg::VectorFunction f = [](const Vec3 &x, double) { return Vec3(x[0], -x[1], 0.0); };
    const auto vbar = stdg::project_primal(*disc, f, t_n, dt);
    const auto res = stdg::convective_residual(*disc, vbar, t_n, dt);

    const auto &mesh = disc->mesh();
    const auto &b = disc->bases();
    const oracle::Setup s{mesh, disc->dual(), b, dt};
    const int nphi = b.n_phi(), ng = b.n_gamma();
    const auto tr = oracle::gauss(pg + 2);
    std::array<Vector, 3> want;
    for (auto &w : want)
      w = Vector::Zero(nphi * ng);
    std::array<Vec3, 4> verts;
    for (int k = 0; k < 4; ++k)
      verts[k] = mesh.nodes[mesh.tets[0][k]];
    const int face0 = mesh.tet_faces[0][0];
    Vector phi;
    std::vector<Vec3> grad;
    for (std::size_t m = 0; m < tr.x.size(); ++m) {
      const Vector gam = b.time.values(tr.x[m]);
      const double wt = dt * tr.w[m];
      for (const auto &pt : oracle::tet_points(verts, 3 * 2 + oracle::extra_degree)) {
        s.phi(0, face0, pt.x, phi, &grad);
        const Vec3 v = f(pt.x, 0.0);
        for (int c = 0; c < 3; ++c)
          for (int a = 0; a < ng; ++a)
            for (int k = 0; k < nphi; ++k)
              want[c][a * nphi + k] -= wt * pt.w * gam[a] * v[c] * grad[k].dot(v);
      }
      for (int j : mesh.tet_faces[0]) {
        const Vec3 n = mesh.outward_normal(0, j);
        for (const auto &pt : oracle::tri_points(s.face(j), 3 * 2 + oracle::extra_degree)) {
          s.phi(0, j, pt.x, phi);
          const Vec3 vm = f(pt.x, 0.0);
          const double smax = 2.0 * std::max(vm.norm(), wall.norm());
          const Vec3 flux = 0.5 * (wall * wall.dot(n) + vm * vm.dot(n)) - 0.5 * smax * (wall - vm);
          for (int c = 0; c < 3; ++c)
            for (int a = 0; a < ng; ++a)
              for (int k = 0; k < nphi; ++k)
                want[c][a * nphi + k] += wt * pt.w * gam[a] * phi[k] * flux[c];
        }
      }
    }
    for (int c = 0; c < 3; ++c)
      EXPECT_LT((res[c] - want[c]).cwiseAbs().maxCoeff(), 1e-11 * std::max(1.0, want[c].cwiseAbs().maxCoeff()))
          << "component " << c << " pg=" << pg;
  }
}

// ---------------------------------------------------------------------------
// Viscous system.

TEST(ViscousApply, InviscidIsTheSlabMass) {
  const auto disc = periodic(1, 2, 1);
  std::mt19937 rng(8);
  std::normal_distribution<double> g;
  Field v = disc->primal_zero();
  for (auto &x : v)
    x = g(rng);
  const auto &ops = disc->ops();
  const Field want = stdg::primal_mass_apply(*disc, ops.time_plus - ops.time_circ, v);
  EXPECT_LT((stdg::viscous_apply(*disc, v, 0.0, 0.4) - want).norm(), 1e-14 * want.norm());
}

TEST(ViscousApply, ConstantFieldFeelsNoViscosity) {
  const auto disc = periodic(2, 2, 0);
  const Field c = Field::Constant(disc->primal_size(), 1.7);
  const Field a = stdg::viscous_apply(*disc, c, 0.1, 0.3);
  const Field b = stdg::viscous_apply(*disc, c, 0.0, 0.3);
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ViscousApply, ProbedMatrixIsSymmetricPositiveDefinite) {
  for (int p : {1, 2}) {
    const auto disc = periodic(1, p, 0);
    const Matrix m = probe(disc->primal_size(), [&](const Field &e) { return stdg::viscous_apply(*disc, e, 0.1, 0.5); });
    EXPECT_LT((m - m.transpose()).norm(), 1e-12 * m.norm()) << "p=" << p;
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
    EXPECT_GT(es.eigenvalues().minCoeff(), 0.0) << "p=" << p;
  }
}

TEST(ViscousApply, RejectsNegativeViscosity) {
  const auto disc = periodic(1, 1, 0);
  EXPECT_THROW((void)stdg::viscous_apply(*disc, disc->primal_zero(), -0.1, 1.0), stdg::ParameterError);
}

// ---------------------------------------------------------------------------
// Pressure system.

TEST(PressureApply, ConstantsSpanTheNullSpace) {
  for (int pg : {0, 1}) {
    const auto disc = periodic(2, 2, pg);
    const Field c = Field::Constant(disc->primal_size(), 3.0);
    EXPECT_LT(stdg::pressure_apply(*disc, c, 0.5).cwiseAbs().maxCoeff(), 1e-11) << "pg=" << pg;
  }
}

TEST(PressureApply, ProbedMatrixIsSymmetricSemiDefinite) {
  for (int p : {1, 2}) {
    const auto disc = periodic(1, p, 0);
    const Matrix m = probe(disc->primal_size(), [&](const Field &e) { return stdg::pressure_apply(*disc, e, 0.5); });
    EXPECT_LT((m - m.transpose()).norm(), 1e-12 * m.norm()) << "p=" << p;
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10) << "p=" << p;
  }
}

TEST(PressureApply, StencilReachesOnlyFaceNeighbours) {
  for (bool per : {true, false}) {
    const auto disc = per ? periodic(2, 1, 0) : walled(2, 1, 0);
    const int np = disc->primal_block();
    const Matrix m = probe(disc->primal_size(), [&](const Field &e) { return stdg::pressure_apply(*disc, e, 1.0); });
    const auto &mesh = disc->mesh();
    for (int i = 0; i < disc->num_tets(); ++i) {
      std::set<int> allowed{i};
      for (int j : mesh.tet_faces[i])
        if (!mesh.faces[j].is_boundary())
          allowed.insert(mesh.neighbor(i, j));
      EXPECT_LE(allowed.size(), 5u);
      for (int k = 0; k < disc->num_tets(); ++k) {
        if (allowed.count(k))
          continue;
        EXPECT_EQ(m.block(Eigen::Index(i) * np, Eigen::Index(k) * np, np, np).cwiseAbs().maxCoeff(), 0.0)
            << "row " << i << " touches " << k;
      }
    }
  }
}

TEST(PressureApply, IsLinear) {
  const auto disc = periodic(2, 2, 1);
  std::mt19937 rng(21);
  std::normal_distribution<double> g;
  Field x = disc->primal_zero(), y = disc->primal_zero();
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    x[k] = g(rng);
    y[k] = g(rng);
  }
  const double a = 1.7, b = -0.4;
  const Field lhs = stdg::pressure_apply(*disc, a * x + b * y, 0.3);
  const Field rhs = a * stdg::pressure_apply(*disc, x, 0.3) + b * stdg::pressure_apply(*disc, y, 0.3);
  EXPECT_LT((lhs - rhs).norm(), 1e-13 * rhs.norm());
}

TEST(PressureLambda, ZeroAndConstantGiveNothing) {
  const auto disc = periodic(2, 2, 1);
  EXPECT_EQ(max_abs(stdg::pressure_lambda(*disc, disc->primal_zero(), 0.5)), 0.0);
  EXPECT_LT(max_abs(stdg::pressure_lambda(*disc, Field::Constant(disc->primal_size(), -2.0), 0.5)), 1e-11);
}

TEST(PressureLambda, LinearPressureGivesItsGradient) {
  // Tets whose four faces are all interior see a continuous linear pressure on
  // every dual element they touch, so Λ is the exact gradient there. Λ carries
  // the pressure impulse accumulated over the slab: for a pressure constant in
  // time its value at slab time τ is Δt τ ∇p, which the time-DG solve
  // reproduces at the Gauss nodes (and as Δt ∇p at the single node of p_γ = 0).
  const Vec3 grad(0.7, -1.3, 2.1);
  const double dt = 0.4;
  for (int pg : {0, 1}) {
    const auto disc = walled(3, 1, pg);
    const stdg::ScalarFunction p = [&grad](const Vec3 &x, double) { return 5.0 + grad.dot(x); };
    const auto lambda = stdg::pressure_lambda(*disc, stdg::project_primal(*disc, p, 0.0, dt), dt);
    const int nphi = disc->bases().n_phi();
    const auto &mesh = disc->mesh();
    const int np = disc->primal_block();
    int checked = 0;
    for (int i = 0; i < disc->num_tets(); ++i) {
      bool inner = true;
      for (int j : mesh.tet_faces[i])
        inner = inner && !mesh.faces[j].is_boundary();
      if (!inner)
        continue;
      ++checked;
      for (int a = 0; a < disc->bases().n_gamma(); ++a) {
        const double tau = pg == 0 ? 1.0 : disc->bases().time.nodes()[a];
        for (int d = 0; d < 3; ++d)
          EXPECT_LT((lambda[d].segment(Eigen::Index(i) * np + a * nphi, nphi).array() - dt * tau * grad[d])
                        .abs()
                        .maxCoeff(),
                    1e-10)
              << "tet " << i << " dir " << d << " pg=" << pg;
      }
    }
    EXPECT_GT(checked, 0);
  }
}

TEST(VelocityUpdate, ZeroAndConstantCorrectionsLeaveVelocity) {
  const auto disc = periodic(2, 2, 0);
  const auto fv = stdg::project_dual(*disc, constant(Vec3(1, 2, 3)), 0.0, 0.5);
  const auto a = stdg::velocity_update(*disc, fv, disc->primal_zero(), 0.5);
  for (int d = 0; d < 3; ++d)
    EXPECT_EQ(a[d], fv[d]);
  const auto b = stdg::velocity_update(*disc, fv, Field::Constant(disc->primal_size(), 4.0), 0.5);
  for (int d = 0; d < 3; ++d)
    EXPECT_LT((b[d] - fv[d]).cwiseAbs().maxCoeff(), coefficient_tol);
}

TEST(VelocityUpdate, CorrectedVelocityIsDiscretelySolenoidal) {
  constexpr double tol = 1e-8;
  const double dt = 0.25;
  const auto disc = periodic(2, 2, 0);
  const stdg::VectorFunction f = [](const Vec3 &x, double) {
    return Vec3(std::sin(6.283185307179586 * x[0]), 0.5 * std::cos(6.283185307179586 * x[1]), 0.2);
  };
  const auto fv = stdg::project_dual(*disc, f, 0.0, dt);
  const Field rhs = stdg::pressure_rhs(*disc, fv, dt);
  ASSERT_GT(stdg::divergence(*disc, fv, dt).cwiseAbs().maxCoeff(), 1e-3);
  Field rr = rhs;
  stdg::project_to_range(*disc, rr);
  Vector dp;
  stdg::SolverConfig cfg;
  cfg.tolerance = tol;
  const auto st = stdg::cg([&](const Vector &x) { return stdg::pressure_apply(*disc, x, dt); }, rr, dp, cfg);
  ASSERT_TRUE(st.converged);
  const auto v = stdg::velocity_update(*disc, fv, dp, dt);
  EXPECT_LE(stdg::divergence(*disc, v, dt).cwiseAbs().maxCoeff(), 10 * tol);
}

// ---------------------------------------------------------------------------
// Boundary data and diagnostics.

TEST(VelocityBoundary, SlipRemovesNormalComponentAndDirichletImposesData) {
  stdg::BoundarySpec bc = stdg::uniform_boundary({stdg::BcKind::slip, {}, {}});
  bc.set(4, {stdg::BcKind::velocity, constant(Vec3(1, 0, 0)), {}});
  const auto disc = stdg::make_discretization(stdg::cube_mesh(2), bc, 1, 0);
  auto v = stdg::project_dual(*disc, constant(Vec3(0.3, 0.4, 0.5)), 0.0, 1.0);
  stdg::apply_velocity_bc(*disc, v, 0.0, 1.0);
  const auto &mesh = disc->mesh();
  for (int j : mesh.boundary_faces) {
    const auto &e = disc->dual().elements[j];
    const Vec3 u = stdg::eval_dual(*disc, v, j, e.center, 1.0);
    if (mesh.faces[j].tag == 4)
      EXPECT_LT((u - Vec3(1, 0, 0)).norm(), 1e-12);
    else
      EXPECT_LT(std::abs(u.dot(mesh.faces[j].normal)), 1e-12);
  }
}

TEST(KineticEnergy, ConstantVelocityGivesHalfSquaredSpeed) {
  const Vec3 c(1.0, -2.0, 0.5);
  for (int pg : {0, 1}) {
    const auto disc = periodic(2, 2, pg);
    const auto v = stdg::project_dual(*disc, constant(c), 0.0, 1.0);
    EXPECT_NEAR(stdg::kinetic_energy(*disc, v), 0.5 * c.squaredNorm(), 1e-12);
    EXPECT_EQ(stdg::kinetic_energy(*disc, disc->dual_zero3()), 0.0);
  }
}

TEST(MeanValue, SubtractMeanLeavesZeroMean) {
  const auto disc = periodic(2, 1, 1);
  const stdg::ScalarFunction p = [](const Vec3 &x, double t) { return 3.0 + x[0] * x[1] + t; };
  Field q = stdg::project_primal(*disc, p, 0.0, 0.5);
  EXPECT_GT(std::abs(stdg::mean_value(*disc, q)), 1.0);
  stdg::subtract_mean(*disc, q);
  EXPECT_LT(std::abs(stdg::mean_value(*disc, q)), 1e-12);
}

} // namespace
