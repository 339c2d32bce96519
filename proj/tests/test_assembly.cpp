// Element matrices against the brute-force oracle, the sign function, and
// structural identities of the assembled blocks.

#include "oracle.hpp"

#include <stdg/stdg.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <string>
#include <tuple>

namespace {

using stdg::Matrix;
using stdg::Vec3;
using stdg::Vector;

constexpr double oracle_tol = 1e-12;
constexpr double slab = 0.7;

/// Mesh + bases + operators bundle for one configuration.
struct Fixture {
  stdg::PrimalMesh mesh;
  stdg::DualMesh dual;
  std::unique_ptr<stdg::Bases> bases;
  std::unique_ptr<stdg::ElementOperators> ops;

  Fixture(stdg::PrimalMesh m, int p, int pg) : mesh(std::move(m)) {
    dual = stdg::build_dual(mesh);
    bases = std::make_unique<stdg::Bases>(p, pg);
    ops = std::make_unique<stdg::ElementOperators>(mesh, dual, *bases);
  }

  [[nodiscard]] oracle::Setup setup() const { return {mesh, dual, *bases, slab}; }
};

stdg::PrimalMesh mesh_named(const std::string &name) {
  if (name == "two-tet")
    return stdg::build_connectivity(oracle::random_two_tets(2024));
  if (name == "six-tet")
    return stdg::build_connectivity(stdg::cube_mesh(1));
  // Periodic cube exercises the shifted right-hand sides of paired faces.
  return stdg::pair_periodic_faces(stdg::build_connectivity(stdg::cube_mesh(2)), {true, true, true});
}

class OracleBlocks : public ::testing::TestWithParam<std::tuple<std::string, int, int>> {};

TEST_P(OracleBlocks, EveryBlockMatchesBruteForce) {
  const auto &[name, p, pg] = GetParam();
  const Fixture fx(mesh_named(name), p, pg);
  const auto s = fx.setup();
  const auto &ops = *fx.ops;

  for (int j = 0; j < fx.mesh.num_faces(); ++j) {
    EXPECT_LT(stdg::relative_difference(ops.m_plus_st(j), oracle::dual_trace_mass(s, j, 1.0, 1.0)), oracle_tol)
        << "M+ face " << j;
    EXPECT_LT(stdg::relative_difference(ops.m_minus_st(j), oracle::dual_trace_mass(s, j, 0.0, 1.0)), oracle_tol)
        << "M- face " << j;
    const Matrix circ = oracle::dual_st_mass(s, j, true);
    if (pg == 0)
      EXPECT_LT(circ.norm(), 1e-14);
    else
      EXPECT_LT(stdg::relative_difference(ops.m_circ_st(j), circ), oracle_tol) << "Mo face " << j;
    EXPECT_LT(stdg::relative_difference(ops.mbar_dual_st(j, slab), oracle::dual_st_mass(s, j, false)), oracle_tol)
        << "Mbar face " << j;

    // Q_{l,j} = -L_j and Q_{r,j} = R_j, with L and R built from their own formulas.
    const auto &f = fx.mesh.faces[j];
    for (int d = 0; d < 3; ++d) {
      const Matrix l = oracle::jump_block(s, j, d, true);
      EXPECT_LT(stdg::relative_difference(ops.grad_st(f.left, j, d, slab), -l), oracle_tol)
          << "Q_l face " << j << " dir " << d;
      if (!f.is_boundary()) {
        const Matrix r = oracle::jump_block(s, j, d, false);
        EXPECT_LT(stdg::relative_difference(ops.grad_st(f.right, j, d, slab), r), oracle_tol)
            << "Q_r face " << j << " dir " << d;
      }
    }
  }

  for (int i = 0; i < fx.mesh.num_tets(); ++i) {
    EXPECT_LT(stdg::relative_difference(ops.m_primal_st(i, slab), oracle::primal_mass(s, i, 0)), oracle_tol);
    EXPECT_LT(stdg::relative_difference(ops.mbar_plus_st(i), oracle::primal_mass(s, i, 1)), oracle_tol);
    EXPECT_LT(stdg::relative_difference(ops.mbar_minus_st(i), oracle::primal_mass(s, i, 2)), oracle_tol);
    const Matrix circ = oracle::primal_mass(s, i, 3);
    if (pg == 0)
      EXPECT_LT(circ.norm(), 1e-14);
    else
      EXPECT_LT(stdg::relative_difference(ops.mbar_circ_st(i), circ), oracle_tol);
    for (int j : fx.mesh.tet_faces[i]) {
      EXPECT_LT(stdg::relative_difference(ops.proj_st(i, j, slab), oracle::projection(s, i, j)), oracle_tol)
          << "M_ij tet " << i << " face " << j;
      for (int d = 0; d < 3; ++d)
        EXPECT_LT(stdg::relative_difference(ops.div_st(i, j, d, slab), oracle::divergence(s, i, j, d)), oracle_tol)
            << "D_ij tet " << i << " face " << j << " dir " << d;
    }
  }

  // Source moments for a polynomial space-time source.
  const auto src = [](const Vec3 &x, double t) -> Vec3 { return {x[0], x[1] * t, 1.0 - x[2] * x[0]}; };
  for (int j = 0; j < fx.mesh.num_faces(); ++j) {
    const auto got = stdg::assemble_source(fx.dual, j, *fx.bases, src, 0.3, slab);
    const auto want = oracle::source(s, j, src, 0.3);
    // A component can vanish exactly by symmetry; measure it against the whole moment.
    const double scale = std::sqrt(want[0].squaredNorm() + want[1].squaredNorm() + want[2].squaredNorm());
    for (int c = 0; c < 3; ++c)
      EXPECT_LT(stdg::relative_difference(got[c], want[c], scale), oracle_tol) << "S face " << j << " comp " << c;
  }
}

INSTANTIATE_TEST_SUITE_P(Meshes, OracleBlocks,
                         ::testing::Combine(::testing::Values("two-tet", "six-tet", "periodic"),
                                            ::testing::Values(0, 1, 2), ::testing::Values(0, 1)),
                         [](const auto &info) {
                           std::string n = std::get<0>(info.param);
                           for (auto &c : n)
                             if (c == '-')
                               c = '_';
                           return n + "_p" + std::to_string(std::get<1>(info.param)) + "_pg" +
                                  std::to_string(std::get<2>(info.param));
                         });

TEST(SignFunction, LeftIsPlusRightIsMinus) {
  EXPECT_EQ(stdg::sigma_sign(3, 7, 3), 1.0);
  EXPECT_EQ(stdg::sigma_sign(3, 7, 7), -1.0);
  EXPECT_EQ(stdg::sigma_sign(0, 1, 0), 1.0);
  EXPECT_THROW(stdg::sigma_sign(3, 7, 5), stdg::AdjacencyError);
  const auto m = stdg::build_connectivity(stdg::cube_mesh(1));
  for (int j = 0; j < m.num_faces(); ++j) {
    const auto &f = m.faces[j];
    EXPECT_EQ(stdg::sigma_sign(m, f.left, j), 1.0);
    if (!f.is_boundary()) {
      EXPECT_EQ(stdg::sigma_sign(m, f.right, j), -1.0);
    }
  }
}

TEST(AssemblyStructure, LowestOrderMassIsDualVolume) {
  const Fixture fx(mesh_named("six-tet"), 0, 0);
  for (int j = 0; j < fx.mesh.num_faces(); ++j) {
    EXPECT_NEAR(fx.ops->m_plus_st(j)(0, 0), fx.dual.elements[j].volume(), 1e-15);
    EXPECT_EQ(fx.ops->m_circ_st(j).norm(), 0.0);
  }
}

TEST(AssemblyStructure, SymmetryAndTimeDegreeZeroIdentities) {
  for (int pg : {0, 1}) {
    const Fixture fx(mesh_named("two-tet"), 2, pg);
    const auto &ops = *fx.ops;
    for (int j = 0; j < fx.mesh.num_faces(); ++j) {
      const Matrix mp = ops.m_plus_st(j), mb = ops.mbar_dual_st(j, 1.0);
      EXPECT_LT(stdg::relative_difference(mp, mp.transpose()), 1e-13);
      EXPECT_LT(stdg::relative_difference(mb, mb.transpose()), 1e-13);
      EXPECT_GT(Eigen::SelfAdjointEigenSolver<Matrix>(mb).eigenvalues().minCoeff(), 0.0);
      if (pg == 0) {
        EXPECT_EQ(stdg::relative_difference(ops.m_minus_st(j), mp), 0.0);
        EXPECT_EQ(ops.m_circ_st(j).norm(), 0.0);
      }
    }
    for (int i = 0; i < fx.mesh.num_tets(); ++i) {
      const Matrix m = ops.m_primal_st(i, 1.0), mp = ops.mbar_plus_st(i);
      EXPECT_LT(stdg::relative_difference(m, m.transpose()), 1e-13);
      EXPECT_LT(stdg::relative_difference(mp, mp.transpose()), 1e-13);
      if (pg == 0) {
        EXPECT_EQ(ops.mbar_circ_st(i).norm(), 0.0);
      }
    }
  }
}

TEST(AssemblyStructure, DivergenceOfConstantVanishes) {
  for (int p : {0, 1, 2}) {
    const Fixture fx(mesh_named("six-tet"), p, 1);
    const auto &ops = *fx.ops;
    const int n = fx.bases->n_psi_st();
    for (int i = 0; i < fx.mesh.num_tets(); ++i)
      for (int d = 0; d < 3; ++d) {
        Vector sum = Vector::Zero(fx.bases->n_phi_st());
        for (int j : fx.mesh.tet_faces[i]) {
          // Constant 1 in the Taylor basis: the constant mode of every time function.
          Vector c = Vector::Zero(n);
          for (int a = 0; a < fx.bases->n_gamma(); ++a)
            c[a * fx.bases->n_psi()] = 1.0;
          sum += ops.div_st(i, j, d, 1.0) * c;
        }
        EXPECT_LT(sum.cwiseAbs().maxCoeff(), 1e-12) << "p=" << p << " tet " << i;
      }
  }
}

TEST(AssemblyStructure, SourceSpecialCases) {
  const Fixture fx(mesh_named("six-tet"), 0, 0);
  for (int j = 0; j < fx.mesh.num_faces(); ++j) {
    const auto zero = stdg::assemble_source(fx.dual, j, *fx.bases, {}, 0.0, 0.5);
    EXPECT_EQ(zero[0].norm(), 0.0);
    const Vec3 c(2.0, -1.0, 0.5);
    const auto con = stdg::assemble_source(
        fx.dual, j, *fx.bases, [&](const Vec3 &, double) { return c; }, 0.0, 0.5);
    for (int d = 0; d < 3; ++d)
      EXPECT_NEAR(con[d][0], c[d] * fx.dual.elements[j].volume() * 0.5, 1e-15);
  }
}

TEST(AssemblyStructure, ScaleCovariance) {
  const int p = 2;
  auto raw = oracle::random_two_tets(7);
  const Fixture a(stdg::build_connectivity(raw), p, 0);
  for (auto &x : raw.nodes)
    x *= 2.0;
  const Fixture b(stdg::build_connectivity(raw), p, 0);
  for (int i = 0; i < a.mesh.num_tets(); ++i)
    EXPECT_LT(stdg::relative_difference(b.ops->tet_mass(i), 8.0 * a.ops->tet_mass(i)), 1e-13);
  for (int j = 0; j < a.mesh.num_faces(); ++j) {
    // The Taylor basis is scale-invariant (x − x₀)/h, so volume blocks scale
    // with s³ and derivative blocks with s².
    EXPECT_LT(stdg::relative_difference(b.ops->face(j).mass, 8.0 * a.ops->face(j).mass), 1e-13);
    const int i = a.mesh.faces[j].left;
    for (int d = 0; d < 3; ++d) {
      EXPECT_LT(stdg::relative_difference(b.ops->grad_st(i, j, d, 1.0), 4.0 * a.ops->grad_st(i, j, d, 1.0)), 1e-12);
      EXPECT_LT(stdg::relative_difference(b.ops->div_st(i, j, d, 1.0), 4.0 * a.ops->div_st(i, j, d, 1.0)), 1e-12);
    }
  }
}

TEST(AssemblyStructure, AdjacencyErrorForForeignTet) {
  const Fixture fx(mesh_named("two-tet"), 1, 0);
  int boundary = fx.mesh.boundary_faces.front();
  const int other = fx.mesh.faces[boundary].left == 0 ? 1 : 0;
  EXPECT_THROW((void)fx.ops->side_of(other, boundary), stdg::AdjacencyError);
}

} // namespace
