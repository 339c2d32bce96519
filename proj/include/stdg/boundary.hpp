#pragma once

#include "errors.hpp"
#include "linalg.hpp"
#include "mesh.hpp"

#include <array>
#include <functional>
#include <map>
#include <set>
#include <string>

namespace stdg {

enum class BcKind { velocity, no_slip, slip, pressure_outlet, periodic };

inline std::string to_string(BcKind k) {
  switch (k) {
  case BcKind::velocity:
    return "velocity";
  case BcKind::no_slip:
    return "no-slip";
  case BcKind::slip:
    return "slip";
  case BcKind::pressure_outlet:
    return "pressure-outlet";
  case BcKind::periodic:
    return "periodic";
  }
  return "unknown";
}

inline BcKind parse_bc_kind(const std::string &s) {
  if (s == "velocity")
    return BcKind::velocity;
  if (s == "no-slip" || s == "noslip" || s == "wall")
    return BcKind::no_slip;
  if (s == "slip")
    return BcKind::slip;
  if (s == "pressure-outlet" || s == "outlet" || s == "pressure")
    return BcKind::pressure_outlet;
  if (s == "periodic")
    return BcKind::periodic;
  throw ConfigError("unknown boundary kind '" + s + "'");
}

using VectorFunction = std::function<Vec3(const Vec3 &, double)>;
using ScalarFunction = std::function<double(const Vec3 &, double)>;

struct BoundaryCondition {
  BcKind kind = BcKind::no_slip;
  /// Prescribed velocity for BcKind::velocity.
  VectorFunction velocity;
  /// Prescribed exterior pressure for BcKind::pressure_outlet.
  ScalarFunction pressure;

  [[nodiscard]] Vec3 velocity_at(const Vec3 &x, double t) const {
    if (kind == BcKind::velocity && velocity)
      return velocity(x, t);
    return Vec3::Zero();
  }
  [[nodiscard]] double pressure_at(const Vec3 &x, double t) const {
    return pressure ? pressure(x, t) : 0.0;
  }
};

/// Boundary conditions keyed by boundary tag.
struct BoundarySpec {
  std::map<int, BoundaryCondition> by_tag;

  BoundarySpec &set(int tag, BoundaryCondition bc) {
    by_tag[tag] = std::move(bc);
    return *this;
  }

  [[nodiscard]] const BoundaryCondition &at(int tag) const {
    auto it = by_tag.find(tag);
    if (it == by_tag.end())
      throw ConfigError("no boundary condition for tag " + std::to_string(tag));
    return it->second;
  }

  /// Axes along which the mesh must be made periodic. Throws when a periodic
  /// tag does not sit on a bounding plane or its opposite plane is not periodic.
  [[nodiscard]] std::array<bool, 3> periodic_axes(const PrimalMesh &mesh) const {
    const auto [lo, hi] = mesh.bounding_box();
    const double tol = 1e-8 * (hi - lo).norm();
    std::array<std::array<bool, 2>, 3> seen{};
    std::array<std::array<bool, 2>, 3> other{};
    for (int j : mesh.boundary_faces) {
      const auto &f = mesh.faces[j];
      const Vec3 c = mesh.face_centroid(j);
      int axis = -1, side = -1;
      for (int d = 0; d < 3 && axis < 0; ++d) {
        if (std::abs(std::abs(f.normal[d]) - 1.0) > 1e-8)
          continue;
        if (std::abs(c[d] - lo[d]) <= tol)
          axis = d, side = 0;
        else if (std::abs(c[d] - hi[d]) <= tol)
          axis = d, side = 1;
      }
      const bool periodic = at(f.tag).kind == BcKind::periodic;
      if (periodic && axis < 0)
        throw ConfigError("periodic tag " + std::to_string(f.tag) + " on a face off the bounding box");
      if (axis < 0)
        continue;
      (periodic ? seen : other)[axis][side] = true;
    }
    std::array<bool, 3> axes{};
    for (int d = 0; d < 3; ++d) {
      if (seen[d][0] != seen[d][1])
        throw ConfigError("periodic boundary along axis " + std::to_string(d) + " lacks its partner");
      if (seen[d][0] && (other[d][0] || other[d][1]))
        throw ConfigError("axis " + std::to_string(d) + " mixes periodic and non-periodic faces");
      axes[d] = seen[d][0];
    }
    return axes;
  }

  /// Every boundary tag of the mesh must have a condition.
  void validate(const PrimalMesh &mesh) const {
    std::set<int> missing;
    for (int j : mesh.boundary_faces)
      if (!by_tag.count(mesh.faces[j].tag))
        missing.insert(mesh.faces[j].tag);
    if (!missing.empty()) {
      std::string s;
      for (int t : missing)
        s += " " + std::to_string(t);
      throw ConfigError("boundary tags without a condition:" + s);
    }
  }
};

/// All six box tags of cube_mesh set to the same condition.
inline BoundarySpec uniform_boundary(BoundaryCondition bc) {
  BoundarySpec spec;
  for (int tag = 1; tag <= 6; ++tag)
    spec.set(tag, bc);
  return spec;
}

inline BoundarySpec all_periodic() { return uniform_boundary({BcKind::periodic, {}, {}}); }

} // namespace stdg
