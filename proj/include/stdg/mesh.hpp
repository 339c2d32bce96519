#pragma once

#include "errors.hpp"
#include "linalg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace stdg {

/// Tetrahedral mesh as read from disk, before any topology is built.
struct RawMesh {
  struct TaggedFace {
    std::array<int, 3> nodes;
    int tag;
  };
  std::vector<Vec3> nodes;
  std::vector<std::array<int, 4>> tets;
  std::vector<TaggedFace> boundary_tags;
};

inline constexpr int no_tet = -1;
inline constexpr int interior_tag = -1;

struct FaceRecord {
  std::array<int, 3> nodes{};
  int left = no_tet;
  int right = no_tet;
  /// Local face index (0..3, the face opposite that local vertex) in each tet.
  int left_local = -1;
  int right_local = -1;
  /// Unit normal pointing out of the left tet.
  Vec3 normal = Vec3::Zero();
  double area = 0.0;
  int tag = interior_tag;
  /// Translation taking right-tet coordinates into the left tet's frame.
  /// Zero except for faces created by periodic pairing.
  Vec3 right_shift = Vec3::Zero();

  [[nodiscard]] bool is_boundary() const noexcept { return right == no_tet; }
};

/// Affine map x = origin + jacobian * ξ from the reference tetrahedron.
struct TetGeometry {
  Vec3 origin = Vec3::Zero();
  Mat3 jacobian = Mat3::Identity();
  Mat3 inverse = Mat3::Identity();
  double det = 1.0;

  [[nodiscard]] Vec3 to_physical(const Vec3 &xi) const { return origin + jacobian * xi; }
  [[nodiscard]] Vec3 to_reference(const Vec3 &x) const { return inverse * (x - origin); }
};

struct PrimalMesh {
  std::vector<Vec3> nodes;
  std::vector<std::array<int, 4>> tets;
  std::vector<FaceRecord> faces;
  /// S_i: the face index of each local face of tet i.
  std::vector<std::array<int, 4>> tet_faces;
  std::vector<double> volumes;
  std::vector<int> boundary_faces;
  std::vector<TetGeometry> geometry;

  [[nodiscard]] int num_tets() const noexcept { return static_cast<int>(tets.size()); }
  [[nodiscard]] int num_faces() const noexcept { return static_cast<int>(faces.size()); }

  /// Neighbour of tet i across face j, or no_tet on the boundary.
  [[nodiscard]] int neighbor(int i, int j) const {
    const auto &f = faces.at(j);
    if (f.left == i)
      return f.right;
    if (f.right == i)
      return f.left;
    throw AdjacencyError("tet " + std::to_string(i) + " is not adjacent to face " + std::to_string(j));
  }

  /// Outward unit normal of face j with respect to tet i.
  [[nodiscard]] Vec3 outward_normal(int i, int j) const {
    const auto &f = faces.at(j);
    if (f.left == i)
      return f.normal;
    if (f.right == i)
      return -f.normal;
    throw AdjacencyError("tet " + std::to_string(i) + " is not adjacent to face " + std::to_string(j));
  }

  /// Translation that maps tet i's coordinates into the frame of face j
  /// (the left tet's frame).
  [[nodiscard]] Vec3 frame_shift(int i, int j) const {
    const auto &f = faces.at(j);
    if (f.left == i)
      return Vec3::Zero();
    if (f.right == i)
      return f.right_shift;
    throw AdjacencyError("tet " + std::to_string(i) + " is not adjacent to face " + std::to_string(j));
  }

  [[nodiscard]] Vec3 barycenter(int i) const {
    const auto &t = tets[i];
    return 0.25 * (nodes[t[0]] + nodes[t[1]] + nodes[t[2]] + nodes[t[3]]);
  }

  [[nodiscard]] std::array<Vec3, 3> face_points(int j) const {
    const auto &f = faces[j];
    return {nodes[f.nodes[0]], nodes[f.nodes[1]], nodes[f.nodes[2]]};
  }

  [[nodiscard]] Vec3 face_centroid(int j) const {
    const auto p = face_points(j);
    return (p[0] + p[1] + p[2]) / 3.0;
  }

  [[nodiscard]] double total_volume() const {
    double v = 0.0;
    for (double x : volumes)
      v += x;
    return v;
  }

  /// Axis-aligned bounding box as (min, max).
  [[nodiscard]] std::pair<Vec3, Vec3> bounding_box() const {
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::max());
    Vec3 hi = -lo;
    for (const auto &x : nodes) {
      lo = lo.cwiseMin(x);
      hi = hi.cwiseMax(x);
    }
    return {lo, hi};
  }

  /// Smallest insphere diameter over all tets.
  [[nodiscard]] double min_insphere_diameter() const {
    double h = std::numeric_limits<double>::max();
    for (int i = 0; i < num_tets(); ++i) {
      double area = 0.0;
      for (int j : tet_faces[i])
        area += faces[j].area;
      h = std::min(h, 6.0 * volumes[i] / area);
    }
    return h;
  }
};

/// Nodes of local face f (the face opposite local vertex f), in local numbering.
inline constexpr std::array<std::array<int, 3>, 4> local_face_vertices{
    {{1, 2, 3}, {0, 2, 3}, {0, 1, 3}, {0, 1, 2}}};

namespace detail {

inline std::array<int, 3> sorted_triple(std::array<int, 3> t) {
  std::sort(t.begin(), t.end());
  return t;
}

inline double signed_volume(const Vec3 &a, const Vec3 &b, const Vec3 &c, const Vec3 &d) {
  return (b - a).dot((c - a).cross(d - a)) / 6.0;
}

inline TetGeometry tet_geometry(const std::vector<Vec3> &nodes, const std::array<int, 4> &t) {
  TetGeometry g;
  g.origin = nodes[t[0]];
  for (int d = 0; d < 3; ++d)
    g.jacobian.col(d) = nodes[t[d + 1]] - nodes[t[0]];
  g.det = g.jacobian.determinant();
  g.inverse = g.jacobian.inverse();
  return g;
}

inline void orient_face(PrimalMesh &m, FaceRecord &f) {
  const Vec3 a = m.nodes[f.nodes[0]], b = m.nodes[f.nodes[1]], c = m.nodes[f.nodes[2]];
  Vec3 n = (b - a).cross(c - a);
  f.area = 0.5 * n.norm();
  n /= n.norm();
  const Vec3 inside = m.barycenter(f.left);
  if (n.dot((a + b + c) / 3.0 - inside) < 0.0)
    n = -n;
  f.normal = n;
}

} // namespace detail

/// Builds faces, adjacency and geometry for a tetrahedral mesh.
///
/// Faces are deduplicated by their sorted node triple. The left tet of an
/// interior face is the one with the smaller index; normals point left → right.
/// Tets with negative signed volume get local nodes 1 and 2 swapped.
inline PrimalMesh build_connectivity(const std::vector<Vec3> &nodes, std::vector<std::array<int, 4>> tets,
                                     const std::vector<RawMesh::TaggedFace> &tags = {}) {
  PrimalMesh m;
  m.nodes = nodes;
  const int nn = static_cast<int>(nodes.size());
  {
    std::map<std::array<int, 4>, int> seen;
    for (int i = 0; i < static_cast<int>(tets.size()); ++i) {
      auto key = tets[i];
      for (int v : key)
        if (v < 0 || v >= nn)
          throw TopologyError("tet " + std::to_string(i) + " references node " + std::to_string(v) +
                              " outside [0, " + std::to_string(nn) + ")");
      std::sort(key.begin(), key.end());
      if (std::adjacent_find(key.begin(), key.end()) != key.end())
        throw TopologyError("tet " + std::to_string(i) + " repeats a node");
      if (!seen.emplace(key, i).second)
        throw TopologyError("tet " + std::to_string(i) + " duplicates tet " + std::to_string(seen[key]));
    }
  }

  for (int i = 0; i < static_cast<int>(tets.size()); ++i) {
    auto &t = tets[i];
    double vol = detail::signed_volume(nodes[t[0]], nodes[t[1]], nodes[t[2]], nodes[t[3]]);
    if (vol < 0.0) {
      std::swap(t[1], t[2]);
      vol = -vol;
    }
    double edge = 0.0;
    for (int a = 0; a < 4; ++a)
      for (int b = a + 1; b < 4; ++b)
        edge = std::max(edge, (nodes[t[a]] - nodes[t[b]]).norm());
    if (!(vol > 1e-14 * edge * edge * edge))
      throw GeometryError("tet " + std::to_string(i) + " has zero volume");
    m.volumes.push_back(vol);
  }
  m.tets = std::move(tets);
  for (const auto &t : m.tets)
    m.geometry.push_back(detail::tet_geometry(m.nodes, t));

  std::map<std::array<int, 3>, int> face_of;
  m.tet_faces.assign(m.tets.size(), {-1, -1, -1, -1});
  for (int i = 0; i < m.num_tets(); ++i) {
    for (int f = 0; f < 4; ++f) {
      std::array<int, 3> fn{};
      for (int k = 0; k < 3; ++k)
        fn[k] = m.tets[i][local_face_vertices[f][k]];
      const auto key = detail::sorted_triple(fn);
      auto it = face_of.find(key);
      if (it == face_of.end()) {
        FaceRecord rec;
        rec.nodes = fn;
        rec.left = i;
        rec.left_local = f;
        face_of.emplace(key, m.num_faces());
        m.tet_faces[i][f] = m.num_faces();
        m.faces.push_back(rec);
      } else {
        auto &rec = m.faces[it->second];
        if (rec.right != no_tet)
          throw TopologyError("non-manifold face (" + std::to_string(key[0]) + ", " +
                              std::to_string(key[1]) + ", " + std::to_string(key[2]) +
                              ") is shared by more than two tets");
        rec.right = i;
        rec.right_local = f;
        m.tet_faces[i][f] = it->second;
      }
    }
  }

  std::map<std::array<int, 3>, int> tag_of;
  for (const auto &t : tags)
    tag_of[detail::sorted_triple(t.nodes)] = t.tag;
  for (int j = 0; j < m.num_faces(); ++j) {
    auto &f = m.faces[j];
    detail::orient_face(m, f);
    if (f.is_boundary()) {
      auto it = tag_of.find(detail::sorted_triple(f.nodes));
      f.tag = it == tag_of.end() ? 0 : it->second;
      m.boundary_faces.push_back(j);
    }
  }
  return m;
}

inline PrimalMesh build_connectivity(const RawMesh &raw) {
  return build_connectivity(raw.nodes, raw.tets, raw.boundary_tags);
}

/// Identifies opposite boundary faces of a box-like domain along the requested
/// axes and merges each matched pair into one interior face.
///
/// A boundary face takes part in direction d when its centroid lies on the
/// lower or upper bounding plane of axis d. `tolerance` ≤ 0 selects
/// 1e-8 × the bounding-box diagonal.
inline PrimalMesh pair_periodic_faces(const PrimalMesh &in, std::array<bool, 3> directions,
                                      double tolerance = -1.0) {
  const auto [lo, hi] = in.bounding_box();
  if (tolerance <= 0.0)
    tolerance = 1e-8 * (hi - lo).norm();
  PrimalMesh m = in;

  std::vector<int> partner(m.faces.size(), -1);
  for (int d = 0; d < 3; ++d) {
    if (!directions[d])
      continue;
    const double length = hi[d] - lo[d];
    std::vector<int> lower, upper;
    for (int j : m.boundary_faces) {
      if (partner[j] >= 0)
        continue;
      const Vec3 c = m.face_centroid(j);
      const auto &n = m.faces[j].normal;
      if (std::abs(std::abs(n[d]) - 1.0) > 1e-8)
        continue;
      if (std::abs(c[d] - lo[d]) <= tolerance)
        lower.push_back(j);
      else if (std::abs(c[d] - hi[d]) <= tolerance)
        upper.push_back(j);
    }
    std::vector<bool> used(upper.size(), false);
    std::vector<int> unmatched;
    for (int j : lower) {
      Vec3 target = m.face_centroid(j);
      target[d] += length;
      int found = -1;
      for (std::size_t u = 0; u < upper.size(); ++u) {
        if (used[u])
          continue;
        if ((m.face_centroid(upper[u]) - target).norm() <= tolerance) {
          found = static_cast<int>(u);
          break;
        }
      }
      if (found < 0) {
        unmatched.push_back(j);
        continue;
      }
      used[found] = true;
      partner[j] = upper[found];
      partner[upper[found]] = j;
    }
    for (std::size_t u = 0; u < upper.size(); ++u)
      if (!used[u])
        unmatched.push_back(upper[u]);
    if (!unmatched.empty()) {
      std::ostringstream msg;
      msg << "periodic pairing along axis " << d << " failed for " << unmatched.size()
          << " face(s); centroids:";
      for (int j : unmatched) {
        const Vec3 c = m.face_centroid(j);
        msg << " (" << c[0] << ", " << c[1] << ", " << c[2] << ")";
      }
      throw PairingError(msg.str());
    }
  }

  // Merge pairs: keep the face record of the lower-index tet as left.
  std::vector<int> new_index(m.faces.size(), -1);
  std::vector<FaceRecord> faces;
  for (int j = 0; j < static_cast<int>(m.faces.size()); ++j) {
    const int q = partner[j];
    if (q < 0) {
      new_index[j] = static_cast<int>(faces.size());
      faces.push_back(m.faces[j]);
      continue;
    }
    if (new_index[q] >= 0) {
      new_index[j] = new_index[q];
      continue;
    }
    const FaceRecord &a = m.faces[j];
    const FaceRecord &b = m.faces[q];
    if (a.left == b.left)
      throw PairingError("periodic pairing would connect tet " + std::to_string(a.left) + " to itself");
    const FaceRecord &keep = a.left < b.left ? a : b;
    const FaceRecord &other = a.left < b.left ? b : a;
    FaceRecord merged = keep;
    merged.right = other.left;
    merged.right_local = other.left_local;
    merged.tag = interior_tag;
    merged.right_shift = m.face_centroid(&keep == &a ? j : q) - m.face_centroid(&keep == &a ? q : j);
    // Snap the shift to the exact box translation.
    for (int d = 0; d < 3; ++d) {
      const double length = hi[d] - lo[d];
      const double s = merged.right_shift[d];
      merged.right_shift[d] = std::abs(s) <= tolerance ? 0.0 : (s > 0 ? length : -length);
    }
    new_index[j] = static_cast<int>(faces.size());
    faces.push_back(merged);
  }
  for (auto &s : m.tet_faces)
    for (int &j : s)
      j = new_index[j];
  m.faces = std::move(faces);
  m.boundary_faces.clear();
  for (int j = 0; j < m.num_faces(); ++j)
    if (m.faces[j].is_boundary())
      m.boundary_faces.push_back(j);
  return m;
}

/// Face-based dual element: the union of the sub-tetrahedra spanned by a face
/// and the barycentres of its adjacent tets. Boundary faces carry only the
/// interior sub-tetrahedron.
struct DualElement {
  std::array<Vec3, 3> face_points;
  Vec3 left_apex = Vec3::Zero();
  Vec3 right_apex = Vec3::Zero();
  bool has_right = false;
  double left_volume = 0.0;
  double right_volume = 0.0;
  Vec3 center = Vec3::Zero();
  double h = 0.0;

  [[nodiscard]] double volume() const noexcept { return left_volume + right_volume; }

  /// Vertices of the sub-tetrahedron on one side (0 = left, 1 = right).
  [[nodiscard]] std::array<Vec3, 4> sub_tet(int side) const {
    return {face_points[0], face_points[1], face_points[2], side == 0 ? left_apex : right_apex};
  }
};

struct DualMesh {
  std::vector<DualElement> elements;

  [[nodiscard]] double total_volume() const {
    double v = 0.0;
    for (const auto &e : elements)
      v += e.volume();
    return v;
  }
};

/// Constructs the dual element of every face, in the left tet's frame.
inline DualMesh build_dual(const PrimalMesh &m) {
  DualMesh dual;
  dual.elements.reserve(m.faces.size());
  for (int j = 0; j < m.num_faces(); ++j) {
    const auto &f = m.faces[j];
    DualElement e;
    e.face_points = m.face_points(j);
    e.left_apex = m.barycenter(f.left);
    e.left_volume = std::abs(
        detail::signed_volume(e.face_points[0], e.face_points[1], e.face_points[2], e.left_apex));
    const Vec3 fc = (e.face_points[0] + e.face_points[1] + e.face_points[2]) / 3.0;
    Vec3 weighted = e.left_volume * (0.75 * fc + 0.25 * e.left_apex);
    std::vector<Vec3> verts{e.face_points[0], e.face_points[1], e.face_points[2], e.left_apex};
    if (!f.is_boundary()) {
      e.has_right = true;
      e.right_apex = m.barycenter(f.right) + f.right_shift;
      e.right_volume = std::abs(detail::signed_volume(e.face_points[0], e.face_points[1],
                                                      e.face_points[2], e.right_apex));
      weighted += e.right_volume * (0.75 * fc + 0.25 * e.right_apex);
      verts.push_back(e.right_apex);
    }
    e.center = weighted / e.volume();
    for (std::size_t a = 0; a < verts.size(); ++a)
      for (std::size_t b = a + 1; b < verts.size(); ++b)
        e.h = std::max(e.h, (verts[a] - verts[b]).norm());
    const double floor = 1e-14 * e.h * e.h * e.h;
    if (!(e.left_volume > floor) || (e.has_right && !(e.right_volume > floor)))
      throw GeometryError("degenerate sub-tetrahedron in dual element " + std::to_string(j));
    dual.elements.push_back(e);
  }
  return dual;
}

/// Structured box mesh: n×n×n cubes, each split into six tetrahedra sharing
/// the cube diagonal. Boundary tags: 1/2 = x min/max, 3/4 = y, 5/6 = z.
inline RawMesh cube_mesh(int n, const Vec3 &lo = Vec3::Zero(), const Vec3 &hi = Vec3::Ones()) {
  if (n < 1)
    throw ParameterError("cube mesh needs n >= 1");
  RawMesh raw;
  const auto id = [n](int a, int b, int c) { return (c * (n + 1) + b) * (n + 1) + a; };
  for (int c = 0; c <= n; ++c)
    for (int b = 0; b <= n; ++b)
      for (int a = 0; a <= n; ++a) {
        Vec3 x;
        const std::array<int, 3> idx{a, b, c};
        for (int d = 0; d < 3; ++d)
          x[d] = idx[d] == n ? hi[d] : lo[d] + (hi[d] - lo[d]) * idx[d] / n;
        raw.nodes.push_back(x);
      }
  static constexpr std::array<std::array<int, 3>, 6> perms{
      {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
  for (int c = 0; c < n; ++c)
    for (int b = 0; b < n; ++b)
      for (int a = 0; a < n; ++a)
        for (const auto &p : perms) {
          std::array<int, 3> cur{a, b, c};
          std::array<int, 4> t{};
          t[0] = id(cur[0], cur[1], cur[2]);
          for (int k = 0; k < 3; ++k) {
            ++cur[p[k]];
            t[k + 1] = id(cur[0], cur[1], cur[2]);
          }
          raw.tets.push_back(t);
        }
  // Tag boundary triangles by the plane they lie on.
  std::map<std::array<int, 3>, int> count;
  for (const auto &t : raw.tets)
    for (const auto &lf : local_face_vertices)
      ++count[detail::sorted_triple({t[lf[0]], t[lf[1]], t[lf[2]]})];
  for (const auto &[key, k] : count) {
    if (k != 1)
      continue;
    const Vec3 c = (raw.nodes[key[0]] + raw.nodes[key[1]] + raw.nodes[key[2]]) / 3.0;
    int tag = 0;
    for (int d = 0; d < 3 && tag == 0; ++d) {
      const double eps = 1e-12 * (hi[d] - lo[d]);
      if (std::abs(c[d] - lo[d]) < eps)
        tag = 2 * d + 1;
      else if (std::abs(c[d] - hi[d]) < eps)
        tag = 2 * d + 2;
    }
    raw.boundary_tags.push_back({key, tag});
  }
  return raw;
}

} // namespace stdg
