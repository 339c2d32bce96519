#pragma once

#include "cases.hpp"
#include "errors.hpp"
#include "mesh.hpp"
#include "operators.hpp"
#include "timestepper.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace stdg {

namespace detail {

/// Strips a trailing '#' comment and surrounding whitespace.
inline std::string clean_line(const std::string &line) {
  std::string s = line.substr(0, line.find('#'));
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos)
    return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

/// Line reader that skips blank and comment lines and tracks line numbers.
class LineReader {
public:
  LineReader(std::istream &in, std::string source) : in_(in), source_(std::move(source)) {}

  bool next(std::string &out) {
    std::string raw;
    while (std::getline(in_, raw)) {
      ++line_;
      out = clean_line(raw);
      if (!out.empty())
        return true;
    }
    return false;
  }

  [[nodiscard]] int line() const noexcept { return line_; }
  [[nodiscard]] ParseError error(const std::string &what) const { return {source_, line_, what}; }

private:
  std::istream &in_;
  std::string source_;
  int line_ = 0;
};

/// Parses exactly n whitespace-separated values of type T from a line.
template <class T> std::vector<T> parse_values(const LineReader &r, const std::string &line, int n, const char *what) {
  std::istringstream ss(line);
  std::vector<T> out;
  T v;
  while (ss >> v)
    out.push_back(v);
  if (!ss.eof() || int(out.size()) != n)
    throw r.error(std::string("expected ") + std::to_string(n) + " " + what + ", got '" + line + "'");
  return out;
}

inline int parse_header(LineReader &r, const std::string &line, const std::string &keyword) {
  std::istringstream ss(line);
  std::string k;
  long long n = -1;
  std::string extra;
  if (!(ss >> k >> n) || k != keyword || (ss >> extra) || n < 0)
    throw r.error("expected '" + keyword + " <count>', got '" + line + "'");
  return static_cast<int>(n);
}

} // namespace detail

// ---------------------------------------------------------------------------
// Mesh files.

/// Reads the ASCII mesh format: `NODES n` followed by n lines `x y z`,
/// `TETS m` followed by m lines of four 1-based node indices, and optionally
/// `BFACES k` followed by k lines of three node indices and a tag. Blank
/// lines and `#` comments are ignored.
inline RawMesh parse_mesh(std::istream &in, const std::string &source = "<mesh>") {
  detail::LineReader r(in, source);
  RawMesh mesh;
  std::string line;
  if (!r.next(line))
    throw r.error("empty mesh file");
  const int nn = detail::parse_header(r, line, "NODES");
  for (int k = 0; k < nn; ++k) {
    if (!r.next(line))
      throw r.error("unexpected end of file in NODES section");
    const auto v = detail::parse_values<double>(r, line, 3, "coordinates");
    mesh.nodes.emplace_back(v[0], v[1], v[2]);
  }
  auto index = [&](long long v) {
    if (v < 1 || v > nn)
      throw r.error("node index " + std::to_string(v) + " out of range 1.." + std::to_string(nn));
    return static_cast<int>(v - 1);
  };
  if (!r.next(line))
    throw r.error("missing TETS section");
  const int nt = detail::parse_header(r, line, "TETS");
  for (int k = 0; k < nt; ++k) {
    if (!r.next(line))
      throw r.error("unexpected end of file in TETS section");
    const auto v = detail::parse_values<long long>(r, line, 4, "node indices");
    mesh.tets.push_back({index(v[0]), index(v[1]), index(v[2]), index(v[3])});
  }
  if (r.next(line)) {
    const int nf = detail::parse_header(r, line, "BFACES");
    for (int k = 0; k < nf; ++k) {
      if (!r.next(line))
        throw r.error("unexpected end of file in BFACES section");
      const auto v = detail::parse_values<long long>(r, line, 4, "node indices and a tag");
      mesh.boundary_tags.push_back({{index(v[0]), index(v[1]), index(v[2])}, static_cast<int>(v[3])});
    }
    if (r.next(line))
      throw r.error("trailing content after BFACES section: '" + line + "'");
  }
  return mesh;
}

inline RawMesh read_mesh(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw IoError("cannot open mesh file '" + path + "'");
  return parse_mesh(in, path);
}

inline void write_mesh(std::ostream &out, const RawMesh &mesh) {
  out << std::setprecision(17);
  out << "NODES " << mesh.nodes.size() << '\n';
  for (const auto &x : mesh.nodes)
    out << x[0] << ' ' << x[1] << ' ' << x[2] << '\n';
  out << "TETS " << mesh.tets.size() << '\n';
  for (const auto &t : mesh.tets)
    out << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << ' ' << t[3] + 1 << '\n';
  out << "BFACES " << mesh.boundary_tags.size() << '\n';
  for (const auto &f : mesh.boundary_tags)
    out << f.nodes[0] + 1 << ' ' << f.nodes[1] + 1 << ' ' << f.nodes[2] + 1 << ' ' << f.tag << '\n';
}

// ---------------------------------------------------------------------------
// VTK output.

/// Legacy ASCII unstructured grid: tetrahedral cells, the cell-mean pressure
/// and the primal-averaged velocity at the mesh nodes (averaged over the tets
/// sharing each node), all at the end of the slab.
inline void write_vtk(std::ostream &out, const Discretization &disc, const SolutionState &state) {
  const auto &mesh = disc.mesh();
  const auto &b = disc.bases();
  const int nphi = b.n_phi(), np = disc.primal_block();
  std::vector<Vec3> vel(mesh.nodes.size(), Vec3::Zero());
  std::vector<int> count(mesh.nodes.size(), 0);
  std::vector<double> pressure(mesh.num_tets(), 0.0);
  static const std::array<Vec3, 4> corners{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
  for (int i = 0; i < mesh.num_tets(); ++i) {
    const Vector pc = at_time(b, state.pressure.data() + Eigen::Index(i) * np, nphi, 1.0);
    const Vector mean = disc.ops().tet_mass(i) * Vector::Ones(nphi);
    pressure[i] = pc.dot(mean) / mesh.volumes[i];
    for (int v = 0; v < 4; ++v) {
      const Vector phi = b.nodal.values(corners[v]);
      Vec3 u;
      for (int c = 0; c < 3; ++c)
        u[c] = at_time(b, state.primal_velocity[c].data() + Eigen::Index(i) * np, nphi, 1.0).dot(phi);
      vel[mesh.tets[i][v]] += u;
      ++count[mesh.tets[i][v]];
    }
  }
  out << "# vtk DataFile Version 3.0\n";
  out << "stdg t=" << std::setprecision(10) << state.time << "\n";
  out << "ASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << std::setprecision(12);
  out << "POINTS " << mesh.nodes.size() << " double\n";
  for (const auto &x : mesh.nodes)
    out << x[0] << ' ' << x[1] << ' ' << x[2] << '\n';
  out << "CELLS " << mesh.num_tets() << ' ' << 5 * mesh.num_tets() << '\n';
  for (const auto &t : mesh.tets)
    out << "4 " << t[0] << ' ' << t[1] << ' ' << t[2] << ' ' << t[3] << '\n';
  out << "CELL_TYPES " << mesh.num_tets() << '\n';
  for (int i = 0; i < mesh.num_tets(); ++i)
    out << "10\n";
  out << "CELL_DATA " << mesh.num_tets() << "\nSCALARS pressure double 1\nLOOKUP_TABLE default\n";
  for (double p : pressure)
    out << p << '\n';
  out << "POINT_DATA " << mesh.nodes.size() << "\nVECTORS velocity double\n";
  for (std::size_t k = 0; k < vel.size(); ++k) {
    const Vec3 u = count[k] ? Vec3(vel[k] / count[k]) : Vec3::Zero();
    out << u[0] << ' ' << u[1] << ' ' << u[2] << '\n';
  }
}

inline void write_vtk(const std::string &path, const Discretization &disc, const SolutionState &state) {
  std::ofstream out(path);
  if (!out)
    throw IoError("cannot write '" + path + "'");
  write_vtk(out, disc, state);
  if (!out)
    throw IoError("error while writing '" + path + "'");
}

// ---------------------------------------------------------------------------
// CSV tables.

namespace detail {

inline std::string format_sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.16e", v);
  return buf;
}

inline std::vector<std::string> split(const std::string &s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(s);
  while (std::getline(ss, cur, sep))
    out.push_back(clean_line(cur));
  if (!s.empty() && s.back() == sep)
    out.emplace_back();
  return out;
}

inline double parse_double(const LineReader &r, const std::string &s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception &) {
    throw r.error("bad number '" + s + "'");
  }
  if (used != s.size())
    throw r.error("bad number '" + s + "'");
  return v;
}

inline int parse_int(const LineReader &r, const std::string &s) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(s, &used);
  } catch (const std::exception &) {
    throw r.error("bad integer '" + s + "'");
  }
  if (used != s.size())
    throw r.error("bad integer '" + s + "'");
  return v;
}

} // namespace detail

inline const char *convergence_header = "p,p_gamma,N_e,eps_p,eps_v,sigma_p,sigma_v";

inline void write_convergence_csv(std::ostream &out, const std::vector<ConvergenceRow> &rows) {
  out << convergence_header << '\n';
  auto opt = [](const std::optional<double> &v) { return v ? detail::format_sci(*v) : std::string("-"); };
  for (const auto &r : rows)
    out << r.p << ',' << r.p_gamma << ',' << r.n_elements << ',' << detail::format_sci(r.error_p) << ','
        << detail::format_sci(r.error_v) << ',' << opt(r.order_p) << ',' << opt(r.order_v) << '\n';
}

inline std::vector<ConvergenceRow> parse_convergence_csv(std::istream &in, const std::string &source = "<csv>") {
  detail::LineReader r(in, source);
  std::string line;
  if (!r.next(line) || line != convergence_header)
    throw r.error("missing convergence table header");
  std::vector<ConvergenceRow> rows;
  while (r.next(line)) {
    const auto f = detail::split(line, ',');
    if (f.size() != 7)
      throw r.error("expected 7 columns, got " + std::to_string(f.size()));
    ConvergenceRow row;
    row.p = detail::parse_int(r, f[0]);
    row.p_gamma = detail::parse_int(r, f[1]);
    row.n_elements = detail::parse_int(r, f[2]);
    row.error_p = detail::parse_double(r, f[3]);
    row.error_v = detail::parse_double(r, f[4]);
    if (f[5] != "-")
      row.order_p = detail::parse_double(r, f[5]);
    if (f[6] != "-")
      row.order_v = detail::parse_double(r, f[6]);
    rows.push_back(row);
  }
  return rows;
}

inline const char *diagnostics_header =
    "step,t,dt,pressure_iterations,viscous_iterations,kinetic_energy,dissipation_rate,divergence,steady_residual";

inline void write_diagnostics_csv(std::ostream &out, const RunResult &res) {
  out << diagnostics_header << '\n';
  out << "0," << detail::format_sci(0.0) << ',' << detail::format_sci(0.0) << ",0,0,"
      << detail::format_sci(res.initial_energy) << ",-,-,-\n";
  for (const auto &r : res.records)
    out << r.step << ',' << detail::format_sci(r.time) << ',' << detail::format_sci(r.dt) << ','
        << r.pressure_iterations << ',' << r.viscous_iterations << ',' << detail::format_sci(r.kinetic_energy)
        << ',' << detail::format_sci(r.dissipation) << ',' << detail::format_sci(r.divergence) << ','
        << detail::format_sci(r.steady_residual) << '\n';
}

// ---------------------------------------------------------------------------
// Key-value configuration files.

/// Flat `key = value` file; `#` starts a comment. Repeated keys are an error.
inline std::map<std::string, std::string> parse_config(std::istream &in, const std::string &source = "<config>") {
  detail::LineReader r(in, source);
  std::map<std::string, std::string> out;
  std::string line;
  while (r.next(line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw r.error("expected 'key = value', got '" + line + "'");
    const std::string key = detail::clean_line(line.substr(0, eq));
    const std::string value = detail::clean_line(line.substr(eq + 1));
    if (key.empty())
      throw r.error("empty key");
    if (!out.emplace(key, value).second)
      throw r.error("duplicate key '" + key + "'");
  }
  return out;
}

inline std::map<std::string, std::string> read_config(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw IoError("cannot open config file '" + path + "'");
  return parse_config(in, path);
}

namespace detail {

inline std::vector<double> numbers(const std::string &key, const std::string &value) {
  std::istringstream ss(value);
  std::vector<double> out;
  std::string tok;
  while (ss >> tok) {
    std::size_t used = 0;
    try {
      out.push_back(std::stod(tok, &used));
    } catch (const std::exception &) {
      used = 0;
    }
    if (used != tok.size())
      throw ConfigError("key '" + key + "': bad number '" + tok + "'");
  }
  return out;
}

inline Vec3 vec3(const std::string &key, const std::string &value) {
  const auto v = numbers(key, value);
  if (v.size() != 3)
    throw ConfigError("key '" + key + "' needs three numbers");
  return {v[0], v[1], v[2]};
}

} // namespace detail

/// Parses one boundary binding: `<kind> [vx vy vz | p]`.
inline BoundaryCondition parse_boundary_binding(const std::string &key, const std::string &value) {
  std::istringstream ss(value);
  std::string kind;
  ss >> kind;
  std::string rest;
  std::getline(ss, rest);
  BoundaryCondition bc;
  bc.kind = parse_bc_kind(kind);
  const auto nums = detail::numbers(key, rest);
  switch (bc.kind) {
  case BcKind::velocity: {
    if (nums.size() != 3)
      throw ConfigError("key '" + key + "': velocity boundary needs three components");
    const Vec3 u(nums[0], nums[1], nums[2]);
    bc.velocity = [u](const Vec3 &, double) { return u; };
    break;
  }
  case BcKind::pressure_outlet: {
    if (nums.size() > 1)
      throw ConfigError("key '" + key + "': pressure outlet takes at most one value");
    const double p = nums.empty() ? 0.0 : nums[0];
    bc.pressure = [p](const Vec3 &, double) { return p; };
    break;
  }
  default:
    if (!nums.empty())
      throw ConfigError("key '" + key + "': boundary kind '" + kind + "' takes no values");
  }
  return bc;
}

/// Settings that a configuration file or the command line can change.
struct RunSettings {
  std::string mesh = "cube:4";
  std::string case_name = "abc-steady";
  std::optional<int> p, p_gamma;
  std::optional<double> nu, theta, cfl, t_end, tol, dt, output_interval, steady_tolerance;
  std::optional<std::string> scheme, solver;
  std::optional<int> max_steps;
  std::string out = "out";
  /// Boundary bindings by tag and constant initial/source data for custom cases.
  std::map<int, BoundaryCondition> boundary;
  std::optional<Vec3> velocity0, source, box_lo, box_hi;
  std::optional<double> pressure0;
};

/// Applies a parsed configuration file. Keys: mesh, case, p, pgamma, nu,
/// theta, cfl, tend, tol, dt, scheme, solver, output_interval, steady_tol,
/// max_steps, out, velocity0, pressure0, source, box (six numbers), and
/// bc.<tag> = <kind> [values].
inline void apply_config(RunSettings &s, const std::map<std::string, std::string> &kv) {
  auto to_int = [](const std::string &k, const std::string &v) {
    const auto n = detail::numbers(k, v);
    if (n.size() != 1 || n[0] != std::floor(n[0]))
      throw ConfigError("key '" + k + "' needs one integer");
    return static_cast<int>(n[0]);
  };
  auto to_double = [](const std::string &k, const std::string &v) {
    const auto n = detail::numbers(k, v);
    if (n.size() != 1)
      throw ConfigError("key '" + k + "' needs one number");
    return n[0];
  };
  for (const auto &[k, v] : kv) {
    if (k == "mesh")
      s.mesh = v;
    else if (k == "case")
      s.case_name = v;
    else if (k == "p")
      s.p = to_int(k, v);
    else if (k == "pgamma")
      s.p_gamma = to_int(k, v);
    else if (k == "nu")
      s.nu = to_double(k, v);
    else if (k == "theta")
      s.theta = to_double(k, v);
    else if (k == "cfl")
      s.cfl = to_double(k, v);
    else if (k == "tend")
      s.t_end = to_double(k, v);
    else if (k == "tol")
      s.tol = to_double(k, v);
    else if (k == "dt")
      s.dt = to_double(k, v);
    else if (k == "scheme")
      s.scheme = v;
    else if (k == "solver")
      s.solver = v;
    else if (k == "output_interval")
      s.output_interval = to_double(k, v);
    else if (k == "steady_tol")
      s.steady_tolerance = to_double(k, v);
    else if (k == "max_steps")
      s.max_steps = to_int(k, v);
    else if (k == "out")
      s.out = v;
    else if (k == "velocity0")
      s.velocity0 = detail::vec3(k, v);
    else if (k == "pressure0")
      s.pressure0 = to_double(k, v);
    else if (k == "source")
      s.source = detail::vec3(k, v);
    else if (k == "box") {
      const auto n = detail::numbers(k, v);
      if (n.size() != 6)
        throw ConfigError("key 'box' needs six numbers");
      s.box_lo = Vec3(n[0], n[1], n[2]);
      s.box_hi = Vec3(n[3], n[4], n[5]);
    } else if (k.rfind("bc.", 0) == 0) {
      s.boundary[to_int(k, k.substr(3))] = parse_boundary_binding(k, v);
    } else {
      throw ConfigError("unknown configuration key '" + k + "'");
    }
  }
}

/// Resolves settings into a case definition with every override applied.
inline CaseDefinition resolve_case(const RunSettings &s) {
  CaseDefinition c = make_case(s.case_name, s.nu);
  auto &cfg = c.config;
  if (s.p)
    cfg.p = *s.p;
  if (s.p_gamma)
    cfg.p_gamma = *s.p_gamma;
  if (s.theta)
    cfg.theta = *s.theta;
  if (s.cfl)
    cfg.cfl = *s.cfl;
  if (s.t_end)
    cfg.t_end = *s.t_end;
  if (s.dt)
    cfg.dt = *s.dt;
  if (s.tol) {
    cfg.pressure_solver.tolerance = *s.tol;
    cfg.viscous_solver.tolerance = *s.tol;
  }
  if (s.solver) {
    cfg.pressure_solver.kind = parse_solver_kind(*s.solver);
    cfg.viscous_solver.kind = cfg.pressure_solver.kind;
  }
  if (s.scheme)
    cfg.scheme = parse_scheme(*s.scheme);
  if (s.output_interval)
    cfg.output_interval = *s.output_interval;
  if (s.steady_tolerance)
    cfg.steady_tolerance = *s.steady_tolerance;
  if (s.max_steps)
    cfg.max_steps = *s.max_steps;
  for (const auto &[tag, bc] : s.boundary)
    cfg.boundary.set(tag, bc);
  if (s.velocity0) {
    const Vec3 u = *s.velocity0;
    cfg.initial_velocity = [u](const Vec3 &, double) { return u; };
  }
  if (s.pressure0) {
    const double p = *s.pressure0;
    cfg.initial_pressure = [p](const Vec3 &, double) { return p; };
  }
  if (s.source) {
    const Vec3 f = *s.source;
    cfg.source = [f](const Vec3 &, double) { return f; };
  }
  if (s.box_lo) {
    c.lo = *s.box_lo;
    c.hi = *s.box_hi;
  }
  // A user-set scheme that cannot apply is reported by validate().
  if (cfg.p_gamma != 0 && !s.scheme)
    cfg.scheme = Scheme::picard;
  cfg.validate();
  return c;
}

/// Loads the mesh named by a specification: "cube:n" or a file path.
inline RawMesh load_mesh(const std::string &spec, const CaseDefinition &c) {
  if (const auto n = parse_cube_spec(spec))
    return cube_mesh(*n, c.lo, c.hi);
  return read_mesh(spec);
}

} // namespace stdg
