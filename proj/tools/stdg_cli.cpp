// Command-line driver: `solve` runs one case, `converge` tabulates L2 errors
// and observed orders over a sequence of cube meshes.

#include <stdg/stdg.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

enum ExitCode { ok = 0, run_failure = 1, usage_error = 2, io_failure = 3 };

void add_run_options(CLI::App &cmd, stdg::RunSettings &s, std::string &config) {
  cmd.add_option("--config", config, "key = value configuration file (command-line flags win)");
  cmd.add_option("--case", s.case_name, "abc-steady | abc-unsteady | taylor-green | cavity | custom");
  cmd.add_option("--p", s.p, "spatial polynomial degree");
  cmd.add_option("--pgamma", s.p_gamma, "temporal polynomial degree");
  cmd.add_option("--nu", s.nu, "kinematic viscosity");
  cmd.add_option("--theta", s.theta, "implicitness factor of the theta scheme, in [1/2, 1]");
  cmd.add_option("--cfl", s.cfl, "CFL number");
  cmd.add_option("--tend", s.t_end, "end time");
  cmd.add_option("--tol", s.tol, "relative tolerance of the linear solvers");
  cmd.add_option("--dt", s.dt, "fixed time step (overrides the CFL rule)");
  cmd.add_option("--scheme", s.scheme, "auto | picard | theta");
  cmd.add_option("--solver", s.solver, "auto | cg | gmres");
  cmd.add_option("--max-steps", s.max_steps, "step cap");
}

/// Settings from the config file first, then the flags given on the command line.
stdg::RunSettings merge(const stdg::RunSettings &cli, const std::string &config, const CLI::App &cmd) {
  stdg::RunSettings s;
  if (!config.empty())
    stdg::apply_config(s, stdg::read_config(config));
  auto given = [&](const char *name) {
    const auto *opt = cmd.get_option_no_throw(name);
    return opt != nullptr && opt->count() > 0;
  };
  if (given("--mesh"))
    s.mesh = cli.mesh;
  if (given("--case"))
    s.case_name = cli.case_name;
  if (given("--out"))
    s.out = cli.out;
  if (cli.p)
    s.p = cli.p;
  if (cli.p_gamma)
    s.p_gamma = cli.p_gamma;
  if (cli.nu)
    s.nu = cli.nu;
  if (cli.theta)
    s.theta = cli.theta;
  if (cli.cfl)
    s.cfl = cli.cfl;
  if (cli.t_end)
    s.t_end = cli.t_end;
  if (cli.tol)
    s.tol = cli.tol;
  if (cli.dt)
    s.dt = cli.dt;
  if (cli.scheme)
    s.scheme = cli.scheme;
  if (cli.solver)
    s.solver = cli.solver;
  if (cli.max_steps)
    s.max_steps = cli.max_steps;
  if (cli.output_interval)
    s.output_interval = cli.output_interval;
  return s;
}

int solve(const stdg::RunSettings &s) {
  const auto c = stdg::resolve_case(s);
  const auto raw = stdg::load_mesh(s.mesh, c);
  std::filesystem::create_directories(s.out);
  const auto disc = stdg::make_discretization(raw, c.config.boundary, c.config.p, c.config.p_gamma);
  std::printf("case %s: %d tets, %d dual elements, p=%d p_gamma=%d nu=%g\n", c.name.c_str(), disc->num_tets(),
              disc->num_faces(), c.config.p, c.config.p_gamma, c.config.nu);
  int frame = 0;
  auto output = [&](const stdg::SolutionState &st, int step) {
    char name[64];
    std::snprintf(name, sizeof name, "solution_%04d.vtk", frame++);
    stdg::write_vtk((std::filesystem::path(s.out) / name).string(), *disc, st);
    std::printf("  step %6d  t = %.6e  wrote %s\n", step, st.time, name);
  };
  const auto res = stdg::run(*disc, c.config, stdg::initial_state(*disc, c.config), output);
  {
    const auto path = (std::filesystem::path(s.out) / "diagnostics.csv").string();
    std::ofstream out(path);
    if (!out)
      throw stdg::IoError("cannot write '" + path + "'");
    stdg::write_diagnostics_csv(out, res);
  }
  std::printf("finished: %zu steps, t = %.6e, kinetic energy %.6e%s\n", res.records.size(), res.state.time,
              stdg::kinetic_energy(*disc, res.state.velocity), res.steady ? " (steady)" : "");
  if (c.has_exact()) {
    const auto e = stdg::l2_errors(*disc, res.state, c.exact_velocity, c.exact_pressure, res.state.time);
    std::printf("L2 errors: pressure %.6e, velocity %.6e\n", e.pressure, e.velocity);
  }
  return ok;
}

int converge(const stdg::RunSettings &s, const std::string &meshes, const std::string &csv) {
  const auto c = stdg::resolve_case(s);
  std::vector<int> sizes;
  std::stringstream ss(meshes);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto n = stdg::parse_cube_spec(item);
    if (!n)
      throw stdg::ConfigError("convergence meshes must be cube:n, got '" + item + "'");
    sizes.push_back(*n);
  }
  const auto res = stdg::convergence_harness(c, sizes);
  for (const auto &f : res.failures)
    std::fprintf(stderr, "row failed: %s\n", f.c_str());
  std::ofstream out(csv);
  if (!out)
    throw stdg::IoError("cannot write '" + csv + "'");
  stdg::write_convergence_csv(out, res.rows);
  stdg::write_convergence_csv(std::cout, res.rows);
  return res.failures.empty() ? ok : run_failure;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Staggered space-time DG solver for incompressible Navier-Stokes on tetrahedra"};
  app.require_subcommand(1);

  stdg::RunSettings solve_cli, conv_cli;
  std::string solve_config, conv_config, meshes = "cube:4,cube:6,cube:8", csv = "convergence.csv";

  auto *solve_cmd = app.add_subcommand("solve", "run one case and write VTK snapshots and diagnostics");
  solve_cmd->add_option("--mesh", solve_cli.mesh, "cube:n or an ASCII mesh file");
  solve_cmd->add_option("--out", solve_cli.out, "output directory");
  solve_cmd->add_option("--output-interval", solve_cli.output_interval, "simulated time between snapshots");
  add_run_options(*solve_cmd, solve_cli, solve_config);

  auto *conv_cmd = app.add_subcommand("converge", "convergence table over cube meshes");
  conv_cmd->add_option("--meshes", meshes, "comma-separated cube:n list");
  conv_cmd->add_option("--out", csv, "CSV output path");
  add_run_options(*conv_cmd, conv_cli, conv_config);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? ok : usage_error;
  }

  try {
    if (*solve_cmd)
      return solve(merge(solve_cli, solve_config, *solve_cmd));
    return converge(merge(conv_cli, conv_config, *conv_cmd), meshes, csv);
  } catch (const stdg::ParseError &e) {
    std::fprintf(stderr, "parse error: %s\n", e.what());
    return usage_error;
  } catch (const stdg::ConfigError &e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return usage_error;
  } catch (const stdg::ParameterError &e) {
    std::fprintf(stderr, "parameter error: %s\n", e.what());
    return usage_error;
  } catch (const stdg::IoError &e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return io_failure;
  } catch (const std::filesystem::filesystem_error &e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return io_failure;
  } catch (const stdg::Error &e) {
    std::fprintf(stderr, "run failed: %s\n", e.what());
    return run_failure;
  }
}
