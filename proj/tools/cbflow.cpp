// cbflow: command-line front end for the branching-flow toolkit.
// Subcommands: mech show | solve v|u|V | simulate cbi|flow | verify <suite>.
// Exit codes: 0 success / verification pass, 1 verification failure,
// 2 usage or configuration error.

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "cbflow/config.hpp"
#include "cbflow/cumulant.hpp"
#include "cbflow/io.hpp"
#include "cbflow/mc_harness.hpp"
#include "cbflow/mechanisms.hpp"
#include "cbflow/oracles.hpp"
#include "cbflow/sde_sim.hpp"

namespace {

using namespace cbflow;

struct MechFlags {
  std::string config_path;
  bool quadratic = false;
  std::string kind;
  double a = -1.0;
  double b = 0.0;
  bool b_set = false;
  double sigma = 0.0;
  bool sigma_set = false;
  std::string atoms;
};

std::vector<JumpAtom> parse_atoms(const std::string& text) {
  std::vector<JumpAtom> atoms;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos)
      throw std::invalid_argument("atoms: expected z:w pairs separated by commas");
    atoms.push_back({std::stod(item.substr(0, colon)), std::stod(item.substr(colon + 1))});
  }
  return atoms;
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> grid;
  if (text.find(':') != std::string::npos) {  // start:step:end
    std::stringstream ss(text);
    std::string a, h, b;
    std::getline(ss, a, ':');
    std::getline(ss, h, ':');
    std::getline(ss, b, ':');
    const double lo = std::stod(a), step = std::stod(h), hi = std::stod(b);
    if (!(step > 0.0) || hi < lo) throw std::invalid_argument("grid: bad range");
    for (double q = lo; q <= hi + 1e-12 * (1.0 + std::abs(hi)); q += step)
      grid.push_back(std::min(q, hi));
    return grid;
  }
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) grid.push_back(std::stod(item));
  return grid;
}

void add_mech_flags(CLI::App* cmd, MechFlags& mf) {
  cmd->add_option("--config", mf.config_path, "experiment config (JSON)");
  cmd->add_flag("--quadratic", mf.quadratic, "quadratic family phi_q(l) = l^2 - 2ql");
  cmd->add_option("--family", mf.kind, "family kind: base|shifted|kernel|quadratic");
  cmd->add_option("--a", mf.a, "right endpoint of the index interval [0,a]");
  cmd->add_option("--b", mf.b, "drift b of the base mechanism")->each([&](const std::string&) {
    mf.b_set = true;
  });
  cmd->add_option("--sigma", mf.sigma, "diffusion coefficient of the base mechanism")
      ->each([&](const std::string&) { mf.sigma_set = true; });
  cmd->add_option("--atoms", mf.atoms, "jump atoms as z:w,z:w");
}

ExperimentConfig resolve_config(const MechFlags& mf) {
  ExperimentConfig cfg;
  if (!mf.config_path.empty()) {
    std::ifstream in(mf.config_path);
    if (!in) throw std::invalid_argument("cannot open config " + mf.config_path);
    nlohmann::json j;
    in >> j;
    cfg = config_from_json(j);
  }
  if (mf.quadratic) cfg.kind = "quadratic";
  if (!mf.kind.empty()) cfg.kind = mf.kind;
  if (mf.a >= 0.0) cfg.a = mf.a;
  if (mf.b_set) cfg.base_b = mf.b;
  if (mf.sigma_set) cfg.base_sigma = mf.sigma;
  if (!mf.atoms.empty()) cfg.base_atoms = parse_atoms(mf.atoms);
  return cfg;
}

void write_or_print(const std::string& out_path, const std::string& content) {
  if (out_path.empty()) {
    std::cout << content;
    return;
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw std::invalid_argument("cannot open output file " + out_path);
  out << content;
}

std::size_t default_stride(std::size_t rows) { return rows <= 1001 ? 1 : rows / 1000; }

int cmd_solve_v(const MechFlags& mf, double lambda, double t, double step,
                const std::string& out) {
  const ExperimentConfig cfg = resolve_config(mf);
  const BranchingMechanism mech = cfg.mechanism();
  SolverOptions opts;
  if (step > 0.0) opts.step = step;
  const CumulantCurve curve = solve_v_curve(mech, lambda, t, opts);
  std::ostringstream os;
  write_curve_csv(os, curve, default_stride(curve.times().size()));
  write_or_print(out, os.str());
  if (!out.empty())
    std::cout << "v(" << format_double(t) << ") = " << format_double(curve.values().back())
              << "\n";
  return 0;
}

int cmd_solve_u(const MechFlags& mf, const std::string& f_text, double s_eval,
                bool s_given, double step, const std::string& out) {
  const ExperimentConfig cfg = resolve_config(mf);
  const BranchingMechanism mech = cfg.mechanism();
  SolverOptions opts;
  if (step > 0.0) opts.step = step;
  const StepFunction f = parse_step_function(f_text);
  const CumulantCurve curve = solve_u(mech, f, opts);
  if (s_given) {
    std::cout << format_double(curve.value(s_eval)) << "\n";
    if (!out.empty()) {
      std::ostringstream os;
      write_curve_csv(os, curve, default_stride(curve.times().size()));
      write_or_print(out, os.str());
    }
    return 0;
  }
  std::ostringstream os;
  write_curve_csv(os, curve, default_stride(curve.times().size()));
  write_or_print(out, os.str());
  return 0;
}

int cmd_solve_V(const MechFlags& mf, const std::string& grid_text, double f_const,
                double t, double step, const std::string& out) {
  const ExperimentConfig cfg = resolve_config(mf);
  const MechanismFamily fam = cfg.family();
  std::vector<double> grid =
      grid_text.empty() ? cfg.q_grid : parse_grid(grid_text);
  SolverOptions opts;
  if (step > 0.0) opts.step = step;
  const GridFunction f = GridFunction::constant(grid, f_const);
  const GridFunction vt = solve_V(fam, f, t, opts);
  std::ostringstream os;
  write_grid_csv(os, vt);
  write_or_print(out, os.str());
  return 0;
}

struct SimSummary {
  std::size_t n = 0;
  double extinct = 0.0, alive = 0.0, overflow = 0.0;
  double mean_final = 0.0;
};

void print_summary(const std::string& label, const SimSummary& s) {
  std::cout << label << " n=" << s.n << " extinct=" << format_double(s.extinct)
            << " alive=" << format_double(s.alive)
            << " overflow=" << format_double(s.overflow)
            << " mean_at_horizon=" << format_double(s.mean_final) << "\n";
  if (s.overflow > 0.01)
    std::cout << "WARNING: overflow fraction " << format_double(s.overflow)
              << " exceeds 1%\n";
}

// Simulation fields the user actually passed on the command line; only
// these override the config file.
struct SimOverrides {
  std::optional<double> dt, horizon, x_max, eps;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> n;
  std::optional<int> jobs;

  void apply(ExperimentConfig& cfg) const {
    if (dt) cfg.sim.dt = *dt;
    if (horizon) cfg.sim.horizon = *horizon;
    if (x_max) cfg.sim.x_max = *x_max;
    if (eps) cfg.sim.extinction_eps = *eps;
    if (seed) cfg.sim.seed = *seed;
    if (n) cfg.n = *n;
    if (jobs) cfg.jobs = *jobs;
  }
};

int cmd_simulate_cbi(const MechFlags& mf, const SimOverrides& over, double x0,
                     const std::string& rho_text, double imm_h,
                     const std::string& imm_atoms, std::size_t replicate,
                     const std::string& out, const std::string& bin) {
  ExperimentConfig cfg = resolve_config(mf);
  over.apply(cfg);
  const std::size_t n = cfg.n;
  const int jobs = cfg.jobs;
  if (n == 0) throw std::invalid_argument("simulate: need n >= 1");
  const BranchingMechanism mech = cfg.mechanism();
  const ImmigrationMechanism imm =
      imm_atoms.empty() ? ImmigrationMechanism(imm_h)
                        : ImmigrationMechanism(imm_h, JumpMeasure(parse_atoms(imm_atoms)));
  const StepFunction rho =
      rho_text.empty() ? StepFunction::zero() : parse_step_function(rho_text);

  std::vector<std::uint8_t> status(n);
  std::vector<double> finals(n);
  parallel_for_indexed(n, jobs, [&](std::size_t i) {
    SimConfig c = cfg.sim;
    c.replicate_index = i;
    const PathRecord p = simulate_cbi(mech, imm, rho, x0, c);
    status[i] = static_cast<std::uint8_t>(p.status);
    finals[i] = p.values.back();
  });
  SimSummary s;
  s.n = n;
  for (std::size_t i = 0; i < n; ++i) {
    s.mean_final += finals[i] / static_cast<double>(n);
    const auto st = static_cast<PathStatus>(status[i]);
    s.extinct += st == PathStatus::absorbed ? 1.0 / n : 0.0;
    s.alive += st == PathStatus::alive_at_horizon ? 1.0 / n : 0.0;
    s.overflow += st == PathStatus::overflow ? 1.0 / n : 0.0;
  }
  print_summary("cbi", s);
  if (!out.empty() || !bin.empty()) {
    SimConfig c = cfg.sim;
    c.replicate_index = replicate;
    const PathRecord p = simulate_cbi(mech, imm, rho, x0, c);
    if (!out.empty()) {
      std::ofstream f(out, std::ios::binary);
      write_path_csv(f, p);
    }
    if (!bin.empty()) {
      std::ofstream f(bin, std::ios::binary);
      write_path_binary(f, p);
    }
  }
  return 0;
}

int cmd_simulate_flow(const MechFlags& mf, const SimOverrides& over,
                      const std::string& mu_text, const std::string& q_text,
                      const std::string& rho_text, double imm_h,
                      const std::string& imm_atoms, std::size_t replicate,
                      const std::string& out, const std::string& bin) {
  ExperimentConfig cfg = resolve_config(mf);
  over.apply(cfg);
  const std::size_t n = cfg.n;
  const int jobs = cfg.jobs;
  if (n == 0) throw std::invalid_argument("simulate: need n >= 1");
  const MechanismFamily fam = cfg.family();
  const std::vector<double> q_grid = q_text.empty() ? cfg.q_grid : parse_grid(q_text);
  const StepFunction mu =
      mu_text.empty() ? cfg.mu() : parse_step_function(mu_text + "@[0," +
                                                       format_double(fam.a() + 1.0) + ")");
  const ImmigrationMechanism imm =
      imm_atoms.empty() ? ImmigrationMechanism(imm_h)
                        : ImmigrationMechanism(imm_h, JumpMeasure(parse_atoms(imm_atoms)));
  const StepFunction rho =
      rho_text.empty() ? StepFunction::zero() : parse_step_function(rho_text);

  const std::size_t cols = q_grid.size();
  std::vector<std::size_t> mono(n, 0);
  struct ColStats {
    std::vector<std::uint8_t> status;
    std::vector<double> final;
  };
  std::vector<ColStats> stats(cols);
  for (auto& c : stats) {
    c.status.resize(n);
    c.final.resize(n);
  }
  parallel_for_indexed(n, jobs, [&](std::size_t i) {
    SimConfig c = cfg.sim;
    c.replicate_index = i;
    const FlowRecord flow = simulate_flow(fam, mu, imm, rho, q_grid, c);
    for (std::size_t j = 0; j < cols; ++j) {
      stats[j].status[i] = static_cast<std::uint8_t>(flow.columns[j].status);
      stats[j].final[i] = flow.columns[j].values.back();
    }
    mono[i] = flow_monotone_violations(flow);
  });
  std::size_t mono_total = 0;
  for (std::size_t i = 0; i < n; ++i) mono_total += mono[i];
  for (std::size_t j = 0; j < cols; ++j) {
    SimSummary s;
    s.n = n;
    for (std::size_t i = 0; i < n; ++i) {
      s.mean_final += stats[j].final[i] / static_cast<double>(n);
      const auto st = static_cast<PathStatus>(stats[j].status[i]);
      s.extinct += st == PathStatus::absorbed ? 1.0 / n : 0.0;
      s.alive += st == PathStatus::alive_at_horizon ? 1.0 / n : 0.0;
      s.overflow += st == PathStatus::overflow ? 1.0 / n : 0.0;
    }
    print_summary("flow q=" + format_double(q_grid[j]), s);
  }
  std::cout << "monotonicity violations: " << mono_total << "\n";
  if (!out.empty() || !bin.empty()) {
    SimConfig c = cfg.sim;
    c.replicate_index = replicate;
    const FlowRecord flow = simulate_flow(fam, mu, imm, rho, q_grid, c);
    if (!out.empty()) {
      std::ofstream f(out, std::ios::binary);
      write_flow_csv(f, flow);
    }
    if (!bin.empty()) {
      std::ofstream f(bin, std::ios::binary);
      write_flow_binary(f, flow);
    }
  }
  return 0;
}

int cmd_mech_show(const MechFlags& mf, bool as_json) {
  const ExperimentConfig cfg = resolve_config(mf);
  if (as_json) {
    std::cout << config_json(cfg).dump(2) << "\n";
    return 0;
  }
  const BranchingMechanism mech = cfg.mechanism();
  std::cout << "kind: " << cfg.kind << "\n";
  std::cout << "b: " << format_double(mech.b()) << "\nsigma: " << format_double(mech.sigma())
            << "\natoms:";
  for (const auto& a : mech.jumps().atoms())
    std::cout << " (" << format_double(a.size) << "," << format_double(a.weight) << ")";
  std::cout << "\ncriticality: ";
  switch (mech.criticality()) {
    case BranchingMechanism::Criticality::critical: std::cout << "critical"; break;
    case BranchingMechanism::Criticality::subcritical: std::cout << "subcritical"; break;
    case BranchingMechanism::Criticality::supercritical: std::cout << "supercritical"; break;
  }
  std::cout << "\nphi:";
  for (double l : {0.0, 0.5, 1.0, 2.0, 5.0})
    std::cout << " phi(" << format_double(l) << ")=" << format_double(mech.phi(l));
  std::cout << "\n";
  if (cfg.kind != "base") {
    const MechanismFamily fam = cfg.family();
    std::cout << "family: [0," << format_double(fam.a()) << "] b_q:";
    for (int k = 0; k <= 4; ++k) {
      const double q = fam.a() * k / 4.0;
      std::cout << " b(" << format_double(q)
                << ")=" << format_double(fam.mechanism_at(q).b());
    }
    std::cout << "\n";
  }
  return 0;
}

int cmd_verify(const std::string& suite, std::uint64_t seed, std::size_t n_override,
               double dt_override, int jobs, const std::string& json_out,
               const std::string& text_out) {
  SuiteConfig cfg;
  cfg.seed = seed;
  cfg.n_override = n_override;
  cfg.dt_override = dt_override;
  cfg.jobs = jobs;
  const VerificationReport rep = run_suite(suite, cfg);
  const std::string text = report_text(rep);
  std::cout << text;
  if (!json_out.empty()) {
    std::ofstream f(json_out, std::ios::binary);
    f << report_json(rep);
  }
  if (!text_out.empty()) {
    std::ofstream f(text_out, std::ios::binary);
    f << text;
  }
  return rep.overall_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"simulation and verification toolkit for branching flows"};
  app.require_subcommand(1);

  // mech show
  auto* mech_cmd = app.add_subcommand("mech", "inspect mechanisms and families");
  mech_cmd->require_subcommand(1);
  auto* mech_show = mech_cmd->add_subcommand("show", "print mechanism parameters");
  MechFlags show_mf;
  bool show_json = false;
  add_mech_flags(mech_show, show_mf);
  mech_show->add_flag("--json", show_json, "emit the normalized config as JSON");

  // solve
  auto* solve = app.add_subcommand("solve", "run the cumulant solvers");
  solve->require_subcommand(1);
  auto* sv = solve->add_subcommand("v", "v_t(lambda) from dv/dt = -phi(v)");
  MechFlags sv_mf;
  add_mech_flags(sv, sv_mf);
  double sv_lambda = 0.0, sv_t = 0.0, sv_step = 0.0;
  std::string sv_out;
  sv->add_option("--lambda", sv_lambda, "initial value lambda")->required();
  sv->add_option("--t", sv_t, "time horizon")->required();
  sv->add_option("--step", sv_step, "integration step (default 1e-4)");
  sv->add_option("--out", sv_out, "CSV output file (default: stdout)");

  auto* su = solve->add_subcommand("u", "terminal-value solver u(s,f)");
  MechFlags su_mf;
  add_mech_flags(su, su_mf);
  std::string su_f = "1@[0,1)";
  double su_s = 0.0, su_step = 0.0;
  std::string su_out;
  su->add_option("--f", su_f, "test function, e.g. 1@[0,1) or 0.5@[0,1);2@[1,3)");
  auto* su_s_opt = su->add_option("--s", su_s, "evaluate u at s and print the value");
  su->add_option("--step", su_step, "integration step (default 1e-4)");
  su->add_option("--out", su_out, "CSV output file");

  auto* sV = solve->add_subcommand("V", "nonlocal cumulant V_t f on a q-grid");
  MechFlags sV_mf;
  add_mech_flags(sV, sV_mf);
  std::string sV_grid, sV_out;
  double sV_f = 1.0, sV_t = 0.0, sV_step = 0.0;
  sV->add_option("--grid", sV_grid, "q grid: comma list or start:step:end");
  sV->add_option("--f-const", sV_f, "constant initial f on the grid");
  sV->add_option("--t", sV_t, "time horizon")->required();
  sV->add_option("--step", sV_step, "integration step (default 1e-4)");
  sV->add_option("--out", sV_out, "CSV output file (default: stdout)");

  // simulate
  auto* sim = app.add_subcommand("simulate", "Monte Carlo simulation");
  sim->require_subcommand(1);
  const auto add_sim_overrides = [](CLI::App* cmd, SimOverrides& o) {
    cmd->add_option_function<std::size_t>(
           "--n", [&o](std::size_t v) { o.n = v; }, "number of replicates")
        ->check(CLI::PositiveNumber);
    cmd->add_option_function<double>("--dt", [&o](double v) { o.dt = v; }, "Euler step");
    cmd->add_option_function<double>(
        "--horizon", [&o](double v) { o.horizon = v; }, "time horizon");
    cmd->add_option_function<double>(
        "--x-max", [&o](double v) { o.x_max = v; }, "overflow cap");
    cmd->add_option_function<double>(
        "--eps", [&o](double v) { o.eps = v; }, "absorption threshold");
    cmd->add_option_function<std::uint64_t>(
           "--seed", [&o](std::uint64_t v) { o.seed = v; }, "master seed")
        ->envname("CBFLOW_SEED");
    cmd->add_option_function<int>(
        "--jobs", [&o](int v) { o.jobs = v; }, "worker threads (default: machine)");
  };

  auto* sc = sim->add_subcommand("cbi", "CBI jump-SDE paths");
  MechFlags sc_mf;
  add_mech_flags(sc, sc_mf);
  SimOverrides sc_over;
  add_sim_overrides(sc, sc_over);
  std::size_t sc_rep = 0;
  double sc_x0 = 1.0;
  std::string sc_rho, sc_imm_atoms, sc_out, sc_bin;
  double sc_imm_h = 0.0;
  sc->add_option("--x0", sc_x0, "initial value");
  sc->add_option("--rho", sc_rho, "immigration rate, e.g. 1@[0,1)");
  sc->add_option("--imm-h", sc_imm_h, "immigration drift h");
  sc->add_option("--imm-atoms", sc_imm_atoms, "immigration atoms z:w,z:w");
  sc->add_option("--replicate", sc_rep, "replicate exported by --out/--bin");
  sc->add_option("--out", sc_out, "CSV path output");
  sc->add_option("--bin", sc_bin, "binary path output");

  auto* sf = sim->add_subcommand("flow", "solution flow on a q-grid");
  MechFlags sf_mf;
  add_mech_flags(sf, sf_mf);
  SimOverrides sf_over;
  add_sim_overrides(sf, sf_over);
  std::size_t sf_rep = 0;
  std::string sf_mu, sf_q, sf_rho, sf_imm_atoms, sf_out, sf_bin;
  double sf_imm_h = 0.0;
  sf->add_option("--mu", sf_mu, "initial value: constant distribution function");
  sf->add_option("--q", sf_q, "q grid: comma list or start:step:end");
  sf->add_option("--rho", sf_rho, "immigration rate step function");
  sf->add_option("--imm-h", sf_imm_h, "immigration drift h");
  sf->add_option("--imm-atoms", sf_imm_atoms, "immigration atoms z:w,z:w");
  sf->add_option("--replicate", sf_rep, "replicate exported by --out/--bin");
  sf->add_option("--out", sf_out, "CSV flow output");
  sf->add_option("--bin", sf_bin, "binary flow output");

  // verify
  auto* verify = app.add_subcommand("verify", "run a verification suite");
  std::string suite;
  std::uint64_t v_seed = 0;
  std::size_t v_n = 0;
  double v_dt = 0.0;
  int v_jobs = 0;
  std::string v_json, v_text;
  verify->add_option("suite", suite, "suite name")->required();
  verify->add_option("--seed", v_seed, "master seed")->envname("CBFLOW_SEED");
  verify->add_option("--n", v_n, "override replicate count");
  verify->add_option("--dt", v_dt, "override step size");
  verify->add_option("--jobs", v_jobs, "worker threads (default: machine)");
  verify->add_option("--json", v_json, "write JSON report to file");
  verify->add_option("--text", v_text, "write text report to file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (mech_show->parsed()) return cmd_mech_show(show_mf, show_json);
    if (sv->parsed()) return cmd_solve_v(sv_mf, sv_lambda, sv_t, sv_step, sv_out);
    if (su->parsed())
      return cmd_solve_u(su_mf, su_f, su_s, su_s_opt->count() > 0, su_step, su_out);
    if (sV->parsed()) return cmd_solve_V(sV_mf, sV_grid, sV_f, sV_t, sV_step, sV_out);
    if (sc->parsed())
      return cmd_simulate_cbi(sc_mf, sc_over, sc_x0, sc_rho, sc_imm_h, sc_imm_atoms,
                              sc_rep, sc_out, sc_bin);
    if (sf->parsed())
      return cmd_simulate_flow(sf_mf, sf_over, sf_mu, sf_q, sf_rho, sf_imm_h,
                               sf_imm_atoms, sf_rep, sf_out, sf_bin);
    if (verify->parsed())
      return cmd_verify(suite, v_seed, v_n, v_dt, v_jobs, v_json, v_text);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
