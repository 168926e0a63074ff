// Command-line driver: solve, diagnose, refine, stability, exponents.
//
// Exit codes: 0 success, 1 runtime failure, 2 invalid input or usage,
// 3 solver stopped at max_iter.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "mfgplan/diagnostics.hpp"
#include "mfgplan/io.hpp"

using namespace mfgplan;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitInvalid = 2;
constexpr int kExitNotConverged = 3;

void print_report(const DiagnosticsReport& r) { std::cout << report_to_json(r).dump(2) << '\n'; }

int cmd_solve(const std::string& config, const std::string& out_dir, int threads) {
  auto cfg = load_config(config);
  if (threads > 0) cfg.solver.threads = threads;
  if (!out_dir.empty()) cfg.output.directory = out_dir;
  const auto s = solve(cfg.problem, cfg.grid, cfg.solver);
  const auto r = diagnose(cfg.problem, s, cfg.diagnostics);
  const auto dir = output_directory(cfg);
  if (cfg.output.csv) write_fields(s, dir);
  if (cfg.output.summary) write_report(r, cfg, s, dir);
  std::printf("status=%s iterations=%d seconds=%.2f B=%.12g gap=%.3e feas=%.3e output=%s\n", to_string(s.status),
              s.iterations, s.seconds, r.B, r.gap, r.feas, dir.string().c_str());
  return s.status == SolveStatus::converged ? 0 : kExitNotConverged;
}

int cmd_diagnose(const std::string& config, const std::string& fields) {
  const auto cfg = load_config(config);
  auto s = read_fields(cfg.grid, fields);
  print_report(diagnose(cfg.problem, s, cfg.diagnostics));
  return 0;
}

int cmd_refine(const std::string& config, std::vector<int> N, std::vector<int> Nt, int threads) {
  auto cfg = load_config(config);
  if (threads > 0) cfg.solver.threads = threads;
  if (N.empty()) N = {cfg.grid.N / 2, cfg.grid.N, cfg.grid.N * 2};
  if (Nt.empty()) Nt = N;
  const auto tab = refinement_study(cfg.problem, cfg.solver, N, Nt, cfg.diagnostics);
  json out = json::array();
  bool all = true;
  std::printf("%6s %6s %8s %10s %16s %10s %10s %10s %10s %10s %10s\n", "N", "Nt", "iters", "status", "B", "gap",
              "s_m", "s_u", "t_m", "t_u", "holder");
  for (const auto& row : tab.rows) {
    const auto& r = row.report;
    std::printf("%6d %6d %8d %10s %16.10f %10.2e %10.5f %10.5f %10.5f %10.5f %10.5f\n", row.N, row.Nt,
                row.iterations, to_string(row.status), r.B, r.gap, r.seminorm_space_m, r.seminorm_space_u,
                r.seminorm_time_m, r.seminorm_time_u, r.holder);
    json j = report_to_json(r);
    j["N"] = row.N;
    j["Nt"] = row.Nt;
    j["iterations"] = row.iterations;
    j["status"] = to_string(row.status);
    out.push_back(j);
    all = all && row.status == SolveStatus::converged;
  }
  std::printf("factors: s_m=%.4f s_u=%.4f t_m=%.4f t_u=%.4f holder=%.4f  B_cauchy=%s\n", tab.factor_space_m,
              tab.factor_space_u, tab.factor_time_m, tab.factor_time_u, tab.factor_holder,
              tab.B_cauchy ? "yes" : "no");
  const auto dir = output_directory(cfg);
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "refinement.json") << out.dump(2) << '\n';
  return all ? 0 : kExitNotConverged;
}

int cmd_stability(const std::string& config, std::vector<double> eps, int threads) {
  auto cfg = load_config(config);
  if (threads > 0) cfg.solver.threads = threads;
  if (eps.empty()) eps = cfg.eps_list;
  const auto tab = stability_experiment(cfg.problem, cfg.grid, cfg.solver, eps);
  bool all = true;
  std::printf("%8s %10s %16s %12s  pairings\n", "eps", "status", "B", "Lq");
  for (const auto& row : tab.rows) {
    std::printf("%8.4f %10s %16.10f %12.6f ", row.eps, to_string(row.status), row.B, row.Lq_norm);
    for (double v : row.pairings) std::printf(" %+.6e", v);
    std::printf("\n");
    all = all && row.status == SolveStatus::converged;
  }
  std::printf("monotone:");
  for (bool m : tab.monotone) std::printf(" %s", m ? "yes" : "no");
  std::printf("  rel_B_change(smallest eps)=%.3e\n", tab.rel_B_change_smallest_eps);
  return all ? 0 : kExitNotConverged;
}

int cmd_exponents(const std::string& config) {
  const auto cfg = load_config(config);
  const auto e = exponents(cfg.problem);
  std::printf("r'=%.10g\nq'=%.10g\nl=%.10g\nnu=%.10g\n", e.r_conj, e.q_conj, e.ell, e.nu);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"First-order mean field games planning problem: solver and certificates"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Worker thread cap for the per-cell prox (OpenMP builds)");

  std::string config, fields, out_dir;
  std::vector<int> N, Nt;
  std::vector<double> eps;

  auto* solve_cmd = app.add_subcommand("solve", "Solve and write fields and summary");
  solve_cmd->add_option("config", config, "Configuration file")->required();
  solve_cmd->add_option("--out", out_dir, "Output directory (overrides the config)");

  auto* diag_cmd = app.add_subcommand("diagnose", "Re-check certificates on stored fields");
  diag_cmd->add_option("config", config, "Configuration file")->required();
  diag_cmd->add_option("fields", fields, "Directory written by 'solve'")->required();

  auto* refine_cmd = app.add_subcommand("refine", "Refinement study");
  refine_cmd->add_option("config", config, "Configuration file")->required();
  refine_cmd->add_option("--N", N, "Spatial resolutions (ascending)");
  refine_cmd->add_option("--Nt", Nt, "Time resolutions (ascending, default: same as --N)");

  auto* stab_cmd = app.add_subcommand("stability", "Endpoint perturbation study");
  stab_cmd->add_option("config", config, "Configuration file")->required();
  stab_cmd->add_option("--eps", eps, "Mixing weights (default: diagnostics.eps_list)");

  auto* exp_cmd = app.add_subcommand("exponents", "Print r', q', l and nu");
  exp_cmd->add_option("config", config, "Configuration file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInvalid;
  }

  try {
    if (*solve_cmd) return cmd_solve(config, out_dir, threads);
    if (*diag_cmd) return cmd_diagnose(config, fields);
    if (*refine_cmd) return cmd_refine(config, N, Nt, threads);
    if (*stab_cmd) return cmd_stability(config, eps, threads);
    if (*exp_cmd) return cmd_exponents(config);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitInvalid;
}
