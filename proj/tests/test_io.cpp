#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mfgplan/io.hpp"

using namespace mfgplan;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "mfgplan_test_io" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string error_of(const json& j) {
  try {
    parse_config(j);
  } catch (const ValidationError& e) {
    return e.what();
  }
  return {};
}

struct Run {
  int code;
  std::string out;
};

Run run_cli(const std::string& args) {
  const std::string cmd = std::string(MFGPLAN_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  std::string out;
  char buf[4096];
  while (pipe && fgets(buf, sizeof buf, pipe)) out += buf;
  const int status = pipe ? pclose(pipe) : -1;
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::size_t count_lines(const fs::path& f) {
  std::ifstream in(f);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) ++n;
  return n;
}

}  // namespace

TEST(Config, MinimalDefaults) {
  const auto c = parse_config(json::parse(R"({"problem": {}})"));
  EXPECT_EQ(c.problem.d, 1);
  EXPECT_EQ(c.problem.T, 1.0);
  EXPECT_EQ(c.problem.hamiltonian.r, 2.0);
  EXPECT_EQ(c.problem.coupling.q, 2.0);
  EXPECT_EQ(c.problem.m0.kind, DensityKind::uniform);
  EXPECT_EQ(c.grid.N, 64);
  EXPECT_EQ(c.grid.Nt, 64);
  EXPECT_EQ(c.solver.tol_gap, 1e-4);
  EXPECT_EQ(c.solver.step_rule, StepRule::diagonal);
  EXPECT_EQ(c.eps_list, (std::vector<double>{0.2, 0.1, 0.05}));
  EXPECT_TRUE(c.output.csv);
  EXPECT_TRUE(c.output.summary);
}

TEST(Config, MissingProblemBlock) {
  EXPECT_NE(error_of(json::parse(R"({"grid": {"N": 8}})")).find("problem"), std::string::npos);
}

TEST(Config, HypothesisErrors) {
  auto e = error_of(json::parse(R"({"problem": {"q": 1}})"));
  EXPECT_NE(e.find("(H3)"), std::string::npos) << e;
  EXPECT_NE(e.find("q>1"), std::string::npos) << e;
  e = error_of(json::parse(R"({"problem": {"r": 1.2, "d": 2, "q": 2}})"));
  EXPECT_NE(e.find("(H3)"), std::string::npos) << e;
  EXPECT_NE(e.find("r > max{d(q-1),1}"), std::string::npos) << e;
  e = error_of(json::parse(R"({"problem": {"b": {"preset": "cosine", "value": 1, "amplitude": 2}}})"));
  EXPECT_NE(e.find("(H1)"), std::string::npos) << e;
}

TEST(Config, StrictKeysAndTypes) {
  EXPECT_EQ(error_of(json::parse(R"({"problem": {"rr": 2}})")), "problem.rr: unknown key");
  EXPECT_EQ(error_of(json::parse(R"({"problem": {"m0": {"preset": "gaussian", "x": 1}}})")),
            "problem.m0.x: unknown key");
  EXPECT_EQ(error_of(json::parse(R"({"problem": {}, "extra": 1})")), "extra: unknown key");
  EXPECT_EQ(error_of(json::parse(R"({"problem": {"r": "2"}})")), "problem.r: expected a number");
  EXPECT_EQ(error_of(json::parse(R"({"problem": {}, "grid": {"N": 8.5}})")), "grid.N: expected an integer");
  EXPECT_NE(error_of(json::parse(R"({"problem": {}, "grid": {"N": 2}})")).find("N must be >= 4"), std::string::npos);
  EXPECT_NE(error_of(json::parse(R"({"problem": {}, "solver": {"step_rule": "fast"}})")).find("solver"),
            std::string::npos);
  EXPECT_NE(error_of(json::parse(R"({"problem": {"m0": {"preset": "triangle"}}})")).find("problem.m0"),
            std::string::npos);
  EXPECT_NE(error_of(json::parse(R"({"problem": {"a": {"preset": "constant", "value": 1, "amplitude": 1}}})"))
                .find("problem.a"),
            std::string::npos);
}

TEST(Config, EchoIsIdempotent) {
  for (const char* name : {"uniform.json", "gaussian.json", "split.json", "varying_2d.json"}) {
    const auto c1 = load_config(fs::path(MFGPLAN_CONFIG_DIR) / name);
    const auto e1 = config_to_json(c1);
    const auto c2 = parse_config(e1);
    EXPECT_EQ(config_to_json(c2), e1) << name;
  }
}

TEST(Config, ParseErrorHasLine) {
  const auto dir = scratch("parse");
  std::ofstream(dir / "bad.json") << "{\n  \"problem\": {\n    \"r\": 2,,\n  }\n}\n";
  try {
    load_config(dir / "bad.json");
    FAIL() << "expected a parse error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(load_config(dir / "missing.json"), IoError);
}

TEST(Config, RelativeCsvPathResolvesAgainstConfig) {
  const auto dir = scratch("csvpath");
  GridSpec g{1, 8, 8, 1.0};
  write_density_csv((dir / "rho.csv").string(), g, std::vector<double>(8, 1.0));
  std::ofstream(dir / "c.json") << R"({"problem": {"m0": {"preset": "from_csv", "path": "rho.csv"}}})";
  const auto c = load_config(dir / "c.json");
  EXPECT_EQ(fs::path(c.problem.m0.path), fs::absolute(dir / "rho.csv").lexically_normal());
}

TEST(Fields, RoundTrip) {
  ProblemSpec p;
  p.m0.kind = DensityKind::gaussian;
  p.m0.center = {0.3, 0.0};
  p.mT.kind = DensityKind::gaussian;
  p.mT.center = {0.6, 0.0};
  GridSpec g{1, 16, 16, 1.0};
  const auto s = solve(p, g, SolverConfig{});
  const auto dir = scratch("fields");
  write_fields(s, dir);
  const auto back = read_fields(g, dir);
  EXPECT_EQ(back.primal.m, s.primal.m);
  EXPECT_EQ(back.primal.w, s.primal.w);
  EXPECT_EQ(back.centered.M, s.centered.M);
  EXPECT_EQ(back.centered.W, s.centered.W);
  EXPECT_EQ(back.dual.u, s.dual.u);
  EXPECT_EQ(back.dual.u_x, s.dual.u_x);
  const double b0 = eval_B(p, g, centered_of(s)), b1 = eval_B(p, g, centered_of(back));
  EXPECT_NEAR(b1, b0, 1e-15 * std::abs(b0));
  const auto r0 = report_to_json(diagnose(p, s)), r1 = report_to_json(diagnose(p, back));
  for (auto it = r0.begin(); it != r0.end(); ++it) {
    const double a = it.value().get<double>(), b = r1.at(it.key()).get<double>();
    EXPECT_NEAR(a, b, 1e-15 * std::max(1.0, std::abs(a))) << it.key();
  }
  EXPECT_EQ(count_lines(dir / "history.csv"), s.history.size() + 1);
}

TEST(Fields, UniformRunCsvShape) {
  ProblemSpec p;
  GridSpec g{2, 6, 6, 1.0};
  p.d = 2;
  p.coupling.q = 1.5;  // joint growth needs r > d(q-1)
  SolverConfig cfg;
  cfg.tol_gap = cfg.tol_feas = 1e-9;
  const auto s = solve(p, g, cfg);
  const auto dir = scratch("uniform");
  write_fields(s, dir);
  EXPECT_EQ(count_lines(dir / "m.csv"), std::size_t(g.Nt + 1) * 36 + 1);
  std::ifstream in(dir / "m.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "t,x,y,value");
  while (std::getline(in, line)) {
    const double v = std::stod(line.substr(line.rfind(',') + 1));
    EXPECT_NEAR(v, 1.0, 1e-6);
  }
  std::ifstream win(dir / "w.csv");
  std::getline(win, line);
  EXPECT_EQ(line, "t,x,y,value,value_y");
}

TEST(Fields, ReadRejectsWrongShape) {
  const auto dir = scratch("shape");
  ProblemSpec p;
  GridSpec g{1, 8, 8, 1.0};
  auto s = solve(p, g, SolverConfig{});
  write_fields(s, dir);
  EXPECT_THROW(read_fields(GridSpec{1, 16, 8, 1.0}, dir), IoError);
}

TEST(Summary, ContainsReportConfigAndHistory) {
  auto cfg = parse_config(json::parse(R"({"problem": {}, "grid": {"N": 16, "Nt": 16}})"));
  const auto s = solve(cfg.problem, cfg.grid, cfg.solver);
  const auto dir = scratch("summary");
  write_report(diagnose(cfg.problem, s), cfg, s, dir);
  std::ifstream in(dir / "summary.json");
  const auto j = json::parse(in);
  EXPECT_LE(std::abs(j.at("gap").get<double>()), cfg.solver.tol_gap);
  EXPECT_EQ(j.at("status"), "converged");
  EXPECT_EQ(j.at("config"), config_to_json(cfg));
  EXPECT_EQ(j.at("history").size(), s.history.size());
  for (const char* k : {"energy_identity", "hj_violation", "opt_rel_w", "opt_rel_alpha", "seminorm_space_m",
                        "seminorm_space_u", "seminorm_time_m", "seminorm_time_u", "holder", "eps_mask"})
    EXPECT_TRUE(j.contains(k)) << k;
}

TEST(OutputDirectory, EnvironmentFallback) {
  RunConfig c;
  c.output.directory = "explicit";
  EXPECT_EQ(output_directory(c), fs::path("explicit"));
  c.output.directory.clear();
  setenv("MFGPLAN_OUTPUT_DIR", "/tmp/from_env", 1);
  EXPECT_EQ(output_directory(c), fs::path("/tmp/from_env"));
  unsetenv("MFGPLAN_OUTPUT_DIR");
  EXPECT_EQ(output_directory(c), fs::path("mfgplan_out"));
}

TEST(Cli, Exponents) {
  const auto r = run_cli(std::string("exponents ") + MFGPLAN_CONFIG_DIR + "/exponents_example.json");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("l=1.2\n"), std::string::npos) << r.out;
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run_cli("frobnicate").code, 2);
  EXPECT_EQ(run_cli("").code, 2);
  EXPECT_EQ(run_cli("solve").code, 2);
  EXPECT_EQ(run_cli("solve /nonexistent/config.json").code, 2);
  const auto dir = scratch("cli_bad");
  std::ofstream(dir / "q1.json") << R"({"problem": {"q": 1}})";
  const auto r = run_cli("solve " + (dir / "q1.json").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("(H3)"), std::string::npos) << r.out;
}

TEST(Cli, SolveThenDiagnose) {
  const auto dir = scratch("cli_solve");
  std::ofstream(dir / "c.json") << R"({"problem": {}, "grid": {"N": 16, "Nt": 16}, "output": {"directory": "unused"}})";
  const auto out = dir / "out";
  const auto r = run_cli("--threads 1 solve " + (dir / "c.json").string() + " --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.out;
  std::ifstream in(out / "summary.json");
  const auto summary = json::parse(in);
  EXPECT_LE(std::abs(summary.at("gap").get<double>()), 1e-4);
  const auto d = run_cli("diagnose " + (dir / "c.json").string() + " " + out.string());
  ASSERT_EQ(d.code, 0) << d.out;
  const auto rep = json::parse(d.out);
  for (const char* k : {"B", "gap", "energy_identity", "seminorm_space_m"})
    EXPECT_NEAR(rep.at(k).get<double>(), summary.at(k).get<double>(),
                1e-15 * std::max(1.0, std::abs(summary.at(k).get<double>())))
        << k;
}

TEST(Cli, NonConvergenceExitCode) {
  const auto dir = scratch("cli_maxiter");
  std::ofstream(dir / "c.json") << R"({"problem": {"m0": {"preset": "gaussian", "center": 0.2}},
    "grid": {"N": 16, "Nt": 16}, "solver": {"max_iter": 20, "check_every": 10}})";
  EXPECT_EQ(run_cli("solve " + (dir / "c.json").string() + " --out " + (dir / "out").string()).code, 3);
}
