#pragma once

// Run configuration (strict JSON), field serialization and report output.
//
// Config blocks: problem, grid, solver, diagnostics, output. Only `problem`
// is required; every other field has the default documented in README.md.
// Unknown keys are rejected with their full path.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "mfgplan/diagnostics.hpp"
#include "mfgplan/grid.hpp"
#include "mfgplan/model.hpp"
#include "mfgplan/presets.hpp"
#include "mfgplan/solver.hpp"

namespace mfgplan {

using json = nlohmann::ordered_json;

struct OutputOptions {
  std::string directory;  // empty: $MFGPLAN_OUTPUT_DIR, then "mfgplan_out"
  bool csv = true;
  bool summary = true;
};

struct RunConfig {
  ProblemSpec problem;
  GridSpec grid;
  SolverConfig solver;
  DiagnosticsOptions diagnostics;
  std::vector<double> eps_list{0.2, 0.1, 0.05};
  OutputOptions output;
  std::filesystem::path base_dir;  // directory of the config file, for relative paths
};

namespace detail {

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail("expected an object");
  }

  void allow(std::initializer_list<const char*> keys) const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      bool known = false;
      for (const char* k : keys) known = known || it.key() == k;
      if (!known) throw ValidationError(join(it.key()) + ": unknown key");
    }
  }
  bool has(const char* key) const { return j_.contains(key); }
  const json& at(const char* key) const { return j_.at(key); }
  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  double number(const char* key, double def) const {
    if (!has(key)) return def;
    if (!j_.at(key).is_number()) throw ValidationError(join(key) + ": expected a number");
    return j_.at(key).get<double>();
  }
  int integer(const char* key, int def) const {
    if (!has(key)) return def;
    if (!j_.at(key).is_number_integer()) throw ValidationError(join(key) + ": expected an integer");
    return j_.at(key).get<int>();
  }
  std::string string(const char* key, const std::string& def) const {
    if (!has(key)) return def;
    if (!j_.at(key).is_string()) throw ValidationError(join(key) + ": expected a string");
    return j_.at(key).get<std::string>();
  }
  bool boolean(const char* key, bool def) const {
    if (!has(key)) return def;
    if (!j_.at(key).is_boolean()) throw ValidationError(join(key) + ": expected true or false");
    return j_.at(key).get<bool>();
  }
  Vec point(const char* key, const Vec& def) const {
    if (!has(key)) return def;
    const auto& a = j_.at(key);
    if (a.is_number()) return {a.get<double>(), 0.5};
    if (!a.is_array() || a.empty() || a.size() > 2) throw ValidationError(join(key) + ": expected 1 or 2 coordinates");
    Vec v{0.5, 0.5};
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (!a[i].is_number()) throw ValidationError(join(key) + ": expected numbers");
      v[i] = a[i].get<double>();
    }
    return v;
  }
  [[noreturn]] void fail(const std::string& what) const { throw ValidationError((path_.empty() ? "config" : path_) + ": " + what); }

 private:
  const json& j_;
  std::string path_;
};

inline SpatialField parse_coefficient(const json& j, const std::string& path, double def) {
  if (j.is_number()) return SpatialField::constant(j.get<double>());
  Reader r(j, path);
  r.allow({"preset", "value", "amplitude", "wavenumber", "phase"});
  const std::string preset = r.string("preset", "constant");
  SpatialField f = SpatialField::constant(r.number("value", def));
  if (preset == "constant") {
    if (r.has("amplitude") || r.has("wavenumber") || r.has("phase"))
      r.fail("constant preset takes only 'value'");
    return f;
  }
  if (preset != "cosine") r.fail("unknown coefficient preset '" + preset + "' (constant|cosine)");
  f.amplitude = r.number("amplitude", 0.0);
  f.phase = r.number("phase", 0.0);
  if (r.has("wavenumber")) {
    const auto& a = r.at("wavenumber");
    if (!a.is_array() || a.empty() || a.size() > 2) r.fail("wavenumber: expected 1 or 2 integers");
    f.wavenumber = {0, 0};
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (!a[i].is_number_integer()) r.fail("wavenumber: expected integers");
      f.wavenumber[i] = a[i].get<int>();
    }
  }
  return f;
}

inline json coefficient_to_json(const SpatialField& f) {
  if (f.amplitude == 0.0) return json{{"preset", "constant"}, {"value", f.value}};
  return json{{"preset", "cosine"},
              {"value", f.value},
              {"amplitude", f.amplitude},
              {"wavenumber", {f.wavenumber[0], f.wavenumber[1]}},
              {"phase", f.phase}};
}

inline DensityPreset parse_density(const json& j, const std::string& path, const std::filesystem::path& base) {
  Reader r(j, path);
  r.allow({"preset", "center", "center2", "width", "path"});
  DensityPreset p;
  const std::string preset = r.string("preset", "uniform");
  if (preset == "uniform") {
    p.kind = DensityKind::uniform;
  } else if (preset == "gaussian") {
    p.kind = DensityKind::gaussian;
  } else if (preset == "double_bump") {
    p.kind = DensityKind::double_bump;
  } else if (preset == "from_csv") {
    p.kind = DensityKind::from_csv;
  } else {
    r.fail("unknown density preset '" + preset + "' (uniform|gaussian|double_bump|from_csv)");
  }
  p.center = r.point("center", p.center);
  p.center2 = r.point("center2", p.center2);
  p.width = r.number("width", p.width);
  p.path = r.string("path", "");
  if (!p.path.empty() && std::filesystem::path(p.path).is_relative())
    p.path = std::filesystem::absolute(base / p.path).lexically_normal().string();
  return p;
}

inline json density_to_json(const DensityPreset& p) {
  switch (p.kind) {
    case DensityKind::uniform:
      return json{{"preset", "uniform"}};
    case DensityKind::gaussian:
      return json{{"preset", "gaussian"}, {"center", {p.center[0], p.center[1]}}, {"width", p.width}};
    case DensityKind::double_bump:
      return json{{"preset", "double_bump"},
                  {"center", {p.center[0], p.center[1]}},
                  {"center2", {p.center2[0], p.center2[1]}},
                  {"width", p.width}};
    case DensityKind::from_csv:
      return json{{"preset", "from_csv"}, {"path", p.path}};
  }
  return {};
}

}  // namespace detail

/// Parses and validates a configuration document.
inline RunConfig parse_config(const json& j, const std::filesystem::path& base_dir = {}) {
  using detail::Reader;
  RunConfig cfg;
  cfg.base_dir = base_dir;
  Reader root(j, "");
  root.allow({"problem", "grid", "solver", "diagnostics", "output"});
  if (!root.has("problem")) throw ValidationError("problem: required block is missing");

  Reader pr(root.at("problem"), "problem");
  pr.allow({"d", "T", "r", "q", "b", "c", "a", "m0", "mT"});
  auto& p = cfg.problem;
  p.d = pr.integer("d", 1);
  p.T = pr.number("T", 1.0);
  p.hamiltonian.r = pr.number("r", 2.0);
  p.coupling.q = pr.number("q", 2.0);
  if (pr.has("b")) p.hamiltonian.b = detail::parse_coefficient(pr.at("b"), "problem.b", 1.0);
  if (pr.has("c")) p.hamiltonian.c = detail::parse_coefficient(pr.at("c"), "problem.c", 0.0);
  if (pr.has("a")) p.coupling.a = detail::parse_coefficient(pr.at("a"), "problem.a", 1.0);
  if (pr.has("m0")) p.m0 = detail::parse_density(pr.at("m0"), "problem.m0", base_dir);
  if (pr.has("mT")) p.mT = detail::parse_density(pr.at("mT"), "problem.mT", base_dir);

  cfg.grid = GridSpec{p.d, 64, 64, p.T};
  if (root.has("grid")) {
    Reader gr(root.at("grid"), "grid");
    gr.allow({"N", "Nt"});
    cfg.grid.N = gr.integer("N", 64);
    cfg.grid.Nt = gr.integer("Nt", 64);
  }

  auto& s = cfg.solver;
  if (root.has("solver")) {
    Reader sr(root.at("solver"), "solver");
    sr.allow({"tau", "sigma", "theta", "max_iter", "tol_gap", "tol_feas", "check_every", "step_rule",
              "normalization", "threads"});
    s.tau = sr.number("tau", s.tau);
    s.sigma = sr.number("sigma", s.sigma);
    s.theta = sr.number("theta", s.theta);
    s.max_iter = sr.integer("max_iter", s.max_iter);
    s.tol_gap = sr.number("tol_gap", s.tol_gap);
    s.tol_feas = sr.number("tol_feas", s.tol_feas);
    s.check_every = sr.integer("check_every", s.check_every);
    s.threads = sr.integer("threads", s.threads);
    const auto rule = sr.string("step_rule", "diagonal");
    if (rule == "diagonal") s.step_rule = StepRule::diagonal;
    else if (rule == "uniform") s.step_rule = StepRule::uniform;
    else sr.fail("step_rule must be 'diagonal' or 'uniform'");
    const auto norm_mode = sr.string("normalization", "mean");
    if (norm_mode == "mean") s.normalization = Normalization::mean;
    else if (norm_mode == "min_terminal") s.normalization = Normalization::min_terminal;
    else sr.fail("normalization must be 'mean' or 'min_terminal'");
    if (s.tau < 0.0 || s.sigma < 0.0) sr.fail("tau and sigma must be nonnegative (0 selects the default)");
    if (!(s.theta >= 0.0 && s.theta <= 1.0)) sr.fail("theta must lie in [0,1]");
    if (s.max_iter < 1 || s.check_every < 1) sr.fail("max_iter and check_every must be >= 1");
    if (!(s.tol_gap > 0.0) || !(s.tol_feas > 0.0)) sr.fail("tolerances must be positive");
  }

  if (root.has("diagnostics")) {
    Reader dr(root.at("diagnostics"), "diagnostics");
    dr.allow({"eps_mask", "tau_interior", "eps_list", "holder_samples"});
    cfg.diagnostics.eps_mask_rel = dr.number("eps_mask", cfg.diagnostics.eps_mask_rel);
    cfg.diagnostics.tau_interior = dr.number("tau_interior", cfg.diagnostics.tau_interior);
    cfg.diagnostics.holder_samples = dr.integer("holder_samples", cfg.diagnostics.holder_samples);
    if (dr.has("eps_list")) {
      const auto& a = dr.at("eps_list");
      if (!a.is_array()) dr.fail("eps_list: expected an array");
      cfg.eps_list.clear();
      for (const auto& e : a) {
        if (!e.is_number()) dr.fail("eps_list: expected numbers");
        cfg.eps_list.push_back(e.get<double>());
      }
    }
  }

  if (root.has("output")) {
    Reader orr(root.at("output"), "output");
    orr.allow({"directory", "formats"});
    cfg.output.directory = orr.string("directory", "");
    if (orr.has("formats")) {
      const auto& a = orr.at("formats");
      if (!a.is_array()) orr.fail("formats: expected an array");
      cfg.output.csv = cfg.output.summary = false;
      for (const auto& f : a) {
        const auto v = f.is_string() ? f.get<std::string>() : std::string();
        if (v == "csv") cfg.output.csv = true;
        else if (v == "summary") cfg.output.summary = true;
        else orr.fail("formats: entries must be 'csv' or 'summary'");
      }
    }
  }

  require_assumptions(cfg.problem);
  validate(cfg.grid);
  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return parse_config(j, path.parent_path());
}

/// Canonical echo of a configuration; parse_config(config_to_json(c)) == c.
inline json config_to_json(const RunConfig& c) {
  const auto& p = c.problem;
  json j;
  j["problem"] = json{{"d", p.d},
                      {"T", p.T},
                      {"r", p.hamiltonian.r},
                      {"q", p.coupling.q},
                      {"b", detail::coefficient_to_json(p.hamiltonian.b)},
                      {"c", detail::coefficient_to_json(p.hamiltonian.c)},
                      {"a", detail::coefficient_to_json(p.coupling.a)},
                      {"m0", detail::density_to_json(p.m0)},
                      {"mT", detail::density_to_json(p.mT)}};
  j["grid"] = json{{"N", c.grid.N}, {"Nt", c.grid.Nt}};
  const auto& s = c.solver;
  j["solver"] = json{{"tau", s.tau},
                     {"sigma", s.sigma},
                     {"theta", s.theta},
                     {"max_iter", s.max_iter},
                     {"tol_gap", s.tol_gap},
                     {"tol_feas", s.tol_feas},
                     {"check_every", s.check_every},
                     {"step_rule", s.step_rule == StepRule::diagonal ? "diagonal" : "uniform"},
                     {"normalization", s.normalization == Normalization::mean ? "mean" : "min_terminal"},
                     {"threads", s.threads}};
  j["diagnostics"] = json{{"eps_mask", c.diagnostics.eps_mask_rel},
                          {"tau_interior", c.diagnostics.tau_interior},
                          {"eps_list", c.eps_list},
                          {"holder_samples", c.diagnostics.holder_samples}};
  json formats = json::array();
  if (c.output.csv) formats.push_back("csv");
  if (c.output.summary) formats.push_back("summary");
  j["output"] = json{{"directory", c.output.directory}, {"formats", formats}};
  return j;
}

inline std::filesystem::path output_directory(const RunConfig& c) {
  if (!c.output.directory.empty()) return c.output.directory;
  if (const char* env = std::getenv("MFGPLAN_OUTPUT_DIR"); env && *env) return env;
  return "mfgplan_out";
}

// ---------------------------------------------------------------------------
// Field CSV

namespace detail {

inline void write_lattice(const std::filesystem::path& file, const GridSpec& g, const std::vector<double>& v,
                          bool nodes, int components) {
  std::ofstream out(file);
  if (!out) throw IoError("cannot write '" + file.string() + "'");
  out << "t,x";
  if (g.d == 2) out << ",y";
  out << ",value";
  if (components == 2) out << ",value_y";
  out << '\n';
  const std::size_t C = g.cells();
  const int nk = nodes ? g.Nt + 1 : g.Nt;
  for (int k = 0; k < nk; ++k) {
    const double t = nodes ? g.t_node(k) : g.t_mid(k);
    for (std::size_t i = 0; i < C; ++i) {
      const Vec x = g.center(i);
      out << fmt17(t) << ',' << fmt17(x[0]);
      if (g.d == 2) out << ',' << fmt17(x[1]);
      const std::size_t j = k * C + i;
      for (int a = 0; a < components; ++a) out << ',' << fmt17(v[j * components + a]);
      out << '\n';
    }
  }
  if (!out) throw IoError("write failure on '" + file.string() + "'");
}

inline std::vector<double> read_lattice(const std::filesystem::path& file, const GridSpec& g, bool nodes,
                                        int components) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open '" + file.string() + "'");
  std::string line;
  std::getline(in, line);
  const std::size_t rows = (nodes ? g.Nt + 1 : g.Nt) * g.cells();
  const int ncols = 1 + g.d + components;
  std::vector<double> v;
  v.reserve(rows * components);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    int col = 0;
    while (std::getline(ss, cell, ',')) {
      if (col >= 1 + g.d) {
        char* end = nullptr;
        const double x = std::strtod(cell.c_str(), &end);
        if (end == cell.c_str()) throw IoError(file.string() + ":" + std::to_string(lineno) + ": not a number");
        v.push_back(x);
      }
      ++col;
    }
    if (col != ncols)
      throw IoError(file.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(ncols) + " columns");
  }
  if (v.size() != rows * components)
    throw IoError(file.string() + ": expected " + std::to_string(rows) + " rows for the configured grid");
  return v;
}

}  // namespace detail

/// Writes m.csv, w.csv, u.csv, alpha.csv, u_t.csv, u_x.csv and history.csv,
/// plus M.csv and W.csv when the bundle carries a centered copy.
inline void write_fields(const SolutionBundle& s, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto& g = s.grid;
  detail::write_lattice(dir / "m.csv", g, s.primal.m, true, 1);
  detail::write_lattice(dir / "w.csv", g, s.primal.w, false, g.d);
  if (!s.centered.empty()) {
    detail::write_lattice(dir / "M.csv", g, s.centered.M, false, 1);
    detail::write_lattice(dir / "W.csv", g, s.centered.W, false, g.d);
  }
  detail::write_lattice(dir / "u.csv", g, s.dual.u, false, 1);
  detail::write_lattice(dir / "alpha.csv", g, s.dual.alpha, false, 1);
  detail::write_lattice(dir / "u_t.csv", g, s.dual.u_t, false, 1);
  detail::write_lattice(dir / "u_x.csv", g, s.dual.u_x, false, g.d);
  std::ofstream h(dir / "history.csv");
  if (!h) throw IoError("cannot write history.csv");
  h << "iteration,B,A,gap,feas\n";
  for (const auto& r : s.history)
    h << r.iteration << ',' << detail::fmt17(r.B) << ',' << detail::fmt17(r.A) << ',' << detail::fmt17(r.gap) << ','
      << detail::fmt17(r.feas) << '\n';
}

/// Rebuilds a bundle from files written by write_fields. Endpoint densities
/// are the first and last node slices of m.
inline SolutionBundle read_fields(const GridSpec& g, const std::filesystem::path& dir) {
  SolutionBundle s;
  s.grid = g;
  s.primal.m = detail::read_lattice(dir / "m.csv", g, true, 1);
  s.primal.w = detail::read_lattice(dir / "w.csv", g, false, g.d);
  if (std::filesystem::exists(dir / "M.csv")) {
    s.centered.M = detail::read_lattice(dir / "M.csv", g, false, 1);
    s.centered.W = detail::read_lattice(dir / "W.csv", g, false, g.d);
  }
  s.dual.u = detail::read_lattice(dir / "u.csv", g, false, 1);
  s.dual.alpha = detail::read_lattice(dir / "alpha.csv", g, false, 1);
  s.dual.u_t = detail::read_lattice(dir / "u_t.csv", g, false, 1);
  s.dual.u_x = detail::read_lattice(dir / "u_x.csv", g, false, g.d);
  const std::size_t C = g.cells();
  s.m0.assign(s.primal.m.begin(), s.primal.m.begin() + C);
  s.mT.assign(s.primal.m.end() - C, s.primal.m.end());
  return s;
}

// ---------------------------------------------------------------------------
// Summary

inline json report_to_json(const DiagnosticsReport& r) {
  return json{{"B", r.B},
              {"A", r.A},
              {"gap", r.gap},
              {"feas", r.feas},
              {"dual_res", r.dual_res},
              {"energy_identity", r.energy_identity},
              {"hj_violation", r.hj_violation},
              {"opt_rel_w", r.opt_rel_w},
              {"opt_rel_alpha", r.opt_rel_alpha},
              {"seminorm_space_m", r.seminorm_space_m},
              {"seminorm_space_u", r.seminorm_space_u},
              {"seminorm_time_m", r.seminorm_time_m},
              {"seminorm_time_u", r.seminorm_time_u},
              {"holder", r.holder},
              {"total_variation_u", r.total_variation_u},
              {"eps_mask", r.eps_mask},
              {"tau_interior", r.tau_interior}};
}

inline json history_to_json(const std::vector<CheckRecord>& hist) {
  json a = json::array();
  for (const auto& r : hist)
    a.push_back(json{{"iteration", r.iteration},
                     {"B", r.B},
                     {"A", r.A},
                     {"gap", r.gap},
                     {"feas", r.feas},
                     {"dual_res", r.dual_res},
                     {"best_gap", r.best_gap}});
  return a;
}

/// summary.json: report entries at top level, plus config echo and history.
inline void write_report(const DiagnosticsReport& r, const RunConfig& cfg, const SolutionBundle& s,
                         const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json j = report_to_json(r);
  j["status"] = to_string(s.status);
  j["iterations"] = s.iterations;
  j["seconds"] = s.seconds;
  j["config"] = config_to_json(cfg);
  j["history"] = history_to_json(s.history);
  std::ofstream out(dir / "summary.json");
  if (!out) throw IoError("cannot write summary.json");
  out << j.dump(2) << '\n';
}

}  // namespace mfgplan
