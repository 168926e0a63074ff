#pragma once

// Endpoint density presets and their CSV form (one row per cell: x[,y],value).

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "mfgplan/grid.hpp"
#include "mfgplan/model.hpp"

namespace mfgplan {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

/// Squared distance on the unit torus.
inline double torus_dist2(const Vec& x, const Vec& y, int d) {
  double s = 0.0;
  for (int a = 0; a < d; ++a) {
    double dx = std::abs(x[a] - y[a]);
    dx = std::min(dx, 1.0 - dx);
    s += dx * dx;
  }
  return s;
}

/// Periodized Gaussian bump (images within two periods).
inline double periodic_gaussian(const Vec& x, const Vec& c, double width, int d) {
  auto g1 = [&](double xa, double ca) {
    double s = 0.0;
    for (int n = -2; n <= 2; ++n) {
      const double dx = xa - ca + n;
      s += std::exp(-dx * dx / (2.0 * width * width));
    }
    return s;
  };
  double v = g1(x[0], c[0]);
  if (d == 2) v *= g1(x[1], c[1]);
  return v;
}

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline std::vector<double> read_density_csv(const std::string& path, const GridSpec& g) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open density file '" + path + "'");
  std::string line;
  std::getline(in, line);  // header
  std::vector<double> vals;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> cols;
    while (std::getline(ss, cell, ',')) {
      try {
        cols.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw IoError(path + ":" + std::to_string(lineno) + ": not a number '" + cell + "'");
      }
    }
    if (int(cols.size()) != g.d + 1)
      throw IoError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(g.d + 1) + " columns");
    vals.push_back(cols.back());
  }
  if (vals.size() != g.cells())
    throw IoError(path + ": expected " + std::to_string(g.cells()) + " rows, got " + std::to_string(vals.size()));
  return vals;
}

inline void write_density_csv(const std::string& path, const GridSpec& g, const std::vector<double>& rho) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << (g.d == 1 ? "x,value\n" : "x,y,value\n");
  for (std::size_t i = 0; i < g.cells(); ++i) {
    const Vec x = g.center(i);
    out << detail::fmt17(x[0]) << ',';
    if (g.d == 2) out << detail::fmt17(x[1]) << ',';
    out << detail::fmt17(rho[i]) << '\n';
  }
  if (!out) throw IoError("write failure on '" + path + "'");
}

/// Cell values of a density preset, nonnegative with discrete mass h^d sum = 1.
/// CSV input that already has unit discrete mass is returned bit-exactly.
inline std::vector<double> make_density(const DensityPreset& p, const GridSpec& g) {
  std::vector<double> rho(g.cells());
  switch (p.kind) {
    case DensityKind::uniform:
      std::fill(rho.begin(), rho.end(), 1.0);
      return rho;
    case DensityKind::gaussian:
      for (std::size_t i = 0; i < rho.size(); ++i) rho[i] = detail::periodic_gaussian(g.center(i), p.center, p.width, g.d);
      break;
    case DensityKind::double_bump:
      for (std::size_t i = 0; i < rho.size(); ++i)
        rho[i] = detail::periodic_gaussian(g.center(i), p.center, p.width, g.d) +
                 detail::periodic_gaussian(g.center(i), p.center2, p.width, g.d);
      break;
    case DensityKind::from_csv:
      rho = read_density_csv(p.path, g);
      break;
  }
  double mass = 0.0;
  for (double v : rho) {
    if (v < 0.0 || !std::isfinite(v)) throw ValidationError("(H4) density has a negative or non-finite value");
    mass += v;
  }
  mass *= g.cell_volume();
  if (!(mass > 0.0)) throw ValidationError("(H4) density has zero total mass");
  if (mass != 1.0)
    for (double& v : rho) v /= mass;
  return rho;
}

/// (1 - eps) rho + eps, the uniform-mixing perturbation (keeps unit mass).
inline std::vector<double> mix_with_uniform(const std::vector<double>& rho, double eps) {
  if (!(eps >= 0.0 && eps <= 1.0)) throw ValidationError("mixing weight must lie in [0,1]");
  std::vector<double> out(rho.size());
  for (std::size_t i = 0; i < rho.size(); ++i) out[i] = (1.0 - eps) * rho[i] + eps;
  return out;
}

}  // namespace mfgplan
