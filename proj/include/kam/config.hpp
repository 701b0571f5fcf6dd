#pragma once

// Flat key-value run configuration with a sectioned coefficient array.
// Lines are `key = value`, `#` starts a comment; the perturbation is listed
// one coefficient per line inside [perturbation] ... [end] as
// `nu_1 .. nu_ell k_1 .. k_ell re [im]`.  Unknown keys are rejected.

#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "kam/diophantine.hpp"
#include "kam/errors.hpp"
#include "kam/hamiltonian.hpp"

namespace kam {

struct RunConfig {
  int ell = 2;
  std::vector<double> omega;
  double J = 1.0;
  double rho0 = 0.5;
  double kappa0 = 0.6;
  int fourier_cutoff = 16;
  int taylor_degree = 4;
  double eps_scale = 1.0;
  int max_steps = 8;
  double target_eta = 1e-25;
  int diophantine_cutoff = 32;
  double tol_shift = 1e-14;
  double tol_inversion = 1e-13;
  double tol_composition = 1e-8;
  double tol_oracle = 1e-12;
  std::vector<unsigned long long> seeds{1ull};
  double rho_floor = -1.0;  // absolute; defaults to 1e-8 * rho0 when < 0

  // verification knobs
  double verify_t_final = 10.0;
  double verify_integrator_tol = 1e-12;
  int verify_samples = 16;
  int verify_grid = 0;  // 0 = 2 N + 1
  int oracle_cutoff = 10;
  int oracle_max_iter = 40;

  // optional literal smallness constants; logged alongside the measured
  // gates when supplied
  std::optional<double> gamma9;
  std::optional<double> c9;

  struct Coefficient {
    std::vector<int> nu, k;
    Complex value;
  };
  std::vector<Coefficient> perturbation;

  double effective_rho_floor() const {
    return rho_floor >= 0.0 ? rho_floor : 1e-8 * rho0;
  }

  FourierTaylorSeries build_perturbation() const {
    FourierTaylorSeries f(ell, fourier_cutoff, taylor_degree, true);
    for (const auto& c : perturbation)
      f.add_coeff(c.nu, c.k, c.value * eps_scale);
    f.prune();
    return f;
  }

  Hamiltonian build_hamiltonian() const {
    Hamiltonian H;
    H.J = J;
    H.freq = estimate_C0(omega, diophantine_cutoff);
    H.f = build_perturbation();
    H.dom = PolydiskDomain(ell, rho0, kappa0);
    H.validate();
    return H;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline ConfigError config_error(const std::string& path, int line,
                                const std::string& msg) {
  return ConfigError(path + ":" + std::to_string(line) + ": " + msg);
}

}  // namespace detail

inline RunConfig parse_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);

  static const std::set<std::string> known = {
      "ell", "omega", "J", "rho0", "kappa0", "fourier_cutoff", "taylor_degree",
      "eps_scale", "max_steps", "target_eta", "diophantine_cutoff",
      "tol_shift", "tol_inversion", "tol_composition", "tol_oracle", "seeds",
      "rho_floor", "verify_t_final", "verify_integrator_tol", "verify_samples",
      "verify_grid", "oracle_cutoff", "oracle_max_iter", "gamma9", "c9"};

  RunConfig cfg;
  cfg.omega.clear();
  cfg.seeds.clear();
  std::set<std::string> seen;
  bool in_perturbation = false;
  std::string raw;
  int lineno = 0;
  while (std::getline(is, raw)) {
    ++lineno;
    std::string line = raw;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;

    if (line == "[perturbation]") {
      if (in_perturbation)
        throw detail::config_error(path, lineno, "nested [perturbation]");
      in_perturbation = true;
      continue;
    }
    if (line == "[end]") {
      if (!in_perturbation)
        throw detail::config_error(path, lineno, "[end] without section");
      in_perturbation = false;
      continue;
    }

    if (in_perturbation) {
      std::istringstream ss(line);
      RunConfig::Coefficient c;
      c.nu.resize(cfg.ell);
      c.k.resize(cfg.ell);
      for (int j = 0; j < cfg.ell; ++j)
        if (!(ss >> c.nu[j]))
          throw detail::config_error(path, lineno, "perturbation: bad mode index");
      for (int j = 0; j < cfg.ell; ++j)
        if (!(ss >> c.k[j]) || c.k[j] < 0)
          throw detail::config_error(path, lineno, "perturbation: bad Taylor index");
      double re, im = 0.0;
      if (!(ss >> re))
        throw detail::config_error(path, lineno, "perturbation: missing value");
      ss >> im;
      c.value = Complex(re, im);
      cfg.perturbation.push_back(std::move(c));
      continue;
    }

    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw detail::config_error(path, lineno, "expected key = value");
    std::string key = detail::trim(line.substr(0, eq));
    std::string val = detail::trim(line.substr(eq + 1));
    if (!known.count(key))
      throw detail::config_error(path, lineno, "unknown key '" + key + "'");
    if (!seen.insert(key).second)
      throw detail::config_error(path, lineno, "duplicate key '" + key + "'");

    std::istringstream ss(val);
    auto want = [&](auto& target) {
      if (!(ss >> target))
        throw detail::config_error(path, lineno, "bad value for '" + key + "'");
    };
    if (key == "ell") {
      want(cfg.ell);
      if (cfg.ell < 1)
        throw detail::config_error(path, lineno, "ell must be >= 1");
    } else if (key == "omega") {
      double w;
      while (ss >> w) cfg.omega.push_back(w);
      if (cfg.omega.empty())
        throw detail::config_error(path, lineno, "omega needs values");
    } else if (key == "J") {
      want(cfg.J);
    } else if (key == "rho0") {
      want(cfg.rho0);
    } else if (key == "kappa0") {
      want(cfg.kappa0);
    } else if (key == "fourier_cutoff") {
      want(cfg.fourier_cutoff);
    } else if (key == "taylor_degree") {
      want(cfg.taylor_degree);
    } else if (key == "eps_scale") {
      want(cfg.eps_scale);
    } else if (key == "max_steps") {
      want(cfg.max_steps);
    } else if (key == "target_eta") {
      want(cfg.target_eta);
    } else if (key == "diophantine_cutoff") {
      want(cfg.diophantine_cutoff);
    } else if (key == "tol_shift") {
      want(cfg.tol_shift);
    } else if (key == "tol_inversion") {
      want(cfg.tol_inversion);
    } else if (key == "tol_composition") {
      want(cfg.tol_composition);
    } else if (key == "tol_oracle") {
      want(cfg.tol_oracle);
    } else if (key == "seeds") {
      unsigned long long s;
      while (ss >> s) cfg.seeds.push_back(s);
      if (cfg.seeds.empty())
        throw detail::config_error(path, lineno, "seeds needs values");
    } else if (key == "rho_floor") {
      want(cfg.rho_floor);
    } else if (key == "verify_t_final") {
      want(cfg.verify_t_final);
    } else if (key == "verify_integrator_tol") {
      want(cfg.verify_integrator_tol);
    } else if (key == "verify_samples") {
      want(cfg.verify_samples);
    } else if (key == "verify_grid") {
      want(cfg.verify_grid);
    } else if (key == "oracle_cutoff") {
      want(cfg.oracle_cutoff);
    } else if (key == "oracle_max_iter") {
      want(cfg.oracle_max_iter);
    } else if (key == "gamma9") {
      double v;
      want(v);
      cfg.gamma9 = v;
    } else if (key == "c9") {
      double v;
      want(v);
      cfg.c9 = v;
    }
  }
  if (in_perturbation)
    throw detail::config_error(path, lineno, "unterminated [perturbation]");

  // cross-field validation
  if (cfg.seeds.empty()) cfg.seeds.push_back(1ull);
  if (static_cast<int>(cfg.omega.size()) != cfg.ell)
    throw ConfigError(path + ": omega: needs exactly ell = " +
                      std::to_string(cfg.ell) + " entries");
  if (!(cfg.rho0 > 0.0))
    throw ConfigError(path + ": rho0: must be positive");
  if (!(cfg.kappa0 > 0.0))
    throw ConfigError(path + ": kappa0: must be positive");
  if (cfg.J < 0.0) throw ConfigError(path + ": J: must be >= 0");
  if (cfg.fourier_cutoff < 1)
    throw ConfigError(path + ": fourier_cutoff: must be >= 1");
  if (cfg.taylor_degree < 0)
    throw ConfigError(path + ": taylor_degree: must be >= 0");
  if (cfg.diophantine_cutoff < cfg.fourier_cutoff)
    throw ConfigError(path + ": diophantine_cutoff: must be >= fourier_cutoff");
  for (double t : {cfg.tol_shift, cfg.tol_inversion, cfg.tol_composition,
                   cfg.tol_oracle})
    if (!(t > 0.0)) throw ConfigError(path + ": tolerances must be positive");
  for (const auto& c : cfg.perturbation) {
    if (abs_sum(c.nu) > cfg.fourier_cutoff || abs_sum(c.k) > cfg.taylor_degree)
      throw ConfigError(path + ": perturbation: coefficient outside truncation");
    if (abs_sum(c.nu) == 0 && abs_sum(c.k) == 0 && c.value != Complex{})
      throw ConfigError(path +
                        ": perturbation: mean at A=0 must be absent or zero");
  }
  // reality: every listed mode needs its conjugate partner
  for (const auto& c : cfg.perturbation) {
    std::vector<int> mnu(cfg.ell);
    for (int j = 0; j < cfg.ell; ++j) mnu[j] = -c.nu[j];
    Complex want_conj = 0.0;
    for (const auto& o : cfg.perturbation)
      if (o.nu == mnu && o.k == c.k) want_conj += o.value;
    if (std::abs(want_conj - std::conj(c.value)) > 1e-15 * (1.0 + std::abs(c.value)))
      throw ConfigError(path + ": perturbation: not real-valued (mode without "
                        "conjugate partner)");
  }
  return cfg;
}

}  // namespace kam
