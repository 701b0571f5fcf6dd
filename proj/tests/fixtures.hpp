#pragma once

// Shared test fixtures: the golden-mean Hamiltonians and deterministic
// random series.

#include <random>

#include "kam/driver.hpp"
#include "kam/hamiltonian.hpp"

namespace fixtures {

inline double golden_ratio() { return (1.0 + std::sqrt(5.0)) / 2.0; }

// eps * (cos a1 + cos(a1 - a2)) on (rho, kappa) = (0.5, 0.6), unit twist
inline kam::Hamiltonian golden(double eps_coeff = 1e-4, double J = 1.0,
                               int N = 12, int d = 4) {
  kam::FourierTaylorSeries f(2, N, d, true);
  f.set_coeff({1, 0}, {0, 0}, {0.5 * eps_coeff, 0.0});
  f.set_coeff({-1, 0}, {0, 0}, {0.5 * eps_coeff, 0.0});
  f.set_coeff({1, -1}, {0, 0}, {0.5 * eps_coeff, 0.0});
  f.set_coeff({-1, 1}, {0, 0}, {0.5 * eps_coeff, 0.0});
  kam::Hamiltonian H;
  H.J = J;
  H.freq = kam::estimate_C0({1.0, golden_ratio()}, 2 * N);
  H.f = f;
  H.dom = kam::PolydiskDomain(2, 0.5, 0.6);
  return H;
}

// adds an action-dependent averaged part to the golden fixture
inline kam::Hamiltonian golden_with_actions(double scale = 1.0) {
  kam::Hamiltonian H = golden(1e-4 * scale);
  H.f.set_coeff({0, 0}, {1, 0}, {0.3e-4 * scale, 0.0});
  H.f.set_coeff({0, 0}, {2, 0}, {0.5e-4 * scale, 0.0});
  H.f.set_coeff({0, 0}, {0, 2}, {0.25e-4 * scale, 0.0});
  return H;
}

// zero twist, angle-only perturbation 0.01 cos a1
inline kam::Hamiltonian integrable_twistless() {
  kam::FourierTaylorSeries f(2, 8, 2, true);
  f.set_coeff({1, 0}, {0, 0}, {0.005, 0.0});
  f.set_coeff({-1, 0}, {0, 0}, {0.005, 0.0});
  kam::Hamiltonian H;
  H.J = 0.0;
  H.freq = kam::estimate_C0({1.0, golden_ratio()}, 16);
  H.f = f;
  H.dom = kam::PolydiskDomain(2, 0.5, 0.6);
  return H;
}

inline kam::DriverOptions standard_options() {
  kam::DriverOptions opts;
  opts.max_steps = 8;
  opts.target_eta = 1e-25;
  opts.step.tol_shift = 1e-14;
  opts.step.tol_inversion = 5e-14;
  opts.step.tol_composition = 1e-6;
  opts.step.rho_floor = 1e-300;
  return opts;
}

// the full golden-mean run, computed once per test binary
inline const kam::RunResult& golden_run() {
  static const kam::RunResult result = kam::run(golden(), standard_options());
  return result;
}

// random series with `terms` coefficients, coefficients in [-1,1]^2
inline kam::FourierTaylorSeries random_series(std::mt19937_64& rng, int ell,
                                              int N, int d, int terms,
                                              bool real_valued = false) {
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  std::uniform_int_distribution<int> mode(-N, N);
  std::uniform_int_distribution<int> deg(0, d);
  kam::FourierTaylorSeries f(ell, N, d, real_valued);
  for (int t = 0; t < terms; ++t) {
    std::vector<int> nu(ell), k(ell);
    do {
      for (int j = 0; j < ell; ++j) nu[j] = mode(rng);
    } while (kam::abs_sum(nu) > N);
    do {
      for (int j = 0; j < ell; ++j) k[j] = deg(rng);
    } while (kam::abs_sum(k) > d);
    kam::Complex c(uni(rng), real_valued ? 0.0 : uni(rng));
    f.add_coeff(nu, k, c);
    if (real_valued) {
      std::vector<int> mnu(ell);
      for (int j = 0; j < ell; ++j) mnu[j] = -nu[j];
      f.add_coeff(mnu, k, std::conj(c));
    }
  }
  f.prune();
  return f;
}

// a point on the closed polydisk boundary-ish region
inline void random_point(std::mt19937_64& rng, const kam::PolydiskDomain& dom,
                         std::vector<kam::Complex>& A,
                         std::vector<kam::Complex>& alpha) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  A.resize(dom.ell);
  alpha.resize(dom.ell);
  const double two_pi = 2.0 * std::acos(-1.0);
  for (int j = 0; j < dom.ell; ++j) {
    double r = dom.rho * uni(rng);
    double ph = two_pi * uni(rng);
    A[j] = kam::Complex(r * std::cos(ph), r * std::sin(ph));
    alpha[j] = kam::Complex(two_pi * uni(rng),
                            dom.kappa * (2.0 * uni(rng) - 1.0));
  }
}

}  // namespace fixtures
