#pragma once

// Frequency-vector arithmetic: small divisors omega.nu and estimation of the
// Diophantine constant C0 with |omega.nu|^-1 < C0 |nu|^ell for all
// 0 < |nu| <= cutoff.

#include <cmath>
#include <cstdlib>
#include <string>
#include <vector>

#include "kam/errors.hpp"
#include "kam/series.hpp"

namespace kam {

struct FrequencyVector {
  std::vector<double> omega;
  double C0 = 0.0;
  double exponent = 0.0;     // fixed to ell
  int verified_cutoff = 0;   // largest |nu|_1 actually scanned

  int ell() const { return static_cast<int>(omega.size()); }
};

inline double small_divisor(const std::vector<double>& omega,
                            const std::vector<int>& nu) {
  if (omega.size() != nu.size())
    throw DimensionMismatch("small_divisor: omega/nu length mismatch");
  if (abs_sum(nu) == 0) throw ZeroMode("small_divisor: nu = 0");
  double s = 0.0;
  for (size_t j = 0; j < omega.size(); ++j) s += omega[j] * nu[j];
  return s;
}

// resonance threshold, relative to |omega| |nu|
inline double resonance_tolerance(const std::vector<double>& omega,
                                  const std::vector<int>& nu) {
  double om = 0.0;
  for (double w : omega) om = std::max(om, std::abs(w));
  return 1e-14 * om * abs_sum(nu);
}

namespace detail {

template <typename Fn>
void for_each_mode_in_ball(int ell, int cutoff, Fn&& fn) {
  std::vector<int> nu(ell, -cutoff);
  while (true) {
    int a = abs_sum(nu);
    if (a > 0 && a <= cutoff) fn(nu);
    int j = ell - 1;
    while (j >= 0) {
      if (++nu[j] <= cutoff) break;
      nu[j] = -cutoff;
      --j;
    }
    if (j < 0) break;
  }
}

}  // namespace detail

// exhaustive scan for the smallest admissible constant, with a 1% margin:
// C0 = 1.01 * max over 0<|nu|<=cutoff of (|omega.nu| |nu|^ell)^-1
inline FrequencyVector estimate_C0(const std::vector<double>& omega,
                                   int cutoff) {
  if (cutoff < 1) throw Error("estimate_C0: cutoff must be >= 1");
  const int ell = static_cast<int>(omega.size());
  double worst = 0.0;
  detail::for_each_mode_in_ball(ell, cutoff, [&](const std::vector<int>& nu) {
    double s = std::abs(small_divisor(omega, nu));
    if (s <= resonance_tolerance(omega, nu)) {
      std::string msg = "estimate_C0: resonance at nu = (";
      for (size_t j = 0; j < nu.size(); ++j)
        msg += (j ? "," : "") + std::to_string(nu[j]);
      throw Resonant(msg + ")");
    }
    double cand = 1.0 / (s * std::pow(static_cast<double>(abs_sum(nu)),
                                      static_cast<double>(ell)));
    worst = std::max(worst, cand);
  });
  FrequencyVector fv;
  fv.omega = omega;
  fv.exponent = static_cast<double>(ell);
  fv.C0 = 1.01 * worst;
  fv.verified_cutoff = cutoff;
  return fv;
}

// re-check of the stored constant by an independent pass
inline bool check_diophantine(const FrequencyVector& fv) {
  bool ok = true;
  detail::for_each_mode_in_ball(fv.ell(), fv.verified_cutoff,
                                [&](const std::vector<int>& nu) {
    double s = std::abs(small_divisor(fv.omega, nu));
    double rhs = fv.C0 * std::pow(static_cast<double>(abs_sum(nu)), fv.exponent);
    if (!(1.0 / s < rhs)) ok = false;
  });
  return ok;
}

}  // namespace kam
