#pragma once

// H(A, alpha) = 1/2 J |A|^2 + omega0 . A + f(A, alpha) on a polydisk, with
// scalar twist J >= 0 and the angle average of f normalized to vanish at
// A = 0 (constants are free).

#include <cmath>
#include <limits>
#include <vector>

#include "kam/diophantine.hpp"
#include "kam/series.hpp"

namespace kam {

struct Hamiltonian {
  double J = 1.0;
  FrequencyVector freq;
  FourierTaylorSeries f;
  PolydiskDomain dom;

  int ell() const { return dom.ell; }

  void validate() const {
    dom.validate();
    if (f.ell() != dom.ell || freq.ell() != dom.ell)
      throw DimensionMismatch("Hamiltonian: inconsistent ell");
    if (J < 0.0) throw Error("Hamiltonian: twist J must be >= 0");
    if (!f.real_flagged()) throw Error("Hamiltonian: f must be real-valued");
    std::vector<int> zero(dom.ell, 0);
    if (std::abs(f.coeff(zero, zero)) != 0.0)
      throw Error("Hamiltonian: mean of f at A=0 must be normalized to zero");
  }

  SeriesNorms norms() const { return epsilon_norm(f, dom); }

  // dimensionless couplings; for J = 0 the shift equation is trivial only
  // when grad fbar vanishes identically, in which case theta = 0 by
  // convention (integrable warm-up), otherwise +infinity
  double theta(double eps) const {
    if (J > 0.0) return eps / (J * dom.rho);
    FourierTaylorSeries fbar = angle_average(f);
    double g = 0.0;
    for (int j = 1; j <= ell(); ++j)
      g = std::max(g, majorant_norm(partial_A(fbar, j), dom));
    return g == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  }
};

// evaluate the full Hamiltonian at a (complex) phase-space point
inline Complex evaluate_hamiltonian(const Hamiltonian& H,
                                    const std::vector<Complex>& A,
                                    const std::vector<Complex>& alpha) {
  Complex quad = 0.0, lin = 0.0;
  for (int j = 0; j < H.ell(); ++j) {
    quad += A[j] * A[j];
    lin += H.freq.omega[j] * A[j];
  }
  return 0.5 * H.J * quad + lin + evaluate(H.f, A, alpha);
}

}  // namespace kam
