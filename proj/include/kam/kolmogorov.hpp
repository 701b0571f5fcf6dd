#pragma once

// One renormalization step.  Given H = 1/2 J|A|^2 + omega0.A + f on a
// centered polydisk (rho, kappa) and the strip loss delta:
//
//   1. solve the shift a = -J^-1 grad fbar(a) by fixed point;
//   2. build the generating function Phi with the divisor expanded to
//      second order in J, so no denominator ever depends on A';
//   3. invert alpha' = alpha + d_A' Phi to get the angle correction Delta,
//      and push d_alpha Phi through it to get the action correction Xi;
//   4. transport the Hamiltonian: the first-order block collapses to the
//      explicit cubic remainder -sum f_nu q^3 e^{i nu.alpha} with
//      q = J(A'+a).nu / (omega0.nu)  (since (1+q)(1-q+q^2) = 1+q^3),
//      the averaged part loses its constant and linear data exactly, and
//      the rest is a finite Taylor transport of f along d_alpha Phi;
//   5. measure the new perturbation on (rho*sqrt(eta), kappa-4*delta).

#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "kam/diophantine.hpp"
#include "kam/errors.hpp"
#include "kam/hamiltonian.hpp"
#include "kam/series.hpp"

namespace kam {

struct IterationState {
  int n = 0;
  double rho_n = 0.0;
  double kappa_n = 0.0;
  double delta_n = 0.0;
  double eps_n = 0.0;
  double eta_n = 0.0;    // eps_n * C0
  double theta_n = 0.0;  // eps_n / (J rho_n)
  double C0 = 0.0;
  double J = 0.0;
};

struct CanonicalMap {
  std::vector<double> a;
  std::vector<FourierTaylorSeries> Xi;
  std::vector<FourierTaylorSeries> Delta;
  PolydiskDomain source_dom;  // (A', alpha') side
  PolydiskDomain target_dom;  // image inside the previous domain
};

struct StepReport {
  double eps_new = 0.0;
  // contributions (first-order remainder, averaged remainder, transport
  // remainder), measured on the new domain both ways: eps-norms add up to
  // bound eps_new, majorants carry the quadratic-smallness scaling
  std::array<double, 3> term_eps{};
  std::array<double, 3> term_maj{};
  double cancellation_residual = 0.0;
  // majorants of d_alpha Phi, d_A' Phi, d2_alpha A' Phi, d2_A'A' Phi on
  // the (2/3 rho, kappa - 2 delta) domain
  std::array<double, 4> phi_norms{};
  double delta_norm = 0.0;  // on (1/2 rho, kappa - 3 delta)
  double xi_norm = 0.0;
  double injectivity_margin = 1.0;
  double shift_norm = 0.0;
  double tail_total = 0.0;
  double rho_new = 0.0;
  double kappa_new = 0.0;
  double dropped_constant = 0.0;
};

struct StepOptions {
  double tol_shift = 1e-14;
  double tol_inversion = 1e-13;
  double tol_composition = 1e-8;
  int max_sweeps = 64;
  double rho_floor = 0.0;  // absolute collapse threshold for the new radius
};

// --------------------------------------------------------------------------
// shift

// fixed point a <- -J^-1 grad fbar(a), started at -J^-1 grad fbar(0);
// for J = 0 the equation is solvable only when grad fbar vanishes
inline std::vector<double> solve_shift(const FourierTaylorSeries& fbar,
                                       double J, const PolydiskDomain& dom,
                                       double tol, int max_iter = 64) {
  const int ell = fbar.ell();
  std::vector<FourierTaylorSeries> grad;
  double gnorm = 0.0;
  for (int j = 1; j <= ell; ++j) {
    grad.push_back(partial_A(fbar, j));
    gnorm = std::max(gnorm, majorant_norm(grad.back(), dom));
  }
  if (J == 0.0) {
    if (gnorm == 0.0) return std::vector<double>(ell, 0.0);
    throw ShiftConditionFailed(
        "solve_shift: J = 0 but the averaged perturbation depends on A");
  }
  // necessary part of the solubility condition theta < 1/16
  if (!(gnorm / (J * dom.rho) < 1.0 / 16.0))
    throw ShiftConditionFailed("solve_shift: ||grad fbar||/(J rho) >= 1/16");

  auto grad_at = [&](const std::vector<double>& a) {
    std::vector<double> g(ell);
    std::vector<Complex> A(a.begin(), a.end());
    std::vector<Complex> alpha(ell, Complex{});
    for (int j = 0; j < ell; ++j) g[j] = evaluate(grad[j], A, alpha).real();
    return g;
  };

  std::vector<double> a(ell, 0.0);
  {
    auto g0 = grad_at(a);
    for (int j = 0; j < ell; ++j) a[j] = -g0[j] / J;
  }
  for (int it = 0; it < max_iter; ++it) {
    auto g = grad_at(a);
    double residual = 0.0;
    for (int j = 0; j < ell; ++j)
      residual = std::max(residual, std::abs(a[j] + g[j] / J));
    if (residual <= tol) {
      for (int j = 0; j < ell; ++j)
        if (!(std::abs(a[j]) < dom.rho / 16.0))
          throw ShiftConditionFailed("solve_shift: |a| >= rho/16");
      return a;
    }
    for (int j = 0; j < ell; ++j) a[j] = -g[j] / J;
  }
  throw ShiftDiverged("solve_shift: no convergence within iteration budget");
}

// --------------------------------------------------------------------------
// generating function

namespace detail {

// dense degree-1 polynomial  c0 + sum_j cj A_j  on the given basis; the
// linear part is dropped into *tail when the basis has degree 0
inline std::vector<Complex> linear_poly(const MonomialBasis& b, Complex c0,
                                        const std::vector<Complex>& cj,
                                        double* tail, double weight) {
  std::vector<Complex> p(b.size());
  p[b.index(std::vector<int>(b.ell, 0))] = c0;
  std::vector<int> e(b.ell, 0);
  for (int j = 0; j < b.ell; ++j) {
    if (cj[j] == Complex{}) continue;
    e.assign(b.ell, 0);
    e[j] = 1;
    int idx = b.index(e);
    if (idx >= 0)
      p[idx] = cj[j];
    else if (tail)
      *tail += std::abs(cj[j]) * weight;
  }
  return p;
}

}  // namespace detail

// Phi(A', alpha) = -sum_{nu != 0} f_nu(A'+a)/(i omega.nu) (1 - q + q^2)
// e^{i nu.alpha}, truncated back to (N, d).  The norm budget is taken on
// the shrunk domain (3/4 rho, kappa - delta0).
inline FourierTaylorSeries build_generating(const Hamiltonian& H,
                                            const std::vector<double>& a,
                                            double delta0) {
  const int ell = H.ell();
  const auto& omega = H.freq.omega;
  if (H.freq.verified_cutoff < H.f.fourier_cutoff())
    throw Error("build_generating: frequency not verified up to the series cutoff");
  PolydiskDomain weigh(ell, 0.75 * H.dom.rho,
                       std::max(H.dom.kappa - delta0, 1e-12));

  std::vector<Complex> ac(a.begin(), a.end());
  FourierTaylorSeries F = taylor_shift(H.f, ac);
  FourierTaylorSeries Phi(ell, F.fourier_cutoff(), F.taylor_degree(),
                          F.real_flagged());
  const auto& basis = F.basis();
  detail::PolyOps ops(basis, &weigh);
  double tail = 0.0;

  std::vector<int> zero(ell, 0);
  std::vector<Complex> qj(ell);
  for (const auto& [nu, p] : F.modes()) {
    if (abs_sum(nu) == 0) continue;
    double s = small_divisor(omega, nu);
    if (std::abs(s) <= resonance_tolerance(omega, nu))
      throw ResonantMode("build_generating: divisor below resonance tolerance");
    double anu = 0.0;
    for (int j = 0; j < ell; ++j) anu += a[j] * nu[j];
    double mode_w = std::exp(weigh.kappa * abs_sum(nu));
    for (int j = 0; j < ell; ++j) qj[j] = Complex(H.J * nu[j] / s, 0.0);
    auto q = detail::linear_poly(basis, Complex(H.J * anu / s, 0.0), qj, &tail,
                                 mode_w * weigh.rho);
    // m = 1 - q + q^2
    auto q2 = ops.mul(q, q, &tail, mode_w);
    std::vector<Complex> m(basis.size());
    m[basis.index(zero)] = 1.0;
    for (int i = 0; i < basis.size(); ++i) m[i] += q2[i] - q[i];
    // Phi_nu = -(1/(i s)) f_nu(.+a) m
    auto prod = ops.mul(p, m, &tail, mode_w);
    Complex factor = -1.0 / Complex(0.0, s);
    auto& dst = Phi.poly(nu);
    for (int i = 0; i < basis.size(); ++i) dst[i] = prod[i] * factor;
  }
  Phi.add_tail(tail);
  Phi.prune();
  if (!std::isfinite(majorant_norm(Phi, weigh)))
    throw Error("build_generating: majorant not finite on the shrunk domain");
  return Phi;
}

// --------------------------------------------------------------------------
// diagnostics on Phi and the map pair

inline double injectivity_margin_from(double dA_norm, double mixed_norm,
                                      int ell) {
  const double pi = std::acos(-1.0);
  return 1.0 - ell * std::exp(dA_norm) * mixed_norm -
         0.5 * pi * ell * mixed_norm;
}

inline StepReport step_diagnostics(const FourierTaylorSeries& Phi,
                                   const std::vector<FourierTaylorSeries>& Delta,
                                   const std::vector<FourierTaylorSeries>& Xi,
                                   const PolydiskDomain& dom, double delta,
                                   bool enforce_injectivity = false) {
  const int ell = dom.ell;
  PolydiskDomain dom23(ell, 2.0 / 3.0 * dom.rho,
                       std::max(dom.kappa - 2.0 * delta, 1e-12));
  PolydiskDomain dom12(ell, 0.5 * dom.rho,
                       std::max(dom.kappa - 3.0 * delta, 1e-12));
  StepReport r;
  for (int j = 1; j <= ell; ++j) {
    r.phi_norms[0] =
        std::max(r.phi_norms[0], majorant_norm(partial_alpha(Phi, j), dom23));
    FourierTaylorSeries dA = partial_A(Phi, j);
    r.phi_norms[1] = std::max(r.phi_norms[1], majorant_norm(dA, dom23));
    for (int i = 1; i <= ell; ++i) {
      r.phi_norms[2] =
          std::max(r.phi_norms[2], majorant_norm(partial_alpha(dA, i), dom23));
      r.phi_norms[3] =
          std::max(r.phi_norms[3], majorant_norm(partial_A(dA, i), dom23));
    }
  }
  for (const auto& D : Delta)
    r.delta_norm = std::max(r.delta_norm, majorant_norm(D, dom12));
  for (const auto& X : Xi)
    r.xi_norm = std::max(r.xi_norm, majorant_norm(X, dom12));
  r.injectivity_margin =
      injectivity_margin_from(r.phi_norms[1], r.phi_norms[2], ell);
  if (enforce_injectivity && !(r.injectivity_margin >= 0.5))
    throw InjectivityFailed("injectivity margin below 1/2");
  return r;
}

// --------------------------------------------------------------------------
// implicit inversion of the angle relation

// solves Delta(A',alpha') = -d_A' Phi(A', alpha' + Delta) by sweeping the
// angle composition; requires the injectivity margin >= 1/2
inline std::vector<FourierTaylorSeries> invert_angle_map(
    const FourierTaylorSeries& Phi, const PolydiskDomain& dom, double delta,
    double tol, double comp_tol = -1.0, int max_sweeps = 64) {
  const int ell = dom.ell;
  PolydiskDomain dom23(ell, 2.0 / 3.0 * dom.rho,
                       std::max(dom.kappa - 2.0 * delta, 1e-12));
  PolydiskDomain dom12(ell, 0.5 * dom.rho,
                       std::max(dom.kappa - 3.0 * delta, 1e-12));

  std::vector<FourierTaylorSeries> rhs;
  double dA_norm = 0.0, mixed = 0.0;
  for (int j = 1; j <= ell; ++j) {
    FourierTaylorSeries dA = partial_A(Phi, j);
    dA_norm = std::max(dA_norm, majorant_norm(dA, dom23));
    for (int i = 1; i <= ell; ++i)
      mixed = std::max(mixed, majorant_norm(partial_alpha(dA, i), dom23));
    rhs.push_back(scale(dA, {-1.0, 0.0}));
  }
  if (!(injectivity_margin_from(dA_norm, mixed, ell) >= 0.5))
    throw InjectivityFailed("invert_angle_map: injectivity margin below 1/2");

  bool trivial = true;
  for (const auto& g : rhs)
    if (!g.empty()) trivial = false;
  if (trivial) return rhs;  // d_A' Phi = 0 => Delta = 0

  std::vector<FourierTaylorSeries> D = rhs;
  std::vector<const FourierTaylorSeries*> rhs_ptr;
  for (const auto& g : rhs) rhs_ptr.push_back(&g);
  double prev_residual = std::numeric_limits<double>::infinity();
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    std::vector<FourierTaylorSeries> next =
        compose_angle_many(rhs_ptr, D, &dom12, comp_tol);
    double residual = 0.0;
    for (int j = 0; j < ell; ++j)
      residual = std::max(residual, majorant_norm(sub(next[j], D[j]), dom12));
    D = std::move(next);
    if (residual <= tol) return D;
    if (residual >= prev_residual)
      throw InversionDiverged("invert_angle_map: residual stopped contracting");
    prev_residual = residual;
  }
  throw InversionDiverged("invert_angle_map: sweep budget exhausted");
}

// Xi = (d_alpha Phi) evaluated at alpha = alpha' + Delta
inline std::vector<FourierTaylorSeries> build_action_map(
    const FourierTaylorSeries& Phi, const std::vector<FourierTaylorSeries>& Delta,
    const PolydiskDomain& dom, double delta, double comp_tol = -1.0) {
  const int ell = static_cast<int>(Delta.size());
  PolydiskDomain dom12(ell, 0.5 * dom.rho,
                       std::max(dom.kappa - 3.0 * delta, 1e-12));
  std::vector<FourierTaylorSeries> dPhi;
  dPhi.reserve(ell);
  for (int j = 1; j <= ell; ++j) dPhi.push_back(partial_alpha(Phi, j));
  std::vector<const FourierTaylorSeries*> ptrs;
  for (const auto& g : dPhi) ptrs.push_back(&g);
  return compose_angle_many(ptrs, Delta, &dom12, comp_tol);
}

// --------------------------------------------------------------------------
// key cancellation

// evaluates (omega + J(A'+a)).d_alpha Phi + f(A'+a,alpha) - fbar(A'+a)
// against the closed form -sum f_nu(A'+a) q^3 e^{i nu.alpha} on a sample
// grid and returns the worst absolute difference
inline double verify_cancellation(const Hamiltonian& H,
                                  const std::vector<double>& a,
                                  const FourierTaylorSeries& Phi,
                                  int angle_grid = 8) {
  const int ell = H.ell();
  const auto& omega = H.freq.omega;
  std::vector<Complex> ac(a.begin(), a.end());
  FourierTaylorSeries F = taylor_shift(H.f, ac);
  FourierTaylorSeries Fbar = angle_average(F);
  std::vector<FourierTaylorSeries> dPhi;
  for (int j = 1; j <= ell; ++j) dPhi.push_back(partial_alpha(Phi, j));

  // deterministic action samples inside an eighth of the domain
  std::vector<std::vector<Complex>> Apts;
  Apts.emplace_back(ell, Complex{});
  {
    std::vector<Complex> u(ell), v(ell);
    for (int j = 0; j < ell; ++j) {
      u[j] = 0.125 * H.dom.rho * std::cos(1.0 + j);
      v[j] = 0.1 * H.dom.rho * ((j % 2) ? -0.8 : 0.6);
    }
    Apts.push_back(u);
    Apts.push_back(v);
  }

  const double two_pi = 2.0 * std::acos(-1.0);
  const auto& mono = F.basis().mono;
  double worst = 0.0;
  std::vector<int> g(ell, 0);
  std::vector<Complex> alpha(ell);
  while (true) {
    for (int j = 0; j < ell; ++j) alpha[j] = two_pi * g[j] / angle_grid;
    for (const auto& A : Apts) {
      Complex lhs = evaluate(F, A, alpha) - evaluate(Fbar, A, alpha);
      for (int j = 0; j < ell; ++j) {
        Complex Wj = omega[j] + H.J * (A[j] + a[j]);
        lhs += Wj * evaluate(dPhi[j], A, alpha);
      }
      Complex rhs = 0.0;
      for (const auto& [nu, p] : F.modes()) {
        if (abs_sum(nu) == 0) continue;
        double s = small_divisor(omega, nu);
        Complex q = 0.0;
        for (int j = 0; j < ell; ++j)
          q += H.J * static_cast<double>(nu[j]) * (A[j] + a[j]) / s;
        Complex fnu = 0.0;
        for (size_t i = 0; i < p.size(); ++i) {
          if (p[i] == Complex{}) continue;
          Complex apow = 1.0;
          for (int j = 0; j < ell; ++j)
            for (int m = 0; m < mono[i][j]; ++m) apow *= A[j];
          fnu += p[i] * apow;
        }
        Complex arg = 0.0;
        for (int j = 0; j < ell; ++j)
          arg += static_cast<double>(nu[j]) * alpha[j];
        rhs += -fnu * q * q * q * std::exp(Complex(0.0, 1.0) * arg);
      }
      worst = std::max(worst, std::abs(lhs - rhs));
    }
    int j = ell - 1;
    while (j >= 0) {
      if (++g[j] < angle_grid) break;
      g[j] = 0;
      --j;
    }
    if (j < 0) break;
  }
  return worst;
}

// --------------------------------------------------------------------------
// pushforward

namespace detail {

// zero the constant and linear Taylor data of the averaged part: what is
// left is exactly fbar(A'+a) - fbar(a) - grad fbar(a).A'
inline FourierTaylorSeries averaged_remainder(const FourierTaylorSeries& Fbar) {
  FourierTaylorSeries out = Fbar;
  std::vector<int> zero(out.ell(), 0);
  if (const auto* p = out.poly_if_present(zero)) {
    auto q = *p;
    const auto& mono = out.basis().mono;
    for (size_t i = 0; i < q.size(); ++i)
      if (abs_sum(mono[i]) <= 1) q[i] = Complex{};
    out.poly(zero) = q;
  }
  out.prune();
  return out;
}

}  // namespace detail

// transports H through the canonical map and measures the new perturbation;
// `state` supplies eta_n (for the radius contraction) and delta_n
inline std::pair<Hamiltonian, StepReport> pushforward(
    const Hamiltonian& H, const CanonicalMap& map,
    const FourierTaylorSeries& Phi, const IterationState& state,
    const StepOptions& opts = {}, StepReport report = {}) {
  const int ell = H.ell();
  const double rho_new = H.dom.rho * std::sqrt(state.eta_n);
  const double kappa_new = H.dom.kappa - 4.0 * state.delta_n;
  if (!(kappa_new > 0.0))
    throw DomainCollapsed("pushforward: angle strip exhausted");
  if (rho_new < opts.rho_floor)
    throw DomainCollapsed("pushforward: new action radius " +
                          std::to_string(rho_new) + " below floor");
  PolydiskDomain new_dom(ell, rho_new, kappa_new);

  std::vector<Complex> ac(map.a.begin(), map.a.end());
  FourierTaylorSeries F = taylor_shift(H.f, ac);
  FourierTaylorSeries Fbar = angle_average(F);
  const auto& basis = F.basis();
  detail::PolyOps ops(basis, &new_dom);
  std::vector<int> zero(ell, 0);

  // (1) first-order remainder: -f_nu(A'+a) q^3 per mode
  FourierTaylorSeries T1(ell, F.fourier_cutoff(), F.taylor_degree(), true);
  {
    double tail = 0.0;
    std::vector<Complex> qj(ell);
    for (const auto& [nu, p] : F.modes()) {
      if (abs_sum(nu) == 0) continue;
      double s = small_divisor(H.freq.omega, nu);
      if (std::abs(s) <= resonance_tolerance(H.freq.omega, nu))
        throw ResonantMode("pushforward: divisor below resonance tolerance");
      double anu = 0.0;
      for (int j = 0; j < ell; ++j) anu += map.a[j] * nu[j];
      double mode_w = std::exp(new_dom.kappa * abs_sum(nu));
      for (int j = 0; j < ell; ++j) qj[j] = Complex(H.J * nu[j] / s, 0.0);
      auto q = detail::linear_poly(basis, Complex(H.J * anu / s, 0.0), qj,
                                   &tail, mode_w * new_dom.rho);
      auto q2 = ops.mul(q, q, &tail, mode_w);
      auto q3 = ops.mul(q2, q, &tail, mode_w);
      auto prod = ops.mul(p, q3, &tail, mode_w);
      auto& dst = T1.poly(nu);
      for (int i = 0; i < basis.size(); ++i) dst[i] = -prod[i];
    }
    T1.add_tail(tail);
    T1.prune();
  }

  // (2) averaged remainder, exact
  FourierTaylorSeries T2 = detail::averaged_remainder(Fbar);

  // (3) transport remainder: sum_{1<=|m|<=d} d^m F G^m / m! + (J/2)|G|^2
  // with G = d_alpha Phi
  FourierTaylorSeries T3(ell, F.fourier_cutoff(), F.taylor_degree(), true);
  {
    std::vector<FourierTaylorSeries> G;
    bool G_zero = true;
    for (int j = 1; j <= ell; ++j) {
      G.push_back(partial_alpha(Phi, j));
      if (!G.back().empty()) G_zero = false;
    }
    if (!G_zero) {
      // monomials ordered by degree so G^m can be built by ladder
      std::vector<std::vector<int>> ms = basis.mono;
      std::sort(ms.begin(), ms.end(), [](const auto& x, const auto& y) {
        int ax = abs_sum(x), ay = abs_sum(y);
        return ax != ay ? ax < ay : x < y;
      });
      std::map<std::vector<int>, FourierTaylorSeries> gpow;
      for (const auto& m : ms) {
        int deg = abs_sum(m);
        if (deg == 0) continue;
        int j = 0;
        while (m[j] == 0) ++j;
        std::vector<int> prev = m;
        prev[j] -= 1;
        const FourierTaylorSeries& base =
            abs_sum(prev) == 0 ? G[j] : multiply(gpow.at(prev), G[j], &new_dom);
        gpow.emplace(m, base);

        // d^m F / m!
        FourierTaylorSeries dF = F;
        double mfact = 1.0;
        for (int t = 0; t < ell; ++t)
          for (int r = 0; r < m[t]; ++r) {
            dF = partial_A(dF, t + 1);
            mfact *= (r + 1);
          }
        if (dF.empty()) continue;
        T3 = add(T3, scale(multiply(dF, gpow.at(m), &new_dom), 1.0 / mfact));
      }
      if (H.J != 0.0) {
        for (int j = 0; j < ell; ++j)
          T3 = add(T3, scale(multiply(G[j], G[j], &new_dom), 0.5 * H.J));
      }
    }
  }

  // express in (A', alpha') and measure each contribution there
  std::vector<FourierTaylorSeries> composed = compose_angle_many(
      {&T1, &T3}, map.Delta, &new_dom, opts.tol_composition);
  FourierTaylorSeries& T1c = composed[0];
  FourierTaylorSeries& T3c = composed[1];
  const FourierTaylorSeries* parts[3] = {&T1c, &T2, &T3c};
  for (int t = 0; t < 3; ++t) {
    report.term_eps[t] = epsilon_norm(*parts[t], new_dom).epsilon;
    report.term_maj[t] = majorant_norm(*parts[t], new_dom);
  }

  FourierTaylorSeries f1 = add(add(T1c, T2), T3c);
  // constants are free: renormalize the mean at A' = 0
  Complex c00 = f1.coeff(zero, zero);
  if (c00 != Complex{}) {
    f1.add_coeff(zero, zero, -c00);
    report.dropped_constant = c00.real();
  }
  f1.prune();
  f1.set_real_flag(true);

  Hamiltonian H1{H.J, H.freq, f1, new_dom};
  SeriesNorms n1 = epsilon_norm(f1, new_dom);
  report.eps_new = n1.epsilon;
  report.shift_norm = 0.0;
  for (double v : map.a)
    report.shift_norm = std::max(report.shift_norm, std::abs(v));
  report.tail_total = f1.tail_bound();
  report.rho_new = rho_new;
  report.kappa_new = kappa_new;
  return {H1, report};
}

}  // namespace kam
