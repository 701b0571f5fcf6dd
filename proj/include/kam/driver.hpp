#pragma once

// Orchestrates the iteration H_n -> H_{n+1}: parameter schedule, gate
// checking, map composition into the invariant-torus embedding, the
// fixed-domain rescaling view, and convergence-law fits.

#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "kam/certificate.hpp"
#include "kam/kolmogorov.hpp"

namespace kam {

// delta_n = (n+10)^-2 kappa0 and the strip width left after step n,
// kappa_{n+1} = kappa0 - 4 kappa0 sum_{m<=n} (m+10)^-2; the tail sum
// stays below 1/4 so the width never drops under kappa0/2
inline std::pair<double, double> schedule(int n, double kappa0) {
  if (n < 0) throw Error("schedule: n must be >= 0");
  double delta_n = kappa0 / ((n + 10.0) * (n + 10.0));
  double sum = 0.0;
  for (int m = 0; m <= n; ++m) sum += 1.0 / ((m + 10.0) * (m + 10.0));
  return {delta_n, kappa0 * (1.0 - 4.0 * sum)};
}

enum class StopReason { TargetReached, MaxSteps, ConditionFailed, DomainCollapsed };

inline std::string to_string(StopReason r) {
  switch (r) {
    case StopReason::TargetReached: return "TargetReached";
    case StopReason::MaxSteps: return "MaxSteps";
    case StopReason::ConditionFailed: return "ConditionFailed";
    case StopReason::DomainCollapsed: return "DomainCollapsed";
  }
  return "?";
}

struct IterationTrace {
  std::vector<IterationState> states;
  std::vector<StepReport> reports;
  std::vector<Certificate> step_certs;
  Certificate initial_cert;
  StopReason stop_reason = StopReason::MaxSteps;
  std::string stop_detail;

  int completed_steps() const { return static_cast<int>(reports.size()); }
};

struct TorusEmbedding {
  std::vector<double> a_inf;
  std::vector<FourierTaylorSeries> Xi_inf;     // angle-only, zero mean
  std::vector<FourierTaylorSeries> Delta_inf;  // angle-only
  // per-step (a_n, correction size)
  std::vector<std::pair<std::vector<double>, double>> history;

  bool empty() const { return Xi_inf.empty(); }
};

struct DriverOptions {
  int max_steps = 8;
  double target_eta = 1e-25;
  double kappa_measure = 0.0;  // width for embedding norms; 0 = kappa_n/2 side
  StepOptions step;
};

// --------------------------------------------------------------------------
// single step (shift -> generating function -> map -> pushforward)

struct StepOutcome {
  bool advanced = false;
  Hamiltonian H1;
  CanonicalMap map;
  StepReport report;
  Certificate cert;
};

inline StepOutcome step_once(const Hamiltonian& H, const IterationState& state,
                             const StepOptions& opts) {
  StepOutcome out;
  const int ell = H.ell();
  const double delta = state.delta_n;

  FourierTaylorSeries fbar = angle_average(H.f);
  std::vector<double> a = solve_shift(fbar, H.J, H.dom, opts.tol_shift);
  FourierTaylorSeries Phi = build_generating(H, a, delta);

  // gate on the Phi norms before attempting the implicit inversion
  StepReport fragment = step_diagnostics(Phi, {}, {}, H.dom, delta);
  if (!(fragment.phi_norms[2] < 1.0) || !(fragment.injectivity_margin >= 0.5)) {
    out.report = fragment;
    out.cert = check_step(fragment, state);
    out.map.a = a;
    return out;
  }

  std::vector<FourierTaylorSeries> Delta = invert_angle_map(
      Phi, H.dom, delta, opts.tol_inversion, opts.tol_composition,
      opts.max_sweeps);
  std::vector<FourierTaylorSeries> Xi =
      build_action_map(Phi, Delta, H.dom, delta, opts.tol_composition);

  StepReport report = step_diagnostics(Phi, Delta, Xi, H.dom, delta);
  Certificate cert = check_step(report, state);
  CanonicalMap map{
      a, Xi, Delta,
      PolydiskDomain(ell, 0.5 * H.dom.rho,
                     std::max(H.dom.kappa - 3.0 * delta, 1e-12)),
      PolydiskDomain(ell, 0.75 * H.dom.rho,
                     std::max(H.dom.kappa - delta, 1e-12))};
  if (!cert.overall) {
    out.report = report;
    out.cert = cert;
    out.map = std::move(map);
    return out;
  }

  report.cancellation_residual = verify_cancellation(H, a, Phi);
  auto [H1, full_report] = pushforward(H, map, Phi, state, opts, report);
  out.advanced = true;
  out.H1 = std::move(H1);
  out.map = std::move(map);
  out.report = full_report;
  out.cert = std::move(cert);
  return out;
}

// --------------------------------------------------------------------------
// map composition restricted to A' = 0

namespace detail {

// substitute the action argument of h by the angle-only vector P:
// out(alpha) = sum_k h_k(alpha) prod_j P_j(alpha)^{k_j}
inline FourierTaylorSeries substitute_action(
    const FourierTaylorSeries& h, const std::vector<FourierTaylorSeries>& P,
    const PolydiskDomain* weigh) {
  const int ell = h.ell();
  const int N = h.fourier_cutoff();
  const auto& basis = h.basis();
  // angle-only column for each monomial
  std::vector<FourierTaylorSeries> cols(
      basis.size(), FourierTaylorSeries(ell, N, 0, false));
  std::vector<int> zero(ell, 0);
  for (const auto& [nu, p] : h.modes())
    for (int i = 0; i < basis.size(); ++i)
      if (p[i] != Complex{}) cols[i].add_coeff(nu, zero, p[i]);

  bool P_zero = true;
  for (const auto& s : P)
    if (!s.empty()) P_zero = false;

  FourierTaylorSeries out = cols[basis.index(zero)];
  if (P_zero) return out;

  // powers of P by ladder over monomials ordered by degree
  std::vector<std::vector<int>> ms = basis.mono;
  std::sort(ms.begin(), ms.end(), [](const auto& x, const auto& y) {
    int ax = abs_sum(x), ay = abs_sum(y);
    return ax != ay ? ax < ay : x < y;
  });
  std::map<std::vector<int>, FourierTaylorSeries> ppow;
  for (const auto& m : ms) {
    if (abs_sum(m) == 0) continue;
    int j = 0;
    while (m[j] == 0) ++j;
    std::vector<int> prev = m;
    prev[j] -= 1;
    const FourierTaylorSeries& base =
        abs_sum(prev) == 0 ? P[j] : multiply(ppow.at(prev), P[j], weigh);
    ppow.emplace(m, base);
    int idx = basis.index(m);
    if (!cols[idx].empty())
      out = add(out, multiply(cols[idx], ppow.at(m), weigh));
  }
  return out;
}

}  // namespace detail

// composes K_0 .. K_n restricted to A' = 0, producing the torus
// alpha |-> (a_inf + Xi_inf(alpha), alpha + Delta_inf(alpha)); the action
// argument of every map is carried along exactly (angle-only algebra)
inline TorusEmbedding compose_maps(const std::vector<CanonicalMap>& maps,
                                   double kappa_measure = 0.0) {
  if (maps.empty()) throw Error("compose_maps: empty map list");
  const int ell = static_cast<int>(maps.front().a.size());
  const int N = maps.front().Delta.empty()
                    ? 1
                    : maps.front().Delta.front().fourier_cutoff();
  double kappa = kappa_measure > 0.0 ? kappa_measure
                                     : 0.5 * maps.back().source_dom.kappa;
  PolydiskDomain mdom(ell, 1.0, kappa);

  std::vector<FourierTaylorSeries> P(ell, FourierTaylorSeries(ell, N, 0, true));
  std::vector<FourierTaylorSeries> D(ell, FourierTaylorSeries(ell, N, 0, true));
  std::vector<double> a_acc(ell, 0.0);
  std::vector<std::pair<std::vector<double>, double>> history(maps.size());

  for (int m = static_cast<int>(maps.size()) - 1; m >= 0; --m) {
    const auto& K = maps[m];
    std::vector<FourierTaylorSeries> sx, sd;
    double corr = 0.0;
    for (int j = 0; j < ell; ++j) {
      FourierTaylorSeries xj = detail::substitute_action(
          compose_angle(K.Xi[j], D, &mdom), P, &mdom);
      FourierTaylorSeries dj = detail::substitute_action(
          compose_angle(K.Delta[j], D, &mdom), P, &mdom);
      corr = std::max(corr, majorant_norm(xj, mdom) + std::abs(K.a[j]));
      corr = std::max(corr, majorant_norm(dj, mdom));
      sx.push_back(std::move(xj));
      sd.push_back(std::move(dj));
    }
    std::vector<int> zero(ell, 0);
    for (int j = 0; j < ell; ++j) {
      sx[j].add_coeff(zero, zero, Complex(K.a[j], 0.0));
      P[j] = add(P[j], sx[j]);
      D[j] = add(D[j], sd[j]);
      a_acc[j] += K.a[j];
    }
    history[m] = {K.a, corr};
  }

  TorusEmbedding T;
  T.history = std::move(history);
  T.a_inf.assign(ell, 0.0);
  std::vector<int> zero(ell, 0);
  for (int j = 0; j < ell; ++j) {
    T.a_inf[j] = P[j].coeff(zero, zero).real();
    FourierTaylorSeries xi = P[j];
    xi.add_coeff(zero, zero, -P[j].coeff(zero, zero));
    xi.prune();
    xi.set_real_flag(true);
    D[j].set_real_flag(true);
    T.Xi_inf.push_back(std::move(xi));
    T.Delta_inf.push_back(D[j]);
  }
  return T;
}

// torus point in the original coordinates
inline void embedding_point(const TorusEmbedding& T,
                            const std::vector<double>& alpha,
                            std::vector<double>& A_out,
                            std::vector<double>& alpha_out) {
  const int ell = static_cast<int>(T.a_inf.size());
  std::vector<Complex> zero(ell, Complex{});
  std::vector<Complex> al(alpha.begin(), alpha.end());
  A_out.resize(ell);
  alpha_out.resize(ell);
  for (int j = 0; j < ell; ++j) {
    A_out[j] = T.a_inf[j] + evaluate(T.Xi_inf[j], zero, al).real();
    alpha_out[j] = alpha[j] + evaluate(T.Delta_inf[j], zero, al).real();
  }
}

// --------------------------------------------------------------------------
// fixed-domain rescaling view

// A = sqrt(eta) A': the twist and the perturbation become
// sqrt(eta) J and eta^{-1/2} f(sqrt(eta) A', alpha) on (rho0/2, kappa0/2)
inline Hamiltonian rescale(const Hamiltonian& H, double eta,
                           const PolydiskDomain& dom0) {
  if (!(eta > 0.0)) throw Error("rescale: eta must be positive");
  const double r = std::sqrt(eta);
  FourierTaylorSeries f(H.f.ell(), H.f.fourier_cutoff(), H.f.taylor_degree(),
                        H.f.real_flagged());
  const auto& mono = H.f.basis().mono;
  for (const auto& [nu, p] : H.f.modes())
    for (size_t i = 0; i < p.size(); ++i)
      if (p[i] != Complex{})
        f.add_coeff(nu, mono[i],
                    p[i] * std::pow(r, static_cast<double>(abs_sum(mono[i])) - 1.0));
  f.prune();
  Hamiltonian out;
  out.J = r * H.J;
  out.freq = H.freq;
  out.f = std::move(f);
  out.dom = PolydiskDomain(dom0.ell, 0.5 * dom0.rho, 0.5 * dom0.kappa);
  return out;
}

// eps-type norm of the deviation of the rescaled Hamiltonian from the
// harmonic fixed point omega0.A on the fixed domain
inline double rescaled_distance_to_fixed_point(const Hamiltonian& H,
                                               double eta,
                                               const PolydiskDomain& dom0) {
  Hamiltonian R = rescale(H, eta, dom0);
  FourierTaylorSeries g = R.f;
  if (g.taylor_degree() >= 2) {
    std::vector<int> zero(g.ell(), 0);
    for (int j = 0; j < g.ell(); ++j) {
      std::vector<int> k(g.ell(), 0);
      k[j] = 2;
      g.add_coeff(zero, k, Complex(0.5 * R.J, 0.0));
    }
  }
  return epsilon_norm(g, R.dom).epsilon;
}

// --------------------------------------------------------------------------
// the run loop

struct RunResult {
  IterationTrace trace;
  TorusEmbedding torus;
  std::vector<CanonicalMap> maps;
  Hamiltonian H_final;
};

inline IterationState make_state(int n, const Hamiltonian& H, double C0,
                                 double kappa0) {
  IterationState s;
  s.n = n;
  s.rho_n = H.dom.rho;
  s.kappa_n = H.dom.kappa;
  s.delta_n = schedule(n, kappa0).first;
  SeriesNorms norms = H.norms();
  s.eps_n = norms.epsilon;
  s.eta_n = norms.epsilon * C0;
  s.theta_n = H.theta(norms.epsilon);
  s.C0 = C0;
  s.J = H.J;
  return s;
}

inline RunResult run(const Hamiltonian& H0, const DriverOptions& opts) {
  H0.validate();
  const double kappa0 = H0.dom.kappa;
  RunResult result;
  Hamiltonian H = H0;
  IterationState state = make_state(0, H, H0.freq.C0, kappa0);

  result.trace.initial_cert =
      check_initial(state.C0, state.rho_n, state.kappa_n, state.J, state.eps_n,
                    state.theta_n);
  if (!result.trace.initial_cert.overall) {
    const auto* fail = result.trace.initial_cert.first_failure();
    throw NotApplicable("initial applicability gate failed: " + fail->name,
                        fail->name);
  }

  result.trace.states.push_back(state);
  while (true) {
    if (state.eta_n < opts.target_eta) {
      result.trace.stop_reason = StopReason::TargetReached;
      break;
    }
    if (state.n >= opts.max_steps) {
      result.trace.stop_reason = StopReason::MaxSteps;
      break;
    }
    StepOutcome outcome;
    try {
      outcome = step_once(H, state, opts.step);
    } catch (const DomainCollapsed& e) {
      result.trace.stop_reason = StopReason::DomainCollapsed;
      result.trace.stop_detail = e.what();
      break;
    } catch (const Error& e) {
      // solver-level failures end the run with the partial trace intact
      result.trace.stop_reason = StopReason::ConditionFailed;
      result.trace.stop_detail = e.what();
      break;
    }
    if (!outcome.advanced) {
      result.trace.stop_reason = StopReason::ConditionFailed;
      const auto* fail = outcome.cert.first_failure();
      result.trace.stop_detail = fail ? fail->name : "step gate failed";
      result.trace.step_certs.push_back(outcome.cert);
      break;
    }
    result.trace.reports.push_back(outcome.report);
    result.trace.step_certs.push_back(outcome.cert);
    result.maps.push_back(outcome.map);
    H = outcome.H1;
    state = make_state(state.n + 1, H, state.C0, kappa0);
    result.trace.states.push_back(state);
  }

  result.H_final = H;
  if (!result.maps.empty())
    result.torus = compose_maps(result.maps);
  else {
    const int ell = H.ell();
    result.torus.a_inf.assign(ell, 0.0);
    for (int j = 0; j < ell; ++j) {
      result.torus.Xi_inf.emplace_back(ell, H.f.fourier_cutoff(), 0, true);
      result.torus.Delta_inf.emplace_back(ell, H.f.fourier_cutoff(), 0, true);
    }
  }
  return result;
}

// --------------------------------------------------------------------------
// convergence-law fits

struct SuperexpFit {
  bool ok = false;
  double slope = 0.0;
  double intercept = 0.0;
  double gamma_bar = 0.0;
  double max_rel_residual = 0.0;
  double c_exponent = 0.0;  // fitted delta exponent in eta_{n+1}/eta_n^2
  double K = 0.0;
  std::vector<double> ratios;  // eta_{n+1} / (eta_n^2 delta_n^{-c})
  int points = 0;
};

// checks log log (1/eta_n) against an affine law with slope >= log(1+mu)
inline SuperexpFit check_superexponential(const IterationTrace& trace,
                                          double mu) {
  std::vector<double> etas;
  for (const auto& s : trace.states) etas.push_back(s.eta_n);
  while (!etas.empty() && etas.back() == 0.0) etas.pop_back();
  if (trace.completed_steps() < 3 || etas.size() < 4)
    throw NotEnoughData("check_superexponential: needs >= 3 completed steps");
  for (double e : etas)
    if (!(e > 0.0 && e < 1.0))
      throw NotEnoughData("check_superexponential: eta values must lie in (0,1)");

  SuperexpFit fit;
  fit.points = static_cast<int>(etas.size());
  std::vector<double> y;
  for (double e : etas) y.push_back(std::log(std::log(1.0 / e)));
  const int n = static_cast<int>(y.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < n; ++i) {
    sx += i;
    sy += y[i];
    sxx += static_cast<double>(i) * i;
    sxy += i * y[i];
  }
  fit.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  fit.intercept = (sy - fit.slope * sx) / n;
  for (int i = 0; i < n; ++i) {
    double pred = fit.intercept + fit.slope * i;
    fit.max_rel_residual =
        std::max(fit.max_rel_residual, std::abs(y[i] - pred) / std::abs(y[i]));
  }
  fit.gamma_bar = std::exp(-std::exp(fit.intercept)) / etas.front();

  // least-squares (log K, c) over ln eta_{n+1} - 2 ln eta_n = ln K - c ln delta_n
  const int T = static_cast<int>(etas.size()) - 1;
  double a11 = 0, a12 = 0, a22 = 0, b1 = 0, b2 = 0;
  for (int i = 0; i < T; ++i) {
    double ld = std::log(trace.states[i].delta_n);
    double rhsv = std::log(etas[i + 1]) - 2.0 * std::log(etas[i]);
    a11 += 1.0;
    a12 += -ld;
    a22 += ld * ld;
    b1 += rhsv;
    b2 += -ld * rhsv;
  }
  double det = a11 * a22 - a12 * a12;
  double lnK = 0.0, c = 0.0;
  if (std::abs(det) > 1e-12) {
    lnK = (b1 * a22 - b2 * a12) / det;
    c = (a11 * b2 - a12 * b1) / det;
  } else {
    lnK = b1 / a11;
  }
  fit.K = std::exp(lnK);
  fit.c_exponent = c;
  for (int i = 0; i < T; ++i)
    fit.ratios.push_back(etas[i + 1] /
                         (etas[i] * etas[i] *
                          std::pow(trace.states[i].delta_n, -c)));

  fit.ok = fit.slope >= std::log(1.0 + mu) && fit.max_rel_residual <= 0.2;
  return fit;
}

// --------------------------------------------------------------------------
// trace serialization

inline void write_trace_csv(const IterationTrace& trace, std::ostream& os) {
  os << "n,rho_n,kappa_n,delta_n,eps_n,eta_n,theta_n,"
        "eps_term1,eps_term2,eps_term3,cancel_residual\n";
  char buf[64];
  auto put = [&](double v, bool last = false) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << buf << (last ? "\n" : ",");
  };
  for (size_t i = 0; i < trace.states.size(); ++i) {
    const auto& s = trace.states[i];
    os << s.n << ',';
    put(s.rho_n);
    put(s.kappa_n);
    put(s.delta_n);
    put(s.eps_n);
    put(s.eta_n);
    put(s.theta_n);
    if (i < trace.reports.size()) {
      const auto& r = trace.reports[i];
      put(r.term_eps[0]);
      put(r.term_eps[1]);
      put(r.term_eps[2]);
      put(r.cancellation_residual, true);
    } else {
      put(0.0);
      put(0.0);
      put(0.0);
      put(0.0, true);
    }
  }
}

}  // namespace kam
