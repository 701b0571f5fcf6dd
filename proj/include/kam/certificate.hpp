#pragma once

// Applicability conditions, checked with measured majorants and reported as
// a structured pass/fail certificate.  Failures are recorded, never thrown.

#include <optional>
#include <string>
#include <vector>

#include "kam/kolmogorov.hpp"

namespace kam {

struct CertificateCheck {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  bool pass = false;
  std::string anchor;  // stable identifier of the underlying condition
};

struct Certificate {
  std::vector<CertificateCheck> checks;
  bool overall = true;

  void record(std::string name, double lhs, double rhs, bool pass,
              std::string anchor) {
    checks.push_back({std::move(name), lhs, rhs, pass, std::move(anchor)});
    overall = overall && pass;
  }

  // the first condition violated, if any
  const CertificateCheck* first_failure() const {
    for (const auto& c : checks)
      if (!c.pass) return &c;
    return nullptr;
  }
};

// initial restrictions: C0 rho0 J < 1, e^{kappa0} < 2, theta0 < 1/16; when a
// measured mixed second derivative of the generating function is supplied,
// the per-step solubility surrogate |d2 Phi| < 1 is appended as well
inline Certificate check_initial(double C0, double rho0, double kappa0,
                                 double J, double eps0,
                                 std::optional<double> theta_override = {},
                                 std::optional<double> mixed_phi_norm = {}) {
  Certificate cert;
  double prod = C0 * rho0 * J;
  cert.record("C0*rho0*J < 1", prod, 1.0, prod < 1.0, "initial-twist-restriction");
  double ek = std::exp(kappa0);
  cert.record("exp(kappa0) < 2", ek, 2.0, ek < 2.0, "initial-strip-restriction");
  double theta = theta_override ? *theta_override
                                : (J > 0.0 ? eps0 / (rho0 * J)
                                           : std::numeric_limits<double>::infinity());
  cert.record("theta0 < 1/16", theta, 1.0 / 16.0, theta < 1.0 / 16.0,
              "shift-solubility");
  if (mixed_phi_norm)
    cert.record("||d2_{A alpha} Phi|| < 1", *mixed_phi_norm, 1.0,
                *mixed_phi_norm < 1.0, "map-solubility");
  return cert;
}

// per-step gates on the measured step diagnostics
inline Certificate check_step(const StepReport& report,
                              const IterationState& state) {
  Certificate cert;
  cert.record("||d2_{A alpha} Phi|| < 1", report.phi_norms[2], 1.0,
              report.phi_norms[2] < 1.0, "map-solubility");
  cert.record("||Delta|| < delta_n", report.delta_norm, state.delta_n,
              report.delta_norm < state.delta_n, "angle-correction-bound");
  cert.record("||Xi|| < rho_n/4", report.xi_norm, state.rho_n / 4.0,
              report.xi_norm < state.rho_n / 4.0, "action-correction-bound");
  cert.record("injectivity margin >= 1/2", report.injectivity_margin, 0.5,
              report.injectivity_margin >= 0.5, "angle-map-injectivity");
  return cert;
}

}  // namespace kam
