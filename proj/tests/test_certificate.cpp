#include <catch2/catch_amalgamated.hpp>

#include "fixtures.hpp"
#include "kam/certificate.hpp"

using namespace kam;
using Catch::Approx;

TEST_CASE("initial gates on the standard numbers") {
  Certificate c = check_initial(1.0, 0.5, 0.6, 1.0, 1e-4);
  REQUIRE(c.overall);
  REQUIRE(c.checks.size() == 3);
  REQUIRE(c.checks[0].lhs == Approx(0.5));
  REQUIRE(c.checks[1].lhs == Approx(std::exp(0.6)));
  REQUIRE(c.checks[2].lhs == Approx(2e-4));
  REQUIRE(c.first_failure() == nullptr);
}

TEST_CASE("a too-wide angle strip fails the second gate") {
  Certificate c = check_initial(1.0, 0.5, 0.8, 1.0, 1e-4);
  REQUIRE_FALSE(c.overall);
  const auto* f = c.first_failure();
  REQUIRE(f != nullptr);
  REQUIRE(f->name == "exp(kappa0) < 2");
  REQUIRE(f->lhs == Approx(std::exp(0.8)));
}

TEST_CASE("a large perturbation fails the shift gate") {
  Certificate c = check_initial(1.0, 0.5, 0.6, 1.0, 0.05);
  REQUIRE_FALSE(c.overall);
  const auto* f = c.first_failure();
  REQUIRE(f != nullptr);
  REQUIRE(f->name == "theta0 < 1/16");
  REQUIRE(f->lhs == Approx(0.1));
  REQUIRE(f->rhs == Approx(1.0 / 16.0));
}

TEST_CASE("the optional map-solubility entry is appended when measured") {
  Certificate c = check_initial(1.0, 0.5, 0.6, 1.0, 1e-4, {}, 0.02);
  REQUIRE(c.checks.size() == 4);
  REQUIRE(c.checks[3].pass);
  Certificate bad = check_initial(1.0, 0.5, 0.6, 1.0, 1e-4, {}, 1.5);
  REQUIRE_FALSE(bad.overall);
}

TEST_CASE("step gates") {
  IterationState st;
  st.rho_n = 0.5;
  st.delta_n = 0.006;
  SECTION("the zero perturbation passes everything") {
    StepReport r;
    Certificate c = check_step(r, st);
    REQUIRE(c.overall);
    REQUIRE(c.checks.size() == 4);
  }
  SECTION("an inflated generating function fails the mixed-derivative gate first") {
    Hamiltonian H = fixtures::golden(1e-4);
    const double delta = 0.006;
    FourierTaylorSeries Phi = build_generating(H, {0.0, 0.0}, delta);
    FourierTaylorSeries inflated = scale(Phi, {1e4, 0.0});
    std::vector<FourierTaylorSeries> none;
    StepReport r = step_diagnostics(inflated, none, none, H.dom, delta);
    Certificate c = check_step(r, st);
    REQUIRE_FALSE(c.overall);
    REQUIRE(c.first_failure()->name == "||d2_{A alpha} Phi|| < 1");
  }
  SECTION("the correction bounds gate on the step data") {
    StepReport r;
    r.delta_norm = 0.01;  // above delta_n
    Certificate c = check_step(r, st);
    REQUIRE_FALSE(c.overall);
    REQUIRE(c.first_failure()->name == "||Delta|| < delta_n");
    r.delta_norm = 0.0;
    r.xi_norm = 0.2;  // above rho_n / 4
    c = check_step(r, st);
    REQUIRE(c.first_failure()->name == "||Xi|| < rho_n/4");
    r.xi_norm = 0.0;
    r.injectivity_margin = 0.3;
    c = check_step(r, st);
    REQUIRE(c.first_failure()->name == "injectivity margin >= 1/2");
  }
}

TEST_CASE("gates are monotone under perturbation scaling") {
  StepOptions opts = fixtures::standard_options().step;
  auto measure = [&](double lam) {
    Hamiltonian H = fixtures::golden_with_actions(lam);
    IterationState st = make_state(0, H, H.freq.C0, H.dom.kappa);
    StepOutcome out = step_once(H, st, opts);
    REQUIRE(out.advanced);
    return out.report;
  };
  StepReport full = measure(1.0);
  StepReport half = measure(0.5);
  REQUIRE(half.phi_norms[2] < full.phi_norms[2]);
  REQUIRE(half.delta_norm < full.delta_norm);
  REQUIRE(half.xi_norm < full.xi_norm);
  REQUIRE(1.0 - half.injectivity_margin < 1.0 - full.injectivity_margin);
}
