#include <catch2/catch_amalgamated.hpp>
#include <random>
#include <sstream>

#include "fixtures.hpp"
#include "kam/series.hpp"

using namespace kam;
using Catch::Approx;

namespace {
const std::vector<int> kZero2{0, 0};
}

TEST_CASE("majorant norm of a constant") {
  FourierTaylorSeries f(2, 4, 2, true);
  f.set_coeff(kZero2, kZero2, {3.0, 0.0});
  REQUIRE(majorant_norm(f, PolydiskDomain(2, 0.7, 0.2)) == 3.0);
  REQUIRE(majorant_norm(f, PolydiskDomain(2, 2.0, 1.0)) == 3.0);
}

TEST_CASE("majorant norm of a single product term") {
  // A1 e^{i a1} on rho = 1/2, kappa = ln 2: 0.5 * 2 = 1
  FourierTaylorSeries f(2, 4, 2);
  f.set_coeff({1, 0}, {1, 0}, {1.0, 0.0});
  REQUIRE(majorant_norm(f, PolydiskDomain(2, 0.5, std::log(2.0))) ==
          Approx(1.0).epsilon(1e-15));
}

TEST_CASE("majorant dominates dense boundary sampling") {
  std::mt19937_64 rng(42);
  FourierTaylorSeries f = fixtures::random_series(rng, 2, 5, 3, 10);
  PolydiskDomain dom(2, 0.3, 0.2);
  double maj = majorant_norm(f, dom);
  double max_seen = 0.0;
  std::vector<Complex> A, alpha;
  for (int s = 0; s < 1000; ++s) {
    fixtures::random_point(rng, dom, A, alpha);
    max_seen = std::max(max_seen, std::abs(evaluate(f, A, alpha)));
  }
  REQUIRE(max_seen <= maj * (1.0 + 1e-12));
}

TEST_CASE("epsilon norm vanishes for constants") {
  FourierTaylorSeries f(2, 4, 2, true);
  f.set_coeff(kZero2, kZero2, {5.0, 0.0});
  SeriesNorms n = epsilon_norm(f, PolydiskDomain(2, 0.5, 0.3));
  REQUIRE(n.epsilon == 0.0);
  REQUIRE(n.grad_A == 0.0);
  REQUIRE(n.grad_alpha == 0.0);
}

TEST_CASE("epsilon norm of a single oscillating mode") {
  // c e^{i a1} on rho = 1, kappa -> 0: eps = |c|
  FourierTaylorSeries f(2, 4, 0);
  f.set_coeff({1, 0}, kZero2, {0.25, 0.0});
  SeriesNorms n = epsilon_norm(f, PolydiskDomain(2, 1.0, 1e-12));
  REQUIRE(n.grad_A == 0.0);
  REQUIRE(n.grad_alpha == Approx(0.25).epsilon(1e-10));
  REQUIRE(n.epsilon == Approx(0.25).epsilon(1e-10));
}

TEST_CASE("epsilon norm agrees with finite-difference gradients") {
  std::mt19937_64 rng(7);
  FourierTaylorSeries f = fixtures::random_series(rng, 2, 4, 3, 8);
  PolydiskDomain dom(2, 0.4, 0.25);
  SeriesNorms n = epsilon_norm(f, dom);

  // finite differences of the evaluation at a fixed interior point must be
  // reproduced by the differentiated series
  std::vector<Complex> A{0.11, -0.07}, alpha{0.9, 2.1};
  const double h = 1e-6;
  for (int j = 1; j <= 2; ++j) {
    auto Ap = A, Am = A;
    Ap[j - 1] += h;
    Am[j - 1] -= h;
    Complex fd = (evaluate(f, Ap, alpha) - evaluate(f, Am, alpha)) / (2.0 * h);
    Complex an = evaluate(partial_A(f, j), A, alpha);
    REQUIRE(std::abs(fd - an) <= 1e-6 * (1.0 + std::abs(an)));

    auto alp = alpha, alm = alpha;
    alp[j - 1] += h;
    alm[j - 1] -= h;
    fd = (evaluate(f, A, alp) - evaluate(f, A, alm)) / (2.0 * h);
    an = evaluate(partial_alpha(f, j), A, alpha);
    REQUIRE(std::abs(fd - an) <= 1e-6 * (1.0 + std::abs(an)));
  }
  REQUIRE(n.epsilon == Approx(n.grad_A + n.grad_alpha / dom.rho));
}

TEST_CASE("cauchy bound formula") {
  REQUIRE(cauchy_bound(1.0, 2, 0.5) == Approx(8.0));
  REQUIRE(cauchy_bound(3.7, 0, 0.123) == Approx(3.7));
  REQUIRE_THROWS_AS(cauchy_bound(1.0, 1, 0.0), Error);
}

TEST_CASE("cauchy bound dominates the derivative of z^5 on the disk") {
  // g(z) = z^5 on the unit disk, |g'| at distance delta from the boundary
  for (double delta : {0.1, 0.3, 0.5}) {
    double measured = 5.0 * std::pow(1.0 - delta, 4.0);
    REQUIRE(measured <= cauchy_bound(1.0, 1, delta));
  }
}

TEST_CASE("majorant-based cauchy consistency on shrunk domains") {
  std::mt19937_64 rng(3);
  PolydiskDomain dom(2, 0.5, 0.4);
  for (int trial = 0; trial < 20; ++trial) {
    FourierTaylorSeries f = fixtures::random_series(rng, 2, 4, 4, 12);
    double maj = majorant_norm(f, dom);
    for (double frac : {0.5, 0.75}) {
      PolydiskDomain shrunk(2, frac * dom.rho, dom.kappa);
      double grad = 0.0;
      for (int j = 1; j <= 2; ++j)
        grad = std::max(grad, majorant_norm(partial_A(f, j), shrunk));
      REQUIRE(grad <=
              cauchy_bound(maj, 1, dom.rho - shrunk.rho) * (1.0 + 1e-12));
    }
  }
}

TEST_CASE("fourier decay check") {
  PolydiskDomain dom(2, 0.5, 0.3);
  SECTION("equality case of a single mode") {
    FourierTaylorSeries f(2, 4, 0);
    f.set_coeff({1, 0}, kZero2, {1.0, 0.0});
    REQUIRE(fourier_decay_check(f, dom));
  }
  SECTION("zero series") {
    FourierTaylorSeries f(2, 4, 0);
    REQUIRE(fourier_decay_check(f, dom));
  }
  SECTION("random series always pass") {
    std::mt19937_64 rng(11);
    for (int t = 0; t < 100; ++t) {
      FourierTaylorSeries f = fixtures::random_series(rng, 2, 5, 3, 9);
      REQUIRE(fourier_decay_check(f, dom));
    }
  }
}

TEST_CASE("linear operations") {
  std::mt19937_64 rng(5);
  FourierTaylorSeries f = fixtures::random_series(rng, 2, 4, 2, 6);
  SECTION("f + 0 = f") {
    FourierTaylorSeries zero(2, 4, 2);
    FourierTaylorSeries sum = add(f, zero);
    PolydiskDomain dom(2, 0.5, 0.3);
    REQUIRE(majorant_norm(sub(sum, f), dom) == 0.0);
  }
  SECTION("mode cancellation in products") {
    FourierTaylorSeries a(2, 4, 0), b(2, 4, 0);
    a.set_coeff({1, 0}, kZero2, {1.0, 0.0});
    b.set_coeff({-1, 0}, kZero2, {1.0, 0.0});
    FourierTaylorSeries p = multiply(a, b);
    REQUIRE(p.coeff(kZero2, kZero2) == Complex{1.0, 0.0});
    REQUIRE(p.modes().size() == 1);
  }
}

TEST_CASE("multiply agrees with pointwise products within the tail") {
  std::mt19937_64 rng(13);
  PolydiskDomain dom(2, 0.3, 0.2);
  FourierTaylorSeries f = fixtures::random_series(rng, 2, 4, 2, 6);
  FourierTaylorSeries g = fixtures::random_series(rng, 2, 4, 2, 6);
  FourierTaylorSeries p = multiply(f, g, &dom);
  std::vector<Complex> A, alpha;
  for (int s = 0; s < 100; ++s) {
    fixtures::random_point(rng, dom, A, alpha);
    Complex direct = evaluate(f, A, alpha) * evaluate(g, A, alpha);
    Complex trunc = evaluate(p, A, alpha);
    REQUIRE(std::abs(direct - trunc) <= p.tail_bound() + 1e-12);
  }
}

namespace {
// re-embed a series into a larger truncation space
FourierTaylorSeries widen(const FourierTaylorSeries& f, int N, int d) {
  FourierTaylorSeries h(f.ell(), N, d, f.real_flagged());
  const auto& mono = f.basis().mono;
  for (const auto& [nu, p] : f.modes())
    for (size_t i = 0; i < p.size(); ++i)
      if (p[i] != Complex{}) h.add_coeff(nu, mono[i], p[i]);
  return h;
}
}  // namespace

TEST_CASE("angle and action derivations") {
  SECTION("d/dalpha of a single mode") {
    FourierTaylorSeries f(2, 4, 0);
    f.set_coeff({1, 0}, kZero2, {1.0, 0.0});
    FourierTaylorSeries d = partial_alpha(f, 1);
    REQUIRE(d.coeff({1, 0}, kZero2) == Complex{0.0, 1.0});
    REQUIRE(partial_alpha(f, 2).empty());
  }
  SECTION("d/dA of A1^2") {
    FourierTaylorSeries f(2, 4, 2);
    f.set_coeff(kZero2, {2, 0}, {1.0, 0.0});
    FourierTaylorSeries d = partial_A(f, 1);
    REQUIRE(d.coeff(kZero2, {1, 0}) == Complex{2.0, 0.0});
  }
  SECTION("derivatives commute") {
    std::mt19937_64 rng(17);
    FourierTaylorSeries f = fixtures::random_series(rng, 2, 4, 3, 10);
    PolydiskDomain dom(2, 0.5, 0.3);
    for (int i = 1; i <= 2; ++i)
      for (int j = 1; j <= 2; ++j) {
        FourierTaylorSeries ab = partial_alpha(partial_A(f, i), j);
        FourierTaylorSeries ba = partial_A(partial_alpha(f, j), i);
        REQUIRE(majorant_norm(sub(ab, ba), dom) <= 1e-14);
      }
  }
  SECTION("product rule, truncation-free case") {
    std::mt19937_64 rng(19);
    FourierTaylorSeries f = widen(fixtures::random_series(rng, 2, 2, 1, 4), 4, 2);
    FourierTaylorSeries g = widen(fixtures::random_series(rng, 2, 2, 1, 4), 4, 2);
    FourierTaylorSeries fg = multiply(f, g);
    PolydiskDomain dom(2, 0.5, 0.3);
    FourierTaylorSeries lhs = partial_A(fg, 1);
    FourierTaylorSeries rhs =
        add(multiply(partial_A(f, 1), g), multiply(f, partial_A(g, 1)));
    REQUIRE(majorant_norm(sub(lhs, rhs), dom) <= 1e-13);
  }
}

TEST_CASE("taylor shift") {
  SECTION("zero shift is the identity") {
    std::mt19937_64 rng(23);
    FourierTaylorSeries f = fixtures::random_series(rng, 2, 4, 3, 8);
    FourierTaylorSeries g = taylor_shift(f, {Complex{}, Complex{}});
    REQUIRE(majorant_norm(sub(f, g), PolydiskDomain(2, 1.0, 0.5)) == 0.0);
  }
  SECTION("binomial expansion of (A1 + 1)^2") {
    FourierTaylorSeries f(2, 4, 2);
    f.set_coeff(kZero2, {2, 0}, {1.0, 0.0});
    FourierTaylorSeries g = taylor_shift(f, {Complex{1.0, 0.0}, Complex{}});
    REQUIRE(g.coeff(kZero2, kZero2) == Complex{1.0, 0.0});
    REQUIRE(g.coeff(kZero2, {1, 0}) == Complex{2.0, 0.0});
    REQUIRE(g.coeff(kZero2, {2, 0}) == Complex{1.0, 0.0});
  }
  SECTION("evaluation of shifted series matches shifted evaluation") {
    std::mt19937_64 rng(29);
    FourierTaylorSeries f = fixtures::random_series(rng, 2, 3, 4, 12);
    std::vector<Complex> a{Complex{0.07, 0.0}, Complex{-0.04, 0.0}};
    FourierTaylorSeries g = taylor_shift(f, a);
    PolydiskDomain dom(2, 0.2, 0.2);
    std::vector<Complex> A, alpha, As(2);
    for (int s = 0; s < 100; ++s) {
      fixtures::random_point(rng, dom, A, alpha);
      for (int j = 0; j < 2; ++j) As[j] = A[j] + a[j];
      Complex lhs = evaluate(g, A, alpha);
      Complex rhs = evaluate(f, As, alpha);
      REQUIRE(std::abs(lhs - rhs) <= 1e-12 * (1.0 + std::abs(rhs)));
    }
  }
}

TEST_CASE("evaluate") {
  SECTION("constants and a simple product") {
    FourierTaylorSeries f(2, 4, 2);
    f.set_coeff(kZero2, kZero2, {5.0, 0.0});
    REQUIRE(evaluate(f, {Complex{9.0, 1.0}, Complex{}},
                     {Complex{0.3, 0.0}, Complex{}}) == Complex{5.0, 0.0});

    FourierTaylorSeries g(2, 4, 2);
    g.set_coeff({1, 0}, {1, 0}, {1.0, 0.0});
    const double half_pi = std::acos(-1.0) / 2.0;
    Complex v = evaluate(g, {Complex{2.0, 0.0}, Complex{}},
                         {Complex{half_pi, 0.0}, Complex{}});
    REQUIRE(std::abs(v - Complex{0.0, 2.0}) <= 1e-14);
  }
  SECTION("agrees with an independent term-by-term sum") {
    std::mt19937_64 rng(31);
    FourierTaylorSeries f = fixtures::random_series(rng, 2, 4, 3, 10);
    std::vector<Complex> A{Complex{0.1, 0.05}, Complex{-0.2, 0.01}};
    std::vector<Complex> alpha{Complex{1.0, 0.1}, Complex{2.5, -0.2}};
    Complex direct = 0.0;
    const auto& mono = f.basis().mono;
    for (const auto& [nu, p] : f.modes())
      for (size_t i = 0; i < p.size(); ++i) {
        if (p[i] == Complex{}) continue;
        Complex term = p[i];
        for (int j = 0; j < 2; ++j)
          term *= std::pow(A[j], mono[i][j]) *
                  std::exp(Complex(0.0, 1.0) * static_cast<double>(nu[j]) *
                           alpha[j]);
        direct += term;
      }
    REQUIRE(std::abs(direct - evaluate(f, A, alpha)) <=
            1e-12 * (1.0 + std::abs(direct)));
  }
}

TEST_CASE("angle composition") {
  SECTION("zero substitution is the identity") {
    std::mt19937_64 rng(37);
    FourierTaylorSeries f = fixtures::random_series(rng, 2, 4, 2, 8);
    std::vector<FourierTaylorSeries> dz(2, FourierTaylorSeries(2, 4, 2));
    FourierTaylorSeries g = compose_angle(f, dz);
    REQUIRE(majorant_norm(sub(f, g), PolydiskDomain(2, 0.5, 0.3)) == 0.0);
  }
  SECTION("constant rotation multiplies modes by phases") {
    FourierTaylorSeries f(2, 4, 0);
    f.set_coeff({1, 0}, kZero2, {1.0, 0.0});
    std::vector<FourierTaylorSeries> d(2, FourierTaylorSeries(2, 4, 0));
    const double c = 0.37;
    d[0].set_coeff(kZero2, kZero2, {c, 0.0});
    FourierTaylorSeries g = compose_angle(f, d);
    Complex expected = std::exp(Complex(0.0, c));
    REQUIRE(std::abs(g.coeff({1, 0}, kZero2) - expected) <= 1e-13);
  }
  SECTION("single-mode substitution matches pointwise evaluation") {
    std::mt19937_64 rng(41);
    FourierTaylorSeries f = fixtures::random_series(rng, 2, 3, 2, 6);
    std::vector<FourierTaylorSeries> d(2, FourierTaylorSeries(2, 3, 2));
    d[0].set_coeff({0, 1}, kZero2, {0.01, 0.0});
    d[0].set_coeff({0, -1}, kZero2, {0.01, 0.0});
    d[1].set_coeff({1, 0}, {1, 0}, {0.02, 0.0});
    d[1].set_coeff({-1, 0}, {1, 0}, {0.02, 0.0});
    PolydiskDomain dom(2, 0.2, 0.15);
    FourierTaylorSeries g = compose_angle(f, d, &dom);
    std::vector<Complex> A, alpha, shifted(2);
    for (int s = 0; s < 1000; ++s) {
      fixtures::random_point(rng, dom, A, alpha);
      for (int j = 0; j < 2; ++j)
        shifted[j] = alpha[j] + evaluate(d[j], A, alpha);
      Complex direct = evaluate(f, A, shifted);
      Complex viaser = evaluate(g, A, alpha);
      REQUIRE(std::abs(direct - viaser) <= g.tail_bound() + 1e-12);
    }
  }
  SECTION("overflow tolerance rejects runaway substitutions") {
    FourierTaylorSeries f(2, 2, 0);
    f.set_coeff({2, 0}, kZero2, {1.0, 0.0});
    f.set_coeff({-2, 0}, kZero2, {1.0, 0.0});
    std::vector<FourierTaylorSeries> d(2, FourierTaylorSeries(2, 2, 0));
    d[0].set_coeff({1, 0}, kZero2, {0.4, 0.0});
    d[0].set_coeff({-1, 0}, kZero2, {0.4, 0.0});
    PolydiskDomain dom(2, 0.2, 0.3);
    REQUIRE_THROWS_AS(compose_angle(f, d, &dom, 1e-16), CompositionOverflow);
  }
}

TEST_CASE("reality is preserved and observable") {
  std::mt19937_64 rng(43);
  FourierTaylorSeries f = fixtures::random_series(rng, 2, 4, 3, 8, true);
  REQUIRE(f.real_flagged());
  PolydiskDomain dom(2, 0.4, 0.3);
  double maj = majorant_norm(f, dom);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (int s = 0; s < 50; ++s) {
    std::vector<Complex> A{Complex{0.3 * uni(rng), 0.0},
                           Complex{0.3 * uni(rng), 0.0}};
    std::vector<Complex> alpha{Complex{3.0 * uni(rng), 0.0},
                               Complex{3.0 * uni(rng), 0.0}};
    REQUIRE(std::abs(evaluate(f, A, alpha).imag()) <= 1e-12 * maj);
  }
}

TEST_CASE("coefficient dump format") {
  FourierTaylorSeries f(2, 2, 1);
  f.set_coeff({-1, 0}, {0, 1}, {0.5, -0.25});
  f.set_coeff({1, 0}, {0, 0}, {1.0, 0.0});
  std::ostringstream os;
  dump_series(f, os);
  REQUIRE(os.str() ==
          "2 2 1\n"
          "-1 0 0 1 0.5 -0.25\n"
          "1 0 0 0 1 0\n");

  std::mt19937_64 rng(47);
  FourierTaylorSeries g = fixtures::random_series(rng, 2, 4, 2, 9);
  std::ostringstream os2;
  dump_series(g, os2);
  std::istringstream is(os2.str());
  FourierTaylorSeries back = load_series(is);
  REQUIRE(majorant_norm(sub(g, back), PolydiskDomain(2, 0.5, 0.3)) == 0.0);
}

TEST_CASE("dimension mismatches are rejected") {
  FourierTaylorSeries f(2, 4, 2);
  REQUIRE_THROWS_AS(majorant_norm(f, PolydiskDomain(3, 0.5, 0.3)),
                    DimensionMismatch);
  FourierTaylorSeries g(3, 4, 2);
  REQUIRE_THROWS_AS(add(f, g), DimensionMismatch);
  REQUIRE_THROWS_AS(evaluate(f, {Complex{}}, {Complex{}}), DimensionMismatch);
}
