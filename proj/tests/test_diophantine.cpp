#include <catch2/catch_amalgamated.hpp>

#include "fixtures.hpp"
#include "kam/diophantine.hpp"

using namespace kam;
using Catch::Approx;

TEST_CASE("small divisors") {
  SECTION("exact resonance") {
    REQUIRE(small_divisor({1.0, 2.0}, {2, -1}) == 0.0);
  }
  SECTION("unit frequency component") {
    REQUIRE(small_divisor({1.0, fixtures::golden_ratio()}, {1, 0}) == 1.0);
  }
  SECTION("golden-mean combination") {
    // 2*phi - 3 = sqrt(5) - 2
    double expected = std::sqrt(5.0) - 2.0;
    REQUIRE(small_divisor({1.0, fixtures::golden_ratio()}, {-3, 2}) ==
            Approx(expected).epsilon(1e-15));
  }
  SECTION("zero mode is rejected") {
    REQUIRE_THROWS_AS(small_divisor({1.0, 2.0}, {0, 0}), ZeroMode);
  }
}

TEST_CASE("constant estimation") {
  SECTION("resonant vectors are detected") {
    REQUIRE_THROWS_AS(estimate_C0({1.0, 1.0}, 2), Resonant);
  }
  SECTION("one-dimensional integer frequency") {
    FrequencyVector fv = estimate_C0({1.0}, 10);
    REQUIRE(fv.C0 == Approx(1.01).epsilon(1e-14));
    REQUIRE(fv.exponent == 1.0);
    REQUIRE(fv.verified_cutoff == 10);
  }
  SECTION("golden mean against a brute-force scan") {
    const double phi = fixtures::golden_ratio();
    FrequencyVector fv = estimate_C0({1.0, phi}, 50);
    // independent exhaustive scan over the |nu|_1 <= 50 ball
    double worst = 0.0;
    for (int n1 = -50; n1 <= 50; ++n1)
      for (int n2 = -50; n2 <= 50; ++n2) {
        int a = std::abs(n1) + std::abs(n2);
        if (a == 0 || a > 50) continue;
        double s = std::abs(n1 * 1.0 + n2 * phi);
        worst = std::max(worst, 1.0 / (s * a * a));
      }
    REQUIRE(fv.C0 == Approx(1.01 * worst).epsilon(1e-14));
  }
}

TEST_CASE("the estimated constant verifies its own bound") {
  FrequencyVector fv = estimate_C0({1.0, fixtures::golden_ratio()}, 30);
  REQUIRE(check_diophantine(fv));
}

TEST_CASE("monotonicity in the cutoff") {
  const double phi = fixtures::golden_ratio();
  double prev = 0.0;
  for (int cutoff : {10, 20, 40}) {
    FrequencyVector fv = estimate_C0({1.0, phi}, cutoff);
    REQUIRE(fv.C0 >= prev);
    prev = fv.C0;
  }
}

TEST_CASE("scaling of the frequency scales the constant inversely") {
  const double phi = fixtures::golden_ratio();
  FrequencyVector base = estimate_C0({1.0, phi}, 25);
  SECTION("powers of two scale exactly") {
    FrequencyVector doubled = estimate_C0({2.0, 2.0 * phi}, 25);
    REQUIRE(doubled.C0 == base.C0 / 2.0);
    FrequencyVector halved = estimate_C0({0.5, 0.5 * phi}, 25);
    REQUIRE(halved.C0 == base.C0 * 2.0);
  }
  SECTION("generic factors scale to rounding") {
    const double lam = 1.7;
    FrequencyVector scaled = estimate_C0({lam, lam * phi}, 25);
    REQUIRE(scaled.C0 == Approx(base.C0 / lam).epsilon(1e-13));
  }
}
