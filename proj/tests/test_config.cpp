#include <catch2/catch_amalgamated.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "kam/config.hpp"

using namespace kam;
namespace fs = std::filesystem;

namespace {

fs::path write_temp(const std::string& body) {
  static int counter = 0;
  fs::path p = fs::temp_directory_path() /
               ("kamforge_cfg_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter++) + ".cfg");
  std::ofstream os(p);
  os << body;
  return p;
}

const char* kMinimal = R"(ell = 2
omega = 1.0 1.6180339887498949
J = 1.0
rho0 = 0.5
kappa0 = 0.6
fourier_cutoff = 8
taylor_degree = 2
eps_scale = 1e-4
diophantine_cutoff = 16
[perturbation]
 1  0  0 0  0.5
-1  0  0 0  0.5
[end]
)";

}  // namespace

TEST_CASE("a minimal valid config round-trips into a Hamiltonian") {
  fs::path p = write_temp(kMinimal);
  RunConfig cfg = parse_config(p.string());
  REQUIRE(cfg.ell == 2);
  REQUIRE(cfg.omega.size() == 2);
  REQUIRE(cfg.perturbation.size() == 2);
  Hamiltonian H = cfg.build_hamiltonian();
  REQUIRE(H.f.real_flagged());
  REQUIRE(H.f.coeff({1, 0}, {0, 0}) == Complex{0.5e-4, 0.0});
  REQUIRE(H.freq.verified_cutoff == 16);
  fs::remove(p);
}

TEST_CASE("a nonzero mean is rejected") {
  std::string body(kMinimal);
  body.insert(body.find("[end]"), " 0  0  0 0  0.1\n");
  fs::path p = write_temp(body);
  try {
    parse_config(p.string());
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    REQUIRE(std::string(e.what()).find("perturbation") != std::string::npos);
  }
  fs::remove(p);
}

TEST_CASE("the diophantine cutoff must dominate the series cutoff") {
  std::string body(kMinimal);
  auto pos = body.find("diophantine_cutoff = 16");
  body.replace(pos, 23, "diophantine_cutoff = 4 ");
  fs::path p = write_temp(body);
  try {
    parse_config(p.string());
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    REQUIRE(std::string(e.what()).find("diophantine_cutoff") !=
            std::string::npos);
  }
  fs::remove(p);
}

TEST_CASE("unknown keys are rejected with a line number") {
  std::string body(kMinimal);
  body.insert(0, "mystery_knob = 3\n");
  fs::path p = write_temp(body);
  try {
    parse_config(p.string());
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    REQUIRE(msg.find(":1:") != std::string::npos);
    REQUIRE(msg.find("mystery_knob") != std::string::npos);
  }
  fs::remove(p);
}

TEST_CASE("malformed rows are rejected with a line number") {
  std::string body(kMinimal);
  body.insert(body.find("[end]"), " 1  0  0 0\n");  // missing value
  fs::path p = write_temp(body);
  REQUIRE_THROWS_AS(parse_config(p.string()), ConfigError);
  fs::remove(p);
}

TEST_CASE("missing conjugate partners are rejected") {
  std::string body(kMinimal);
  auto pos = body.find("-1  0  0 0  0.5\n");
  body.erase(pos, 16);
  fs::path p = write_temp(body);
  REQUIRE_THROWS_AS(parse_config(p.string()), ConfigError);
  fs::remove(p);
}

TEST_CASE("defaulted floor follows the initial radius") {
  fs::path p = write_temp(kMinimal);
  RunConfig cfg = parse_config(p.string());
  REQUIRE(cfg.effective_rho_floor() == Catch::Approx(1e-8 * 0.5));
  cfg.rho_floor = 1e-300;
  REQUIRE(cfg.effective_rho_floor() == 1e-300);
  fs::remove(p);
}

TEST_CASE("missing files are reported") {
  REQUIRE_THROWS_AS(parse_config("/nonexistent/path.cfg"), ConfigError);
}
