// kamforge: batch front end for the renormalization engine.
//
//   kamforge run     --config cfg [--out dir] [--max-steps K] [--target-eta X]
//   kamforge certify --config cfg [--out dir]
//   kamforge verify  --config cfg [--out dir]     (re-measures a dumped torus)
//   kamforge oracle  --config cfg [--out dir]
//
// Exit codes: 0 success, 2 not applicable (a stated applicability condition
// fails), 1 internal error.

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <string>

#include "kam/certificate.hpp"
#include "kam/config.hpp"
#include "kam/driver.hpp"
#include "kam/verifier.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr int kFormatVersion = 1;

double finite(double v) {
  if (std::isnan(v)) return 0.0;
  if (std::isinf(v)) return v > 0 ? 1e308 : -1e308;
  return v;
}

ordered_json certificate_json(const kam::Certificate& cert) {
  ordered_json checks = ordered_json::array();
  for (const auto& c : cert.checks) {
    ordered_json e;
    e["name"] = c.name;
    e["lhs"] = finite(c.lhs);
    e["rhs"] = finite(c.rhs);
    e["pass"] = c.pass;
    e["anchor"] = c.anchor;
    checks.push_back(e);
  }
  ordered_json out;
  out["checks"] = checks;
  out["overall"] = cert.overall;
  return out;
}

ordered_json defect_json(const kam::DefectReport& rep) {
  ordered_json v;
  v["sup_defect"] = finite(rep.sup_defect);
  v["grid_size"] = rep.grid_size;
  v["per_component"] = rep.per_component;
  return v;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw kam::Error("cannot write " + path.string());
  os << text;
}

void dump_torus(const kam::TorusEmbedding& T, const fs::path& dir) {
  char buf[64];
  std::string aline;
  for (size_t j = 0; j < T.a_inf.size(); ++j) {
    std::snprintf(buf, sizeof buf, "%.17g", T.a_inf[j]);
    aline += std::string(j ? " " : "") + buf;
  }
  write_text(dir / "torus_a.txt", aline + "\n");
  for (size_t j = 0; j < T.Xi_inf.size(); ++j) {
    kam::dump_series_file(T.Xi_inf[j],
                          (dir / ("torus_xi_" + std::to_string(j + 1) + ".coeffs")).string());
    kam::dump_series_file(T.Delta_inf[j],
                          (dir / ("torus_delta_" + std::to_string(j + 1) + ".coeffs")).string());
  }
}

kam::TorusEmbedding load_torus(const kam::RunConfig& cfg, const fs::path& dir) {
  kam::TorusEmbedding T;
  std::ifstream as(dir / "torus_a.txt");
  if (!as) throw kam::Error("missing torus dump in " + dir.string());
  double v;
  while (as >> v) T.a_inf.push_back(v);
  if (static_cast<int>(T.a_inf.size()) != cfg.ell)
    throw kam::Error("torus_a.txt: wrong dimension");
  for (int j = 1; j <= cfg.ell; ++j) {
    T.Xi_inf.push_back(kam::load_series_file(
        (dir / ("torus_xi_" + std::to_string(j) + ".coeffs")).string()));
    T.Delta_inf.push_back(kam::load_series_file(
        (dir / ("torus_delta_" + std::to_string(j) + ".coeffs")).string()));
    T.Xi_inf.back().set_real_flag(true);
    T.Delta_inf.back().set_real_flag(true);
  }
  return T;
}

kam::DriverOptions driver_options(const kam::RunConfig& cfg) {
  kam::DriverOptions opts;
  opts.max_steps = cfg.max_steps;
  opts.target_eta = cfg.target_eta;
  opts.step.tol_shift = cfg.tol_shift;
  opts.step.tol_inversion = cfg.tol_inversion;
  opts.step.tol_composition = cfg.tol_composition;
  opts.step.rho_floor = cfg.effective_rho_floor();
  return opts;
}

ordered_json informational_json(const kam::RunConfig& cfg, double eta0,
                                double delta0) {
  ordered_json info = ordered_json::array();
  if (cfg.gamma9 && cfg.c9) {
    double lhs = *cfg.gamma9 * eta0 * std::pow(delta0, -*cfg.c9);
    ordered_json e;
    e["name"] = "gamma9*eta0*delta0^-c9 < 1 (supplied constants)";
    e["lhs"] = finite(lhs);
    e["rhs"] = 1.0;
    e["pass"] = lhs < 1.0;
    e["anchor"] = "eta-delta-smallness";
    info.push_back(e);
  }
  return info;
}

int cmd_run(const kam::RunConfig& cfg, const fs::path& out_dir) {
  kam::Hamiltonian H = cfg.build_hamiltonian();
  kam::RunResult result = kam::run(H, driver_options(cfg));

  std::ostringstream csv;
  kam::write_trace_csv(result.trace, csv);
  write_text(out_dir / "trace.csv", csv.str());
  dump_torus(result.torus, out_dir);

  ordered_json rep;
  rep["format_version"] = kFormatVersion;
  rep["mode"] = "run";
  rep["stop_reason"] = kam::to_string(result.trace.stop_reason);
  if (!result.trace.stop_detail.empty())
    rep["stop_detail"] = result.trace.stop_detail;
  rep["steps_completed"] = result.trace.completed_steps();
  rep["certificate"] = certificate_json(result.trace.initial_cert);
  {
    const auto& st = result.trace.states;
    ordered_json ts;
    ts["rows"] = st.size();
    ts["eta_first"] = finite(st.front().eta_n);
    ts["eta_last"] = finite(st.back().eta_n);
    ts["rho_last"] = finite(st.back().rho_n);
    ts["kappa_last"] = finite(st.back().kappa_n);
    rep["trace_summary"] = ts;
  }
  {
    ordered_json info = informational_json(
        cfg, result.trace.states.front().eta_n, result.trace.states.front().delta_n);
    if (!info.empty()) rep["informational"] = info;
  }
  if (result.trace.stop_reason == kam::StopReason::TargetReached ||
      result.trace.stop_reason == kam::StopReason::MaxSteps) {
    int grid = std::max(cfg.verify_grid,
                        kam::default_defect_grid(result.torus));
    kam::DefectReport defect = kam::invariance_defect(H, result.torus, grid);
    rep["verification"] = defect_json(defect);
  }
  rep["outputs"] = {{"trace_csv", "trace.csv"}, {"torus_action", "torus_a.txt"}};
  write_text(out_dir / "report.json", rep.dump(2) + "\n");
  std::cout << "run: " << kam::to_string(result.trace.stop_reason) << " after "
            << result.trace.completed_steps() << " steps, eta = "
            << result.trace.states.back().eta_n << "\n";
  return 0;
}

int cmd_certify(const kam::RunConfig& cfg, const fs::path& out_dir) {
  kam::Hamiltonian H = cfg.build_hamiltonian();
  kam::SeriesNorms n = H.norms();
  double theta = H.theta(n.epsilon);
  kam::Certificate cert = kam::check_initial(H.freq.C0, cfg.rho0, cfg.kappa0,
                                             cfg.J, n.epsilon, theta);
  ordered_json rep;
  rep["format_version"] = kFormatVersion;
  rep["mode"] = "certify";
  rep["eps0"] = finite(n.epsilon);
  rep["eta0"] = finite(n.epsilon * H.freq.C0);
  rep["theta0"] = finite(theta);
  rep["C0"] = finite(H.freq.C0);
  rep["certificate"] = certificate_json(cert);
  {
    ordered_json info = informational_json(cfg, n.epsilon * H.freq.C0,
                                           kam::schedule(0, cfg.kappa0).first);
    if (!info.empty()) rep["informational"] = info;
  }
  write_text(out_dir / "report.json", rep.dump(2) + "\n");
  for (const auto& c : cert.checks)
    std::cout << (c.pass ? "pass" : "FAIL") << "  " << c.name << "  (lhs "
              << c.lhs << ", rhs " << c.rhs << ")\n";
  return cert.overall ? 0 : 2;
}

int cmd_verify(const kam::RunConfig& cfg, const fs::path& out_dir) {
  kam::Hamiltonian H = cfg.build_hamiltonian();
  kam::TorusEmbedding T = load_torus(cfg, out_dir);
  int grid = std::max(cfg.verify_grid, kam::default_defect_grid(T));
  kam::DefectReport defect = kam::invariance_defect(H, T, grid);
  double flow = kam::flow_conjugacy_test(H, T, cfg.verify_t_final,
                                         cfg.verify_integrator_tol,
                                         cfg.verify_samples, cfg.seeds.front());
  ordered_json rep;
  rep["format_version"] = kFormatVersion;
  rep["mode"] = "verify";
  rep["verification"] = defect_json(defect);
  rep["flow_distance"] = finite(flow);
  write_text(out_dir / "report.json", rep.dump(2) + "\n");
  std::cout << "verify: sup defect " << defect.sup_defect << ", flow distance "
            << flow << "\n";
  return 0;
}

int cmd_oracle(const kam::RunConfig& cfg, const fs::path& out_dir) {
  kam::Hamiltonian H = cfg.build_hamiltonian();
  kam::TorusEmbedding T = kam::oracle_newton_torus(
      H, H.freq, cfg.oracle_cutoff, cfg.tol_oracle, cfg.oracle_max_iter);
  dump_torus(T, out_dir);
  int grid = std::max(cfg.verify_grid, kam::default_defect_grid(T));
  kam::DefectReport defect = kam::invariance_defect(H, T, grid);
  ordered_json rep;
  rep["format_version"] = kFormatVersion;
  rep["mode"] = "oracle";
  rep["verification"] = defect_json(defect);
  write_text(out_dir / "report.json", rep.dump(2) + "\n");
  std::cout << "oracle: sup defect " << defect.sup_defect << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kamforge: invariant tori of near-integrable Hamiltonians by "
               "iterated canonical transformations"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  int max_steps_override = -1;
  double target_eta_override = -1.0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "run configuration file")
        ->required();
    sub->add_option("--out", out_dir, "output directory");
  };
  CLI::App* c_run = app.add_subcommand("run", "full pipeline");
  add_common(c_run);
  c_run->add_option("--max-steps", max_steps_override, "cap on steps");
  c_run->add_option("--target-eta", target_eta_override, "stop threshold");
  CLI::App* c_certify = app.add_subcommand("certify", "initial gates only");
  add_common(c_certify);
  CLI::App* c_verify = app.add_subcommand("verify", "re-measure a dumped torus");
  add_common(c_verify);
  CLI::App* c_oracle = app.add_subcommand("oracle", "collocation Newton solve");
  add_common(c_oracle);

  CLI11_PARSE(app, argc, argv);

  if (const char* th = std::getenv("KAMFORGE_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(th, &end, 10);
    if (end == th || v < 1) {
      std::cerr << "error: KAMFORGE_THREADS must be a positive integer\n";
      return 1;
    }
  }

  try {
    kam::RunConfig cfg = kam::parse_config(config_path);
    if (max_steps_override >= 0) cfg.max_steps = max_steps_override;
    if (target_eta_override >= 0.0) cfg.target_eta = target_eta_override;
    fs::path dir(out_dir);
    fs::create_directories(dir);
    if (app.got_subcommand(c_run)) return cmd_run(cfg, dir);
    if (app.got_subcommand(c_certify)) return cmd_certify(cfg, dir);
    if (app.got_subcommand(c_verify)) return cmd_verify(cfg, dir);
    if (app.got_subcommand(c_oracle)) return cmd_oracle(cfg, dir);
  } catch (const kam::NotApplicable& e) {
    std::cerr << "not applicable: " << e.what() << "\n";
    return 2;
  } catch (const kam::Resonant& e) {
    std::cerr << "not applicable: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
