// Command-line front end: observer design, certificate synthesis and
// validation, hybrid simulation runs, and the batch experiments.
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "ruio/csv.hpp"
#include "ruio/errors.hpp"
#include "ruio/experiments.hpp"
#include "ruio/lmi.hpp"
#include "ruio/sim.hpp"
#include "ruio/uio.hpp"

namespace {

using ruio::ExperimentConfig;
using ruio::Matrix;
using ruio::ResetCertificate;

nlohmann::json matrix_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

ExperimentConfig resolve_config(const std::string& config_path) {
  if (config_path.empty()) return ruio::default_config();
  return ruio::load_config(config_path);
}

/// Loads a certificate and rebuilds its reset maps against the design, or
/// synthesizes one at the given scalars when no file was supplied.
ResetCertificate resolve_certificate(const std::string& cert_path,
                                     const ruio::CuioParams& design,
                                     double lambda_f, double lambda_j,
                                     double tau_j) {
  if (!cert_path.empty()) {
    ResetCertificate cert = ruio::load_certificate(cert_path);
    const ruio::ResetMaps maps = ruio::derive_reset_maps(design.m, cert);
    cert.a_r = maps.a_r;
    cert.h = maps.h;
    return cert;
  }
  std::cout << "no certificate given; synthesizing at (" << lambda_f << ", "
            << lambda_j << ", " << tau_j << ")\n";
  const ruio::SynthesisResult result = ruio::synthesize_certificate(
      design.m, design.n_mat, lambda_f, lambda_j, tau_j);
  if (!result.feasible())
    throw ruio::Infeasible("synthesis infeasible at the requested scalars");
  return *result.certificate;
}

/// Placeholder certificate so plain-observer runs can still report sector
/// and Lyapunov columns (F = 0, P = I).
ResetCertificate neutral_certificate(int n) {
  ResetCertificate cert;
  cert.p = Matrix::identity(n);
  cert.f = Matrix(n, n);
  cert.q = Matrix(n, n);
  cert.a_r = Matrix(n, n);
  cert.h = Matrix(n, n);
  cert.lambda_f = 1.0;
  cert.lambda_j = 1.0;
  cert.tau_j = 1.0;
  return cert;
}

int run(int argc, char** argv) {
  CLI::App app{"Unknown-input observer design with reset-based transients"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "experiment configuration JSON");

  std::string out_override;
  std::string cert_path;
  std::string mode_name;
  int law = 0;
  std::uint64_t seed = 0;
  bool seed_set = false;
  double lambda_f = 1.1, lambda_j = 0.8, tau_j = 1.0;

  auto add_common = [&](CLI::App* cmd, bool with_cert) {
    cmd->add_option("--out", out_override, "output directory override");
    if (with_cert)
      cmd->add_option("--cert", cert_path, "certificate JSON to use");
  };

  CLI::App* design = app.add_subcommand(
      "design", "compute the observer parameters and write them as JSON");
  add_common(design, false);

  CLI::App* certify = app.add_subcommand(
      "certify", "synthesize a certificate, or validate one given via --cert");
  add_common(certify, true);
  certify->add_option("--lambda-f", lambda_f, "flow decay rate");
  certify->add_option("--lambda-j", lambda_j, "jump contraction factor");
  certify->add_option("--tau-j", tau_j, "jump sector multiplier");

  CLI::App* simulate =
      app.add_subcommand("simulate", "one run, dumped as a trajectory CSV");
  add_common(simulate, true);
  simulate->add_option("--mode", mode_name, "cuio | ruio_ideal | ruio_vertex");
  simulate->add_option("--law", law, "reset law 1..4");

  CLI::App* grid = app.add_subcommand(
      "grid", "certificate synthesis over the configured scalar grid");
  add_common(grid, false);

  CLI::App* montecarlo = app.add_subcommand(
      "montecarlo", "seeded study of reset-vs-plain observer metrics");
  add_common(montecarlo, true);
  montecarlo->add_option("--law", law, "reset law 1..4");
  montecarlo->add_option("--seed", seed, "RNG seed override")
      ->each([&](const std::string&) { seed_set = true; });

  CLI::App* compare = app.add_subcommand(
      "compare", "all four reset laws against the plain observer");
  add_common(compare, true);

  CLI::App* destab = app.add_subcommand(
      "destab-demo", "jump-timing demo: naive crossing rule vs the scheduler");
  add_common(destab, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // bad arguments are configuration errors
  }

  ExperimentConfig cfg = resolve_config(config_path);
  if (!out_override.empty()) cfg.output_dir = out_override;

  if (destab->parsed()) {
    const ruio::DestabDemoResult result =
        ruio::run_destabilization_demo(cfg.output_dir);
    std::cout << "wrong rule:   jumps=" << result.wrong_rule_jumps
              << " V increased along jump sequence="
              << (result.wrong_rule_v_increased ? "yes" : "no")
              << " error grew 10x=" << (result.wrong_rule_norm_grew ? "yes" : "no")
              << (result.wrong_rule_diverged ? " (diverged)" : "") << "\n";
    std::cout << "scheduler:    jumps=" << result.scheduled_jumps
              << " V monotone=" << (result.scheduled_v_monotone ? "yes" : "no")
              << " decayed=" << (result.scheduled_decayed ? "yes" : "no")
              << "\n";
    std::cout << "wrote " << (cfg.output_dir / "destab_wrong.csv").string()
              << ", " << (cfg.output_dir / "destab_scheduled.csv").string()
              << "\n";
    return 0;
  }

  const ruio::PlantModel plant = cfg.plant();
  const ruio::CuioParams params =
      ruio::assemble_cuio(plant, cfg.k, cfg.y_free);

  if (design->parsed()) {
    nlohmann::json j;
    j["N"] = matrix_json(params.n_mat);
    j["G"] = matrix_json(params.g);
    j["L"] = matrix_json(params.l);
    j["E"] = matrix_json(params.e);
    j["M"] = matrix_json(params.m);
    j["K"] = matrix_json(params.k);
    j["Y"] = matrix_json(params.y);
    const auto path = cfg.output_dir / "design.json";
    std::ofstream out(path);
    out << j.dump(2) << '\n';
    std::cout << "decoupling residual max|MD| = "
              << ruio::max_abs(params.m * plant.d) << "\n";
    std::cout << "wrote " << path.string() << "\n";
    return 0;
  }

  if (certify->parsed()) {
    if (!cert_path.empty()) {
      ResetCertificate cert = ruio::load_certificate(cert_path);
      const ruio::LmiReport report =
          ruio::validate_certificate(params.m, params.n_mat, cert, 1e-6);
      std::cout << "margins: flow=" << report.margin_flow
                << " jump=" << report.margin_jump << " P=" << report.margin_p
                << " -> " << (report.feasible ? "feasible" : "infeasible")
                << "\n";
      if (!report.feasible) throw ruio::Infeasible("certificate failed validation");
      return 0;
    }
    const ruio::SynthesisResult result = ruio::synthesize_certificate(
        params.m, params.n_mat, lambda_f, lambda_j, tau_j);
    if (!result.feasible()) {
      std::cout << "infeasible after " << result.iterations
                << " iterations (residual " << result.residual << ")\n";
      throw ruio::Infeasible("synthesis infeasible at the requested scalars");
    }
    const auto path = cfg.output_dir / "certificate.json";
    ruio::save_certificate(*result.certificate, path);
    std::cout << "converged in " << result.iterations << " iterations";
    if (result.certificate->tau_w)
      std::cout << "; after-jump sector exit holds at tau_w = "
                << *result.certificate->tau_w;
    std::cout << "\nwrote " << path.string() << "\n";
    return 0;
  }

  if (simulate->parsed()) {
    ruio::SimConfig sim = cfg.sim;
    if (!mode_name.empty()) {
      if (mode_name == "cuio")
        sim.mode = ruio::ObserverMode::cuio;
      else if (mode_name == "ruio_ideal")
        sim.mode = ruio::ObserverMode::ruio_ideal;
      else if (mode_name == "ruio_vertex")
        sim.mode = ruio::ObserverMode::ruio_vertex;
      else
        throw ruio::ConfigError("unknown mode '" + mode_name + "'");
    }
    if (law != 0) sim.law = law;

    ResetCertificate cert;
    if (sim.mode == ruio::ObserverMode::cuio && cert_path.empty()) {
      cert = neutral_certificate(plant.state_dim());
    } else {
      cert = resolve_certificate(cert_path, params, lambda_f, lambda_j, tau_j);
    }
    const ruio::HybridTrajectory traj =
        ruio::run_simulation(plant, params, cert, sim);
    const auto path = cfg.output_dir / "trajectory.csv";
    ruio::write_trajectory_csv(traj, path);
    const ruio::Metrics metrics = ruio::compute_metrics(traj);
    std::cout << "l2=" << metrics.l2 << " settling=" << metrics.settling;
    if (metrics.first_reset) std::cout << " first_reset=" << *metrics.first_reset;
    if (traj.diverged) std::cout << " (diverged)";
    std::cout << "\nwrote " << path.string() << "\n";
    return 0;
  }

  if (grid->parsed()) {
    const std::vector<ruio::GridRow> rows = ruio::run_grid_search(cfg);
    int feasible = 0;
    for (const auto& row : rows) feasible += row.feasible ? 1 : 0;
    std::cout << feasible << " feasible of " << rows.size() << " grid points\n";
    std::cout << "wrote " << (cfg.output_dir / "grid.csv").string() << "\n";
    return 0;
  }

  if (montecarlo->parsed()) {
    if (seed_set) cfg.montecarlo.seed = seed;
    const int use_law = law != 0 ? law : cfg.sim.law;
    const ResetCertificate cert =
        resolve_certificate(cert_path, params, lambda_f, lambda_j, tau_j);
    const ruio::MonteCarloSummary summary =
        ruio::run_monte_carlo(cfg, cert, use_law);
    std::cout << summary.runs << " runs, law " << use_law
              << ": mean improvement l2=" << summary.mean_l2_improvement
              << "% settling=" << summary.mean_settling_improvement << "%\n";
    std::cout << "wrote " << (cfg.output_dir / "montecarlo.csv").string()
              << "\n";
    return 0;
  }

  if (compare->parsed()) {
    const ResetCertificate cert =
        resolve_certificate(cert_path, params, lambda_f, lambda_j, tau_j);
    const std::vector<ruio::ComparisonRow> rows =
        ruio::compare_reset_laws(cfg, cert);
    std::printf("%-6s %12s %12s %12s\n", "law", "first_reset", "l2",
                "settling");
    for (const auto& row : rows) {
      std::printf("%-6s %12s %12.4f %12.4f\n", row.law_label.c_str(),
                  row.first_reset ? ruio::format_double(*row.first_reset).c_str()
                                  : "-",
                  row.l2, row.settling);
    }
    std::cout << "wrote " << (cfg.output_dir / "compare.csv").string() << "\n";
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return ruio::exit_code_for(err);
  }
}
