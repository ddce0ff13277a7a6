#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ruio/lmi.hpp"
#include "ruio/matrix.hpp"
#include "ruio/sim.hpp"
#include "ruio/uio.hpp"

namespace ruio {

struct GridSpec {
  std::vector<double> lambda_f;
  std::vector<double> lambda_j;
  std::vector<double> tau_j;
};

struct MonteCarloSpec {
  int runs = 500;
  std::uint64_t seed = 42;
  double x_inf_bound = 20.0;
};

struct ExperimentConfig {
  Matrix a, b, c, d;  // plant
  Matrix k;           // stabilizing observer gain
  Matrix y_free;      // free decoupling parameter
  GridSpec grid;
  SimConfig sim;
  MonteCarloSpec montecarlo;
  std::filesystem::path output_dir = "out";

  PlantModel plant() const;  // validates; throws ConfigError on bad matrices
};

/// Built-in demo setup: a third-order plant with two outputs, one unknown
/// disturbance channel, and a precomputed stabilizing gain (LQR-designed
/// offline with identity weights). Used whenever no config file is given.
ExperimentConfig default_config();

ExperimentConfig config_from_json(const std::string& text);
std::string config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);

struct GridRow {
  double lambda_f = 0;
  double lambda_j = 0;
  double tau_j = 0;
  bool feasible = false;
  std::string certificate_path;  // empty when infeasible
};

/// Runs the certificate synthesis over the configured scalar grid, writing
/// grid.csv plus one certificate JSON per feasible point. lambda_j values
/// above 1 are skipped. Partial results are flushed if a run throws.
std::vector<GridRow> run_grid_search(const ExperimentConfig& cfg);

struct MonteCarloSummary {
  int runs = 0;
  double mean_l2_improvement = 0;        // percent vs the non-reset observer
  double mean_settling_improvement = 0;  // percent
  // Share of runs (percent) with improvement in [0,20), [20,40), [40,60),
  // [60,80), [80,100]; runs with negative improvement count in the first.
  std::vector<double> l2_buckets;
  std::vector<double> settling_buckets;
};

/// Seeded study over random initial plant states (observer starting at
/// zero): per run, metrics of the plain observer vs the reset observer
/// under the given law. Writes montecarlo.csv and montecarlo_summary.csv.
MonteCarloSummary run_monte_carlo(const ExperimentConfig& cfg,
                                  const ResetCertificate& cert, int law);

struct ComparisonRow {
  std::string law_label;
  std::optional<double> first_reset;
  double l2 = 0;
  double settling = 0;
};

/// One run per reset law plus the no-reset baseline from the configured
/// initial condition; writes compare.csv and a trajectory dump per row.
std::vector<ComparisonRow> compare_reset_laws(const ExperimentConfig& cfg,
                                              const ResetCertificate& cert);

struct DestabDemoResult {
  Metrics wrong_rule_metrics;
  Metrics scheduled_metrics;
  bool wrong_rule_v_increased = false;   // V grew somewhere along its jump sequence
  bool wrong_rule_norm_grew = false;     // final error above 10x the initial norm
  bool wrong_rule_diverged = false;
  bool scheduled_v_monotone = false;     // V non-increasing across the jump sequence
  bool scheduled_decayed = false;        // final error below the initial norm
  int wrong_rule_jumps = 0;
  int scheduled_jumps = 0;
};

/// Second-order demo contrasting two jump policies on the same reset
/// system: firing on a fixed state crossing inside the sector (which makes
/// the error grow) versus the Lyapunov-gated scheduler (which decays).
/// Writes destab_wrong.csv, destab_scheduled.csv and destab_verdict.json.
DestabDemoResult run_destabilization_demo(
    const std::filesystem::path& out_dir);

/// Process exit code for an error, shared by the CLI surface:
/// 2 config, 3 infeasibility/validation, 4 numerical failure.
int exit_code_for(const std::exception& err);

}  // namespace ruio
