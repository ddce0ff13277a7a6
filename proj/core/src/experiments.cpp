#include "ruio/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ruio/csv.hpp"
#include "ruio/errors.hpp"
#include "ruio/rng.hpp"

namespace ruio {

namespace {

using nlohmann::json;

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j, const std::string& key) {
  if (!j.is_array() || j.empty())
    throw ConfigError("config: matrix '" + key + "' must be a non-empty array");
  const int rows = static_cast<int>(j.size());
  const int cols = static_cast<int>(j.front().size());
  Matrix out(rows, cols);
  for (int r = 0; r < rows; ++r) {
    const auto& row = j.at(r);
    if (!row.is_array() || static_cast<int>(row.size()) != cols)
      throw ConfigError("config: ragged rows in matrix '" + key + "'");
    for (int c = 0; c < cols; ++c) out(r, c) = row.at(c).get<double>();
  }
  return out;
}

json signal_to_json(const SignalSpec& s) {
  static const char* names[] = {"zero", "constant", "step", "sine", "square"};
  json j;
  j["kind"] = names[static_cast<int>(s.kind)];
  j["amplitude"] = s.amplitude;
  j["omega"] = s.omega;
  j["t_on"] = s.t_on;
  return j;
}

SignalSpec signal_from_json(const json& j) {
  SignalSpec s;
  const std::string kind = j.value("kind", "zero");
  if (kind == "zero")
    s.kind = SignalSpec::Kind::zero;
  else if (kind == "constant")
    s.kind = SignalSpec::Kind::constant;
  else if (kind == "step")
    s.kind = SignalSpec::Kind::step;
  else if (kind == "sine")
    s.kind = SignalSpec::Kind::sine;
  else if (kind == "square")
    s.kind = SignalSpec::Kind::square;
  else
    throw ConfigError("config: unknown signal kind '" + kind + "'");
  s.amplitude = j.value("amplitude", 0.0);
  s.omega = j.value("omega", 1.0);
  s.t_on = j.value("t_on", 0.0);
  return s;
}

std::string mode_name(ObserverMode mode) {
  switch (mode) {
    case ObserverMode::cuio:
      return "cuio";
    case ObserverMode::ruio_ideal:
      return "ruio_ideal";
    case ObserverMode::ruio_vertex:
      return "ruio_vertex";
  }
  return "cuio";
}

ObserverMode mode_from_name(const std::string& name) {
  if (name == "cuio") return ObserverMode::cuio;
  if (name == "ruio_ideal") return ObserverMode::ruio_ideal;
  if (name == "ruio_vertex") return ObserverMode::ruio_vertex;
  throw ConfigError("config: unknown mode '" + name + "'");
}

std::string optional_cell(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string();
}

}  // namespace

PlantModel ExperimentConfig::plant() const {
  try {
    return PlantModel(a, b, c, d);
  } catch (const Error& err) {
    throw ConfigError(std::string("config: invalid plant: ") + err.what());
  }
}

ExperimentConfig default_config() {
  ExperimentConfig cfg;
  cfg.a = {{-1, 1, 0}, {-1, 0, 0}, {0, -1, -1}};
  cfg.b = {{0}, {0}, {1}};
  cfg.c = {{1, 0, 0}, {0, 0, 1}};
  cfg.d = {{-1}, {0}, {0}};
  cfg.k = {{1.2926, 0.3638}, {-0.7654, -1.0076}, {0.3638, 0.9830}};
  cfg.y_free = {{1, 1}, {1, 1}, {1, 1}};

  for (int i = 0; i < 10; ++i) {
    cfg.grid.lambda_f.push_back(0.1 + i * 1.0);
    cfg.grid.lambda_j.push_back((i + 1) / 10.0);
    cfg.grid.tau_j.push_back(0.1 + i * 1.0);
  }

  cfg.sim.t_end = 20.0;
  cfg.sim.step = 1e-3;
  cfg.sim.event_tol = 1e-9;
  cfg.sim.epsilon = 0.01;
  cfg.sim.min_dwell = 1e-3;
  cfg.sim.mode = ObserverMode::ruio_vertex;
  cfg.sim.law = 1;
  cfg.sim.x0 = {-5.0, 0.0, 10.0};
  cfg.sim.xhat0 = {0.0, 0.0, 0.0};
  cfg.sim.vertex_bounds = {std::nullopt, Interval{-5.0, 5.0}, std::nullopt};
  cfg.sim.input_u = SignalSpec::zero();
  cfg.sim.input_v = SignalSpec::step(1.0);

  cfg.montecarlo = {500, 42, 20.0};
  cfg.output_dir = "out";
  return cfg;
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["plant"]["a"] = matrix_to_json(cfg.a);
  j["plant"]["b"] = matrix_to_json(cfg.b);
  j["plant"]["c"] = matrix_to_json(cfg.c);
  j["plant"]["d"] = matrix_to_json(cfg.d);
  j["k"] = matrix_to_json(cfg.k);
  j["y_free"] = matrix_to_json(cfg.y_free);
  j["grid"]["lambda_f"] = cfg.grid.lambda_f;
  j["grid"]["lambda_j"] = cfg.grid.lambda_j;
  j["grid"]["tau_j"] = cfg.grid.tau_j;

  json sim;
  sim["t_end"] = cfg.sim.t_end;
  sim["step"] = cfg.sim.step;
  sim["event_tol"] = cfg.sim.event_tol;
  sim["epsilon"] = cfg.sim.epsilon;
  sim["min_dwell"] = cfg.sim.min_dwell;
  sim["mode"] = mode_name(cfg.sim.mode);
  sim["law"] = cfg.sim.law;
  sim["x0"] = cfg.sim.x0;
  sim["xhat0"] = cfg.sim.xhat0;
  json bounds = json::array();
  for (const auto& b : cfg.sim.vertex_bounds) {
    if (b)
      bounds.push_back(json::array({b->lo, b->hi}));
    else
      bounds.push_back(nullptr);
  }
  sim["vertex_bounds"] = std::move(bounds);
  sim["input_u"] = signal_to_json(cfg.sim.input_u);
  sim["input_v"] = signal_to_json(cfg.sim.input_v);
  j["sim"] = std::move(sim);

  j["montecarlo"]["runs"] = cfg.montecarlo.runs;
  j["montecarlo"]["seed"] = cfg.montecarlo.seed;
  j["montecarlo"]["x_inf_bound"] = cfg.montecarlo.x_inf_bound;
  j["output_dir"] = cfg.output_dir.string();
  return j.dump(2);
}

ExperimentConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& err) {
    throw ConfigError(std::string("config: invalid JSON: ") + err.what());
  }

  ExperimentConfig cfg = default_config();
  try {
    if (j.contains("plant")) {
      const json& plant = j.at("plant");
      if (plant.contains("a")) cfg.a = matrix_from_json(plant.at("a"), "a");
      if (plant.contains("b")) cfg.b = matrix_from_json(plant.at("b"), "b");
      if (plant.contains("c")) cfg.c = matrix_from_json(plant.at("c"), "c");
      if (plant.contains("d")) cfg.d = matrix_from_json(plant.at("d"), "d");
    }
    if (j.contains("k")) cfg.k = matrix_from_json(j.at("k"), "k");
    if (j.contains("y_free"))
      cfg.y_free = matrix_from_json(j.at("y_free"), "y_free");
    if (j.contains("grid")) {
      const json& grid = j.at("grid");
      if (grid.contains("lambda_f"))
        cfg.grid.lambda_f = grid.at("lambda_f").get<std::vector<double>>();
      if (grid.contains("lambda_j"))
        cfg.grid.lambda_j = grid.at("lambda_j").get<std::vector<double>>();
      if (grid.contains("tau_j"))
        cfg.grid.tau_j = grid.at("tau_j").get<std::vector<double>>();
    }
    if (j.contains("sim")) {
      const json& sim = j.at("sim");
      SimConfig& s = cfg.sim;
      s.t_end = sim.value("t_end", s.t_end);
      s.step = sim.value("step", s.step);
      s.event_tol = sim.value("event_tol", s.event_tol);
      s.epsilon = sim.value("epsilon", s.epsilon);
      // One integration step unless stated otherwise.
      s.min_dwell = sim.value("min_dwell", s.step);
      if (sim.contains("mode")) s.mode = mode_from_name(sim.at("mode"));
      s.law = sim.value("law", s.law);
      if (sim.contains("x0")) s.x0 = sim.at("x0").get<std::vector<double>>();
      if (sim.contains("xhat0"))
        s.xhat0 = sim.at("xhat0").get<std::vector<double>>();
      if (sim.contains("vertex_bounds")) {
        s.vertex_bounds.clear();
        for (const json& b : sim.at("vertex_bounds")) {
          if (b.is_null()) {
            s.vertex_bounds.push_back(std::nullopt);
          } else {
            if (!b.is_array() || b.size() != 2)
              throw ConfigError("config: vertex bound must be [lo, hi] or null");
            s.vertex_bounds.push_back(
                Interval{b.at(0).get<double>(), b.at(1).get<double>()});
          }
        }
      }
      if (sim.contains("input_u")) s.input_u = signal_from_json(sim.at("input_u"));
      if (sim.contains("input_v")) s.input_v = signal_from_json(sim.at("input_v"));
    }
    if (j.contains("montecarlo")) {
      const json& mc = j.at("montecarlo");
      cfg.montecarlo.runs = mc.value("runs", cfg.montecarlo.runs);
      cfg.montecarlo.seed = mc.value("seed", cfg.montecarlo.seed);
      cfg.montecarlo.x_inf_bound =
          mc.value("x_inf_bound", cfg.montecarlo.x_inf_bound);
    }
    if (j.contains("output_dir"))
      cfg.output_dir = j.at("output_dir").get<std::string>();
  } catch (const json::exception& err) {
    throw ConfigError(std::string("config: mistyped field: ") + err.what());
  }

  if (cfg.montecarlo.runs < 0)
    throw ConfigError("config: montecarlo.runs must be non-negative");
  if (!(cfg.montecarlo.x_inf_bound > 0.0))
    throw ConfigError("config: montecarlo.x_inf_bound must be positive");
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return config_from_json(buffer.str());
}

std::vector<GridRow> run_grid_search(const ExperimentConfig& cfg) {
  if (cfg.grid.lambda_f.empty() || cfg.grid.lambda_j.empty() ||
      cfg.grid.tau_j.empty())
    throw ConfigError("grid: all three scalar lists must be non-empty");

  const PlantModel plant = cfg.plant();
  const CuioParams design = assemble_cuio(plant, cfg.k, cfg.y_free);
  std::filesystem::create_directories(cfg.output_dir);

  std::vector<GridRow> rows;
  auto flush = [&]() {
    std::vector<std::vector<std::string>> cells;
    cells.reserve(rows.size());
    for (const GridRow& row : rows)
      cells.push_back({format_double(row.lambda_f), format_double(row.lambda_j),
                       format_double(row.tau_j), row.feasible ? "1" : "0",
                       row.certificate_path});
    write_csv(cfg.output_dir / "grid.csv",
              {"lambda_f", "lambda_j", "tau_j", "feasible", "certificate_path"},
              cells);
  };

  try {
    int index = 0;
    for (double lf : cfg.grid.lambda_f) {
      for (double lj : cfg.grid.lambda_j) {
        if (lj > 1.0) continue;  // outside the admissible jump-contraction range
        for (double tj : cfg.grid.tau_j) {
          GridRow row{lf, lj, tj, false, ""};
          const SynthesisResult result =
              synthesize_certificate(design.m, design.n_mat, lf, lj, tj);
          if (result.feasible()) {
            row.feasible = true;
            const std::string name = "cert_" + std::to_string(index) + ".json";
            save_certificate(*result.certificate, cfg.output_dir / name);
            row.certificate_path = name;
          }
          rows.push_back(std::move(row));
          ++index;
        }
      }
    }
  } catch (...) {
    flush();  // keep whatever finished
    throw;
  }
  flush();
  return rows;
}

namespace {

int improvement_bucket(double percent) {
  const int bucket = static_cast<int>(std::floor(percent / 20.0));
  return std::clamp(bucket, 0, 4);
}

}  // namespace

MonteCarloSummary run_monte_carlo(const ExperimentConfig& cfg,
                                  const ResetCertificate& cert, int law) {
  const PlantModel plant = cfg.plant();
  const CuioParams design = assemble_cuio(plant, cfg.k, cfg.y_free);
  const int n = plant.state_dim();
  std::filesystem::create_directories(cfg.output_dir);

  SimConfig base = cfg.sim;
  base.law = law;
  base.xhat0.assign(n, 0.0);  // the study always starts the observer at zero

  SplitMix64 rng(cfg.montecarlo.seed);
  const double bound = cfg.montecarlo.x_inf_bound;

  std::vector<std::string> header = {"run"};
  for (int i = 1; i <= n; ++i) header.push_back("x0_" + std::to_string(i));
  header.insert(header.end(),
                {"l2_cuio", "settling_cuio", "l2_ruio", "settling_ruio",
                 "first_reset", "l2_improvement_pct",
                 "settling_improvement_pct"});

  std::vector<std::vector<std::string>> rows;
  MonteCarloSummary summary;
  summary.l2_buckets.assign(5, 0.0);
  summary.settling_buckets.assign(5, 0.0);

  for (int run = 0; run < cfg.montecarlo.runs; ++run) {
    SimConfig sim = base;
    sim.x0.assign(n, 0.0);
    for (int i = 0; i < n; ++i) {
      const bool bounded = !sim.vertex_bounds.empty() &&
                           static_cast<bool>(sim.vertex_bounds[i]);
      if (bounded) {
        // Unmeasured component: draw the initial error inside its declared
        // bound, then back out the plant state.
        const double e0 =
            rng.uniform(sim.vertex_bounds[i]->lo, sim.vertex_bounds[i]->hi);
        sim.x0[i] = sim.xhat0[i] - e0;
      } else {
        sim.x0[i] = rng.uniform(-bound, bound);
      }
    }

    SimConfig cuio_cfg = sim;
    cuio_cfg.mode = ObserverMode::cuio;
    const Metrics plain = compute_metrics(
        run_simulation(plant, design, cert, cuio_cfg));

    SimConfig reset_cfg = sim;
    reset_cfg.mode = ObserverMode::ruio_vertex;
    const HybridTrajectory reset_traj =
        run_simulation(plant, design, cert, reset_cfg);
    const Metrics reset = compute_metrics(reset_traj);

    const double l2_imp =
        plain.l2 > 0 ? 100.0 * (plain.l2 - reset.l2) / plain.l2 : 0.0;
    const double stl_imp =
        plain.settling > 0
            ? 100.0 * (plain.settling - reset.settling) / plain.settling
            : 0.0;

    summary.mean_l2_improvement += l2_imp;
    summary.mean_settling_improvement += stl_imp;
    summary.l2_buckets[improvement_bucket(l2_imp)] += 1.0;
    summary.settling_buckets[improvement_bucket(stl_imp)] += 1.0;

    std::vector<std::string> row = {std::to_string(run)};
    for (double x : sim.x0) row.push_back(format_double(x));
    row.push_back(format_double(plain.l2));
    row.push_back(format_double(plain.settling));
    row.push_back(format_double(reset.l2));
    row.push_back(format_double(reset.settling));
    row.push_back(optional_cell(reset.first_reset));
    row.push_back(format_double(l2_imp));
    row.push_back(format_double(stl_imp));
    rows.push_back(std::move(row));
  }

  summary.runs = cfg.montecarlo.runs;
  if (summary.runs > 0) {
    summary.mean_l2_improvement /= summary.runs;
    summary.mean_settling_improvement /= summary.runs;
    for (double& b : summary.l2_buckets) b = 100.0 * b / summary.runs;
    for (double& b : summary.settling_buckets) b = 100.0 * b / summary.runs;
  }

  write_csv(cfg.output_dir / "montecarlo.csv", header, rows);

  std::vector<std::vector<std::string>> summary_rows;
  auto summary_row = [&](const std::string& metric, double mean,
                         const std::vector<double>& buckets) {
    std::vector<std::string> row = {metric, format_double(mean)};
    for (double b : buckets) row.push_back(format_double(b));
    summary_rows.push_back(std::move(row));
  };
  if (summary.runs > 0) {
    summary_row("l2", summary.mean_l2_improvement, summary.l2_buckets);
    summary_row("settling", summary.mean_settling_improvement,
                summary.settling_buckets);
  }
  write_csv(cfg.output_dir / "montecarlo_summary.csv",
            {"metric", "mean_improvement_pct", "bucket_0_20", "bucket_20_40",
             "bucket_40_60", "bucket_60_80", "bucket_80_100"},
            summary_rows);
  return summary;
}

std::vector<ComparisonRow> compare_reset_laws(const ExperimentConfig& cfg,
                                              const ResetCertificate& cert) {
  const PlantModel plant = cfg.plant();
  const CuioParams design = assemble_cuio(plant, cfg.k, cfg.y_free);
  std::filesystem::create_directories(cfg.output_dir);

  std::vector<ComparisonRow> rows;
  auto run_one = [&](const std::string& label, ObserverMode mode, int law) {
    SimConfig sim = cfg.sim;
    sim.mode = mode;
    if (mode == ObserverMode::ruio_vertex) sim.law = law;
    const HybridTrajectory traj = run_simulation(plant, design, cert, sim);
    write_trajectory_csv(traj,
                         cfg.output_dir / ("compare_traj_" + label + ".csv"));
    const Metrics metrics = compute_metrics(traj);
    rows.push_back({label, metrics.first_reset, metrics.l2, metrics.settling});
  };

  run_one("cuio", ObserverMode::cuio, 0);
  for (int law = 1; law <= 4; ++law)
    run_one("law" + std::to_string(law), ObserverMode::ruio_vertex, law);

  std::vector<std::vector<std::string>> cells;
  for (const ComparisonRow& row : rows)
    cells.push_back({row.law_label, optional_cell(row.first_reset),
                     format_double(row.l2), format_double(row.settling)});
  write_csv(cfg.output_dir / "compare.csv",
            {"law", "first_reset", "l2", "settling"}, cells);
  return rows;
}

namespace {

/// V values at the jump instants, interleaved pre/post.
std::vector<double> jump_v_sequence(const HybridTrajectory& traj,
                                    const Matrix& p) {
  std::vector<double> seq;
  for (const JumpRecord& jump : traj.jumps) {
    seq.push_back(lyapunov_value(p, jump.e_pre));
    seq.push_back(lyapunov_value(p, jump.e_post));
  }
  return seq;
}

double norm2(const std::vector<double>& v) {
  double acc = 0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

}  // namespace

DestabDemoResult run_destabilization_demo(
    const std::filesystem::path& out_dir) {
  // Lightly damped rotation with a jump map that amplifies one axis.
  // Firing on |e2| = 0 inside the sector keeps feeding the amplified
  // direction; the scheduler instead waits for the Lyapunov decrease.
  const Matrix n_mat = {{-0.1, 1.0}, {-1.0, -0.1}};
  const Matrix h_map = {{0.0, 0.4}, {-2.0, 0.0}};
  // Sector stated in the convention "jump where e'Fe <= 0".
  const Matrix f = {{0.0, -1.0}, {-1.0, 0.0}};
  const Matrix p = {{1.3296, 0.0}, {0.0, 0.2924}};
  const std::vector<double> e0 = {-15.0, 10.0};

  std::filesystem::create_directories(out_dir);

  ErrorSimConfig wrong_cfg;
  wrong_cfg.rule = ResetRule::state_crossing;
  wrong_cfg.crossing_state = 1;
  const HybridTrajectory wrong =
      run_error_simulation(n_mat, h_map, f, p, e0, wrong_cfg);
  write_trajectory_csv(wrong, out_dir / "destab_wrong.csv");

  ErrorSimConfig sched_cfg;
  sched_cfg.rule = ResetRule::scheduler;
  sched_cfg.epsilon = 0.01;
  const HybridTrajectory scheduled =
      run_error_simulation(n_mat, h_map, f, p, e0, sched_cfg);
  write_trajectory_csv(scheduled, out_dir / "destab_scheduled.csv");

  DestabDemoResult result;
  result.wrong_rule_metrics = compute_metrics(wrong);
  result.scheduled_metrics = compute_metrics(scheduled);
  result.wrong_rule_jumps = static_cast<int>(wrong.jumps.size());
  result.scheduled_jumps = static_cast<int>(scheduled.jumps.size());
  result.wrong_rule_diverged = wrong.diverged;

  const std::vector<double> wrong_seq = jump_v_sequence(wrong, p);
  for (std::size_t i = 0; i + 1 < wrong_seq.size(); ++i)
    if (wrong_seq[i + 1] > wrong_seq[i] + 1e-9)
      result.wrong_rule_v_increased = true;

  const std::vector<double> sched_seq = jump_v_sequence(scheduled, p);
  result.scheduled_v_monotone = true;
  for (std::size_t i = 0; i + 1 < sched_seq.size(); ++i)
    if (sched_seq[i + 1] > sched_seq[i] + 1e-9)
      result.scheduled_v_monotone = false;

  const double initial_norm = norm2(e0);
  result.wrong_rule_norm_grew =
      wrong.diverged ||
      norm2(wrong.samples.back().e) > 10.0 * initial_norm;
  result.scheduled_decayed =
      !scheduled.diverged &&
      norm2(scheduled.samples.back().e) < initial_norm;

  json verdict;
  verdict["wrong_rule_v_increased"] = result.wrong_rule_v_increased;
  verdict["wrong_rule_norm_grew"] = result.wrong_rule_norm_grew;
  verdict["wrong_rule_diverged"] = result.wrong_rule_diverged;
  verdict["wrong_rule_jumps"] = result.wrong_rule_jumps;
  verdict["scheduled_v_monotone"] = result.scheduled_v_monotone;
  verdict["scheduled_decayed"] = result.scheduled_decayed;
  verdict["scheduled_jumps"] = result.scheduled_jumps;
  std::ofstream out(out_dir / "destab_verdict.json");
  out << verdict.dump(2) << '\n';
  return result;
}

int exit_code_for(const std::exception& err) {
  if (dynamic_cast<const ConfigError*>(&err) ||
      dynamic_cast<const DimensionMismatch*>(&err))
    return 2;
  if (dynamic_cast<const RankCondition*>(&err) ||
      dynamic_cast<const NotStabilizing*>(&err) ||
      dynamic_cast<const Infeasible*>(&err) ||
      dynamic_cast<const RankDeficient*>(&err))
    return 3;
  if (dynamic_cast<const Error*>(&err)) return 4;
  return 4;
}

}  // namespace ruio
