#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "ruio/lmi.hpp"
#include "ruio/matrix.hpp"
#include "ruio/uio.hpp"

namespace ruio {

/// Scalar input signal, broadcast over all channels of u or v.
struct SignalSpec {
  enum class Kind { zero, constant, step, sine, square };
  Kind kind = Kind::zero;
  double amplitude = 0.0;
  double omega = 1.0;  // rad/s, sine and square
  double t_on = 0.0;   // step onset

  double eval(double t) const;

  static SignalSpec zero() { return {}; }
  static SignalSpec constant(double amplitude);
  static SignalSpec step(double amplitude, double t_on = 0.0);
  static SignalSpec sine(double amplitude, double omega = 1.0);
  static SignalSpec square(double amplitude, double omega = 1.0);
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

enum class ObserverMode { cuio, ruio_ideal, ruio_vertex };

struct SimConfig {
  double t_end = 20.0;
  double step = 1e-3;       // fixed RK4 step
  double event_tol = 1e-9;  // bisection width for sector crossings
  double epsilon = 0.01;    // required Lyapunov decrease before a jump
  double min_dwell = 1e-3;  // minimum spacing between jumps (Zeno guard)
  ObserverMode mode = ObserverMode::ruio_vertex;
  int law = 1;
  std::vector<double> x0;
  std::vector<double> xhat0;
  /// Per-state interval on the initial estimation error; set only on
  /// unmeasured states. Bounded states contribute vertex trajectories.
  std::vector<std::optional<Interval>> vertex_bounds;
  SignalSpec input_u;
  SignalSpec input_v = SignalSpec::step(1.0);

  void validate(int state_dim) const;  // throws ConfigError
};

/// e'Fe: <= 0 means e lies in the jump sector, >= 0 in the flow set.
double sector_value(const Matrix& f, std::span<const double> e);

/// e'Pe, the Lyapunov value of an error sample.
double lyapunov_value(const Matrix& p, std::span<const double> e);

/// Sector-membership part of the jump trigger for the four reset laws,
/// evaluated on the vertex trajectories. jump_index is 1 for the first
/// prospective jump of a run. The scheduler conjoins this predicate with
/// the per-trajectory Lyapunov-decrease condition and the dwell guard.
bool reset_law_fires(int law, const std::vector<std::vector<double>>& vertices,
                     const Matrix& f, double t, int jump_index);

/// Observer state reset Z+ = (M - A_R E C) Z - (I - A_R) M E y; the induced
/// estimate is xhat+ = Z+ - E y and the error maps through H.
std::vector<double> apply_jump(const CuioParams& cuio,
                               const ResetCertificate& cert,
                               std::span<const double> z,
                               std::span<const double> y);

/// Vertex error trajectories spanning the initial-error uncertainty box,
/// plus convex weights reconstructing e(0).
struct VertexBundle {
  std::vector<std::vector<double>> vertices;
  std::vector<double> weights;
};

VertexBundle make_vertex_bundle(
    std::span<const double> e0,
    const std::vector<std::optional<Interval>>& bounds);

struct TrajectorySample {
  double t = 0.0;
  std::vector<double> x;
  std::vector<double> z;
  std::vector<double> xhat;
  std::vector<double> e;
  double sector_min = 0.0;  // min sector value over tracked trajectories
  double v_lyap = 0.0;      // e'Pe of the true error
  bool post_jump = false;
  std::vector<std::vector<double>> vertices;  // vertex mode only
};

/// Firing conditions of one tracked trajectory, captured at the jump.
struct JumpCondition {
  double tau_latched = 0.0;
  double v_latched = 0.0;
  double v_pre = 0.0;
  double sector_pre = 0.0;
};

struct JumpRecord {
  double t = 0.0;
  int law_id = 0;  // 0 when the ideal sector rule fired
  double tau_latched = 0.0;  // latest latch among tracked trajectories
  std::vector<double> e_pre, e_post;
  std::vector<double> z_pre, z_post;
  std::vector<std::vector<double>> vertices_pre, vertices_post;
  std::vector<JumpCondition> conditions;
};

struct HybridTrajectory {
  std::vector<TrajectorySample> samples;
  std::vector<JumpRecord> jumps;
  std::vector<double> vertex_weights;
  bool diverged = false;  // integration left the finite range; truncated

  std::vector<double> reset_times() const;
};

/// Integrates plant and observer with fixed-step RK4, refines sector
/// crossings by bisection, and fires jumps under the scheduler: sector
/// membership per mode/law, V below (1 - epsilon) of its latched
/// sector-entry value on every tracked trajectory, and the dwell guard.
HybridTrajectory run_simulation(const PlantModel& plant,
                                const CuioParams& cuio,
                                const ResetCertificate& cert,
                                const SimConfig& cfg);

/// Jump decision rule for the standalone error simulation.
enum class ResetRule {
  scheduler,       // sector membership + Lyapunov decrease + dwell
  state_crossing,  // sector membership + a chosen error component crossing 0
};

struct ErrorSimConfig {
  double t_end = 20.0;
  double step = 1e-3;
  double event_tol = 1e-9;
  double epsilon = 0.01;
  double min_dwell = 1e-3;
  ResetRule rule = ResetRule::scheduler;
  int crossing_state = 1;  // watched component for state_crossing
};

/// Simulates the bare error dynamics e' = N e with jumps e+ = H e.
HybridTrajectory run_error_simulation(const Matrix& n_mat,
                                      const Matrix& h_map, const Matrix& f,
                                      const Matrix& p,
                                      std::span<const double> e0,
                                      const ErrorSimConfig& cfg);

struct Metrics {
  double l2 = 0.0;        // sqrt of the time integral of e'e
  double settling = 0.0;  // 2% settling time, horizon end when never settled
  std::optional<double> first_reset;
};

Metrics compute_metrics(const HybridTrajectory& traj);

/// Header t,x1..xn,xhat1..xhatn,e1..en,sector_min,V,jump; the state columns
/// are omitted for error-only trajectories. jump flags post-jump samples.
void write_trajectory_csv(const HybridTrajectory& traj,
                          const std::filesystem::path& path);

}  // namespace ruio
