#include "ruio/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>

#include "ruio/csv.hpp"
#include "ruio/errors.hpp"

namespace ruio {

double SignalSpec::eval(double t) const {
  switch (kind) {
    case Kind::zero:
      return 0.0;
    case Kind::constant:
      return amplitude;
    case Kind::step:
      return t >= t_on ? amplitude : 0.0;
    case Kind::sine:
      return amplitude * std::sin(omega * t);
    case Kind::square:
      return std::sin(omega * t) >= 0.0 ? amplitude : -amplitude;
  }
  return 0.0;
}

SignalSpec SignalSpec::constant(double amplitude) {
  return {Kind::constant, amplitude, 1.0, 0.0};
}
SignalSpec SignalSpec::step(double amplitude, double t_on) {
  return {Kind::step, amplitude, 1.0, t_on};
}
SignalSpec SignalSpec::sine(double amplitude, double omega) {
  return {Kind::sine, amplitude, omega, 0.0};
}
SignalSpec SignalSpec::square(double amplitude, double omega) {
  return {Kind::square, amplitude, omega, 0.0};
}

void SimConfig::validate(int state_dim) const {
  if (!(t_end > 0.0)) throw ConfigError("sim: t_end must be positive");
  if (!(step > 0.0)) throw ConfigError("sim: step must be positive");
  if (!(event_tol > 0.0) || event_tol > step)
    throw ConfigError("sim: event_tol must lie in (0, step]");
  if (!(epsilon > 0.0 && epsilon < 1.0))
    throw ConfigError("sim: epsilon must lie in (0, 1)");
  if (!(min_dwell > 0.0)) throw ConfigError("sim: min_dwell must be positive");
  if (law < 1 || law > 4) throw ConfigError("sim: law must be 1..4");
  if (static_cast<int>(x0.size()) != state_dim)
    throw ConfigError("sim: x0 size does not match the plant");
  if (static_cast<int>(xhat0.size()) != state_dim)
    throw ConfigError("sim: xhat0 size does not match the plant");
  if (!vertex_bounds.empty() &&
      static_cast<int>(vertex_bounds.size()) != state_dim)
    throw ConfigError("sim: vertex_bounds size does not match the plant");
  for (const auto& bound : vertex_bounds)
    if (bound && !(bound->lo <= bound->hi))
      throw ConfigError("sim: vertex bound with lo > hi");
}

double sector_value(const Matrix& f, std::span<const double> e) {
  if (f.rows() != f.cols() || f.rows() != static_cast<int>(e.size()))
    throw DimensionMismatch("sector_value: dimension mismatch");
  double acc = 0.0;
  for (int i = 0; i < f.rows(); ++i) {
    double row = 0.0;
    for (int j = 0; j < f.cols(); ++j) row += f(i, j) * e[j];
    acc += e[i] * row;
  }
  return acc;
}

double lyapunov_value(const Matrix& p, std::span<const double> e) {
  return sector_value(p, e);
}

namespace {

double stacked_norm(const std::vector<std::vector<double>>& vertices) {
  double acc = 0.0;
  for (const auto& v : vertices)
    for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

}  // namespace

bool reset_law_fires(int law, const std::vector<std::vector<double>>& vertices,
                     const Matrix& f, double t, int jump_index) {
  if (vertices.empty())
    throw ConfigError("reset_law_fires: at least one vertex required");
  double max_sector = -std::numeric_limits<double>::infinity();
  double sum_sector = 0.0;
  for (const auto& v : vertices) {
    const double s = sector_value(f, v);
    max_sector = std::max(max_sector, s);
    sum_sector += s;
  }
  switch (law) {
    case 1:
      return max_sector < 0.0;
    case 2:
      return sum_sector < 0.0;
    case 3:
      return max_sector < stacked_norm(vertices) * std::exp(-t);
    case 4:
      return sum_sector < (jump_index == 1 ? stacked_norm(vertices) : 0.0);
    default:
      throw ConfigError("reset_law_fires: law must be 1..4");
  }
}

std::vector<double> apply_jump(const CuioParams& cuio,
                               const ResetCertificate& cert,
                               std::span<const double> z,
                               std::span<const double> y) {
  const int n = cuio.m.rows();
  const int p = cuio.e.cols();
  if (static_cast<int>(z.size()) != n || static_cast<int>(y.size()) != p ||
      cert.a_r.rows() != n || cert.a_r.cols() != n)
    throw DimensionMismatch("apply_jump: dimension mismatch");
  // Z+ = (M - A_R E C) Z - (I - A_R) M E y. C is not stored in CuioParams;
  // E C = M - I recovers the product without threading the plant through.
  const Matrix ec = cuio.m - Matrix::identity(n);
  const Matrix z_map = cuio.m - cert.a_r * ec;
  const Matrix y_map =
      (Matrix::identity(n) - cert.a_r) * cuio.m * cuio.e;
  std::vector<double> z_plus(n, 0.0);
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int j = 0; j < n; ++j) acc += z_map(i, j) * z[j];
    for (int j = 0; j < p; ++j) acc -= y_map(i, j) * y[j];
    z_plus[i] = acc;
  }
  return z_plus;
}

VertexBundle make_vertex_bundle(
    std::span<const double> e0,
    const std::vector<std::optional<Interval>>& bounds) {
  const int n = static_cast<int>(e0.size());
  std::vector<int> box_dims;
  for (int i = 0; i < n; ++i) {
    if (bounds.empty() || !bounds[i]) continue;
    if (e0[i] < bounds[i]->lo || e0[i] > bounds[i]->hi)
      throw ConfigError("vertex bound on state " + std::to_string(i + 1) +
                        " does not cover the initial error");
    if (bounds[i]->hi > bounds[i]->lo) box_dims.push_back(i);
  }
  if (box_dims.size() > 6)
    throw ConfigError("vertex bundle: more than 64 vertices requested");

  VertexBundle bundle;
  const int count = 1 << box_dims.size();
  bundle.vertices.assign(count, std::vector<double>(e0.begin(), e0.end()));
  bundle.weights.assign(count, 1.0);
  for (int v = 0; v < count; ++v) {
    for (std::size_t b = 0; b < box_dims.size(); ++b) {
      const int dim = box_dims[b];
      const Interval& box = *bounds[dim];
      const bool high = (v >> b) & 1;
      bundle.vertices[v][dim] = high ? box.hi : box.lo;
      bundle.weights[v] *= (high ? (e0[dim] - box.lo) : (box.hi - e0[dim])) /
                           (box.hi - box.lo);
    }
  }
  return bundle;
}

std::vector<double> HybridTrajectory::reset_times() const {
  std::vector<double> times;
  times.reserve(jumps.size());
  for (const JumpRecord& jump : jumps) times.push_back(jump.t);
  return times;
}

namespace {

constexpr double kDivergenceLimit = 1e100;

struct Rk4Scratch {
  std::vector<double> k1, k2, k3, k4, stage;
  void resize(std::size_t n) {
    k1.assign(n, 0.0);
    k2.assign(n, 0.0);
    k3.assign(n, 0.0);
    k4.assign(n, 0.0);
    stage.assign(n, 0.0);
  }
};

template <typename Deriv>
void rk4_step(Deriv&& deriv, double t, const std::vector<double>& s, double h,
              std::vector<double>& out, Rk4Scratch& scr) {
  const std::size_t n = s.size();
  deriv(t, s, scr.k1);
  for (std::size_t i = 0; i < n; ++i) scr.stage[i] = s[i] + 0.5 * h * scr.k1[i];
  deriv(t + 0.5 * h, scr.stage, scr.k2);
  for (std::size_t i = 0; i < n; ++i) scr.stage[i] = s[i] + 0.5 * h * scr.k2[i];
  deriv(t + 0.5 * h, scr.stage, scr.k3);
  for (std::size_t i = 0; i < n; ++i) scr.stage[i] = s[i] + h * scr.k3[i];
  deriv(t + h, scr.stage, scr.k4);
  out.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = s[i] + (h / 6.0) * (scr.k1[i] + 2.0 * scr.k2[i] +
                                 2.0 * scr.k3[i] + scr.k4[i]);
}

bool state_in_range(const std::vector<double>& s) {
  for (double v : s)
    if (!std::isfinite(v) || std::abs(v) > kDivergenceLimit) return false;
  return true;
}

/// Bisects a single RK4 substep of size theta in (0, h] from a base state
/// until the bracket is narrower than tol. `crossed` evaluates the event
/// condition on the integrated state; it must be false at theta = 0 and
/// true at theta = h. Returns the bracket [lo, hi].
template <typename Deriv, typename Crossed>
std::pair<double, double> refine_crossing(Deriv&& deriv, double t0,
                                          const std::vector<double>& base,
                                          double h, double tol,
                                          Crossed&& crossed, Rk4Scratch& scr,
                                          std::vector<double>& probe) {
  double lo = 0.0;
  double hi = h;
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    rk4_step(deriv, t0, base, mid, probe, scr);
    if (crossed(probe))
      hi = mid;
    else
      lo = mid;
  }
  return {lo, hi};
}

/// Latching state of the Lyapunov-gated scheduler: each tracked trajectory
/// remembers the first time it entered the jump sector after the last jump
/// and the Lyapunov value there.
struct SectorScheduler {
  struct Latch {
    bool armed = false;
    double tau = 0.0;
    double v = 0.0;
  };

  double epsilon = 0.01;
  double min_dwell = 1e-3;
  std::vector<Latch> latches;
  double last_jump = -std::numeric_limits<double>::infinity();
  int jump_count = 0;

  void reset(int tracked) { latches.assign(tracked, Latch{}); }

  /// Arms the latch when the trajectory sits in the closed sector with a
  /// strictly positive Lyapunov value. A trajectory at the origin never
  /// arms, so the zero solution produces no jumps.
  void arm_if_entered(int i, double t, double sector, double v) {
    if (latches[i].armed || sector > 0.0 || v <= 0.0) return;
    latches[i] = {true, t, v};
  }

  bool decrease_ok(int i, double v) const {
    return latches[i].armed && v <= (1.0 - epsilon) * latches[i].v;
  }

  bool dwell_ok(double t) const { return t - last_jump >= min_dwell; }

  void on_jump(double t) {
    last_jump = t;
    ++jump_count;
    for (Latch& latch : latches) latch = Latch{};
  }
};

/// Shared main loop for both simulators. The Model supplies the flow,
/// tracked-error extraction, the firing predicate, and the jump action.
template <typename Model>
HybridTrajectory integrate_hybrid(Model& model, double t_end, double step,
                                  double event_tol) {
  HybridTrajectory traj;
  std::vector<double> state = model.initial_state();
  Rk4Scratch scr;
  scr.resize(state.size());
  std::vector<double> next(state.size());
  std::vector<double> probe(state.size());

  double t = 0.0;
  model.arm_all(t, state);
  model.record_sample(traj, t, state, false);

  auto deriv = [&model](double tt, const std::vector<double>& s,
                        std::vector<double>& ds) { model.flow(tt, s, ds); };

  while (t_end - t > 1e-12) {
    const double h = std::min(step, t_end - t);
    if (h < 1e-12) break;
    rk4_step(deriv, t, state, h, next, scr);
    if (!state_in_range(next)) {
      traj.diverged = true;
      break;
    }

    bool jumped = false;
    if (model.jumps_enabled()) {
      const auto events = model.detect_events(t, state, next, h, event_tol,
                                              deriv, scr, probe);
      for (const auto& [theta, traj_idx] : events) {
        rk4_step(deriv, t, state, theta, probe, scr);
        const double t_event = t + theta;
        model.arm_all(t_event, probe);
        if (model.try_fire(traj, t_event, probe, traj_idx)) {
          state = probe;
          t = t_event;
          jumped = true;
          break;
        }
      }
      if (!jumped) {
        model.arm_all(t + h, next);
        if (model.try_fire(traj, t + h, next, -1)) {
          state = next;
          t = t + h;
          jumped = true;
        }
      }
    }
    if (!jumped) {
      t += h;
      state = next;
      model.record_sample(traj, t, state, false);
    }
  }
  model.finalize(traj);
  return traj;
}

/// Plant + observer (+ vertex error trajectories) flowing together; the
/// state vector is [x, Z, e_v1, ..., e_vk].
class ObserverModel {
 public:
  ObserverModel(const PlantModel& plant, const CuioParams& cuio,
                const ResetCertificate& cert, const SimConfig& cfg)
      : plant_(plant), cuio_(cuio), cert_(cert), cfg_(cfg) {
    n_ = plant.state_dim();
    p_ = plant.output_dim();

    std::vector<double> ones_q(plant.input_dim(), 1.0);
    std::vector<double> ones_m(plant.unknown_input_dim(), 1.0);
    b_ones_ = mul(plant.b, ones_q);
    d_ones_ = mul(plant.d, ones_m);
    g_ones_ = mul(cuio.g, ones_q);

    std::vector<double> e0(n_);
    for (int i = 0; i < n_; ++i) e0[i] = cfg.xhat0[i] - cfg.x0[i];
    if (cfg.mode == ObserverMode::ruio_vertex) {
      bundle_ = make_vertex_bundle(e0, cfg.vertex_bounds);
      tracked_ = static_cast<int>(bundle_.vertices.size());
    } else if (cfg.mode == ObserverMode::ruio_ideal) {
      // The scheduler watches an exactly integrated copy of the error, so
      // an identically zero error never arms the latch.
      bundle_ = make_vertex_bundle(e0, {});
      tracked_ = 1;
    }
    scheduler_.epsilon = cfg.epsilon;
    scheduler_.min_dwell = cfg.min_dwell;
    scheduler_.reset(tracked_);

    y_buf_.resize(p_);
    ly_buf_.resize(n_);
    tracked_buf_.assign(std::max(tracked_, 1), std::vector<double>(n_));
  }

  std::vector<double> initial_state() const {
    const int nv = vertex_count();
    std::vector<double> s(static_cast<std::size_t>(n_) * (2 + nv));
    for (int i = 0; i < n_; ++i) s[i] = cfg_.x0[i];
    // Z(0) = xhat(0) + E C x(0), so the estimate starts exactly at xhat0.
    std::vector<double> cx(p_);
    mul_into(plant_.c, std::span(cfg_.x0), cx);
    std::vector<double> ecx = mul(cuio_.e, cx);
    for (int i = 0; i < n_; ++i) s[n_ + i] = cfg_.xhat0[i] + ecx[i];
    for (int v = 0; v < nv; ++v)
      for (int i = 0; i < n_; ++i)
        s[2 * n_ + v * n_ + i] = bundle_.vertices[v][i];
    return s;
  }

  void flow(double t, const std::vector<double>& s, std::vector<double>& ds) {
    const double u = cfg_.input_u.eval(t);
    const double v = cfg_.input_v.eval(t);
    const auto x = std::span(s).subspan(0, n_);
    const auto z = std::span(s).subspan(n_, n_);
    mul_into(plant_.c, x, y_buf_);
    mul_into(cuio_.l, y_buf_, ly_buf_);
    for (int i = 0; i < n_; ++i) {
      double ax = 0.0;
      double nz = 0.0;
      for (int j = 0; j < n_; ++j) {
        ax += plant_.a(i, j) * x[j];
        nz += cuio_.n_mat(i, j) * z[j];
      }
      ds[i] = ax + u * b_ones_[i] + v * d_ones_[i];
      ds[n_ + i] = nz + u * g_ones_[i] + ly_buf_[i];
    }
    const int nv = vertex_count();
    for (int vtx = 0; vtx < nv; ++vtx) {
      const int base = 2 * n_ + vtx * n_;
      for (int i = 0; i < n_; ++i) {
        double acc = 0.0;
        for (int j = 0; j < n_; ++j) acc += cuio_.n_mat(i, j) * s[base + j];
        ds[base + i] = acc;
      }
    }
  }

  bool jumps_enabled() const { return cfg_.mode != ObserverMode::cuio; }

  template <typename Deriv>
  std::vector<std::pair<double, int>> detect_events(
      double t, const std::vector<double>& before,
      const std::vector<double>& after, double h, double event_tol,
      Deriv&& deriv, Rk4Scratch& scr, std::vector<double>& probe) {
    std::vector<std::pair<double, int>> events;
    for (int i = 0; i < tracked_; ++i) {
      const double s_before = tracked_sector(before, i);
      const double s_after = tracked_sector(after, i);
      if (s_before > 0.0 && s_after <= 0.0) {
        const auto [lo, hi] = refine_crossing(
            deriv, t, before, h, event_tol,
            [&](const std::vector<double>& candidate) {
              return tracked_sector(candidate, i) <= 0.0;
            },
            scr, probe);
        (void)lo;
        events.emplace_back(hi, i);
      }
    }
    std::sort(events.begin(), events.end());
    return events;
  }

  void arm_all(double t, const std::vector<double>& s) {
    if (!jumps_enabled()) return;
    for (int i = 0; i < tracked_; ++i) {
      const auto& e = tracked_error(s, i);
      scheduler_.arm_if_entered(i, t, sector_value(cert_.f, e),
                                lyapunov_value(cert_.p, e));
    }
  }

  /// Checks the full firing condition at (t, s) and performs the jump when
  /// it holds. Records pre/post samples and the jump itself.
  bool try_fire(HybridTrajectory& traj, double t, std::vector<double>& s,
                int /*hint*/) {
    if (!scheduler_.dwell_ok(t)) return false;

    std::vector<JumpCondition> conditions(tracked_);
    for (int i = 0; i < tracked_; ++i) {
      const auto& e = tracked_error(s, i);
      const double v = lyapunov_value(cert_.p, e);
      if (!scheduler_.decrease_ok(i, v)) return false;
      conditions[i] = {scheduler_.latches[i].tau, scheduler_.latches[i].v, v,
                       sector_value(cert_.f, e)};
    }
    if (cfg_.mode == ObserverMode::ruio_ideal) {
      if (conditions[0].sector_pre > 0.0) return false;
    } else {
      std::vector<std::vector<double>> verts(tracked_);
      for (int i = 0; i < tracked_; ++i) verts[i] = tracked_error(s, i);
      if (!reset_law_fires(cfg_.law, verts, cert_.f, t,
                           scheduler_.jump_count + 1))
        return false;
    }

    record_sample(traj, t, s, false);

    JumpRecord record;
    record.t = t;
    record.law_id = cfg_.mode == ObserverMode::ruio_ideal ? 0 : cfg_.law;
    record.conditions = std::move(conditions);
    for (const JumpCondition& c : record.conditions)
      record.tau_latched = std::max(record.tau_latched, c.tau_latched);

    const auto x = std::span(s).subspan(0, n_);
    const auto z = std::span(s).subspan(n_, n_);
    record.z_pre.assign(z.begin(), z.end());
    record.e_pre = true_error(s);
    mul_into(plant_.c, x, y_buf_);
    const std::vector<double> z_plus = apply_jump(cuio_, cert_, z, y_buf_);
    for (int i = 0; i < n_; ++i) s[n_ + i] = z_plus[i];

    const int nv = vertex_count();
    record.vertices_pre.resize(nv);
    record.vertices_post.resize(nv);
    for (int vtx = 0; vtx < nv; ++vtx) {
      const int base = 2 * n_ + vtx * n_;
      record.vertices_pre[vtx].assign(s.begin() + base, s.begin() + base + n_);
      const std::vector<double> mapped = mul(cert_.h, record.vertices_pre[vtx]);
      std::copy(mapped.begin(), mapped.end(), s.begin() + base);
      record.vertices_post[vtx] = mapped;
    }
    record.z_post = z_plus;
    record.e_post = true_error(s);
    traj.jumps.push_back(std::move(record));

    scheduler_.on_jump(t);
    arm_all(t, s);
    record_sample(traj, t, s, true);
    return true;
  }

  void record_sample(HybridTrajectory& traj, double t,
                     const std::vector<double>& s, bool post_jump) {
    TrajectorySample sample;
    sample.t = t;
    sample.post_jump = post_jump;
    sample.x.assign(s.begin(), s.begin() + n_);
    sample.z.assign(s.begin() + n_, s.begin() + 2 * n_);
    mul_into(plant_.c, std::span(sample.x), y_buf_);
    const std::vector<double> ey = mul(cuio_.e, y_buf_);
    sample.xhat.resize(n_);
    for (int i = 0; i < n_; ++i) sample.xhat[i] = sample.z[i] - ey[i];
    sample.e = true_error(s);
    sample.v_lyap = lyapunov_value(cert_.p, sample.e);
    if (cfg_.mode == ObserverMode::ruio_vertex) {
      sample.sector_min = std::numeric_limits<double>::infinity();
      const int nv = vertex_count();
      sample.vertices.resize(nv);
      for (int vtx = 0; vtx < nv; ++vtx) {
        sample.vertices[vtx] = tracked_error(s, vtx);
        sample.sector_min = std::min(
            sample.sector_min, sector_value(cert_.f, sample.vertices[vtx]));
      }
    } else {
      sample.sector_min = sector_value(cert_.f, sample.e);
    }
    traj.samples.push_back(std::move(sample));
  }

  void finalize(HybridTrajectory& traj) const {
    traj.vertex_weights = bundle_.weights;
  }

 private:
  int vertex_count() const {
    return cfg_.mode == ObserverMode::cuio
               ? 0
               : static_cast<int>(bundle_.vertices.size());
  }

  std::vector<double> true_error(const std::vector<double>& s) const {
    std::vector<double> e(n_);
    for (int i = 0; i < n_; ++i) {
      double mx = 0.0;
      for (int j = 0; j < n_; ++j) mx += cuio_.m(i, j) * s[j];
      e[i] = s[n_ + i] - mx;
    }
    return e;
  }

  const std::vector<double>& tracked_error(const std::vector<double>& s,
                                           int i) {
    const int base = 2 * n_ + i * n_;
    std::copy(s.begin() + base, s.begin() + base + n_, tracked_buf_[i].begin());
    return tracked_buf_[i];
  }

  double tracked_sector(const std::vector<double>& s, int i) {
    return sector_value(cert_.f, tracked_error(s, i));
  }

  const PlantModel& plant_;
  const CuioParams& cuio_;
  const ResetCertificate& cert_;
  const SimConfig& cfg_;
  int n_ = 0;
  int p_ = 0;
  int tracked_ = 0;
  VertexBundle bundle_;
  SectorScheduler scheduler_;
  std::vector<double> b_ones_, d_ones_, g_ones_;
  std::vector<double> y_buf_, ly_buf_;
  std::vector<std::vector<double>> tracked_buf_;
};

/// Bare error dynamics e' = N e with jumps e+ = H e; used by the
/// destabilization demo and the scheduler tests.
class ErrorModel {
 public:
  ErrorModel(const Matrix& n_mat, const Matrix& h_map, const Matrix& f,
             const Matrix& p, std::span<const double> e0,
             const ErrorSimConfig& cfg)
      : n_mat_(n_mat), h_map_(h_map), f_(f), p_(p),
        e0_(e0.begin(), e0.end()), cfg_(cfg) {
    scheduler_.epsilon = cfg.epsilon;
    scheduler_.min_dwell = cfg.min_dwell;
    scheduler_.reset(1);
  }

  std::vector<double> initial_state() const { return e0_; }

  void flow(double /*t*/, const std::vector<double>& s,
            std::vector<double>& ds) {
    const int n = n_mat_.rows();
    for (int i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int j = 0; j < n; ++j) acc += n_mat_(i, j) * s[j];
      ds[i] = acc;
    }
  }

  bool jumps_enabled() const { return true; }

  template <typename Deriv>
  std::vector<std::pair<double, int>> detect_events(
      double t, const std::vector<double>& before,
      const std::vector<double>& after, double h, double event_tol,
      Deriv&& deriv, Rk4Scratch& scr, std::vector<double>& probe) {
    std::vector<std::pair<double, int>> events;
    if (cfg_.rule == ResetRule::scheduler) {
      const double s_before = sector_value(f_, before);
      const double s_after = sector_value(f_, after);
      if (s_before > 0.0 && s_after <= 0.0) {
        const auto [lo, hi] = refine_crossing(
            deriv, t, before, h, event_tol,
            [&](const std::vector<double>& c) {
              return sector_value(f_, c) <= 0.0;
            },
            scr, probe);
        (void)lo;
        events.emplace_back(hi, 0);
      }
    } else {
      const int k = cfg_.crossing_state;
      const double before_k = before[k];
      const double after_k = after[k];
      if ((before_k > 0.0 && after_k <= 0.0) ||
          (before_k < 0.0 && after_k >= 0.0)) {
        // Stop on the near side of the crossing: the state is still inside
        // the closed sector there, which is what the rule tests.
        const auto [lo, hi] = refine_crossing(
            deriv, t, before, h, event_tol,
            [&](const std::vector<double>& c) {
              return before_k > 0.0 ? c[k] <= 0.0 : c[k] >= 0.0;
            },
            scr, probe);
        (void)hi;
        events.emplace_back(std::max(lo, 0.0), 0);
      }
    }
    return events;
  }

  void arm_all(double t, const std::vector<double>& s) {
    if (cfg_.rule != ResetRule::scheduler) return;
    scheduler_.arm_if_entered(0, t, sector_value(f_, s),
                              lyapunov_value(p_, s));
  }

  bool try_fire(HybridTrajectory& traj, double t, std::vector<double>& s,
                int hint) {
    if (!scheduler_.dwell_ok(t)) return false;
    const double sector = sector_value(f_, s);
    const double v = lyapunov_value(p_, s);

    JumpCondition condition{0.0, 0.0, v, sector};
    if (cfg_.rule == ResetRule::scheduler) {
      if (sector > 0.0 || !scheduler_.decrease_ok(0, v)) return false;
      condition.tau_latched = scheduler_.latches[0].tau;
      condition.v_latched = scheduler_.latches[0].v;
    } else {
      // The crossing rule only fires at refined crossing events.
      if (hint < 0) return false;
      if (sector > 0.0) return false;
    }

    record_sample(traj, t, s, false);
    JumpRecord record;
    record.t = t;
    record.tau_latched = condition.tau_latched;
    record.conditions = {condition};
    record.e_pre = s;
    s = mul(h_map_, s);
    record.e_post = s;
    traj.jumps.push_back(std::move(record));

    scheduler_.on_jump(t);
    arm_all(t, s);
    record_sample(traj, t, s, true);
    return true;
  }

  void record_sample(HybridTrajectory& traj, double t,
                     const std::vector<double>& s, bool post_jump) {
    TrajectorySample sample;
    sample.t = t;
    sample.post_jump = post_jump;
    sample.e = s;
    sample.sector_min = sector_value(f_, s);
    sample.v_lyap = lyapunov_value(p_, s);
    traj.samples.push_back(std::move(sample));
  }

  void finalize(HybridTrajectory&) const {}

 private:
  const Matrix& n_mat_;
  const Matrix& h_map_;
  const Matrix& f_;
  const Matrix& p_;
  std::vector<double> e0_;
  const ErrorSimConfig& cfg_;
  SectorScheduler scheduler_;
};

}  // namespace

HybridTrajectory run_simulation(const PlantModel& plant,
                                const CuioParams& cuio,
                                const ResetCertificate& cert,
                                const SimConfig& cfg) {
  const int n = plant.state_dim();
  cfg.validate(n);
  if (cert.p.rows() != n || cert.p.cols() != n || cert.f.rows() != n ||
      cert.f.cols() != n)
    throw ConfigError("run_simulation: certificate dimensions do not match");
  if (cfg.mode != ObserverMode::cuio &&
      (cert.a_r.rows() != n || cert.h.rows() != n))
    throw ConfigError("run_simulation: certificate lacks reset maps");

  ObserverModel model(plant, cuio, cert, cfg);
  return integrate_hybrid(model, cfg.t_end, cfg.step, cfg.event_tol);
}

HybridTrajectory run_error_simulation(const Matrix& n_mat,
                                      const Matrix& h_map, const Matrix& f,
                                      const Matrix& p,
                                      std::span<const double> e0,
                                      const ErrorSimConfig& cfg) {
  const int n = n_mat.rows();
  if (n_mat.cols() != n || h_map.rows() != n || h_map.cols() != n ||
      f.rows() != n || f.cols() != n || p.rows() != n || p.cols() != n ||
      static_cast<int>(e0.size()) != n)
    throw DimensionMismatch("run_error_simulation: dimension mismatch");
  if (!(cfg.t_end > 0.0) || !(cfg.step > 0.0) || !(cfg.event_tol > 0.0) ||
      cfg.event_tol > cfg.step || !(cfg.min_dwell > 0.0))
    throw ConfigError("run_error_simulation: invalid configuration");
  if (cfg.rule == ResetRule::state_crossing &&
      (cfg.crossing_state < 0 || cfg.crossing_state >= n))
    throw ConfigError("run_error_simulation: crossing_state out of range");

  ErrorModel model(n_mat, h_map, f, p, e0, cfg);
  return integrate_hybrid(model, cfg.t_end, cfg.step, cfg.event_tol);
}

Metrics compute_metrics(const HybridTrajectory& traj) {
  if (traj.samples.empty())
    throw ConfigError("compute_metrics: empty trajectory");
  Metrics metrics;

  auto norm_sq = [](const std::vector<double>& e) {
    double acc = 0.0;
    for (double x : e) acc += x * x;
    return acc;
  };

  double l2_sq = 0.0;
  for (std::size_t i = 0; i + 1 < traj.samples.size(); ++i) {
    const auto& a = traj.samples[i];
    const auto& b = traj.samples[i + 1];
    // Jump discontinuities contribute zero-width segments, so the
    // trapezoid rule splits at every reset automatically.
    l2_sq += 0.5 * (norm_sq(a.e) + norm_sq(b.e)) * (b.t - a.t);
  }
  metrics.l2 = std::sqrt(l2_sq);

  const double threshold = 0.02 * std::sqrt(norm_sq(traj.samples.front().e));
  std::size_t first_settled = traj.samples.size();
  for (std::size_t i = traj.samples.size(); i-- > 0;) {
    if (std::sqrt(norm_sq(traj.samples[i].e)) > threshold) break;
    first_settled = i;
  }
  if (first_settled < traj.samples.size())
    metrics.settling = traj.samples[first_settled].t;
  else
    metrics.settling = traj.samples.back().t;  // never settled: horizon end

  if (!traj.jumps.empty()) metrics.first_reset = traj.jumps.front().t;
  return metrics;
}

void write_trajectory_csv(const HybridTrajectory& traj,
                          const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
  if (traj.samples.empty()) return;

  const bool full = !traj.samples.front().x.empty();
  const int n = static_cast<int>(traj.samples.front().e.size());
  out << 't';
  if (full) {
    for (int i = 1; i <= n; ++i) out << ",x" << i;
    for (int i = 1; i <= n; ++i) out << ",xhat" << i;
  }
  for (int i = 1; i <= n; ++i) out << ",e" << i;
  out << ",sector_min,V,jump\n";

  for (const TrajectorySample& s : traj.samples) {
    out << format_double(s.t);
    if (full) {
      for (double v : s.x) out << ',' << format_double(v);
      for (double v : s.xhat) out << ',' << format_double(v);
    }
    for (double v : s.e) out << ',' << format_double(v);
    out << ',' << format_double(s.sector_min) << ',' << format_double(s.v_lyap)
        << ',' << (s.post_jump ? '1' : '0') << '\n';
  }
}

}  // namespace ruio
