#pragma once

/**
 * @file mpc.hpp
 * @brief Closed-loop obstacle-avoidance MPC on a planar double integrator.
 *
 * Decision vector θ = [u_0 … u_{N−1} | κ_{a,m,k}]: open-loop accelerations
 * followed by one disturbance-feedback gain per (agent, mode, step), the
 * sparsified block. Each (agent, mode, step) contributes the supporting
 * halfspace of the predicted obstacle disc, linearized about the previous
 * ego plan:
 *
 *   nᵀ(p_k(u) − o) ≥ R + r_k (1 − κ)   ⇔   −nᵀΓ_k u − r_k κ ≤ nᵀ(p̄_k − o) − R − r_k
 *
 * so a gain buys back part of the prediction radius r_k at a quadratic and ℓ1
 * cost. Input box, lane bounds and κ ≤ 1 are the immutable rows.
 */

#include "shield/predictor.hpp"
#include "shield/primal_solver.hpp"
#include "shield/problem.hpp"
#include "shield/screening.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace shield::mpc {

using Vec2 = Eigen::Vector2d;

/// x = (px, py, vx, vy), u = (ax, ay).
struct LinearSystem {
  double dt = 0.1;
  Eigen::Matrix4d A;
  Eigen::Matrix<double, 4, 2> B;
  double input_bound = 5.0;           ///< |a| per axis
  double lane_min = -5.25;            ///< bounds on py
  double lane_max = 5.25;
  double disturbance_base = 0.2;      ///< prediction radius r_k = base + growth·k
  double disturbance_growth = 0.05;

  static LinearSystem double_integrator(double dt = 0.1) {
    LinearSystem s;
    s.dt = dt;
    s.A.setIdentity();
    s.A(0, 2) = s.A(1, 3) = dt;
    s.B.setZero();
    s.B(0, 0) = s.B(1, 1) = 0.5 * dt * dt;
    s.B(2, 0) = s.B(3, 1) = dt;
    return s;
  }
  double radius(Index k) const { return disturbance_base + disturbance_growth * static_cast<double>(k); }
  Eigen::Vector4d step(const Eigen::Vector4d& x, const Vec2& u) const { return A * x + B * u; }
};

struct AgentSpec {
  Vec2 position = Vec2::Zero();
  Vec2 velocity = Vec2::Zero();
  std::vector<double> lateral_offsets;  ///< final lateral shift of each mode
  double shift_time = 2.0;              ///< seconds to complete the shift
  int true_mode = 0;

  /// Position at time t under `mode`: constant velocity plus a smooth lateral shift.
  Vec2 at(double t, int mode) const {
    const double s = std::clamp(t / shift_time, 0.0, 1.0);
    const double blend = s * s * (3.0 - 2.0 * s);
    Vec2 p = position + t * velocity;
    p.y() += lateral_offsets[static_cast<std::size_t>(mode)] * blend;
    return p;
  }
};

struct ScenarioConfig {
  std::uint64_t seed = 0;
  Index agents = 3;   ///< V
  Index modes = 2;    ///< M
  Index horizon = 14; ///< N
  int steps = 50;
  double dt = 0.1;
  double ego_speed = 10.0;
  double body_radius = 1.5;
  std::vector<AgentSpec> agent_specs;  ///< overrides the seeded generator when non-empty
};

struct Scenario {
  ScenarioConfig config;
  LinearSystem system;
  std::vector<AgentSpec> agents;
  Eigen::Vector4d ego0;
};

/// Seeded generator: agents ahead of the ego in one of three lanes, each
/// with a keep-lane mode and lane-change modes.
inline Scenario make_scenario(const ScenarioConfig& cfg) {
  Scenario sc;
  sc.config = cfg;
  sc.system = LinearSystem::double_integrator(cfg.dt);
  sc.ego0 << 0.0, 0.0, cfg.ego_speed, 0.0;
  if (!cfg.agent_specs.empty()) {
    sc.agents = cfg.agent_specs;
    for (auto& a : sc.agents) {
      if (static_cast<Index>(a.lateral_offsets.size()) != cfg.modes)
        throw std::invalid_argument("agent spec has the wrong number of mode offsets");
      if (a.true_mode < 0 || a.true_mode >= cfg.modes) throw std::invalid_argument("agent true mode out of range");
    }
    if (static_cast<Index>(sc.agents.size()) != cfg.agents)
      throw std::invalid_argument("number of agent specs does not match the agent count");
    return sc;
  }
  std::mt19937_64 rng(cfg.seed * 0x9E3779B97F4A7C15ULL + 17);
  std::uniform_real_distribution<double> ahead(15.0, 75.0), speed(5.0, 12.0), shift(1.5, 3.0),
      jitter(-0.3, 0.3), spread(-1.75, 1.75);
  std::uniform_int_distribution<int> lane(-1, 1), coin(0, 1);
  for (Index a = 0; a < cfg.agents; ++a) {
    AgentSpec s;
    const double y = 3.5 * lane(rng);
    s.position = Vec2(ahead(rng), y + jitter(rng));
    s.velocity = Vec2(speed(rng), 0.0);
    s.shift_time = shift(rng);
    s.lateral_offsets.assign(static_cast<std::size_t>(cfg.modes), 0.0);
    for (Index m = 1; m < cfg.modes; ++m) {
      double off;
      if (m == 1) off = y == 0.0 ? (coin(rng) ? 3.5 : -3.5) : -y;
      else off = spread(rng);
      s.lateral_offsets[static_cast<std::size_t>(m)] = off;
    }
    s.true_mode = static_cast<int>(std::uniform_int_distribution<Index>(0, cfg.modes - 1)(rng));
    sc.agents.push_back(s);
  }
  return sc;
}

/// Layout of θ and the ℓ1 selection.
struct PolicyLayout {
  Index horizon = 14;
  Index inputs = 2;
  Index agents = 0;
  Index modes = 0;

  Index num_inputs() const { return horizon * inputs; }
  Index num_gains() const { return agents * modes * horizon; }
  Index size() const { return num_inputs() + num_gains(); }
  /// Row / gain index of (agent, mode, step k ∈ [1, N]).
  Index row(Index a, Index m, Index k) const { return (a * modes + m) * horizon + (k - 1); }
  Index gain(Index a, Index m, Index k) const { return num_inputs() + row(a, m, k); }

  HorizonLayout horizon_layout() const {
    HorizonLayout l;
    l.size = size();
    l.groups.push_back({0, horizon, inputs});
    for (Index g = 0; g < agents * modes; ++g) l.groups.push_back({num_inputs() + g * horizon, horizon, 1});
    return l;
  }
};

struct StepParams {
  double lambda = 100.0;
  double zeta = 0.5;
  double epsilon = 0.01;
  double weight_lateral = 0.5;
  double weight_velocity = 1.0;
  double weight_input = 0.5;
  double weight_gain = 1.0;
};

/// Positions p_k = p̄_k + Γ_k u for k = 1..N (rows 2(k−1), 2(k−1)+1), same for velocities.
struct Prediction {
  Matrix pos_gain;  ///< 2N × 2N
  Vector pos_free;  ///< 2N
  Matrix vel_gain;
  Vector vel_free;
};

inline Prediction predict_ego(const LinearSystem& sys, const Eigen::Vector4d& x0, Index N) {
  Prediction pr;
  pr.pos_gain = Matrix::Zero(2 * N, 2 * N);
  pr.vel_gain = Matrix::Zero(2 * N, 2 * N);
  pr.pos_free.resize(2 * N);
  pr.vel_free.resize(2 * N);
  Eigen::Vector4d x = x0;
  // G_j = A^j B, the response of the state j steps after an input
  std::vector<Eigen::Matrix<double, 4, 2>> G;
  Eigen::Matrix<double, 4, 2> Gj = sys.B;
  for (Index j = 0; j < N; ++j) {
    G.push_back(Gj);
    Gj = sys.A * Gj;
  }
  for (Index k = 1; k <= N; ++k) {
    x = sys.A * x;
    pr.pos_free.segment(2 * (k - 1), 2) = x.head<2>();
    pr.vel_free.segment(2 * (k - 1), 2) = x.tail<2>();
    for (Index i = 0; i < k; ++i) {
      const auto& Gi = G[static_cast<std::size_t>(k - 1 - i)];
      pr.pos_gain.block(2 * (k - 1), 2 * i, 2, 2) = Gi.topRows<2>();
      pr.vel_gain.block(2 * (k - 1), 2 * i, 2, 2) = Gi.bottomRows<2>();
    }
  }
  return pr;
}

/// Scene at one control step.
struct ScenarioState {
  double time = 0.0;
  Eigen::Vector4d ego;
  /// predictions[a][m][k−1] and the matching radius r_k
  std::vector<std::vector<std::vector<Vec2>>> predictions;
  std::vector<double> radii;
  Matrix previous_plan;  ///< 2 × N ego positions used for linearization
};

inline ScenarioState observe(const Scenario& sc, double time, const Eigen::Vector4d& ego,
                             const Matrix& previous_plan) {
  ScenarioState st;
  st.time = time;
  st.ego = ego;
  st.previous_plan = previous_plan;
  const Index N = sc.config.horizon;
  for (Index k = 1; k <= N; ++k) st.radii.push_back(sc.system.radius(k));
  for (const auto& ag : sc.agents) {
    std::vector<std::vector<Vec2>> modes;
    for (Index m = 0; m < sc.config.modes; ++m) {
      std::vector<Vec2> path;
      for (Index k = 1; k <= N; ++k) path.push_back(ag.at(time + static_cast<double>(k) * sc.config.dt, static_cast<int>(m)));
      modes.push_back(std::move(path));
    }
    st.predictions.push_back(std::move(modes));
  }
  return st;
}

/// Relative displacements (prediction − ego position), agent-major, mode-next, step-minor.
inline FeatureVector features(const ScenarioState& st, const ScenarioConfig& cfg) {
  FeatureLayout l{cfg.agents, cfg.modes, cfg.horizon, 2};
  Vector v(l.size());
  for (Index a = 0; a < cfg.agents; ++a)
    for (Index m = 0; m < cfg.modes; ++m)
      for (Index k = 1; k <= cfg.horizon; ++k) {
        const Vec2 d = st.predictions[static_cast<std::size_t>(a)][static_cast<std::size_t>(m)][static_cast<std::size_t>(k - 1)] - st.ego.head<2>();
        v.segment(l.offset(a, m, k - 1), 2) = d;
      }
  return {l, v};
}

struct BuildReport {
  std::size_t degenerate_normals = 0;
};

inline RegularizedProgram build_step_program(const LinearSystem& sys, const ScenarioState& st,
                                             const PolicyLayout& layout, const StepParams& prm,
                                             double body_radius, BuildReport* report = nullptr) {
  const Index N = layout.horizon;
  const Index nu = layout.num_inputs();
  const Index n = layout.size();
  const Prediction pr = predict_ego(sys, st.ego, N);

  // cost: lateral position, velocity tracking, input and gain weights
  Matrix Q = Matrix::Zero(n, n);
  Vector c = Vector::Zero(n);
  Vector vref(2 * N);
  for (Index k = 0; k < N; ++k) vref.segment(2 * k, 2) = Vec2(10.0, 0.0);
  {
    Matrix Gy(N, nu);
    Vector dy(N);
    for (Index k = 0; k < N; ++k) {
      Gy.row(k) = pr.pos_gain.row(2 * k + 1);
      dy[k] = pr.pos_free[2 * k + 1];
    }
    const Vector dv = pr.vel_free - vref;
    Q.topLeftCorner(nu, nu) = 2.0 * prm.weight_lateral * Gy.transpose() * Gy +
                              2.0 * prm.weight_velocity * pr.vel_gain.transpose() * pr.vel_gain +
                              2.0 * prm.weight_input * Matrix::Identity(nu, nu);
    c.head(nu) = 2.0 * prm.weight_lateral * Gy.transpose() * dy +
                 2.0 * prm.weight_velocity * pr.vel_gain.transpose() * dv;
    Q.bottomRightCorner(n - nu, n - nu).diagonal().setConstant(prm.weight_gain);
  }

  // screenable collision rows
  const Index rows = layout.agents * layout.modes * N;
  Matrix As = Matrix::Zero(rows, n);
  Vector bs(rows);
  for (Index a = 0; a < layout.agents; ++a)
    for (Index m = 0; m < layout.modes; ++m)
      for (Index k = 1; k <= N; ++k) {
        const Vec2 o = st.predictions[static_cast<std::size_t>(a)][static_cast<std::size_t>(m)][static_cast<std::size_t>(k - 1)];
        const Vec2 plan = st.previous_plan.col(k - 1);
        Vec2 nrm = plan - o;
        if (nrm.norm() < 1e-9) {
          nrm = Vec2(-1.0, 0.0);
          if (report) ++report->degenerate_normals;
          std::cerr << "warning: ego plan coincides with a prediction, using fallback normal\n";
        }
        nrm.normalize();
        const double r = st.radii[static_cast<std::size_t>(k - 1)];
        const Index row = layout.row(a, m, k);
        As.row(row).head(nu) = -nrm.transpose() * pr.pos_gain.middleRows(2 * (k - 1), 2);
        As(row, layout.gain(a, m, k)) = -r;
        bs[row] = nrm.dot(pr.pos_free.segment(2 * (k - 1), 2) - o) - body_radius - r;
      }

  // immutable: input box, lane bounds, κ ≤ 1
  const Index ng = layout.num_gains();
  Matrix Ai = Matrix::Zero(2 * nu + 2 * N + ng, n);
  Vector bi(Ai.rows());
  Index r = 0;
  for (Index i = 0; i < nu; ++i) {
    Ai(r, i) = 1.0;
    bi[r++] = sys.input_bound;
    Ai(r, i) = -1.0;
    bi[r++] = sys.input_bound;
  }
  for (Index k = 0; k < N; ++k) {
    Ai.row(r).head(nu) = pr.pos_gain.row(2 * k + 1);
    bi[r++] = sys.lane_max - pr.pos_free[2 * k + 1];
    Ai.row(r).head(nu) = -pr.pos_gain.row(2 * k + 1);
    bi[r++] = pr.pos_free[2 * k + 1] - sys.lane_min;
  }
  for (Index g = 0; g < ng; ++g) {
    Ai(r, nu + g) = 1.0;
    bi[r++] = 1.0;
  }
  std::vector<Index> sel(static_cast<std::size_t>(ng));
  std::iota(sel.begin(), sel.end(), nu);
  return RegularizedProgram(std::move(Q), std::move(c), ConstraintBlock(As, bs), ConstraintBlock(Ai, bi),
                            EqualityBlock::empty(n), std::move(sel), prm.lambda, prm.zeta, prm.epsilon);
}

/// Ego positions along the plan given by the input block of θ.
inline Matrix plan_positions(const LinearSystem& sys, const Eigen::Vector4d& x0, const Vector& inputs, Index N) {
  const Prediction pr = predict_ego(sys, x0, N);
  const Vector p = pr.pos_free + pr.pos_gain * inputs;
  Matrix out(2, N);
  for (Index k = 0; k < N; ++k) out.col(k) = p.segment(2 * k, 2);
  return out;
}

// ---------------------------------------------------------------------------
// Closed loop

enum class Policy { full, reduced };

inline const char* to_string(Policy p) { return p == Policy::full ? "full" : "reduced"; }

/// Produces the dual classes for one step from its features and program.
using ClassProvider = std::function<DualClass(const FeatureVector&, const RegularizedProgram&)>;

inline ClassProvider model_provider(const PredictorModel& m) {
  return [m](const FeatureVector& z, const RegularizedProgram&) { return predict(m, z); };
}

/// Uniformly random classes from a private generator (adversarial baseline).
inline ClassProvider random_provider(std::uint64_t seed) {
  auto rng = std::make_shared<std::mt19937_64>(seed);
  return [rng](const FeatureVector&, const RegularizedProgram& p) {
    std::uniform_int_distribution<int> bit(0, 1);
    DualClass c = DualClass::constant(p.num_screenable(), p.num_selected(), 0);
    for (auto& v : c.mu_class) v = static_cast<std::uint8_t>(bit(*rng));
    for (auto& v : c.g_class) v = static_cast<std::uint8_t>(bit(*rng));
    return c;
  };
}

struct StepMetrics {
  int step = 0;
  bool feasible = true;
  bool collision = false;
  double enforced_pct = 100.0;
  double adf_kept_pct = 100.0;
  double classifier_seconds = 0.0;
  double dual_seconds = 0.0;
  double gap_seconds = 0.0;
  double reduced_seconds = 0.0;
  double total_seconds = 0.0;   ///< full arm: the full solve
  double max_violation = 0.0;   ///< largest original screenable row value at the applied plan
  double min_distance = kInfinity;
  double gap = 0.0;
  bool fallback = false;
  int iterations = 0;
  Index kept_rows = 0;
  Index kept_variables = 0;
};

struct RunMetrics {
  Policy policy = Policy::full;
  std::uint64_t seed = 0;
  int steps_requested = 0;
  int steps_completed = 0;
  bool feasible = true;
  bool collision = false;
  std::vector<StepMetrics> steps;
  Matrix trajectory;  ///< 2 × (steps_completed + 1) ego positions

  double average(double StepMetrics::*field) const {
    if (steps.empty()) return 0.0;
    double s = 0.0;
    for (const auto& st : steps) s += st.*field;
    return s / static_cast<double>(steps.size());
  }
  double median(double StepMetrics::*field) const {
    if (steps.empty()) return 0.0;
    std::vector<double> v;
    for (const auto& st : steps) v.push_back(st.*field);
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
  }
  double max_violation() const {
    double m = 0.0;
    for (const auto& st : steps) m = std::max(m, st.max_violation);
    return m;
  }
  int fallbacks() const {
    int f = 0;
    for (const auto& st : steps) f += st.fallback;
    return f;
  }
};

struct SimulationOptions {
  StepParams params;
  ShieldOptions shield;
  ClassProvider classes;  ///< reduced arm; distance heuristic when empty

  SimulationOptions() { shield.refinement_rounds = 30; }
};

inline RunMetrics simulate(Policy policy, const ScenarioConfig& cfg, const SimulationOptions& opt = {}) {
  const Scenario sc = make_scenario(cfg);
  const LinearSystem& sys = sc.system;
  const PolicyLayout layout{cfg.horizon, 2, cfg.agents, cfg.modes};
  const Index N = cfg.horizon;
  ClassProvider classes = opt.classes;
  if (!classes) {
    classes = model_provider(PredictorModel::stepwise_distance_heuristic(
        FeatureLayout{cfg.agents, cfg.modes, cfg.horizon, 2}, cfg.body_radius + 3.0, cfg.ego_speed * cfg.dt,
        opt.params.zeta));
  }

  RunMetrics run;
  run.policy = policy;
  run.seed = cfg.seed;
  run.steps_requested = cfg.steps;
  run.trajectory = Matrix(2, cfg.steps + 1);
  Eigen::Vector4d x = sc.ego0;
  run.trajectory.col(0) = x.head<2>();

  std::optional<Solution> warm;
  Vector inputs = Vector::Zero(layout.num_inputs());
  for (int t = 0; t < cfg.steps; ++t) {
    const double time = static_cast<double>(t) * cfg.dt;
    const Matrix plan = plan_positions(sys, x, inputs, N);
    const ScenarioState st = observe(sc, time, x, plan);
    const RegularizedProgram prog = build_step_program(sys, st, layout, opt.params, cfg.body_radius);
    StepMetrics sm;
    sm.step = t;
    Solution sol;
    const Index c = prog.num_screenable();
    const Index q = prog.num_selected();
    if (policy == Policy::full) {
      SolveOptions so = opt.shield.solve;
      so.tighten = false;
      const auto t0 = std::chrono::steady_clock::now();
      sol = solve(prog, warm, so);
      sm.total_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    } else {
      const FeatureVector z = features(st, cfg);
      const ShieldResult res = shield_step(prog, [&] { return classes(z, prog); }, opt.shield, warm);
      sol = res.solution;
      const auto& d = res.diagnostics;
      sm.classifier_seconds = d.classifier_seconds;
      sm.dual_seconds = d.dual_seconds;
      sm.gap_seconds = d.gap_seconds;
      sm.reduced_seconds = d.reduced_seconds;
      sm.total_seconds = d.total_seconds;
      sm.fallback = d.fallback;
      sm.gap = res.sets.gap_used;
      if (c > 0) sm.enforced_pct = 100.0 * static_cast<double>(c - static_cast<Index>(res.sets.K.size())) / static_cast<double>(c);
      if (q > 0) sm.adf_kept_pct = 100.0 * static_cast<double>(q - static_cast<Index>(res.sets.I.size())) / static_cast<double>(q);
      sm.kept_rows = d.reduced_rows;
      sm.kept_variables = d.reduced_variables;
    }
    sm.iterations = sol.iterations;
    if (!sol.optimal()) {
      sm.feasible = false;
      run.feasible = false;
      run.steps.push_back(sm);
      break;
    }
    if (c > 0)
      sm.max_violation = std::max(0.0, (prog.screenable().A * sol.theta - prog.screenable().b).maxCoeff());

    // apply the first input, advance the agents
    const Vec2 u0 = sol.theta.head<2>();
    x = sys.step(x, u0);
    const double tnext = time + cfg.dt;
    for (const auto& ag : sc.agents) {
      const double dist = (x.head<2>() - ag.at(tnext, ag.true_mode)).norm();
      sm.min_distance = std::min(sm.min_distance, dist);
      if (dist < cfg.body_radius) {
        sm.collision = true;
        run.collision = true;
      }
    }
    run.steps.push_back(sm);
    run.steps_completed = t + 1;
    run.trajectory.col(t + 1) = x.head<2>();
    warm = shift_warm_start(sol, layout.horizon_layout());
    inputs = warm->theta.head(layout.num_inputs());
  }
  run.trajectory.conservativeResize(2, run.steps_completed + 1);
  return run;
}

/// Programs and features met along a closed loop driven by the tightened full
/// solve, for training-data collection. Stops early at an unsolved step.
inline std::vector<LabeledProgram> rollout_programs(const ScenarioConfig& cfg, const StepParams& params = {}) {
  const Scenario sc = make_scenario(cfg);
  const LinearSystem& sys = sc.system;
  const PolicyLayout layout{cfg.horizon, 2, cfg.agents, cfg.modes};
  std::vector<LabeledProgram> out;
  Eigen::Vector4d x = sc.ego0;
  std::optional<Solution> warm;
  Vector inputs = Vector::Zero(layout.num_inputs());
  for (int t = 0; t < cfg.steps; ++t) {
    const double time = static_cast<double>(t) * cfg.dt;
    const ScenarioState st = observe(sc, time, x, plan_positions(sys, x, inputs, cfg.horizon));
    RegularizedProgram prog = build_step_program(sys, st, layout, params, cfg.body_radius);
    const Solution sol = solve(prog, warm);
    out.push_back({std::move(prog), features(st, cfg)});
    if (!sol.optimal()) break;
    x = sys.step(x, sol.theta.head<2>());
    warm = shift_warm_start(sol, layout.horizon_layout());
    inputs = warm->theta.head(layout.num_inputs());
  }
  return out;
}

/// Average displacement between two closed-loop ego trajectories over their common steps.
inline double average_displacement(const RunMetrics& a, const RunMetrics& b) {
  const Index n = std::min(a.trajectory.cols(), b.trajectory.cols());
  if (n <= 1) return 0.0;
  double s = 0.0;
  for (Index i = 1; i < n; ++i) s += (a.trajectory.col(i) - b.trajectory.col(i)).norm();
  return s / static_cast<double>(n - 1);
}

// ---------------------------------------------------------------------------
// Parameter sweep

struct SweepRow {
  double epsilon = 0.0;
  double lambda = 0.0;
  double constraint_keep_pct = 0.0;
  double adf_keep_pct = 0.0;
  double avg_time = 0.0;
  double feasible_pct = 0.0;
  double collision_pct = 0.0;
  std::size_t runs = 0;
};

inline unsigned sweep_threads() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SHIELD_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(v));
  }
  return n;
}

/// Runs `jobs` indices in [0, count) on up to `threads` workers; results are by index.
template <class F>
void parallel_for(std::size_t count, unsigned threads, F&& job) {
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) job(i);
  };
  const unsigned t = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(count)));
  std::vector<std::thread> pool;
  for (unsigned i = 1; i < t; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
}

/// Reduced-arm runs over every (ε, λ) pair and scenario seed.
inline std::vector<SweepRow> sweep(const std::vector<double>& epsilons, const std::vector<double>& lambdas,
                                   const std::vector<ScenarioConfig>& scenarios,
                                   const SimulationOptions& base = {}, unsigned threads = sweep_threads()) {
  struct Job {
    std::size_t row;
    std::size_t scenario;
  };
  std::vector<SweepRow> rows;
  std::vector<Job> jobs;
  for (double e : epsilons)
    for (double l : lambdas) {
      SweepRow r;
      r.epsilon = e;
      r.lambda = l;
      rows.push_back(r);
      for (std::size_t s = 0; s < scenarios.size(); ++s) jobs.push_back({rows.size() - 1, s});
    }
  std::vector<RunMetrics> results(jobs.size());
  parallel_for(jobs.size(), threads, [&](std::size_t i) {
    SimulationOptions o = base;
    o.params.epsilon = rows[jobs[i].row].epsilon;
    o.params.lambda = rows[jobs[i].row].lambda;
    results[i] = simulate(Policy::reduced, scenarios[jobs[i].scenario], o);
  });
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    SweepRow& r = rows[jobs[i].row];
    const RunMetrics& m = results[i];
    r.constraint_keep_pct += m.average(&StepMetrics::enforced_pct);
    r.adf_keep_pct += m.average(&StepMetrics::adf_kept_pct);
    r.avg_time += m.average(&StepMetrics::total_seconds);
    r.feasible_pct += m.feasible ? 100.0 : 0.0;
    r.collision_pct += m.collision ? 100.0 : 0.0;
    ++r.runs;
  }
  for (auto& r : rows) {
    if (r.runs == 0) continue;
    const double k = static_cast<double>(r.runs);
    r.constraint_keep_pct /= k;
    r.adf_keep_pct /= k;
    r.avg_time /= k;
    r.feasible_pct /= k;
    r.collision_pct /= k;
  }
  return rows;
}

}  // namespace shield::mpc
