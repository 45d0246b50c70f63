// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
//
//   shield_acceptance [--only N]

#include "shield/shield.hpp"
#include "support/oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

using namespace shield;
using shield::testing::InstanceShape;
using shield::testing::random_program;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

InstanceShape large_shape() {
  InstanceShape s;
  s.n_min = 1;
  s.n_max = 30;
  s.screenable_max = 100;
  s.immutable_max = 10;
  s.equality_max = 3;
  s.selected_max = 30;
  return s;
}

// Instances with at most n dual coordinates so the gap bound is finite.
InstanceShape gap_shape() {
  InstanceShape s;
  s.n_min = 4;
  s.n_max = 20;
  s.screenable_max = 6;
  s.immutable_max = 3;
  s.equality_max = 2;
  s.selected_max = 6;
  return s;
}

InstanceShape small_shape() {
  InstanceShape s;
  s.n_min = 1;
  s.n_max = 8;
  s.screenable_max = 5;
  s.immutable_max = 2;
  s.equality_max = 1;
  s.selected_max = 3;
  return s;
}

DualClass random_classes(std::mt19937_64& rng, Index c, Index q) {
  std::bernoulli_distribution bit(0.5);
  DualClass cls = DualClass::constant(c, q, 0);
  for (auto& v : cls.mu_class) v = bit(rng);
  for (auto& v : cls.g_class) v = bit(rng);
  return cls;
}

// ---------------------------------------------------------------------------

struct ScreeningSuite {
  std::size_t instances = 0, solved = 0;
  std::size_t screened_rows = 0, screened_vars = 0, rows = 0, vars = 0;
  double worst_row = 0.0;       // original inequality at the reduced optimum, over K
  double worst_var = 0.0;       // |θ_full| over I
  double worst_objective = 0.0; // |reduced − full| objective
  std::size_t failures = 0;
  double seconds = 0.0;
};

const ScreeningSuite& screening_suite() {
  static const ScreeningSuite suite = [] {
    ScreeningSuite s;
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(20240601);
    const InstanceShape shape = large_shape();
    for (int inst = 0; inst < 500; ++inst) {
      const RegularizedProgram p = random_program(rng, shape);
      ++s.instances;
      const Solution full = solve(p);
      if (!full.optimal()) {
        ++s.failures;
        continue;
      }
      // three predictors per instance: oracle labels, random classes, certificate only
      const auto ystar = exact_dual(p);
      DualClass oracle = ystar ? label_dual(*ystar, p.lambda()) : DualClass::constant(p.num_screenable(), p.num_selected(), 1);
      const DualClass rnd = random_classes(rng, p.num_screenable(), p.num_selected());
      struct Arm {
        DualClass cls;
        bool cert_only;
        int rounds;
      };
      const Arm arms[] = {{oracle, false, 0}, {rnd, false, 10}, {DualClass::constant(p.num_screenable(), p.num_selected(), 0), true, 10}};
      for (const Arm& arm : arms) {
        ShieldOptions opt;
        opt.certificate_only = arm.cert_only;
        opt.refinement_rounds = arm.rounds;
        const ShieldResult r = shield_step(p, arm.cls, opt);
        if (!r.solution.optimal()) {
          ++s.failures;
          continue;
        }
        ++s.solved;
        s.rows += static_cast<std::size_t>(p.num_screenable());
        s.vars += static_cast<std::size_t>(p.num_selected());
        s.screened_rows += r.sets.K.size();
        s.screened_vars += r.sets.I.size();
        for (Index i : r.sets.K)
          s.worst_row = std::max(s.worst_row, p.screenable().A.row(i).dot(r.solution.theta) - p.screenable().b[i]);
        for (Index j : r.sets.I)
          s.worst_var = std::max(s.worst_var, std::abs(full.theta[p.selected()[static_cast<std::size_t>(j)]]));
        s.worst_objective = std::max(s.worst_objective, std::abs(r.solution.objective - full.objective) /
                                                            (1.0 + std::abs(full.objective)));
      }
    }
    s.seconds = seconds_since(t0);
    return s;
  }();
  return suite;
}

Outcome criterion_1() {
  const ScreeningSuite& s = screening_suite();
  Outcome o;
  o.pass = s.failures == 0 && s.worst_row <= 1e-8 && s.seconds <= 120.0 && s.screened_rows > 0;
  std::ostringstream os;
  os << s.instances << " instances, " << s.solved << " screening runs, " << s.screened_rows << "/" << s.rows
     << " rows screened, worst original row value " << fmt("%.3g", s.worst_row) << ", failures " << s.failures
     << ", " << fmt("%.1f", s.seconds) << " s";
  o.detail = os.str();
  return o;
}

Outcome criterion_2() {
  const ScreeningSuite& s = screening_suite();
  Outcome o;
  o.pass = s.failures == 0 && s.worst_var <= 1e-8 && s.screened_vars > 0;
  std::ostringstream os;
  os << s.screened_vars << "/" << s.vars << " variables screened, worst |theta_full| " << fmt("%.3g", s.worst_var)
     << ", worst relative objective change " << fmt("%.3g", s.worst_objective);
  o.detail = os.str();
  return o;
}

Outcome criterion_3() {
  std::mt19937_64 rng(20240602);
  const InstanceShape shape = gap_shape();
  std::size_t pairs = 0, finite = 0, bad = 0;
  double worst_slack = -kInfinity, worst_tight = 0.0;
  std::exponential_distribution<double> ex(1.0);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> un(-1.0, 1.0), scale(0.0, 1.0);
  while (pairs < 500) {
    const RegularizedProgram p = random_program(rng, shape);
    const DualObjective obj(p);
    if (obj.layout().size() > p.n()) continue;
    DualSolveOptions dopt;
    dopt.tolerance = 1e-13;
    DualPoint ys;
    try {
      ys = solve_dual_exact(obj, dopt);
    } catch (const DualSolveError&) {
      ++bad;
      ++pairs;
      continue;
    }
    worst_tight = std::max(worst_tight, gap(obj, ys));
    // random feasible dual: half far away, half near the optimum
    DualPoint y = ys;
    const double s = pairs % 2 ? 3.0 : 1e-3 * scale(rng);
    for (Index i = 0; i < y.mu.size(); ++i) y.mu[i] = pairs % 2 ? s * ex(rng) : std::max(0.0, y.mu[i] + s * nd(rng));
    for (Index i = 0; i < y.eta.size(); ++i) y.eta[i] = pairs % 2 ? s * ex(rng) : std::max(0.0, y.eta[i] + s * nd(rng));
    for (Index i = 0; i < y.nu.size(); ++i) y.nu[i] = pairs % 2 ? s * nd(rng) : y.nu[i] + s * nd(rng);
    for (Index i = 0; i < y.g.size(); ++i)
      y.g[i] = pairs % 2 ? p.lambda() * un(rng) : std::clamp(y.g[i] + s * nd(rng), -p.lambda(), p.lambda());
    const double g = gap(obj, y);
    const double dist = (y.stacked() - ys.stacked()).norm();
    if (std::isfinite(g)) ++finite;
    worst_slack = std::max(worst_slack, dist - g);
    ++pairs;
  }
  Outcome o;
  o.pass = bad == 0 && finite == pairs && worst_slack <= 1e-8 && worst_tight <= 1e-7;
  std::ostringstream os;
  os << pairs << " pairs (" << finite << " finite gaps), max(||y - y*|| - gap(y)) " << fmt("%.3g", worst_slack)
     << ", max gap(y*) " << fmt("%.3g", worst_tight) << ", dual solve failures " << bad;
  o.detail = os.str();
  return o;
}

Outcome criterion_4() {
  std::mt19937_64 rng(20240603);
  InstanceShape shape = small_shape();
  shape.n_max = 15;
  shape.screenable_max = 12;
  std::size_t instances = 0, checks = 0, failures = 0;
  double worst = -kInfinity;
  while (instances < 100) {
    const RegularizedProgram p = random_program(rng, shape);
    if (p.num_screenable() == 0) continue;
    ++instances;
    const Solution base = solve(p);
    if (!base.optimal()) {
      ++failures;
      continue;
    }
    for (Index i = 0; i < p.num_screenable(); ++i) {
      for (double frac : {0.1, 1.0}) {
        const double delta = frac * p.zeta();
        Vector b = p.screenable().b;
        b[i] += delta;
        const Solution relaxed = solve(p.with_screenable_rhs(b));
        if (!relaxed.optimal()) {
          ++failures;
          continue;
        }
        worst = std::max(worst, base.objective - relaxed.objective - delta * base.multipliers.mu[i]);
        ++checks;
      }
    }
  }
  Outcome o;
  o.pass = failures == 0 && worst <= 1e-8;
  std::ostringstream os;
  os << instances << " instances, " << checks << " perturbations, max(p(0) - p(delta) - delta*mu) "
     << fmt("%.3g", worst) << ", failures " << failures;
  o.detail = os.str();
  return o;
}

Outcome criterion_5() {
  std::mt19937_64 rng(20240604);
  const InstanceShape shape = small_shape();
  std::size_t instances = 0, no_oracle = 0, failures = 0;
  double worst_obj = 0.0, worst_kkt = 0.0;
  while (instances < 200) {
    const RegularizedProgram p = random_program(rng, shape);
    ++instances;
    const auto ref = shield::testing::enumerate_optimum(p);
    const Solution s = solve(p);
    if (!ref) {
      ++no_oracle;
      continue;
    }
    if (!s.optimal()) {
      ++failures;
      continue;
    }
    worst_obj = std::max(worst_obj, std::abs(s.objective - ref->objective));
    worst_kkt = std::max(worst_kkt, kkt_residual(p, s.theta, s.s, s.multipliers));
  }
  Outcome o;
  o.pass = failures == 0 && no_oracle == 0 && worst_obj <= 1e-6 && worst_kkt <= 1e-7;
  std::ostringstream os;
  os << instances << " instances, max objective difference " << fmt("%.3g", worst_obj) << ", max KKT residual "
     << fmt("%.3g", worst_kkt) << ", failures " << failures << ", oracle misses " << no_oracle;
  o.detail = os.str();
  return o;
}

Outcome criterion_6() {
  std::mt19937_64 rng(20240605);
  std::size_t instances = 0, failures = 0;
  double worst = 0.0;
  const InstanceShape shapes[] = {small_shape(), gap_shape(), large_shape()};
  for (int k = 0; k < 300; ++k) {
    const RegularizedProgram p = random_program(rng, shapes[k % 3]);
    ++instances;
    const Solution s = solve(p);
    const auto y = exact_dual(p);
    if (!s.optimal() || !y) {
      ++failures;
      continue;
    }
    const double d = dual_value(DualObjective(p), *y);
    worst = std::max(worst, std::abs(s.objective + d));
  }
  Outcome o;
  o.pass = failures == 0 && worst <= 1e-6;
  std::ostringstream os;
  os << instances << " instances, max |p* + d*| " << fmt("%.3g", worst) << ", failures " << failures;
  o.detail = os.str();
  return o;
}

// ---------------------------------------------------------------------------
// Closed loop

std::vector<mpc::ScenarioConfig> scenarios(std::uint64_t first, int count) {
  std::vector<mpc::ScenarioConfig> out;
  for (int i = 0; i < count; ++i) {
    mpc::ScenarioConfig c;
    c.seed = first + static_cast<std::uint64_t>(i);
    out.push_back(c);
  }
  return out;
}

Outcome criterion_7() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto cfgs = scenarios(1000, 20);
  std::vector<mpc::RunMetrics> full(cfgs.size()), red(cfgs.size());
  // timings are compared, so the runs are sequential
  for (std::size_t i = 0; i < cfgs.size(); ++i) {
    full[i] = mpc::simulate(mpc::Policy::full, cfgs[i]);
    red[i] = mpc::simulate(mpc::Policy::reduced, cfgs[i]);
  }
  std::vector<double> tf, tr;
  double keep = 0.0, adf = 0.0, viol = 0.0;
  int infeasible = 0, collisions = 0, full_infeasible = 0;
  for (std::size_t i = 0; i < cfgs.size(); ++i) {
    for (const auto& st : full[i].steps) tf.push_back(st.total_seconds);
    for (const auto& st : red[i].steps) tr.push_back(st.total_seconds);
    keep += red[i].average(&mpc::StepMetrics::enforced_pct);
    adf += red[i].average(&mpc::StepMetrics::adf_kept_pct);
    viol = std::max(viol, red[i].max_violation());
    infeasible += !red[i].feasible || red[i].steps_completed != cfgs[i].steps;
    collisions += red[i].collision;
    full_infeasible += !full[i].feasible;
  }
  keep /= static_cast<double>(cfgs.size());
  adf /= static_cast<double>(cfgs.size());
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.empty() ? 0.0 : v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
  };
  const double mf = median(tf), mr = median(tr);
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = infeasible == 0 && collisions == 0 && keep < 60.0 && adf < 60.0 && mr < mf && viol <= 1e-8 &&
           secs <= 600.0;
  std::ostringstream os;
  os << "20 scenarios: reduced infeasible " << infeasible << ", collisions " << collisions << ", keep "
     << fmt("%.2f", keep) << "%, ADF keep " << fmt("%.2f", adf) << "%, median step " << fmt("%.2f", mr * 1e3)
     << " ms vs full " << fmt("%.2f", mf * 1e3) << " ms, max violation " << fmt("%.3g", viol)
     << " (full arm infeasible " << full_infeasible << "), " << fmt("%.0f", secs) << " s";
  o.detail = os.str();
  return o;
}

Outcome criterion_8() {
  const std::vector<double> eps{0.001, 0.01, 0.1};
  const auto rows = mpc::sweep(eps, {100.0}, scenarios(2000, 10));
  bool monotone = true, safe = true;
  std::ostringstream os;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i > 0 && rows[i].constraint_keep_pct > rows[i - 1].constraint_keep_pct) monotone = false;
    if (rows[i].feasible_pct < 100.0 || rows[i].collision_pct > 0.0) safe = false;
    os << (i ? "; " : "") << "eps " << rows[i].epsilon << ": keep " << fmt("%.3f", rows[i].constraint_keep_pct)
       << "%, feasible " << fmt("%.1f", rows[i].feasible_pct) << "%, collisions "
       << fmt("%.1f", rows[i].collision_pct) << "%";
  }
  return {monotone && safe, os.str()};
}

Outcome criterion_9() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto cfgs = scenarios(3000, 24);
  std::vector<std::vector<LabeledProgram>> per(cfgs.size());
  std::vector<std::vector<TrainingSample>> samples_per(cfgs.size());
  mpc::parallel_for(cfgs.size(), mpc::sweep_threads(), [&](std::size_t i) {
    per[i] = mpc::rollout_programs(cfgs[i]);
    samples_per[i] = collect(per[i], primal_multipliers);
  });
  std::vector<TrainingSample> samples;
  std::vector<LabeledProgram> programs;
  for (std::size_t i = 0; i < cfgs.size(); ++i) {
    samples.insert(samples.end(), samples_per[i].begin(), samples_per[i].end());
    for (auto& lp : per[i]) programs.push_back(std::move(lp));
  }
  TrainConfig tc;
  tc.epochs = 60;
  tc.weight_positive = 20.0;
  tc.eval_fraction = 0.15;
  tc.seed = 7;
  TrainReport rep;
  const PredictorModel model = train(samples, tc, &rep);

  // dual-approximation time on a sample of the programs
  double t_class = 0.0, t_full = 0.0;
  std::size_t timed = 0;
  for (std::size_t i = 0; i < programs.size(); i += 10) {
    const auto& lp = programs[i];
    ShieldOptions so;
    so.refinement_rounds = 30;
    const ShieldResult r = shield_step(lp.program, [&] { return predict(model, lp.feature); }, so);
    t_class += r.diagnostics.dual_seconds;
    const DualObjective obj(lp.program);
    std::vector<Index> all(static_cast<std::size_t>(lp.program.num_screenable()));
    std::iota(all.begin(), all.end(), Index{0});
    const auto t = std::chrono::steady_clock::now();
    const FaceSolve fs = solve_reduced_unconstrained(obj, all, {});
    t_full += seconds_since(t);
    (void)fs;
    ++timed;
  }
  t_class /= static_cast<double>(timed);
  t_full /= static_cast<double>(timed);
  const double recall = rep.eval.recall();
  Outcome o;
  o.pass = samples.size() >= 1000 && recall >= 0.85 && t_class <= t_full;
  std::ostringstream os;
  os << samples.size() << " samples, held-out " << rep.eval_samples << ", recall " << fmt("%.3f", recall)
     << ", precision " << fmt("%.3f", rep.eval.precision()) << ", dual approx " << fmt("%.2f", t_class * 1e3)
     << " ms vs full-dimensional " << fmt("%.2f", t_full * 1e3) << " ms, " << fmt("%.0f", seconds_since(t0))
     << " s";
  o.detail = os.str();
  return o;
}

Outcome criterion_10() {
  // with refinement (harness default) and without, where the random classes fix the face
  const auto cfgs = scenarios(4000, 20);
  std::ostringstream os;
  bool pass = true;
  for (int rounds : {30, 0}) {
    std::vector<mpc::RunMetrics> runs(cfgs.size());
    mpc::parallel_for(cfgs.size(), mpc::sweep_threads(), [&](std::size_t i) {
      mpc::SimulationOptions opt;
      opt.shield.refinement_rounds = rounds;
      opt.classes = mpc::random_provider(cfgs[i].seed * 7919 + 1);
      runs[i] = mpc::simulate(mpc::Policy::reduced, cfgs[i], opt);
    });
    double viol = 0.0, keep = 0.0;
    int infeasible = 0, collisions = 0, fallbacks = 0;
    for (const auto& r : runs) {
      viol = std::max(viol, r.max_violation());
      infeasible += !r.feasible;
      collisions += r.collision;
      fallbacks += r.fallbacks();
      keep += r.average(&mpc::StepMetrics::enforced_pct) / static_cast<double>(runs.size());
    }
    pass = pass && viol <= 1e-8 && infeasible == 0;
    os << (rounds ? "" : "; ") << "refinement " << rounds << ": max original violation " << fmt("%.3g", viol)
       << ", infeasible " << infeasible << ", collisions " << collisions << ", fallbacks " << fallbacks
       << ", keep " << fmt("%.2f", keep) << "%";
  }
  return {pass, "20 rollouts with random classes, " + os.str()};
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i)
    if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) only = std::atoi(argv[++i]);

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"screening safety", criterion_1},
      {"variable screening exactness", criterion_2},
      {"gap bound validity", criterion_3},
      {"sensitivity inequality", criterion_4},
      {"enumeration agreement", criterion_5},
      {"strong duality", criterion_6},
      {"closed loop full vs reduced", criterion_7},
      {"epsilon sweep direction", criterion_8},
      {"predictor pipeline", criterion_9},
      {"random predictor safety", criterion_10},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only != 0 && static_cast<int>(i) + 1 != only) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << (i + 1) << ". " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
