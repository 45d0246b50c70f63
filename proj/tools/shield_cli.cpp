// Command-line front end: solve, shield, simulate, sweep, collect, train.
//
// Exit codes: 0 success / optimal, 1 parse or input error, 2 infeasible,
// 3 iteration limit.

#include "shield/shield.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace {

using namespace shield;
using io::Json;

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitInfeasible = 2;
constexpr int kExitMaxIter = 3;

struct Common {
  std::string out;
  std::string format = "csv";
  bool timing = false;
  std::optional<double> epsilon, zeta, lambda;
  std::uint64_t seed = 0;
};

void emit(const Common& c, const std::string& text) {
  if (c.out.empty()) std::cout << text;
  else io::write_file(c.out, text);
}

int exit_for(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return kExitOk;
    case SolveStatus::infeasible: return kExitInfeasible;
    case SolveStatus::max_iter: return kExitMaxIter;
  }
  return kExitInput;
}

RegularizedProgram load_checked(const std::string& path, const Common& c) {
  RegularizedProgram p = io::load_program(path);
  if (c.lambda || c.zeta || c.epsilon)
    p = p.with_parameters(c.lambda.value_or(p.lambda()), c.zeta.value_or(p.zeta()), c.epsilon.value_or(p.epsilon()));
  const ValidationReport rep = validate(p);
  if (!rep.ok()) throw io::ParseError(path + ": invalid program:\n" + rep.str());
  return p;
}

Json kkt_json(const KktReport& r) {
  return {{"stationarity", io::number(r.stationarity)}, {"primal", io::number(r.primal)},
          {"dual", io::number(r.dual)},                 {"complementarity", io::number(r.complementarity)},
          {"support", io::number(r.support)},           {"max", io::number(r.max())}};
}

// ---------------------------------------------------------------------------

struct SolveArgs {
  std::string file;
  bool reduced = false;
  bool dual = false;
  bool kkt_report = false;
  bool untightened = false;
};

int cmd_solve(const SolveArgs& a, const Common& c) {
  const RegularizedProgram p = load_checked(a.file, c);
  Json rec;
  rec["command"] = "solve";
  rec["file"] = a.file;
  rec["epsilon_crit"] = io::number(epsilon_crit(p));
  Solution sol;
  if (a.reduced) {
    // certificate-only screening with an empty prediction
    ShieldOptions opt;
    opt.certificate_only = true;
    opt.refinement_rounds = 30;
    const ShieldResult r = shield_step(p, DualClass::constant(p.num_screenable(), p.num_selected(), 0), opt);
    rec["reduced"] = io::shield_to_json(r, c.timing);
    rec["reduced"].erase("solution");
    sol = r.solution;
  } else {
    SolveOptions so;
    so.tighten = !a.untightened;
    sol = solve(p, std::nullopt, so);
  }
  rec["solution"] = io::solution_to_json(sol);
  if (a.kkt_report && sol.theta.size() == p.n())
    rec["kkt_report"] = kkt_json(kkt_report(p, sol.theta, sol.s, sol.multipliers, !a.untightened || a.reduced));
  if (a.dual) {
    // the dual always applies the ζ shift; pre-shifting by −ζ undoes it
    const DualObjective obj(a.untightened && !a.reduced ? tighten(p, -p.zeta()) : p);
    try {
      const DualSolveResult d = solve_dual_exact_detailed(obj);
      Json dj = io::dual_to_json(d.point);
      // minimization-form dual value: p* = −d(y*)
      dj["value"] = io::number(obj.value(d.point.stacked()));
      dj["gap"] = io::number(gap(obj, d.point));
      dj["residual"] = io::number(d.residual);
      rec["dual"] = std::move(dj);
    } catch (const DualSolveError& e) {
      rec["dual"] = {{"error", e.what()}, {"residual", io::number(e.residual())}};
    }
  }
  emit(c, rec.dump(2) + "\n");
  return exit_for(sol.status);
}

// ---------------------------------------------------------------------------

/// Model argument: a model file, or one of all_active, zeros, oracle, random[:seed].
PredictorModel resolve_model(const std::string& spec, const RegularizedProgram& p, std::uint64_t seed) {
  const FeatureLayout none{0, 0, 0, 2};
  if (spec == "all_active") return PredictorModel::all_active(none, p.num_screenable(), p.num_selected(), p.zeta());
  if (spec == "zeros")
    return PredictorModel::constant_logistic(none, DualClass::constant(p.num_screenable(), p.num_selected(), 0), p.zeta());
  if (spec == "oracle") {
    const auto y = exact_dual(p);
    if (!y) throw std::runtime_error("oracle: exact dual solve did not converge");
    return PredictorModel::constant_logistic(none, label_dual(*y, p.lambda()), p.zeta());
  }
  if (spec.rfind("random", 0) == 0) {
    std::uint64_t s = seed;
    if (spec.size() > 7 && spec[6] == ':') s = std::stoull(spec.substr(7));
    std::mt19937_64 rng(s);
    std::uniform_int_distribution<int> bit(0, 1);
    DualClass cls = DualClass::constant(p.num_screenable(), p.num_selected(), 0);
    for (auto& v : cls.mu_class) v = static_cast<std::uint8_t>(bit(rng));
    for (auto& v : cls.g_class) v = static_cast<std::uint8_t>(bit(rng));
    return PredictorModel::constant_logistic(none, cls, p.zeta());
  }
  return io::load_model(spec);
}

struct ShieldArgs {
  std::string file;
  std::string model = "zeros";
  std::string features;
  bool zeta_check = false;
  int refine = 0;
};

int cmd_shield(const ShieldArgs& a, const Common& c) {
  const RegularizedProgram p = load_checked(a.file, c);
  const PredictorModel model = resolve_model(a.model, p, c.seed);
  check_outputs(model, p);
  if (auto w = check_zeta(model, p)) {
    if (a.zeta_check) throw io::ParseError(*w);
    std::cerr << "warning: " << *w << '\n';
  }
  FeatureVector z(model.layout, Vector::Zero(model.layout.size()));
  if (!a.features.empty()) {
    const TrainingSample s = io::sample_from_json(io::parse_json(io::read_file(a.features), a.features), a.features);
    z = s.feature;
  }
  ShieldOptions opt;
  opt.refinement_rounds = a.refine;
  const double crit = epsilon_crit(p);
  if (p.epsilon() > crit) {
    std::cerr << "warning: epsilon " << io::format_number(p.epsilon()) << " exceeds epsilon_crit "
              << io::format_number(crit) << "; screening disabled\n";
    opt.screen = false;
  }
  const ShieldResult r = shield_step(p, [&] { return predict(model, z); }, opt);
  Json rec;
  rec["command"] = "shield";
  rec["file"] = a.file;
  rec["model"] = a.model;
  rec["epsilon"] = io::number(p.epsilon());
  rec["epsilon_crit"] = io::number(crit);
  Json body = io::shield_to_json(r, c.timing);
  for (auto it = body.begin(); it != body.end(); ++it) rec[it.key()] = it.value();
  emit(c, rec.dump(2) + "\n");
  return exit_for(r.solution.status);
}

// ---------------------------------------------------------------------------

struct ScenarioArgs {
  std::string scenario;
  int seeds = 1;
  int steps = 50;
  std::string classifier = "heuristic";
  int refine = 30;
};

std::vector<mpc::ScenarioConfig> scenarios_of(const ScenarioArgs& a, const Common& c, mpc::StepParams& params) {
  std::vector<mpc::ScenarioConfig> out;
  if (!a.scenario.empty()) {
    const io::ScenarioFile f = io::load_scenario(a.scenario);
    params = f.params;
    out.push_back(f.config);
  } else {
    for (int i = 0; i < a.seeds; ++i) {
      mpc::ScenarioConfig cfg;
      cfg.seed = c.seed + static_cast<std::uint64_t>(i);
      cfg.steps = a.steps;
      out.push_back(cfg);
    }
  }
  if (c.lambda) params.lambda = *c.lambda;
  if (c.zeta) params.zeta = *c.zeta;
  if (c.epsilon) params.epsilon = *c.epsilon;
  return out;
}

/// Classifier for the reduced arm: heuristic, all_active, random[:seed] or a model file.
mpc::ClassProvider classifier_of(const std::string& spec, std::uint64_t seed) {
  if (spec == "heuristic") return {};
  if (spec == "all_active") {
    return [](const FeatureVector&, const RegularizedProgram& p) {
      return DualClass::constant(p.num_screenable(), p.num_selected(), 1);
    };
  }
  if (spec.rfind("random", 0) == 0) {
    std::uint64_t s = seed;
    if (spec.size() > 7 && spec[6] == ':') s = std::stoull(spec.substr(7));
    return mpc::random_provider(s);
  }
  return mpc::model_provider(io::load_model(spec));
}

struct SimulateArgs {
  ScenarioArgs scen;
  std::string policy = "both";
  std::string step_log;
};

int cmd_simulate(const SimulateArgs& a, const Common& c) {
  mpc::SimulationOptions opt;
  const auto cfgs = scenarios_of(a.scen, c, opt.params);
  opt.classes = classifier_of(a.scen.classifier, c.seed);
  opt.shield.refinement_rounds = a.scen.refine;
  const io::TableFormat fmt = io::parse_table_format(c.format);
  std::vector<io::Row> summary, steps;
  bool feasible = true;
  for (const auto& cfg : cfgs) {
    std::optional<mpc::RunMetrics> full, red;
    if (a.policy == "full" || a.policy == "both") full = mpc::simulate(mpc::Policy::full, cfg, opt);
    if (a.policy == "reduced" || a.policy == "both") red = mpc::simulate(mpc::Policy::reduced, cfg, opt);
    const double ade = full && red ? mpc::average_displacement(*full, *red) : 0.0;
    for (const auto* run : {full ? &*full : nullptr, red ? &*red : nullptr}) {
      if (!run) continue;
      feasible = feasible && run->feasible;
      summary.push_back(io::summary_row(*run, ade, c.timing));
      for (const auto& s : run->steps) steps.push_back(io::step_row(*run, s, c.timing));
    }
  }
  emit(c, io::format_table(summary, fmt));
  if (!a.step_log.empty()) io::write_file(a.step_log, io::format_table(steps, fmt));
  return feasible ? kExitOk : kExitInfeasible;
}

struct SweepArgs {
  ScenarioArgs scen;
  std::vector<double> epsilons{0.001, 0.01, 0.1};
  std::vector<double> lambdas{100.0};
};

int cmd_sweep(const SweepArgs& a, const Common& c) {
  mpc::SimulationOptions opt;
  const auto cfgs = scenarios_of(a.scen, c, opt.params);
  opt.classes = classifier_of(a.scen.classifier, c.seed);
  if (a.scen.classifier.rfind("random", 0) == 0)
    throw std::invalid_argument("sweep: the random classifier is stateful and cannot be shared across workers");
  opt.shield.refinement_rounds = a.scen.refine;
  const auto rows = mpc::sweep(a.epsilons, a.lambdas, cfgs, opt);
  std::vector<io::Row> table;
  for (const auto& r : rows) table.push_back(io::sweep_row(r, c.timing));
  emit(c, io::format_table(table, io::parse_table_format(c.format)));
  return kExitOk;
}

struct CollectArgs {
  ScenarioArgs scen;
  std::string oracle = "primal";
};

int cmd_collect(const CollectArgs& a, const Common& c) {
  mpc::StepParams params;
  const auto cfgs = scenarios_of(a.scen, c, params);
  std::vector<LabeledProgram> programs;
  for (const auto& cfg : cfgs) {
    auto r = mpc::rollout_programs(cfg, params);
    for (auto& lp : r) programs.push_back(std::move(lp));
  }
  DualOracle oracle;
  if (a.oracle == "primal") oracle = primal_multipliers;
  else if (a.oracle == "dual") oracle = exact_dual;
  else throw std::invalid_argument("unknown oracle '" + a.oracle + "' (expected primal or dual)");
  CollectReport rep;
  const auto samples = collect(programs, oracle, &rep, &std::cerr);
  std::cerr << "collect: " << rep.solved << " samples, " << rep.skipped << " skipped\n";
  emit(c, io::samples_to_jsonl(samples));
  return kExitOk;
}

struct TrainArgs {
  std::string data;
  TrainConfig cfg;
};

Json confusion_json(const Confusion& m) {
  return {{"tp", m.tp},
          {"fp", m.fp},
          {"tn", m.tn},
          {"fn", m.fn},
          {"recall", io::number(m.recall())},
          {"precision", io::number(m.precision())},
          {"accuracy", io::number(m.accuracy())}};
}

int cmd_train(TrainArgs a, const Common& c) {
  if (a.data.empty()) throw std::invalid_argument("train: --data is required");
  const auto samples = io::samples_from_jsonl(io::read_file(a.data), a.data);
  a.cfg.seed = c.seed;
  if (c.zeta) a.cfg.zeta = *c.zeta;
  TrainReport rep;
  const PredictorModel m = train(samples, a.cfg, &rep);
  if (c.out.empty()) throw std::invalid_argument("train: --out <model file> is required");
  io::save_model(c.out, m);
  Json r;
  r["command"] = "train";
  r["samples"] = samples.size();
  r["train_samples"] = rep.train_samples;
  r["eval_samples"] = rep.eval_samples;
  r["train_bce"] = io::number(rep.train_bce);
  r["eval_bce"] = io::number(rep.eval_bce);
  r["train"] = confusion_json(rep.train);
  r["eval"] = confusion_json(rep.eval);
  std::cout << r.dump(2) << "\n";
  return kExitOk;
}

void add_common(CLI::App* app, Common& c, bool tables) {
  app->add_option("--seed", c.seed, "base random seed");
  app->add_option("--epsilon", c.epsilon, "cost tolerance override");
  app->add_option("--zeta", c.zeta, "safety margin override");
  app->add_option("--lambda", c.lambda, "l1 weight override");
  app->add_option("--out", c.out, "output path (default: standard output)");
  app->add_flag("--timing", c.timing, "include wall-clock timings (output is then not reproducible)");
  if (tables)
    app->add_option("--format", c.format, "table format")->check(CLI::IsMember({"csv", "json-lines"}));
}

void add_scenario(CLI::App* app, ScenarioArgs& s) {
  app->add_option("--scenario", s.scenario, "scenario file (overrides --seeds)");
  app->add_option("--seeds", s.seeds, "number of seeded scenarios starting at --seed")->check(CLI::PositiveNumber);
  app->add_option("--steps", s.steps, "closed-loop steps per scenario")->check(CLI::PositiveNumber);
  app->add_option("--classifier", s.classifier, "heuristic, all_active, random[:seed] or a model file");
  app->add_option("--refine", s.refine, "active-set refinement rounds in each screening step")->check(CLI::NonNegativeNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Safe screening for l1-regularized QPs and an obstacle-avoidance MPC harness"};
  app.require_subcommand(1);

  Common common;
  SolveArgs sa;
  auto* solve_cmd = app.add_subcommand("solve", "solve one shield-v1 program");
  solve_cmd->add_option("file", sa.file, "program file")->required();
  solve_cmd->add_flag("--reduced", sa.reduced, "screen with the dual certificate alone, then solve the reduced program");
  solve_cmd->add_flag("--dual", sa.dual, "also report the exact dual, its value and gap");
  solve_cmd->add_flag("--kkt-report", sa.kkt_report, "report the KKT residual per condition");
  solve_cmd->add_flag("--untightened", sa.untightened, "solve without the zeta shift");
  add_common(solve_cmd, common, false);

  ShieldArgs sh;
  auto* shield_cmd = app.add_subcommand("shield", "one screening step on a program");
  shield_cmd->add_option("file", sh.file, "program file")->required();
  shield_cmd->add_option("--model", sh.model, "model file, or all_active, zeros, oracle, random[:seed]");
  shield_cmd->add_option("--features", sh.features, "feature record (one sample line) for the model");
  shield_cmd->add_flag("--zeta-check", sh.zeta_check, "fail when the model was trained for another zeta");
  shield_cmd->add_option("--refine", sh.refine, "active-set refinement rounds")->check(CLI::NonNegativeNumber);
  add_common(shield_cmd, common, false);

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "closed-loop runs, one summary row per run");
  add_scenario(sim_cmd, sim.scen);
  sim_cmd->add_option("--policy", sim.policy, "full, reduced or both")->check(CLI::IsMember({"full", "reduced", "both"}));
  sim_cmd->add_option("--step-log", sim.step_log, "also write one row per step to this path");
  add_common(sim_cmd, common, true);

  SweepArgs sw;
  auto* sweep_cmd = app.add_subcommand("sweep", "reduced-arm runs over an epsilon/lambda grid");
  add_scenario(sweep_cmd, sw.scen);
  sweep_cmd->add_option("--epsilons", sw.epsilons, "epsilon grid")->delimiter(',');
  sweep_cmd->add_option("--lambdas", sw.lambdas, "lambda grid")->delimiter(',');
  add_common(sweep_cmd, common, true);

  CollectArgs co;
  auto* collect_cmd = app.add_subcommand("collect", "label closed-loop MPC steps with exact duals (JSON lines)");
  add_scenario(collect_cmd, co.scen);
  collect_cmd->add_option("--oracle", co.oracle, "primal (solver multipliers) or dual (projected Newton)");
  add_common(collect_cmd, common, false);

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "fit the per-output logistic predictor");
  train_cmd->add_option("--data", tr.data, "JSON-lines samples")->required();
  train_cmd->add_option("--epochs", tr.cfg.epochs)->check(CLI::PositiveNumber);
  train_cmd->add_option("--step-size", tr.cfg.step_size)->check(CLI::PositiveNumber);
  train_cmd->add_option("--w-pos", tr.cfg.weight_positive, "class-1 loss weight");
  train_cmd->add_option("--w-neg", tr.cfg.weight_negative, "class-0 loss weight");
  train_cmd->add_option("--eval-fraction", tr.cfg.eval_fraction)->check(CLI::Range(0.0, 0.9));
  train_cmd->add_option("--tau", tr.cfg.tau, "decision threshold")->check(CLI::Range(0.0, 1.0));
  add_common(train_cmd, common, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (solve_cmd->parsed()) return cmd_solve(sa, common);
    if (shield_cmd->parsed()) return cmd_shield(sh, common);
    if (sim_cmd->parsed()) return cmd_simulate(sim, common);
    if (sweep_cmd->parsed()) return cmd_sweep(sw, common);
    if (collect_cmd->parsed()) return cmd_collect(co, common);
    if (train_cmd->parsed()) return cmd_train(tr, common);
  } catch (const io::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitInput;
}
