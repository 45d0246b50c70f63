#pragma once

/**
 * @file io.hpp
 * @brief Text formats: shield-v1 program documents, result records, model
 * files, JSON-lines training data, scenario files and CSV / JSON-lines tables.
 *
 * Every number written by this header is rounded to 12 significant digits.
 * Non-finite values are written as null and read back as +∞.
 */

#include "shield/dual.hpp"
#include "shield/mpc.hpp"
#include "shield/predictor.hpp"
#include "shield/primal_solver.hpp"
#include "shield/problem.hpp"
#include "shield/screening.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace shield::io {

using Json = nlohmann::ordered_json;

inline constexpr const char* kProgramVersion = "shield-v1";
inline constexpr const char* kModelVersion = "shield-model-v1";
inline constexpr const char* kScenarioVersion = "shield-scenario-v1";

/// Syntax or schema error; line and column are 1-based, 0 when unknown.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line = 0, std::size_t column = 0)
      : std::runtime_error(what), line_(line), column_(column) {}
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

// ---------------------------------------------------------------------------
// Numbers

/// Decimal text with 12 significant digits; "inf", "-inf" or "nan" otherwise.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

inline double round12(double v) {
  if (!std::isfinite(v)) return v;
  return std::strtod(format_number(v).c_str(), nullptr);
}

/// Result values are rounded to 12 digits; `exact` keeps input data lossless.
inline Json number(double v, bool exact = false) {
  if (!std::isfinite(v)) return nullptr;
  return exact ? v : round12(v);
}

inline Json to_json(const Vector& v, bool exact = false) {
  Json a = Json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(number(v[i], exact));
  return a;
}

inline Json to_json(const Matrix& m, bool exact = false) {
  Json a = Json::array();
  for (Index i = 0; i < m.rows(); ++i) a.push_back(to_json(Vector(m.row(i).transpose()), exact));
  return a;
}

inline Json to_json(const std::vector<Index>& v) {
  Json a = Json::array();
  for (Index i : v) a.push_back(i);
  return a;
}

// ---------------------------------------------------------------------------
// Reading

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
}

/// Parses JSON text, turning syntax errors into line/column diagnostics.
inline Json parse_json(const std::string& text, const std::string& source = "<input>") {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t line = 1, column = 1;
    const std::size_t end = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    for (std::size_t i = 0; i < end; ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    throw ParseError(source + ":" + std::to_string(line) + ":" + std::to_string(column) +
                         ": syntax error: " + e.what(),
                     line, column);
  }
}

namespace detail {

inline const Json& member(const Json& j, const char* key, const std::string& where) {
  if (!j.is_object()) throw ParseError(where + ": expected an object");
  const auto it = j.find(key);
  if (it == j.end()) throw ParseError(where + ": missing key \"" + key + "\"");
  return *it;
}

inline double scalar(const Json& j, const std::string& where) {
  if (j.is_null()) return kInfinity;
  if (!j.is_number()) throw ParseError(where + ": expected a number");
  return j.get<double>();
}

inline Vector vector(const Json& j, const std::string& where) {
  if (!j.is_array()) throw ParseError(where + ": expected an array of numbers");
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Index>(i)] = scalar(j[i], where + "[" + std::to_string(i) + "]");
  return v;
}

/// Row-major nested array; `cols` fixes the width of an empty matrix.
inline Matrix matrix(const Json& j, Index cols, const std::string& where) {
  if (!j.is_array()) throw ParseError(where + ": expected an array of rows");
  Matrix m(static_cast<Index>(j.size()), cols);
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string w = where + "[" + std::to_string(i) + "]";
    const Vector r = vector(j[i], w);
    if (r.size() != cols)
      throw ParseError(w + ": row has " + std::to_string(r.size()) + " entries, expected " + std::to_string(cols));
    m.row(static_cast<Index>(i)) = r.transpose();
  }
  return m;
}

inline std::uint64_t unsigned_integer(const Json& j, const std::string& where) {
  if (!j.is_number_integer() || j.get<std::int64_t>() < 0) throw ParseError(where + ": expected a nonnegative integer");
  return j.get<std::uint64_t>();
}

inline std::vector<std::uint8_t> bits(const Json& j, const std::string& where) {
  if (!j.is_array()) throw ParseError(where + ": expected an array of 0/1");
  std::vector<std::uint8_t> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number_integer() || (j[i].get<int>() != 0 && j[i].get<int>() != 1))
      throw ParseError(where + "[" + std::to_string(i) + "]: expected 0 or 1");
    out.push_back(static_cast<std::uint8_t>(j[i].get<int>()));
  }
  return out;
}

inline Json bits_json(const std::vector<std::uint8_t>& b) {
  Json a = Json::array();
  for (auto v : b) a.push_back(static_cast<int>(v));
  return a;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Programs

inline Json program_to_json(const RegularizedProgram& p) {
  Json j;
  j["version"] = kProgramVersion;
  j["Q"] = to_json(p.Q(), true);
  j["c"] = to_json(p.c(), true);
  j["screenable"] = {{"A", to_json(p.screenable().A, true)}, {"b", to_json(p.screenable().b, true)}};
  j["immutable"] = {{"A", to_json(p.immutable().A, true)}, {"b", to_json(p.immutable().b, true)}};
  j["equality"] = {{"H", to_json(p.equality().H, true)}, {"h", to_json(p.equality().h, true)}};
  j["S_rows"] = to_json(p.selection_matrix());
  j["lambda"] = number(p.lambda(), true);
  j["zeta"] = number(p.zeta(), true);
  j["epsilon"] = number(p.epsilon(), true);
  return j;
}

/// Builds a program from a shield-v1 document. Only the shape is checked
/// here; run validate() for the mathematical preconditions.
inline RegularizedProgram program_from_json(const Json& j, const std::string& source = "<input>") {
  using namespace detail;
  const Json& ver = member(j, "version", source);
  if (!ver.is_string() || ver.get<std::string>() != kProgramVersion)
    throw ParseError(source + ": unsupported version, expected \"" + kProgramVersion + "\"");
  const Vector c = vector(member(j, "c", source), source + ".c");
  const Index n = c.size();
  Matrix Q = matrix(member(j, "Q", source), n, source + ".Q");
  if (Q.rows() != n) throw ParseError(source + ".Q: expected " + std::to_string(n) + " rows");

  auto block = [&](const char* key) {
    const std::string w = source + "." + key;
    if (!j.contains(key)) return ConstraintBlock::empty(n);
    const Json& b = j.at(key);
    Matrix A = matrix(member(b, "A", w), n, w + ".A");
    Vector rhs = vector(member(b, "b", w), w + ".b");
    if (rhs.size() != A.rows()) throw ParseError(w + ": b has " + std::to_string(rhs.size()) + " entries for " + std::to_string(A.rows()) + " rows");
    return ConstraintBlock(std::move(A), std::move(rhs));
  };
  ConstraintBlock scr = block("screenable");
  ConstraintBlock imm = block("immutable");

  EqualityBlock eq = EqualityBlock::empty(n);
  if (j.contains("equality")) {
    const std::string w = source + ".equality";
    eq.H = matrix(member(j.at("equality"), "H", w), n, w + ".H");
    eq.h = vector(member(j.at("equality"), "h", w), w + ".h");
    if (eq.h.size() != eq.H.rows()) throw ParseError(w + ": h does not match the rows of H");
  }

  std::vector<Index> selected;
  if (j.contains("S_rows")) {
    const Matrix S = matrix(j.at("S_rows"), n, source + ".S_rows");
    for (Index r = 0; r < S.rows(); ++r) {
      Index at = -1;
      bool unit = true;
      for (Index k = 0; k < n; ++k) {
        if (S(r, k) == 1.0 && at < 0) at = k;
        else if (S(r, k) != 0.0) unit = false;
      }
      if (!unit || at < 0) throw ParseError(source + ".S_rows[" + std::to_string(r) + "]: not a unit row");
      selected.push_back(at);
    }
  }
  const double lambda = scalar(member(j, "lambda", source), source + ".lambda");
  const double zeta = scalar(member(j, "zeta", source), source + ".zeta");
  const double epsilon = scalar(member(j, "epsilon", source), source + ".epsilon");
  return RegularizedProgram(std::move(Q), c, std::move(scr), std::move(imm), std::move(eq), std::move(selected),
                            lambda, zeta, epsilon);
}

inline RegularizedProgram load_program(const std::string& path) {
  return program_from_json(parse_json(read_file(path), path), path);
}

inline void save_program(const std::string& path, const RegularizedProgram& p) {
  write_file(path, program_to_json(p).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Result records

inline Json dual_to_json(const DualPoint& y) {
  return {{"mu", to_json(y.mu)}, {"eta", to_json(y.eta)}, {"nu", to_json(y.nu)}, {"g", to_json(y.g)}};
}

inline DualPoint dual_from_json(const Json& j, const std::string& where = "dual") {
  using namespace detail;
  return {vector(member(j, "mu", where), where + ".mu"), vector(member(j, "eta", where), where + ".eta"),
          vector(member(j, "nu", where), where + ".nu"), vector(member(j, "g", where), where + ".g")};
}

inline Json solution_to_json(const Solution& s) {
  Json j;
  j["status"] = to_string(s.status);
  j["objective"] = number(s.objective);
  j["theta"] = to_json(s.theta);
  j["s"] = to_json(s.s);
  j["kkt"] = number(s.kkt);
  j["iterations"] = s.iterations;
  j["polished"] = s.polished;
  j["multipliers"] = dual_to_json(s.multipliers);
  return j;
}

inline SolveStatus parse_status(const std::string& s) {
  if (s == "optimal") return SolveStatus::optimal;
  if (s == "infeasible") return SolveStatus::infeasible;
  if (s == "max_iter") return SolveStatus::max_iter;
  throw ParseError("unknown status \"" + s + "\"");
}

inline Solution solution_from_json(const Json& j, const std::string& where = "solution") {
  using namespace detail;
  Solution s;
  const Json& st = member(j, "status", where);
  if (!st.is_string()) throw ParseError(where + ".status: expected a string");
  s.status = parse_status(st.get<std::string>());
  s.objective = scalar(member(j, "objective", where), where + ".objective");
  s.theta = vector(member(j, "theta", where), where + ".theta");
  s.s = vector(member(j, "s", where), where + ".s");
  s.kkt = scalar(member(j, "kkt", where), where + ".kkt");
  s.iterations = static_cast<int>(unsigned_integer(member(j, "iterations", where), where + ".iterations"));
  s.polished = member(j, "polished", where).get<bool>();
  s.multipliers = dual_from_json(member(j, "multipliers", where), where + ".multipliers");
  return s;
}

inline Json shield_to_json(const ShieldResult& r, bool timing = false) {
  const ShieldDiagnostics& d = r.diagnostics;
  Json j;
  j["K"] = to_json(r.sets.K);
  j["I"] = to_json(r.sets.I);
  j["gap"] = number(r.sets.gap_used);
  j["full_gap"] = number(d.full_gap);
  j["face_gap"] = number(d.face_gap);
  j["certified"] = r.sets.certified;
  j["epsilon_exceeds_critical"] = r.sets.epsilon_exceeds_critical;
  j["fallback"] = d.fallback;
  j["fallback_reason"] = d.fallback_reason;
  j["refinement_rounds"] = d.refinement_rounds;
  j["dual_dimension"] = d.dual_dimension;
  j["reduced_variables"] = d.reduced_variables;
  j["reduced_rows"] = d.reduced_rows;
  if (timing) {
    j["timing"] = {{"classifier", number(d.classifier_seconds)},
                   {"dual", number(d.dual_seconds)},
                   {"gap", number(d.gap_seconds)},
                   {"reduced", number(d.reduced_seconds)},
                   {"total", number(d.total_seconds)}};
  }
  j["solution"] = solution_to_json(r.solution);
  return j;
}

// ---------------------------------------------------------------------------
// Predictor models and training data

inline Json layout_to_json(const FeatureLayout& l) {
  return {{"agents", l.agents}, {"modes", l.modes}, {"steps", l.steps}, {"coords", l.coords}};
}

inline FeatureLayout layout_from_json(const Json& j, const std::string& where) {
  using namespace detail;
  FeatureLayout l;
  l.agents = static_cast<Index>(unsigned_integer(member(j, "agents", where), where + ".agents"));
  l.modes = static_cast<Index>(unsigned_integer(member(j, "modes", where), where + ".modes"));
  l.steps = static_cast<Index>(unsigned_integer(member(j, "steps", where), where + ".steps"));
  l.coords = static_cast<Index>(unsigned_integer(member(j, "coords", where), where + ".coords"));
  return l;
}

/// Header fields followed by flat row-major weights (outputs × features).
inline Json model_to_json(const PredictorModel& m) {
  Json j;
  j["version"] = kModelVersion;
  j["kind"] = to_string(m.kind);
  j["layout"] = layout_to_json(m.layout);
  j["num_mu"] = m.num_mu;
  j["num_g"] = m.num_g;
  j["zeta"] = number(m.zeta);
  j["tau"] = number(m.tau);
  j["seed"] = m.seed;
  j["distance_threshold"] = number(m.distance_threshold);
  j["per_step"] = m.per_step;
  j["step_advance"] = number(m.step_advance);
  j["features"] = m.feature_mean.size();
  j["feature_mean"] = to_json(m.feature_mean, true);
  j["feature_scale"] = to_json(m.feature_scale, true);
  Json w = Json::array();
  for (Index r = 0; r < m.weights.rows(); ++r)
    for (Index c = 0; c < m.weights.cols(); ++c) w.push_back(number(m.weights(r, c), true));
  j["weights"] = std::move(w);
  j["bias"] = to_json(m.bias, true);
  return j;
}

inline PredictorModel model_from_json(const Json& j, const std::string& source = "<model>") {
  using namespace detail;
  const Json& ver = member(j, "version", source);
  if (!ver.is_string() || ver.get<std::string>() != kModelVersion)
    throw ParseError(source + ": unsupported version, expected \"" + kModelVersion + "\"");
  PredictorModel m;
  const Json& kind = member(j, "kind", source);
  if (!kind.is_string()) throw ParseError(source + ".kind: expected a string");
  try {
    m.kind = parse_predictor_kind(kind.get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw ParseError(source + ".kind: " + e.what());
  }
  m.layout = layout_from_json(member(j, "layout", source), source + ".layout");
  m.num_mu = static_cast<Index>(unsigned_integer(member(j, "num_mu", source), source + ".num_mu"));
  m.num_g = static_cast<Index>(unsigned_integer(member(j, "num_g", source), source + ".num_g"));
  m.zeta = scalar(member(j, "zeta", source), source + ".zeta");
  m.tau = scalar(member(j, "tau", source), source + ".tau");
  m.seed = unsigned_integer(member(j, "seed", source), source + ".seed");
  m.distance_threshold = scalar(member(j, "distance_threshold", source), source + ".distance_threshold");
  if (j.contains("per_step")) m.per_step = j.at("per_step").get<bool>();
  if (j.contains("step_advance")) m.step_advance = scalar(j.at("step_advance"), source + ".step_advance");
  if (!(m.tau > 0.0 && m.tau < 1.0)) throw ParseError(source + ".tau: must lie in (0, 1)");
  if (m.kind == PredictorKind::logistic) {
    const auto f = static_cast<Index>(unsigned_integer(member(j, "features", source), source + ".features"));
    m.feature_mean = vector(member(j, "feature_mean", source), source + ".feature_mean");
    m.feature_scale = vector(member(j, "feature_scale", source), source + ".feature_scale");
    const Vector w = vector(member(j, "weights", source), source + ".weights");
    m.bias = vector(member(j, "bias", source), source + ".bias");
    if (m.feature_mean.size() != f || m.feature_scale.size() != f || w.size() != m.outputs() * f ||
        m.bias.size() != m.outputs())
      throw ParseError(source + ": weight arrays do not match the header dimensions");
    m.weights.resize(m.outputs(), f);
    for (Index r = 0; r < m.outputs(); ++r)
      for (Index c = 0; c < f; ++c) m.weights(r, c) = w[r * f + c];
  }
  return m;
}

inline PredictorModel load_model(const std::string& path) { return model_from_json(parse_json(read_file(path), path), path); }

inline void save_model(const std::string& path, const PredictorModel& m) {
  write_file(path, model_to_json(m).dump(2) + "\n");
}

inline Json sample_to_json(const TrainingSample& s) {
  Json j;
  j["layout"] = layout_to_json(s.feature.layout);
  j["feature"] = to_json(s.feature.values, true);
  j["mu_label"] = detail::bits_json(s.mu_label);
  j["g_label"] = detail::bits_json(s.g_label);
  return j;
}

inline TrainingSample sample_from_json(const Json& j, const std::string& where = "sample") {
  using namespace detail;
  TrainingSample s;
  const FeatureLayout l = layout_from_json(member(j, "layout", where), where + ".layout");
  try {
    s.feature = FeatureVector(l, vector(member(j, "feature", where), where + ".feature"));
  } catch (const std::invalid_argument& e) {
    throw ParseError(where + ".feature: " + e.what());
  }
  s.mu_label = bits(member(j, "mu_label", where), where + ".mu_label");
  s.g_label = bits(member(j, "g_label", where), where + ".g_label");
  return s;
}

/// One compact JSON object per line.
inline std::string samples_to_jsonl(const std::vector<TrainingSample>& samples) {
  std::string out;
  for (const auto& s : samples) out += sample_to_json(s).dump() + "\n";
  return out;
}

inline std::vector<TrainingSample> samples_from_jsonl(const std::string& text, const std::string& source = "<samples>") {
  std::vector<TrainingSample> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = source + ":" + std::to_string(lineno);
    Json j;
    try {
      j = parse_json(line, where);
    } catch (const ParseError& e) {
      throw ParseError(e.what(), lineno, e.column());
    }
    try {
      out.push_back(sample_from_json(j, where));
    } catch (const ParseError& e) {
      throw ParseError(e.what(), lineno, 0);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scenario files

struct ScenarioFile {
  mpc::ScenarioConfig config;
  mpc::StepParams params;
};

inline Json scenario_to_json(const ScenarioFile& f) {
  const auto& c = f.config;
  Json j;
  j["version"] = kScenarioVersion;
  j["seed"] = c.seed;
  j["V"] = c.agents;
  j["M"] = c.modes;
  j["N"] = c.horizon;
  j["steps"] = c.steps;
  j["dt"] = number(c.dt);
  j["ego_speed"] = number(c.ego_speed);
  j["body_radius"] = number(c.body_radius);
  j["lambda"] = number(f.params.lambda);
  j["zeta"] = number(f.params.zeta);
  j["epsilon"] = number(f.params.epsilon);
  Json agents = Json::array();
  for (const auto& a : c.agent_specs) {
    Json aj;
    aj["position"] = {number(a.position.x()), number(a.position.y())};
    aj["velocity"] = {number(a.velocity.x()), number(a.velocity.y())};
    Json offs = Json::array();
    for (double o : a.lateral_offsets) offs.push_back(number(o));
    aj["lateral_offsets"] = std::move(offs);
    aj["shift_time"] = number(a.shift_time);
    aj["true_mode"] = a.true_mode;
    agents.push_back(std::move(aj));
  }
  j["agents"] = std::move(agents);
  return j;
}

/// Every key except "version" is optional and defaults to the generator's
/// settings; a nonempty "agents" list replaces the seeded agents.
inline ScenarioFile scenario_from_json(const Json& j, const std::string& source = "<scenario>") {
  using namespace detail;
  if (!j.is_object()) throw ParseError(source + ": expected an object");
  const Json& ver = member(j, "version", source);
  if (!ver.is_string() || ver.get<std::string>() != kScenarioVersion)
    throw ParseError(source + ": unsupported version, expected \"" + kScenarioVersion + "\"");
  ScenarioFile f;
  auto& c = f.config;
  auto count = [&](const char* key, Index& out) {
    if (j.contains(key)) out = static_cast<Index>(unsigned_integer(j.at(key), source + "." + key));
  };
  auto real = [&](const char* key, double& out) {
    if (j.contains(key)) out = scalar(j.at(key), source + "." + key);
  };
  if (j.contains("seed")) c.seed = unsigned_integer(j.at("seed"), source + ".seed");
  count("V", c.agents);
  count("M", c.modes);
  count("N", c.horizon);
  if (j.contains("steps")) c.steps = static_cast<int>(unsigned_integer(j.at("steps"), source + ".steps"));
  real("dt", c.dt);
  real("ego_speed", c.ego_speed);
  real("body_radius", c.body_radius);
  real("lambda", f.params.lambda);
  real("zeta", f.params.zeta);
  real("epsilon", f.params.epsilon);
  if (c.modes < 1 || c.horizon < 1) throw ParseError(source + ": M and N must be at least 1");
  if (!(c.dt > 0.0)) throw ParseError(source + ".dt: must be positive");
  if (j.contains("agents")) {
    const Json& arr = j.at("agents");
    if (!arr.is_array()) throw ParseError(source + ".agents: expected an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string w = source + ".agents[" + std::to_string(i) + "]";
      mpc::AgentSpec a;
      const Vector p = vector(member(arr[i], "position", w), w + ".position");
      const Vector v = vector(member(arr[i], "velocity", w), w + ".velocity");
      if (p.size() != 2 || v.size() != 2) throw ParseError(w + ": position and velocity need two entries");
      a.position = p;
      a.velocity = v;
      const Vector offs = vector(member(arr[i], "lateral_offsets", w), w + ".lateral_offsets");
      if (offs.size() != c.modes) throw ParseError(w + ".lateral_offsets: expected one entry per mode");
      a.lateral_offsets.assign(offs.data(), offs.data() + offs.size());
      if (arr[i].contains("shift_time")) a.shift_time = scalar(arr[i].at("shift_time"), w + ".shift_time");
      if (arr[i].contains("true_mode")) a.true_mode = static_cast<int>(unsigned_integer(arr[i].at("true_mode"), w + ".true_mode"));
      if (a.true_mode >= c.modes) throw ParseError(w + ".true_mode: out of range");
      c.agent_specs.push_back(std::move(a));
    }
    if (!c.agent_specs.empty() || arr.empty()) c.agents = static_cast<Index>(c.agent_specs.size());
  }
  return f;
}

inline ScenarioFile load_scenario(const std::string& path) {
  return scenario_from_json(parse_json(read_file(path), path), path);
}

// ---------------------------------------------------------------------------
// Tables

enum class TableFormat { csv, json_lines };

inline TableFormat parse_table_format(const std::string& s) {
  if (s == "csv") return TableFormat::csv;
  if (s == "json-lines") return TableFormat::json_lines;
  throw std::invalid_argument("unknown format '" + s + "' (expected csv or json-lines)");
}

using Cell = std::variant<double, std::int64_t, std::string>;

/// Ordered named cells; all rows of one table share the same keys.
struct Row {
  std::vector<std::pair<std::string, Cell>> cells;

  Row& add(std::string key, Cell value) {
    cells.emplace_back(std::move(key), std::move(value));
    return *this;
  }
};

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

inline std::string cell_text(const Cell& c) {
  if (const auto* d = std::get_if<double>(&c)) return format_number(*d);
  if (const auto* i = std::get_if<std::int64_t>(&c)) return std::to_string(*i);
  return csv_escape(std::get<std::string>(c));
}

inline Json cell_json(const Cell& c) {
  if (const auto* d = std::get_if<double>(&c)) return number(*d);
  if (const auto* i = std::get_if<std::int64_t>(&c)) return *i;
  return std::get<std::string>(c);
}

/// CSV with a header line taken from the first row, or one JSON object per row.
inline std::string format_table(const std::vector<Row>& rows, TableFormat fmt) {
  std::string out;
  if (rows.empty()) return out;
  if (fmt == TableFormat::csv) {
    for (std::size_t k = 0; k < rows.front().cells.size(); ++k)
      out += (k ? "," : "") + csv_escape(rows.front().cells[k].first);
    out += '\n';
    for (const auto& r : rows) {
      for (std::size_t k = 0; k < r.cells.size(); ++k) out += (k ? "," : "") + cell_text(r.cells[k].second);
      out += '\n';
    }
  } else {
    for (const auto& r : rows) {
      Json j = Json::object();
      for (const auto& [k, v] : r.cells) j[k] = cell_json(v);
      out += j.dump() + '\n';
    }
  }
  return out;
}

/// Per-step simulation columns. Timing columns only with `timing`, so that
/// default output is byte-reproducible.
inline Row step_row(const mpc::RunMetrics& run, const mpc::StepMetrics& s, bool timing) {
  Row r;
  r.add("policy", std::string(mpc::to_string(run.policy)))
      .add("seed", static_cast<std::int64_t>(run.seed))
      .add("step", static_cast<std::int64_t>(s.step))
      .add("feasible", static_cast<std::int64_t>(s.feasible))
      .add("collision", static_cast<std::int64_t>(s.collision))
      .add("enforced_pct", s.enforced_pct)
      .add("adf_kept_pct", s.adf_kept_pct)
      .add("gap", s.gap)
      .add("fallback", static_cast<std::int64_t>(s.fallback))
      .add("max_violation", s.max_violation)
      .add("min_distance", s.min_distance)
      .add("iterations", static_cast<std::int64_t>(s.iterations));
  if (timing) {
    r.add("classifier_s", s.classifier_seconds)
        .add("dual_s", s.dual_seconds)
        .add("gap_s", s.gap_seconds)
        .add("reduced_s", s.reduced_seconds)
        .add("total_s", s.total_seconds);
  }
  return r;
}

/// One summary row per run; timing names follow the usual table rows.
inline Row summary_row(const mpc::RunMetrics& run, double ade, bool timing) {
  using mpc::StepMetrics;
  Row r;
  r.add("policy", std::string(mpc::to_string(run.policy)))
      .add("seed", static_cast<std::int64_t>(run.seed))
      .add("steps", static_cast<std::int64_t>(run.steps_completed))
      .add("feasibility", run.feasible ? 100.0 : 0.0)
      .add("collision", run.collision ? 100.0 : 0.0)
      .add("Avg. Constraints Enforced (%)", run.average(&StepMetrics::enforced_pct))
      .add("Avg. ADF Kept (%)", run.average(&StepMetrics::adf_kept_pct))
      .add("Max Violation", run.max_violation())
      .add("Fallbacks", static_cast<std::int64_t>(run.fallbacks()))
      .add("ADE", ade);
  if (timing) {
    r.add("Avg. Classifier Query Time", run.average(&StepMetrics::classifier_seconds))
        .add("Avg. Dual Approx. Time", run.average(&StepMetrics::dual_seconds))
        .add("Avg. Total Computation Time", run.average(&StepMetrics::total_seconds))
        .add("Median Total Computation Time", run.median(&StepMetrics::total_seconds));
  }
  return r;
}

inline Row sweep_row(const mpc::SweepRow& s, bool timing) {
  Row r;
  r.add("epsilon", s.epsilon)
      .add("lambda", s.lambda)
      .add("Constraint Keep (%)", s.constraint_keep_pct)
      .add("ADF Keep (%)", s.adf_keep_pct);
  if (timing) r.add("Avg. Total Computation Time", s.avg_time);
  r.add("Feasible (%)", s.feasible_pct).add("Collision (%)", s.collision_pct).add("runs", static_cast<std::int64_t>(s.runs));
  return r;
}

}  // namespace shield::io
