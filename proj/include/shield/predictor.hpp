#pragma once

/**
 * @file predictor.hpp
 * @brief Dual-class predictors (constant, distance rule, per-bit logistic
 * regression), training-data collection and training.
 */

#include "shield/dual.hpp"
#include "shield/primal_solver.hpp"
#include "shield/problem.hpp"
#include "shield/screening.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace shield {

/// Shape of a scene feature: agents × modes × steps × coords, agent-major,
/// mode-next, step-minor.
struct FeatureLayout {
  Index agents = 0;
  Index modes = 0;
  Index steps = 0;
  Index coords = 2;

  Index size() const { return agents * modes * steps * coords; }
  Index groups() const { return agents * modes * steps; }
  Index offset(Index a, Index m, Index k) const { return ((a * modes + m) * steps + k) * coords; }
  bool operator==(const FeatureLayout&) const = default;
};

struct FeatureVector {
  FeatureLayout layout;
  Vector values;

  FeatureVector() = default;
  FeatureVector(FeatureLayout l, Vector v) : layout(l), values(std::move(v)) {
    if (values.size() != layout.size())
      throw std::invalid_argument("feature vector length does not match its layout");
    if (values.size() > 0 && !values.allFinite())
      throw std::invalid_argument("feature vector contains non-finite entries");
  }
  /// Euclidean length of the displacement of (agent, mode, step).
  double distance(Index a, Index m, Index k) const {
    return values.segment(layout.offset(a, m, k), layout.coords).norm();
  }
};

struct TrainingSample {
  FeatureVector feature;
  std::vector<std::uint8_t> mu_label;
  std::vector<std::uint8_t> g_label;
};

/// Labels of an exact dual: μᵢ > 1e−6 and |gⱼ| ≥ λ − 1e−6.
inline DualClass label_dual(const DualPoint& y, double lambda) {
  DualClass c = DualClass::constant(y.mu.size(), y.g.size(), 0);
  for (Index i = 0; i < y.mu.size(); ++i) c.mu_class[static_cast<std::size_t>(i)] = y.mu[i] > 1e-6;
  for (Index j = 0; j < y.g.size(); ++j)
    c.g_class[static_cast<std::size_t>(j)] = lambda > 0.0 && std::abs(y.g[j]) >= lambda - 1e-6;
  return c;
}

enum class PredictorKind { all_active, distance_heuristic, logistic };

inline const char* to_string(PredictorKind k) {
  switch (k) {
    case PredictorKind::all_active: return "all_active";
    case PredictorKind::distance_heuristic: return "distance_heuristic";
    case PredictorKind::logistic: return "logistic";
  }
  return "unknown";
}

inline PredictorKind parse_predictor_kind(const std::string& s) {
  if (s == "all_active") return PredictorKind::all_active;
  if (s == "distance_heuristic") return PredictorKind::distance_heuristic;
  if (s == "logistic") return PredictorKind::logistic;
  throw std::invalid_argument("unknown predictor kind '" + s + "'");
}

struct PredictorModel {
  PredictorKind kind = PredictorKind::all_active;
  FeatureLayout layout;
  Index num_mu = 0;   ///< c of the target program family
  Index num_g = 0;    ///< q of the target program family
  double zeta = 0.5;  ///< margin the model was trained for
  double tau = 0.5;   ///< decision threshold on class-1 probability
  std::uint64_t seed = 0;
  double distance_threshold = 10.0;
  // distance heuristic: whole agent-mode groups, or per step with the ego extrapolated
  bool per_step = false;
  double step_advance = 0.0;

  // logistic only: standardized feature map, one row of weights per output bit
  Vector feature_mean;
  Vector feature_scale;
  Matrix weights;
  Vector bias;

  Index outputs() const { return num_mu + num_g; }

  static PredictorModel all_active(FeatureLayout l, Index c, Index q, double zeta = 0.5) {
    PredictorModel m;
    m.layout = l;
    m.num_mu = c;
    m.num_g = q;
    m.zeta = zeta;
    return m;
  }
  /// All rows of an agent-mode are predicted inactive when its minimum
  /// distance over the horizon exceeds `threshold`.
  static PredictorModel distance_heuristic(FeatureLayout l, double threshold = 10.0, double zeta = 0.5) {
    PredictorModel m;
    m.kind = PredictorKind::distance_heuristic;
    m.layout = l;
    m.num_mu = m.num_g = l.groups();
    m.distance_threshold = threshold;
    m.zeta = zeta;
    return m;
  }
  /// Row (a, m, k) is predicted active when the agent is within `threshold`
  /// of the ego position extrapolated `step_advance` per step along +x.
  static PredictorModel stepwise_distance_heuristic(FeatureLayout l, double threshold, double step_advance,
                                                    double zeta = 0.5) {
    PredictorModel m = distance_heuristic(l, threshold, zeta);
    m.per_step = true;
    m.step_advance = step_advance;
    return m;
  }
  /// Logistic model that ignores the features and returns fixed classes.
  static PredictorModel constant_logistic(FeatureLayout l, const DualClass& cls, double zeta = 0.5) {
    PredictorModel m;
    m.kind = PredictorKind::logistic;
    m.layout = l;
    m.num_mu = static_cast<Index>(cls.mu_class.size());
    m.num_g = static_cast<Index>(cls.g_class.size());
    m.zeta = zeta;
    const Index f = l.size() + l.groups();
    m.feature_mean = Vector::Zero(f);
    m.feature_scale = Vector::Ones(f);
    m.weights = Matrix::Zero(m.outputs(), f);
    m.bias.resize(m.outputs());
    for (Index i = 0; i < m.num_mu; ++i) m.bias[i] = cls.mu_class[static_cast<std::size_t>(i)] ? 20.0 : -20.0;
    for (Index j = 0; j < m.num_g; ++j) m.bias[m.num_mu + j] = cls.g_class[static_cast<std::size_t>(j)] ? 20.0 : -20.0;
    return m;
  }
};

namespace detail {

/// Raw displacements followed by the length of every displacement.
inline Vector feature_map(const FeatureVector& z) {
  const FeatureLayout& l = z.layout;
  Vector phi(l.size() + l.groups());
  phi.head(l.size()) = z.values;
  for (Index gidx = 0; gidx < l.groups(); ++gidx)
    phi[l.size() + gidx] = z.values.segment(gidx * l.coords, l.coords).norm();
  return phi;
}

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace detail

/// Class-1 probabilities of every output bit (μ bits first).
inline Vector predict_proba(const PredictorModel& m, const FeatureVector& z) {
  if (!(z.layout == m.layout)) throw std::invalid_argument("predict: feature layout does not match the model");
  Vector p(m.outputs());
  switch (m.kind) {
    case PredictorKind::all_active:
      p.setOnes();
      break;
    case PredictorKind::distance_heuristic: {
      const FeatureLayout& l = m.layout;
      Index row = 0;
      for (Index a = 0; a < l.agents; ++a)
        for (Index md = 0; md < l.modes; ++md) {
          if (m.per_step) {
            for (Index k = 0; k < l.steps; ++k, ++row) {
              Vector d = z.values.segment(l.offset(a, md, k), l.coords);
              d[0] -= static_cast<double>(k + 1) * m.step_advance;
              p[row] = d.norm() > m.distance_threshold ? 0.0 : 1.0;
            }
          } else {
            double dmin = kInfinity;
            for (Index k = 0; k < l.steps; ++k) dmin = std::min(dmin, z.distance(a, md, k));
            for (Index k = 0; k < l.steps; ++k, ++row) p[row] = dmin > m.distance_threshold ? 0.0 : 1.0;
          }
        }
      // gains are predicted unsaturated
      p.tail(m.num_g).setZero();
      break;
    }
    case PredictorKind::logistic: {
      const Vector phi =
          (detail::feature_map(z) - m.feature_mean).cwiseQuotient(m.feature_scale);
      const Vector logits = m.weights * phi + m.bias;
      for (Index i = 0; i < p.size(); ++i) p[i] = detail::sigmoid(logits[i]);
      break;
    }
  }
  return p;
}

inline DualClass predict(const PredictorModel& m, const FeatureVector& z) {
  const Vector p = predict_proba(m, z);
  DualClass c = DualClass::constant(m.num_mu, m.num_g, 0);
  for (Index i = 0; i < m.num_mu; ++i) c.mu_class[static_cast<std::size_t>(i)] = p[i] >= m.tau;
  for (Index j = 0; j < m.num_g; ++j) c.g_class[static_cast<std::size_t>(j)] = p[m.num_mu + j] >= m.tau;
  return c;
}

/// Warning text when the program's ζ differs from the one the model was trained at.
inline std::optional<std::string> check_zeta(const PredictorModel& m, const RegularizedProgram& p) {
  if (std::abs(m.zeta - p.zeta()) <= 1e-12 * std::max(1.0, std::abs(p.zeta()))) return std::nullopt;
  return "predictor was trained at zeta=" + std::to_string(m.zeta) + " but the program uses zeta=" +
         std::to_string(p.zeta());
}

/// Checks that the model's output sizes match the program.
inline void check_outputs(const PredictorModel& m, const RegularizedProgram& p) {
  if (m.num_mu != p.num_screenable() || m.num_g != p.num_selected())
    throw std::invalid_argument("predictor outputs (" + std::to_string(m.num_mu) + ", " +
                                std::to_string(m.num_g) + ") do not match the program (" +
                                std::to_string(p.num_screenable()) + ", " +
                                std::to_string(p.num_selected()) + ")");
}

// ---------------------------------------------------------------------------
// Collection

struct LabeledProgram {
  RegularizedProgram program;
  FeatureVector feature;
};

using DualOracle = std::function<std::optional<DualPoint>(const RegularizedProgram&)>;

/// Exact dual via solve_dual_exact; nullopt if it does not converge.
inline std::optional<DualPoint> exact_dual(const RegularizedProgram& p) {
  try {
    return solve_dual_exact(DualObjective(p));
  } catch (const DualSolveError&) {
    return std::nullopt;
  }
}

/// Multipliers of the primal solve; nullopt unless the solve is optimal.
inline std::optional<DualPoint> primal_multipliers(const RegularizedProgram& p) {
  const Solution s = solve(p);
  if (!s.optimal()) return std::nullopt;
  return s.multipliers;
}

struct CollectReport {
  std::size_t solved = 0;
  std::size_t skipped = 0;
};

inline std::vector<TrainingSample> collect(const std::vector<LabeledProgram>& programs,
                                           const DualOracle& oracle = exact_dual,
                                           CollectReport* report = nullptr,
                                           std::ostream* log = nullptr) {
  std::vector<TrainingSample> out;
  CollectReport rep;
  for (std::size_t i = 0; i < programs.size(); ++i) {
    const auto& lp = programs[i];
    const auto y = oracle(lp.program);
    if (!y) {
      ++rep.skipped;
      if (log) *log << "collect: instance " << i << " skipped (dual solve did not converge)\n";
      continue;
    }
    const DualClass cls = label_dual(*y, lp.program.lambda());
    out.push_back({lp.feature, cls.mu_class, cls.g_class});
    ++rep.solved;
  }
  if (report) *report = rep;
  return out;
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  int epochs = 60;
  double step_size = 0.05;
  double weight_negative = 1.0;
  double weight_positive = 1.0;
  std::uint64_t seed = 0;
  int batch_size = 64;
  double eval_fraction = 0.15;
  double l2 = 1e-4;
  double tau = 0.5;
  double zeta = 0.5;
};

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  double recall() const { return tp + fn == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fn); }
  double precision() const { return tp + fp == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp); }
  double accuracy() const {
    const auto n = tp + fp + tn + fn;
    return n == 0 ? 1.0 : static_cast<double>(tp + tn) / static_cast<double>(n);
  }
};

struct TrainReport {
  double train_bce = 0.0;
  double eval_bce = 0.0;
  Confusion train;
  Confusion eval;
  std::size_t train_samples = 0;
  std::size_t eval_samples = 0;
};

namespace detail {

inline Vector stacked_labels(const TrainingSample& s) {
  Vector y(static_cast<Index>(s.mu_label.size() + s.g_label.size()));
  Index i = 0;
  for (auto v : s.mu_label) y[i++] = v;
  for (auto v : s.g_label) y[i++] = v;
  return y;
}

}  // namespace detail

/// Weighted binary cross-entropy (mean over samples and bits) and confusion counts.
inline std::pair<double, Confusion> evaluate(const PredictorModel& m, const std::vector<TrainingSample>& data,
                                             double w_neg = 1.0, double w_pos = 1.0) {
  double loss = 0.0;
  Confusion c;
  std::size_t bits = 0;
  for (const auto& s : data) {
    const Vector p = predict_proba(m, s.feature);
    const Vector y = detail::stacked_labels(s);
    for (Index b = 0; b < y.size(); ++b) {
      const double pb = std::clamp(p[b], 1e-15, 1.0 - 1e-15);
      loss -= y[b] > 0.5 ? w_pos * std::log(pb) : w_neg * std::log(1.0 - pb);
      const bool pred = p[b] >= m.tau;
      const bool truth = y[b] > 0.5;
      if (pred && truth) ++c.tp;
      else if (pred && !truth) ++c.fp;
      else if (!pred && truth) ++c.fn;
      else ++c.tn;
    }
    bits += static_cast<std::size_t>(y.size());
  }
  return {bits ? loss / static_cast<double>(bits) : 0.0, c};
}

/**
 * Per-bit logistic regression trained with weighted binary cross-entropy and
 * Adam on shuffled mini-batches. A fraction of the (shuffled) samples is held
 * out for evaluation. Deterministic for a given seed.
 */
inline PredictorModel train(const std::vector<TrainingSample>& samples, const TrainConfig& cfg,
                            TrainReport* report = nullptr) {
  if (samples.empty()) throw std::invalid_argument("train: empty sample list");
  const FeatureLayout layout = samples.front().feature.layout;
  const auto nmu = static_cast<Index>(samples.front().mu_label.size());
  const auto ng = static_cast<Index>(samples.front().g_label.size());
  for (const auto& s : samples)
    if (!(s.feature.layout == layout) || static_cast<Index>(s.mu_label.size()) != nmu ||
        static_cast<Index>(s.g_label.size()) != ng)
      throw std::invalid_argument("train: samples have inconsistent dimensions");

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t n_eval = samples.size() >= 2
                           ? static_cast<std::size_t>(std::llround(cfg.eval_fraction * static_cast<double>(samples.size())))
                           : 0;
  n_eval = std::min(n_eval, samples.size() - 1);
  std::vector<TrainingSample> eval_set, train_set;
  for (std::size_t i = 0; i < order.size(); ++i)
    (i < n_eval ? eval_set : train_set).push_back(samples[order[i]]);

  PredictorModel m;
  m.kind = PredictorKind::logistic;
  m.layout = layout;
  m.num_mu = nmu;
  m.num_g = ng;
  m.zeta = cfg.zeta;
  m.tau = cfg.tau;
  m.seed = cfg.seed;

  const auto N = static_cast<Index>(train_set.size());
  const Index F = layout.size() + layout.groups();
  const Index B = nmu + ng;
  Matrix X(N, F);
  Matrix Y(N, B);
  for (Index i = 0; i < N; ++i) {
    X.row(i) = detail::feature_map(train_set[static_cast<std::size_t>(i)].feature).transpose();
    Y.row(i) = detail::stacked_labels(train_set[static_cast<std::size_t>(i)]).transpose();
  }
  m.feature_mean = X.colwise().mean().transpose();
  m.feature_scale.resize(F);
  for (Index f = 0; f < F; ++f) {
    const double sd = std::sqrt((X.col(f).array() - m.feature_mean[f]).square().mean());
    m.feature_scale[f] = sd > 1e-8 ? sd : 1.0;
  }
  for (Index i = 0; i < N; ++i)
    X.row(i) = (X.row(i) - m.feature_mean.transpose()).cwiseQuotient(m.feature_scale.transpose());

  m.weights = Matrix::Zero(B, F);
  m.bias = Vector::Zero(B);
  Matrix mW = Matrix::Zero(B, F), vW = Matrix::Zero(B, F);
  Vector mb = Vector::Zero(B), vb = Vector::Zero(B);
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  long step = 0;
  std::vector<Index> idx(static_cast<std::size_t>(N));
  std::iota(idx.begin(), idx.end(), Index{0});
  const Index bs = std::max<Index>(1, std::min<Index>(cfg.batch_size, N));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(idx.begin(), idx.end(), rng);
    for (Index start = 0; start < N; start += bs) {
      const Index cnt = std::min(bs, N - start);
      Matrix Xb(cnt, F), Yb(cnt, B);
      for (Index r = 0; r < cnt; ++r) {
        Xb.row(r) = X.row(idx[static_cast<std::size_t>(start + r)]);
        Yb.row(r) = Y.row(idx[static_cast<std::size_t>(start + r)]);
      }
      Matrix Z = Xb * m.weights.transpose();
      Z.rowwise() += m.bias.transpose();
      // d(weighted BCE)/d(logit) = w·(p − y) with w chosen by the label
      Matrix G(cnt, B);
      for (Index r = 0; r < cnt; ++r)
        for (Index b = 0; b < B; ++b) {
          const double p = detail::sigmoid(Z(r, b));
          const double y = Yb(r, b);
          G(r, b) = (y > 0.5 ? cfg.weight_positive : cfg.weight_negative) * (p - y);
        }
      G /= static_cast<double>(cnt);
      const Matrix gW = G.transpose() * Xb + cfg.l2 * m.weights;
      const Vector gb = G.colwise().sum().transpose();
      ++step;
      mW = b1 * mW + (1 - b1) * gW;
      vW = b2 * vW + (1 - b2) * gW.cwiseAbs2();
      mb = b1 * mb + (1 - b1) * gb;
      vb = b2 * vb + (1 - b2) * gb.cwiseAbs2();
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
      m.weights.array() -= cfg.step_size * (mW.array() / c1) / ((vW.array() / c2).sqrt() + eps);
      m.bias.array() -= cfg.step_size * (mb.array() / c1) / ((vb.array() / c2).sqrt() + eps);
    }
  }
  if (report) {
    auto [tl, tc] = evaluate(m, train_set, cfg.weight_negative, cfg.weight_positive);
    auto [el, ec] = evaluate(m, eval_set, cfg.weight_negative, cfg.weight_positive);
    report->train_bce = tl;
    report->train = tc;
    report->eval_bce = el;
    report->eval = ec;
    report->train_samples = train_set.size();
    report->eval_samples = eval_set.size();
  }
  return m;
}

/// shield_step with the classes predicted from `z` (prediction is timed).
inline ShieldResult shield_step(const RegularizedProgram& p, const PredictorModel& model,
                                const FeatureVector& z, const ShieldOptions& opt = {},
                                const std::optional<Solution>& warm = std::nullopt) {
  check_outputs(model, p);
  if (auto w = check_zeta(model, p)) std::cerr << "warning: " << *w << '\n';
  return shield_step(p, [&] { return predict(model, z); }, opt, warm);
}

}  // namespace shield
