#pragma once

/**
 * @file screening.hpp
 * @brief Safe screening of ℓ1 variables and screenable constraints from a
 * certified dual point, the reduced program, and the end-to-end step.
 */

#include "shield/dual.hpp"
#include "shield/primal_solver.hpp"
#include "shield/problem.hpp"

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace shield {

/// Binary activity labels: mu_class[i] = 1 if μᵢ > 0, g_class[j] = 1 if |gⱼ| = λ.
struct DualClass {
  std::vector<std::uint8_t> mu_class;
  std::vector<std::uint8_t> g_class;

  static DualClass constant(Index c, Index q, std::uint8_t v) {
    return {std::vector<std::uint8_t>(static_cast<std::size_t>(c), v),
            std::vector<std::uint8_t>(static_cast<std::size_t>(q), v)};
  }
  bool operator==(const DualClass&) const = default;
};

struct ScreenSets {
  std::vector<Index> I;  ///< removable ℓ1 variables (indices into the rows of S)
  std::vector<Index> K;  ///< removable screenable constraints
  double gap_used = kInfinity;
  bool certified = false;
  bool epsilon_exceeds_critical = false;
};

/// { j : |ĝⱼ| + gap < λ and g̃ⱼ = 0 }; the class conjunct is skipped when
/// `certificate_only` is set.
inline std::vector<Index> screen_variables(const DualPoint& hat_y, const DualClass& cls, double gap,
                                           double lambda, bool certificate_only = false) {
  if (!certificate_only && cls.g_class.size() != static_cast<std::size_t>(hat_y.g.size()))
    throw std::invalid_argument("screen_variables: class length does not match g");
  std::vector<Index> out;
  if (!std::isfinite(gap)) return out;
  for (Index j = 0; j < hat_y.g.size(); ++j) {
    if (!certificate_only && cls.g_class[static_cast<std::size_t>(j)] != 0) continue;
    if (std::abs(hat_y.g[j]) + gap < lambda) out.push_back(j);
  }
  return out;
}

struct ConstraintScreen {
  std::vector<Index> K;
  bool epsilon_exceeds_critical = false;
};

/// { i : |μ̂ᵢ| + gap ≤ ε/ζ and μ̃ᵢ = 0 }, empty (and flagged) when ε > ε_crit.
inline ConstraintScreen screen_constraints(const DualPoint& hat_y, const DualClass& cls, double gap,
                                           double epsilon, double zeta, double eps_crit,
                                           bool certificate_only = false) {
  if (!certificate_only && cls.mu_class.size() != static_cast<std::size_t>(hat_y.mu.size()))
    throw std::invalid_argument("screen_constraints: class length does not match mu");
  ConstraintScreen out;
  if (epsilon > eps_crit) {
    out.epsilon_exceeds_critical = true;
    return out;
  }
  if (!std::isfinite(gap)) return out;
  const double threshold = epsilon / zeta;
  for (Index i = 0; i < hat_y.mu.size(); ++i) {
    if (!certificate_only && cls.mu_class[static_cast<std::size_t>(i)] != 0) continue;
    if (std::abs(hat_y.mu[i]) + gap <= threshold) out.K.push_back(i);
  }
  return out;
}

/// Program over the kept coordinates θ̄ with θ = E θ̄.
struct ReducedProgram {
  RegularizedProgram program;
  Matrix E;                                ///< n × r embedding
  std::vector<Index> kept_coordinates;     ///< column j of E is e_{kept_coordinates[j]}
  std::vector<Index> kept_selected;        ///< rows of S that survive (reduced row j ↔ original)
  std::vector<Index> removed_variables;    ///< I
  std::vector<Index> kept_constraints;     ///< reduced screenable row i ↔ original row
  std::vector<Index> kept_immutable;       ///< reduced immutable row ↔ original row (−1: moved screenable row)
  std::vector<Index> moved_screenable;     ///< screenable rows that lost all kept columns, enforced as immutable
  std::vector<Index> kept_equality;
  Index full_dimension = 0;

  Vector embed(const Vector& reduced_theta) const {
    Vector theta = Vector::Zero(full_dimension);
    for (std::size_t j = 0; j < kept_coordinates.size(); ++j)
      theta[kept_coordinates[j]] = reduced_theta[static_cast<Index>(j)];
    return theta;
  }
  Vector restrict(const Vector& theta) const {
    Vector out(static_cast<Index>(kept_coordinates.size()));
    for (std::size_t j = 0; j < kept_coordinates.size(); ++j)
      out[static_cast<Index>(j)] = theta[kept_coordinates[j]];
    return out;
  }
};

namespace detail {

inline std::vector<Index> sorted_unique(std::vector<Index> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

}  // namespace detail

/**
 * Removes the coordinates selected by the S-rows in I and the screenable rows
 * in K. Immutable and equality rows stay; rows left without any kept column
 * are dropped when trivially satisfied.
 */
inline ReducedProgram build_reduction(const RegularizedProgram& p, const std::vector<Index>& I_in,
                                      const std::vector<Index>& K_in) {
  const auto I = detail::sorted_unique(I_in);
  const auto K = detail::sorted_unique(K_in);
  for (Index j : I)
    if (j < 0 || j >= p.num_selected()) throw std::out_of_range("build_reduction: I index out of range");
  for (Index i : K)
    if (i < 0 || i >= p.num_screenable()) throw std::out_of_range("build_reduction: K index out of range");

  ReducedProgram out;
  out.full_dimension = p.n();
  out.removed_variables = I;
  std::vector<std::uint8_t> removed(static_cast<std::size_t>(p.n()), 0);
  for (Index j : I) removed[static_cast<std::size_t>(p.selected()[static_cast<std::size_t>(j)])] = 1;
  std::vector<Index> new_index(static_cast<std::size_t>(p.n()), -1);
  for (Index k = 0; k < p.n(); ++k) {
    if (!removed[static_cast<std::size_t>(k)]) {
      new_index[static_cast<std::size_t>(k)] = static_cast<Index>(out.kept_coordinates.size());
      out.kept_coordinates.push_back(k);
    }
  }
  const auto r = static_cast<Index>(out.kept_coordinates.size());
  out.E = Matrix::Zero(p.n(), r);
  for (Index j = 0; j < r; ++j) out.E(out.kept_coordinates[static_cast<std::size_t>(j)], j) = 1.0;

  auto take_cols = [&](const Matrix& A) {
    Matrix B(A.rows(), r);
    for (Index j = 0; j < r; ++j) B.col(j) = A.col(out.kept_coordinates[static_cast<std::size_t>(j)]);
    return B;
  };
  const Matrix Qr = take_cols(p.Q().transpose()).transpose();
  Matrix Q(r, r);
  for (Index j = 0; j < r; ++j) Q.col(j) = Qr.col(out.kept_coordinates[static_cast<std::size_t>(j)]);
  Vector c(r);
  for (Index j = 0; j < r; ++j) c[j] = p.c()[out.kept_coordinates[static_cast<std::size_t>(j)]];

  // screenable rows
  std::vector<Index> srows;
  std::vector<Index> moved;
  const Matrix As = take_cols(p.screenable().A);
  for (Index i = 0; i < p.num_screenable(); ++i) {
    if (std::binary_search(K.begin(), K.end(), i)) continue;
    if (As.row(i).norm() > 0.0) srows.push_back(i);
    else moved.push_back(i);
  }
  Matrix Sa(static_cast<Index>(srows.size()), r);
  Vector Sb(static_cast<Index>(srows.size()));
  for (std::size_t a = 0; a < srows.size(); ++a) {
    Sa.row(static_cast<Index>(a)) = As.row(srows[a]);
    Sb[static_cast<Index>(a)] = p.screenable().b[srows[a]];
  }
  out.kept_constraints = srows;

  // immutable rows, then screenable rows that lost every kept column (tightened rhs)
  const Matrix Ai = take_cols(p.immutable().A);
  std::vector<Index> irows;
  for (Index i = 0; i < p.num_immutable(); ++i)
    if (Ai.row(i).norm() > 0.0 || p.immutable().b[i] < 0.0) irows.push_back(i);
  std::vector<Index> moved_kept;
  for (Index i : moved)
    if (p.screenable().b[i] - p.zeta() < 0.0) moved_kept.push_back(i);
  const auto mi = static_cast<Index>(irows.size() + moved_kept.size());
  Matrix Ia = Matrix::Zero(mi, r);
  Vector Ib(mi);
  Index row = 0;
  for (Index i : irows) {
    Ia.row(row) = Ai.row(i);
    Ib[row++] = p.immutable().b[i];
    out.kept_immutable.push_back(i);
  }
  for (Index i : moved_kept) {
    Ib[row++] = p.screenable().b[i] - p.zeta();
    out.kept_immutable.push_back(-1);
  }
  out.moved_screenable = moved_kept;

  // equality rows
  const Matrix He = take_cols(p.equality().H);
  std::vector<Index> erows;
  for (Index i = 0; i < p.num_equality(); ++i) {
    if (He.row(i).norm() > 0.0) {
      erows.push_back(i);
    } else if (std::abs(p.equality().h[i]) > 1e-9 * (1.0 + p.equality().h.lpNorm<Eigen::Infinity>())) {
      throw std::logic_error("build_reduction: removed coordinates leave an inconsistent equality row");
    }
  }
  out.kept_equality = erows;
  Matrix Hm(static_cast<Index>(erows.size()), r);
  Vector hm(static_cast<Index>(erows.size()));
  for (std::size_t a = 0; a < erows.size(); ++a) {
    Hm.row(static_cast<Index>(a)) = He.row(erows[a]);
    hm[static_cast<Index>(a)] = p.equality().h[erows[a]];
  }

  std::vector<Index> sel;
  for (Index j = 0; j < p.num_selected(); ++j) {
    if (std::binary_search(I.begin(), I.end(), j)) continue;
    out.kept_selected.push_back(j);
    sel.push_back(new_index[static_cast<std::size_t>(p.selected()[static_cast<std::size_t>(j)])]);
  }
  out.program = RegularizedProgram(std::move(Q), std::move(c), ConstraintBlock(Sa, Sb),
                                   ConstraintBlock(Ia, Ib), EqualityBlock{Hm, hm}, std::move(sel),
                                   p.lambda(), p.zeta(), p.epsilon());
  return out;
}

/// Solves a reduced program (its screenable rows tightened by ζ by default).
inline Solution solve(const ReducedProgram& rp, const std::optional<Solution>& warm = std::nullopt,
                      const SolveOptions& opt = {}) {
  std::optional<Solution> w;
  if (warm && warm->theta.size() == rp.full_dimension) {
    Solution s;
    s.theta = rp.restrict(warm->theta);
    w = s;
  } else if (warm && warm->theta.size() == rp.program.n()) {
    w = warm;
  }
  return solve(rp.program, w, opt);
}

/// Multipliers of the full program implied by a reduced solution: removed
/// rows get μ = 0 and removed ℓ1 entries take g from stationarity at θ.
inline DualPoint embed_multipliers(const RegularizedProgram& p, const ReducedProgram& rp,
                                   const Vector& theta, const DualPoint& reduced) {
  DualPoint y = DualPoint::zeros({p.num_screenable(), p.num_immutable(), p.num_equality(),
                                  p.num_selected()});
  for (std::size_t a = 0; a < rp.kept_constraints.size(); ++a)
    y.mu[rp.kept_constraints[a]] = reduced.mu[static_cast<Index>(a)];
  std::size_t moved = 0;
  for (std::size_t a = 0; a < rp.kept_immutable.size(); ++a) {
    const Index orig = rp.kept_immutable[a];
    if (orig >= 0) y.eta[orig] = reduced.eta[static_cast<Index>(a)];
    else y.mu[rp.moved_screenable[moved++]] = reduced.eta[static_cast<Index>(a)];
  }
  for (std::size_t a = 0; a < rp.kept_equality.size(); ++a)
    y.nu[rp.kept_equality[a]] = reduced.nu[static_cast<Index>(a)];
  for (std::size_t a = 0; a < rp.kept_selected.size(); ++a)
    y.g[rp.kept_selected[a]] = reduced.g[static_cast<Index>(a)];
  if (!rp.removed_variables.empty()) {
    Vector stat = p.Q() * theta + p.c();
    if (p.num_screenable() > 0) stat += p.screenable().A.transpose() * y.mu;
    if (p.num_immutable() > 0) stat += p.immutable().A.transpose() * y.eta;
    if (p.num_equality() > 0) stat += p.equality().H.transpose() * y.nu;
    for (std::size_t a = 0; a < rp.kept_selected.size(); ++a) {
      const Index j = rp.kept_selected[a];
      stat[p.selected()[static_cast<std::size_t>(j)]] += y.g[j];
    }
    for (Index j : rp.removed_variables)
      y.g[j] = std::clamp(-stat[p.selected()[static_cast<std::size_t>(j)]], -p.lambda(), p.lambda());
  }
  return y;
}

// ---------------------------------------------------------------------------
// End-to-end step

struct ShieldOptions {
  /// Active-set refinement rounds on the predicted face before certifying
  /// (0 runs the single reduced solve).
  int refinement_rounds = 0;
  bool certificate_only = false;
  /// Also certify the bound on the face fixed by the predicted classes.
  bool face_certificate = true;
  /// false disables the certificate, so nothing is screened.
  bool screen = true;
  SolveOptions solve;
};

struct ShieldDiagnostics {
  double classifier_seconds = 0.0;
  double dual_seconds = 0.0;      ///< reduced unconstrained dual solve(s) and lifting
  double gap_seconds = 0.0;       ///< projection and certificate
  double reduced_seconds = 0.0;   ///< reduced primal solve (and fallback)
  double total_seconds = 0.0;

  bool fallback = false;
  std::string fallback_reason;
  bool epsilon_exceeds_critical = false;
  bool least_squares = false;
  double full_gap = kInfinity;
  double face_gap = kInfinity;
  bool face_certified = false;
  std::string certificate_reason;  ///< empty when the face certificate holds
  int refinement_rounds = 0;
  Index dual_dimension = 0;       ///< free coordinates in the last reduced dual solve
  Index reduced_variables = 0;
  Index reduced_rows = 0;
  DualClass predicted;            ///< classifier output
  DualClass used;                 ///< classes after refinement (drive the class conjunct)
  DualPoint hat_y;                ///< projected dual point that was certified
};

struct ShieldResult {
  Solution solution;  ///< full-dimensional, embedded
  ScreenSets sets;
  ShieldDiagnostics diagnostics;
};

namespace detail {

using Clock = std::chrono::steady_clock;
inline double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

/// Face with μ free iff class 1, every η free, ν free, g pinned iff class 1.
inline DualFace initial_face(const DualObjective& obj, const DualClass& cls, bool eta_from_violation) {
  const DualLayout& l = obj.layout();
  DualFace f;
  f.free.assign(static_cast<std::size_t>(l.size()), 0);
  f.values = Vector::Zero(l.size());
  for (Index i = 0; i < l.mu; ++i)
    f.free[static_cast<std::size_t>(l.mu_offset() + i)] = cls.mu_class[static_cast<std::size_t>(i)] ? 1 : 0;
  for (Index i = 0; i < l.nu; ++i) f.free[static_cast<std::size_t>(l.nu_offset() + i)] = 1;
  for (Index j = 0; j < l.g; ++j)
    f.free[static_cast<std::size_t>(l.g_offset() + j)] =
        (cls.g_class[static_cast<std::size_t>(j)] == 0 && obj.lambda() > 0.0) ? 1 : 0;
  if (!eta_from_violation) {
    for (Index i = 0; i < l.eta; ++i) f.free[static_cast<std::size_t>(l.eta_offset() + i)] = 1;
  } else if (l.eta > 0) {
    // start from the immutable rows violated by the stationary point of the pinned face
    const Vector grad = obj.gradient(f.values);
    for (Index i = 0; i < l.eta; ++i)
      f.free[static_cast<std::size_t>(l.eta_offset() + i)] = grad[l.eta_offset() + i] < 0.0 ? 1 : 0;
  }
  return f;
}

/// Pins class-1 g entries to λ·sign([Sθ̂]ⱼ) evaluated at the solve where they are 0.
inline void set_pinned_g_signs(const DualObjective& obj, DualFace& f, const Vector& grad) {
  const DualLayout& l = obj.layout();
  for (Index j = 0; j < l.g; ++j) {
    const Index i = l.g_offset() + j;
    if (f.free[static_cast<std::size_t>(i)]) continue;
    // ∂d/∂gⱼ = −[Sθ̂]ⱼ; ties resolve to +λ
    f.values[i] = grad[i] > 0.0 ? -obj.lambda() : obj.lambda();
  }
}

/// One primal-dual active-set update; returns true if the face changed.
/// In cautious mode negative multipliers are dropped and only the single most
/// violated inequality (by scaled gradient) is added.
inline bool refine_face(const DualObjective& obj, DualFace& f, const Vector& y, const Vector& grad,
                        bool cautious = false) {
  const DualLayout& l = obj.layout();
  const double lam = obj.lambda();
  bool changed = false;
  auto flip = [&](Index i, bool to_free, double value) {
    f.free[static_cast<std::size_t>(i)] = to_free ? 1 : 0;
    f.values[i] = to_free ? 0.0 : value;
    changed = true;
  };
  Index worst = -1;
  double worst_score = 0.0;
  for (Index i = 0; i < l.mu + l.eta; ++i) {
    const bool fr = f.free[static_cast<std::size_t>(i)];
    if (fr && y[i] < 0.0) {
      flip(i, false, 0.0);
    } else if (!fr && grad[i] < 0.0) {
      if (!cautious) {
        flip(i, true, 0.0);
      } else {
        const double score = -grad[i] / std::max(obj.M().col(i).norm(), 1e-300);
        if (score > worst_score) {
          worst_score = score;
          worst = i;
        }
      }
    }
  }
  if (cautious && worst >= 0 && !changed) flip(worst, true, 0.0);
  if (lam > 0.0) {
    for (Index j = 0; j < l.g; ++j) {
      const Index i = l.g_offset() + j;
      const bool fr = f.free[static_cast<std::size_t>(i)];
      if (fr && std::abs(y[i]) > lam) {
        flip(i, false, y[i] > 0.0 ? lam : -lam);
      } else if (!fr && ((f.values[i] > 0.0 && grad[i] > 0.0) || (f.values[i] < 0.0 && grad[i] < 0.0))) {
        flip(i, true, 0.0);
      }
    }
  }
  return changed;
}

inline DualClass classes_of_face(const DualObjective& obj, const DualFace& f) {
  const DualLayout& l = obj.layout();
  DualClass c = DualClass::constant(l.mu, l.g, 0);
  for (Index i = 0; i < l.mu; ++i) c.mu_class[static_cast<std::size_t>(i)] = f.free[static_cast<std::size_t>(l.mu_offset() + i)];
  for (Index j = 0; j < l.g; ++j)
    c.g_class[static_cast<std::size_t>(j)] = (obj.lambda() > 0.0 && !f.free[static_cast<std::size_t>(l.g_offset() + j)]) ? 1 : 0;
  return c;
}

}  // namespace detail

/**
 * One screening step: classify, reduced dual solve on the predicted face,
 * lift, project, certify, screen, and solve the reduced primal. Falls back to
 * the full tightened program if the reduced one is not solved to optimality.
 */
inline ShieldResult shield_step(const RegularizedProgram& p, const std::function<DualClass()>& classify,
                                const ShieldOptions& opt = {},
                                const std::optional<Solution>& warm = std::nullopt) {
  using detail::Clock;
  const auto t_start = Clock::now();
  ShieldResult res;
  ShieldDiagnostics& diag = res.diagnostics;

  auto t = Clock::now();
  diag.predicted = classify();
  diag.classifier_seconds = detail::seconds_since(t);
  if (diag.predicted.mu_class.size() != static_cast<std::size_t>(p.num_screenable()) ||
      diag.predicted.g_class.size() != static_cast<std::size_t>(p.num_selected()))
    throw std::invalid_argument("shield_step: predicted classes do not match the program");

  // reduced dual solve
  t = Clock::now();
  const DualObjective obj(p);
  const bool refine = opt.refinement_rounds > 0;
  DualFace face = detail::initial_face(obj, diag.predicted, refine);
  {
    // class-1 g signs come from the solve with those entries held at 0
    const FaceSolve probe = solve_face_unconstrained(obj, face);
    detail::set_pinned_g_signs(obj, face, obj.gradient(probe.point.stacked()));
  }
  // rows idle in a face solve sit at 0 anyway; pinning them keeps the face Hessian regular
  auto solve_on = [&obj](DualFace& f) {
    FaceSolve r = solve_face_unconstrained(obj, f);
    for (Index i : r.idle) f.free[static_cast<std::size_t>(i)] = 0;
    return r;
  };
  FaceSolve fs = solve_on(face);
  {
    std::vector<std::vector<std::uint8_t>> seen{face.free};
    bool cautious = fs.least_squares;
    for (int round = 0; round < opt.refinement_rounds; ++round) {
      const Vector y = fs.point.stacked();
      if (!detail::refine_face(obj, face, y, obj.gradient(y), cautious)) break;
      if (std::find(seen.begin(), seen.end(), face.free) != seen.end()) cautious = true;
      seen.push_back(face.free);
      fs = solve_on(face);
      if (fs.least_squares) cautious = true;
      diag.refinement_rounds = round + 1;
    }
  }
  diag.least_squares = fs.least_squares;
  diag.dual_dimension = fs.dimension;
  diag.dual_seconds = detail::seconds_since(t);

  // projection and certificate
  t = Clock::now();
  const DualPoint hat = project_dual(obj, fs.point.stacked());
  diag.full_gap = gap(obj, hat);
  if (opt.face_certificate) {
    const FaceCertificate fc = certify_face(obj, hat, face);
    diag.face_certified = fc.certified;
    diag.certificate_reason = fc.reason;
    diag.face_gap = fc.gap;
  }
  diag.used = detail::classes_of_face(obj, face);
  diag.hat_y = hat;
  res.sets.gap_used = opt.screen ? std::min(diag.full_gap, diag.face_gap) : kInfinity;
  res.sets.certified = std::isfinite(res.sets.gap_used);
  res.sets.I = screen_variables(hat, diag.used, res.sets.gap_used, p.lambda(), opt.certificate_only);
  const ConstraintScreen cs = screen_constraints(hat, diag.used, res.sets.gap_used, p.epsilon(),
                                                 p.zeta(), epsilon_crit(p), opt.certificate_only);
  res.sets.K = cs.K;
  res.sets.epsilon_exceeds_critical = diag.epsilon_exceeds_critical = cs.epsilon_exceeds_critical;
  diag.gap_seconds = detail::seconds_since(t);

  // reduced primal
  t = Clock::now();
  const ReducedProgram rp = build_reduction(p, res.sets.I, res.sets.K);
  diag.reduced_variables = rp.program.n();
  diag.reduced_rows = rp.program.num_screenable() + rp.program.num_immutable();
  SolveOptions so = opt.solve;
  so.tighten = true;
  Solution red = solve(rp, warm, so);
  if (red.optimal()) {
    Solution& out = res.solution;
    out.theta = rp.embed(red.theta);
    out.s = p.select(out.theta).cwiseAbs();
    out.objective = p.objective(out.theta);
    out.status = red.status;
    out.iterations = red.iterations;
    out.polished = red.polished;
    out.multipliers = embed_multipliers(p, rp, out.theta, red.multipliers);
    out.kkt = kkt_residual(p, out.theta, out.s, out.multipliers);
  } else {
    diag.fallback = true;
    diag.fallback_reason = std::string("reduced program ") + to_string(red.status);
    res.solution = solve(p, warm, so);
  }
  diag.reduced_seconds = detail::seconds_since(t);
  diag.total_seconds = detail::seconds_since(t_start);
  return res;
}

/// Convenience overload with fixed classes.
inline ShieldResult shield_step(const RegularizedProgram& p, const DualClass& cls,
                                const ShieldOptions& opt = {},
                                const std::optional<Solution>& warm = std::nullopt) {
  return shield_step(p, [&cls] { return cls; }, opt, warm);
}

}  // namespace shield
