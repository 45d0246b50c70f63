#pragma once

/**
 * @file problem.hpp
 * @brief l1-regularized strongly convex quadratic programs with partitioned
 * inequality blocks.
 *
 *   minimize    1/2 θᵀQθ + cᵀθ + λ‖Sθ‖₁
 *   subject to  Ã θ ≤ b̃ − ζ     (screenable rows, tightened by the margin ζ)
 *               Ā θ ≤ b̄         (immutable rows)
 *               H θ = h
 *
 * The program stores the *untightened* right-hand side b̃ together with ζ;
 * every consumer that needs the tightened rows applies the shift itself.
 */

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace shield {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Rows A θ − b ≤ 0 with per-row Lipschitz constants (row norms).
struct ConstraintBlock {
  Matrix A;
  Vector b;
  Vector lipschitz;

  ConstraintBlock() = default;

  /// Builds a block and computes the Lipschitz constants from the rows.
  ConstraintBlock(Matrix a, Vector rhs) : A(std::move(a)), b(std::move(rhs)) {
    lipschitz = A.rows() > 0 ? Vector(A.rowwise().norm()) : Vector(0);
  }

  static ConstraintBlock empty(Index n) { return {Matrix(0, n), Vector(0)}; }

  Index rows() const { return A.rows(); }
  Index cols() const { return A.cols(); }
};

struct EqualityBlock {
  Matrix H;
  Vector h;

  static EqualityBlock empty(Index n) { return {Matrix(0, n), Vector(0)}; }
  Index rows() const { return H.rows(); }
};

struct ValidationReport {
  std::vector<std::string> issues;

  bool ok() const { return issues.empty(); }
  bool mentions(const std::string& needle) const {
    return std::any_of(issues.begin(), issues.end(), [&](const std::string& s) {
      return s.find(needle) != std::string::npos;
    });
  }
  std::string str() const {
    std::ostringstream os;
    for (const auto& s : issues) os << s << '\n';
    return os.str();
  }
};

class RegularizedProgram {
 public:
  RegularizedProgram() = default;

  /**
   * @param selected  coordinate selected by each row of S (row j of S is the
   *                  unit row e_{selected[j]}).
   */
  RegularizedProgram(Matrix Q, Vector c, ConstraintBlock screenable, ConstraintBlock immutable,
                     EqualityBlock equality, std::vector<Index> selected, double lambda,
                     double zeta, double epsilon)
      : Q_(std::move(Q)),
        c_(std::move(c)),
        screenable_(std::move(screenable)),
        immutable_(std::move(immutable)),
        equality_(std::move(equality)),
        selected_(std::move(selected)),
        lambda_(lambda),
        zeta_(zeta),
        epsilon_(epsilon) {
    cache_spectrum();
  }

  Index n() const { return Q_.rows(); }
  Index num_screenable() const { return screenable_.rows(); }
  Index num_immutable() const { return immutable_.rows(); }
  Index num_equality() const { return equality_.rows(); }
  Index num_selected() const { return static_cast<Index>(selected_.size()); }

  const Matrix& Q() const { return Q_; }
  const Vector& c() const { return c_; }
  const ConstraintBlock& screenable() const { return screenable_; }
  const ConstraintBlock& immutable() const { return immutable_; }
  const EqualityBlock& equality() const { return equality_; }
  const std::vector<Index>& selected() const { return selected_; }
  double lambda() const { return lambda_; }
  double zeta() const { return zeta_; }
  double epsilon() const { return epsilon_; }

  /// Smallest / largest eigenvalue of Q (strong convexity and smoothness moduli).
  double sigma_min() const { return sigma_min_; }
  double sigma_max() const { return sigma_max_; }

  /// Dense q×n selection matrix.
  Matrix selection_matrix() const {
    Matrix S = Matrix::Zero(num_selected(), n());
    for (Index j = 0; j < num_selected(); ++j) S(j, selected_[static_cast<std::size_t>(j)]) = 1.0;
    return S;
  }

  /// Sθ as a vector.
  Vector select(const Vector& theta) const {
    Vector out(num_selected());
    for (Index j = 0; j < num_selected(); ++j) out[j] = theta[selected_[static_cast<std::size_t>(j)]];
    return out;
  }

  /// Tightened screenable right-hand side b̃ − ζ1.
  Vector tightened_rhs() const {
    return screenable_.b - Vector::Constant(screenable_.rows(), zeta_);
  }

  /// 1/2 θᵀQθ + cᵀθ + λ‖Sθ‖₁.
  double objective(const Vector& theta) const {
    return 0.5 * theta.dot(Q_ * theta) + c_.dot(theta) + lambda_ * select(theta).lpNorm<1>();
  }

  /// Smooth part 1/2 θᵀQθ + cᵀθ.
  double smooth_objective(const Vector& theta) const {
    return 0.5 * theta.dot(Q_ * theta) + c_.dot(theta);
  }

  RegularizedProgram with_screenable_rhs(Vector b) const {
    RegularizedProgram out = *this;
    out.screenable_.b = std::move(b);
    return out;
  }
  RegularizedProgram with_parameters(double lambda, double zeta, double epsilon) const {
    RegularizedProgram out = *this;
    out.lambda_ = lambda;
    out.zeta_ = zeta;
    out.epsilon_ = epsilon;
    return out;
  }
  RegularizedProgram with_epsilon(double epsilon) const {
    return with_parameters(lambda_, zeta_, epsilon);
  }

 private:
  void cache_spectrum() {
    if (Q_.rows() == 0 || Q_.rows() != Q_.cols()) {
      sigma_min_ = sigma_max_ = Q_.rows() == 0 ? 1.0 : 0.0;
      return;
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (Q_ + Q_.transpose()), Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) {
      sigma_min_ = sigma_max_ = std::numeric_limits<double>::quiet_NaN();
      return;
    }
    sigma_min_ = es.eigenvalues().minCoeff();
    sigma_max_ = es.eigenvalues().maxCoeff();
  }

  Matrix Q_;
  Vector c_;
  ConstraintBlock screenable_;
  ConstraintBlock immutable_;
  EqualityBlock equality_;
  std::vector<Index> selected_;
  double lambda_ = 0.0;
  double zeta_ = 0.0;
  double epsilon_ = 0.0;
  double sigma_min_ = 0.0;
  double sigma_max_ = 0.0;
};

namespace detail {

inline bool all_finite(const Matrix& m) { return m.size() == 0 || m.allFinite(); }

inline void check_block(const ConstraintBlock& blk, Index n, const char* name, bool screenable,
                        ValidationReport& report) {
  std::ostringstream os;
  if (blk.A.cols() != n && blk.A.rows() > 0) {
    os << name << " block has " << blk.A.cols() << " columns, expected " << n;
    report.issues.push_back(os.str());
    return;
  }
  if (blk.b.size() != blk.A.rows()) {
    os << name << " block right-hand side has length " << blk.b.size() << ", expected "
       << blk.A.rows();
    report.issues.push_back(os.str());
    return;
  }
  if (!all_finite(blk.A) || !all_finite(blk.b)) {
    report.issues.push_back(std::string(name) + " block contains non-finite entries");
    return;
  }
  if (blk.lipschitz.size() != blk.A.rows()) {
    report.issues.push_back(std::string(name) + " block Lipschitz vector has the wrong length");
    return;
  }
  for (Index i = 0; i < blk.A.rows(); ++i) {
    const double norm = blk.A.row(i).norm();
    if (std::abs(blk.lipschitz[i] - norm) > 1e-12 * (1.0 + norm)) {
      std::ostringstream msg;
      msg << name << " row " << i << " Lipschitz constant " << blk.lipschitz[i]
          << " does not match the row norm " << norm;
      report.issues.push_back(msg.str());
    }
    if (screenable && !(norm > 0.0)) {
      std::ostringstream msg;
      msg << name << " row " << i << " has zero Lipschitz constant";
      report.issues.push_back(msg.str());
    }
  }
}

}  // namespace detail

/// Lists every admissibility violation; an empty report means the program is usable.
inline ValidationReport validate(const RegularizedProgram& p) {
  ValidationReport report;
  const Index n = p.n();
  if (p.Q().rows() != p.Q().cols()) {
    report.issues.push_back("Q is not square");
    return report;
  }
  if (p.c().size() != n) report.issues.push_back("c has the wrong length");
  if (!detail::all_finite(p.Q()) || !detail::all_finite(p.c())) {
    report.issues.push_back("Q or c contains non-finite entries");
    return report;
  }
  if (n > 0) {
    const double asym = (p.Q() - p.Q().transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-10 * (1.0 + p.Q().cwiseAbs().maxCoeff()))
      report.issues.push_back("Q is not symmetric");
    if (!(p.sigma_min() > 0.0)) {
      std::ostringstream os;
      os << "Q is not positive definite (smallest eigenvalue " << p.sigma_min() << ")";
      report.issues.push_back(os.str());
    }
  }
  detail::check_block(p.screenable(), n, "screenable", true, report);
  detail::check_block(p.immutable(), n, "immutable", false, report);
  const auto& eq = p.equality();
  if ((eq.H.rows() > 0 && eq.H.cols() != n) || eq.h.size() != eq.H.rows())
    report.issues.push_back("equality block has inconsistent dimensions");
  else if (!detail::all_finite(eq.H) || !detail::all_finite(eq.h))
    report.issues.push_back("equality block contains non-finite entries");

  std::set<Index> seen;
  for (std::size_t j = 0; j < p.selected().size(); ++j) {
    const Index k = p.selected()[j];
    if (k < 0 || k >= n) {
      std::ostringstream os;
      os << "S row " << j << " selects coordinate " << k << " outside [0, " << n << ")";
      report.issues.push_back(os.str());
    } else if (!seen.insert(k).second) {
      std::ostringstream os;
      os << "S row " << j << " selects coordinate " << k << " already selected by another row";
      report.issues.push_back(os.str());
    }
  }
  if (!(p.lambda() >= 0.0) || !std::isfinite(p.lambda()))
    report.issues.push_back("lambda must be a finite nonnegative number");
  if (!(p.zeta() > 0.0) || !std::isfinite(p.zeta()))
    report.issues.push_back("zeta must be positive");
  if (!(p.epsilon() > 0.0) || !std::isfinite(p.epsilon()))
    report.issues.push_back("epsilon must be positive");
  return report;
}

inline void require_valid(const RegularizedProgram& p) {
  const auto report = validate(p);
  if (!report.ok()) throw std::invalid_argument("invalid program:\n" + report.str());
}

/// (σ̲/2)·minᵢ(ζ/Lᵢ)² over the screenable rows; +∞ when there are none.
inline double epsilon_crit(const RegularizedProgram& p) {
  const auto& L = p.screenable().lipschitz;
  if (L.size() == 0) return kInfinity;
  const double ratio = p.zeta() / L.maxCoeff();
  return 0.5 * p.sigma_min() * ratio * ratio;
}

/// Copy whose screenable right-hand side is shifted down by `amount`.
inline RegularizedProgram tighten(const RegularizedProgram& p, double amount) {
  return p.with_screenable_rhs(p.screenable().b - Vector::Constant(p.num_screenable(), amount));
}

/// Copy whose screenable right-hand side is b̃ − ζ1.
inline RegularizedProgram tighten(const RegularizedProgram& p) { return tighten(p, p.zeta()); }

/**
 * Epigraph form: variables (θ, s) ∈ ℝⁿ⁺q, cost 1/2 θᵀQθ + cᵀθ + λ1ᵀs, the
 * tightened screenable rows, the immutable and equality rows, and the 3q rows
 * Sθ − s ≤ 0, −Sθ − s ≤ 0, −s ≤ 0.
 */
struct EpigraphProgram {
  RegularizedProgram base;
  Matrix P;       ///< (n+q)×(n+q) Hessian, zero on the s block.
  Vector q;       ///< (c, λ1).
  Matrix G;       ///< stacked inequality rows over (θ, s).
  Vector h;       ///< right-hand side of G.
  Matrix A;       ///< equality rows over (θ, s).
  Vector b;
  Index epi_row_offset = 0;  ///< first of the 3q epigraph rows inside G.

  Index num_theta() const { return base.n(); }
  Index num_epigraph() const { return base.num_selected(); }

  /// Cost of the epigraph form at (θ, s).
  double objective(const Vector& theta, const Vector& s) const {
    return base.smooth_objective(theta) + base.lambda() * s.sum();
  }
};

/// Builds the epigraph form of the ζ-tightened program.
inline EpigraphProgram epigraph(const RegularizedProgram& p) {
  EpigraphProgram e;
  e.base = p;
  const Index n = p.n();
  const Index q = p.num_selected();
  const Index c = p.num_screenable();
  const Index m = p.num_immutable();
  const Index rows = c + m + 3 * q;

  e.P = Matrix::Zero(n + q, n + q);
  e.P.topLeftCorner(n, n) = p.Q();
  e.q.resize(n + q);
  e.q << p.c(), Vector::Constant(q, p.lambda());

  e.G = Matrix::Zero(rows, n + q);
  e.h = Vector::Zero(rows);
  if (c > 0) {
    e.G.topLeftCorner(c, n) = p.screenable().A;
    e.h.head(c) = p.tightened_rhs();
  }
  if (m > 0) {
    e.G.block(c, 0, m, n) = p.immutable().A;
    e.h.segment(c, m) = p.immutable().b;
  }
  e.epi_row_offset = c + m;
  for (Index j = 0; j < q; ++j) {
    const Index k = p.selected()[static_cast<std::size_t>(j)];
    const Index r = c + m;
    e.G(r + j, k) = 1.0;
    e.G(r + j, n + j) = -1.0;
    e.G(r + q + j, k) = -1.0;
    e.G(r + q + j, n + j) = -1.0;
    e.G(r + 2 * q + j, n + j) = -1.0;
  }
  e.A = Matrix::Zero(p.num_equality(), n + q);
  if (p.num_equality() > 0) e.A.leftCols(n) = p.equality().H;
  e.b = p.equality().h;
  return e;
}

}  // namespace shield
