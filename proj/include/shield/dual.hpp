#pragma once

/**
 * @file dual.hpp
 * @brief Explicit dual of the ζ-tightened epigraph program (minimization form).
 *
 * With v(y) = c + Ãᵀμ + Āᵀη + Hᵀν + Sᵀg and θ̂(y) = −Q⁻¹v(y),
 *
 *   d(y) = 1/2 vᵀQ⁻¹v + μᵀ(b̃ − ζ1) + ηᵀb̄ + νᵀh,
 *   ∇d(y) = Mᵀ Q⁻¹ v + (b̃ − ζ1, b̄, h, 0),     M = [Ãᵀ | Āᵀ | Hᵀ | Sᵀ],
 *
 * over 𝒴 = {μ ≥ 0, η ≥ 0, ν free, ‖g‖∞ ≤ λ}. The dual Hessian is MᵀQ⁻¹M.
 */

#include "shield/problem.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace shield {

/// Block sizes of the stacked dual vector y = [μ | η | ν | g].
struct DualLayout {
  Index mu = 0;
  Index eta = 0;
  Index nu = 0;
  Index g = 0;

  Index size() const { return mu + eta + nu + g; }
  Index mu_offset() const { return 0; }
  Index eta_offset() const { return mu; }
  Index nu_offset() const { return mu + eta; }
  Index g_offset() const { return mu + eta + nu; }

  bool operator==(const DualLayout&) const = default;
};

struct DualPoint {
  Vector mu;
  Vector eta;
  Vector nu;
  Vector g;

  static DualPoint zeros(const DualLayout& l) {
    return {Vector::Zero(l.mu), Vector::Zero(l.eta), Vector::Zero(l.nu), Vector::Zero(l.g)};
  }

  static DualPoint unstack(const DualLayout& l, const Vector& y) {
    if (y.size() != l.size()) throw std::invalid_argument("dual vector has the wrong length");
    return {y.segment(l.mu_offset(), l.mu), y.segment(l.eta_offset(), l.eta),
            y.segment(l.nu_offset(), l.nu), y.segment(l.g_offset(), l.g)};
  }

  DualLayout layout() const { return {mu.size(), eta.size(), nu.size(), g.size()}; }

  Vector stacked() const {
    Vector y(mu.size() + eta.size() + nu.size() + g.size());
    y << mu, eta, nu, g;
    return y;
  }

  /// μ ≥ 0, η ≥ 0 and ‖g‖∞ ≤ λ + tol.
  bool is_feasible(double lambda, double tol = 1e-12) const {
    const bool mu_ok = mu.size() == 0 || mu.minCoeff() >= -tol;
    const bool eta_ok = eta.size() == 0 || eta.minCoeff() >= -tol;
    const bool g_ok = g.size() == 0 || g.cwiseAbs().maxCoeff() <= lambda + tol;
    return mu_ok && eta_ok && g_ok;
  }
};

/// Per-coordinate description of a face of 𝒴: free coordinates are optimized,
/// pinned coordinates keep `values[i]`.
struct DualFace {
  std::vector<std::uint8_t> free;
  Vector values;

  Index dimension() const {
    return static_cast<Index>(std::count(free.begin(), free.end(), std::uint8_t{1}));
  }
  std::vector<Index> free_indices() const {
    std::vector<Index> out;
    for (std::size_t i = 0; i < free.size(); ++i)
      if (free[i]) out.push_back(static_cast<Index>(i));
    return out;
  }
  std::vector<Index> pinned_indices() const {
    std::vector<Index> out;
    for (std::size_t i = 0; i < free.size(); ++i)
      if (!free[i]) out.push_back(static_cast<Index>(i));
    return out;
  }
};

/// Extreme eigenvalues of a symmetric PSD matrix; an empty matrix reports (0, 0).
struct Spectrum {
  double min = 0.0;
  double max = 0.0;
};

inline Spectrum symmetric_spectrum(const Matrix& H) {
  if (H.rows() == 0) return {};
  Eigen::SelfAdjointEigenSolver<Matrix> es(H, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) return {0.0, kInfinity};
  return {es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
}

/// Smallest eigenvalue below which a dual Hessian is treated as singular.
inline constexpr double kSingularHessian = 1e-10;

class DualObjective {
 public:
  explicit DualObjective(const RegularizedProgram& p)
      : layout_{p.num_screenable(), p.num_immutable(), p.num_equality(), p.num_selected()},
        n_(p.n()),
        lambda_(p.lambda()),
        c_(p.c()),
        Q_(p.Q()),
        selected_(p.selected()),
        sigma_min_(p.sigma_min()),
        sigma_max_(p.sigma_max()) {
    require_valid(p);
    const Index D = layout_.size();
    M_ = Matrix::Zero(n_, D);
    offsets_ = Vector::Zero(D);
    if (layout_.mu > 0) {
      M_.middleCols(layout_.mu_offset(), layout_.mu) = p.screenable().A.transpose();
      offsets_.segment(layout_.mu_offset(), layout_.mu) = p.tightened_rhs();
    }
    if (layout_.eta > 0) {
      M_.middleCols(layout_.eta_offset(), layout_.eta) = p.immutable().A.transpose();
      offsets_.segment(layout_.eta_offset(), layout_.eta) = p.immutable().b;
    }
    if (layout_.nu > 0) {
      M_.middleCols(layout_.nu_offset(), layout_.nu) = p.equality().H.transpose();
      offsets_.segment(layout_.nu_offset(), layout_.nu) = p.equality().h;
    }
    for (Index j = 0; j < layout_.g; ++j)
      M_(p.selected()[static_cast<std::size_t>(j)], layout_.g_offset() + j) = 1.0;
    factor_.compute(p.Q());
    if (factor_.info() != Eigen::Success)
      throw std::invalid_argument("Q is not positive definite");
    lower_ = Vector::Constant(D, -kInfinity);
    upper_ = Vector::Constant(D, kInfinity);
    lower_.segment(layout_.mu_offset(), layout_.mu).setZero();
    lower_.segment(layout_.eta_offset(), layout_.eta).setZero();
    lower_.segment(layout_.g_offset(), layout_.g).setConstant(-lambda_);
    upper_.segment(layout_.g_offset(), layout_.g).setConstant(lambda_);
    cache_ = std::make_shared<Cache>();
  }

  const DualLayout& layout() const { return layout_; }
  Index primal_dimension() const { return n_; }
  double lambda() const { return lambda_; }
  const Matrix& M() const { return M_; }
  const Vector& offsets() const { return offsets_; }
  const Vector& lower() const { return lower_; }
  const Vector& upper() const { return upper_; }
  const Eigen::LLT<Matrix>& factor() const { return factor_; }
  const Matrix& Q() const { return Q_; }
  const Vector& c() const { return c_; }
  /// Primal coordinate selected by ℓ1 entry j.
  Index selected(Index j) const { return selected_[static_cast<std::size_t>(j)]; }
  double sigma_min() const { return sigma_min_; }
  double sigma_max() const { return sigma_max_; }

  void check(const Vector& y) const {
    if (y.size() != layout_.size())
      throw std::invalid_argument("dual point dimension does not match the dual objective");
  }
  void check(const DualPoint& y) const {
    if (!(y.layout() == layout_))
      throw std::invalid_argument("dual point dimension does not match the dual objective");
  }

  Vector v(const Vector& y) const { return c_ + M_ * y; }

  /// θ̂(y) = −Q⁻¹ v(y), the minimizer of the Lagrangian.
  Vector primal_point(const Vector& y) const {
    check(y);
    return -factor_.solve(v(y));
  }
  Vector primal_point(const DualPoint& y) const { return primal_point(y.stacked()); }

  double value(const Vector& y) const {
    check(y);
    const Vector vv = v(y);
    return 0.5 * vv.dot(factor_.solve(vv)) + offsets_.dot(y);
  }

  Vector gradient(const Vector& y) const {
    check(y);
    return M_.transpose() * factor_.solve(v(y)) + offsets_;
  }

  Vector project(const Vector& y) const {
    check(y);
    return y.cwiseMax(lower_).cwiseMin(upper_);
  }

  /// Dual Hessian MᵀQ⁻¹M, computed on first use.
  const Matrix& hessian() const {
    std::call_once(cache_->hessian_once, [this] {
      const Matrix B = whitened(M_);
      cache_->hessian = B.transpose() * B;
    });
    return cache_->hessian;
  }

  /// Largest / smallest eigenvalue of the dual Hessian. Structurally singular
  /// Hessians (more duals than primal coordinates) report ρ̲ = 0 without an
  /// eigendecomposition.
  double rho_bar() const {
    spectrum_once();
    return cache_->spectrum.max;
  }
  double rho_underbar() const {
    spectrum_once();
    return cache_->spectrum.min;
  }

  /// L⁻¹X where Q = LLᵀ; (L⁻¹X)ᵀ(L⁻¹Y) = XᵀQ⁻¹Y.
  Matrix whitened(const Matrix& X) const { return factor_.matrixL().solve(X); }
  Vector whitened(const Vector& x) const { return factor_.matrixL().solve(x); }

 private:
  struct Cache {
    std::once_flag hessian_once;
    std::once_flag spectrum_once;
    Matrix hessian;
    Spectrum spectrum;
  };

  void spectrum_once() const {
    std::call_once(cache_->spectrum_once, [this] {
      const Index D = layout_.size();
      if (D == 0) {
        cache_->spectrum = {kInfinity, 0.0};
      } else if (D > n_) {
        // rank(MᵀQ⁻¹M) ≤ n < D; the largest eigenvalue is that of the n×n Q^{-1/2}MMᵀQ^{-1/2}
        const Matrix B = whitened(M_);
        cache_->spectrum = {0.0, symmetric_spectrum(B * B.transpose()).max};
      } else {
        cache_->spectrum = symmetric_spectrum(hessian());
      }
    });
  }

  DualLayout layout_;
  Index n_ = 0;
  double lambda_ = 0.0;
  Vector c_;
  Matrix Q_;
  std::vector<Index> selected_;
  double sigma_min_ = 0.0;
  double sigma_max_ = 0.0;
  Matrix M_;
  Vector offsets_;
  Vector lower_;
  Vector upper_;
  Eigen::LLT<Matrix> factor_;
  std::shared_ptr<Cache> cache_;
};

inline double dual_value(const DualObjective& obj, const DualPoint& y) {
  obj.check(y);
  return obj.value(y.stacked());
}

inline Vector dual_gradient(const DualObjective& obj, const DualPoint& y) {
  obj.check(y);
  return obj.gradient(y.stacked());
}

/// Euclidean projection onto 𝒴 (componentwise clamp).
inline DualPoint project_dual(const DualObjective& obj, const Vector& raw) {
  return DualPoint::unstack(obj.layout(), obj.project(raw));
}

/// ∇†d(y) = y − [y − ∇d(y)]_𝒴 for feasible y.
inline Vector projected_gradient(const DualObjective& obj, const DualPoint& y) {
  obj.check(y);
  if (!y.is_feasible(obj.lambda(), 1e-12))
    throw std::invalid_argument("projected_gradient requires a dual-feasible point");
  const Vector ys = y.stacked();
  return ys - obj.project(ys - obj.gradient(ys));
}

/// ((1+ρ̄)/ρ̲)·‖∇†d(y)‖₂ ≥ ‖y − y*‖₂; +∞ when the dual Hessian is singular.
inline double gap(const DualObjective& obj, const DualPoint& y) {
  const Vector pg = projected_gradient(obj, y);
  if (obj.layout().size() == 0) return 0.0;
  if (obj.layout().size() > obj.primal_dimension()) return kInfinity;
  const double lo = obj.rho_underbar();
  if (!(lo > kSingularHessian) || !std::isfinite(lo)) return kInfinity;
  return (1.0 + obj.rho_bar()) / lo * pg.norm();
}

// ---------------------------------------------------------------------------
// Reduced (face-restricted) unconstrained solve and certificate

namespace detail {

inline Matrix gather_columns(const Matrix& M, const std::vector<Index>& idx) {
  Matrix out(M.rows(), static_cast<Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out.col(static_cast<Index>(k)) = M.col(idx[k]);
  return out;
}

inline Vector gather(const Vector& v, const std::vector<Index>& idx) {
  Vector out(static_cast<Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out[static_cast<Index>(k)] = v[idx[k]];
  return out;
}

}  // namespace detail

struct FaceSolve {
  DualPoint point;              ///< lifted, not yet projected
  bool least_squares = false;   ///< singular reduced system, min-norm solution used
  Index dimension = 0;
  std::vector<Index> idle;      ///< free rows left at 0 because they only touch zeroed coordinates
};

/// Minimizes d over the free coordinates of `face` with the pinned ones held
/// at `face.values`, ignoring the bounds of 𝒴 (one symmetric linear solve).
inline FaceSolve solve_face_unconstrained(const DualObjective& obj, const DualFace& face) {
  const DualLayout& l = obj.layout();
  if (static_cast<Index>(face.free.size()) != l.size() || face.values.size() != l.size())
    throw std::invalid_argument("face description does not match the dual layout");
  const Index n = obj.primal_dimension();

  // Stationarity on the face is M_Φᵀθ̂ = b_Φ with θ̂ = −Q⁻¹(c + M y). A free g
  // entry only says θ_k = 0 for its coordinate, so those coordinates are
  // eliminated and the remaining free rows form a Schur system over the rest.
  Vector y = face.values;
  std::vector<Index> general;
  std::vector<std::uint8_t> zeroed(static_cast<std::size_t>(n), 0);
  std::vector<Index> gfree;
  for (Index i = 0; i < l.size(); ++i) {
    if (!face.free[static_cast<std::size_t>(i)]) continue;
    y[i] = 0.0;
    if (i >= l.g_offset()) {
      gfree.push_back(i);
      zeroed[static_cast<std::size_t>(obj.selected(i - l.g_offset()))] = 1;
    } else {
      general.push_back(i);
    }
  }
  FaceSolve out;
  out.dimension = static_cast<Index>(general.size() + gfree.size());
  if (out.dimension == 0) {
    out.point = DualPoint::unstack(l, y);
    return out;
  }
  std::vector<Index> U, Z;
  for (Index k = 0; k < n; ++k) (zeroed[static_cast<std::size_t>(k)] ? Z : U).push_back(k);
  const Vector cp = obj.v(y);  // c + M_Π y_Π
  const auto nu = static_cast<Index>(U.size());

  Matrix Quu(nu, nu);
  for (Index a = 0; a < nu; ++a)
    for (Index b = 0; b < nu; ++b) Quu(a, b) = obj.Q()(U[static_cast<std::size_t>(a)], U[static_cast<std::size_t>(b)]);
  // rows that only touch eliminated coordinates read b ≥ 0 on the face and drop out
  {
    std::vector<Index> live;
    for (Index i : general) {
      double norm2 = 0.0;
      for (Index k : U) norm2 += obj.M()(k, i) * obj.M()(k, i);
      if (norm2 > 1e-24 * std::max(1.0, obj.M().col(i).squaredNorm())) {
        live.push_back(i);
      } else {
        out.idle.push_back(i);
        if (obj.offsets()[i] < 0.0 || (i >= l.nu_offset() && obj.offsets()[i] != 0.0)) out.least_squares = true;
      }
    }
    general.swap(live);
  }
  const auto ng = static_cast<Index>(general.size());
  Matrix Cu(ng, nu);  // rows: free general duals, columns: kept coordinates
  for (Index r = 0; r < ng; ++r)
    for (Index a = 0; a < nu; ++a) Cu(r, a) = obj.M()(U[static_cast<std::size_t>(a)], general[static_cast<std::size_t>(r)]);
  const Vector cu = detail::gather(cp, U);
  const Vector bg = detail::gather(obj.offsets(), general);

  Vector theta_u = Vector::Zero(nu);
  Vector yg = Vector::Zero(ng);
  if (nu > 0) {
    Eigen::LLT<Matrix> lq(Quu);
    const Vector qc = lq.solve(cu);
    if (ng > 0) {
      const Matrix QC = lq.solve(Cu.transpose());
      const Matrix S = Cu * QC;
      const Vector rhs = -(bg + Cu * qc);
      Eigen::LLT<Matrix> llt(S);
      bool ok = llt.info() == Eigen::Success;
      if (ok) {
        const double dmin = llt.matrixLLT().diagonal().minCoeff();
        const double dmax = llt.matrixLLT().diagonal().maxCoeff();
        ok = dmin > 0.0 && (dmin / dmax) * (dmin / dmax) > 1e-13;
      }
      if (ok) {
        yg = llt.solve(rhs);
      } else {
        Eigen::CompleteOrthogonalDecomposition<Matrix> cod(S);
        cod.setThreshold(1e-11);
        yg = cod.solve(rhs);
        out.least_squares = true;
      }
      theta_u = -(qc + QC * yg);
    } else {
      theta_u = -qc;
    }
  } else if (ng > 0) {
    // every coordinate is pinned to zero; the general rows cannot be met unless b = 0
    out.least_squares = true;
  }
  for (Index r = 0; r < ng; ++r) y[general[static_cast<std::size_t>(r)]] = yg[r];
  // g on eliminated coordinates from the stationarity rows there
  for (Index i : gfree) {
    const Index k = obj.selected(i - l.g_offset());
    double s = cp[k];
    for (Index a = 0; a < nu; ++a) s += obj.Q()(k, U[static_cast<std::size_t>(a)]) * theta_u[a];
    for (Index r = 0; r < ng; ++r) s += obj.M()(k, general[static_cast<std::size_t>(r)]) * yg[r];
    y[i] = -s;
  }
  out.point = DualPoint::unstack(l, y);
  return out;
}

/// Reduced unconstrained dual solve: μ outside `keep_mu` fixed at 0, g entries
/// in `fixed_g` pinned (±λ), η restricted to `keep_eta` when given.
inline FaceSolve solve_reduced_unconstrained(const DualObjective& obj,
                                             const std::vector<Index>& keep_mu,
                                             const std::map<Index, double>& fixed_g,
                                             const std::optional<std::vector<Index>>& keep_eta = {}) {
  const DualLayout& l = obj.layout();
  DualFace face;
  face.free.assign(static_cast<std::size_t>(l.size()), 0);
  face.values = Vector::Zero(l.size());
  for (Index i : keep_mu) {
    if (i < 0 || i >= l.mu) throw std::out_of_range("keep_mu index outside the screenable block");
    face.free[static_cast<std::size_t>(l.mu_offset() + i)] = 1;
  }
  if (keep_eta) {
    for (Index i : *keep_eta) {
      if (i < 0 || i >= l.eta) throw std::out_of_range("keep_eta index outside the immutable block");
      face.free[static_cast<std::size_t>(l.eta_offset() + i)] = 1;
    }
  } else {
    for (Index i = 0; i < l.eta; ++i) face.free[static_cast<std::size_t>(l.eta_offset() + i)] = 1;
  }
  for (Index i = 0; i < l.nu; ++i) face.free[static_cast<std::size_t>(l.nu_offset() + i)] = 1;
  for (Index j = 0; j < l.g; ++j) {
    const auto it = fixed_g.find(j);
    const auto k = static_cast<std::size_t>(l.g_offset() + j);
    if (it != fixed_g.end()) {
      face.values[static_cast<Index>(k)] = it->second;
    } else if (obj.lambda() > 0.0) {
      face.free[k] = 1;
    }
  }
  for (const auto& [j, val] : fixed_g)
    if (j < 0 || j >= l.g) throw std::out_of_range("fixed_g index outside the l1 block");
  return solve_face_unconstrained(obj, face);
}

struct FaceCertificate {
  bool certified = false;
  double gap = kInfinity;       ///< bound on ‖ŷ − y*‖ for a global dual optimum y*
  double rho_bar = 0.0;
  double rho_underbar = 0.0;
  Index dimension = 0;
  Index failed_coordinate = -1; ///< first pinned coordinate whose optimality could not be certified
  std::string reason;
};

/**
 * Bounds the distance from the feasible point `y` to a global dual optimum by
 * working on the face where the pinned coordinates of `face` keep their value.
 *
 * On the face, d is ρ̲-strongly convex and ρ̄-smooth with ρ from the face
 * Hessian, so ‖y_Φ − y*_Φ‖ ≤ ((1+ρ̄)/ρ̲)‖∇†d_Φ(y)‖ = gap. The face optimum is a
 * global optimum of the dual when every pinned gradient component has the
 * sign the box requires; since ∇d is affine, component i moves by at most
 * ‖H_{iΦ}‖·gap between y and the face optimum, which is the margin checked.
 */
inline FaceCertificate certify_face(const DualObjective& obj, const DualPoint& y,
                                    const DualFace& face) {
  FaceCertificate out;
  const DualLayout& l = obj.layout();
  obj.check(y);
  if (static_cast<Index>(face.free.size()) != l.size())
    throw std::invalid_argument("face description does not match the dual layout");
  if (!y.is_feasible(obj.lambda(), 1e-12)) {
    out.reason = "point is not dual feasible";
    return out;
  }
  const Vector ys = y.stacked();
  const auto phi = face.free_indices();
  const auto pi = face.pinned_indices();
  for (Index i : pi) {
    if (std::abs(ys[i] - face.values[i]) > 0.0) {
      out.reason = "point does not lie on the face";
      out.failed_coordinate = i;
      return out;
    }
  }
  const Vector grad = obj.gradient(ys);
  out.dimension = static_cast<Index>(phi.size());

  if (out.dimension > obj.primal_dimension()) {
    out.reason = "face Hessian is singular";
    return out;
  }
  if (!phi.empty()) {
    const Matrix B = obj.whitened(detail::gather_columns(obj.M(), phi));
    const Matrix H = B.transpose() * B;
    const Spectrum sp = symmetric_spectrum(H);
    out.rho_bar = sp.max;
    out.rho_underbar = sp.min;
    if (!(sp.min > kSingularHessian)) {
      out.reason = "face Hessian is singular";
      return out;
    }
    double pg2 = 0.0;
    for (Index i : phi) {
      const double step = std::clamp(ys[i] - grad[i], obj.lower()[i], obj.upper()[i]);
      pg2 += (ys[i] - step) * (ys[i] - step);
    }
    out.gap = (1.0 + sp.max) / sp.min * std::sqrt(pg2);
  } else {
    out.gap = 0.0;
  }

  // ‖H_{iΦ}‖ ≤ ‖Q^{-1/2}M_i‖·‖Q^{-1/2}M_Φ‖ ≤ (‖M_i‖/√σ̲)·√ρ̄
  Vector margin = Vector::Zero(static_cast<Index>(pi.size()));
  if (!phi.empty() && out.gap > 0.0) {
    const double scale = std::sqrt(out.rho_bar / obj.sigma_min()) * out.gap;
    for (std::size_t k = 0; k < pi.size(); ++k)
      margin[static_cast<Index>(k)] = obj.M().col(pi[k]).norm() * scale;
  }
  for (std::size_t k = 0; k < pi.size(); ++k) {
    const Index i = pi[k];
    const double lo = obj.lower()[i];
    const double hi = obj.upper()[i];
    const double gi = grad[i];
    const double mk = margin[static_cast<Index>(k)];
    bool ok = false;
    if (lo == hi) {
      ok = true;
    } else if (ys[i] == lo) {
      ok = gi - mk >= 0.0;
    } else if (ys[i] == hi) {
      ok = gi + mk <= 0.0;
    }
    if (!ok) {
      out.failed_coordinate = i;
      out.reason = "pinned coordinate is not optimal on the full dual";
      out.gap = kInfinity;
      return out;
    }
  }
  out.certified = true;
  return out;
}

// ---------------------------------------------------------------------------
// Exact dual solve (test oracle and label source)

struct DualSolveOptions {
  int max_iterations = 100000;
  double tolerance = 1e-12;  ///< on ‖∇†d(y)‖∞
};

class DualSolveError : public std::runtime_error {
 public:
  DualSolveError(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

struct DualSolveResult {
  DualPoint point;
  double residual = 0.0;
  int iterations = 0;
};

/**
 * Projected Newton method on the box-constrained dual QP. Binding bounds are
 * identified with an ε-active set, the free block takes a (slightly
 * regularized) Newton step, and an Armijo search along the projection arc
 * keeps d decreasing. Singular Hessians are fine: the regularization turns
 * null directions into long steps that the projection clips.
 */
inline DualSolveResult solve_dual_exact_detailed(const DualObjective& obj,
                                                 const DualSolveOptions& opt = {}) {
  const Index D = obj.layout().size();
  DualSolveResult res;
  if (D == 0) {
    res.point = DualPoint::zeros(obj.layout());
    return res;
  }
  const Matrix& H = obj.hessian();
  const Vector k = obj.gradient(Vector::Zero(D));
  auto value = [&](const Vector& y) { return 0.5 * y.dot(H * y) + k.dot(y); };
  const double reg = 1e-10 * (1.0 + H.diagonal().cwiseAbs().maxCoeff());

  Vector y = obj.project(Vector::Zero(D));
  double fy = value(y);
  double residual = kInfinity;
  for (int it = 0; it < opt.max_iterations; ++it) {
    Vector grad = H * y + k;
    residual = (y - obj.project(y - grad)).lpNorm<Eigen::Infinity>();
    res.iterations = it;
    if (residual <= opt.tolerance) break;
    if (residual < 1e-5) {
      // exact solve on the current free set; kept only if it improves the residual
      std::vector<Index> fr;
      for (Index i = 0; i < D; ++i) {
        const double w = 1e-9 * (1.0 + std::abs(y[i]));
        if (y[i] > obj.lower()[i] + w && y[i] < obj.upper()[i] - w) fr.push_back(i);
      }
      if (!fr.empty()) {
        const auto F = static_cast<Index>(fr.size());
        Matrix HF(F, F);
        Vector rhs(F);
        for (Index a = 0; a < F; ++a) {
          rhs[a] = -grad[fr[static_cast<std::size_t>(a)]];
          for (Index b = 0; b < F; ++b) HF(a, b) = H(fr[static_cast<std::size_t>(a)], fr[static_cast<std::size_t>(b)]);
        }
        const Vector step = HF.completeOrthogonalDecomposition().solve(rhs);
        Vector cand = y;
        for (Index a = 0; a < F; ++a) cand[fr[static_cast<std::size_t>(a)]] += step[a];
        cand = obj.project(cand);
        const Vector gc = H * cand + k;
        const double rc = (cand - obj.project(cand - gc)).lpNorm<Eigen::Infinity>();
        if (rc < residual) {
          y = cand;
          fy = value(y);
          grad = gc;
          residual = rc;
          if (residual <= opt.tolerance) break;
        }
      }
    }

    const double eps_act = std::min(1e-6, residual);
    std::vector<Index> freeset;
    freeset.reserve(static_cast<std::size_t>(D));
    for (Index i = 0; i < D; ++i) {
      const bool at_lo = y[i] <= obj.lower()[i] + eps_act && grad[i] > 0.0;
      const bool at_hi = y[i] >= obj.upper()[i] - eps_act && grad[i] < 0.0;
      if (!(at_lo || at_hi)) freeset.push_back(i);
    }
    Vector dir = -grad;
    for (Index i = 0; i < D; ++i) {
      const bool in_free = std::binary_search(freeset.begin(), freeset.end(), i);
      if (!in_free) dir[i] = obj.project(Vector(y - grad))[i] - y[i];
    }
    if (!freeset.empty()) {
      const auto F = static_cast<Index>(freeset.size());
      Matrix HF(F, F);
      Vector gF(F);
      for (Index a = 0; a < F; ++a) {
        gF[a] = grad[freeset[static_cast<std::size_t>(a)]];
        for (Index b = 0; b < F; ++b)
          HF(a, b) = H(freeset[static_cast<std::size_t>(a)], freeset[static_cast<std::size_t>(b)]);
      }
      HF.diagonal().array() += reg;
      Eigen::LDLT<Matrix> ldlt(HF);
      const Vector step = -ldlt.solve(gF);
      if (step.allFinite())
        for (Index a = 0; a < F; ++a) dir[freeset[static_cast<std::size_t>(a)]] = step[a];
    }

    // Armijo search along the projection arc, with a projected-gradient
    // fallback when the Newton arc does not decrease d.
    auto search = [&](const Vector& d) -> bool {
      double alpha = 1.0;
      for (int ls = 0; ls < 60; ++ls) {
        const Vector cand = obj.project(y + alpha * d);
        const double fc = value(cand);
        if (fc <= fy + 1e-4 * grad.dot(cand - y) && (cand - y).lpNorm<Eigen::Infinity>() > 0.0) {
          y = cand;
          fy = fc;
          return true;
        }
        alpha *= 0.5;
      }
      return false;
    };
    if (!search(dir)) {
      const double L = std::max(H.diagonal().sum(), 1e-12);
      if (!search(-grad / L) && !search(-grad)) break;
    }
  }
  const Vector grad = H * y + k;
  residual = (y - obj.project(y - grad)).lpNorm<Eigen::Infinity>();
  if (!(residual <= opt.tolerance))
    throw DualSolveError("exact dual solve did not reach the requested residual", residual);
  res.point = DualPoint::unstack(obj.layout(), y);
  res.residual = residual;
  return res;
}

inline DualPoint solve_dual_exact(const DualObjective& obj, const DualSolveOptions& opt = {}) {
  return solve_dual_exact_detailed(obj, opt).point;
}

}  // namespace shield
