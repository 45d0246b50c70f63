#pragma once

/**
 * @file primal_solver.hpp
 * @brief Dense primal-dual interior point solver for the epigraph QP, with an
 * equality-constrained polish on the identified active set.
 *
 * The s block of the epigraph form couples each slack only to the coordinate
 * it bounds, so it is eliminated per entry and every Newton step reduces to
 * one n×n Cholesky factorization (plus a Schur complement for equalities).
 */

#include "shield/dual.hpp"
#include "shield/problem.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace shield {

enum class SolveStatus { optimal, infeasible, max_iter };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::max_iter: return "max_iter";
  }
  return "unknown";
}

struct Solution {
  Vector theta;
  Vector s;              ///< epigraph slacks, |Sθ| at the returned point
  double objective = kInfinity;
  SolveStatus status = SolveStatus::max_iter;
  int iterations = 0;    ///< interior point iterations
  DualPoint multipliers; ///< (μ, η, ν, g) of the solved program
  double kkt = kInfinity;
  bool polished = false;

  bool optimal() const { return status == SolveStatus::optimal; }
};

struct SolveOptions {
  bool tighten = true;          ///< apply the ζ shift to the screenable rows
  double tolerance = 1e-10;     ///< relative interior point stopping tolerance
  int max_iterations = 200;
  bool polish = true;
};

/// KKT residual split by condition; each entry is a max over its terms.
struct KktReport {
  double stationarity = 0.0;
  double primal = 0.0;           ///< row violations, equality residuals, |Sθ| − s, −s
  double dual = 0.0;             ///< −μ, −η, |g| − λ
  double complementarity = 0.0;  ///< |μf|, |ηf|, |λs − g·Sθ|
  double support = 0.0;          ///< |gᵀSθ − λ‖Sθ‖₁|

  double max() const { return std::max({stationarity, primal, dual, complementarity, support}); }
};

namespace detail {

/// Appendix-style KKT residual with an explicit screenable right-hand side.
inline KktReport kkt_report_with_rhs(const RegularizedProgram& p, const Vector& screen_rhs,
                                     const Vector& theta, const Vector& s, const DualPoint& y) {
  const Index n = p.n();
  if (theta.size() != n || s.size() != p.num_selected() || y.mu.size() != p.num_screenable() ||
      y.eta.size() != p.num_immutable() || y.nu.size() != p.num_equality() ||
      y.g.size() != p.num_selected())
    throw std::invalid_argument("kkt_residual: dimension mismatch");
  KktReport rep;
  auto upd = [](double& r, double v) { r = std::max(r, std::isfinite(v) ? v : kInfinity); };

  Vector stat = p.Q() * theta + p.c();
  if (p.num_screenable() > 0) stat += p.screenable().A.transpose() * y.mu;
  if (p.num_immutable() > 0) stat += p.immutable().A.transpose() * y.eta;
  if (p.num_equality() > 0) stat += p.equality().H.transpose() * y.nu;
  for (Index j = 0; j < p.num_selected(); ++j) stat[p.selected()[static_cast<std::size_t>(j)]] += y.g[j];
  if (n > 0) upd(rep.stationarity, stat.lpNorm<Eigen::Infinity>());

  for (Index i = 0; i < p.num_screenable(); ++i) {
    const double f = p.screenable().A.row(i).dot(theta) - screen_rhs[i];
    upd(rep.primal, f);
    upd(rep.dual, -y.mu[i]);
    upd(rep.complementarity, std::abs(y.mu[i] * f));
  }
  for (Index i = 0; i < p.num_immutable(); ++i) {
    const double f = p.immutable().A.row(i).dot(theta) - p.immutable().b[i];
    upd(rep.primal, f);
    upd(rep.dual, -y.eta[i]);
    upd(rep.complementarity, std::abs(y.eta[i] * f));
  }
  for (Index i = 0; i < p.num_equality(); ++i)
    upd(rep.primal, std::abs(p.equality().H.row(i).dot(theta) - p.equality().h[i]));

  const Vector st = p.select(theta);
  const double lam = p.lambda();
  for (Index j = 0; j < p.num_selected(); ++j) {
    upd(rep.primal, std::abs(st[j]) - s[j]);
    upd(rep.primal, -s[j]);
    upd(rep.dual, std::abs(y.g[j]) - lam);
    // λ s_j ≥ g_j [Sθ]_j holds for any feasible pair; equality is complementarity
    upd(rep.complementarity, std::abs(lam * s[j] - y.g[j] * st[j]));
  }
  if (p.num_selected() > 0) upd(rep.support, std::abs(y.g.dot(st) - lam * st.lpNorm<1>()));
  return rep;
}

inline double kkt_residual_with_rhs(const RegularizedProgram& p, const Vector& screen_rhs,
                                    const Vector& theta, const Vector& s, const DualPoint& y) {
  return kkt_report_with_rhs(p, screen_rhs, theta, s, y).max();
}

/**
 * Interior point workspace for
 *   min ½θᵀQθ + cᵀθ + λ1ᵀs  s.t.  Rθ ≤ r,  ±θ_{k_j} − s_j ≤ 0,  −s ≤ 0,  Hθ = h.
 * With λ = 0 the slacks and epigraph rows are dropped.
 */
class EpigraphIPM {
 public:
  EpigraphIPM(const RegularizedProgram& p, const Vector& screen_rhs, const SolveOptions& opt)
      : p_(p), opt_(opt) {
    n_ = p.n();
    const Index c = p.num_screenable();
    const Index m = p.num_immutable();
    mr_ = c + m;
    R_.resize(mr_, n_);
    r_.resize(mr_);
    if (c > 0) {
      R_.topRows(c) = p.screenable().A;
      r_.head(c) = screen_rhs;
    }
    if (m > 0) {
      R_.bottomRows(m) = p.immutable().A;
      r_.tail(m) = p.immutable().b;
    }
    q_ = p.lambda() > 0.0 ? p.num_selected() : 0;
    pe_ = p.num_equality();
    lam_ = p.lambda();
  }

  Solution run(const std::optional<Vector>& warm) {
    Solution out;
    init(warm);
    const double scale_p = 1.0 + (mr_ > 0 ? r_.lpNorm<Eigen::Infinity>() : 0.0) +
                           (pe_ > 0 ? p_.equality().h.lpNorm<Eigen::Infinity>() : 0.0);
    const double scale_d = 1.0 + p_.c().lpNorm<Eigen::Infinity>() + lam_;
    const Index mtot = mr_ + 3 * q_;
    int it = 0;
    bool converged = false;
    bool infeasible = false;
    for (; it < opt_.max_iterations; ++it) {
      residuals();
      const double mu = mtot > 0 ? complementarity() / static_cast<double>(mtot) : 0.0;
      pres_ = primal_residual() / scale_p;
      const double dres = dual_residual() / scale_d;
      if (pres_ <= opt_.tolerance && dres <= opt_.tolerance && mu <= opt_.tolerance * scale_d) {
        converged = true;
        break;
      }
      if (it >= 25 && pres_ > 1e3 * opt_.tolerance && max_dual() > 1e9 * scale_d) {
        infeasible = true;
        break;
      }
      if (!factor()) break;
      // predictor
      Dir aff = direction(affine_rhs());
      const double a_aff = step_to_boundary(aff, 1.0);
      double mu_aff = 0.0;
      if (mtot > 0) {
        mu_aff = ((wR_ + a_aff * aff.wR).cwiseProduct(zR_ + a_aff * aff.zR)).sum();
        if (q_ > 0)
          for (int b = 0; b < 3; ++b)
            mu_aff += ((w_[b] + a_aff * aff.w[b]).cwiseProduct(z_[b] + a_aff * aff.z[b])).sum();
        mu_aff /= static_cast<double>(mtot);
      }
      const double sigma = mu > 0.0 ? std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3) : 0.0;
      // corrector
      Dir cor = direction(corrector_rhs(aff, sigma * mu));
      const double alpha = std::min(1.0, 0.99 * step_to_boundary(cor, kInfinity));
      apply(cor, alpha);
      if (!(alpha > 1e-14)) break;
    }
    out.iterations = it;
    residuals();
    pres_ = primal_residual() / scale_p;

    out.theta = theta_;
    out.multipliers = multipliers();
    if (q_ == 0 && p_.num_selected() > 0) out.multipliers.g.setZero();
    out.s = p_.select(out.theta).cwiseAbs();
    const Vector screen_rhs = r_.head(p_.num_screenable());
    out.kkt = kkt_residual_with_rhs(p_, screen_rhs, out.theta, out.s, out.multipliers);

    if (opt_.polish && !infeasible) {
      if (auto pol = polish(screen_rhs); pol && pol->kkt <= out.kkt) {
        out.theta = pol->theta;
        out.s = pol->s;
        out.multipliers = pol->multipliers;
        out.kkt = pol->kkt;
        out.polished = true;
      }
    }
    out.objective = p_.objective(out.theta);
    if (infeasible) {
      out.status = SolveStatus::infeasible;
    } else if (converged || out.kkt <= 1e-7) {
      out.status = SolveStatus::optimal;
    } else {
      out.status = pres_ > 1e-6 ? SolveStatus::infeasible : SolveStatus::max_iter;
    }
    return out;
  }

 private:
  struct Dir {
    Vector theta, s, nu;
    Vector wR, zR;
    Vector w[3], z[3];
  };
  struct Rhs {
    Vector rcR;
    Vector rc[3];
  };

  void init(const std::optional<Vector>& warm) {
    llt_q_.compute(p_.Q());
    if (warm && warm->size() == n_ && warm->allFinite()) {
      theta_ = *warm;
    } else {
      theta_ = -llt_q_.solve(p_.c());
      if (pe_ > 0) {
        // project onto Hθ = h in the Q-metric
        const Matrix& H = p_.equality().H;
        const Matrix Y = llt_q_.solve(H.transpose());
        Eigen::CompleteOrthogonalDecomposition<Matrix> cod(H * Y);
        theta_ -= Y * cod.solve(H * theta_ - p_.equality().h);
      }
    }
    nu_ = Vector::Zero(pe_);
    wR_ = Vector::Ones(mr_);
    zR_ = Vector::Ones(mr_);
    if (mr_ > 0) wR_ = (r_ - R_ * theta_).cwiseMax(1.0);
    s_ = Vector::Zero(q_);
    for (int b = 0; b < 3; ++b) {
      w_[b] = Vector::Ones(q_);
      z_[b] = Vector::Ones(q_);
    }
    if (q_ > 0) {
      for (Index j = 0; j < q_; ++j) s_[j] = std::abs(theta_[k(j)]) + 1.0;
      for (Index j = 0; j < q_; ++j) {
        w_[0][j] = s_[j] - theta_[k(j)];
        w_[1][j] = s_[j] + theta_[k(j)];
        w_[2][j] = s_[j];
        // split λ across the three rows so the s-stationarity starts near zero
        for (int b = 0; b < 3; ++b) z_[b][j] = std::max(lam_ / 3.0, 1e-2);
      }
    }
  }

  Index k(Index j) const { return p_.selected()[static_cast<std::size_t>(j)]; }

  void residuals() {
    rd_ = p_.Q() * theta_ + p_.c();
    if (mr_ > 0) rd_ += R_.transpose() * zR_;
    if (pe_ > 0) rd_ += p_.equality().H.transpose() * nu_;
    rs_ = Vector::Zero(q_);
    for (Index j = 0; j < q_; ++j) {
      rd_[k(j)] += z_[0][j] - z_[1][j];
      rs_[j] = lam_ - z_[0][j] - z_[1][j] - z_[2][j];
    }
    rpR_ = mr_ > 0 ? Vector(R_ * theta_ + wR_ - r_) : Vector(0);
    for (int b = 0; b < 3; ++b) rp_[b].resize(q_);
    for (Index j = 0; j < q_; ++j) {
      rp_[0][j] = theta_[k(j)] - s_[j] + w_[0][j];
      rp_[1][j] = -theta_[k(j)] - s_[j] + w_[1][j];
      rp_[2][j] = -s_[j] + w_[2][j];
    }
    re_ = pe_ > 0 ? Vector(p_.equality().H * theta_ - p_.equality().h) : Vector(0);
  }

  double primal_residual() const {
    double r = 0.0;
    if (mr_ > 0) r = std::max(r, rpR_.lpNorm<Eigen::Infinity>());
    if (q_ > 0)
      for (int b = 0; b < 3; ++b) r = std::max(r, rp_[b].lpNorm<Eigen::Infinity>());
    if (pe_ > 0) r = std::max(r, re_.lpNorm<Eigen::Infinity>());
    return r;
  }
  double dual_residual() const {
    double r = n_ > 0 ? rd_.lpNorm<Eigen::Infinity>() : 0.0;
    if (q_ > 0) r = std::max(r, rs_.lpNorm<Eigen::Infinity>());
    return r;
  }
  double complementarity() const {
    double g = mr_ > 0 ? wR_.dot(zR_) : 0.0;
    for (int b = 0; b < 3 && q_ > 0; ++b) g += w_[b].dot(z_[b]);
    return g;
  }
  double max_dual() const {
    double m = mr_ > 0 ? zR_.lpNorm<Eigen::Infinity>() : 0.0;
    if (pe_ > 0) m = std::max(m, nu_.lpNorm<Eigen::Infinity>());
    return m;
  }

  bool factor() {
    dR_ = zR_.cwiseQuotient(wR_);
    Matrix K = p_.Q();
    if (mr_ > 0) K.noalias() += R_.transpose() * dR_.asDiagonal() * R_;
    sig_.resize(q_);
    cpl_.resize(q_);
    for (Index j = 0; j < q_; ++j) {
      const double d0 = z_[0][j] / w_[0][j];
      const double d1 = z_[1][j] / w_[1][j];
      const double d2 = z_[2][j] / w_[2][j];
      sig_[j] = d0 + d1 + d2;
      cpl_[j] = d1 - d0;
      K(k(j), k(j)) += d0 + d1 - cpl_[j] * cpl_[j] / sig_[j];
    }
    llt_.compute(K);
    if (llt_.info() != Eigen::Success) return false;
    if (pe_ > 0) {
      KinvHt_ = llt_.solve(p_.equality().H.transpose());
      schur_.compute(p_.equality().H * KinvHt_);
    }
    return true;
  }

  Rhs affine_rhs() const {
    Rhs r;
    r.rcR = -wR_.cwiseProduct(zR_);
    for (int b = 0; b < 3; ++b) r.rc[b] = -w_[b].cwiseProduct(z_[b]);
    return r;
  }
  Rhs corrector_rhs(const Dir& aff, double target) const {
    Rhs r;
    r.rcR = -wR_.cwiseProduct(zR_) - aff.wR.cwiseProduct(aff.zR) + Vector::Constant(mr_, target);
    for (int b = 0; b < 3; ++b)
      r.rc[b] = -w_[b].cwiseProduct(z_[b]) - aff.w[b].cwiseProduct(aff.z[b]) +
                Vector::Constant(q_, target);
    return r;
  }

  /// Solves the Newton system for complementarity right-hand side `rc`.
  Dir direction(const Rhs& rc) const {
    Dir d;
    // t = W⁻¹(rc + Z r_p)
    const Vector tR = mr_ > 0 ? Vector((rc.rcR + zR_.cwiseProduct(rpR_)).cwiseQuotient(wR_)) : Vector(0);
    Vector t[3];
    for (int b = 0; b < 3; ++b) t[b] = (rc.rc[b] + z_[b].cwiseProduct(rp_[b])).cwiseQuotient(w_[b]);

    Vector f = -rd_;
    if (mr_ > 0) f -= R_.transpose() * tR;
    Vector fs(q_);
    for (Index j = 0; j < q_; ++j) {
      f[k(j)] -= t[0][j] - t[1][j];
      fs[j] = -rs_[j] + t[0][j] + t[1][j] + t[2][j];
      f[k(j)] -= cpl_[j] / sig_[j] * fs[j];
    }
    if (pe_ > 0) {
      const Vector Kf = llt_.solve(f);
      d.nu = schur_.solve(p_.equality().H * Kf + re_);
      d.theta = Kf - KinvHt_ * d.nu;
    } else {
      d.nu = Vector(0);
      d.theta = llt_.solve(f);
    }
    d.s.resize(q_);
    for (Index j = 0; j < q_; ++j) d.s[j] = (fs[j] - cpl_[j] * d.theta[k(j)]) / sig_[j];

    if (mr_ > 0) {
      const Vector Gdx = R_ * d.theta;
      d.zR = dR_.cwiseProduct(Gdx) + tR;
      d.wR = -rpR_ - Gdx;
    } else {
      d.zR = d.wR = Vector(0);
    }
    for (int b = 0; b < 3; ++b) {
      d.w[b].resize(q_);
      d.z[b].resize(q_);
    }
    for (Index j = 0; j < q_; ++j) {
      const double g[3] = {d.theta[k(j)] - d.s[j], -d.theta[k(j)] - d.s[j], -d.s[j]};
      for (int b = 0; b < 3; ++b) {
        d.z[b][j] = z_[b][j] / w_[b][j] * g[b] + t[b][j];
        d.w[b][j] = -rp_[b][j] - g[b];
      }
    }
    return d;
  }

  static double max_step(const Vector& x, const Vector& dx, double cap) {
    double a = cap;
    for (Index i = 0; i < x.size(); ++i)
      if (dx[i] < 0.0) a = std::min(a, -x[i] / dx[i]);
    return a;
  }
  double step_to_boundary(const Dir& d, double cap) const {
    double a = cap;
    a = max_step(wR_, d.wR, a);
    a = max_step(zR_, d.zR, a);
    for (int b = 0; b < 3; ++b) {
      a = max_step(w_[b], d.w[b], a);
      a = max_step(z_[b], d.z[b], a);
    }
    return a;
  }
  void apply(const Dir& d, double a) {
    theta_ += a * d.theta;
    s_ += a * d.s;
    nu_ += a * d.nu;
    wR_ += a * d.wR;
    zR_ += a * d.zR;
    for (int b = 0; b < 3; ++b) {
      w_[b] += a * d.w[b];
      z_[b] += a * d.z[b];
    }
  }

  DualPoint multipliers() const {
    DualPoint y;
    const Index c = p_.num_screenable();
    y.mu = zR_.head(c);
    y.eta = zR_.tail(p_.num_immutable());
    y.nu = nu_;
    y.g = Vector::Zero(p_.num_selected());
    if (q_ > 0) y.g = z_[0] - z_[1];
    return y;
  }

  struct Polished {
    Vector theta, s;
    DualPoint multipliers;
    double kkt = kInfinity;
  };

  /// Re-solves with the identified active rows and ℓ1 sign pattern as equalities.
  std::optional<Polished> polish(const Vector& screen_rhs) const {
    const Index c = p_.num_screenable();
    const DualPoint y0 = multipliers();
    std::vector<Index> active;
    for (Index i = 0; i < mr_; ++i)
      if (zR_[i] > wR_[i]) active.push_back(i);
    std::vector<Index> zeros;
    Vector cp = p_.c();
    Vector sign = Vector::Zero(p_.num_selected());
    const Vector st = p_.select(theta_);
    for (Index j = 0; j < p_.num_selected(); ++j) {
      const double slack = lam_ - std::abs(y0.g[j]);
      if (lam_ == 0.0 || slack > std::abs(st[j])) {
        if (lam_ > 0.0) zeros.push_back(j);
      } else {
        sign[j] = st[j] >= 0.0 ? 1.0 : -1.0;
        cp[k(j)] += lam_ * sign[j];
      }
    }
    const auto na = static_cast<Index>(active.size());
    const auto nz = static_cast<Index>(zeros.size());
    const Index rows = na + nz + pe_;
    Matrix C = Matrix::Zero(rows, n_);
    Vector d = Vector::Zero(rows);
    for (Index a = 0; a < na; ++a) {
      C.row(a) = R_.row(active[static_cast<std::size_t>(a)]);
      d[a] = r_[active[static_cast<std::size_t>(a)]];
    }
    for (Index a = 0; a < nz; ++a) C(na + a, k(zeros[static_cast<std::size_t>(a)])) = 1.0;
    if (pe_ > 0) {
      C.bottomRows(pe_) = p_.equality().H;
      d.tail(pe_) = p_.equality().h;
    }
    Vector theta;
    Vector mult = Vector::Zero(rows);
    if (rows > 0) {
      const Matrix Y = llt_q_.solve(C.transpose());
      const Matrix Sc = C * Y;
      const Vector rhs = -(d + C * llt_q_.solve(cp));
      Eigen::LDLT<Matrix> ldlt(Sc);
      bool ok = ldlt.info() == Eigen::Success && ldlt.isPositive();
      if (ok) {
        const Vector D = ldlt.vectorD();
        ok = D.minCoeff() > 1e-12 * std::max(1.0, D.maxCoeff());
      }
      if (ok) {
        mult = ldlt.solve(rhs);
      } else {
        Eigen::CompleteOrthogonalDecomposition<Matrix> cod(Sc);
        mult = cod.solve(rhs);
      }
      theta = -llt_q_.solve(cp + C.transpose() * mult);
    } else {
      theta = -llt_q_.solve(cp);
    }
    if (!theta.allFinite() || !mult.allFinite()) return std::nullopt;

    Polished out;
    out.theta = theta;
    DualPoint y;
    Vector zr = Vector::Zero(mr_);
    for (Index a = 0; a < na; ++a) zr[active[static_cast<std::size_t>(a)]] = std::max(0.0, mult[a]);
    y.mu = zr.head(c);
    y.eta = zr.tail(p_.num_immutable());
    y.g = lam_ * sign;
    for (Index a = 0; a < nz; ++a)
      y.g[zeros[static_cast<std::size_t>(a)]] = std::clamp(mult[na + a], -lam_, lam_);
    y.nu = pe_ > 0 ? Vector(mult.tail(pe_)) : Vector(0);
    const Vector stp = p_.select(theta);
    for (Index a = 0; a < nz; ++a) out.theta[k(zeros[static_cast<std::size_t>(a)])] = 0.0;
    for (Index j = 0; j < p_.num_selected(); ++j)
      if (sign[j] * stp[j] < 0.0) return std::nullopt;
    out.s = p_.select(out.theta).cwiseAbs();
    out.multipliers = y;
    out.kkt = kkt_residual_with_rhs(p_, screen_rhs, out.theta, out.s, y);
    return out;
  }

  const RegularizedProgram& p_;
  SolveOptions opt_;
  Index n_ = 0, mr_ = 0, q_ = 0, pe_ = 0;
  double lam_ = 0.0;
  Matrix R_;
  Vector r_;
  Eigen::LLT<Matrix> llt_q_;

  Vector theta_, s_, nu_, wR_, zR_;
  Vector w_[3], z_[3];
  Vector rd_, rs_, rpR_, re_;
  Vector rp_[3];
  double pres_ = 0.0;

  Vector dR_, sig_, cpl_;
  Eigen::LLT<Matrix> llt_;
  Matrix KinvHt_;
  Eigen::LDLT<Matrix> schur_;
};

}  // namespace detail

/// Max over stationarity, feasibility, dual feasibility and complementarity
/// violations of (θ, s, y) for the ζ-tightened epigraph program.
inline double kkt_residual(const RegularizedProgram& p, const Vector& theta, const Vector& s,
                           const DualPoint& y) {
  return detail::kkt_residual_with_rhs(p, p.tightened_rhs(), theta, s, y);
}

/// Same residual against the untightened screenable rows.
inline KktReport kkt_report(const RegularizedProgram& p, const Vector& theta, const Vector& s,
                            const DualPoint& y, bool tightened = true) {
  return detail::kkt_report_with_rhs(p, tightened ? p.tightened_rhs() : p.screenable().b, theta, s, y);
}

inline double kkt_residual_untightened(const RegularizedProgram& p, const Vector& theta,
                                       const Vector& s, const DualPoint& y) {
  return detail::kkt_residual_with_rhs(p, p.screenable().b, theta, s, y);
}

/**
 * Solves the epigraph form of `p` (tightened by ζ unless `opt.tighten` is
 * false). `warm` seeds the interior point iterate with a previous θ.
 */
inline Solution solve(const RegularizedProgram& p, const std::optional<Solution>& warm = std::nullopt,
                      const SolveOptions& opt = {}) {
  require_valid(p);
  const Vector rhs = opt.tighten ? p.tightened_rhs() : Vector(p.screenable().b);
  if (p.n() == 0) {
    // nothing to optimize; feasible iff every constant row holds
    Solution out;
    out.theta = out.s = Vector(0);
    out.objective = 0.0;
    out.iterations = 0;
    out.multipliers = DualPoint::zeros({p.num_screenable(), p.num_immutable(), p.num_equality(), 0});
    out.kkt = detail::kkt_residual_with_rhs(p, rhs, out.theta, out.s, out.multipliers);
    out.status = out.kkt <= 0.0 ? SolveStatus::optimal : SolveStatus::infeasible;
    return out;
  }
  detail::EpigraphIPM ipm(p, rhs, opt);
  std::optional<Vector> w;
  if (warm && warm->theta.size() == p.n()) w = warm->theta;
  return ipm.run(w);
}

/// Horizon layout of θ: `stages` blocks of `block` entries starting at `offset`
/// (several such groups may be listed).
struct HorizonLayout {
  struct Group {
    Index offset = 0;
    Index stages = 0;
    Index block = 0;
  };
  std::vector<Group> groups;
  Index size = 0;
};

/// Shifts every stage block one stage earlier and repeats the terminal block.
inline Solution shift_warm_start(const Solution& previous, const HorizonLayout& layout) {
  if (previous.theta.size() != layout.size)
    throw std::invalid_argument("shift_warm_start: solution does not match the horizon layout");
  Solution out = previous;
  for (const auto& g : layout.groups) {
    if (g.offset < 0 || g.stages < 1 || g.block < 0 || g.offset + g.stages * g.block > layout.size)
      throw std::invalid_argument("shift_warm_start: group outside the parameter vector");
    for (Index st = 0; st + 1 < g.stages; ++st)
      out.theta.segment(g.offset + st * g.block, g.block) =
          previous.theta.segment(g.offset + (st + 1) * g.block, g.block);
  }
  out.iterations = 0;
  return out;
}

}  // namespace shield
