#pragma once

// Independent reference computations for the tests. Nothing here calls the
// solver or the dual engine under test.

#include "shield/problem.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <vector>

namespace shield::testing {

struct InstanceShape {
  Index n_min = 1, n_max = 8;
  Index screenable_max = 6;
  Index immutable_max = 3;
  Index equality_max = 1;
  Index selected_max = 4;
  double lambda_max = 2.0;
  double zeta = 0.5;
  /// ε as a fraction of ε_crit (ε_crit itself when 1)
  double epsilon_fraction = 1.0;
};

/// Random program that is Slater feasible after ζ-tightening: a random θ₀
/// satisfies every tightened inequality with slack and every equality.
inline RegularizedProgram random_program(std::mt19937_64& rng, const InstanceShape& s) {
  std::uniform_real_distribution<double> u(-1.0, 1.0), pos(0.05, 1.0), lam(0.0, 1.0), ufrac(0.2, 1.0);
  auto pick = [&](Index lo, Index hi) { return std::uniform_int_distribution<Index>(lo, hi)(rng); };
  auto rand_matrix = [&](Index r, Index c) {
    Matrix m(r, c);
    for (Index i = 0; i < r; ++i)
      for (Index j = 0; j < c; ++j) m(i, j) = u(rng);
    return m;
  };
  auto rand_vector = [&](Index r) {
    Vector v(r);
    for (Index i = 0; i < r; ++i) v[i] = u(rng);
    return v;
  };
  const Index n = pick(s.n_min, s.n_max);
  const Matrix B = rand_matrix(n, n);
  const Matrix Q = B.transpose() * B + (0.1 + pos(rng)) * Matrix::Identity(n, n);
  const Vector c = 3.0 * rand_vector(n);
  const Vector theta0 = 0.5 * rand_vector(n);

  const Index cs = pick(0, s.screenable_max);
  Matrix As = rand_matrix(cs, n);
  for (Index i = 0; i < cs; ++i)
    if (As.row(i).norm() < 1e-3) As(i, 0) = 1.0;
  Vector bs(cs);
  for (Index i = 0; i < cs; ++i) bs[i] = As.row(i).dot(theta0) + s.zeta + 0.5 * pos(rng);

  const Index ci = pick(0, s.immutable_max);
  const Matrix Ai = rand_matrix(ci, n);
  Vector bi(ci);
  for (Index i = 0; i < ci; ++i) bi[i] = Ai.row(i).dot(theta0) + 0.5 * pos(rng);

  const Index pe = std::min<Index>(pick(0, s.equality_max), n > 1 ? n - 1 : 0);
  const Matrix H = rand_matrix(pe, n);
  const Vector h = H * theta0;

  std::vector<Index> coords(static_cast<std::size_t>(n));
  for (Index k = 0; k < n; ++k) coords[static_cast<std::size_t>(k)] = k;
  std::shuffle(coords.begin(), coords.end(), rng);
  const Index q = std::min<Index>(pick(0, s.selected_max), n);
  std::vector<Index> sel(coords.begin(), coords.begin() + q);
  std::sort(sel.begin(), sel.end());

  const double lambda = q > 0 ? s.lambda_max * lam(rng) : 0.0;
  RegularizedProgram p(Q, c, ConstraintBlock(As, bs), ConstraintBlock(Ai, bi), EqualityBlock{H, h}, sel, lambda,
                       s.zeta, 1.0);
  const double crit = epsilon_crit(p);
  const double eps = std::isfinite(crit) ? s.epsilon_fraction * crit * ufrac(rng) : 0.01;
  return p.with_epsilon(eps);
}

/// Row form of every inequality: tightened screenable rows then immutable rows.
struct Rows {
  Matrix A;
  Vector b;
};

inline Rows inequality_rows(const RegularizedProgram& p, bool tightened) {
  Rows r;
  r.A.resize(p.num_screenable() + p.num_immutable(), p.n());
  r.b.resize(r.A.rows());
  if (p.num_screenable() > 0) {
    r.A.topRows(p.num_screenable()) = p.screenable().A;
    r.b.head(p.num_screenable()) = tightened ? Vector(p.screenable().b.array() - p.zeta()) : p.screenable().b;
  }
  if (p.num_immutable() > 0) {
    r.A.bottomRows(p.num_immutable()) = p.immutable().A;
    r.b.tail(p.num_immutable()) = p.immutable().b;
  }
  return r;
}

/**
 * Brute force over every sign pattern of the ℓ1 coordinates and every subset
 * of active inequalities: each candidate is an equality-constrained QP, and
 * the optimum is the best candidate that is feasible and sign consistent.
 * The true optimum is always among the candidates when its KKT system is
 * regular, which holds generically for random data.
 */
struct EnumerationResult {
  Vector theta;
  double objective = std::numeric_limits<double>::infinity();
  std::size_t candidates = 0;
};

inline std::optional<EnumerationResult> enumerate_optimum(const RegularizedProgram& p, bool tightened = true,
                                                          double tol = 1e-9) {
  const Index n = p.n();
  const Rows rows = inequality_rows(p, tightened);
  const Index m = rows.A.rows();
  const Index q = p.num_selected();
  const Index pe = p.num_equality();
  EnumerationResult best;
  bool found = false;

  std::vector<int> sign(static_cast<std::size_t>(q), -1);
  auto next_sign = [&]() {
    for (Index j = 0; j < q; ++j) {
      auto& sj = sign[static_cast<std::size_t>(j)];
      if (sj < 1) {
        ++sj;
        return true;
      }
      sj = -1;
    }
    return false;
  };
  do {
    Vector lin = p.c();
    std::vector<Index> zero;
    for (Index j = 0; j < q; ++j) {
      const int sj = sign[static_cast<std::size_t>(j)];
      const Index k = p.selected()[static_cast<std::size_t>(j)];
      if (sj == 0) zero.push_back(k);
      else lin[k] += p.lambda() * sj;
    }
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << m); ++mask) {
      std::vector<Index> act;
      for (Index i = 0; i < m; ++i)
        if (mask >> i & 1U) act.push_back(i);
      const Index k = static_cast<Index>(act.size() + zero.size()) + pe;
      if (k > n) continue;
      Matrix C(k, n);
      Vector d(k);
      Index r = 0;
      for (Index i : act) {
        C.row(r) = rows.A.row(i);
        d[r++] = rows.b[i];
      }
      for (Index i = 0; i < pe; ++i) {
        C.row(r) = p.equality().H.row(i);
        d[r++] = p.equality().h[i];
      }
      for (Index z : zero) {
        C.row(r).setZero();
        C(r, z) = 1.0;
        d[r++] = 0.0;
      }
      Matrix K = Matrix::Zero(n + k, n + k);
      K.topLeftCorner(n, n) = p.Q();
      K.topRightCorner(n, k) = C.transpose();
      K.bottomLeftCorner(k, n) = C;
      Vector rhs(n + k);
      rhs << -lin, d;
      Eigen::FullPivLU<Matrix> lu(K);
      if (!lu.isInvertible()) continue;
      const Vector sol = lu.solve(rhs);
      const Vector th = sol.head(n);
      ++best.candidates;
      if (m > 0 && (rows.A * th - rows.b).maxCoeff() > tol) continue;
      if (pe > 0 && (p.equality().H * th - p.equality().h).cwiseAbs().maxCoeff() > tol) continue;
      bool consistent = true;
      for (Index j = 0; j < q && consistent; ++j) {
        const int sj = sign[static_cast<std::size_t>(j)];
        const double v = th[p.selected()[static_cast<std::size_t>(j)]];
        if (sj != 0 && sj * v < -tol) consistent = false;
      }
      if (!consistent) continue;
      const double f = p.objective(th);
      if (f < best.objective) {
        best.objective = f;
        best.theta = th;
        found = true;
      }
    }
  } while (next_sign());
  if (!found) return std::nullopt;
  return best;
}

/// Central finite differences of a scalar function.
inline Vector finite_difference(const std::function<double(const Vector&)>& f, const Vector& x, double h = 1e-6) {
  Vector g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    Vector a = x, b = x;
    a[i] += h;
    b[i] -= h;
    g[i] = (f(a) - f(b)) / (2.0 * h);
  }
  return g;
}

/// Dual function evaluated straight from its definition as the negated
/// minimum of the Lagrangian, no shared code with the dual engine:
/// d(y) = −min_θ L(θ, y) for y = (μ, η, ν, g).
inline double dual_by_definition(const RegularizedProgram& p, const Vector& mu, const Vector& eta,
                                 const Vector& nu, const Vector& g) {
  Vector v = p.c();
  double off = 0.0;
  if (p.num_screenable() > 0) {
    v += p.screenable().A.transpose() * mu;
    off += mu.dot(p.screenable().b.array().matrix() - Vector::Constant(mu.size(), p.zeta()));
  }
  if (p.num_immutable() > 0) {
    v += p.immutable().A.transpose() * eta;
    off += eta.dot(p.immutable().b);
  }
  if (p.num_equality() > 0) {
    v += p.equality().H.transpose() * nu;
    off += nu.dot(p.equality().h);
  }
  for (Index j = 0; j < p.num_selected(); ++j) v[p.selected()[static_cast<std::size_t>(j)]] += g[j];
  // min_θ ½θᵀQθ + vᵀθ = −½vᵀQ⁻¹v
  const Vector th = -p.Q().ldlt().solve(v);
  const double lmin = 0.5 * th.dot(p.Q() * th) + v.dot(th) - off;
  return -lmin;
}

}  // namespace shield::testing
