#include "shield/shield.hpp"
#include "support/instances.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>

using namespace shield;
using namespace shield::testing;

namespace {

DualPoint point(const RegularizedProgram& p, std::initializer_list<double> mu, std::initializer_list<double> g) {
  DualPoint y = DualPoint::zeros({p.num_screenable(), p.num_immutable(), p.num_equality(), p.num_selected()});
  if (mu.size()) y.mu = vec(mu);
  if (g.size()) y.g = vec(g);
  return y;
}

DualPoint random_feasible(std::mt19937_64& rng, const RegularizedProgram& p, double scale = 2.0) {
  std::exponential_distribution<double> ex(1.0);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> un(-1.0, 1.0);
  DualPoint y = DualPoint::zeros({p.num_screenable(), p.num_immutable(), p.num_equality(), p.num_selected()});
  for (Index i = 0; i < y.mu.size(); ++i) y.mu[i] = scale * ex(rng);
  for (Index i = 0; i < y.eta.size(); ++i) y.eta[i] = scale * ex(rng);
  for (Index i = 0; i < y.nu.size(); ++i) y.nu[i] = scale * nd(rng);
  for (Index i = 0; i < y.g.size(); ++i) y.g[i] = p.lambda() * un(rng);
  return y;
}

}  // namespace

TEST(DualValue, T0) {
  const DualObjective obj(t0());
  EXPECT_DOUBLE_EQ(dual_value(obj, point(t0(), {}, {0, 0})), 0.0);
  EXPECT_DOUBLE_EQ(dual_value(obj, point(t0(), {}, {1, 0})), 0.5);
}

TEST(DualValue, D2StrongDuality) {
  const DualObjective obj(d2());
  EXPECT_NEAR(dual_value(obj, point(d2(), {1.5}, {1.0})), 0.875, 1e-14);
  EXPECT_NEAR(dual_value(obj, point(d2(), {1.5}, {1.0})), -solve(d2()).objective, 1e-9);
}

TEST(DualValue, MatchesLagrangianDefinition) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 50; ++i) {
    const RegularizedProgram p = random_program(rng, {});
    const DualPoint y = random_feasible(rng, p);
    EXPECT_NEAR(dual_value(DualObjective(p), y), dual_by_definition(p, y.mu, y.eta, y.nu, y.g),
                1e-9 * (1.0 + std::abs(dual_value(DualObjective(p), y))));
  }
}

TEST(DualGradient, T0AtZero) {
  EXPECT_TRUE(dual_gradient(DualObjective(t0()), point(t0(), {}, {0, 0})).isZero(0.0));
}

TEST(DualGradient, FiniteDifferences) {
  std::mt19937_64 rng(12);
  std::vector<RegularizedProgram> programs{d1(), d2()};
  for (int i = 0; i < 30; ++i) programs.push_back(random_program(rng, {}));
  for (const auto& p : programs) {
    const DualObjective obj(p);
    const Vector y = random_feasible(rng, p).stacked();
    const Vector fd = finite_difference([&](const Vector& x) { return obj.value(x); }, y);
    const Vector g = obj.gradient(y);
    EXPECT_LE((fd - g).norm(), 1e-5 * (1.0 + g.norm()));
  }
}

TEST(DualGradient, MuBlockIsNegatedRowResidual) {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 20; ++i) {
    const RegularizedProgram p = random_program(rng, {});
    const DualObjective obj(p);
    const DualPoint y = random_feasible(rng, p);
    const Vector th = obj.primal_point(y);
    const Vector g = dual_gradient(obj, y);
    if (p.num_screenable() == 0) continue;
    const Vector expected = -(p.screenable().A * th - p.tightened_rhs());
    EXPECT_LE((g.head(p.num_screenable()) - expected).norm(), 1e-9 * (1.0 + expected.norm()));
  }
}

TEST(ProjectDual, Clamp) {
  Matrix A(2, 2);
  A << 1, 0, 0, 1;
  const RegularizedProgram p(Matrix::Identity(2, 2), Vector::Zero(2), ConstraintBlock(A, vec({1, 1})),
                             ConstraintBlock::empty(2), EqualityBlock::empty(2), {0}, 1.0, 0.5, 0.1);
  const DualPoint y = project_dual(DualObjective(p), vec({-1, 2, 3}));
  EXPECT_EQ(y.mu, vec({0, 2}));
  EXPECT_EQ(y.g, vec({1}));
  const DualPoint again = project_dual(DualObjective(p), y.stacked());
  EXPECT_EQ(again.stacked(), y.stacked());
}

TEST(ProjectDual, Nonexpansive) {
  std::mt19937_64 rng(14);
  std::normal_distribution<double> nd(0.0, 3.0);
  for (int i = 0; i < 50; ++i) {
    const RegularizedProgram p = random_program(rng, {});
    const DualObjective obj(p);
    Vector a(obj.layout().size()), b(obj.layout().size());
    for (Index k = 0; k < a.size(); ++k) {
      a[k] = nd(rng);
      b[k] = nd(rng);
    }
    EXPECT_LE((obj.project(a) - obj.project(b)).norm(), (a - b).norm() + 1e-12);
  }
}

TEST(ProjectedGradient, Values) {
  EXPECT_TRUE(projected_gradient(DualObjective(t0()), point(t0(), {}, {0, 0})).isZero(0.0));
  // D2 at μ = 0, g = 0: θ̂ = 3, gradient (−(3 − 0.5), −3) = (−2.5, −3);
  // projection of (2.5, 3) onto μ ≥ 0, |g| ≤ 1 is (2.5, 1)
  const Vector pg = projected_gradient(DualObjective(d2()), point(d2(), {0.0}, {0.0}));
  EXPECT_NEAR(pg[0], -2.5, 1e-14);
  EXPECT_NEAR(pg[1], -1.0, 1e-14);
  EXPECT_THROW(projected_gradient(DualObjective(d2()), point(d2(), {-1.0}, {0.0})), std::invalid_argument);
}

TEST(ProjectedGradient, VanishesAtExactOptimum) {
  std::mt19937_64 rng(15);
  for (int i = 0; i < 40; ++i) {
    const RegularizedProgram p = random_program(rng, {});
    const DualObjective obj(p);
    EXPECT_LE(projected_gradient(obj, solve_dual_exact(obj)).norm(), 1e-8);
  }
}

TEST(Gap, IdentityConstants) {
  // Q = I and M = I: ρ̄ = ρ̲ = 1, so gap = 2‖∇†d‖
  const DualObjective obj(t0());
  const DualPoint y = point(t0(), {}, {0.5, -0.25});
  EXPECT_NEAR(gap(obj, y), 2.0 * projected_gradient(obj, y).norm(), 1e-14);
  EXPECT_NEAR(gap(obj, solve_dual_exact(obj)), 0.0, 1e-14);
}

TEST(Gap, InfiniteWhenHessianSingular) {
  // D1 has two duals on one coordinate
  EXPECT_TRUE(std::isinf(gap(DualObjective(d1()), point(d1(), {0.0}, {1.0}))));
}

TEST(Gap, BoundsDistanceToOptimum) {
  std::mt19937_64 rng(16);
  InstanceShape s;
  s.n_min = 6;
  s.n_max = 12;
  s.screenable_max = 3;
  s.immutable_max = 1;
  s.selected_max = 2;
  int finite = 0;
  for (int i = 0; i < 80; ++i) {
    const RegularizedProgram p = random_program(rng, s);
    const DualObjective obj(p);
    const DualPoint ys = solve_dual_exact(obj);
    const DualPoint y = random_feasible(rng, p, 0.5);
    const double g = gap(obj, y);
    finite += std::isfinite(g);
    EXPECT_LE((y.stacked() - ys.stacked()).norm(), g + 1e-8);
    EXPECT_LE(gap(obj, ys), 1e-7);
  }
  EXPECT_GT(finite, 60);
}

TEST(ReducedUnconstrained, T0AllFree) {
  const DualObjective obj(t0());
  const FaceSolve fs = solve_reduced_unconstrained(obj, {}, {});
  EXPECT_TRUE(fs.point.g.isZero(1e-14));
  EXPECT_TRUE(obj.primal_point(fs.point).isZero(1e-14));
}

TEST(ReducedUnconstrained, D2) {
  const DualObjective obj(d2());
  const FaceSolve fs = solve_reduced_unconstrained(obj, {0}, {{0, 1.0}});
  EXPECT_NEAR(fs.point.mu[0], 1.5, 1e-12);
  EXPECT_DOUBLE_EQ(fs.point.g[0], 1.0);
}

TEST(ReducedUnconstrained, MisclassificationLeavesPositiveGap) {
  const DualObjective obj(d2());
  const FaceSolve fs = solve_reduced_unconstrained(obj, {}, {{0, 1.0}});
  const DualPoint hat = project_dual(obj, fs.point.stacked());
  EXPECT_TRUE(hat.is_feasible(1.0));
  EXPECT_DOUBLE_EQ(hat.mu[0], 0.0);
  EXPECT_GT(projected_gradient(obj, hat).norm(), 0.0);
  EXPECT_GT(gap(obj, hat), 0.0);
}

TEST(SolveDualExact, HandInstances) {
  const DualPoint z = solve_dual_exact(DualObjective(t0()));
  EXPECT_TRUE(z.stacked().isZero(1e-12));
  const DualPoint y1 = solve_dual_exact(DualObjective(d1()));
  EXPECT_NEAR(y1.mu[0], 0.0, 1e-10);
  EXPECT_NEAR(y1.g[0], 1.0, 1e-10);
  const DualPoint y2 = solve_dual_exact(DualObjective(d2()));
  EXPECT_NEAR(y2.mu[0], 1.5, 1e-10);
  EXPECT_NEAR(y2.g[0], 1.0, 1e-10);
}

TEST(SolveDualExact, StrongDualityAgainstEnumeration) {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 40; ++i) {
    const RegularizedProgram p = random_program(rng, {});
    const auto ref = enumerate_optimum(p);
    ASSERT_TRUE(ref);
    const DualObjective obj(p);
    EXPECT_NEAR(dual_value(obj, solve_dual_exact(obj)), -ref->objective, 1e-7 * (1.0 + std::abs(ref->objective)));
  }
}

TEST(FaceCertificate, OracleFaceOnD1) {
  const DualObjective obj(d1());
  DualFace face;
  face.free = {0, 0};
  face.values = vec({0.0, 1.0});
  const FaceCertificate fc = certify_face(obj, point(d1(), {0.0}, {1.0}), face);
  EXPECT_TRUE(fc.certified) << fc.reason;
  EXPECT_NEAR(fc.gap, 0.0, 1e-12);
}

TEST(FaceCertificate, WrongFaceIsRejected) {
  // D2 with μ pinned at 0: the pinned gradient points into the face's exterior
  const DualObjective obj(d2());
  DualFace face;
  face.free = {0, 0};
  face.values = vec({0.0, 1.0});
  const FaceCertificate fc = certify_face(obj, point(d2(), {0.0}, {1.0}), face);
  EXPECT_FALSE(fc.certified);
  EXPECT_FALSE(fc.reason.empty());
}
