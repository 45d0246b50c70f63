#include "shield/shield.hpp"
#include "support/instances.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>

using namespace shield;
using namespace shield::testing;

TEST(Validate, IdentityProgramIsAdmissible) {
  const RegularizedProgram p(Matrix::Identity(2, 2), Vector::Zero(2),
                             ConstraintBlock(vec({1.0, 0.0}).transpose(), vec({1.0})), ConstraintBlock::empty(2),
                             EqualityBlock::empty(2), {0}, 1.0, 0.5, 0.1);
  EXPECT_TRUE(validate(p).ok()) << validate(p).str();
}

TEST(Validate, IndefiniteQ) {
  Matrix Q = Matrix::Identity(2, 2);
  Q(1, 1) = -1.0;
  const RegularizedProgram p(Q, Vector::Zero(2), ConstraintBlock::empty(2), ConstraintBlock::empty(2),
                             EqualityBlock::empty(2), {}, 0.0, 0.5, 0.1);
  EXPECT_TRUE(validate(p).mentions("not positive definite"));
  EXPECT_THROW(require_valid(p), std::invalid_argument);
}

TEST(Validate, ZeroScreenableRow) {
  const RegularizedProgram p(Matrix::Identity(2, 2), Vector::Zero(2),
                             ConstraintBlock(Matrix::Zero(1, 2), vec({1.0})), ConstraintBlock::empty(2),
                             EqualityBlock::empty(2), {}, 0.0, 0.5, 0.1);
  EXPECT_TRUE(validate(p).mentions("zero Lipschitz constant"));
}

TEST(Validate, OtherViolations) {
  Matrix Q = Matrix::Identity(2, 2);
  Q(0, 1) = 0.5;
  RegularizedProgram p(Q, Vector::Zero(2), ConstraintBlock::empty(2), ConstraintBlock::empty(2),
                       EqualityBlock::empty(2), {0, 0}, 1.0, 0.0, 0.1);
  const auto r = validate(p);
  EXPECT_TRUE(r.mentions("not symmetric"));
  EXPECT_TRUE(r.mentions("zeta must be positive"));
  EXPECT_FALSE(r.ok());
  ConstraintBlock blk(Matrix::Ones(1, 2), vec({1.0}));
  blk.lipschitz[0] = 3.0;
  p = RegularizedProgram(Matrix::Identity(2, 2), Vector::Zero(2), blk, ConstraintBlock::empty(2),
                         EqualityBlock::empty(2), {}, 0.0, 0.5, 0.1);
  EXPECT_TRUE(validate(p).mentions("does not match the row norm"));
}

TEST(Lipschitz, RowNorms) {
  Matrix A(2, 2);
  A << 3, 4, 0, -2;
  const ConstraintBlock b(A, vec({1, 1}));
  EXPECT_DOUBLE_EQ(b.lipschitz[0], 5.0);
  EXPECT_DOUBLE_EQ(b.lipschitz[1], 2.0);
}

TEST(EpsilonCrit, HandValues) {
  EXPECT_DOUBLE_EQ(epsilon_crit(d1()), 0.125);
  const RegularizedProgram p(4.0 * Matrix::Identity(2, 2), Vector::Zero(2),
                             ConstraintBlock(vec({2.0, 0.0}).transpose(), vec({1.0})), ConstraintBlock::empty(2),
                             EqualityBlock::empty(2), {}, 0.0, 1.0, 0.1);
  EXPECT_DOUBLE_EQ(epsilon_crit(p), 0.5);
  EXPECT_DOUBLE_EQ(epsilon_crit(p.with_parameters(0.0, 0.5, 0.1)), 0.125);
  EXPECT_TRUE(std::isinf(epsilon_crit(t0())));
}

TEST(EpsilonCrit, MonotoneInZetaOnRandomPrograms) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 50; ++i) {
    const RegularizedProgram p = random_program(rng, {});
    if (p.num_screenable() == 0) continue;
    const double a = epsilon_crit(p.with_parameters(p.lambda(), 0.25, p.epsilon()));
    const double b = epsilon_crit(p.with_parameters(p.lambda(), 0.5, p.epsilon()));
    EXPECT_NEAR(b, 4.0 * a, 1e-12 * b);
  }
}

TEST(Tighten, HandValues) {
  EXPECT_DOUBLE_EQ(tighten(d1()).screenable().b[0], 4.5);
  EXPECT_DOUBLE_EQ(tighten(d2()).screenable().b[0], 0.5);
  EXPECT_EQ(tighten(t0()).num_screenable(), 0);
  EXPECT_TRUE(tighten(t0()).Q().isApprox(t0().Q()));
}

TEST(Tighten, Composes) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 20; ++i) {
    const RegularizedProgram p = random_program(rng, {});
    const Vector twice = tighten(tighten(p, 0.2), 0.3).screenable().b;
    const Vector once = tighten(p, 0.5).screenable().b;
    EXPECT_TRUE(twice.isApprox(once) || twice.size() == 0);
  }
}

TEST(Epigraph, Shape) {
  const RegularizedProgram p = d2();
  const EpigraphProgram e = epigraph(p);
  EXPECT_EQ(e.G.rows(), 1 + 3);
  EXPECT_EQ(e.G.cols(), 2);
  EXPECT_DOUBLE_EQ(e.h[0], 0.5);
  EXPECT_DOUBLE_EQ(e.q[1], 1.0);
  EXPECT_EQ(e.epi_row_offset, 1);
}

// The epigraph objective at s = |Sθ| is the regularized objective, and the
// enumeration optimum makes the epigraph rows hold with s = |Sθ|.
TEST(Epigraph, MatchesRegularizedFormOnRandomPrograms) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 40; ++i) {
    const RegularizedProgram p = random_program(rng, {});
    const auto ref = enumerate_optimum(p);
    ASSERT_TRUE(ref);
    const EpigraphProgram e = epigraph(p);
    const Vector s = p.select(ref->theta).cwiseAbs();
    EXPECT_NEAR(e.objective(ref->theta, s), ref->objective, 1e-10);
    Vector z(p.n() + p.num_selected());
    z.head(p.n()) = ref->theta;
    z.tail(p.num_selected()) = s;
    ASSERT_EQ(e.G.cols(), z.size());
    if (e.G.rows() > 0) {
      EXPECT_LE((e.G * z - e.h).maxCoeff(), 1e-8);
    }
    const Solution sol = solve(p);
    ASSERT_TRUE(sol.optimal());
    if (p.num_selected() > 0) {
      EXPECT_NEAR((sol.s - p.select(sol.theta).cwiseAbs()).cwiseAbs().maxCoeff(), 0.0, 1e-8);
    }
    EXPECT_LE((sol.theta - ref->theta).norm(), 1e-6);
  }
}
