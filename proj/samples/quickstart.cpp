// Builds a small lasso-style program with one screenable row, runs a
// screening step with an empty prediction and compares against a full solve.
//
//   shield_quickstart [program.json]

#include "shield/shield.hpp"

#include <iostream>

int main(int argc, char** argv) {
  using namespace shield;

  RegularizedProgram p;
  if (argc > 1) {
    p = io::load_program(argv[1]);
  } else {
    Matrix Q(3, 3);
    Q << 2, 0.5, 0,
         0.5, 1, 0,
         0, 0, 1;
    Vector c(3);
    c << -4, 1, -0.2;
    Matrix A(2, 3);
    A << 1, 1, 0,
         0, -1, 1;
    Vector b(2);
    b << 10, 8;
    p = RegularizedProgram(Q, c, ConstraintBlock(A, b), ConstraintBlock::empty(3), EqualityBlock::empty(3),
                           {1, 2}, 0.5, 0.5, 0.01);
  }
  require_valid(p);

  const Solution full = solve(p);
  ShieldOptions opt;
  opt.certificate_only = true;
  opt.refinement_rounds = 10;
  const ShieldResult r = shield_step(p, DualClass::constant(p.num_screenable(), p.num_selected(), 0), opt);

  std::cout << "eps_crit      " << io::format_number(epsilon_crit(p)) << '\n';
  std::cout << "gap           " << io::format_number(r.sets.gap_used) << '\n';
  std::cout << "screened rows " << r.sets.K.size() << " of " << p.num_screenable() << '\n';
  std::cout << "screened vars " << r.sets.I.size() << " of " << p.num_selected() << '\n';
  std::cout << "full obj      " << io::format_number(full.objective) << '\n';
  std::cout << "reduced obj   " << io::format_number(r.solution.objective) << '\n';
  std::cout << "theta         " << r.solution.theta.transpose() << '\n';
  return r.solution.optimal() ? 0 : 2;
}
