#pragma once

/// Umbrella header for the whole library.

#include "shield/problem.hpp"
#include "shield/dual.hpp"
#include "shield/primal_solver.hpp"
#include "shield/screening.hpp"
#include "shield/predictor.hpp"
#include "shield/mpc.hpp"
#include "shield/io.hpp"
