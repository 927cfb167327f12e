#pragma once

#include "popmort/types.hpp"

namespace popmort::lp {

enum class Relation { le, eq, ge };

/// minimize c.x  subject to  A x (<=|=|>=) b,  x >= 0
struct Problem {
    Matrix A;
    Vector b;
    Vector c;
    std::vector<Relation> rel;
};

struct Solution {
    Vector x;
    double objective = 0.0;
    bool optimal = false;
    bool feasible = true;
    int iterations = 0;
};

/// Two-phase dense tableau simplex. Dantzig pricing with a Bland fallback
/// after stalls, so it terminates on degenerate problems.
Solution solve(const Problem& prob, int max_iterations = 0, double tol = 1e-9);

} // namespace popmort::lp
