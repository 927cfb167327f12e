#include "popmort/lp.hpp"

#include <cmath>
#include <limits>

namespace popmort::lp {

namespace {

// Entering column: most negative reduced cost (Dantzig) or first negative (Bland).
int pick_entering(const Eigen::RowVectorXd& cost, int ncols, double tol, bool bland) {
    int best = -1;
    double best_val = -tol;
    for (int j = 0; j < ncols; ++j) {
        if (cost[j] < best_val) {
            if (bland) return j;
            best_val = cost[j];
            best = j;
        }
    }
    return best;
}

} // namespace

Solution solve(const Problem& prob, int max_iterations, double tol) {
    const int m = static_cast<int>(prob.A.rows());
    const int n = static_cast<int>(prob.A.cols());
    if (prob.b.size() != m || prob.c.size() != n || static_cast<int>(prob.rel.size()) != m)
        throw ConfigError("lp: inconsistent problem dimensions");

    // Normalize rows to b >= 0 and count extra columns.
    Matrix A = prob.A;
    Vector b = prob.b;
    std::vector<Relation> rel = prob.rel;
    for (int i = 0; i < m; ++i) {
        if (b[i] < 0) {
            A.row(i) *= -1.0;
            b[i] *= -1.0;
            if (rel[i] == Relation::le) rel[i] = Relation::ge;
            else if (rel[i] == Relation::ge) rel[i] = Relation::le;
        }
    }

    int n_slack = 0, n_art = 0;
    for (int i = 0; i < m; ++i) {
        if (rel[i] != Relation::eq) ++n_slack;
        if (rel[i] != Relation::le) ++n_art;
    }
    const int total = n + n_slack + n_art;
    const int art_begin = n + n_slack;

    // Tableau: constraint rows + rhs column.
    Matrix T = Matrix::Zero(m, total + 1);
    T.block(0, 0, m, n) = A;
    T.col(total) = b;

    std::vector<int> basis(m, -1);
    {
        int s = n, a = art_begin;
        for (int i = 0; i < m; ++i) {
            if (rel[i] == Relation::le) {
                T(i, s) = 1.0;
                basis[i] = s++;
            } else if (rel[i] == Relation::ge) {
                T(i, s) = -1.0;
                ++s;
                T(i, a) = 1.0;
                basis[i] = a++;
            } else {
                T(i, a) = 1.0;
                basis[i] = a++;
            }
        }
    }

    if (max_iterations <= 0) max_iterations = 200 * (m + total);

    Solution sol;
    Eigen::RowVectorXd cost(total + 1);

    auto rebuild_cost = [&](bool phase1) {
        cost.setZero();
        if (phase1) {
            // minimize sum of artificials: subtract artificial-basic rows.
            for (int i = 0; i < m; ++i)
                if (basis[i] >= art_begin) cost -= T.row(i);
            for (int j = art_begin; j < total; ++j) cost[j] += 1.0;
        } else {
            for (int j = 0; j < n; ++j) cost[j] = prob.c[j];
            for (int i = 0; i < m; ++i) {
                const int bj = basis[i];
                if (bj < n && prob.c[bj] != 0.0) cost -= prob.c[bj] * T.row(i);
            }
        }
    };

    auto pivot = [&](int row, int col) {
        T.row(row) /= T(row, col);
        for (int i = 0; i < m; ++i) {
            if (i == row) continue;
            const double f = T(i, col);
            if (f != 0.0) T.row(i) -= f * T.row(row);
        }
        const double fc = cost[col];
        if (fc != 0.0) cost -= fc * T.row(row);
        basis[row] = col;
    };

    auto run_phase = [&](bool phase1) -> bool {
        const int limit_cols = phase1 ? total : art_begin;
        int stall = 0;
        double last_obj = std::numeric_limits<double>::infinity();
        for (;;) {
            if (sol.iterations++ > max_iterations) return false;
            const bool bland = stall > 2 * (m + 4);
            const int enter = pick_entering(cost, limit_cols, tol, bland);
            if (enter < 0) return true;
            // Ratio test.
            int leave = -1;
            double best_ratio = std::numeric_limits<double>::infinity();
            for (int i = 0; i < m; ++i) {
                const double a = T(i, enter);
                if (a > tol) {
                    const double r = T(i, total) / a;
                    if (r < best_ratio - 1e-12 ||
                        (r < best_ratio + 1e-12 && (leave < 0 || basis[i] < basis[leave]))) {
                        best_ratio = r;
                        leave = i;
                    }
                }
            }
            if (leave < 0) return false; // unbounded
            pivot(leave, enter);
            const double obj = -cost[total];
            if (obj < last_obj - 1e-12) { last_obj = obj; stall = 0; }
            else ++stall;
        }
    };

    if (n_art > 0) {
        rebuild_cost(true);
        if (!run_phase(true) || -cost[total] > 1e-7) {
            sol.feasible = false;
            return sol;
        }
        // Drive remaining artificials out of the basis.
        for (int i = 0; i < m; ++i) {
            if (basis[i] < art_begin) continue;
            int col = -1;
            for (int j = 0; j < art_begin; ++j) {
                if (std::abs(T(i, j)) > tol) { col = j; break; }
            }
            if (col >= 0) pivot(i, col);
            // else: redundant row, leave the artificial basic at zero.
        }
    }

    rebuild_cost(false);
    if (!run_phase(false)) {
        sol.optimal = false;
        sol.feasible = true;
        return sol;
    }

    sol.x = Vector::Zero(n);
    for (int i = 0; i < m; ++i)
        if (basis[i] < n) sol.x[basis[i]] = T(i, total);
    sol.objective = prob.c.dot(sol.x);
    sol.optimal = true;
    return sol;
}

} // namespace popmort::lp
