/// @file operators.hpp
/// @brief Sparse discrete operators -Lap_h + diag(d) and direct linear solves.
///
/// 3-point (1D) / 5-point (2D) stencils on uniform Dirichlet grids. Solves
/// use a sparse direct LU factorization and always verify the residual.

#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <Eigen/SparseCholesky>

#include "qge/errors.hpp"
#include "qge/grid.hpp"

namespace qge {

/// Sparse matrix for -Lap_h + diag(d) over interior nodes.
struct DiscreteOperator {
    Grid grid;
    Eigen::SparseMatrix<double> matrix;
    bool symmetric = true;
};

/// Assemble -Lap_h + diag(d): off-diagonal -1/h^2 per neighbor (per axis),
/// diagonal 2/hx^2 (+ 2/hy^2 in 2D) + d_i. Missing neighbors are the zero
/// Dirichlet boundary, so they simply drop out of the row.
inline DiscreteOperator build_operator(const Grid& grid, const GridFunction& d) {
    if (d.grid() != grid) throw shape_error("build_operator: potential lives on a different grid");
    const int n = grid.n();
    const Eigen::Index size = grid.size();
    std::vector<Eigen::Triplet<double>> trip;
    if (grid.dim() == 1) {
        const double ih2 = 1.0 / (grid.hx() * grid.hx());
        trip.reserve(3 * size);
        for (int i = 0; i < n; ++i) {
            trip.emplace_back(i, i, 2.0 * ih2 + d[i]);
            if (i > 0) trip.emplace_back(i, i - 1, -ih2);
            if (i < n - 1) trip.emplace_back(i, i + 1, -ih2);
        }
    } else {
        const double ihx2 = 1.0 / (grid.hx() * grid.hx());
        const double ihy2 = 1.0 / (grid.hy() * grid.hy());
        trip.reserve(5 * size);
        for (int iy = 0; iy < n; ++iy) {
            for (int ix = 0; ix < n; ++ix) {
                const Eigen::Index k = Eigen::Index(iy) * n + ix;
                trip.emplace_back(k, k, 2.0 * ihx2 + 2.0 * ihy2 + d[k]);
                if (ix > 0) trip.emplace_back(k, k - 1, -ihx2);
                if (ix < n - 1) trip.emplace_back(k, k + 1, -ihx2);
                if (iy > 0) trip.emplace_back(k, k - n, -ihy2);
                if (iy < n - 1) trip.emplace_back(k, k + n, -ihy2);
            }
        }
    }
    Eigen::SparseMatrix<double> A(size, size);
    A.setFromTriplets(trip.begin(), trip.end());
    A.makeCompressed();
    return DiscreteOperator{grid, std::move(A), true};
}

inline DiscreteOperator build_operator(const Grid& grid, double d) {
    return build_operator(grid, GridFunction(grid, d));
}

/// Plain negative discrete Laplacian.
inline DiscreteOperator laplacian(const Grid& grid) { return build_operator(grid, 0.0); }

inline GridFunction apply(const DiscreteOperator& op, const GridFunction& u) {
    if (u.grid() != op.grid) throw shape_error("apply: operand lives on a different grid");
    return GridFunction(op.grid, op.matrix * u.values());
}

inline double matrix_inf_norm(const Eigen::SparseMatrix<double>& A) {
    Eigen::VectorXd rowsum = Eigen::VectorXd::Zero(A.rows());
    for (int k = 0; k < A.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(A, k); it; ++it) rowsum[it.row()] += std::abs(it.value());
    return rowsum.size() ? rowsum.maxCoeff() : 0.0;
}

/// Cheap infinity-norm condition estimate from a handful of solves with
/// sign-pattern probes (deterministic seed: used only in error messages).
inline double condest_inf(const Eigen::SparseLU<Eigen::SparseMatrix<double>>& lu,
                          const Eigen::SparseMatrix<double>& A) {
    std::mt19937_64 rng(12345);
    std::uniform_int_distribution<int> coin(0, 1);
    double inv_norm = 0.0;
    for (int probe = 0; probe < 4; ++probe) {
        Eigen::VectorXd e(A.rows());
        for (Eigen::Index i = 0; i < e.size(); ++i) e[i] = coin(rng) ? 1.0 : -1.0;
        Eigen::VectorXd x = lu.solve(e);
        if (lu.info() == Eigen::Success) inv_norm = std::max(inv_norm, x.cwiseAbs().maxCoeff());
    }
    return matrix_inf_norm(A) * inv_norm;
}

/// Smallest pivot magnitude of an LDL^T probe (symmetric matrices only);
/// returns NaN when the factorization itself breaks down.
inline double smallest_pivot_probe(const Eigen::SparseMatrix<double>& A) {
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(A);
    if (ldlt.info() != Eigen::Success) return std::numeric_limits<double>::quiet_NaN();
    return ldlt.vectorD().cwiseAbs().minCoeff();
}

/// Direct sparse LU solve of A x = b. With the default gate the residual
/// ||A x - b||_inf <= gate * max(||b||_inf, 1) is verified; pass an infinite
/// gate for systems that are legitimately ill-conditioned (Newton steps near
/// folds), where only finiteness is enforced.
inline Eigen::VectorXd solve_sparse(const Eigen::SparseMatrix<double>& A, const Eigen::VectorXd& b,
                                    bool symmetric_hint = false, const char* who = "solve_sparse",
                                    double residual_gate = 1e-10) {
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(A);
    if (lu.info() != Eigen::Success) {
        std::string msg = std::string(who) + ": sparse LU factorization failed (matrix singular or structurally deficient)";
        if (symmetric_hint) {
            const double piv = smallest_pivot_probe(A);
            if (std::isfinite(piv)) msg += "; smallest pivot magnitude " + format_double(piv);
        }
        throw singular_operator_error(msg);
    }
    Eigen::VectorXd x = lu.solve(b);
    if (lu.info() != Eigen::Success) throw singular_operator_error(std::string(who) + ": sparse LU back-substitution failed");
    if (!x.allFinite())
        throw singular_operator_error(std::string(who) + ": solution is not finite (condition estimate " +
                                      format_double(condest_inf(lu, A)) + ")");
    if (std::isfinite(residual_gate)) {
        const double scale = std::max(1.0, b.size() ? b.cwiseAbs().maxCoeff() : 0.0);
        const double res = b.size() ? (A * x - b).cwiseAbs().maxCoeff() : 0.0;
        if (!(res <= residual_gate * scale)) {
            std::string msg = std::string(who) + ": solve residual " + format_double(res) + " exceeds " +
                              format_double(residual_gate) + " * " + format_double(scale) + " (condition estimate " +
                              format_double(condest_inf(lu, A));
            if (symmetric_hint) {
                const double piv = smallest_pivot_probe(A);
                if (std::isfinite(piv)) msg += ", smallest pivot magnitude " + format_double(piv);
            }
            msg += ")";
            throw singular_operator_error(msg);
        }
    }
    return x;
}

/// Solve op * u = rhs.
inline GridFunction linear_solve(const DiscreteOperator& op, const GridFunction& rhs) {
    if (rhs.grid() != op.grid) throw shape_error("linear_solve: rhs lives on a different grid");
    return GridFunction(op.grid, solve_sparse(op.matrix, rhs.values(), op.symmetric, "linear_solve"));
}

} // namespace qge
