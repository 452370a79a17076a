/// @file eigenpairs.hpp
/// @brief Principal eigenpairs of (-Lap_h + diag(d)) phi = value * diag(c) phi
///        by shifted inverse power iteration, plus the named spectral
///        quantities built on top of it.
///
/// The shift sigma = 1 + max(0, -min diag) makes A + sigma*diag(c) positive
/// definite in the regimes of interest; definiteness is verified by the
/// LDL^T factorization and a failure raises rather than returning a
/// non-principal pair. The iteration matrix (A + sigma C)^-1 C is inverse
/// positive (M-matrix), so starting from a positive vector converges to the
/// Perron-positive eigenfunction.

#pragma once

#include <cmath>
#include <string>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "qge/errors.hpp"
#include "qge/grid.hpp"
#include "qge/operators.hpp"
#include "qge/problem.hpp"

namespace qge {

/// Principal eigenpair: smallest eigenvalue, positive eigenfunction with
/// sup-norm 1, and the achieved residual ||A phi - value*C phi||_inf.
struct EigenPair {
    double value = 0.0;
    GridFunction func;
    double residual = 0.0;
    int iterations = 0;
};

struct EigenOptions {
    double tol = 1e-12;            ///< relative Rayleigh-quotient stagnation threshold
    double residual_target = 1e-8; ///< absolute eigen-residual required on top of stagnation
    int max_iter = 50000;
};

/// Principal eigenpair of (-Lap_h + diag(d)) phi = value * diag(c) phi.
/// Requires c >= 0 with c not identically zero.
inline EigenPair principal_eigen(const Grid& grid, const GridFunction& d, const GridFunction& c,
                                 const EigenOptions& opts = {}) {
    if (d.grid() != grid || c.grid() != grid) throw shape_error("principal_eigen: coefficient grids do not match");
    if (c.min_val() < 0.0) throw validation_error("principal_eigen: weight c must be nonnegative");
    if (c.max_val() <= 0.0) throw validation_error("principal_eigen: weight c must be positive somewhere");

    const DiscreteOperator op = build_operator(grid, d);
    const Eigen::Index size = grid.size();

    // Gershgorin lower bound on the spectrum of A: min over rows of
    // (diagonal - sum of |off-diagonal|). Shifting past it keeps A + sigma*C
    // positive definite for strictly positive weights even when the potential
    // d is strongly negative.
    double gersh_low = std::numeric_limits<double>::infinity();
    for (int col = 0; col < op.matrix.outerSize(); ++col) {
        double diag = 0.0, off = 0.0;
        for (Eigen::SparseMatrix<double>::InnerIterator it(op.matrix, col); it; ++it) {
            if (it.row() == it.col())
                diag = it.value();
            else
                off += std::abs(it.value());
        }
        gersh_low = std::min(gersh_low, diag - off);
    }
    const double sigma = 1.0 + std::max(0.0, -gersh_low);

    Eigen::SparseMatrix<double> shifted = op.matrix;
    for (Eigen::Index k = 0; k < size; ++k) shifted.coeffRef(k, k) += sigma * c[k];
    shifted.makeCompressed();

    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(shifted);
    if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= 0.0)
        throw definiteness_error("principal_eigen: shifted operator (shift " + format_double(sigma) +
                                 ") is not positive definite; principal pair unavailable");

    Eigen::VectorXd phi = Eigen::VectorXd::Ones(size);
    phi /= phi.cwiseAbs().maxCoeff();
    const Eigen::VectorXd cvec = c.values();

    double rq_prev = std::numeric_limits<double>::infinity();
    double rq = rq_prev;
    double res = std::numeric_limits<double>::infinity();
    bool converged = false;
    int it = 0;
    for (; it < opts.max_iter; ++it) {
        Eigen::VectorXd y = ldlt.solve(cvec.cwiseProduct(phi));
        const double ynorm = y.cwiseAbs().maxCoeff();
        if (!(ynorm > 0.0) || !std::isfinite(ynorm))
            throw iteration_error("principal_eigen: iteration vector degenerated");
        phi = y / ynorm;
        const Eigen::VectorXd Aphi = op.matrix * phi;
        const double denom = phi.dot(cvec.cwiseProduct(phi));
        if (!(denom > 0.0)) throw iteration_error("principal_eigen: Rayleigh quotient weight collapsed");
        rq = phi.dot(Aphi) / denom;
        res = (Aphi - rq * cvec.cwiseProduct(phi)).cwiseAbs().maxCoeff();
        if (std::abs(rq - rq_prev) <= opts.tol * std::max(1.0, std::abs(rq)) && res <= opts.residual_target) {
            converged = true;
            ++it;
            break;
        }
        rq_prev = rq;
    }
    if (!converged)
        throw iteration_error("principal_eigen: no convergence within " + std::to_string(opts.max_iter) +
                              " iterations (last residual " + format_double(res) + ")");

    // Perron positivity: the converged iterate must be strictly positive.
    if (phi.maxCoeff() <= 0.0) phi = -phi;
    if (phi.minCoeff() <= 0.0)
        throw iteration_error("principal_eigen: converged iterate is not positive (min " +
                              format_double(phi.minCoeff()) + "); no Perron-positive convergence");
    phi /= phi.maxCoeff();

    GridFunction func(grid, phi);
    const double residual = (op.matrix * phi - rq * cvec.cwiseProduct(phi)).cwiseAbs().maxCoeff();
    return EigenPair{rq, std::move(func), residual, it};
}

/// gamma1: principal eigenvalue of -Lap phi = value * c phi.
inline EigenPair gamma1(const ProblemSpec& p, const EigenOptions& opts = {}) {
    return principal_eigen(p.grid(), GridFunction(p.grid(), 0.0), p.c(), opts);
}

/// nu1: principal eigenvalue of -Lap u + mu2 * htilde^- u = value * c u,
/// for a caller-supplied negative part htilde^- >= 0.
inline EigenPair nu1(const ProblemSpec& p, const GridFunction& h_tilde_minus, const EigenOptions& opts = {}) {
    if (h_tilde_minus.min_val() < 0.0)
        throw validation_error("nu1: htilde^- must be nonnegative (it is a negative part)");
    return principal_eigen(p.grid(), p.mu2() * h_tilde_minus, p.c(), opts);
}

/// nu_tilde1: principal eigenvalue of -Lap u + mu1 * h^- u = value * c u,
/// using the problem's own h.
inline EigenPair nu_tilde1(const ProblemSpec& p, const EigenOptions& opts = {}) {
    return principal_eigen(p.grid(), p.mu1() * p.h_minus(), p.c(), opts);
}

/// xi1: principal eigenvalue of -Lap w - mu*h w = value * c w for an
/// explicit constant mu.
inline EigenPair xi1(const ProblemSpec& p, double mu_const, const EigenOptions& opts = {}) {
    if (!(mu_const > 0.0)) throw validation_error("xi1: mu must be positive");
    return principal_eigen(p.grid(), (-mu_const) * p.h(), p.c(), opts);
}

/// xi1 using the problem's own constant mu.
inline EigenPair xi1(const ProblemSpec& p, const EigenOptions& opts = {}) {
    return xi1(p, p.mu_value(), opts);
}

/// Coercivity margin: smallest (unweighted) eigenvalue of
/// -Lap - mu2 * diag(h^+). Positive margin certifies coercivity.
struct CoercivityReport {
    bool ok = false;
    double margin = 0.0;
};

inline CoercivityReport coercivity_check(const ProblemSpec& p, const EigenOptions& opts = {}) {
    try {
        const EigenPair pair =
            principal_eigen(p.grid(), (-p.mu2()) * p.h_plus(), GridFunction(p.grid(), 1.0), opts);
        return CoercivityReport{pair.value > 0.0, pair.value};
    } catch (const definiteness_error&) {
        // Shifted operator indefinite: the smallest eigenvalue is far below
        // zero, which certainly fails the coercivity test.
        return CoercivityReport{false, -std::numeric_limits<double>::infinity()};
    }
}

} // namespace qge
