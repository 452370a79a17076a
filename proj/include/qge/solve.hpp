/// @file solve.hpp
/// @brief Nonlinear solvers and solution certificates for
///        -Lap u = lambda*c*u + mu(x)*|grad u|^2 + h(x), u|bdry = 0.
///
/// Two formulations: damped Newton directly on the gradient-quadratic
/// residual (any mu), and Newton / monotone iteration on the exponentially
/// transformed semilinear equation (constant mu). Lower/upper solutions are
/// constructed from linear problems and checked by nodewise discrete
/// inequality certificates.

#pragma once

#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "qge/eigenpairs.hpp"
#include "qge/errors.hpp"
#include "qge/grid.hpp"
#include "qge/operators.hpp"
#include "qge/problem.hpp"
#include "qge/transform.hpp"

namespace qge {

enum class Formulation { direct, transformed };

inline const char* to_string(Formulation f) { return f == Formulation::direct ? "direct" : "transformed"; }

struct SolveOptions {
    double tol = 1e-10;         ///< residual sup-norm target
    int max_iter = 200;         ///< Newton iterations (monotone iteration has its own cap)
    int max_halvings = 40;      ///< Armijo backtracking depth, factor 0.5
    double armijo_c = 1e-4;     ///< sufficient-decrease constant
    double guard_eps = 1e-12;   ///< transformed iterates stay above -1 + guard_eps
    double blowup_guard = 1e12; ///< iterate sup-norm abort threshold
    long max_monotone_iter = 100000;
};

/// Outcome of a nonlinear solve. `solution` is always in the original
/// variable u; for non-converged runs it is the best (smallest-residual)
/// iterate seen, which diagnostic identities are evaluated on.
struct SolveReport {
    GridFunction solution;
    double residual_inf = std::numeric_limits<double>::infinity();
    int iterations = 0;
    bool converged = false;
    Formulation formulation = Formulation::direct;
};

/// Nodewise inequality certificate for lower/upper solution candidates.
struct Certificate {
    bool holds = false;
    double max_violation = 0.0; ///< worst signed gap (positive = violated)
    Eigen::Index worst_node = 0;
    double tol = 0.0;
};

/// Common magnitude scale for certificate tolerances.
inline double data_scale(const ProblemSpec& p, double lambda, const GridFunction& cand) {
    return 1.0 + p.h().sup_norm() + std::abs(lambda) * p.c().sup_norm() + cand.sup_norm();
}

namespace detail {

/// Largest jump of u between adjacent nodes, counting the zero boundary as
/// a neighbor.
inline double max_cell_jump(const GridFunction& u) {
    const Grid& g = u.grid();
    const int n = g.n();
    double best = 0.0;
    const auto upd = [&best](double a, double b) { best = std::max(best, std::abs(a - b)); };
    if (g.dim() == 1) {
        upd(u[0], 0.0);
        upd(u[n - 1], 0.0);
        for (int j = 0; j + 1 < n; ++j) upd(u[j], u[j + 1]);
    } else {
        for (int j = 0; j < n; ++j) {
            for (int i = 0; i < n; ++i) {
                const Eigen::Index k = Eigen::Index(j) * n + i;
                if (i == 0) upd(u[k], 0.0);
                upd(u[k], i + 1 < n ? u[k + 1] : 0.0);
                if (j == 0) upd(u[k], 0.0);
                upd(u[k], j + 1 < n ? u[k + Eigen::Index(n)] : 0.0);
            }
        }
    }
    return best;
}

/// A discrete solution is resolved when no single-cell jump carries a large
/// share of its amplitude. The centered difference of |grad u|^2 admits
/// spurious boundary-layer solutions at EVERY spacing — a one-cell jump J
/// with J/h^2 = mu*(J/(2h))^2, i.e. J = 4/mu — and steep-ramp composites
/// riding on such layers; all of them put >= half the amplitude into one
/// cell, while genuine profiles have jumps O(h * |u'|). The threshold
/// relaxes on very coarse grids, where even the fundamental mode has
/// per-cell jumps ~ pi/(n+1) of its amplitude.
inline bool resolved_profile(const GridFunction& u) {
    const double pi = 3.14159265358979323846;
    const double ratio = std::max(0.35, std::min(0.75, 3.0 * pi / (u.grid().n() + 1)));
    return max_cell_jump(u) <= ratio * u.sup_norm() + 1e-12;
}

} // namespace detail

/// Residual F(u) = -Lap_h u - lambda*c*u - mu*|grad u|^2_h - h.
inline GridFunction residual_direct(const ProblemSpec& p, double lambda, const GridFunction& u) {
    if (u.grid() != p.grid()) throw shape_error("residual_direct: iterate lives on a different grid");
    const DiscreteOperator A0 = laplacian(p.grid());
    const GridFunction mu = p.mu_field();
    GridFunction r(p.grid(), Eigen::VectorXd(A0.matrix * u.values()));
    const GridFunction gsq = gradient_sq(u);
    for (Eigen::Index k = 0; k < r.size(); ++k)
        r[k] -= lambda * p.c()[k] * u[k] + mu[k] * gsq[k] + p.h()[k];
    return r;
}

/// Jacobian of the direct residual at u:
/// -Lap_h - lambda*diag(c) - 2*diag(mu)*(grad_h u . grad_h).
inline Eigen::SparseMatrix<double> jacobian_direct(const ProblemSpec& p, double lambda, const GridFunction& u) {
    if (u.grid() != p.grid()) throw shape_error("jacobian_direct: iterate lives on a different grid");
    const Grid& g = p.grid();
    const GridFunction mu = p.mu_field();
    const int n = g.n();
    std::vector<Eigen::Triplet<double>> trip;
    if (g.dim() == 1) {
        const double ih2 = 1.0 / (g.hx() * g.hx());
        const double inv2h = 1.0 / (2.0 * g.hx());
        trip.reserve(3 * g.size());
        for (int i = 0; i < n; ++i) {
            const double left = i > 0 ? u[i - 1] : 0.0;
            const double right = i < n - 1 ? u[i + 1] : 0.0;
            const double gi = (right - left) * inv2h;
            trip.emplace_back(i, i, 2.0 * ih2 - lambda * p.c()[i]);
            if (i > 0) trip.emplace_back(i, i - 1, -ih2 + mu[i] * gi / g.hx());
            if (i < n - 1) trip.emplace_back(i, i + 1, -ih2 - mu[i] * gi / g.hx());
        }
    } else {
        const double ihx2 = 1.0 / (g.hx() * g.hx());
        const double ihy2 = 1.0 / (g.hy() * g.hy());
        trip.reserve(5 * g.size());
        for (int iy = 0; iy < n; ++iy) {
            for (int ix = 0; ix < n; ++ix) {
                const Eigen::Index k = Eigen::Index(iy) * n + ix;
                const double xl = ix > 0 ? u[k - 1] : 0.0;
                const double xr = ix < n - 1 ? u[k + 1] : 0.0;
                const double yl = iy > 0 ? u[k - n] : 0.0;
                const double yr = iy < n - 1 ? u[k + n] : 0.0;
                const double gx = (xr - xl) / (2.0 * g.hx());
                const double gy = (yr - yl) / (2.0 * g.hy());
                trip.emplace_back(k, k, 2.0 * ihx2 + 2.0 * ihy2 - lambda * p.c()[k]);
                if (ix > 0) trip.emplace_back(k, k - 1, -ihx2 + mu[k] * gx / g.hx());
                if (ix < n - 1) trip.emplace_back(k, k + 1, -ihx2 - mu[k] * gx / g.hx());
                if (iy > 0) trip.emplace_back(k, k - n, -ihy2 + mu[k] * gy / g.hy());
                if (iy < n - 1) trip.emplace_back(k, k + n, -ihy2 - mu[k] * gy / g.hy());
            }
        }
    }
    Eigen::SparseMatrix<double> J(g.size(), g.size());
    J.setFromTriplets(trip.begin(), trip.end());
    J.makeCompressed();
    return J;
}

/// Damped Newton on the direct residual. Non-convergence (iteration cap,
/// stalled line search, blow-up guard) yields converged=false with the best
/// iterate; a singular Jacobian raises singular_operator_error.
inline SolveReport newton_direct(const ProblemSpec& p, double lambda, const GridFunction& u0,
                                 const SolveOptions& opts = {}) {
    if (u0.grid() != p.grid()) throw shape_error("newton_direct: start lives on a different grid");
    GridFunction u = u0;
    GridFunction best = u0;
    double best_res = std::numeric_limits<double>::infinity();
    int it = 0;
    for (; it < opts.max_iter; ++it) {
        const GridFunction r = residual_direct(p, lambda, u);
        const double rn = r.sup_norm();
        if (std::isfinite(rn) && rn < best_res) {
            best_res = rn;
            best = u;
        }
        if (rn <= opts.tol) return SolveReport{u, rn, it, true, Formulation::direct};
        if (!std::isfinite(rn) || u.sup_norm() > opts.blowup_guard) break;
        const Eigen::SparseMatrix<double> J = jacobian_direct(p, lambda, u);
        const Eigen::VectorXd delta = solve_sparse(J, -r.values(), false, "newton_direct",
                                                   std::numeric_limits<double>::infinity());
        // Armijo backtracking on the residual sup-norm; scanning from the
        // full step down means the longest acceptable step always wins.
        double t = 1.0;
        bool accepted = false;
        for (int halving = 0; halving <= opts.max_halvings; ++halving) {
            GridFunction trial(p.grid(), Eigen::VectorXd(u.values() + t * delta));
            const double rn_trial = residual_direct(p, lambda, trial).sup_norm();
            if (std::isfinite(rn_trial) && rn_trial <= (1.0 - opts.armijo_c * t) * rn) {
                u = std::move(trial);
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) break;
    }
    // Re-measure in case the loop exited right at a solution.
    const double final_res = residual_direct(p, lambda, u).sup_norm();
    if (std::isfinite(final_res) && final_res < best_res) {
        best_res = final_res;
        best = u;
    }
    return SolveReport{best, best_res, it, best_res <= opts.tol, Formulation::direct};
}

/// Residual of the transformed equation R(v) = -Lap_h v - f(v) with
/// f(v) = lambda*c*(1+v)ln(1+v) + mu*h*v + mu*h (constant mu).
inline GridFunction residual_transformed(const ProblemSpec& p, double lambda, const GridFunction& v) {
    if (v.grid() != p.grid()) throw shape_error("residual_transformed: iterate lives on a different grid");
    const double mu = p.mu_value();
    const SemilinearRhs rhs = semilinear_eval(p.c(), p.h(), mu, lambda, v);
    const DiscreteOperator A0 = laplacian(p.grid());
    return GridFunction(p.grid(), Eigen::VectorXd(A0.matrix * v.values() - rhs.f.values()));
}

/// Damped Newton on the transformed residual, keeping every iterate in the
/// admissible region v > -1 + guard_eps. Returns the pulled-back u.
inline SolveReport newton_transformed(const ProblemSpec& p, double lambda, const GridFunction& v0,
                                      const SolveOptions& opts = {}) {
    if (v0.grid() != p.grid()) throw shape_error("newton_transformed: start lives on a different grid");
    const double mu = p.mu_value();
    if (v0.min_val() <= -1.0 + opts.guard_eps)
        throw transform_domain_error("newton_transformed: start violates the domain guard v > -1 + " +
                                     format_double(opts.guard_eps));
    const DiscreteOperator A0 = laplacian(p.grid());
    GridFunction v = v0;
    GridFunction best = v0;
    double best_res = std::numeric_limits<double>::infinity();
    int it = 0;
    for (; it < opts.max_iter; ++it) {
        const SemilinearRhs rhs = semilinear_eval(p.c(), p.h(), mu, lambda, v);
        const GridFunction r(p.grid(), Eigen::VectorXd(A0.matrix * v.values() - rhs.f.values()));
        const double rn = r.sup_norm();
        if (std::isfinite(rn) && rn < best_res) {
            best_res = rn;
            best = v;
        }
        if (rn <= opts.tol)
            return SolveReport{cole_hopf_inverse(v, mu), rn, it, true, Formulation::transformed};
        if (!std::isfinite(rn) || v.sup_norm() > opts.blowup_guard) break;
        Eigen::SparseMatrix<double> J = A0.matrix;
        for (Eigen::Index k = 0; k < v.size(); ++k) J.coeffRef(k, k) -= rhs.fprime[k];
        const Eigen::VectorXd delta =
            solve_sparse(J, -r.values(), true, "newton_transformed", std::numeric_limits<double>::infinity());
        double t = 1.0;
        bool accepted = false;
        bool any_admissible = false;
        for (int halving = 0; halving <= opts.max_halvings; ++halving) {
            GridFunction trial(p.grid(), Eigen::VectorXd(v.values() + t * delta));
            if (trial.min_val() > -1.0 + opts.guard_eps) {
                any_admissible = true;
                const double rn_trial = residual_transformed(p, lambda, trial).sup_norm();
                if (std::isfinite(rn_trial) && rn_trial <= (1.0 - opts.armijo_c * t) * rn) {
                    v = std::move(trial);
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if (!any_admissible)
            throw domain_guard_error("newton_transformed: no admissible damping keeps v > -1 + " +
                                     format_double(opts.guard_eps));
        if (!accepted) break;
    }
    const double final_res = residual_transformed(p, lambda, v).sup_norm();
    if (std::isfinite(final_res) && final_res < best_res) {
        best_res = final_res;
        best = v;
    }
    return SolveReport{cole_hopf_inverse(best, mu), best_res, it, best_res <= opts.tol, Formulation::transformed};
}

/// Lower-solution certificate: F(cand) <= tol nodewise, where F is the
/// direct residual and tol = 1e-9 * (1 + data norms).
inline Certificate verify_lower(const ProblemSpec& p, double lambda, const GridFunction& cand) {
    const GridFunction F = residual_direct(p, lambda, cand);
    Certificate cert;
    cert.tol = 1e-9 * data_scale(p, lambda, cand);
    Eigen::Index worst = 0;
    F.values().maxCoeff(&worst);
    cert.worst_node = worst;
    cert.max_violation = F[worst];
    cert.holds = cert.max_violation <= cert.tol;
    return cert;
}

/// Upper-solution certificate: F(cand) >= -tol nodewise.
inline Certificate verify_upper(const ProblemSpec& p, double lambda, const GridFunction& cand) {
    const GridFunction F = residual_direct(p, lambda, cand);
    Certificate cert;
    cert.tol = 1e-9 * data_scale(p, lambda, cand);
    Eigen::Index worst = 0;
    F.values().minCoeff(&worst);
    cert.worst_node = worst;
    cert.max_violation = -F[worst];
    cert.holds = cert.max_violation <= cert.tol;
    return cert;
}

/// Nodewise ordering certificate for a pair of profiles. max_violation is
/// the largest value of (lower - upper) over the nodes, so <= 0 means the
/// pair is ordered; epsilon is the largest factor with
/// upper - lower >= epsilon*phi1, so > 0 means strict ordering in the
/// phi1 gauge.
struct OrderedCertificate {
    GridFunction lower;
    GridFunction upper;
    double epsilon = 0.0;
    double max_violation = 0.0;
    bool holds = false; ///< max_violation <= 0 (nodewise ordering)
};

inline OrderedCertificate certify_ordered(const GridFunction& lower, const GridFunction& upper,
                                          const GridFunction& phi1) {
    lower.check_same_grid(upper);
    OrderedCertificate cert{lower, upper, 0.0, 0.0, false};
    cert.max_violation = (lower - upper).max_val();
    cert.epsilon = strictly_below(lower, upper, phi1).epsilon;
    cert.holds = cert.max_violation <= 0.0;
    return cert;
}

enum class MonotoneFrom { lower, upper };

/// K-shifted monotone iteration on the transformed problem between a
/// transformed lower solution alpha_v and upper solution beta_v:
///   (-Lap_h + K) v_{j+1} = f(v_j) + K v_j,
/// with K = 1 + max(0, -min f') over the bracket, which makes the update
/// map order-preserving. Starting at alpha_v (lower) ascends to the minimal
/// solution in the bracket; starting at beta_v descends to the maximal one.
inline SolveReport monotone_iterate(const ProblemSpec& p, double lambda, const GridFunction& alpha_v,
                                    const GridFunction& beta_v, MonotoneFrom from, const SolveOptions& opts = {}) {
    if (alpha_v.grid() != p.grid() || beta_v.grid() != p.grid())
        throw shape_error("monotone_iterate: bracket lives on a different grid");
    const double mu = p.mu_value();
    const double tol_cert = 1e-9 * (data_scale(p, lambda, alpha_v) + beta_v.sup_norm());

    if (alpha_v.min_val() <= -1.0 + opts.guard_eps)
        throw certificate_error("monotone_iterate: alpha_v leaves the admissible region v > -1");
    for (Eigen::Index k = 0; k < alpha_v.size(); ++k)
        if (alpha_v[k] > beta_v[k] + tol_cert)
            throw certificate_error("monotone_iterate: bracket is not ordered at node " + std::to_string(k) +
                                    " (alpha " + format_double(alpha_v[k]) + " > beta " + format_double(beta_v[k]) + ")");

    const DiscreteOperator A0 = laplacian(p.grid());
    // Discrete lower/upper inequalities for the transformed equation.
    {
        const SemilinearRhs ra = semilinear_eval(p.c(), p.h(), mu, lambda, alpha_v);
        const Eigen::VectorXd Fa = A0.matrix * alpha_v.values() - ra.f.values();
        Eigen::Index worst = 0;
        const double va = Fa.maxCoeff(&worst);
        if (va > tol_cert)
            throw certificate_error("monotone_iterate: alpha_v fails the lower inequality at node " +
                                    std::to_string(worst) + " by " + format_double(va));
        const SemilinearRhs rb = semilinear_eval(p.c(), p.h(), mu, lambda, beta_v);
        const Eigen::VectorXd Fb = A0.matrix * beta_v.values() - rb.f.values();
        const double vb = Fb.minCoeff(&worst);
        if (vb < -tol_cert)
            throw certificate_error("monotone_iterate: beta_v fails the upper inequality at node " +
                                    std::to_string(worst) + " by " + format_double(-vb));
    }

    // Shift K from the minimum of f' over the bracket range (f' is monotone
    // in the state, so endpoint evaluation per node is exact).
    const double lo = alpha_v.min_val();
    const double hi = beta_v.max_val();
    double fp_min = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < alpha_v.size(); ++k) {
        const double fp_lo = lambda * p.c()[k] * (std::log1p(lo) + 1.0) + mu * p.h()[k];
        const double fp_hi = lambda * p.c()[k] * (std::log1p(hi) + 1.0) + mu * p.h()[k];
        fp_min = std::min(fp_min, std::min(fp_lo, fp_hi));
    }
    const double K = 1.0 + std::max(0.0, -fp_min);

    Eigen::SparseMatrix<double> M = A0.matrix;
    for (Eigen::Index k = 0; k < M.rows(); ++k) M.coeffRef(k, k) += K;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(M);
    if (ldlt.info() != Eigen::Success)
        throw singular_operator_error("monotone_iterate: shifted operator factorization failed");

    GridFunction v = from == MonotoneFrom::lower ? alpha_v : beta_v;
    const double mono_sign = from == MonotoneFrom::lower ? 1.0 : -1.0;
    const double mono_tol = 1e-12 * (1.0 + std::abs(lo) + std::abs(hi));
    bool converged = false;
    long it = 0;
    for (; it < opts.max_monotone_iter; ++it) {
        const SemilinearRhs rhs = semilinear_eval(p.c(), p.h(), mu, lambda, v);
        const Eigen::VectorXd next = ldlt.solve(rhs.f.values() + K * v.values());
        const double step = (next - v.values()).cwiseAbs().maxCoeff();
        const double worst_dir = (mono_sign * (next - v.values())).minCoeff();
        if (worst_dir < -mono_tol)
            throw iteration_error("monotone_iterate: iterate left the monotone ladder by " +
                                  format_double(-worst_dir));
        v = GridFunction(p.grid(), next);
        if (step <= 1e-12) {
            converged = true;
            ++it;
            break;
        }
    }
    const double res = residual_transformed(p, lambda, v).sup_norm();
    return SolveReport{cole_hopf_inverse(v, mu), res, int(std::min<long>(it, INT32_MAX)), converged,
                       Formulation::transformed};
}

/// Lower solution from the linear problem -Lap a = -lambda*k*c - h^- - 1,
/// doubling k from 1 until min(a_k) >= -k (then lambda*c*a_k >= -lambda*k*c
/// and the lower-solution inequality follows with slack 1). The doubling can
/// genuinely fail for lambda large (k caps at 2^60).
inline GridFunction construct_lower_solution(const ProblemSpec& p, double lambda) {
    if (lambda < 0.0) throw validation_error("construct_lower_solution: lambda must be >= 0");
    const DiscreteOperator A0 = laplacian(p.grid());
    const GridFunction hm = p.h_minus();
    for (int doubling = 0; doubling <= 60; ++doubling) {
        const double k = std::ldexp(1.0, doubling);
        GridFunction rhs(p.grid());
        for (Eigen::Index i = 0; i < rhs.size(); ++i) rhs[i] = -lambda * k * p.c()[i] - hm[i] - 1.0;
        const GridFunction alpha = linear_solve(A0, rhs);
        if (alpha.min_val() >= -k) {
            const Certificate cert = verify_lower(p, lambda, alpha);
            if (!cert.holds)
                throw certificate_error("construct_lower_solution: candidate fails verify_lower at node " +
                                        std::to_string(cert.worst_node) + " by " + format_double(cert.max_violation));
            return alpha;
        }
    }
    throw iteration_error("construct_lower_solution: no admissible k up to 2^60 (lambda too large for this recipe)");
}

/// Upper solution of the lambda=0 problem (constant mu): exists iff the
/// weighted eigenvalue of -Lap - mu*h is positive, in which case
/// w = (-Lap - mu*h)^-1 (mu*h^+) >= 0 and beta = ln(w+1)/mu.
inline std::optional<GridFunction> construct_upper_solution_P0(const ProblemSpec& p) {
    const double mu = p.mu_value();
    try {
        const EigenPair xi = xi1(p);
        if (xi.value <= 0.0) return std::nullopt;
    } catch (const definiteness_error&) {
        // Shifted operator indefinite means the eigenvalue is deeply
        // negative: no upper solution from this construction.
        return std::nullopt;
    }
    const DiscreteOperator op = build_operator(p.grid(), GridFunction(p.grid(), Eigen::VectorXd(-mu * p.h().values())));
    GridFunction rhs(p.grid(), Eigen::VectorXd(mu * p.h_plus().values()));
    GridFunction w(p.grid());
    try {
        w = linear_solve(op, rhs);
    } catch (const singular_operator_error&) {
        return std::nullopt;
    }
    if (w.min_val() < 0.0 || w.min_val() <= -1.0) return std::nullopt;
    return cole_hopf_inverse(w, mu);
}

/// Negative strict upper solution for lambda past the weighted eigenvalue
/// nu1: pick lambda0 in the anti-maximum window just above nu1 (bisecting
/// from above until the linear solve lands strictly below 0 in the phi1
/// gauge), scale it down by k_scale (halving until admissible), and pull
/// back through the exponential change of variables at slope mu2.
///
/// The certificate targets the data family member h_k = k*h^+ - h^- at the
/// final halved factor k <= k_scale (reported through k_certified when the
/// pointer is non-null). Scaling only the positive part is what makes the
/// construction close: where h^+ > 0 near the boundary the inequality for
/// the unscaled h fails by (1-k)*h^+ no matter how small the profile is.
/// When h <= 0 every member has h_k = h, so the certificate covers the
/// given problem unchanged.
inline std::optional<GridFunction> construct_negative_upper_solution(const ProblemSpec& p, double lambda,
                                                                     double k_scale = 1.0,
                                                                     double* k_certified = nullptr) {
    const GridFunction hm = p.h_minus();
    const GridFunction hp = p.h_plus();
    const double mu2 = p.mu2();
    const EigenPair nu = nu1(p, hm);
    if (!(lambda > nu.value)) return std::nullopt; // construction needs lambda past nu1
    const EigenPair gam = gamma1(p);
    const GridFunction zero(p.grid(), 0.0);

    // Forcing term: mu2*h^+ when h has a positive part, else the constant 1
    // (the h == 0 variant of the anti-maximum construction).
    GridFunction b(p.grid(), 1.0);
    if (hp.max_val() > 0.0) b = GridFunction(p.grid(), Eigen::VectorXd(mu2 * hp.values()));

    double lambda0 = std::min(nu.value + 1.0, nu.value + 0.5 * (lambda - nu.value));
    std::optional<GridFunction> w_neg;
    for (int tries = 0; tries < 60; ++tries) {
        GridFunction d(p.grid());
        for (Eigen::Index k = 0; k < d.size(); ++k) d[k] = mu2 * hm[k] - lambda0 * p.c()[k];
        try {
            const DiscreteOperator op = build_operator(p.grid(), d);
            const GridFunction w(p.grid(), solve_sparse(op.matrix, b.values(), true,
                                                        "construct_negative_upper_solution",
                                                        std::numeric_limits<double>::infinity()));
            if (strictly_below(w, zero, gam.func).holds) {
                w_neg = w;
                break;
            }
        } catch (const singular_operator_error&) {
            // lambda0 essentially hit an eigenvalue; move the window.
        }
        lambda0 = nu.value + 0.5 * (lambda0 - nu.value);
    }
    if (!w_neg) return std::nullopt;

    for (int halving = 0; halving < 60; ++halving) {
        const double k = k_scale * std::ldexp(1.0, -halving);
        GridFunction beta_tilde(p.grid(), Eigen::VectorXd((k / lambda) * w_neg->values()));
        if (lambda * beta_tilde.min_val() <= -1.0 + 1e-12) continue;
        GridFunction beta = beta_tilde.map([&](double s) { return std::log1p(lambda * s) / mu2; });
        const ProblemSpec pk = p.with_h(GridFunction(p.grid(), Eigen::VectorXd(k * hp.values() - hm.values())));
        if (verify_upper(pk, lambda, beta).holds && strictly_below(beta, zero, gam.func).holds) {
            if (k_certified) *k_certified = k;
            return beta;
        }
    }
    return std::nullopt;
}

/// Weighted-eigenfunction identity evaluated on any nodal function:
/// lhs = (gamma1 - lambda) * int(c*u*phi1),
/// rhs = int(mu*|grad u|^2*phi1) + int(h*phi1).
/// For exact solutions lhs = rhs up to solver and eigen residuals.
struct IdentityReport {
    double lhs = 0.0;
    double rhs = 0.0;
    double gap = 0.0;     ///< lhs - rhs
    double rel_gap = 0.0; ///< |gap| / max(|lhs|, |rhs|, 1e-12)
};

inline IdentityReport check_identity_phi1(const ProblemSpec& p, double lambda, const GridFunction& u,
                                          const EigenPair* precomputed_gamma1 = nullptr) {
    const EigenPair gam = precomputed_gamma1 ? *precomputed_gamma1 : gamma1(p);
    const GridFunction mu = p.mu_field();
    const GridFunction cu_phi = p.c().cwise_mul(u).cwise_mul(gam.func);
    const GridFunction grad_phi = mu.cwise_mul(gradient_sq(u)).cwise_mul(gam.func);
    const GridFunction h_phi = p.h().cwise_mul(gam.func);
    IdentityReport rep;
    rep.lhs = (gam.value - lambda) * integrate(cu_phi);
    rep.rhs = integrate(grad_phi) + integrate(h_phi);
    rep.gap = rep.lhs - rep.rhs;
    rep.rel_gap = std::abs(rep.gap) / std::max({std::abs(rep.lhs), std::abs(rep.rhs), 1e-12});
    return rep;
}

/// Deterministic multistart family: zero, +/- the constructed lower solution
/// (when the recipe terminates), +/- t*phi1 for t in {1,5,25,125}, caller
/// extras (branch extrapolants), then seeded random phi1/alpha combinations
/// up to `count`. The final list order is shuffled by the same seed.
inline std::vector<GridFunction> multistart_family(const ProblemSpec& p, double lambda, int count,
                                                   unsigned long seed,
                                                   const std::vector<GridFunction>& extras = {}) {
    std::vector<GridFunction> starts;
    starts.emplace_back(p.grid(), 0.0);
    std::optional<GridFunction> alpha;
    try {
        alpha = construct_lower_solution(p, lambda);
    } catch (const error&) {
        // Recipe can fail for lambda large; the family just loses +/- alpha.
    }
    if (alpha) {
        starts.push_back(*alpha);
        starts.push_back(-*alpha);
    }
    const EigenPair gam = gamma1(p);
    for (const double t : {1.0, 5.0, 25.0, 125.0}) {
        starts.push_back(t * gam.func);
        starts.push_back((-t) * gam.func);
    }
    for (const GridFunction& e : extras)
        if (e.grid() == p.grid()) starts.push_back(e);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> expo(-1.0, 2.2);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    while (int(starts.size()) < count) {
        const double amp = (unit(rng) < 0.5 ? -1.0 : 1.0) * std::pow(10.0, expo(rng));
        GridFunction s = amp * gam.func;
        if (alpha && unit(rng) < 0.5) s += unit(rng) * (*alpha);
        starts.push_back(std::move(s));
    }
    if (int(starts.size()) > count) starts.erase(starts.begin() + count, starts.end());
    std::shuffle(starts.begin(), starts.end(), rng);
    return starts;
}

/// Run newton_direct from every start, converting solver exceptions into
/// non-converged reports (multistart probes routinely cross singular sets).
inline std::vector<SolveReport> multistart_newton(const ProblemSpec& p, double lambda,
                                                  const std::vector<GridFunction>& starts,
                                                  const SolveOptions& opts = {}) {
    std::vector<SolveReport> reports;
    reports.reserve(starts.size());
    for (const GridFunction& s : starts) {
        try {
            reports.push_back(newton_direct(p, lambda, s, opts));
        } catch (const solver_error&) {
            reports.push_back(SolveReport{s, residual_direct(p, lambda, s).sup_norm(), 0, false,
                                          Formulation::direct});
        }
    }
    return reports;
}

} // namespace qge
