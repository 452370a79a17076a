/// @file branch.hpp
/// @brief Parameter continuation, fold detection, second solutions, and
/// blow-up diagnostics.
///
/// One generic predictor-corrector engine drives every sweep: natural
/// stepping in the parameter with an analytic tangent predictor, automatic
/// step halving on corrector failure, and a switch to pseudo-arclength
/// (Keller bordered system, solved by block elimination) once the natural
/// step collapses. Folds are detected as a sign change in the arclength
/// tangent's parameter component and refined by halving the arc step until
/// the bracketing pair is tight. Specialized front-ends continue in lambda,
/// in the additive shift a of the data family h + a*c, and in the factor k
/// of the family k*h^+ - h^-. A deflated Newton finds second solutions at
/// fixed parameters, and a descending-lambda marcher tracks the large
/// branch for blow-up diagnostics.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qge/eigenpairs.hpp"
#include "qge/solve.hpp"

namespace qge {

enum class BranchTermination { fold, param_limit, blowup_guard, solver_failure };

inline const char* to_string(BranchTermination t) {
    switch (t) {
    case BranchTermination::fold: return "fold";
    case BranchTermination::param_limit: return "param_limit";
    case BranchTermination::blowup_guard: return "blowup_guard";
    default: return "solver_failure";
    }
}

/// One accepted continuation point. The norm fields are computed from
/// `solution` at acceptance time, so they are consistent by construction.
struct BranchPoint {
    double param = 0.0;
    GridFunction solution;
    double sup_norm = 0.0;
    double min_val = 0.0;
    double max_val = 0.0;
    double step_used = 0.0;
};

/// Fold record: the parameter estimate and the bracketing pair of accepted
/// parameter values around the tangent sign change.
struct FoldInfo {
    double param_estimate = 0.0;
    double bracket_lo = 0.0;
    double bracket_hi = 0.0;
};

struct Branch {
    std::vector<BranchPoint> points;
    std::optional<FoldInfo> fold;
    BranchTermination terminated_by = BranchTermination::param_limit;
};

struct BranchConfig {
    double param_min = 0.0;
    double param_max = 10.0;
    double initial_step = 0.0;          ///< 0 = auto: 1e-2 * max(span, 1)
    double min_step_rel = 1e-8;         ///< halving floor (relative) before solver_failure
    double arclength_switch_rel = 1e-6; ///< natural -> arclength below this * max(span, 1)
    double blowup_guard = 1e6;          ///< sup-norm termination threshold
    double fold_tol_rel = 1e-3;         ///< fold bracket width target (relative)
    double accept_residual = 1e-9;      ///< independent re-verification bound per point
    int max_points = 2000;
    int post_fold_points = 3;           ///< reversed-leg points kept after the fold
    SolveOptions solve;
};

/// A one-parameter family of problems plus the analytic derivative of the
/// direct residual with respect to the parameter (evaluated at the family
/// member for that parameter value).
struct ParameterFamily {
    std::function<ProblemSpec(double)> problem_at;
    std::function<double(double)> lambda_at;
    std::function<GridFunction(const ProblemSpec&, double, const GridFunction&)> dF_dparam;
};

namespace detail {

/// Mean-scaled inner product: dimension-independent tangent normalization
/// so arclength steps measure profiles by RMS value, not by node count.
inline double rms_dot(const GridFunction& x, const GridFunction& y) {
    return x.values().dot(y.values()) / double(x.size());
}

inline BranchPoint make_point(double t, GridFunction u, double step) {
    const double sup = u.sup_norm();
    const double lo = u.min_val();
    const double hi = u.max_val();
    return BranchPoint{t, std::move(u), sup, lo, hi, step};
}

/// Analytic tangent du/dt = -J^{-1} dF/dt at an accepted point; zero when
/// the parameter derivative vanishes identically (e.g. the trivial branch
/// of homogeneous data) or the Jacobian is singular (fold neighborhood --
/// the caller falls back to secants there).
inline std::optional<GridFunction> analytic_tangent(const ParameterFamily& fam, double t, const GridFunction& u) {
    const ProblemSpec p = fam.problem_at(t);
    const GridFunction Fp = fam.dF_dparam(p, t, u);
    if (Fp.sup_norm() == 0.0) return GridFunction(p.grid(), 0.0);
    try {
        const Eigen::SparseMatrix<double> J = jacobian_direct(p, fam.lambda_at(t), u);
        return GridFunction(p.grid(), solve_sparse(J, Eigen::VectorXd(-Fp.values()), false, "continuation tangent",
                                                   std::numeric_limits<double>::infinity()));
    } catch (const solver_error&) {
        return std::nullopt;
    }
}

/// One corrector solve at fixed parameter; nullopt unless Newton converged
/// AND an independent residual evaluation passes the acceptance bound.
inline std::optional<GridFunction> correct_at(const ParameterFamily& fam, double t, const GridFunction& pred,
                                              const BranchConfig& cfg) {
    const ProblemSpec p = fam.problem_at(t);
    const double lam = fam.lambda_at(t);
    try {
        SolveReport rep = newton_direct(p, lam, pred, cfg.solve);
        if (!rep.converged || !resolved_profile(rep.solution)) return std::nullopt;
        if (residual_direct(p, lam, rep.solution).sup_norm() > cfg.accept_residual) return std::nullopt;
        return std::move(rep.solution);
    } catch (const solver_error&) {
        return std::nullopt;
    }
}

/// Unit-ish tangent through two accepted points in the RMS metric.
struct ArcTangent {
    GridFunction zdot;
    double tdot = 0.0;
};

inline ArcTangent secant_tangent(const BranchPoint& from, const BranchPoint& to) {
    GridFunction du = to.solution - from.solution;
    const double dt = to.param - from.param;
    const double den = std::sqrt(rms_dot(du, du) + dt * dt);
    if (!(den > 0.0)) throw iteration_error("continuation: repeated point, no tangent direction");
    ArcTangent tan{(1.0 / den) * du, dt / den};
    return tan;
}

/// Keller corrector: Newton on {F(u, t) = 0, <zdot, u - u0>_rms + tdot*(t - t0) = ds}
/// solved by block elimination on the bordered system. Returns the corrected
/// (u, t) or nullopt.
inline std::optional<std::pair<GridFunction, double>> arclength_correct(const ParameterFamily& fam,
                                                                        const ArcTangent& tan,
                                                                        const BranchPoint& base, double ds,
                                                                        const BranchConfig& cfg) {
    GridFunction u = base.solution + ds * tan.zdot;
    double t = base.param + ds * tan.tdot;
    const double t_scale = std::max({std::abs(base.param), std::abs(cfg.param_max), 1.0});
    for (int it = 0; it < cfg.solve.max_iter; ++it) {
        const ProblemSpec p = fam.problem_at(t);
        const double lam = fam.lambda_at(t);
        GridFunction F = residual_direct(p, lam, u);
        GridFunction du = u - base.solution;
        const double r = rms_dot(tan.zdot, du) + tan.tdot * (t - base.param) - ds;
        const double rn = F.sup_norm();
        if (!std::isfinite(rn) || u.sup_norm() > cfg.solve.blowup_guard) return std::nullopt;
        if (rn <= cfg.solve.tol && std::abs(r) <= 1e-12 * t_scale) {
            if (!resolved_profile(u)) return std::nullopt;
            if (residual_direct(p, lam, u).sup_norm() > cfg.accept_residual) return std::nullopt;
            return std::make_pair(std::move(u), t);
        }
        const GridFunction Fp = fam.dF_dparam(p, t, u);
        GridFunction a(p.grid());
        GridFunction b(p.grid());
        try {
            const Eigen::SparseMatrix<double> J = jacobian_direct(p, lam, u);
            a = GridFunction(p.grid(), solve_sparse(J, F.values(), false, "arclength corrector",
                                                    std::numeric_limits<double>::infinity()));
            b = GridFunction(p.grid(), solve_sparse(J, Fp.values(), false, "arclength corrector",
                                                    std::numeric_limits<double>::infinity()));
        } catch (const solver_error&) {
            return std::nullopt;
        }
        const double denom = tan.tdot - rms_dot(tan.zdot, b);
        if (std::abs(denom) < 1e-14) return std::nullopt;
        const double dt_step = (rms_dot(tan.zdot, a) - r) / denom;
        GridFunction du_step = (-1.0) * a - dt_step * b;
        const double merit0 = rn + std::abs(r);
        bool accepted = false;
        double damp = 1.0;
        for (int half = 0; half <= cfg.solve.max_halvings; ++half) {
            GridFunction u_try = u + damp * du_step;
            const double t_try = t + damp * dt_step;
            GridFunction F_try = residual_direct(fam.problem_at(t_try), fam.lambda_at(t_try), u_try);
            GridFunction du_try = u_try - base.solution;
            const double r_try = rms_dot(tan.zdot, du_try) + tan.tdot * (t_try - base.param) - ds;
            const double merit = F_try.sup_norm() + std::abs(r_try);
            if (std::isfinite(merit) && merit <= (1.0 - cfg.solve.armijo_c * damp) * merit0) {
                u = std::move(u_try);
                t = t_try;
                accepted = true;
                break;
            }
            damp *= 0.5;
        }
        if (!accepted) return std::nullopt;
    }
    return std::nullopt;
}

} // namespace detail

/// Generic continuation driver. Starts from a converged point (t0, u0),
/// walks the branch in the requested direction (+1/-1), and returns the
/// accepted points with the termination reason. Natural stepping with an
/// analytic tangent predictor is used while it works; once the step halves
/// below arclength_switch_rel * scale the engine changes to pseudo-
/// arclength steps, where a sign change of the tangent's parameter
/// component marks a fold. The fold bracket is tightened by halving the
/// arc step, then a few reversed-leg points are kept and the run stops.
inline Branch continue_family(const ParameterFamily& fam, double t0, const GridFunction& u0, int direction,
                              const BranchConfig& cfg = {}) {
    if (direction != 1 && direction != -1)
        throw validation_error("continue_family: direction must be +1 or -1");
    if (!(cfg.param_max > cfg.param_min))
        throw validation_error("continue_family: param_max must exceed param_min");
    if (t0 < cfg.param_min - 1e-12 || t0 > cfg.param_max + 1e-12)
        throw validation_error("continue_family: start parameter outside [param_min, param_max]");

    const double span_scale = std::max(cfg.param_max - cfg.param_min, 1.0);
    const double step0 = cfg.initial_step > 0.0 ? cfg.initial_step : 1e-2 * span_scale;
    const double step_switch = cfg.arclength_switch_rel * span_scale;
    const double step_floor = cfg.min_step_rel * span_scale;

    Branch br;
    {
        // The start must already satisfy the acceptance bound (polish once).
        std::optional<GridFunction> u_ok = detail::correct_at(fam, t0, u0, cfg);
        if (!u_ok) throw validation_error("continue_family: start point does not converge at t0");
        br.points.push_back(detail::make_point(t0, std::move(*u_ok), 0.0));
    }

    double step = direction * step0;
    int streak = 0;

    // ---- natural-parameter leg ----
    while (int(br.points.size()) < cfg.max_points) {
        const BranchPoint& cur = br.points.back();
        if ((direction > 0 && cur.param >= cfg.param_max - 1e-14 * span_scale) ||
            (direction < 0 && cur.param <= cfg.param_min + 1e-14 * span_scale)) {
            br.terminated_by = BranchTermination::param_limit;
            return br;
        }
        double t_next = cur.param + step;
        t_next = std::clamp(t_next, cfg.param_min, cfg.param_max);
        const double eff_step = t_next - cur.param;

        std::optional<GridFunction> z = detail::analytic_tangent(fam, cur.param, cur.solution);
        GridFunction pred = cur.solution;
        if (z)
            pred += eff_step * (*z);
        else if (br.points.size() >= 2) {
            const BranchPoint& prev = br.points[br.points.size() - 2];
            const double dt = cur.param - prev.param;
            if (std::abs(dt) > 0.0) pred += (eff_step / dt) * (cur.solution - prev.solution);
        }

        std::optional<GridFunction> u_new = detail::correct_at(fam, t_next, pred, cfg);
        if (u_new) {
            if (u_new->sup_norm() > cfg.blowup_guard) {
                br.terminated_by = BranchTermination::blowup_guard;
                return br;
            }
            br.points.push_back(detail::make_point(t_next, std::move(*u_new), eff_step));
            if (++streak >= 2) {
                step = std::clamp(step * 1.5, -5.0 * step0, 5.0 * step0);
                streak = 0;
            }
            continue;
        }
        streak = 0;
        step *= 0.5;
        if (std::abs(step) < step_switch) break; // hand over to arclength
    }

    if (int(br.points.size()) >= cfg.max_points) {
        br.terminated_by = BranchTermination::param_limit;
        return br;
    }

    // ---- pseudo-arclength leg ----
    std::optional<detail::ArcTangent> tan_opt;
    if (br.points.size() >= 2) {
        tan_opt = detail::secant_tangent(br.points[br.points.size() - 2], br.points.back());
    } else {
        // Single accepted point: orient the analytic tangent along `direction`.
        std::optional<GridFunction> z = detail::analytic_tangent(fam, br.points.back().param, br.points.back().solution);
        if (!z) {
            br.terminated_by = BranchTermination::solver_failure;
            return br;
        }
        const double den = std::sqrt(detail::rms_dot(*z, *z) + 1.0);
        tan_opt = detail::ArcTangent{(direction / den) * (*z), direction / den};
    }
    detail::ArcTangent tan = std::move(*tan_opt);

    double ds = std::max(8.0 * step_switch, 1e-4 * span_scale);
    const double ds_cap = 1e-2 * span_scale;
    int post_fold_left = -1;

    while (int(br.points.size()) < cfg.max_points) {
        const BranchPoint base = br.points.back();
        std::optional<std::pair<GridFunction, double>> next = detail::arclength_correct(fam, tan, base, ds, cfg);
        if (!next) {
            ds *= 0.5;
            if (ds < step_floor) {
                br.terminated_by = BranchTermination::solver_failure;
                return br;
            }
            continue;
        }
        GridFunction u_new = std::move(next->first);
        const double t_new = next->second;

        if (t_new < cfg.param_min || t_new > cfg.param_max) {
            br.terminated_by = BranchTermination::param_limit;
            return br;
        }
        if (u_new.sup_norm() > cfg.blowup_guard) {
            br.terminated_by = BranchTermination::blowup_guard;
            return br;
        }

        BranchPoint candidate = detail::make_point(t_new, std::move(u_new), ds);
        detail::ArcTangent tan_new = detail::secant_tangent(base, candidate);

        const bool flip = !br.fold && tan.tdot * tan_new.tdot < 0.0;
        if (flip) {
            // The parameter is quadratic in arclength near the extremum, so
            // integrate the linear model of its derivative (the tangent
            // parameter component) up to the zero crossing: both accepted
            // points sit below the fold, and the peak estimate is
            // base + tdot * w * ds / 2 with w the crossing fraction.
            const double w = tan.tdot / (tan.tdot - tan_new.tdot);
            const double est = base.param + 0.5 * w * ds * tan.tdot;
            const double tol = cfg.fold_tol_rel * std::max({std::abs(est), 1e-6 * span_scale});
            if (std::max(std::abs(est - base.param), std::abs(est - t_new)) > 0.5 * tol) {
                ds *= 0.5; // tighten: redo the step from the same base
                if (ds < step_floor) {
                    br.terminated_by = BranchTermination::solver_failure;
                    return br;
                }
                continue;
            }
            FoldInfo fold;
            fold.bracket_lo = std::min(base.param, t_new);
            fold.bracket_hi = std::max(base.param, t_new);
            fold.param_estimate = est;
            br.fold = fold;
            post_fold_left = cfg.post_fold_points;
        }

        br.points.push_back(std::move(candidate));
        tan = tan_new;
        ds = std::min(ds * 1.5, ds_cap);

        if (post_fold_left >= 0 && --post_fold_left < 0) {
            br.terminated_by = BranchTermination::fold;
            return br;
        }
    }
    br.terminated_by = BranchTermination::param_limit;
    return br;
}

/// Continuation in lambda at fixed data. dF/dlambda = -c.*u.
inline Branch continue_lambda(const ProblemSpec& p, double lambda_start, const GridFunction& u_start,
                              int direction, const BranchConfig& cfg = {}) {
    ParameterFamily fam;
    fam.problem_at = [p](double) { return p; };
    fam.lambda_at = [](double t) { return t; };
    fam.dF_dparam = [](const ProblemSpec& pp, double, const GridFunction& u) {
        return GridFunction(pp.grid(), Eigen::VectorXd(-pp.c().values().cwiseProduct(u.values())));
    };
    return continue_family(fam, lambda_start, u_start, direction, cfg);
}

struct DeflationConfig {
    int starts = 24;
    unsigned long seed = 20240816;
    double distance_min = 1e-4; ///< required sup-norm separation from `first`
    double sigma_cap = 1e3;     ///< deflated step-scaling clamp
    SolveOptions solve;
};

/// Second-solution search outcome: the deflated-Newton report plus, when a
/// distinct solution was found, the nodewise ordering certificate between
/// the pair (oriented with the pointwise-smaller profile as `lower`).
struct SecondSolution {
    SolveReport report;
    std::optional<OrderedCertificate> ordering;
};

namespace detail {

/// The additive-shift data family h + a*c at fixed lambda; dF/da = -c.
inline ParameterFamily a_shift_family(const ProblemSpec& p, double lambda) {
    ParameterFamily fam;
    fam.problem_at = [p](double a) {
        return p.with_h(GridFunction(p.grid(), Eigen::VectorXd(p.h().values() + a * p.c().values())));
    };
    fam.lambda_at = [lambda](double) { return lambda; };
    fam.dF_dparam = [](const ProblemSpec& pp, double, const GridFunction&) {
        return GridFunction(pp.grid(), Eigen::VectorXd(-pp.c().values()));
    };
    return fam;
}

/// Newton on the deflated residual (1 + 1/||u - first||_inf^2) * F(u). The
/// deflated step is the plain Newton step scaled by
/// sigma = M / (M - gradM . delta) (rank-one update solved in closed form);
/// a merit line search on M * ||F||_inf keeps iterates away from `first`.
/// Bails out early when the residual stops making relative progress (the
/// quadratic gradient term can pin the line search to microscopic steps).
inline SolveReport deflated_newton(const ProblemSpec& p, double lambda, const GridFunction& first,
                                   const GridFunction& start, const DeflationConfig& cfg) {
    GridFunction u = start;
    GridFunction best = start;
    double best_res = std::numeric_limits<double>::infinity();
    const double tiny = 1e-12 * (1.0 + first.sup_norm());
    double stall_ref = std::numeric_limits<double>::infinity();
    int stall_count = 0;
    for (int it = 0; it <= cfg.solve.max_iter; ++it) {
        GridFunction F = residual_direct(p, lambda, u);
        const double rn = F.sup_norm();
        if (!std::isfinite(rn) || u.sup_norm() > cfg.solve.blowup_guard) break;
        if (rn > 0.99 * stall_ref) {
            if (++stall_count >= 10) break;
        } else {
            stall_ref = rn;
            stall_count = 0;
        }
        GridFunction w = u - first;
        const double dist = w.sup_norm();
        if (rn < best_res && dist >= cfg.distance_min) {
            best_res = rn;
            best = u;
        }
        if (rn <= cfg.solve.tol && dist >= cfg.distance_min && resolved_profile(u))
            return SolveReport{u, rn, it, true, Formulation::direct};
        if (dist < tiny) break; // collapsed onto the known solution
        GridFunction delta(p.grid());
        try {
            const Eigen::SparseMatrix<double> J = jacobian_direct(p, lambda, u);
            delta = GridFunction(p.grid(), solve_sparse(J, Eigen::VectorXd(-F.values()), false, "deflated newton",
                                                        std::numeric_limits<double>::infinity()));
        } catch (const solver_error&) {
            break;
        }
        const double M = 1.0 + 1.0 / (dist * dist);
        Eigen::Index kmax = 0;
        w.values().cwiseAbs().maxCoeff(&kmax);
        const double grad_dot = -2.0 * (w[kmax] > 0.0 ? 1.0 : -1.0) * delta[kmax] / (dist * dist * dist);
        const double denom = M - grad_dot;
        double sigma = std::abs(denom) < M / cfg.sigma_cap ? cfg.sigma_cap : M / denom;
        sigma = std::clamp(sigma, -cfg.sigma_cap, cfg.sigma_cap);
        const double merit0 = M * rn;
        bool accepted = false;
        double damp = 1.0;
        for (int half = 0; half <= cfg.solve.max_halvings; ++half) {
            GridFunction u_try = u + (damp * sigma) * delta;
            GridFunction w_try = u_try - first;
            const double d_try = w_try.sup_norm();
            if (d_try > 0.0) {
                const double merit = (1.0 + 1.0 / (d_try * d_try)) * residual_direct(p, lambda, u_try).sup_norm();
                if (std::isfinite(merit) && merit <= (1.0 - cfg.solve.armijo_c * damp) * merit0) {
                    u = std::move(u_try);
                    accepted = true;
                    break;
                }
            }
            damp *= 0.5;
        }
        if (!accepted) break;
    }
    return SolveReport{best, best_res, cfg.solve.max_iter, false, Formulation::direct};
}

/// One RK4 integration of the transformed phase plane v' = w,
/// w' = -f(x, v) from the left boundary with v = 0, v' = s. Coefficients
/// c, h are interpolated linearly between nodes and extended by their end
/// values into the boundary cells. Integration dies (dead = true) when v
/// reaches the transform's domain wall v = -1 (u -> -infinity) or
/// overflows; v_end is then a same-sign sentinel so slope bisection still
/// works. steps must be a multiple of n + 1 so node values are sampled
/// exactly.
struct ShootOutcome {
    Eigen::VectorXd v_nodes;
    double v_end = 0.0;
    bool dead = false;
};

inline ShootOutcome shoot_transformed(const ProblemSpec& p, double lambda, double s, int steps) {
    const Grid& g = p.grid();
    const int n = g.n();
    const double T = std::get<Interval>(g.domain()).length;
    const double mu = p.mu_value();
    const double hx = g.hx();
    const auto coeff_at = [&](const GridFunction& c, double xi) {
        const double j = xi / hx - 1.0; // node j sits at xi = (j+1)*hx
        if (j <= 0.0) return c[0];
        if (j >= double(n - 1)) return c[n - 1];
        const int j0 = int(j);
        const double w = j - j0;
        return (1.0 - w) * c[j0] + w * c[j0 + 1];
    };
    const auto f = [&](double xi, double v) {
        const double op = 1.0 + v;
        // Integrator stages may briefly probe op <= 0 on steep descents even
        // when every accepted state is admissible. op*log(op) -> 0 as
        // op -> 0+, so extending the reaction term by zero there keeps the
        // stages finite without altering any admissible evaluation.
        const double react = op > 0.0 ? op * std::log(op) : 0.0;
        return lambda * coeff_at(p.c(), xi) * react + mu * coeff_at(p.h(), xi) * op;
    };

    ShootOutcome out;
    out.v_nodes.resize(n);
    const int per_node = steps / (n + 1);
    const double dt = T / steps;
    double v = 0.0, w = s;
    int next_node = 0;
    for (int i = 0; i < steps; ++i) {
        const double xi = i * dt;
        if (!(v > -1.0) || !std::isfinite(v) || std::abs(v) > 1e250) {
            out.dead = true;
            out.v_end = v > 0.0 ? 1e300 : -1e300;
            return out;
        }
        const double k1v = w, k1w = -f(xi, v);
        const double k2v = w + 0.5 * dt * k1w, k2w = -f(xi + 0.5 * dt, v + 0.5 * dt * k1v);
        const double k3v = w + 0.5 * dt * k2w, k3w = -f(xi + 0.5 * dt, v + 0.5 * dt * k2v);
        const double k4v = w + dt * k3w, k4w = -f(xi + dt, v + dt * k3v);
        v += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        w += dt / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w);
        if ((i + 1) % per_node == 0 && next_node < n) out.v_nodes[next_node++] = v;
    }
    if (!std::isfinite(v)) {
        out.dead = true;
        out.v_end = 1e300;
        return out;
    }
    out.v_end = v;
    return out;
}

/// Seed candidates for a second solution by shooting (1D, constant mu):
/// scan the initial slope s geometrically in both directions, bisect each
/// sign change of v(T; s), and pull the node samples back to u. Shooting
/// follows the unstable branches that damped Newton slides off, so these
/// starts land inside the Newton basin of solutions deflation cannot
/// reach. Candidates are raw starts — the caller must polish and filter.
inline std::vector<GridFunction> shooting_starts(const ProblemSpec& p, double lambda) {
    std::vector<GridFunction> cands;
    if (p.grid().dim() != 1 || !p.mu_is_constant()) return cands;
    const double mu = p.mu_value();
    const int steps = 64 * (p.grid().n() + 1);
    // Steep-launch roots pair an orbit that survives to the far boundary
    // with one that crashes through v = -1 just before it; the crashed side
    // carries the sentinel sign, so bisection still brackets, but only the
    // surviving endpoint has usable node samples. Keep full outcomes for
    // both bracket ends and emit the live one.
    for (const double dir : {1.0, -1.0}) {
        ShootOutcome prev = shoot_transformed(p, lambda, dir * 1e-8, steps);
        double s_prev = dir * 1e-8;
        for (double mag = 1e-8; mag < 1e200; mag *= 1.4142135623730951) {
            const double s_cur = dir * mag * 1.4142135623730951;
            ShootOutcome cur = shoot_transformed(p, lambda, s_cur, steps);
            if ((prev.v_end < 0.0) != (cur.v_end < 0.0)) {
                double a = s_prev, b = s_cur;
                ShootOutcome oa = prev, ob = cur;
                for (int it = 0; it < 200 && std::abs(b - a) > 1e-15 * std::max(1.0, std::abs(a)); ++it) {
                    const double m = 0.5 * (a + b);
                    ShootOutcome om = shoot_transformed(p, lambda, m, steps);
                    if ((oa.v_end < 0.0) == (om.v_end < 0.0)) {
                        a = m;
                        oa = std::move(om);
                    } else {
                        b = m;
                        ob = std::move(om);
                    }
                }
                const auto usable = [](const ShootOutcome& o) {
                    return !o.dead && o.v_nodes.minCoeff() > -1.0 + 1e-12;
                };
                const ShootOutcome* pick = usable(oa) ? &oa : nullptr;
                if (usable(ob) && (!pick || std::abs(ob.v_end) < std::abs(pick->v_end))) pick = &ob;
                if (pick) {
                    GridFunction u(p.grid(), pick->v_nodes);
                    cands.push_back(u.map([mu](double t) { return std::log1p(t) / mu; }));
                }
            }
            s_prev = s_cur;
            prev = std::move(cur);
        }
    }
    return cands;
}

/// Reach a solution distinct from `first` by rounding the fold of the
/// shifted family h + a*c: continue from (a = 0, first) past the fold, ride
/// the returning leg back to small a, and polish with plain Newton at
/// a = 0. This is the reliable route to the non-minimal solution when
/// damped Newton slides back onto `first` from every start (the second
/// branch is an unstable ridge of the residual landscape).
inline std::optional<SolveReport> second_via_a_fold(const ProblemSpec& p, double lambda, const GridFunction& first,
                                                    const SolveOptions& sopts) {
    const ParameterFamily fam = a_shift_family(p, lambda);
    BranchConfig cfg;
    cfg.solve = sopts;
    cfg.param_min = 0.0;
    cfg.param_max = 16.0;
    cfg.post_fold_points = std::numeric_limits<int>::max() / 2; // run the whole returning leg
    Branch br;
    try {
        br = continue_family(fam, 0.0, first, +1, cfg);
        while (!br.fold && br.terminated_by == BranchTermination::param_limit && cfg.param_max < 1024.0) {
            cfg.param_max *= 2.0;
            const BranchPoint& tail = br.points.back();
            Branch more = continue_family(fam, tail.param, tail.solution, +1, cfg);
            for (std::size_t i = 1; i < more.points.size(); ++i) br.points.push_back(std::move(more.points[i]));
            br.fold = more.fold;
            br.terminated_by = more.terminated_by;
        }
    } catch (const error&) {
        return std::nullopt;
    }
    if (!br.fold) return std::nullopt;
    const BranchPoint& back = br.points.back();
    if (!(back.param <= 0.5 * br.fold->param_estimate)) return std::nullopt; // returning leg stalled
    try {
        SolveReport rep = newton_direct(p, lambda, back.solution, sopts);
        if (rep.converged && resolved_profile(rep.solution)) return rep;
    } catch (const solver_error&) {
    }
    return std::nullopt;
}

} // namespace detail

/// Search for a solution of (problem, lambda) distinct from `first` by
/// deflated Newton runs over the multistart family (plus perturbations of
/// `first` along phi1), falling back to continuation around the fold of
/// the shifted family h + a*c when deflation stalls. Success requires the
/// plain residual to meet the tolerance AND a sup-norm separation of at
/// least distance_min; the returned certificate orders the pair in the
/// phi1 gauge.
inline SecondSolution find_second_solution(const ProblemSpec& p, double lambda, const GridFunction& first,
                                           const DeflationConfig& cfg = {}) {
    if (residual_direct(p, lambda, first).sup_norm() > 1e-6 * data_scale(p, lambda, first))
        throw validation_error("find_second_solution: `first` is not a converged solution at this lambda");
    const EigenPair gam = gamma1(p);
    std::vector<GridFunction> extras;
    const double amp = 1.0 + first.sup_norm();
    for (const double t : {0.25, 1.0, 4.0}) {
        extras.push_back(first + (t * amp) * gam.func);
        extras.push_back(first - (t * amp) * gam.func);
    }
    const std::vector<GridFunction> starts = multistart_family(p, lambda, cfg.starts, cfg.seed, extras);

    SecondSolution out{SolveReport{first, std::numeric_limits<double>::infinity(), 0, false, Formulation::direct},
                       std::nullopt};
    const auto accept = [&](SolveReport rep) {
        const bool above = integrate(rep.solution - first) >= 0.0;
        const GridFunction& lo = above ? first : rep.solution;
        const GridFunction& hi = above ? rep.solution : first;
        out.ordering = certify_ordered(lo, hi, gam.func);
        out.report = std::move(rep);
    };

    for (const GridFunction& s : starts) {
        SolveReport rep = detail::deflated_newton(p, lambda, first, s, cfg);
        if (rep.converged) {
            accept(std::move(rep));
            return out;
        }
        if (rep.residual_inf < out.report.residual_inf) out.report = std::move(rep);
    }

    // Direct-form deflation stalled from every start (typical when the
    // second branch is an unstable ridge): in 1D, shoot on the transformed
    // phase plane for boundary-to-boundary trajectories and polish each
    // pullback. Moderate profiles polish in the direct formulation; steep
    // branches carry a boundary layer that is linear in v but logarithmic
    // in u, so the direct grid operator cannot resolve them while the
    // transformed one holds them to roundoff — polish those in v and keep
    // the result when the v-profile is grid-resolved. Tolerances are
    // floored at each formulation's roundoff scale eps*||Lap_h||*amplitude.
    const double lap_diag = laplacian(p.grid()).matrix.diagonal().maxCoeff();
    for (const GridFunction& s2 : detail::shooting_starts(p, lambda)) {
        SolveOptions polish = cfg.solve;
        polish.tol = std::max(polish.tol, 8.0 * std::numeric_limits<double>::epsilon() * lap_diag *
                                              (1.0 + s2.sup_norm()));
        try {
            SolveReport rep = newton_direct(p, lambda, s2, polish);
            if (rep.converged && detail::resolved_profile(rep.solution) &&
                (rep.solution - first).sup_norm() >= cfg.distance_min) {
                accept(std::move(rep));
                return out;
            }
        } catch (const solver_error&) {
        }
        if (!p.mu_is_constant()) continue;
        const double mu = p.mu_value();
        try {
            const GridFunction v0 = cole_hopf_forward(s2, mu);
            SolveOptions tpolish = cfg.solve;
            tpolish.tol = std::max(tpolish.tol, 64.0 * std::numeric_limits<double>::epsilon() * lap_diag *
                                                    (1.0 + v0.sup_norm()));
            tpolish.blowup_guard = std::max(tpolish.blowup_guard, 1e6 * (1.0 + v0.sup_norm()));
            SolveReport rep = newton_transformed(p, lambda, v0, tpolish);
            if (rep.converged && (rep.solution - first).sup_norm() >= cfg.distance_min &&
                detail::resolved_profile(cole_hopf_forward(rep.solution, mu))) {
                accept(std::move(rep));
                return out;
            }
        } catch (const solver_error&) {
        } catch (const transform_domain_error&) {
        }
    }

    // Last resort: round the fold of the shifted family h + a*c and come
    // back, which walks onto the other branch.
    if (std::optional<SolveReport> rep = detail::second_via_a_fold(p, lambda, first, cfg.solve)) {
        if ((rep->solution - first).sup_norm() >= cfg.distance_min) accept(std::move(*rep));
    }
    return out;
}

/// Pick the pointwise-minimal converged solution from a multistart batch
/// (smallest mean value); nullopt when nothing converged.
inline std::optional<GridFunction> minimal_solution(const ProblemSpec& p, double lambda,
                                                    const SolveOptions& opts = {}, int starts = 16,
                                                    unsigned long seed = 7) {
    const std::vector<SolveReport> reps = multistart_newton(p, lambda, multistart_family(p, lambda, starts, seed), opts);
    std::optional<GridFunction> best;
    double best_mean = std::numeric_limits<double>::infinity();
    for (const SolveReport& r : reps) {
        if (!r.converged || !detail::resolved_profile(r.solution)) continue;
        const double mean = integrate(r.solution);
        if (mean < best_mean) {
            best_mean = mean;
            best = r.solution;
        }
    }
    return best;
}

struct SweepAResult {
    double A1_estimate = 0.0;
    Branch branch;
};

/// Continuation in the additive shift a of the data family h + a*c from
/// a = 0 upward; the fold location estimates the nonexistence threshold
/// (no solution for a past the fold). dF/da = -c.
inline SweepAResult sweep_nonexistence_a(const ProblemSpec& p, double lambda, const BranchConfig& user_cfg = {}) {
    if (lambda < 0.0) throw validation_error("sweep_nonexistence_a: lambda must be >= 0");
    BranchConfig cfg = user_cfg;
    cfg.param_min = 0.0;
    if (cfg.param_max <= 0.0) cfg.param_max = 64.0;

    std::optional<GridFunction> u0 = minimal_solution(p, lambda, cfg.solve);
    if (!u0) throw iteration_error("sweep_nonexistence_a: no converged solution at a = 0");

    const ParameterFamily fam = detail::a_shift_family(p, lambda);

    // The threshold location is not known in advance: when the window is
    // exhausted without meeting a fold, widen it and resume continuation
    // from the farthest point reached, up to a hard cap.
    const double window_cap = 1024.0 * std::max(cfg.param_max, 1.0);
    SweepAResult res{0.0, continue_family(fam, 0.0, *u0, +1, cfg)};
    while (!res.branch.fold && res.branch.terminated_by == BranchTermination::param_limit &&
           cfg.param_max < window_cap) {
        cfg.param_max = std::min(2.0 * cfg.param_max, window_cap);
        const BranchPoint& tail = res.branch.points.back();
        Branch more = continue_family(fam, tail.param, tail.solution, +1, cfg);
        for (std::size_t i = 1; i < more.points.size(); ++i) res.branch.points.push_back(std::move(more.points[i]));
        res.branch.fold = more.fold;
        res.branch.terminated_by = more.terminated_by;
    }
    if (!res.branch.fold)
        throw iteration_error(std::string("sweep_nonexistence_a: no fold found in a-window (terminated by ") +
                              to_string(res.branch.terminated_by) + ")");
    res.A1_estimate = res.branch.fold->param_estimate;
    return res;
}

struct SweepKResult {
    double k_bar = 0.0;
    Branch lower_branch;
    SolveReport first_at_half;
    SolveReport second_at_half;
    OrderedCertificate ordered_at_half;
};

/// Continuation in the factor k of the data family k*h^+ - h^- (positive
/// part of the given h scaled, negative part kept). Requires lambda past
/// the weighted eigenvalue nu1 and a nontrivial h^+. Produces the fold
/// location k_bar, the lower branch up to it, and — at k_bar/2 — a
/// certified ordered pair of solutions. dF/dk = -h^+.
inline SweepKResult sweep_k(const ProblemSpec& p, double lambda, const BranchConfig& user_cfg = {}) {
    const GridFunction hp = p.h_plus();
    const GridFunction hm = p.h_minus();
    if (hp.max_val() <= 0.0) throw validation_error("sweep_k: h must have a nontrivial positive part");
    const EigenPair nu = nu1(p, hm);
    if (!(lambda > nu.value))
        throw validation_error("sweep_k: lambda = " + format_double(lambda) +
                               " must exceed the weighted eigenvalue nu1 = " + format_double(nu.value));

    BranchConfig cfg = user_cfg;
    if (cfg.param_min <= 0.0) cfg.param_min = 1e-3;
    if (cfg.param_max <= cfg.param_min) cfg.param_max = 100.0;

    ParameterFamily fam;
    fam.problem_at = [p, hp, hm](double k) {
        return p.with_h(GridFunction(p.grid(), Eigen::VectorXd(k * hp.values() - hm.values())));
    };
    const double lam = lambda;
    fam.lambda_at = [lam](double) { return lam; };
    fam.dF_dparam = [hp](const ProblemSpec& pp, double, const GridFunction&) {
        return GridFunction(pp.grid(), Eigen::VectorXd(-hp.values()));
    };

    // Seed at the small-k end: the negative upper solution gives a start
    // below the minimal solution of that family member.
    const ProblemSpec p0 = fam.problem_at(cfg.param_min);
    std::vector<GridFunction> extras;
    if (std::optional<GridFunction> beta = construct_negative_upper_solution(p, lambda, cfg.param_min))
        extras.push_back(*beta);
    std::optional<GridFunction> u0;
    {
        const std::vector<SolveReport> reps =
            multistart_newton(p0, lambda, multistart_family(p0, lambda, 16, 7, extras), cfg.solve);
        double best_mean = std::numeric_limits<double>::infinity();
        for (const SolveReport& r : reps) {
            if (!r.converged || !detail::resolved_profile(r.solution)) continue;
            const double mean = integrate(r.solution);
            if (mean < best_mean) {
                best_mean = mean;
                u0 = r.solution;
            }
        }
    }
    if (!u0) throw iteration_error("sweep_k: no converged solution at the small-k end");

    Branch lower = continue_family(fam, cfg.param_min, *u0, +1, cfg);
    const double window_cap = 1024.0 * std::max(cfg.param_max, 1.0);
    while (!lower.fold && lower.terminated_by == BranchTermination::param_limit && cfg.param_max < window_cap) {
        cfg.param_max = std::min(2.0 * cfg.param_max, window_cap);
        const BranchPoint& tail = lower.points.back();
        Branch more = continue_family(fam, tail.param, tail.solution, +1, cfg);
        for (std::size_t i = 1; i < more.points.size(); ++i) lower.points.push_back(std::move(more.points[i]));
        lower.fold = more.fold;
        lower.terminated_by = more.terminated_by;
    }
    if (!lower.fold)
        throw iteration_error(std::string("sweep_k: no fold found in k-window (terminated by ") +
                              to_string(lower.terminated_by) + ")");
    const double k_bar = lower.fold->param_estimate;

    // Certified ordered pair at half the fold value, seeded from the
    // nearest branch point.
    const double k_half = 0.5 * k_bar;
    const ProblemSpec p_half = fam.problem_at(k_half);
    const BranchPoint* nearest = &lower.points.front();
    for (const BranchPoint& pt : lower.points)
        if (std::abs(pt.param - k_half) < std::abs(nearest->param - k_half)) nearest = &pt;
    SolveReport first = newton_direct(p_half, lambda, nearest->solution, cfg.solve);
    if (!first.converged) throw iteration_error("sweep_k: lower solution did not converge at k_bar/2");
    DeflationConfig dcfg;
    dcfg.solve = cfg.solve;
    SecondSolution second = find_second_solution(p_half, lambda, first.solution, dcfg);
    if (!second.report.converged || !second.ordering)
        throw iteration_error("sweep_k: no second solution found at k_bar/2");
    return SweepKResult{k_bar, std::move(lower), std::move(first), std::move(second.report),
                        std::move(*second.ordering)};
}

struct BlowupRow {
    double lambda = 0.0;
    double sup_norm_u2 = 0.0;
    double product = 0.0; ///< lambda * sup_norm_u2
    double min_val = 0.0;
};

struct BlowupTable {
    std::vector<BlowupRow> rows;
    std::vector<GridFunction> solutions; ///< one per row
    bool guard_tripped = false;
};

/// Track the large (second) branch along a decreasing lambda sequence and
/// record lambda * sup-norm per point. The seed at the largest lambda is
/// found by the second-solution search above the minimal solution;
/// subsequent points reuse the previous profile through a multiplicative
/// 1/lambda predictor with geometric substeps on failure. For constant mu
/// the branch is corrected in the transformed variable v = e^(mu*u) - 1:
/// the large branch carries a boundary layer that is logarithmic in u
/// (invisible to the direct grid operator) but smooth in v, and the
/// 1/lambda amplitude law in u becomes a stable power-law predictor in v.
/// Amplitude growth makes the residual floor scale like eps/h^2 * ||.||
/// in whichever formulation corrects, so acceptance tolerances are floored
/// accordingly. A guard trip (sup-norm past blowup_guard) ends the table
/// without an error.
inline BlowupTable blowup_diagnostic(const ProblemSpec& p, const std::vector<double>& lambdas,
                                     const BranchConfig& cfg = {}) {
    if (lambdas.empty()) throw validation_error("blowup_diagnostic: empty lambda sequence");
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
        if (!(lambdas[i] > 0.0)) throw validation_error("blowup_diagnostic: lambdas must be positive");
        if (i > 0 && !(lambdas[i] < lambdas[i - 1]))
            throw validation_error("blowup_diagnostic: lambda sequence must be strictly decreasing");
    }

    // Residual floor scale: eps * ||Lap_h|| picks up the h^-2 growth.
    const double lap_norm = laplacian(p.grid()).matrix.diagonal().maxCoeff();
    const auto floored = [&](double sup) {
        SolveOptions o = cfg.solve;
        o.tol = std::max(o.tol, 32.0 * std::numeric_limits<double>::epsilon() * lap_norm * (1.0 + sup));
        return o;
    };

    BlowupTable table;
    const double lam0 = lambdas.front();
    std::optional<GridFunction> u1 = minimal_solution(p, lam0, cfg.solve);
    if (!u1) throw iteration_error("blowup_diagnostic: no converged solution at the largest lambda");
    DeflationConfig dcfg;
    dcfg.solve = cfg.solve;
    SecondSolution seed = find_second_solution(p, lam0, *u1, dcfg);
    if (!seed.report.converged) throw iteration_error("blowup_diagnostic: no second solution at the largest lambda");

    GridFunction u = seed.report.solution;
    double lam = lam0;
    const auto push_row = [&](double l, const GridFunction& sol) {
        BlowupRow row;
        row.lambda = l;
        row.sup_norm_u2 = sol.sup_norm();
        row.product = l * row.sup_norm_u2;
        row.min_val = sol.min_val();
        table.rows.push_back(row);
        table.solutions.push_back(sol);
    };
    push_row(lam, u);
    if (u.sup_norm() > cfg.blowup_guard) {
        table.guard_tripped = true;
        return table;
    }

    const auto advance = [&](double attempt) -> bool {
        const GridFunction pred = (lam / attempt) * u;
        try {
            if (p.mu_is_constant()) {
                const double mu = p.mu_value();
                const GridFunction v0 = cole_hopf_forward(pred, mu);
                if (!v0.values().allFinite())
                    throw iteration_error("blowup_diagnostic: branch amplitude exceeds the representable "
                                          "range of the transformed variable at lambda = " +
                                          format_double(attempt));
                SolveOptions o = cfg.solve;
                o.tol = std::max(o.tol,
                                 32.0 * std::numeric_limits<double>::epsilon() * lap_norm * (1.0 + v0.sup_norm()));
                o.blowup_guard = std::max(o.blowup_guard, 1e6 * (1.0 + v0.sup_norm()));
                SolveReport rep = newton_transformed(p, attempt, v0, o);
                if (rep.converged && detail::resolved_profile(cole_hopf_forward(rep.solution, mu))) {
                    u = std::move(rep.solution);
                    lam = attempt;
                    return true;
                }
            } else {
                SolveReport rep = newton_direct(p, attempt, pred, floored(pred.sup_norm()));
                if (rep.converged && detail::resolved_profile(rep.solution)) {
                    u = std::move(rep.solution);
                    lam = attempt;
                    return true;
                }
            }
        } catch (const solver_error&) {
        } catch (const transform_domain_error&) {
        }
        return false;
    };

    for (std::size_t i = 1; i < lambdas.size(); ++i) {
        const double target = lambdas[i];
        double attempt = target;
        int tries = 0;
        while (lam > target * (1.0 + 1e-12)) {
            if (advance(attempt)) {
                attempt = target;
                continue;
            }
            attempt = std::sqrt(lam * attempt); // geometric substep toward the current point
            if (++tries > 60 || attempt >= lam * (1.0 - 1e-12))
                throw iteration_error("blowup_diagnostic: branch tracking stalled between lambda = " +
                                      format_double(lam) + " and " + format_double(target));
        }
        push_row(lam, u);
        if (u.sup_norm() > cfg.blowup_guard) {
            table.guard_tripped = true;
            return table;
        }
    }
    return table;
}

} // namespace qge
