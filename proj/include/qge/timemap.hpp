/// @file timemap.hpp
/// @brief One-dimensional autonomous phase-plane analysis for the
///        transformed equation -v'' = g(v), v(0) = v(T) = 0, with
///        g(v) = lambda*c*(1+v)*ln(1+v) + mu*h*(1+v) (all coefficients
///        constant): potential/energy evaluation, equilibria, turning-point
///        time maps, the extremal transit times T0 (positive forcing) and
///        T1 (negative forcing), fixed-step shooting, and solution counting
///        by slope sweeps.
///
/// Solutions of the boundary-value problem correspond to initial slopes s
/// whose orbit through (v, v') = (0, s) returns to v = 0 after exactly the
/// interval length T; the machinery here locates and classifies those
/// slopes and computes the transit-time integrals they satisfy.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qge/errors.hpp"
#include "qge/grid.hpp"
#include "qge/quadrature.hpp"

namespace qge {

/// Constant-coefficient phase-plane problem data. The ODE consumes the
/// product lambda*c; both factors are stored so reports can show them
/// separately.
struct PhaseParams {
    double lambda = 1.0; ///< reaction multiplier, >= 0
    double mu = 1.0;     ///< gradient-square coefficient, > 0
    double h = 0.0;      ///< constant forcing (any sign)
    double c = 1.0;      ///< reaction weight, > 0
    double T = 1.0;      ///< interval length, > 0
};

namespace detail {

inline void phase_validate(const PhaseParams& p, const std::string& who) {
    if (!(p.lambda >= 0.0) || !std::isfinite(p.lambda))
        throw validation_error(who + ": lambda must be finite and >= 0, got " + format_double(p.lambda));
    if (!(p.mu > 0.0) || !std::isfinite(p.mu))
        throw validation_error(who + ": mu must be finite and > 0, got " + format_double(p.mu));
    if (!(p.c > 0.0) || !std::isfinite(p.c))
        throw validation_error(who + ": c must be finite and > 0, got " + format_double(p.c));
    if (!(p.T > 0.0) || !std::isfinite(p.T))
        throw validation_error(who + ": T must be finite and > 0, got " + format_double(p.T));
    if (!std::isfinite(p.h)) throw validation_error(who + ": h must be finite");
}

/// Coefficient scale for relative guards.
inline double phase_scale(const PhaseParams& p) {
    return 1.0 + std::abs(p.lambda * p.c) + std::abs(p.mu * p.h);
}

/// Forcing extended continuously past the domain edge: the reaction part
/// op*ln(op) -> 0 as op -> 0+, so dropping it for op <= 0 keeps integrator
/// stage probes finite without changing any admissible evaluation.
inline double phase_g_ext(double lc, double mh, double v) {
    const double op = 1.0 + v;
    if (op <= 0.0) return mh * op;
    return op * (lc * std::log(op) + mh);
}

} // namespace detail

/// Forcing g(v) = lambda*c*(1+v)*ln(1+v) + mu*h*(1+v).
inline double g_eval(const PhaseParams& p, double v) {
    detail::phase_validate(p, "g_eval");
    if (!(v > -1.0))
        throw transform_domain_error("g_eval: v = " + format_double(v) +
                                     " is outside the admissible range v > -1");
    const double op = 1.0 + v;
    return op * (p.lambda * p.c * std::log(op) + p.mu * p.h);
}

/// Potential G(v) = integral of g from 0 to v, in closed form:
/// G(v) = lambda*c*[(1+v)^2(2 ln(1+v) - 1) + 1]/4 + mu*h*(v^2/2 + v).
/// The reaction bracket is evaluated as 2*ln(1+v)*(1+v)^2 - v*(2+v), the
/// algebraically identical form without the "+1" cancellation: near v = 0
/// the textbook form carries absolute roundoff ~eps while the value is
/// ~v^2/2, which would wreck the E - G differences the time maps divide by.
inline double G_eval(const PhaseParams& p, double v) {
    detail::phase_validate(p, "G_eval");
    if (!(v > -1.0))
        throw transform_domain_error("G_eval: v = " + format_double(v) +
                                     " is outside the admissible range v > -1");
    const double op = 1.0 + v;
    const double lv = std::log1p(v);
    return p.lambda * p.c * (2.0 * lv * op * op - v * (2.0 + v)) / 4.0 + p.mu * p.h * (0.5 * v + 1.0) * v;
}

/// An interior rest point of the phase flow.
struct Equilibrium {
    double v = 0.0;
    bool center = false; ///< g'(v) > 0: surrounded by closed orbits
};

/// All roots of g on (-1, v_max_search], located by a sign scan in
/// y = ln(1+v) (so roots far into either tail are not missed) refined by
/// bisection; classified center/saddle by the sign of g'.
inline std::vector<Equilibrium> equilibria(const PhaseParams& p, double v_max_search = 1e12) {
    detail::phase_validate(p, "equilibria");
    if (!(v_max_search > -1.0) || !std::isfinite(v_max_search))
        throw validation_error("equilibria: v_max_search must be finite and > -1");
    std::vector<Equilibrium> roots;
    const double lc = p.lambda * p.c;
    const double mh = p.mu * p.h;
    // g(v) = e^y * (lc*y + mh) with y = ln(1+v): the exponential never
    // vanishes on the open domain, so roots are those of the affine factor.
    if (lc == 0.0 && mh == 0.0) return roots; // identically zero: no isolated roots
    const auto factor = [&](double y) { return lc * y + mh; };
    const double y_lo = -40.0;
    const double y_hi = std::log1p(v_max_search);
    const int m = 4096;
    double yp = y_lo;
    double fp = factor(yp);
    for (int i = 1; i <= m; ++i) {
        const double yc = y_lo + (y_hi - y_lo) * i / m;
        const double fc = factor(yc);
        const bool crossing = (fp < 0.0) != (fc < 0.0) || fp == 0.0;
        if (crossing) {
            double a = yp, b = yc, fa = fp;
            for (int it = 0; it < 200 && std::abs(b - a) > 1e-15; ++it) {
                const double mm = 0.5 * (a + b);
                const double fm = factor(mm);
                if ((fa < 0.0) == (fm < 0.0) && fm != 0.0) {
                    a = mm;
                    fa = fm;
                } else {
                    b = mm;
                }
            }
            const double y_root = 0.5 * (a + b);
            Equilibrium e;
            e.v = std::expm1(y_root);
            // g'(v) = lc*(ln(1+v) + 1) + mh; at the root lc*y = -mh, so
            // g'(root) = lc: positive reaction weight makes it a center.
            e.center = lc > 0.0;
            if (roots.empty() || std::abs(e.v - roots.back().v) > 1e-12 * (1.0 + std::abs(e.v)))
                roots.push_back(e);
        }
        yp = yc;
        fp = fc;
    }
    return roots;
}

/// Phase-portrait regime of the constant-coefficient problem.
enum class PhaseCase {
    case1,  ///< h > 0 with lambda*c < 2*mu*h: no negative turning, positive domes only
    case2,  ///< h > 0 with lambda*c > 2*mu*h: closed orbits reach the negative side
    case3,  ///< h < 0: positive interior equilibrium, grazing orbit threshold T1
    h_zero, ///< h = 0: v = 0 is an equilibrium; trivial solution always present
};

inline const char* to_string(PhaseCase k) {
    switch (k) {
        case PhaseCase::case1: return "case1";
        case PhaseCase::case2: return "case2";
        case PhaseCase::case3: return "case3";
        default: return "h_zero";
    }
}

/// Classify by exact inequality tests on (lambda*c, mu*h). The dividing
/// line lambda*c = 2*mu*h (where the boundary energy G(-1) vanishes) is
/// refused rather than claimed either way.
inline PhaseCase case_classify(const PhaseParams& p) {
    detail::phase_validate(p, "case_classify");
    const double scale = detail::phase_scale(p);
    if (std::abs(p.mu * p.h) <= 1e-12 * scale) return PhaseCase::h_zero;
    if (p.h < 0.0) return PhaseCase::case3;
    const double lc = p.lambda * p.c;
    const double mh2 = 2.0 * p.mu * p.h;
    if (std::abs(lc - mh2) <= 1e-12 * scale)
        throw classification_error(
            "case_classify: lambda*c = 2*mu*h sits on the boundary between the positive-forcing regimes; "
            "no case claim is made there");
    return lc < mh2 ? PhaseCase::case1 : PhaseCase::case2;
}

/// Transit time of the positive arc: the orbit leaving (v, v') = (0, a)
/// rises to its turning point v_max (where G(v_max) = a^2/2) and returns to
/// v = 0 with slope -a after
///     T_plus(a) = 2 * Int_0^{v_max} dv / sqrt(2(E - G(v))),  E = a^2/2.
/// The substitution v = v_max*sin^2(pi t/2) is quadratic at both endpoints:
/// at the turning point it absorbs the inverse-square-root singularity
/// (equivalently to v = v_max*(1 - w^2)), and at v = 0 it spreads the
/// near-singular launch layer of slow orbits (whose speed sqrt(2E) -> 0 as
/// a -> 0 against a grazing level) wide enough for adaptive quadrature to
/// resolve. Relative accuracy ~1e-9.
inline double time_map_positive(const PhaseParams& p, double a) {
    detail::phase_validate(p, "time_map_positive");
    if (!(a > 0.0) || !std::isfinite(a))
        throw validation_error("time_map_positive: the initial slope a must be finite and > 0");
    const double E = 0.5 * a * a;
    if (!std::isfinite(E)) throw validation_error("time_map_positive: a^2/2 overflows");

    // Bracket the turning point in y = ln(1+v): G is below E on the whole
    // arc (including any negative dip), so the first y with G >= E brackets
    // the unique upward crossing.
    double y_lo = 0.0, y_hi = 0.0;
    {
        bool found = false;
        double y = 0.0;
        double step = 0.0625;
        while (y < 709.0) {
            const double yn = y + step;
            const double Gn = G_eval(p, std::expm1(std::min(yn, 709.0)));
            if (Gn >= E) {
                y_lo = y;
                y_hi = yn;
                found = true;
                break;
            }
            y = yn;
            step *= 1.1;
        }
        if (!found)
            throw unbounded_orbit_error("time_map_positive: the level E = a^2/2 = " + format_double(E) +
                                        " admits no positive turning point (orbit escapes)");
    }
    for (int it = 0; it < 200 && (y_hi - y_lo) > 1e-15 * std::max(y_hi, 1e-30); ++it) {
        const double ym = 0.5 * (y_lo + y_hi);
        if (G_eval(p, std::expm1(ym)) >= E)
            y_hi = ym;
        else
            y_lo = ym;
    }
    // Newton-polish the turning point: the substituted integrand is smooth
    // only if E - G vanishes to roundoff exactly at w = 0, otherwise the
    // leftover offset shows up as a kink the adaptive rule cannot resolve.
    double vm = std::expm1(0.5 * (y_lo + y_hi));
    for (int it = 0; it < 12; ++it) {
        const double gv = g_eval(p, vm);
        if (gv == 0.0) break;
        const double dv = (E - G_eval(p, vm)) / gv;
        const double nvm = vm + dv;
        if (!(nvm > -1.0) || !std::isfinite(nvm)) break;
        vm = nvm;
        if (std::abs(dv) <= 1e-15 * std::abs(vm)) break;
    }
    const double v_max = vm;
    const double g_top = g_eval(p, v_max);
    if (std::abs(g_top) < 1e-12 * detail::phase_scale(p))
        throw degenerate_turning_error("time_map_positive: forcing vanishes at the turning point v = " +
                                       format_double(v_max) +
                                       " (non-quadratic turning; the transit time diverges)");

    constexpr double half_pi = 1.5707963267948966;
    // Limit of the substituted integrand at the turning end, per unit sin.
    const double at_turn = half_pi * 2.0 * v_max / std::sqrt(2.0 * g_top * v_max);
    const auto integrand = [&](double t) {
        const double sn = std::sin(half_pi * t);
        const double cs = std::cos(half_pi * t);
        const double v = v_max * sn * sn;
        const double dE = E - G_eval(p, v);
        if (dE <= 0.0) return at_turn * sn; // roundoff graze at the turning end
        return half_pi * 2.0 * v_max * sn * cs / std::sqrt(2.0 * dE);
    };
    return 2.0 * integrate_adaptive(integrand, 0.0, 1.0, 1e-9, 0.0);
}

/// Log-spaced table of positive-arc transit times with its supremum.
struct TimeMapTable {
    std::vector<double> a_values; ///< log-spaced initial slopes
    std::vector<double> T_plus;   ///< transit times, same length
    std::optional<double> T0;     ///< sup of T_plus over the table
};

inline TimeMapTable time_map_table(const PhaseParams& p, double a_lo = 1e-4, double a_hi = 1e4,
                                   int n = 161) {
    detail::phase_validate(p, "time_map_table");
    if (!(a_lo > 0.0) || !(a_hi > a_lo)) throw validation_error("time_map_table: need 0 < a_lo < a_hi");
    if (n < 2) throw validation_error("time_map_table: need at least two samples");
    TimeMapTable t;
    t.a_values.reserve(n);
    t.T_plus.reserve(n);
    const double span = std::log(a_hi / a_lo);
    double best = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
        const double a = a_lo * std::exp(span * i / (n - 1));
        const double tp = time_map_positive(p, a);
        t.a_values.push_back(a);
        t.T_plus.push_back(tp);
        best = std::max(best, tp);
    }
    t.T0 = best;
    return t;
}

/// The extremal transit time T0 = max_a T_plus(a) in the small-reaction
/// positive-forcing regime: for T < T0 two positive arcs fit the interval,
/// for T > T0 none does. Log-grid scan over a in [1e-4, 1e4] refined by
/// golden-section search around the discrete argmax.
inline double find_T0(const PhaseParams& p) {
    if (case_classify(p) != PhaseCase::case1)
        throw classification_error(
            "find_T0: defined in the positive-forcing small-reaction regime (h > 0, lambda*c < 2*mu*h)");
    const TimeMapTable tab = time_map_table(p);
    const int n = int(tab.a_values.size());
    int k = 0;
    for (int i = 1; i < n; ++i)
        if (tab.T_plus[i] > tab.T_plus[k]) k = i;
    double lo = std::log(tab.a_values[std::max(0, k - 1)]);
    double hi = std::log(tab.a_values[std::min(n - 1, k + 1)]);
    const auto f = [&](double y) { return time_map_positive(p, std::exp(y)); };
    // Golden-section maximization on the log axis.
    const double gr = 0.6180339887498949;
    double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
    double f1 = f(x1), f2 = f(x2);
    double best = std::max(tab.T_plus[k], std::max(f1, f2));
    while (hi - lo > 1e-5) {
        if (f1 < f2) {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + gr * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - gr * (hi - lo);
            f1 = f(x1);
        }
        best = std::max(best, std::max(f1, f2));
    }
    return best;
}

/// Sign pattern of a shot trajectory.
enum class ProfileSign { positive, negative, sign_changing };

inline const char* to_string(ProfileSign s) {
    switch (s) {
        case ProfileSign::positive: return "positive";
        case ProfileSign::negative: return "negative";
        default: return "sign_changing";
    }
}

/// Outcome of one shot. When admissible is false (the trajectory left
/// v > -1 or exceeded |v| = 1e8) the classification and turn count refer to
/// the surviving prefix and end_value holds the offending value.
struct ShootResult {
    double s = 0.0;             ///< initial slope v'(0)
    double end_value = 0.0;     ///< v after time T (or at the failure point)
    bool admissible = true;     ///< stayed in v > -1 with |v| <= 1e8
    ProfileSign classification = ProfileSign::positive;
    int turns = 0;              ///< full revolutions around the interior center
    double v_min = 0.0;         ///< trajectory minimum over [0, T]
    double v_max = 0.0;         ///< trajectory maximum over [0, T]
    double energy_drift = 0.0;  ///< max relative deviation of v'^2/2 + G(v)
};

/// Fixed-step fourth-order Runge-Kutta shot of v'' = -g(v) from
/// (v, v')(0) = (0, s) over time T. Records admissibility, the end value,
/// the sign classification of the trajectory, the winding count around the
/// interior center, and the relative energy drift (a refinement check:
/// drift shrinks like steps^-4).
inline ShootResult shoot(const PhaseParams& p, double s, int steps = 10000) {
    detail::phase_validate(p, "shoot");
    if (!std::isfinite(s)) throw validation_error("shoot: initial slope must be finite");
    if (steps < 16) throw validation_error("shoot: need at least 16 steps");
    const double lc = p.lambda * p.c;
    const double mh = p.mu * p.h;

    // Turn counting winds around the interior rest point; with no reaction
    // term the linear problem's rest point sits at the domain edge v = -1.
    double cv = 0.0;
    bool have_center = false;
    if (lc > 0.0) {
        cv = std::expm1(-mh / lc);
        have_center = true;
    } else if (mh > 0.0) {
        cv = -1.0;
        have_center = true;
    }

    const double dt = p.T / steps;
    double v = 0.0, w = s;
    const double E0 = 0.5 * s * s;
    double e_ref = std::max(std::abs(E0), 1e-300);
    double drift = 0.0;
    double vmin = 0.0, vmax = 0.0;
    double theta = 0.0;
    double pv = -cv, pw = s; // previous phase point relative to the center

    ShootResult out;
    out.s = s;
    const auto g = [&](double x) { return detail::phase_g_ext(lc, mh, x); };
    for (int i = 0; i < steps; ++i) {
        if (!(v > -1.0) || !std::isfinite(v) || std::abs(v) > 1e8) {
            out.admissible = false;
            break;
        }
        const double k1v = w, k1w = -g(v);
        const double k2v = w + 0.5 * dt * k1w, k2w = -g(v + 0.5 * dt * k1v);
        const double k3v = w + 0.5 * dt * k2w, k3w = -g(v + 0.5 * dt * k2v);
        const double k4v = w + dt * k3w, k4w = -g(v + dt * k3v);
        v += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        w += dt / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w);
        vmin = std::min(vmin, v);
        vmax = std::max(vmax, v);
        if (v > -1.0 && std::isfinite(v) && std::isfinite(w)) {
            const double Gv = G_eval(p, v);
            const double E = 0.5 * w * w + Gv;
            e_ref = std::max(e_ref, std::max(std::abs(Gv), 0.5 * w * w));
            drift = std::max(drift, std::abs(E - E0) / e_ref);
            if (have_center) {
                const double nv = v - cv, nw = w;
                theta += std::atan2(pv * nw - pw * nv, pv * nv + pw * nw);
                pv = nv;
                pw = nw;
            }
        }
    }
    out.end_value = v;
    out.v_min = vmin;
    out.v_max = vmax;
    out.energy_drift = drift;
    out.turns = have_center ? int(std::floor(std::abs(theta) / (2.0 * 3.14159265358979323846) + 1e-9)) : 0;
    const double tol = 1e-9 * std::max({1.0, vmax, -vmin});
    if (vmin >= -tol)
        out.classification = ProfileSign::positive;
    else if (vmax <= tol)
        out.classification = ProfileSign::negative;
    else
        out.classification = ProfileSign::sign_changing;
    return out;
}

/// Node samples of the shot trajectory on a matching 1D grid (node k sits
/// at time (k+1)*spacing from the left endpoint). The step count is chosen
/// node-commensurate. Raises unbounded_orbit_error if the shot dies.
inline GridFunction shoot_profile(const PhaseParams& p, double s, const Grid& g, int substeps = 64) {
    detail::phase_validate(p, "shoot_profile");
    if (g.dim() != 1) throw validation_error("shoot_profile: needs a 1D grid");
    if (substeps < 4) throw validation_error("shoot_profile: need at least 4 substeps per cell");
    const double L = std::get<Interval>(g.domain()).length;
    if (std::abs(L - p.T) > 1e-12 * std::max(1.0, p.T))
        throw validation_error("shoot_profile: grid length " + format_double(L) +
                               " does not match the interval length " + format_double(p.T));
    const int n = g.n();
    const int steps = substeps * (n + 1);
    const double lc = p.lambda * p.c;
    const double mh = p.mu * p.h;
    const double dt = p.T / steps;
    const auto gg = [&](double x) { return detail::phase_g_ext(lc, mh, x); };
    Eigen::VectorXd vals(n);
    double v = 0.0, w = s;
    int next = 0;
    for (int i = 0; i < steps; ++i) {
        if (!(v > -1.0) || !std::isfinite(v) || std::abs(v) > 1e8)
            throw unbounded_orbit_error("shoot_profile: trajectory left the admissible region at step " +
                                        std::to_string(i));
        const double k1v = w, k1w = -gg(v);
        const double k2v = w + 0.5 * dt * k1w, k2w = -gg(v + 0.5 * dt * k1v);
        const double k3v = w + 0.5 * dt * k2w, k3w = -gg(v + 0.5 * dt * k2v);
        const double k4v = w + dt * k3w, k4w = -gg(v + dt * k3v);
        v += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        w += dt / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w);
        if ((i + 1) % substeps == 0 && next < n) vals[next++] = v;
    }
    return GridFunction(g, vals);
}

/// Sweep the initial slope over [s_lo, s_hi] with n_samples uniform shots,
/// bracket sign changes of the end value, refine each bracket by bisection,
/// and keep admissible roots with |end_value| <= 1e-10. Results are sorted
/// by slope.
inline std::vector<ShootResult> count_solutions(const PhaseParams& p, double s_lo, double s_hi,
                                                int n_samples) {
    detail::phase_validate(p, "count_solutions");
    if (!(s_lo < s_hi)) throw validation_error("count_solutions: need s_lo < s_hi");
    if (n_samples < 2) throw validation_error("count_solutions: need at least two samples");
    std::vector<ShootResult> roots;
    ShootResult prev = shoot(p, s_lo);
    for (int i = 1; i < n_samples; ++i) {
        const double s = s_lo + (s_hi - s_lo) * i / (n_samples - 1);
        ShootResult cur = shoot(p, s);
        if ((prev.end_value < 0.0) != (cur.end_value < 0.0)) {
            double a = prev.s, b = cur.s;
            const bool a_neg = prev.end_value < 0.0;
            for (int it = 0; it < 120; ++it) {
                const double m = 0.5 * (a + b);
                const ShootResult om = shoot(p, m);
                if ((om.end_value < 0.0) == a_neg)
                    a = m;
                else
                    b = m;
                if (std::abs(b - a) <= 1e-18 * std::max(1.0, std::abs(m))) break;
            }
            ShootResult hit = shoot(p, 0.5 * (a + b));
            if (hit.admissible && std::abs(hit.end_value) <= 1e-10) roots.push_back(std::move(hit));
        }
        prev = std::move(cur);
    }
    return roots;
}

/// The grazing-orbit transit time in the negative-forcing regime: the
/// closed energy-zero orbit passes through (v, v') = (0, 0), rises to the
/// positive potential zero v0 (above the interior center), and closes after
///     T1 = 2 * Int_0^{v0} dv / sqrt(-2 G(v)).
/// Positive arcs exist exactly for T < T1; past it the companion solution
/// turns sign-changing. Both inverse-square-root endpoints are absorbed by
/// quadratic substitutions split at the center.
inline double find_T1(const PhaseParams& p) {
    detail::phase_validate(p, "find_T1");
    if (!(p.h < 0.0))
        throw classification_error("find_T1: defined for negative forcing (h < 0)");
    const double lc = p.lambda * p.c;
    const double mh = p.mu * p.h;
    if (!(lc > 0.0))
        throw classification_error(
            "find_T1: requires lambda*c > 0; without the reaction term there is no interior center and no "
            "grazing orbit");
    const double v_star = std::expm1(-mh / lc); // interior center, > 0 here

    // v0: the zero of G above the center (G dips negative on (0, v0)).
    double y_lo = std::log1p(v_star), y_hi = y_lo;
    {
        bool found = false;
        double step = 0.0625;
        while (y_hi < 709.0) {
            const double yn = y_hi + step;
            if (G_eval(p, std::expm1(std::min(yn, 709.0))) >= 0.0) {
                y_lo = y_hi;
                y_hi = yn;
                found = true;
                break;
            }
            y_hi = yn;
            step *= 1.1;
        }
        if (!found)
            throw classification_error("find_T1: the potential never returns to zero above the center");
    }
    for (int it = 0; it < 200 && (y_hi - y_lo) > 1e-15 * std::max(y_hi, 1e-30); ++it) {
        const double ym = 0.5 * (y_lo + y_hi);
        if (G_eval(p, std::expm1(ym)) >= 0.0)
            y_hi = ym;
        else
            y_lo = ym;
    }
    // Newton-polish (root of G, derivative g) so the quadratic substitution
    // at the grazing turning point sees a clean double root.
    double vr = std::expm1(0.5 * (y_lo + y_hi));
    for (int it = 0; it < 12; ++it) {
        const double gv = g_eval(p, vr);
        if (gv == 0.0) break;
        const double dv = -G_eval(p, vr) / gv;
        const double nvr = vr + dv;
        if (!(nvr > -1.0) || !std::isfinite(nvr)) break;
        vr = nvr;
        if (std::abs(dv) <= 1e-15 * std::abs(vr)) break;
    }
    const double v0 = vr;
    const double g_top = g_eval(p, v0);
    if (std::abs(g_top) < 1e-12 * detail::phase_scale(p))
        throw degenerate_turning_error("find_T1: forcing vanishes at the grazing turning point v = " +
                                       format_double(v0) + " (transit time diverges)");

    // Left piece [0, v_star], substitution v = t^2 (singularity ~ 1/sqrt(v)
    // at the corner since G ~ mu*h*v there); right piece [v_star, v0],
    // substitution v = v0 - t^2 (quadratic turning).
    const double left_limit = std::sqrt(2.0 / std::abs(mh));
    const auto left = [&](double t) {
        const double mG = -G_eval(p, t * t);
        if (mG <= 0.0) return left_limit;
        return 2.0 * t / std::sqrt(2.0 * mG);
    };
    const double right_limit = std::sqrt(2.0 / g_top);
    const auto right = [&](double t) {
        const double mG = -G_eval(p, v0 - t * t);
        if (mG <= 0.0) return right_limit;
        return 2.0 * t / std::sqrt(2.0 * mG);
    };
    const double t_left = std::sqrt(v_star);
    const double t_right = std::sqrt(v0 - v_star);
    return 2.0 * (integrate_adaptive(left, 0.0, t_left, 1e-9, 0.0) +
                  integrate_adaptive(right, 0.0, t_right, 1e-9, 0.0));
}

} // namespace qge
