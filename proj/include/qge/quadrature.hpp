/// @file quadrature.hpp
/// @brief Adaptive Gauss-Kronrod 15(7) quadrature for smooth 1D integrands.

#pragma once

#include <cmath>
#include <functional>

#include "qge/errors.hpp"

namespace qge {

namespace detail {

// Kronrod-15 abscissae on [0,1] side (symmetric) with embedded Gauss-7.
inline constexpr double gk_x[8] = {
    0.9914553711208126, 0.9491079123427585, 0.8648644233597691, 0.7415311855993944,
    0.5860872354676911, 0.4058451513773972, 0.2077849550078985, 0.0};
inline constexpr double gk_wk[8] = {
    0.0229353220105292, 0.0630920926299785, 0.1047900103222502, 0.1406532597155259,
    0.1690047266392679, 0.1903505780647854, 0.2044329400752989, 0.2094821410847278};
// Gauss-7 weights attach to the odd-index Kronrod nodes (and the center).
inline constexpr double gk_wg[4] = {
    0.1294849661688697, 0.2797053914892767, 0.3818300505051189, 0.4179591836734694};

struct GKResult {
    double kronrod;
    double err;
};

inline GKResult gk15(const std::function<double(double)>& f, double a, double b) {
    const double c = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    const double fc = f(c);
    double kron = gk_wk[7] * fc;
    double gauss = gk_wg[3] * fc;
    for (int i = 0; i < 7; ++i) {
        const double dx = half * gk_x[i];
        const double fsum = f(c - dx) + f(c + dx);
        kron += gk_wk[i] * fsum;
        if (i % 2 == 1) gauss += gk_wg[i / 2] * fsum;
    }
    kron *= half;
    gauss *= half;
    return {kron, std::abs(kron - gauss)};
}

inline double gk_adaptive(const std::function<double(double)>& f, double a, double b, double tol, int depth,
                          long& evals) {
    evals += 15;
    if (evals > 40'000'000) throw iteration_error("integrate_adaptive: evaluation budget exhausted");
    const GKResult r = gk15(f, a, b);
    if (r.err <= tol || depth >= 60) return r.kronrod;
    const double c = 0.5 * (a + b);
    return gk_adaptive(f, a, c, 0.5 * tol, depth + 1, evals) + gk_adaptive(f, c, b, 0.5 * tol, depth + 1, evals);
}

} // namespace detail

/// Adaptive quadrature of f over [a,b] to max(atol, rtol*|I|) accuracy.
inline double integrate_adaptive(const std::function<double(double)>& f, double a, double b, double rtol = 1e-10,
                                 double atol = 0.0) {
    long evals = 0;
    const detail::GKResult first = detail::gk15(f, a, b);
    const double tol = std::max(atol, rtol * std::abs(first.kronrod));
    if (first.err <= tol) return first.kronrod;
    return detail::gk_adaptive(f, a, b, std::max(tol, 1e-300), 0, evals);
}

} // namespace qge
