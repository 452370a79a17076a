/// @file transform.hpp
/// @brief Exponential change of variables linking the gradient-quadratic
///        problem to a semilinear one, and the associated nonlinearities.
///
/// For constant mu > 0 the substitution v = exp(mu*u) - 1 removes the
/// |grad u|^2 term: u solves  -Lap u = lambda*c*u + mu*|grad u|^2 + h  iff
/// v solves  -Lap v = lambda*c*(1+v)*ln(1+v) + mu*h*v + mu*h.  The scaled
/// variants w = (exp(mu_i*u) - 1)/mu_i serve comparison arguments with
/// nonconstant mu pinched between mu_1 and mu_2.

#pragma once

#include <cmath>

#include "qge/errors.hpp"
#include "qge/grid.hpp"

namespace qge {

/// v = exp(mu*u) - 1, computed nodewise via expm1.
inline GridFunction cole_hopf_forward(const GridFunction& u, double mu) {
    if (!(mu > 0.0)) throw validation_error("cole_hopf_forward: mu must be positive");
    return u.map([mu](double s) { return std::expm1(mu * s); });
}

/// u = ln(1+v)/mu; requires v > -1 at every node.
inline GridFunction cole_hopf_inverse(const GridFunction& v, double mu) {
    if (!(mu > 0.0)) throw validation_error("cole_hopf_inverse: mu must be positive");
    if (v.min_val() <= -1.0)
        throw transform_domain_error("cole_hopf_inverse: value " + format_double(v.min_val()) +
                                     " is outside the admissible range v > -1");
    return v.map([mu](double s) { return std::log1p(s) / mu; });
}

/// Scaled forward transform w = (exp(mu_i*u) - 1)/mu_i.
inline GridFunction scaled_forward(const GridFunction& u, double mu_i) {
    if (!(mu_i > 0.0)) throw validation_error("scaled_forward: mu_i must be positive");
    return u.map([mu_i](double s) { return std::expm1(mu_i * s) / mu_i; });
}

/// Scaled inverse g_i(s) = ln(1 + mu_i*s)/mu_i; requires 1 + mu_i*s > 0.
inline GridFunction scaled_inverse(const GridFunction& w, double mu_i) {
    if (!(mu_i > 0.0)) throw validation_error("scaled_inverse: mu_i must be positive");
    if (1.0 + mu_i * w.min_val() <= 0.0)
        throw transform_domain_error("scaled_inverse: value " + format_double(w.min_val()) +
                                     " is outside the admissible range 1 + mu_i*s > 0");
    return w.map([mu_i](double s) { return std::log1p(mu_i * s) / mu_i; });
}

/// Odd superlinear nonlinearity m(s) = (1/mu)*(1+mu*s)*ln(1+mu*s) for s >= 0,
/// extended by odd reflection to s < 0 (needs 1 - mu*s > 0 there, which holds
/// automatically). C^1 at 0 with m'(0) = 1.
inline double m_nonlinearity(double s, double mu_bar) {
    if (!(mu_bar > 0.0)) throw validation_error("m_nonlinearity: mu must be positive");
    if (s >= 0.0) {
        if (1.0 + mu_bar * s <= 0.0) throw transform_domain_error("m_nonlinearity: argument out of range");
        return (1.0 + mu_bar * s) * std::log1p(mu_bar * s) / mu_bar;
    }
    return -(1.0 - mu_bar * s) * std::log1p(-mu_bar * s) / mu_bar;
}

/// Right-hand side f(v) = lambda*c*(1+v)*ln(1+v) + mu*h*v + mu*h of the
/// transformed equation, together with its nodewise derivative
/// f'(v) = lambda*c*(ln(1+v)+1) + mu*h.
struct SemilinearRhs {
    GridFunction f;
    GridFunction fprime;
};

inline SemilinearRhs semilinear_eval(const GridFunction& c, const GridFunction& h, double mu, double lambda,
                                     const GridFunction& v) {
    c.check_same_grid(h);
    c.check_same_grid(v);
    if (!(mu > 0.0)) throw validation_error("semilinear_eval: mu must be positive");
    if (v.min_val() <= -1.0)
        throw transform_domain_error("semilinear_eval: value " + format_double(v.min_val()) +
                                     " is outside the admissible range v > -1");
    GridFunction f(v.grid());
    GridFunction fp(v.grid());
    for (Eigen::Index k = 0; k < v.size(); ++k) {
        const double lg = std::log1p(v[k]);
        f[k] = lambda * c[k] * (1.0 + v[k]) * lg + mu * h[k] * v[k] + mu * h[k];
        fp[k] = lambda * c[k] * (lg + 1.0) + mu * h[k];
    }
    return SemilinearRhs{std::move(f), std::move(fp)};
}

} // namespace qge
