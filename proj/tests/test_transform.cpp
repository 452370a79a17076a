// Exponential substitutions, the odd superlinear envelope, and the
// semilinear right-hand side with its derivative.
#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "qge/grid.hpp"
#include "qge/transform.hpp"

using namespace qge;

namespace {
const double pi = std::acos(-1.0);
}

TEST_CASE("exponential substitution round-trips to machine precision", "[transform]") {
    Grid g(Interval{2.0}, 41);
    GridFunction u(g, [](double x) { return 0.7 * std::sin(3.0 * x) - 0.2 * x; });
    for (double mu : {0.3, 1.0, 4.5}) {
        GridFunction v = cole_hopf_forward(u, mu);
        GridFunction back = cole_hopf_inverse(v, mu);
        REQUIRE((back - u).sup_norm() < 1e-12);
        // Forward of zero is zero; inverse of zero is zero.
        REQUIRE(cole_hopf_forward(GridFunction(g, 0.0), mu).sup_norm() == 0.0);
        REQUIRE(cole_hopf_inverse(GridFunction(g, 0.0), mu).sup_norm() == 0.0);
    }
    REQUIRE_THROWS_AS(cole_hopf_forward(u, 0.0), validation_error);
    REQUIRE_THROWS_AS(cole_hopf_inverse(GridFunction(g, -1.0), 1.0), transform_domain_error);
    REQUIRE_THROWS_AS(cole_hopf_inverse(GridFunction(g, -1.5), 1.0), transform_domain_error);
}

TEST_CASE("scaled substitution round-trips and matches the plain one at mu_i = mu", "[transform]") {
    Grid g(Interval{1.0}, 21);
    GridFunction u(g, [](double x) { return std::cos(pi * x) - 0.4; });
    for (double mu_i : {0.5, 2.0}) {
        GridFunction w = scaled_forward(u, mu_i);
        REQUIRE((scaled_inverse(w, mu_i) - u).sup_norm() < 1e-12);
    }
    // w_i = (e^{mu_i u} - 1)/mu_i equals v/mu_i for the plain substitution.
    const double mu = 1.7;
    GridFunction w = scaled_forward(u, mu);
    GridFunction v = cole_hopf_forward(u, mu);
    REQUIRE((mu * w - v).sup_norm() < 1e-14);
    // Out-of-range w: 1 + mu_i w <= 0.
    REQUIRE_THROWS_AS(scaled_inverse(GridFunction(g, -2.0), 0.5), transform_domain_error);
}

TEST_CASE("odd envelope nonlinearity is odd, C^1 at zero, and superlinear", "[transform]") {
    const double mu = 0.8;
    // Odd reflection.
    for (double s : {0.1, 0.5, 2.0, 17.0})
        REQUIRE(m_nonlinearity(-s, mu) == Catch::Approx(-m_nonlinearity(s, mu)).epsilon(1e-15));
    REQUIRE(m_nonlinearity(0.0, mu) == 0.0);

    // m'(0) = 1: symmetric difference quotient converges to 1.
    const double eps = 1e-6;
    const double slope = (m_nonlinearity(eps, mu) - m_nonlinearity(-eps, mu)) / (2.0 * eps);
    REQUIRE(slope == Catch::Approx(1.0).margin(1e-6));

    // Superlinear growth: m(s)/s increases.
    double prev = 0.0;
    for (double s : {1.0, 3.0, 10.0, 100.0}) {
        const double ratio = m_nonlinearity(s, mu) / s;
        REQUIRE(ratio > prev);
        prev = ratio;
    }
    // Closed form at a spot value: m(s) = (1+mu s)ln(1+mu s)/mu.
    const double s = 2.5;
    REQUIRE(m_nonlinearity(s, mu) == Catch::Approx((1.0 + mu * s) * std::log1p(mu * s) / mu).epsilon(1e-15));
}

TEST_CASE("semilinear right-hand side and its derivative", "[transform]") {
    Grid g(Interval{1.0}, 17);
    GridFunction c(g, [](double x) { return 1.0 + 0.5 * std::cos(pi * x); });
    GridFunction h(g, [](double x) { return x; });
    const double mu = 1.3, lambda = 2.0;

    // At v = 0: f = mu h exactly, f' = lambda c + mu h.
    SemilinearRhs at0 = semilinear_eval(c, h, mu, lambda, GridFunction(g, 0.0));
    REQUIRE((at0.f - mu * h).sup_norm() < 1e-15);
    REQUIRE((at0.fprime - lambda * c - mu * h).sup_norm() < 1e-15);

    // f' matches the symmetric difference of f in every node.
    GridFunction v(g, [](double x) { return 0.3 * std::sin(4.0 * x) + 0.1; });
    const double eps = 1e-6;
    SemilinearRhs mid = semilinear_eval(c, h, mu, lambda, v);
    SemilinearRhs up = semilinear_eval(c, h, mu, lambda, v + GridFunction(g, eps));
    SemilinearRhs dn = semilinear_eval(c, h, mu, lambda, v - GridFunction(g, eps));
    double worst = 0.0;
    for (Eigen::Index k = 0; k < v.size(); ++k)
        worst = std::max(worst, std::abs((up.f[k] - dn.f[k]) / (2.0 * eps) - mid.fprime[k]));
    REQUIRE(worst < 1e-7);

    // Domain guard: v must stay above -1.
    REQUIRE_THROWS_AS(semilinear_eval(c, h, mu, lambda, GridFunction(g, -1.0)), transform_domain_error);

    // Shape guard.
    Grid g2(Interval{1.0}, 19);
    REQUIRE_THROWS_AS(semilinear_eval(c, h, mu, lambda, GridFunction(g2, 0.0)), shape_error);
}
