// Grids, nodal functions, quadrature, differencing, ordering, CSV I/O.
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "qge/grid.hpp"
#include "qge/operators.hpp"
#include "qge/quadrature.hpp"

using namespace qge;

namespace {
const double pi = std::acos(-1.0);

std::string temp_path(const char* stem) {
    return (std::filesystem::temp_directory_path() / stem).string();
}
} // namespace

TEST_CASE("interval grids are centered with spacing length/(n+1)", "[grid]") {
    Grid g(Interval{1.0}, 3);
    REQUIRE(g.dim() == 1);
    REQUIRE(g.size() == 3);
    REQUIRE(g.hx() == Catch::Approx(0.25));
    REQUIRE(g.x(0) == Catch::Approx(-0.25));
    REQUIRE(g.x(1) == Catch::Approx(0.0).margin(1e-15));
    REQUIRE(g.x(2) == Catch::Approx(0.25));
    REQUIRE_THROWS_AS(g.y(0), validation_error);

    REQUIRE_THROWS_AS(Grid(Interval{1.0}, 2), validation_error);
    REQUIRE_THROWS_AS(Grid(Interval{-1.0}, 5), validation_error);
    REQUIRE_THROWS_AS(Grid(Rectangle{1.0, 0.0}, 5), validation_error);
}

TEST_CASE("rectangle grids order nodes lexicographically, x fastest", "[grid]") {
    Grid g(Rectangle{1.0, 2.0}, 3);
    REQUIRE(g.dim() == 2);
    REQUIRE(g.size() == 9);
    REQUIRE(g.hx() == Catch::Approx(0.25));
    REQUIRE(g.hy() == Catch::Approx(0.5));
    // k = iy*n + ix; k = 5 -> ix = 2, iy = 1.
    REQUIRE(g.x(5) == Catch::Approx(0.75));
    REQUIRE(g.y(5) == Catch::Approx(1.0));
    REQUIRE(g.x(0) == Catch::Approx(0.25));
    REQUIRE(g.y(8) == Catch::Approx(1.5));
}

TEST_CASE("three-point stencil on the unit interval with n = 3", "[operators]") {
    Grid g(Interval{1.0}, 3);
    GridFunction d(g, [](double x) { return 1.0 + x; });
    DiscreteOperator op = build_operator(g, d);
    REQUIRE(op.symmetric);
    // 2/h^2 = 32, 1/h^2 = 16.
    for (int i = 0; i < 3; ++i) {
        REQUIRE(op.matrix.coeff(i, i) == Catch::Approx(32.0 + d[i]).epsilon(1e-15));
        for (int j = 0; j < 3; ++j)
            if (std::abs(i - j) == 1) REQUIRE(op.matrix.coeff(i, j) == Catch::Approx(-16.0).epsilon(1e-15));
    }
    REQUIRE(op.matrix.coeff(0, 2) == 0.0);
}

TEST_CASE("five-point stencil on the unit square with n = 3", "[operators]") {
    Grid g(Rectangle{1.0, 1.0}, 3);
    DiscreteOperator op = build_operator(g, 2.5);
    // 2/hx^2 + 2/hy^2 = 64 on the diagonal, -16 toward each neighbor.
    REQUIRE(op.matrix.coeff(4, 4) == Catch::Approx(64.0 + 2.5).epsilon(1e-15));
    REQUIRE(op.matrix.coeff(4, 3) == Catch::Approx(-16.0));
    REQUIRE(op.matrix.coeff(4, 5) == Catch::Approx(-16.0));
    REQUIRE(op.matrix.coeff(4, 1) == Catch::Approx(-16.0));
    REQUIRE(op.matrix.coeff(4, 7) == Catch::Approx(-16.0));
    // Row wrap-around must NOT connect (2,0)-(0,1): k=2 and k=3 are not neighbors.
    REQUIRE(op.matrix.coeff(2, 3) == 0.0);
    REQUIRE(op.matrix.coeff(3, 2) == 0.0);
}

TEST_CASE("discrete Poisson problem reproduces the exact parabola", "[operators]") {
    // -u'' = 1 on ]-1/2,1/2[, u(+-1/2) = 0 has u = (1/4 - x^2)/2, max 1/8.
    // The three-point stencil is exact on quadratics, so the discrete
    // solution matches nodewise to solver roundoff.
    Grid g(Interval{1.0}, 31); // odd n puts a node at x = 0
    GridFunction rhs(g, 1.0);
    GridFunction u = linear_solve(laplacian(g), rhs);
    GridFunction exact(g, [](double x) { return (0.25 - x * x) / 2.0; });
    REQUIRE((u - exact).sup_norm() < 1e-12);
    REQUIRE(u.max_val() == Catch::Approx(0.125).epsilon(1e-12));

    // Applying the operator to the exact parabola returns the unit load.
    GridFunction back = apply(laplacian(g), exact);
    REQUIRE((back - rhs).sup_norm() < 1e-10);
}

TEST_CASE("2d Poisson against the separable sine load", "[operators]") {
    // -Lap u = 2 pi^2 sin(pi x) sin(pi y) has u = sin(pi x) sin(pi y);
    // second-order consistency => error drops ~4x per mesh doubling.
    auto run = [](int n) {
        Grid g(Rectangle{1.0, 1.0}, n);
        GridFunction rhs(g, [](double x, double y) { return 2.0 * pi * pi * std::sin(pi * x) * std::sin(pi * y); });
        GridFunction u = linear_solve(laplacian(g), rhs);
        GridFunction exact(g, [](double x, double y) { return std::sin(pi * x) * std::sin(pi * y); });
        return (u - exact).sup_norm();
    };
    const double e1 = run(15), e2 = run(31);
    REQUIRE(e1 < 1e-2);
    REQUIRE(e1 / e2 == Catch::Approx(4.0).margin(0.5));
}

TEST_CASE("quadrature weight is the spacing at every interior node", "[grid]") {
    Grid g(Interval{2.0}, 19);
    GridFunction one(g, 1.0);
    const double h = g.hx();
    // Trapezoid with zero boundary: h per interior node, so h*n = T - h.
    REQUIRE(integrate(one) == Catch::Approx(2.0 - h).epsilon(1e-14));

    // Linearity.
    GridFunction u(g, [](double x) { return std::exp(x); });
    GridFunction v(g, [](double x) { return x * x * x; });
    REQUIRE(integrate(u + 3.0 * v) == Catch::Approx(integrate(u) + 3.0 * integrate(v)).epsilon(1e-13));

    Grid gs(Rectangle{1.0, 1.0}, 9);
    GridFunction ones2(gs, 1.0);
    REQUIRE(integrate(ones2) == Catch::Approx(gs.hx() * gs.hy() * 81.0).epsilon(1e-14));
}

TEST_CASE("squared gradient converges at second order", "[grid]") {
    // u = cos(pi x / T) vanishes at the ends of the centered interval, so the
    // zero-extension convention is consistent; |u'|^2 = (pi/T)^2 sin^2.
    const double T = 2.0;
    auto err = [&](int n) {
        Grid g(Interval{T}, n);
        GridFunction u(g, [&](double x) { return std::cos(pi * x / T); });
        GridFunction gs = gradient_sq(u);
        double worst = 0.0;
        for (Eigen::Index k = 0; k < gs.size(); ++k) {
            const double s = std::sin(pi * g.x(k) / T) * pi / T;
            worst = std::max(worst, std::abs(gs[k] - s * s));
        }
        return worst;
    };
    const double e1 = err(63), e2 = err(127); // h exactly halves
    REQUIRE(e1 / e2 == Catch::Approx(4.0).margin(0.3));
}

TEST_CASE("squared gradient in 2d matches the separable sine", "[grid]") {
    auto err = [](int n) {
        Grid g(Rectangle{1.0, 1.0}, n);
        GridFunction u(g, [](double x, double y) { return std::sin(pi * x) * std::sin(pi * y); });
        GridFunction gs = gradient_sq(u);
        double worst = 0.0;
        for (Eigen::Index k = 0; k < gs.size(); ++k) {
            const double x = g.x(k), y = g.y(k);
            const double gx = pi * std::cos(pi * x) * std::sin(pi * y);
            const double gy = pi * std::sin(pi * x) * std::cos(pi * y);
            worst = std::max(worst, std::abs(gs[k] - gx * gx - gy * gy));
        }
        return worst;
    };
    const double e1 = err(15), e2 = err(31);
    REQUIRE(e1 / e2 == Catch::Approx(4.0).margin(0.5));
}

TEST_CASE("positive and negative parts decompose a function", "[grid]") {
    Grid g(Interval{1.0}, 9);
    GridFunction u(g, [](double x) { return std::sin(7.0 * x); });
    GridFunction p = u.pos_part(), m = u.neg_part();
    REQUIRE(p.min_val() >= 0.0);
    REQUIRE(m.min_val() >= 0.0);
    REQUIRE((p - m - u).sup_norm() == 0.0);
    REQUIRE(u.map([](double s) { return 2.0 * s; }).sup_norm() == Catch::Approx(2.0 * u.sup_norm()));
}

TEST_CASE("strict ordering in the principal-eigenfunction gauge", "[grid]") {
    Grid g(Interval{1.0}, 31);
    GridFunction phi(g, [](double x) { return std::cos(pi * x); }); // positive on ]-1/2,1/2[
    GridFunction zero(g, 0.0);

    StrictOrder so = strictly_below(zero, 2.0 * phi, phi);
    REQUIRE(so.holds);
    REQUIRE(so.epsilon == Catch::Approx(2.0));

    // One touching node kills strictness.
    GridFunction v = phi;
    v[3] = 0.0;
    StrictOrder so2 = strictly_below(zero, v, phi);
    REQUIRE_FALSE(so2.holds);
    REQUIRE(so2.epsilon == 0.0);

    // v dipping below u clamps epsilon at zero.
    v[3] = -1.0;
    StrictOrder so3 = strictly_below(zero, v, phi);
    REQUIRE_FALSE(so3.holds);
    REQUIRE(so3.epsilon == 0.0);

    GridFunction bad_gauge(g, 0.0);
    REQUIRE_THROWS_AS(strictly_below(zero, phi, bad_gauge), validation_error);
}

TEST_CASE("csv round trip preserves every bit", "[grid][io]") {
    Grid g(Interval{3.0}, 17);
    GridFunction u(g, [](double x) { return std::sin(5.0 * x) / 3.0; });
    const std::string path = temp_path("qge_test_roundtrip.csv");
    write_csv(path, u);
    GridFunction back = read_csv(g, path);
    REQUIRE((back - u).sup_norm() == 0.0);

    // A grid with different node locations must be rejected.
    Grid other(Interval{3.0}, 19);
    REQUIRE_THROWS_AS(read_csv(other, path), validation_error);
    std::remove(path.c_str());
}

TEST_CASE("csv round trip on a rectangle", "[grid][io]") {
    Grid g(Rectangle{2.0, 1.0}, 7);
    GridFunction u(g, [](double x, double y) { return x * y - y * y; });
    const std::string path = temp_path("qge_test_roundtrip2d.csv");
    write_csv(path, u);
    GridFunction back = read_csv(g, path);
    REQUIRE((back - u).sup_norm() == 0.0);
    std::remove(path.c_str());
}

TEST_CASE("adaptive quadrature nails smooth integrals", "[quadrature]") {
    REQUIRE(integrate_adaptive([](double x) { return x * x; }, 0.0, 1.0) == Catch::Approx(1.0 / 3.0).epsilon(1e-13));
    REQUIRE(integrate_adaptive([](double x) { return std::sin(x); }, 0.0, pi) == Catch::Approx(2.0).epsilon(1e-13));
    REQUIRE(integrate_adaptive([](double x) { return std::exp(x); }, 0.0, 1.0) ==
            Catch::Approx(std::exp(1.0) - 1.0).epsilon(1e-13));
    // Oriented interval: swapping the ends flips the sign.
    REQUIRE(integrate_adaptive([](double x) { return std::sin(x); }, pi, 0.0) == Catch::Approx(-2.0).epsilon(1e-13));
}
