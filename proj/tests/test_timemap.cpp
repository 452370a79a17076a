// Phase-plane analysis on the interval: forcing/potential evaluation,
// equilibria, regime classification, turning-point time maps, the extremal
// transit times, fixed-step shooting, and slope-sweep solution counts.
#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>

#include "qge/grid.hpp"
#include "qge/problem.hpp"
#include "qge/quadrature.hpp"
#include "qge/solve.hpp"
#include "qge/timemap.hpp"

using namespace qge;

namespace {
const double pi = std::acos(-1.0);

PhaseParams params(double lambda, double mu, double h, double T = 1.0) {
    return PhaseParams{lambda, mu, h, 1.0, T};
}

// Independent transit-time oracle: march the orbit with small fixed RK4
// steps and locate the first return to v = 0 from above by linear
// interpolation between steps.
double return_time_oracle(const PhaseParams& p, double a, double t_hint) {
    double v = 0.0, w = a, t = 0.0;
    const double dt = t_hint / 400000.0;
    const auto f = [&](double x) { return -g_eval(p, x); };
    double pv = v;
    for (long i = 0; i < 800000; ++i) {
        const double k1v = w, k1w = f(v);
        const double k2v = w + 0.5 * dt * k1w, k2w = f(v + 0.5 * dt * k1v);
        const double k3v = w + 0.5 * dt * k2w, k3w = f(v + 0.5 * dt * k2v);
        const double k4v = w + dt * k3w, k4w = f(v + dt * k3v);
        pv = v;
        v += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        w += dt / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w);
        t += dt;
        if (i > 4 && pv > 0.0 && v <= 0.0) return t - dt + dt * pv / (pv - v);
    }
    return -1.0;
}

int count_by_class(const std::vector<ShootResult>& roots, ProfileSign cls) {
    return int(std::count_if(roots.begin(), roots.end(),
                             [cls](const ShootResult& r) { return r.classification == cls; }));
}
} // namespace

TEST_CASE("phase parameters are validated by every operation", "[timemap]") {
    CHECK_THROWS_AS(g_eval(params(-1.0, 1.0, 1.0), 0.0), validation_error);
    CHECK_THROWS_AS(g_eval(params(1.0, 0.0, 1.0), 0.0), validation_error);
    CHECK_THROWS_AS(g_eval(PhaseParams{1.0, 1.0, 1.0, -2.0, 1.0}, 0.0), validation_error);
    CHECK_THROWS_AS(g_eval(PhaseParams{1.0, 1.0, 1.0, 1.0, 0.0}, 0.0), validation_error);
    CHECK_THROWS_AS(G_eval(params(1.0, 1.0, std::nan("")), 0.0), validation_error);

    const PhaseParams ok = params(1.0, 1.0, 1.0);
    CHECK_THROWS_AS(g_eval(ok, -1.0), transform_domain_error);
    CHECK_THROWS_AS(G_eval(ok, -1.5), transform_domain_error);
    CHECK_THROWS_AS(time_map_positive(ok, 0.0), validation_error);
    CHECK_THROWS_AS(time_map_positive(ok, -2.0), validation_error);
    CHECK_THROWS_AS(time_map_table(ok, 1e-2, 1e-3, 50), validation_error);
    CHECK_THROWS_AS(time_map_table(ok, 1e-2, 1e2, 1), validation_error);
    CHECK_THROWS_AS(shoot(ok, std::nan("")), validation_error);
    CHECK_THROWS_AS(shoot(ok, 1.0, 4), validation_error);
    CHECK_THROWS_AS(count_solutions(ok, 2.0, 1.0, 100), validation_error);
    CHECK_THROWS_AS(count_solutions(ok, 0.0, 1.0, 1), validation_error);
    CHECK_THROWS_AS(equilibria(ok, -1.0), validation_error);
}

TEST_CASE("forcing and potential match their closed forms", "[timemap]") {
    // g(0) = mu*h and G(0) = 0 for any admissible parameters.
    for (double h : {1.0, -0.5, 0.0}) {
        const PhaseParams p = params(1.3, 0.7, h);
        CHECK(g_eval(p, 0.0) == Catch::Approx(0.7 * h).margin(1e-15));
        CHECK(G_eval(p, 0.0) == 0.0);
    }
    // With no forcing offset the reaction vanishes only at v = 0.
    const PhaseParams q = params(1.0, 1.0, 0.0);
    CHECK(g_eval(q, 0.0) == 0.0);
    for (double v : {-0.9, -0.3, 0.5, 4.0}) CHECK(g_eval(q, v) * v > 0.0);
}

TEST_CASE("closed-form potential agrees with quadrature of the forcing", "[timemap]") {
    std::mt19937 rng(20240816u);
    std::uniform_real_distribution<double> pick(-0.99, 10.0);
    for (const PhaseParams& p : {params(1.0, 1.0, 1.0), params(0.6, 1.4, -0.8)}) {
        for (int k = 0; k < 100; ++k) {
            const double v = pick(rng);
            const double direct = G_eval(p, v);
            const double quad =
                integrate_adaptive([&](double t) { return g_eval(p, t); }, 0.0, v, 1e-12, 1e-14);
            CHECK(std::abs(direct - quad) <= 1e-10 * (1.0 + std::abs(direct)));
        }
    }
}

TEST_CASE("equilibria finds and classifies the interior rest point", "[timemap]") {
    // No forcing offset: the only rest point is v = 0, a center.
    {
        const auto roots = equilibria(params(1.0, 1.0, 0.0));
        REQUIRE(roots.size() == 1);
        CHECK(std::abs(roots[0].v) <= 1e-12);
        CHECK(roots[0].center);
    }
    // Positive forcing pushes the rest point below zero, negative above.
    {
        const PhaseParams p = params(1.0, 1.0, 1.0); // center at e^{-1} - 1
        const auto roots = equilibria(p);
        REQUIRE(roots.size() == 1);
        CHECK(roots[0].v == Catch::Approx(std::expm1(-1.0)).epsilon(1e-10));
        CHECK(roots[0].center);
        CHECK(std::abs(g_eval(p, roots[0].v)) <= 1e-10 * (1.0 + 1.0 + 1.0));
    }
    {
        const PhaseParams p = params(0.5, 1.0, -1.0); // center at e^{2} - 1
        const auto roots = equilibria(p);
        REQUIRE(roots.size() == 1);
        CHECK(roots[0].v == Catch::Approx(std::expm1(2.0)).epsilon(1e-10));
        CHECK(roots[0].center);
        CHECK(std::abs(g_eval(p, roots[0].v)) <= 1e-10 * (1.0 + 0.5 + 1.0));
    }
    // Without the reaction term the forcing never vanishes on the domain.
    CHECK(equilibria(params(0.0, 1.0, -1.0)).empty());
    CHECK(equilibria(params(0.0, 2.0, 3.0)).empty());
}

TEST_CASE("regime classification follows the coefficient inequalities", "[timemap]") {
    CHECK(case_classify(params(1.0, 1.0, 1.0)) == PhaseCase::case1);
    CHECK(case_classify(params(3.0, 1.0, 1.0)) == PhaseCase::case2);
    for (double lam : {0.0, 0.5, 2.0, 7.0}) CHECK(case_classify(params(lam, 1.0, -1.0)) == PhaseCase::case3);
    CHECK(case_classify(params(1.0, 1.0, 0.0)) == PhaseCase::h_zero);
    // The dividing line between the positive-forcing regimes is refused.
    CHECK_THROWS_AS(case_classify(params(2.0, 1.0, 1.0)), classification_error);
    CHECK(std::string(to_string(PhaseCase::case3)) == "case3");
}

TEST_CASE("transit times agree with an independent shooting oracle", "[timemap]") {
    const PhaseParams c1 = params(1.0, 1.0, 1.0);
    for (double a : {1e-3, 0.1, 1.0, 10.0, 1e3}) {
        const double tp = time_map_positive(c1, a);
        const double ret = return_time_oracle(c1, a, tp);
        REQUIRE(ret > 0.0);
        CHECK(std::abs(tp - ret) <= 1e-6 * tp);
    }
    const PhaseParams c3 = params(1.0, 1.0, -1.0);
    for (double a : {1e-4, 0.3, 1.0, 5.0}) {
        const double tp = time_map_positive(c3, a);
        const double ret = return_time_oracle(c3, a, tp);
        REQUIRE(ret > 0.0);
        CHECK(std::abs(tp - ret) <= 1e-6 * tp);
    }
}

TEST_CASE("transit times vanish for fast launches and die without a turning point", "[timemap]") {
    const PhaseParams p = params(1.0, 1.0, 1.0);
    const TimeMapTable tab = time_map_table(p);
    REQUIRE(tab.a_values.size() == tab.T_plus.size());
    REQUIRE(tab.T0.has_value());
    double mx = 0.0;
    for (double t : tab.T_plus) {
        CHECK(t >= 0.0);
        mx = std::max(mx, t);
    }
    CHECK(*tab.T0 == Catch::Approx(mx));
    CHECK(tab.a_values.front() == Catch::Approx(1e-4));
    CHECK(tab.a_values.back() == Catch::Approx(1e4));
    // Slow launches return almost immediately.
    CHECK(tab.T_plus.front() < 0.2 * mx);
    // Fast launches decline toward zero too, though only logarithmically in
    // the launch speed, so the table edge still sits well above zero.
    CHECK(time_map_positive(p, 1e2) > time_map_positive(p, 1e3));
    CHECK(time_map_positive(p, 1e3) > time_map_positive(p, 1e4));
    CHECK(tab.T_plus.back() < mx);
    // Zero forcing never turns the orbit around.
    CHECK_THROWS_AS(time_map_positive(params(0.0, 1.0, 0.0), 1.0), unbounded_orbit_error);
}

TEST_CASE("the extremal transit time caps the two-solution regime", "[timemap]") {
    const PhaseParams p = params(1.0, 1.0, 1.0);
    const double T0 = find_T0(p);
    CHECK(T0 == Catch::Approx(1.7627749).epsilon(1e-5));
    // Stable under doubling the table density.
    const TimeMapTable dense = time_map_table(p, 1e-4, 1e4, 321);
    double mx = 0.0;
    for (double t : dense.T_plus) mx = std::max(mx, t);
    CHECK(T0 >= mx - 1e-12);
    CHECK(std::abs(T0 - mx) <= 1e-4 * T0);
    // Defined only in the small-reaction positive-forcing regime.
    CHECK_THROWS_AS(find_T0(params(3.0, 1.0, 1.0)), classification_error);
    CHECK_THROWS_AS(find_T0(params(1.0, 1.0, -1.0)), classification_error);

    // Below the cap the sweep finds exactly the two expected launches; the
    // companion of the slow dome is a fast, large-amplitude arc far up the
    // slope axis. Above the cap nothing returns in time.
    PhaseParams below = p;
    below.T = 0.5 * T0;
    const auto two = count_solutions(below, -1.0, 1e6, 2000);
    REQUIRE(two.size() == 2);
    CHECK(two[0].classification == ProfileSign::positive);
    CHECK(two[1].classification == ProfileSign::positive);
    CHECK(two[0].s < 1.0);
    CHECK(two[1].s > 1e4);
    PhaseParams above = p;
    above.T = 1.5 * T0;
    CHECK(count_solutions(above, -1.0, 1e6, 2000).empty());
}

TEST_CASE("shots conserve energy and stay put on the rest state", "[timemap]") {
    // Starting on the equilibrium with no offset forcing goes nowhere.
    const ShootResult still = shoot(params(1.0, 1.0, 0.0), 0.0);
    CHECK(still.admissible);
    CHECK(still.end_value == 0.0);
    CHECK(still.turns == 0);

    const PhaseParams p = params(1.0, 1.0, 1.0);
    const ShootResult r = shoot(p, 2.0);
    CHECK(r.admissible);
    CHECK(r.energy_drift <= 1e-8);
    CHECK(shoot(p, 2.0, 40000).energy_drift <= 1e-10);

    // End values are continuous in the launch slope where the orbit
    // survives: shrinking the probe distance shrinks the difference.
    std::mt19937 rng(7u);
    std::uniform_real_distribution<double> pick(0.7, 3.0);
    for (int k = 0; k < 10; ++k) {
        const double s = pick(rng);
        const double base = shoot(p, s).end_value;
        const double d1 = std::abs(shoot(p, s + 1e-4).end_value - base);
        const double d2 = std::abs(shoot(p, s + 1e-7).end_value - base);
        CHECK(d2 <= 1e-3 * (1.0 + d1));
        CHECK(d2 <= 1e-4);
    }
}

TEST_CASE("shots flag crashes and blow-ups instead of throwing", "[timemap]") {
    // A flat launch under positive forcing falls through the domain edge
    // (the fall from rest reaches it after about 1.6 time units).
    const ShootResult crash = shoot(params(1.0, 1.0, 1.0, 3.0), 0.0);
    CHECK_FALSE(crash.admissible);
    CHECK(crash.end_value < -0.9);
    // Strong unopposed negative forcing escapes beyond the amplitude bound.
    const ShootResult blow = shoot(PhaseParams{0.0, 4.0, -4.0, 1.0, 5.0}, 1.0);
    CHECK_FALSE(blow.admissible);
    CHECK(blow.end_value > 1e7);
}

TEST_CASE("turn counting tracks revolutions around the center", "[timemap]") {
    // Closed orbit in the large-reaction positive-forcing regime.
    const PhaseParams base = params(3.0, 1.0, 1.0);
    PhaseParams p = base;
    p.T = 1.0;
    CHECK(shoot(p, 0.5).turns == 0);
    p.T = 8.0;
    const ShootResult two = shoot(p, 0.5);
    CHECK(two.admissible);
    CHECK(two.turns >= 1);
    p.T = 16.0;
    const ShootResult more = shoot(p, 0.5);
    CHECK(more.turns > two.turns);
    CHECK(more.classification == ProfileSign::sign_changing);
}

TEST_CASE("negative-forcing sweeps count one nonpositive solution and its companions",
          "[timemap]") {
    const PhaseParams p = params(1.0, 1.0, -1.0);
    const double T1 = find_T1(p);
    CHECK(T1 == Catch::Approx(6.7619421).epsilon(1e-5));

    // Below the grazing threshold: the unique nonpositive solution plus a
    // positive dome; above: the dome gives way to sign-changing profiles.
    for (double f : {0.5, 0.9}) {
        PhaseParams q = p;
        q.T = f * T1;
        const auto roots = count_solutions(q, -1.55, 30.0, 800);
        CHECK(count_by_class(roots, ProfileSign::negative) == 1);
        CHECK(count_by_class(roots, ProfileSign::positive) >= 1);
        CHECK(count_by_class(roots, ProfileSign::sign_changing) == 0);
    }
    {
        PhaseParams q = p;
        q.T = 1.1 * T1;
        const auto roots = count_solutions(q, -1.55, 30.0, 800);
        CHECK(count_by_class(roots, ProfileSign::negative) == 1);
        CHECK(count_by_class(roots, ProfileSign::positive) == 0);
        CHECK(count_by_class(roots, ProfileSign::sign_changing) >= 1);
    }
}

TEST_CASE("grazing-orbit transit time is the slow-launch limit and scales with the well",
          "[timemap]") {
    const PhaseParams p = params(1.0, 1.0, -1.0);
    const double T1 = find_T1(p);
    // The grazing loop is the limit of ever-slower positive launches.
    CHECK(std::abs(time_map_positive(p, 1e-6) - T1) <= 1e-4 * T1);

    // Deeper forcing pushes the upper potential zero out exponentially, so
    // the loop takes strictly longer to close.
    const double t1a = find_T1(params(1.0, 1.0, -1.0));
    const double t1b = find_T1(params(1.0, 1.0, -2.0));
    const double t1c = find_T1(params(1.0, 1.0, -4.0));
    CHECK(t1a < t1b);
    CHECK(t1b < t1c);
    // Joint rescaling of both coefficients contracts time by its square
    // root: the loop through the doubled well replays at sqrt(2) speed.
    CHECK(t1b == Catch::Approx(find_T1(params(0.5, 1.0, -1.0)) / std::sqrt(2.0)).epsilon(1e-8));
    // As the reaction weight vanishes the loop must climb to an
    // exponentially distant turning point: the time grows like
    // 4*sqrt(mu*|h|)/(lambda*c), not toward any fixed linear scale.
    for (double lc : {1.0, 0.25, 0.0625}) {
        const double t1 = find_T1(params(lc, 1.0, -1.0));
        const double scaled = t1 * lc / std::sqrt(1.0);
        CHECK(scaled > 3.9);
        CHECK(scaled < 7.0);
    }

    CHECK_THROWS_AS(find_T1(params(1.0, 1.0, 1.0)), classification_error);
    CHECK_THROWS_AS(find_T1(params(0.0, 1.0, -1.0)), classification_error);
}

TEST_CASE("slope sweeps recover the linear solvability threshold", "[timemap]") {
    // With no reaction term the problem is exactly linear and solvable for
    // positive forcing below pi^2 per unit squared length: bisect on the
    // forcing level by presence of a returning launch.
    const auto solvable = [](double h) {
        const PhaseParams p = params(0.0, 1.0, h);
        return !count_solutions(p, 0.01, 5000.0, 100).empty();
    };
    double lo = 5.0, hi = 15.0;
    REQUIRE(solvable(lo));
    REQUIRE_FALSE(solvable(hi));
    for (int it = 0; it < 20; ++it) {
        const double mid = 0.5 * (lo + hi);
        (solvable(mid) ? lo : hi) = mid;
    }
    const double threshold = 0.5 * (lo + hi);
    CHECK(std::abs(threshold - pi * pi) <= 0.02 * pi * pi);
}

TEST_CASE("large-reaction orbits yield multi-turn solutions at long times", "[timemap]") {
    PhaseParams p = params(3.0, 1.0, 1.0);
    p.T = 6.0;
    const auto roots = count_solutions(p, -3.0, 30.0, 500);
    REQUIRE_FALSE(roots.empty());
    bool has_turner = false;
    for (const auto& r : roots) has_turner = has_turner || r.turns >= 1;
    CHECK(has_turner);
}

TEST_CASE("swept roots satisfy the boundary-value problem on a grid", "[timemap]") {
    // Map each root's trajectory to the original variable and check the
    // discrete equation residual. Resolution balances two error sources:
    // O(spacing^2) stencil truncation against trajectory roundoff, which the
    // Laplacian amplifies by 1/spacing^2 — so ever-finer grids get worse.
    const double mu = 1.0;
    const double lambda = 1.0;
    {
        PhaseParams q = params(lambda, mu, -1.0, 1.0);
        const auto roots = count_solutions(q, -1.5, 5.0, 400);
        REQUIRE(count_by_class(roots, ProfileSign::negative) == 1);
        for (const auto& r : roots) {
            Grid g(Interval{q.T}, 4095);
            const GridFunction v = shoot_profile(q, r.s, g);
            const GridFunction u = v.map([mu](double t) { return std::log1p(t) / mu; });
            ProblemSpec prob(g, GridFunction(g, 1.0), GridFunction(g, -1.0), MuConstant{mu});
            CHECK(residual_direct(prob, lambda, u).sup_norm() <= 1e-6);
        }
    }
    {
        const double T1 = find_T1(params(lambda, mu, -1.0));
        PhaseParams q = params(lambda, mu, -1.0, 0.9 * T1);
        const auto roots = count_solutions(q, 0.01, 5.0, 400);
        REQUIRE(count_by_class(roots, ProfileSign::positive) >= 1);
        for (const auto& r : roots) {
            Grid g(Interval{q.T}, 4095);
            const GridFunction v = shoot_profile(q, r.s, g);
            const GridFunction u = v.map([mu](double t) { return std::log1p(t) / mu; });
            ProblemSpec prob(g, GridFunction(g, 1.0), GridFunction(g, -1.0), MuConstant{mu});
            CHECK(residual_direct(prob, lambda, u).sup_norm() <= 1e-6);
        }
    }
}

TEST_CASE("trajectory sampling validates its grid and survives only admissible shots",
          "[timemap]") {
    const PhaseParams p = params(1.0, 1.0, -1.0);
    CHECK_THROWS_AS(shoot_profile(p, 1.0, Grid(Rectangle{1.0, 1.0}, 7)), validation_error);
    CHECK_THROWS_AS(shoot_profile(p, 1.0, Grid(Interval{2.0}, 63)), validation_error);
    CHECK_THROWS_AS(shoot_profile(p, 1.0, Grid(Interval{1.0}, 63), 2), validation_error);
    // A crashing shot cannot be sampled.
    CHECK_THROWS_AS(shoot_profile(params(1.0, 1.0, 1.0, 3.0), 0.0, Grid(Interval{3.0}, 63)),
                    unbounded_orbit_error);
    // Node samples reproduce the shot trajectory at matching times.
    const GridFunction v = shoot_profile(p, 0.5, Grid(Interval{1.0}, 127));
    CHECK(v.values().allFinite());
    CHECK(v.values().maxCoeff() > 0.0);
}
