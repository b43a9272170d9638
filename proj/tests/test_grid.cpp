#include <doctest.h>

#include <cmath>

#include "arbcert/errors.hpp"
#include "arbcert/grid.hpp"
#include "arbcert/synth.hpp"

using namespace arbcert;

TEST_CASE("weighted norm of trivial fields") {
    const Grid2D g = Grid2D::uniform(80, 120, 5, 0.1, 1.1, 4);
    const WeightField w = WeightField::uniform(g);
    CHECK(weighted_norm(Field::Zero(4, 5), w, g) == 0.0);
    CHECK(weighted_norm(Field::Constant(4, 5, -2.5), w, g) == doctest::Approx(2.5).epsilon(1e-14));
}

TEST_CASE("weighted norm matches an explicit trapezoid sum") {
    const Grid2D g({80.0, 95.0, 120.0}, {0.2, 0.5, 1.0});
    Field raw(3, 3);
    raw << 1.0, 2.0, 0.5, 3.0, 1.0, 1.5, 0.7, 0.9, 2.2;
    const WeightField w(raw);
    Field f(3, 3);
    for (int t = 0; t < 3; ++t)
        for (int k = 0; k < 3; ++k) f(t, k) = g.strikes()[k];

    // Oracle: tensor trapezoid written out cell by cell.
    const auto& K = g.strikes();
    const auto& T = g.maturities();
    double s = 0.0;
    for (int t = 0; t + 1 < 3; ++t)
        for (int k = 0; k + 1 < 3; ++k) {
            const double cell = (K[k + 1] - K[k]) * (T[t + 1] - T[t]) / 4.0;
            for (int dt = 0; dt < 2; ++dt)
                for (int dk = 0; dk < 2; ++dk) {
                    const double v = f(t + dt, k + dk);
                    s += cell * w(t + dt, k + dk) * v * v;
                }
        }
    const double area = (K.back() - K.front()) * (T.back() - T.front());
    CHECK(weighted_norm(f, w, g) == doctest::Approx(std::sqrt(s / area)).epsilon(1e-12));
}

TEST_CASE("weight field normalization and condition number") {
    Field raw(2, 3);
    raw << 1, 2, 3, 4, 5, 6;
    const WeightField w(raw);
    CHECK(w.values().mean() == doctest::Approx(1.0));
    CHECK(w.kappa() == doctest::Approx(std::sqrt(6.0)));
    CHECK_THROWS_AS(WeightField(Field::Constant(2, 2, -1.0)), InputError);

    const Grid2D g = Grid2D::uniform(80, 120, 21, 0.1, 1.1, 11);
    const WeightField v = WeightField::vega_bump(g, 100.0);
    CHECK(v.w_min() > 0.0);
    CHECK(v(0, 10) == doctest::Approx(v.w_max()));
}

TEST_CASE("grid construction rejects malformed axes") {
    CHECK_THROWS_AS(Grid2D({1.0, 2.0}, {0.1, 0.2, 0.3}), DimensionError);
    CHECK_THROWS_AS(Grid2D({1.0, 3.0, 2.0}, {0.1, 0.2, 0.3}), InputError);
    CHECK_THROWS_AS(Grid2D({1.0, 2.0, 3.0}, {0.0, 0.2, 0.3}), InputError);
    const Grid2D g({1.0, 2.0, 4.0}, {0.1, 0.2, 0.3});
    CHECK(g.strike_quadrature().sum() == doctest::Approx(3.0));
    CHECK(g.area() == doctest::Approx(0.6));
}

TEST_CASE("percentile interpolates order statistics") {
    CHECK(percentile({4, 1, 3, 2}, 0.5) == doctest::Approx(2.5));
    CHECK(percentile({4, 1, 3, 2}, 0.0) == 1.0);
    CHECK(percentile({4, 1, 3, 2}, 1.0) == 4.0);
    CHECK(percentile({7}, 0.3) == 7.0);
    CHECK_THROWS_AS(percentile({}, 0.5), DimensionError);
}

TEST_CASE("mesh admissibility") {
    SUBCASE("strictly convex quadratic passes on a fine grid") {
        const Grid2D g = Grid2D::uniform(0.0 + 1.0, 2.0, 41, 0.1, 1.1, 11);
        Field f(11, 41);
        for (int t = 0; t < 11; ++t)
            for (int k = 0; k < 41; ++k) {
                const double K = g.strikes()[k], tau = g.maturities()[t];
                f(t, k) = 10.0 * K * K + 5.0 * tau * tau;
            }
        const MeshReport r = check_mesh_admissibility(Surface(g, f));
        CHECK(r.pass);
        CHECK(r.envelope_K == doctest::Approx(20.0));
    }
    SUBCASE("two nodes per axis is not a mesh") {
        CHECK_THROWS_AS(Grid2D::uniform(80, 120, 2, 0.1, 1.1, 2), DimensionError);
    }
    SUBCASE("Black-Scholes envelopes follow the analytic curvature") {
        MarketParams p;
        const Grid2D g = Grid2D::uniform(80, 120, 21, 0.1, 1.1, 11);
        const Surface C = generate_surface(p, g).clean;
        const MeshReport r = check_mesh_admissibility(C);
        std::vector<double> gamma;
        for (double tau : g.maturities())
            for (double K : g.strikes()) gamma.push_back(std::abs(model_call_KK(p, K, tau)));
        const double oracle = percentile(gamma, 0.10);
        CHECK(r.envelope_K == doctest::Approx(oracle).epsilon(0.05));
        CHECK(r.pass == (r.h_K <= r.bound_K && r.h_tau <= r.bound_tau));
    }
}
