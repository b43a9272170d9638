#include <doctest.h>

#include <cmath>
#include <random>

#include "arbcert/errors.hpp"
#include "arbcert/projection.hpp"
#include "arbcert/synth.hpp"
#include "qp_oracle.hpp"

using namespace arbcert;

namespace {

void check_vec(const std::vector<double>& got, const std::vector<double>& want, double tol) {
    REQUIRE(got.size() == want.size());
    for (size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got[i] - want[i]) <= tol);
}

Field random_field(int T, int N, double scale, std::mt19937_64& rng) {
    std::normal_distribution<double> z;
    Field f(T, N);
    for (int i = 0; i < f.size(); ++i) f.data()[i] = scale * z(rng);
    return f;
}

}  // namespace

TEST_CASE("isotonic regression") {
    check_vec(pav_isotonic({1, 2, 2, 5}, {1, 1, 1, 1}), {1, 2, 2, 5}, 0.0);
    check_vec(pav_isotonic({3, 1, 2}, {1, 1, 1}), {2, 2, 2}, 1e-15);
    check_vec(pav_isotonic({0, 10}, {1, 3}), {0, 10}, 0.0);
    check_vec(pav_isotonic({10, 0}, {1, 3}), {2.5, 2.5}, 1e-15);
    check_vec(pav_isotonic({1, 3, 2}, {1, 1, 1}, Direction::nonincreasing), {2, 2, 2}, 1e-15);
    CHECK_THROWS(pav_isotonic({1, 2}, {1}));
}

TEST_CASE("convex projection of a strike row") {
    const std::vector<double> K{1, 2, 3, 4, 5};
    std::vector<double> sq;
    for (double k : K) sq.push_back(k * k);
    check_vec(convex_in_strike(sq, {1, 1, 1, 1, 1}, K), sq, 1e-10);
    check_vec(convex_in_strike({3, 1, -1, -3, -5}, {1, 1, 1, 1, 1}, K), {3, 1, -1, -3, -5}, 1e-10);

    // One violated butterfly a.x < 0 with a = (1,-2,1): x - (a.x)/(a W^-1 a) W^-1 a.
    check_vec(convex_in_strike({0, 2, 1}, {1, 1, 1}, {1, 2, 3}), {0.5, 1.0, 1.5}, 1e-8);
    const double ax = 0 - 4 + 1, den = 1.0 / 1 + 4.0 / 2 + 1.0 / 4;
    check_vec(convex_in_strike({0, 2, 1}, {1, 2, 4}, {1, 2, 3}),
              {0 - ax / den * 1.0 / 1, 2 - ax / den * (-2.0) / 2, 1 - ax / den * 1.0 / 4}, 1e-8);
}

TEST_CASE("feasible surfaces are fixed points") {
    MarketParams p;
    const Grid2D g = Grid2D::uniform(80, 120, 21, 0.1, 1.1, 11);
    const Surface C = generate_surface(p, g).clean;
    const WeightField w = WeightField::vega_bump(g, 100.0);
    ProjectionInfo info;
    const Field P = project_field(C.values, g, w, {}, &info);
    CHECK((P - C.values).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(cone_violation(P, g) <= 1e-12);
}

TEST_CASE("small instances match the dual coordinate-ascent oracle") {
    const Grid2D g({90, 100, 115}, {0.2, 0.5, 1.0});
    Field raw(3, 3);
    raw << 1.0, 2.0, 1.0, 0.5, 1.5, 0.8, 1.2, 1.0, 0.6;
    const WeightField w(raw);
    ProjectionConfig cfg;
    cfg.dykstra_rounds = 50;

    SUBCASE("one butterfly violation") {
        Field C(3, 3);
        C << 10, 6, 1, 11, 8, 2, 12, 9, 3;
        C(0, 1) = 7.0;  // 10,7,1 over spacings 10,15 is concave
        REQUIRE(cone_violation(C, g) > 0.0);
        const Field P = project_field(C, g, w, cfg);
        const Field Q = oracle::cone_projection(C, g, w);
        CHECK(weighted_norm(P - Q, w, g) <= 1e-6);
    }
    SUBCASE("random infeasible surfaces") {
        std::mt19937_64 rng(21);
        for (int trial = 0; trial < 10; ++trial) {
            const Field C = random_field(3, 3, 3.0, rng).array() + 2.0;
            const Field P = project_field(C, g, w, {});
            const Field Q = oracle::cone_projection(C, g, w);
            CAPTURE(trial);
            CHECK(weighted_norm(P - Q, w, g) <= 1e-6);
        }
    }
}

TEST_CASE("projection is nonexpansive and idempotent") {
    const Grid2D g = Grid2D::uniform(80, 120, 21, 0.1, 1.1, 11);
    const WeightField w = WeightField::vega_bump(g, 100.0);
    MarketParams p;
    const Field base = generate_surface(p, g).clean.values;
    std::mt19937_64 rng(77);
    for (int i = 0; i < 5; ++i) {
        const Field a = base + random_field(11, 21, 0.5, rng);
        const Field b = base + random_field(11, 21, 0.5, rng);
        const Field pa = project_field(a, g, w, {});
        const Field pb = project_field(b, g, w, {});
        CHECK(weighted_norm(pa - pb, w, g) <= weighted_norm(a - b, w, g) + 1e-9);
        CHECK(cone_violation(pa, g) <= 1e-9);
        CHECK(weighted_norm(project_field(pa, g, w, {}) - pa, w, g) <= 1e-9);
    }
}

TEST_CASE("staged mode yields a feasible point") {
    const Grid2D g = Grid2D::uniform(80, 120, 11, 0.1, 1.1, 6);
    const WeightField w = WeightField::uniform(g);
    std::mt19937_64 rng(4);
    ProjectionConfig cfg;
    cfg.dykstra_rounds = 0;
    ProjectionInfo info;
    const Field P = project_field(random_field(6, 11, 1.0, rng), g, w, cfg, &info);
    CHECK(cone_violation(P, g) <= 1e-9);
    CHECK(info.rounds >= 1);
}

TEST_CASE("certificates") {
    const Grid2D g = Grid2D::uniform(80, 120, 21, 0.1, 1.1, 11);
    const WeightField w = WeightField::vega_bump(g, 100.0);
    MarketParams p;
    p.noise_sigma = 0.02;
    const auto s = generate_surface(p, g);

    SUBCASE("feasible base") {
        ProjectionCertificates c = projection_certificates(s.clean, w, {}, {}, 20, 5);
        CHECK(c.lip_emp <= 1.0 + 1e-9);
    }
    SUBCASE("noisy base") {
        const ProjectionCertificates c = projection_certificates(s.noisy, w, {}, {}, 200, 6);
        CHECK(c.lip_emp <= 1.01);
        CHECK(c.dup_ok);
        CHECK(c.dup_tv_path.size() == 9u);
    }
    CHECK_THROWS_AS(projection_certificates(s.clean, w, {}, {}, 0, 1), InputError);
}
