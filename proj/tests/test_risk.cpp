#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "arbcert/errors.hpp"
#include "arbcert/projection.hpp"
#include "arbcert/risk.hpp"
#include "qp_oracle.hpp"

using namespace arbcert;

TEST_CASE("empty budget is one") {
    RiskInputs in;
    in.iterations = 1;  // r_geo^T vanishes only for T >= 1
    const RiskBudget b = assemble_risk(in, {});
    CHECK(b.total == 1.0);
    for (double t : b.log_terms) CHECK(t == 0.0);
}

TEST_CASE("hand-computed bridge factor") {
    RiskInputs in;
    in.kkt = 0.24;
    in.r_geo = 0.9;
    in.iterations = 50;
    in.mu_hat = 0.01;
    in.epsilon = 0.03;
    in.delta_mr = 0.01;
    const RiskBudget b = assemble_risk(in, {});
    const double want = 1.0 + (0.24 + std::pow(0.9, 50)) / 0.01 + 0.04;
    CHECK(b.e_bridge == doctest::Approx(want).epsilon(1e-14));
    CHECK(b.e_bridge == doctest::Approx(25.5554).epsilon(1e-5));
    CHECK(b.total == doctest::Approx(want).epsilon(1e-14));
}

TEST_CASE("log terms add up to the total") {
    RiskInputs in;
    in.c1_error = 0.02;
    in.c1_stat = 0.01;
    in.erm_term = 0.3;
    in.kkt = 1e-3;
    in.r_geo = 0.95;
    in.iterations = 40;
    in.mu_hat = 0.05;
    in.epsilon = 0.01;
    in.delta_mr = 1e-4;
    in.chain_energy = 0.2;
    in.tol_band = 0.05;
    in.lambda2 = 0.4;
    in.slope_plus = 0.01;
    in.area_minus = 0.0;
    in.eps_prox = 0.1;
    RiskConstants k;
    k.c_appr = 2.0;
    const RiskBudget b = assemble_risk(in, k);
    const double sum = std::accumulate(b.log_terms.begin(), b.log_terms.end(), 0.0);
    CHECK(std::abs(std::log(b.total) - sum) <= 1e-12);
    CHECK(b.e_c1 == doctest::Approx(1.05));
    // The smaller of the two chain forms is used.
    CHECK(b.chain_energy_form == doctest::Approx(0.25));
    CHECK(b.chain_slope_form == doctest::Approx(0.01 / 0.4 + 0.05));
    CHECK(b.e_chain == doctest::Approx(1.075));
}

TEST_CASE("invalid risk inputs") {
    RiskInputs in;
    in.mu_hat = 0.0;
    CHECK_THROWS_AS(assemble_risk(in, {}), InputError);
    in = {};
    in.lambda2 = -1.0;
    CHECK_THROWS_AS(assemble_risk(in, {}), InputError);
    in = {};
    in.kkt = std::nan("");
    CHECK_THROWS_AS(assemble_risk(in, {}), InputError);
    in = {};
    in.erm_term = -0.1;
    CHECK_THROWS_AS(assemble_risk(in, {}), InputError);
}

TEST_CASE("proximal ratio") {
    const Grid2D g({90, 100, 115}, {0.2, 0.5, 1.0});
    const WeightField w = WeightField::uniform(g);
    Field target(3, 3);
    target << 10, 4, 1, 11, 5, 2, 12, 6, 3;
    const Surface T(g, target);
    SUBCASE("feasible pre-image does not move") {
        const Surface post(g, project_field(target, g, w, {}));
        CHECK(eps_prox(T, post, T, w) == 0.0);
        Field shifted = target.array() + 0.5;
        CHECK(eps_prox(Surface(g, shifted), Surface(g, project_field(shifted, g, w, {})), T, w) <=
              1e-9);
    }
    SUBCASE("infeasible pre-image against the QP oracle") {
        Field pre = target;
        pre(0, 1) = 7.0;
        const Field q = oracle::cone_projection(pre, g, w);
        const double want = weighted_norm(q - pre, w, g) / weighted_norm(pre - target, w, g);
        const Surface post(g, project_field(pre, g, w, {}));
        CHECK(std::abs(eps_prox(Surface(g, pre), post, T, w) - want) <= 1e-8);
        CHECK(eps_prox(Surface(g, pre), post, T, w) <= 1.0 + 1e-9);
    }
    const Grid2D other({90, 100, 120}, {0.2, 0.5, 1.0});
    CHECK_THROWS_AS(eps_prox(T, Surface(other, target), T, w), DimensionError);
}

TEST_CASE("total is monotone and dominates the additive form") {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(0.0, 0.5);
    for (int trial = 0; trial < 50; ++trial) {
        RiskInputs in;
        in.c1_error = u(rng);
        in.erm_term = u(rng);
        in.kkt = u(rng);
        in.r_geo = 0.5 + u(rng);
        in.iterations = 10;
        in.mu_hat = 0.1;
        in.epsilon = u(rng);
        in.chain_energy = u(rng);
        in.tol_band = u(rng);
        in.lambda2 = 0.5;
        in.slope_plus = u(rng);
        in.eps_prox = u(rng);
        const RiskBudget b = assemble_risk(in, {});
        const double additive = 1.0 + b.eps_prox + (b.e_c1 - 1.0) + (b.e_erm - 1.0) + (b.e_bridge - 1.0) +
                                (b.e_chain - 1.0);
        CHECK(additive <= b.total * (1.0 + 1e-15));

        for (double RiskInputs::*f : {&RiskInputs::kkt, &RiskInputs::r_geo, &RiskInputs::chain_energy,
                                       &RiskInputs::eps_prox, &RiskInputs::erm_term, &RiskInputs::tol_band}) {
            RiskInputs bumped = in;
            bumped.*f += 0.01;
            CHECK(assemble_risk(bumped, {}).total >= b.total);
        }
    }
}
