#pragma once

#include <array>

#include "arbcert/grid.hpp"

namespace arbcert {

// |C_post - C_pre|_w / |C_pre - C_target|_w, or 0 when the denominator vanishes.
double eps_prox(const Surface& C_pre, const Surface& C_post, const Surface& C_target,
                const WeightField& w);

struct RiskInputs {
    double c1_error = 0.0;
    double c1_stat = 0.0;
    double erm_term = 0.0;
    double kkt = 0.0;
    double r_geo = 0.0;
    int iterations = 0;
    double mu_hat = 1.0;
    double epsilon = 0.0;
    double delta_mr = 0.0;
    double chain_energy = 0.0;
    double tol_band = 0.0;
    double lambda2 = 1.0;
    double slope_plus = 0.0;
    double area_minus = 0.0;
    double eps_prox = 0.0;
};

struct RiskConstants {
    double c_appr = 1.0;
    double c_erm = 1.0;
    double c_br1 = 1.0;
    double c_br2 = 1.0;
    double c3 = 1.0;
    double c_ch = 1.0;
    double c = 1.0;
};

struct RiskBudget {
    double eps_prox = 0.0;
    double e_c1 = 1.0, e_erm = 1.0, e_bridge = 1.0, e_chain = 1.0;
    double chain_energy_form = 0.0;
    double chain_slope_form = 0.0;
    double total = 1.0;
    // log(1+eps_prox), log e_c1, log e_erm, log e_bridge, log e_chain
    std::array<double, 5> log_terms{};
};

RiskBudget assemble_risk(const RiskInputs& in, const RiskConstants& k);

}  // namespace arbcert
