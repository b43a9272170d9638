#include "arbcert/risk.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>

#include "arbcert/errors.hpp"

namespace arbcert {

double eps_prox(const Surface& C_pre, const Surface& C_post, const Surface& C_target,
                const WeightField& w) {
    if (!C_pre.grid.same_as(C_post.grid) || !C_pre.grid.same_as(C_target.grid)) {
        throw DimensionError("surfaces must share a grid");
    }
    const double den = weighted_norm(C_pre.values - C_target.values, w, C_pre.grid);
    if (den == 0.0) return 0.0;
    return weighted_norm(C_post.values - C_pre.values, w, C_pre.grid) / den;
}

RiskBudget assemble_risk(const RiskInputs& in, const RiskConstants& k) {
    if (!(in.mu_hat > 0.0)) throw InputError("mu_hat must be positive");
    if (!(in.lambda2 > 0.0)) throw InputError("lambda2 must be positive");
    for (double v : {in.c1_error, in.c1_stat, in.erm_term, in.kkt, in.r_geo, in.epsilon, in.delta_mr,
                     in.chain_energy, in.tol_band, in.slope_plus, in.area_minus, in.eps_prox}) {
        if (!std::isfinite(v)) throw InputError("risk inputs must be finite");
        if (v < 0.0) throw InputError("risk inputs must be nonnegative");
    }
    if (in.iterations < 0) throw InputError("iteration count must be nonnegative");

    RiskBudget b;
    b.eps_prox = in.eps_prox;
    b.e_c1 = 1.0 + k.c_appr * in.c1_error + in.c1_stat;
    b.e_erm = 1.0 + k.c_erm * in.erm_term;
    b.e_bridge = 1.0 + (k.c_br1 * in.kkt + k.c_br2 * std::pow(in.r_geo, in.iterations)) / in.mu_hat +
                 k.c3 * (in.epsilon + in.delta_mr);
    b.chain_energy_form = k.c_ch * (in.chain_energy + in.tol_band);
    b.chain_slope_form = k.c / in.lambda2 * (in.slope_plus + in.area_minus) + in.tol_band;
    b.e_chain = 1.0 + std::min(b.chain_energy_form, b.chain_slope_form);
    b.total = (1.0 + b.eps_prox) * b.e_c1 * b.e_erm * b.e_bridge * b.e_chain;
    b.log_terms = {std::log1p(b.eps_prox), std::log(b.e_c1), std::log(b.e_erm), std::log(b.e_bridge),
                   std::log(b.e_chain)};
    return b;
}

}  // namespace arbcert
