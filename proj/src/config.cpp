#include "arbcert/config.hpp"

#include <fstream>

#include "arbcert/errors.hpp"

namespace arbcert {

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(GridSection, k_lo, k_hi, n_strikes, tau_lo, tau_hi,
                                                n_maturities)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(MarketSection, spot, rate, dividend, vol_a, vol_b,
                                                noise_sigma, seed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(WeightSection, kind, rel_width, floor)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(MeshSection, c1, c2)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(FdSection, window_K, window_tau, clip_lo, clip_hi,
                                                denom_floor)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(FitSection, level, beta_K, beta_tau, frontier_levels,
                                                eval_n, relu_points, d_max, xi)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(BridgeSection, n, epsilon0, ratio, stages,
                                                feature_kind, rank, tol, t_max, gamma_min, gamma_max,
                                                ridge)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ProjectionSection, tv2_lambda, dykstra_rounds,
                                                path_steps, dykstra_tol, lipschitz_trials)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ChainSection, size_min, size_max, n_sizes, octaves,
                                                gamma, c_gamma, delta, band_constant, tail_fraction,
                                                window, fir_halfwidth)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(DescentSection, alpha, eta0, noise_sigma,
                                                lambda_chain, fit_weight, steps, trust_region,
                                                trust_tol)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(RiskSection, c_appr, c_erm, c_br1, c_br2, c3, c_ch, c)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ThresholdSection, kkt, r_geo, mu_hat_lo, mu_hat_hi,
                                                slope, area_drop, lipschitz, relu_max_abs, relu_depth)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(RunConfig, grid, market, weight, mesh, fd, fit,
                                                bridge, projection, chain, descent, risk, thresholds,
                                                threads)

namespace {

void reject_unknown(const nlohmann::json& given, const nlohmann::json& known, const std::string& path) {
    if (!given.is_object()) return;
    if (!known.is_object()) throw InputError("config key " + path + " must not be an object");
    for (const auto& [key, value] : given.items()) {
        const std::string here = path.empty() ? key : path + "." + key;
        if (!known.contains(key)) throw InputError("unknown config key: " + here);
        reject_unknown(value, known.at(key), here);
    }
}

void require(bool ok, const char* what) {
    if (!ok) throw InputError(std::string("invalid config: ") + what);
}

}  // namespace

void RunConfig::validate() const {
    require(grid.k_hi > grid.k_lo && grid.k_lo > 0.0, "strike range");
    require(grid.tau_hi > grid.tau_lo && grid.tau_lo > 0.0, "maturity range");
    require(grid.n_strikes >= 3 && grid.n_maturities >= 3, "grid needs 3 nodes per axis");
    require(market.spot > 0.0 && market.noise_sigma >= 0.0, "market parameters");
    require(weight.kind == "vega" || weight.kind == "uniform", "weight kind");
    require(fit.level >= 1 && fit.beta_K >= 1 && fit.beta_tau >= 1, "fit levels");
    require(fit.eval_n >= 2 && fit.relu_points >= 1 && fit.d_max >= 2, "fit sampling");
    require(bridge.n >= 2 && bridge.stages >= 1 && bridge.epsilon0 > 0.0, "bridge size");
    require(bridge.ratio > 0.0 && bridge.ratio < 1.0, "bridge epsilon ratio");
    require(bridge.rank >= 0 && bridge.rank <= bridge.n, "bridge rank");
    require(grid.n_maturities >= 3, "bridge needs three maturities");
    require(projection.lipschitz_trials >= 1, "projection trials");
    require(chain.size_min >= 2 && chain.size_max > chain.size_min && chain.n_sizes >= 4,
            "chain sizes");
    require(chain.delta > 0.0 && chain.delta < 1.0, "chain delta");
    require(threads >= 1, "threads");
    require(thresholds.mu_hat_lo < thresholds.mu_hat_hi, "mu_hat band");
}

nlohmann::json RunConfig::to_json() const {
    nlohmann::json j = *this;
    return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw InputError("config must be a JSON object");
    reject_unknown(j, RunConfig{}.to_json(), "");
    RunConfig c;
    try {
        c = j.get<RunConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("config type error: ") + e.what());
    }
    c.validate();
    return c;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config: " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw InputError(std::string("config parse error: ") + e.what());
    }
    return from_json(j);
}

}  // namespace arbcert
