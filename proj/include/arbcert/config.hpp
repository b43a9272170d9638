#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace arbcert {

struct GridSection {
    double k_lo = 80.0, k_hi = 120.0;
    int n_strikes = 21;
    double tau_lo = 0.1, tau_hi = 1.1;
    int n_maturities = 11;
};

struct MarketSection {
    double spot = 100.0;
    double rate = 0.0;
    double dividend = 0.0;
    double vol_a = 0.2;
    double vol_b = 0.0;
    double noise_sigma = 0.02;
    std::uint64_t seed = 7;
};

struct WeightSection {
    std::string kind = "vega";  // vega | uniform
    double rel_width = 0.15;
    double floor = 0.25;
};

struct MeshSection {
    double c1 = 1.0, c2 = 1.0;
};

struct FdSection {
    int window_K = 5;
    int window_tau = 3;
    double clip_lo = 1e-6;
    double clip_hi = 4.0;
    double denom_floor = 1e-8;
};

struct FitSection {
    int level = 5;
    int beta_K = 1, beta_tau = 1;
    std::vector<int> frontier_levels{2, 3, 4, 5};
    int eval_n = 200;
    int relu_points = 10000;
    int d_max = 8;
    double xi = 1.0;
};

struct BridgeSection {
    int n = 31;
    double epsilon0 = 1.0;
    double ratio = 0.3;
    int stages = 4;
    std::string feature_kind = "nystrom";
    int rank = 8;
    double tol = 1e-6;
    int t_max = 5000;
    double gamma_min = 0.1, gamma_max = 1.0;
    double ridge = 1e-8;
};

struct ProjectionSection {
    double tv2_lambda = 0.0;
    int dykstra_rounds = 2000;
    int path_steps = 8;
    double dykstra_tol = 1e-14;
    int lipschitz_trials = 100;
};

struct ChainSection {
    int size_min = 64, size_max = 1024, n_sizes = 24;
    std::vector<int> octaves{-1, 0, 1};
    double gamma = 2.0, c_gamma = 1.0;
    double delta = 0.05;
    double band_constant = 1.0;
    double tail_fraction = 0.1;
    int window = 3;
    int fir_halfwidth = 6;
};

struct DescentSection {
    double alpha = 1.0;
    double eta0 = 0.25;
    double noise_sigma = 1e-4;
    double lambda_chain = 0.05;
    double fit_weight = 1.0;
    int steps = 30;
    bool trust_region = true;
    double trust_tol = 1e-6;
};

struct RiskSection {
    double c_appr = 1.0, c_erm = 1.0, c_br1 = 1.0, c_br2 = 1.0, c3 = 1.0, c_ch = 1.0, c = 1.0;
};

struct ThresholdSection {
    double kkt = 0.24;
    double r_geo = 1.05;
    double mu_hat_lo = 1e-4, mu_hat_hi = 1e-1;
    double slope = 0.12;
    double area_drop = -0.02;
    double lipschitz = 1.01;
    double relu_max_abs = 1e-8;
    int relu_depth = 4;
};

struct RunConfig {
    GridSection grid;
    MarketSection market;
    WeightSection weight;
    MeshSection mesh;
    FdSection fd;
    FitSection fit;
    BridgeSection bridge;
    ProjectionSection projection;
    ChainSection chain;
    DescentSection descent;
    RiskSection risk;
    ThresholdSection thresholds;
    int threads = 1;

    void validate() const;
    nlohmann::json to_json() const;
    // Missing keys take defaults; unknown keys throw InputError.
    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig load(const std::string& path);
};

}  // namespace arbcert
