#pragma once

#include <cstdint>
#include <vector>

#include "arbcert/grid.hpp"

namespace arbcert {

// Implied vol sigma(K) = a + b * ((K - spot) / spot)^2; b = 0 gives a flat surface.
struct VolSpec {
    double a = 0.2;
    double b = 0.0;
};

struct MarketParams {
    double spot = 100.0;
    double rate = 0.0;
    double dividend = 0.0;
    VolSpec vol;
    double noise_sigma = 0.0;
    std::uint64_t seed = 7;
};

double implied_vol(const MarketParams& p, double K);

double bs_call(double S, double K, double tau, double r, double q, double sigma);
double bs_put(double S, double K, double tau, double r, double q, double sigma);

// Closed-form derivatives of the generated price surface, used as test oracles.
double model_call(const MarketParams& p, double K, double tau);
double model_call_KK(const MarketParams& p, double K, double tau);
double model_call_tau(const MarketParams& p, double K, double tau);
double model_local_variance(const MarketParams& p, double K, double tau);

struct GeneratedSurfaces {
    Surface clean;
    Surface noisy;
};

// Noise is i.i.d. Gaussian scaled by a normalized vega proxy, clamped at zero.
GeneratedSurfaces generate_surface(const MarketParams& params, const Grid2D& grid);

struct Density {
    std::vector<double> mass;  // on the strike nodes, sums to 1
    double normalization = 0.0;
};

// Breeden-Litzenberger atoms: slope jumps of the price row at interior strikes.
Density extract_density(const Surface& C, int tau_index);

double vix2_replication(const std::vector<double>& put_prices,
                        const std::vector<double>& call_prices,
                        const std::vector<double>& strikes, double spot, double rate, double tau);

}  // namespace arbcert
