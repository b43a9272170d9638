#include "arbcert/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "arbcert/errors.hpp"

namespace arbcert {

namespace {

double norm_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }
double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

struct D12 {
    double d1;
    double d2;
};

D12 d12(double S, double K, double tau, double r, double q, double sigma) {
    const double sq = sigma * std::sqrt(tau);
    const double d1 = (std::log(S / K) + (r - q + 0.5 * sigma * sigma) * tau) / sq;
    return {d1, d1 - sq};
}

double vol_slope(const MarketParams& p, double K) {
    return 2.0 * p.vol.b * (K - p.spot) / (p.spot * p.spot);
}

double vol_curv(const MarketParams& p) { return 2.0 * p.vol.b / (p.spot * p.spot); }

}  // namespace

double implied_vol(const MarketParams& p, double K) {
    const double m = (K - p.spot) / p.spot;
    return p.vol.a + p.vol.b * m * m;
}

double bs_call(double S, double K, double tau, double r, double q, double sigma) {
    const auto [d1, d2] = d12(S, K, tau, r, q, sigma);
    return S * std::exp(-q * tau) * norm_cdf(d1) - K * std::exp(-r * tau) * norm_cdf(d2);
}

double bs_put(double S, double K, double tau, double r, double q, double sigma) {
    const auto [d1, d2] = d12(S, K, tau, r, q, sigma);
    return K * std::exp(-r * tau) * norm_cdf(-d2) - S * std::exp(-q * tau) * norm_cdf(-d1);
}

double model_call(const MarketParams& p, double K, double tau) {
    return bs_call(p.spot, K, tau, p.rate, p.dividend, implied_vol(p, K));
}

double model_call_KK(const MarketParams& p, double K, double tau) {
    const double s = implied_vol(p, K);
    const auto [d1, d2] = d12(p.spot, K, tau, p.rate, p.dividend, s);
    const double disc = std::exp(-p.rate * tau);
    const double rt = std::sqrt(tau);
    const double gamma_K = disc * norm_pdf(d2) / (K * s * rt);
    const double vega = K * disc * norm_pdf(d2) * rt;
    const double vanna_K = disc * norm_pdf(d2) * d1 / s;
    const double volga = vega * d1 * d2 / s;
    const double s1 = vol_slope(p, K);
    return gamma_K + 2.0 * vanna_K * s1 + volga * s1 * s1 + vega * vol_curv(p);
}

double model_call_tau(const MarketParams& p, double K, double tau) {
    const double s = implied_vol(p, K);
    const auto [d1, d2] = d12(p.spot, K, tau, p.rate, p.dividend, s);
    const double S = p.spot;
    return S * std::exp(-p.dividend * tau) * norm_pdf(d1) * s / (2.0 * std::sqrt(tau)) -
           p.dividend * S * std::exp(-p.dividend * tau) * norm_cdf(d1) +
           p.rate * K * std::exp(-p.rate * tau) * norm_cdf(d2);
}

double model_local_variance(const MarketParams& p, double K, double tau) {
    const double s = implied_vol(p, K);
    const auto [d1, d2] = d12(p.spot, K, tau, p.rate, p.dividend, s);
    const double disc = std::exp(-p.rate * tau);
    const double call_K = -disc * norm_cdf(d2) + K * disc * norm_pdf(d2) * std::sqrt(tau) * vol_slope(p, K);
    const double num = model_call_tau(p, K, tau) + (p.rate - p.dividend) * K * call_K +
                       p.dividend * model_call(p, K, tau);
    return 2.0 * num / (K * K * model_call_KK(p, K, tau));
}

GeneratedSurfaces generate_surface(const MarketParams& params, const Grid2D& grid) {
    const int T = grid.n_maturities();
    const int N = grid.n_strikes();
    Field clean(T, N);
    Field vega(T, N);
    for (int t = 0; t < T; ++t) {
        const double tau = grid.maturities()[t];
        for (int k = 0; k < N; ++k) {
            const double K = grid.strikes()[k];
            const double s = implied_vol(params, K);
            if (!(s > 0.0)) {
                throw InputError("volatility descriptor is not positive on the grid");
            }
            clean(t, k) = model_call(params, K, tau);
            const auto [d1, d2] = d12(params.spot, K, tau, params.rate, params.dividend, s);
            vega(t, k) = K * std::exp(-params.rate * tau) * norm_pdf(d2) * std::sqrt(tau);
        }
    }
    Field noisy = clean;
    if (params.noise_sigma > 0.0) {
        std::mt19937_64 rng(params.seed);
        std::normal_distribution<double> z(0.0, 1.0);
        const double vmax = vega.maxCoeff();
        for (int t = 0; t < T; ++t) {
            for (int k = 0; k < N; ++k) {
                const double e = params.noise_sigma * (vega(t, k) / vmax) * z(rng);
                noisy(t, k) = std::max(0.0, clean(t, k) + e);
            }
        }
    }
    return {Surface(grid, std::move(clean)), Surface(grid, std::move(noisy))};
}

Density extract_density(const Surface& C, int tau_index) {
    const Grid2D& g = C.grid;
    if (tau_index < 0 || tau_index >= g.n_maturities()) {
        throw DimensionError("maturity index out of range");
    }
    const int N = g.n_strikes();
    const auto& K = g.strikes();
    Density d;
    d.mass.assign(static_cast<std::size_t>(N), 0.0);
    double total = 0.0;
    for (int k = 1; k + 1 < N; ++k) {
        const double left = (C.values(tau_index, k) - C.values(tau_index, k - 1)) / (K[k] - K[k - 1]);
        const double right = (C.values(tau_index, k + 1) - C.values(tau_index, k)) / (K[k + 1] - K[k]);
        double m = right - left;
        if (m < 1e-12) {
            m = 0.0;
        }
        d.mass[k] = m;
        total += m;
    }
    if (!(total > 0.0)) {
        throw InputError("price row has no curvature; density is degenerate");
    }
    for (double& m : d.mass) {
        m /= total;
    }
    d.normalization = total;
    return d;
}

double vix2_replication(const std::vector<double>& put_prices,
                        const std::vector<double>& call_prices,
                        const std::vector<double>& strikes, double spot, double rate, double tau) {
    const std::size_t n = strikes.size();
    if (put_prices.size() != n || call_prices.size() != n) {
        throw DimensionError("price and strike vectors differ in length");
    }
    if (!(tau > 0.0)) {
        throw InputError("tau must be positive");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!(strikes[i] > 0.0)) {
            throw InputError("strikes must be positive");
        }
        if (i > 0 && !(strikes[i] > strikes[i - 1])) {
            throw InputError("strikes must be increasing");
        }
    }
    double integral = 0.0;
    auto integrand = [&](std::size_t i) {
        const double otm = strikes[i] < spot ? put_prices[i] : call_prices[i];
        return otm / (strikes[i] * strikes[i]);
    };
    for (std::size_t i = 0; i + 1 < n; ++i) {
        integral += 0.5 * (strikes[i + 1] - strikes[i]) * (integrand(i) + integrand(i + 1));
    }
    return std::max(0.0, 2.0 * std::exp(rate * tau) / tau * integral);
}

}  // namespace arbcert
