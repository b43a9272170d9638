#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "arbcert/projection.hpp"

namespace arbcert {

enum class KernelKind { gaussian, imq };

// gaussian: exp(-|x-y|^2 / (2 scale^2)); imq: (1 + |x-y|^2 / scale^2)^(-shape).
struct KernelComponent {
    KernelKind kind = KernelKind::gaussian;
    double scale = 1.0;
    double shape = 0.5;
};

struct KernelMixture {
    std::vector<KernelComponent> components;
    std::vector<double> weights;
    double bandwidth = 1.0;
    // Set when every cross distance was zero and the bandwidth fell back to 1.
    bool fallback = false;

    void validate() const;
    double operator()(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const;
    double from_sq_dist(double d2) const;
};

// Samples are rows.
using Samples = Eigen::MatrixXd;

KernelMixture median_bandwidth_mixture(const Samples& X, const Samples& Y,
                                       const std::vector<int>& octaves = {-1, 0, 1});

struct IncompleteSpec {
    long Mxx = 0, Myy = 0, Mxy = 0;
    std::uint64_t seed = 0;
    bool with_replacement = true;
};

// Unbiased U-statistic with diagonal pairs excluded.
double mmd2_full(const Samples& X, const Samples& Y, const KernelMixture& k);
// Pair averages over sampled index sets; within-sample pairs are unordered i < i'.
double mmd2_incomplete(const Samples& X, const Samples& Y, const KernelMixture& k,
                       const IncompleteSpec& spec);

struct ChainEnergy {
    double total = 0.0;
    std::vector<double> edges;
    std::vector<double> bandwidths;
};

// Weighted sum of per-edge MMD^2 with a median-heuristic mixture fitted per edge.
// An empty incomplete spec pointer selects the full estimator.
ChainEnergy chain_energy(const std::vector<Samples>& slices, const std::vector<double>& edge_weights,
                         const std::vector<int>& octaves = {-1, 0, 1},
                         const IncompleteSpec* incomplete = nullptr);

// gamma = +inf gives exponent 1. alpha[k-1] holds alpha(k).
double n_eff(int n, const std::vector<double>& alpha, double gamma, double c_gamma);

// Bartlett-weighted absolute autocorrelations, zero beyond the bandwidth.
// bandwidth < 0 picks floor(4 (n/100)^(2/9)).
std::vector<double> bartlett_alpha(const std::vector<double>& residuals, int bandwidth = -1);

struct ChainSeries {
    std::vector<double> sizes;
    std::vector<double> values;
    std::vector<double> neff;

    void validate() const;
};

struct FirSmoother {
    // One row of weights per output index, with the first input index it touches.
    std::vector<std::vector<double>> rows;
    std::vector<int> starts;
    double l1 = 1.0;

    std::vector<double> apply(const std::vector<double>& y) const;
};

// Least-norm filters exact on polynomials of degree <= 5, symmetric away from the ends.
FirSmoother degree5_smoother(int length, int halfwidth);

struct TailDiagnostics {
    double slope_tail = 0.0;
    double area_drop = 0.0;
    std::vector<double> envelope;
    std::vector<double> smoothed;
    int tail_begin = 0;
    int tail_end = 0;  // exclusive
    double fir_l1 = 1.0;
    double baseline_area = 0.0;
};

TailDiagnostics tail_diagnostics(const ChainSeries& series, double tail_fraction = 0.1,
                                 int window = 3, int fir_halfwidth = 6,
                                 Direction envelope = Direction::nonincreasing);

struct ToleranceBands {
    double per_point = 0.0;
    double slope = 0.0;
    double area = 0.0;
};

// Per-point C sqrt(log(2S/delta)/n_eff) maximized over the tail; slope band divides by the
// tail x-spread, area band multiplies by the tail spacing sum.
ToleranceBands tolerance_band(int S, double delta, const std::vector<double>& neff_tail, double C,
                              const std::vector<double>& tail_x);

struct GateThresholds {
    double slope_max = 0.12;
    double area_min = -0.02;
    double tail_fraction = 0.1;
    int window = 3;
    int fir_halfwidth = 6;
    double band_constant = 1.0;
    Direction envelope = Direction::nonincreasing;
};

struct GateDecision {
    double slope_tail = 0.0;
    double area_drop = 0.0;
    double band_slope = 0.0;
    // Area band divided by the baseline area, matching the normalized area_drop.
    double band_area = 0.0;
    double band_point = 0.0;
    double fir_l1 = 0.0;
    bool pass = false;
    int tail_begin = 0, tail_end = 0;
    std::string envelope_direction;
};

GateDecision gate_v2(const ChainSeries& series, const GateThresholds& th = {}, double delta = 0.05);

}  // namespace arbcert
