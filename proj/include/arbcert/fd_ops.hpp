#pragma once

#include <Eigen/Dense>

#include "arbcert/grid.hpp"

namespace arbcert {

struct FdConfig {
    int window_K = 5;
    int window_tau = 3;
    double clip_lo = 1e-6;
    double clip_hi = 4.0;
    double denom_floor = 1e-8;

    void validate(const Grid2D& grid) const;
};

struct FdDerivatives {
    Field C_KK;
    Field C_tau;
};

struct DupireField {
    Field sigma2;
    BoolField clipped;
};

FdDerivatives fd_derivatives(const Surface& C, const FdConfig& cfg);

// sigma^2 = 2 C_tau / (K^2 C_KK); denominator floored, then clipped.
DupireField dupire_field(const Surface& C, const FdConfig& cfg);

// Sum over grid edges of edge weight (mean of endpoint w) times |jump of sigma^2|.
double dupire_total_variation(const DupireField& field, const WeightField& w);

// Dense operators acting on row-major vec(field), index t * n_strikes + k.
Eigen::MatrixXd assemble_dkk(const Grid2D& grid, const FdConfig& cfg);
Eigen::MatrixXd assemble_dtau(const Grid2D& grid, const FdConfig& cfg);

// Operator norm of D from L2(w) to L2(w), by power iteration.
double weighted_operator_norm(const Eigen::MatrixXd& D, const WeightField& w, const Grid2D& grid,
                              int iterations = 500);

}  // namespace arbcert
