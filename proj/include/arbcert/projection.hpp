#pragma once

#include <cstdint>
#include <vector>

#include "arbcert/fd_ops.hpp"
#include "arbcert/grid.hpp"

namespace arbcert {

enum class Direction { nondecreasing, nonincreasing };

struct ProjectionConfig {
    double tv2_lambda = 0.0;
    // 0 runs the staged pipeline (calendar, then convexity, repeated until feasible).
    int dykstra_rounds = 2000;
    int path_steps = 8;
    double dykstra_tol = 1e-14;

    void validate() const;
};

struct ProjectionCertificates {
    double lip_emp = 0.0;
    bool dup_ok = false;
    std::vector<double> dup_tv_path;
};

struct ProjectionInfo {
    int rounds = 0;
    bool tv2_applied = false;
    double max_violation = 0.0;
};

std::vector<double> pav_isotonic(const std::vector<double>& seq, const std::vector<double>& weights,
                                 Direction dir = Direction::nondecreasing);

// Weighted least-squares projection of a row onto sequences with nondecreasing slopes.
std::vector<double> convex_in_strike(const std::vector<double>& row,
                                     const std::vector<double>& weights,
                                     const std::vector<double>& strikes);

// Quadrature-times-weight mass of each node; the weighted norm is sum(mass * f^2).
Field node_mass(const Grid2D& grid, const WeightField& w);

// Largest violation of calendar monotonicity, strike convexity (slope form) and nonnegativity.
double cone_violation(const Field& C, const Grid2D& grid);

Field project_field(const Field& C, const Grid2D& grid, const WeightField& w,
                    const ProjectionConfig& cfg, ProjectionInfo* info = nullptr);
Surface project_to_cone(const Surface& C, const WeightField& w, const ProjectionConfig& cfg,
                        ProjectionInfo* info = nullptr);

ProjectionCertificates projection_certificates(const Surface& C_raw, const WeightField& w,
                                               const ProjectionConfig& cfg, const FdConfig& fd,
                                               int trials, std::uint64_t seed);

}  // namespace arbcert
