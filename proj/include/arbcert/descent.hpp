#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

namespace arbcert {

struct PathGraph {
    int T = 0;
    std::vector<double> edge_weights;
    Eigen::MatrixXd laplacian;
    Eigen::VectorXd eigenvalues;  // ascending
    double lambda2 = 0.0;
};

PathGraph path_laplacian(int T, const std::vector<double>& edge_weights);

// Rows of `states` are the chain nodes. Sum of w_t |x_t - x_{t+1}|^2, cross-checked against
// tr(X^T L X).
double chain_dirichlet_energy(const Eigen::MatrixXd& states, const PathGraph& graph);

struct DescentConfig {
    double alpha = 1.0;
    double eta0 = 0.25;
    double noise_sigma = 0.0;
    double lambda_chain = 1.0;
    // Weight of the quadratic data-fit term; 0 leaves the chain term alone.
    double fit_weight = 1.0;
    int steps = 100;
    bool trust_region = true;
    double trust_tol = 1e-6;

    void validate() const;
};

struct DescentStep {
    int step = 0;
    double chain_energy = 0.0;
    double data_fit = 0.0;
    bool accepted = true;
};

struct DescentResult {
    Eigen::MatrixXd states;
    std::vector<DescentStep> trajectory;
};

using Projector = std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>;

Projector identity_projector();

// x <- x - eta_t (fit_weight 2(x - target) + lambda 2 L x + sigma xi), eta_t = eta0/(t+1),
// then x <- (1-alpha) x + alpha P(x). The trajectory starts with the initial state.
DescentResult projected_descent(const Eigen::MatrixXd& initial, const Eigen::MatrixXd& targets,
                                const PathGraph& graph, const Projector& projector,
                                const DescentConfig& cfg, std::uint64_t seed);

}  // namespace arbcert
