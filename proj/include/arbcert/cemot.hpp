#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace arbcert {

enum class FeatureKind { dense, nystrom, rff };

FeatureKind parse_feature_kind(const std::string& s);
std::string to_string(FeatureKind k);

// Three marginals on a common state grid, coupled by a separable cost c12 + c23 and one
// scalar martingale moment condition.
//
// The moment condition is E[g12(X1,X2) + g23(X2,X3)] = rhs with
//   g12 = x1^2/2 - x1 x2,  g23 = x2 x3 - x3^2/2,
// i.e. E[(X2 - (X1+X3)/2)(X3 - X1)] = E[X2^2] - (E[X1^2] + E[X3^2])/2. Every martingale
// coupling satisfies it, and unlike the first-moment version it depends on the coupling.
struct TriMarginalProblem {
    Eigen::VectorXd x;
    Eigen::VectorXd m1, m2, m3;
    // Empty means squared distance on x.
    Eigen::MatrixXd c12, c23;
    std::vector<double> epsilon_schedule{1.0};
    // 0 selects full rank.
    int rank = 0;
    FeatureKind feature_kind = FeatureKind::dense;
    // Added to the martingale right-hand side; used for sensitivity studies.
    double rhs_shift = 0.0;
    std::uint64_t rff_seed = 11;

    void validate() const;
    int size() const { return static_cast<int>(x.size()); }
    Eigen::MatrixXd cost12() const;
    Eigen::MatrixXd cost23() const;
    Eigen::MatrixXd g12() const;
    Eigen::MatrixXd g23() const;
    double martingale_rhs() const;
};

// K ~= scale * phi1 * phi2^T with whitened factors; log_kernel is what the solver uses.
struct KernelFactors {
    Eigen::MatrixXd phi1, phi2;
    double scale = 1.0;
    Eigen::MatrixXd log_kernel;
    // Spectral-norm error of the factorization against the exact Gibbs kernel.
    double delta = 0.0;
};

struct StageKernels {
    double epsilon = 1.0;
    KernelFactors k12, k23;
};

struct BridgeKernels {
    FeatureKind kind = FeatureKind::dense;
    int rank = 0;
    std::vector<StageKernels> stages;
    double max_delta() const;
};

KernelFactors factorize_kernel(const Eigen::MatrixXd& cost, double epsilon, FeatureKind kind,
                               int rank, const Eigen::VectorXd& x, bool squared_distance,
                               std::uint64_t seed);

BridgeKernels build_bridge(const TriMarginalProblem& problem);

// Largest singular value by power iteration on A^T A.
double spectral_norm_estimate(const Eigen::MatrixXd& A, int iters = 300);

using Residual4 = std::array<double, 4>;

struct BridgeState {
    Eigen::VectorXd log_u, log_v, log_w;
    double eta = 0.0;
    double epsilon = 1.0;
    std::vector<Residual4> residual_trace;
    double damping = 1.0;

    static BridgeState zeros(int n, double epsilon);
    std::vector<double> kkt_trace() const;
};

struct CertificateSet {
    double kkt = 0.0;
    Residual4 kkt_components{};
    double r_geo = 0.0;
    double r_geo_q10 = 0.0;
    double r_geo_q90 = 0.0;
    double mu_hat = 0.0;
    int iterations = 0;
    double epsilon_final = 0.0;
    bool converged = false;
    std::vector<std::string> fallbacks_taken;
};

struct SinkhornOptions {
    double tol = 0.24;
    int t_max = 5000;
    double gamma_min = 0.1;
    double gamma_max = 1.0;
    double ridge = 1e-8;

    void validate() const;
};

// Marginals and pair marginals of the coupling implied by a state.
struct CouplingSummary {
    Eigen::VectorXd p1, p2, p3;
    Eigen::MatrixXd p12, p23;
    double mass = 0.0;
    // sum(pi * g) - rhs
    double martingale = 0.0;
};

CouplingSummary coupling_summary(const BridgeState& s, const TriMarginalProblem& problem,
                                 const StageKernels& k);

// Full n^3 coupling, index (i*n + j)*n + k. Only meant for small n.
std::vector<double> coupling_tensor(const BridgeState& s, const TriMarginalProblem& problem,
                                    const StageKernels& k);

std::pair<double, Residual4> kkt_residual(const BridgeState& s, const TriMarginalProblem& problem,
                                          const StageKernels& k);

// eps*(<log u,m1> + <log v,m2> + <log w,m3>) + eta*rhs - eps*mass(pi)
double dual_value(const BridgeState& s, const TriMarginalProblem& problem, const StageKernels& k);

// <c,pi> + eps * sum pi (log(pi/rho) - 1) with rho = m1 x m2 x m3 and c = -eps log K.
// Equals dual_value at a feasible point.
double primal_value(const BridgeState& s, const TriMarginalProblem& problem,
                    const StageKernels& k);

// <c,pi> + eps * KL(pi | rho); the entropic transport value, >= the unregularized optimum.
double entropic_value(const BridgeState& s, const TriMarginalProblem& problem,
                      const StageKernels& k);

struct RatioStats {
    double median = 0.0, q10 = 0.0, q90 = 0.0;
};

// Tail statistics of res[t+1]/res[t] over the last max(10, 10%) ratios.
RatioStats geometric_ratio(const std::vector<double>& residuals);

// Smallest eigenvalue of phi2^T diag(m1+m3) phi2 + ridge I, floored at 1e-12.
double mu_hat_from_features(const Eigen::MatrixXd& phi2, const Eigen::VectorXd& m1,
                            const Eigen::VectorXd& m3, double ridge);

CertificateSet certify(const BridgeState& s, const TriMarginalProblem& problem,
                       const StageKernels& k, double ridge);

struct BridgeResult {
    BridgeState state;
    CertificateSet certificates;
    std::vector<double> stage_kkt;
    std::vector<double> dual_trace;
};

BridgeResult tri_sinkhorn(const TriMarginalProblem& problem, const BridgeKernels& kernels,
                          const SinkhornOptions& opts = {});

}  // namespace arbcert
