#pragma once

#include <array>
#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace arbcert {

struct AnisotropyConfig {
    int beta_K = 1;
    int beta_tau = 1;
    // Non-positive slopes are replaced by min(beta) / beta.
    double a_K = 0.0;
    double a_tau = 0.0;
    int level_L = 0;

    double slope_K() const;
    double slope_tau() const;
    void validate() const;
};

struct LevelPair {
    int i = 0;
    int j = 0;
    friend bool operator==(const LevelPair&, const LevelPair&) = default;
};

// All (i, j) >= 0 with a_K i + a_tau j <= L, sorted by (i + j, i).
std::vector<LevelPair> build_index_set(const AnisotropyConfig& cfg);

struct Rect {
    double x_lo = 0.0;
    double x_hi = 1.0;
    double y_lo = 0.0;
    double y_hi = 1.0;
};

using Target2D = std::function<double(double, double)>;

class CpwlFunction {
public:
    CpwlFunction() = default;
    // Orients triangles counter-clockwise and checks the mesh; throws StructureError.
    CpwlFunction(std::vector<Eigen::Vector2d> vertices, std::vector<std::array<int, 3>> triangles,
                 std::vector<double> values);

    // Kuhn triangulation of a tensor mesh (diagonal from lower-left to upper-right).
    static CpwlFunction tensor(const std::vector<double>& xs, const std::vector<double>& ys,
                               const std::function<double(int, int)>& value);

    const std::vector<Eigen::Vector2d>& vertices() const { return vertices_; }
    const std::vector<std::array<int, 3>>& triangles() const { return triangles_; }
    const std::vector<double>& values() const { return values_; }
    int vertex_count() const { return static_cast<int>(vertices_.size()); }
    int triangle_count() const { return static_cast<int>(triangles_.size()); }

    // Index of a triangle containing p, or -1.
    int locate(const Eigen::Vector2d& p) const;
    std::array<double, 3> barycentric(int tri, const Eigen::Vector2d& p) const;
    double evaluate(double x, double y) const;

    // Affine coefficients (a, b, c) of the barycentric coordinate of corner `corner` of `tri`.
    Eigen::Vector3d barycentric_form(int tri, int corner) const;

    std::vector<std::vector<int>> vertex_stars() const;
    int max_valence() const;
    // Max gradient norm over triangles.
    double lipschitz() const;
    Rect bounding_box() const;

private:
    void build_locator();

    std::vector<Eigen::Vector2d> vertices_;
    std::vector<std::array<int, 3>> triangles_;
    std::vector<double> values_;
    Rect box_;
    int bx_ = 0;
    int by_ = 0;
    std::vector<std::vector<int>> buckets_;
};

struct SmolyakFit {
    CpwlFunction cpwl;
    std::vector<LevelPair> index_set;
    std::vector<Eigen::Vector2d> sparse_nodes;  // in domain coordinates
    std::vector<double> sparse_values;
};

// Combination-technique Smolyak interpolant, realized on the tensor closure of
// the active breakpoints. Samples the target only at the sparse nodes.
SmolyakFit smolyak_fit(const Target2D& target, const AnisotropyConfig& cfg, const Rect& domain);

// Number of distinct dyadic nodes in the sparse grid of the index set.
int sparse_node_count(const AnisotropyConfig& cfg);

// Trapezoid L2 error on an (n+1) x (n+1) evaluation grid, with weight normalized to unit mean.
double weighted_l2_error(const std::function<double(double, double)>& approx,
                         const Target2D& target, const Rect& domain, int n,
                         const std::function<double(double, double)>& weight = nullptr);

struct PcaHead {
    Eigen::MatrixXd modes;         // strikes x k, orthonormal under the weighted inner product
    Eigen::MatrixXd coefficients;  // maturities x k
    Eigen::VectorXd eigenvalues;   // all, descending
    double residual = 0.0;         // weighted squared reconstruction error
};

// section_matrix is maturities x strikes; strike_weights are positive quadrature masses.
PcaHead pca_head(const Eigen::MatrixXd& section_matrix, const Eigen::VectorXd& strike_weights,
                 int k);

struct FrontierRow {
    int level = 0;
    int node_count = 0;
    int sparse_nodes = 0;
    long long param_count = 0;
    double error = 0.0;
    double error_envelope = 0.0;
    double wall_seconds = 0.0;
};

std::vector<FrontierRow> error_frontier(const Target2D& target, const std::vector<int>& levels,
                                        const AnisotropyConfig& base, const Rect& domain,
                                        int eval_n = 300,
                                        const std::function<double(double, double)>& weight = nullptr);

}  // namespace arbcert
