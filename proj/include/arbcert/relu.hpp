#pragma once

#include <vector>

#include <Eigen/Sparse>
#include <json.hpp>

#include "arbcert/smolyak.hpp"

namespace arbcert {

struct ReluLayer {
    int in_dim = 0;
    int out_dim = 0;
    bool relu = true;
    std::vector<Eigen::Triplet<double>> entries;
    Eigen::VectorXd bias;
    Eigen::SparseMatrix<double, Eigen::RowMajor> W;

    void finalize();
};

// Feed-forward net on R^2 with sparse layers; the last layer is the linear readout.
class ReluNet {
public:
    void push(ReluLayer layer);

    double evaluate(double x, double y) const;
    // Number of rectifier layers.
    int depth() const;
    long long param_count() const;
    // Product of layer spectral norms.
    double lipschitz_upper_bound() const;
    const std::vector<ReluLayer>& layers() const { return layers_; }

    nlohmann::json to_json() const;
    static ReluNet from_json(const nlohmann::json& j);

private:
    std::vector<ReluLayer> layers_;
};

struct CompiledNet {
    ReluNet net;
    int vertices = 0;
    int triangles = 0;
    int max_valence = 0;
    // Construction constants: param_count <= c1 * V + c2 * M.
    double c1 = 0.0;
    double c2 = 0.0;
    bool depth_within_bound = true;
};

// Hat expansion with per-vertex comparator trees; truncation is applied to each
// barycentric form in the first layer, so depth is 1 + ceil(log2(max valence)).
// Throws StructureError when a vertex star is not convex.
CompiledNet compile_to_relu(const CpwlFunction& f, int d_max = 8);

}  // namespace arbcert
