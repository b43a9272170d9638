#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace arbcert {

// Node values on the tensor mesh; rows index maturities, columns index strikes.
using Field = Eigen::MatrixXd;
using BoolField = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

class Grid2D {
public:
    Grid2D() = default;
    Grid2D(std::vector<double> strikes, std::vector<double> maturities);

    static Grid2D uniform(double k_lo, double k_hi, int n_strikes, double t_lo, double t_hi,
                          int n_maturities);

    const std::vector<double>& strikes() const { return strikes_; }
    const std::vector<double>& maturities() const { return maturities_; }
    int n_strikes() const { return static_cast<int>(strikes_.size()); }
    int n_maturities() const { return static_cast<int>(maturities_.size()); }
    double h_K() const { return h_K_; }
    double h_tau() const { return h_tau_; }

    // Trapezoid weights along each axis.
    const Eigen::VectorXd& strike_quadrature() const { return q_K_; }
    const Eigen::VectorXd& maturity_quadrature() const { return q_tau_; }
    double area() const;

    bool same_as(const Grid2D& other) const;

private:
    std::vector<double> strikes_;
    std::vector<double> maturities_;
    double h_K_ = 0.0;
    double h_tau_ = 0.0;
    Eigen::VectorXd q_K_;
    Eigen::VectorXd q_tau_;
};

class WeightField {
public:
    WeightField() = default;
    // Rescales a positive raw field to unit node mean.
    explicit WeightField(const Field& raw);

    static WeightField uniform(const Grid2D& grid);
    // Gaussian bump in strike around `center`, with a floor so the envelope stays bounded.
    static WeightField vega_bump(const Grid2D& grid, double center, double rel_width = 0.15,
                                 double floor = 0.25);

    const Field& values() const { return w_; }
    double operator()(int t, int k) const { return w_(t, k); }
    double w_min() const { return w_min_; }
    double w_max() const { return w_max_; }
    double kappa() const;

private:
    Field w_;
    double w_min_ = 1.0;
    double w_max_ = 1.0;
};

struct Surface {
    Grid2D grid;
    Field values;
    bool is_price = true;

    Surface() = default;
    Surface(Grid2D g, Field v, bool price = true);
    void validate() const;
};

// Trapezoid L2(Omega; w) on the tensor grid, normalized by the domain area.
double weighted_inner(const Field& f, const Field& g, const WeightField& w, const Grid2D& grid);
double weighted_norm(const Field& f, const WeightField& w, const Grid2D& grid);
double unweighted_norm(const Field& f, const Grid2D& grid);

struct MeshReport {
    bool pass = false;
    double h_K = 0.0;
    double h_tau = 0.0;
    double envelope_K = 0.0;
    double envelope_tau = 0.0;
    double bound_K = 0.0;
    double bound_tau = 0.0;
    std::string reason;
};

// Envelopes are 10th percentiles of |C_KK| and |C_tautau| from local quadratic fits.
MeshReport check_mesh_admissibility(const Surface& C, double c1 = 1.0, double c2 = 1.0);

double percentile(std::vector<double> values, double p);

}  // namespace arbcert
