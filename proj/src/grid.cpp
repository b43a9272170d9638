#include "arbcert/grid.hpp"

#include <algorithm>
#include <cmath>

#include "arbcert/errors.hpp"
#include "arbcert/stencil.hpp"

namespace arbcert {

namespace {

Eigen::VectorXd trapezoid(const std::vector<double>& x) {
    const int n = static_cast<int>(x.size());
    Eigen::VectorXd q = Eigen::VectorXd::Zero(n);
    for (int i = 0; i + 1 < n; ++i) {
        const double h = x[i + 1] - x[i];
        q[i] += 0.5 * h;
        q[i + 1] += 0.5 * h;
    }
    return q;
}

double max_gap(const std::vector<double>& x, const char* name) {
    if (x.size() < 3) {
        throw DimensionError(std::string(name) + " axis needs at least 3 nodes");
    }
    double h = 0.0;
    for (std::size_t i = 0; i + 1 < x.size(); ++i) {
        const double d = x[i + 1] - x[i];
        if (!(d > 0.0) || !std::isfinite(d)) {
            throw InputError(std::string(name) + " must be strictly increasing");
        }
        h = std::max(h, d);
    }
    return h;
}

}  // namespace

Grid2D::Grid2D(std::vector<double> strikes, std::vector<double> maturities)
    : strikes_(std::move(strikes)), maturities_(std::move(maturities)) {
    h_K_ = max_gap(strikes_, "strike");
    h_tau_ = max_gap(maturities_, "maturity");
    if (maturities_.front() <= 0.0) {
        throw InputError("maturities must be positive");
    }
    q_K_ = trapezoid(strikes_);
    q_tau_ = trapezoid(maturities_);
}

Grid2D Grid2D::uniform(double k_lo, double k_hi, int n_strikes, double t_lo, double t_hi,
                       int n_maturities) {
    if (n_strikes < 3 || n_maturities < 3) {
        throw DimensionError("uniform grid needs at least 3 nodes per axis");
    }
    std::vector<double> k(n_strikes), t(n_maturities);
    for (int i = 0; i < n_strikes; ++i) {
        k[i] = k_lo + (k_hi - k_lo) * i / (n_strikes - 1);
    }
    for (int j = 0; j < n_maturities; ++j) {
        t[j] = t_lo + (t_hi - t_lo) * j / (n_maturities - 1);
    }
    return Grid2D(std::move(k), std::move(t));
}

double Grid2D::area() const {
    return (strikes_.back() - strikes_.front()) * (maturities_.back() - maturities_.front());
}

bool Grid2D::same_as(const Grid2D& other) const {
    return strikes_ == other.strikes_ && maturities_ == other.maturities_;
}

WeightField::WeightField(const Field& raw) {
    if (raw.size() == 0) {
        throw DimensionError("empty weight field");
    }
    if (!raw.allFinite() || raw.minCoeff() <= 0.0) {
        throw InputError("weights must be finite and positive");
    }
    w_ = raw / raw.mean();
    w_min_ = w_.minCoeff();
    w_max_ = w_.maxCoeff();
}

WeightField WeightField::uniform(const Grid2D& grid) {
    return WeightField(Field::Ones(grid.n_maturities(), grid.n_strikes()));
}

WeightField WeightField::vega_bump(const Grid2D& grid, double center, double rel_width,
                                   double floor) {
    Field raw(grid.n_maturities(), grid.n_strikes());
    const double s = rel_width * center;
    for (int t = 0; t < grid.n_maturities(); ++t) {
        for (int k = 0; k < grid.n_strikes(); ++k) {
            const double z = (grid.strikes()[k] - center) / s;
            raw(t, k) = floor + std::exp(-0.5 * z * z);
        }
    }
    return WeightField(raw);
}

double WeightField::kappa() const { return std::sqrt(w_max_ / w_min_); }

Surface::Surface(Grid2D g, Field v, bool price) : grid(std::move(g)), values(std::move(v)), is_price(price) {
    validate();
}

void Surface::validate() const {
    if (values.rows() != grid.n_maturities() || values.cols() != grid.n_strikes()) {
        throw DimensionError("surface shape does not match grid");
    }
    if (!values.allFinite()) {
        throw InputError("surface has non-finite values");
    }
    if (is_price && values.minCoeff() < 0.0) {
        throw InputError("price surface has negative values");
    }
}

double weighted_inner(const Field& f, const Field& g, const WeightField& w, const Grid2D& grid) {
    const int T = grid.n_maturities();
    const int N = grid.n_strikes();
    if (f.rows() != T || f.cols() != N || g.rows() != T || g.cols() != N ||
        w.values().rows() != T || w.values().cols() != N) {
        throw DimensionError("field, weight and grid shapes differ");
    }
    const Eigen::VectorXd& qk = grid.strike_quadrature();
    const Eigen::VectorXd& qt = grid.maturity_quadrature();
    double s = 0.0;
    for (int t = 0; t < T; ++t) {
        double row = 0.0;
        for (int k = 0; k < N; ++k) {
            row += qk[k] * w(t, k) * f(t, k) * g(t, k);
        }
        s += qt[t] * row;
    }
    return s / grid.area();
}

double weighted_norm(const Field& f, const WeightField& w, const Grid2D& grid) {
    return std::sqrt(std::max(0.0, weighted_inner(f, f, w, grid)));
}

double unweighted_norm(const Field& f, const Grid2D& grid) {
    return weighted_norm(f, WeightField::uniform(grid), grid);
}

double percentile(std::vector<double> values, double p) {
    if (values.empty()) {
        throw DimensionError("percentile of empty set");
    }
    const double pos = p * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    std::nth_element(values.begin(), values.begin() + lo, values.end());
    const double v_lo = values[lo];
    const double v_hi = hi == lo ? v_lo : *std::min_element(values.begin() + hi, values.end());
    return v_lo + frac * (v_hi - v_lo);
}

MeshReport check_mesh_admissibility(const Surface& C, double c1, double c2) {
    const Grid2D& g = C.grid;
    const int T = g.n_maturities();
    const int N = g.n_strikes();
    if (C.values.rows() != T || C.values.cols() != N) {
        throw DimensionError("surface shape does not match grid");
    }
    MeshReport rep;
    rep.h_K = g.h_K();
    rep.h_tau = g.h_tau();

    const auto sk = quadratic_stencils(g.strikes(), std::min(5, N), 2);
    const auto st = quadratic_stencils(g.maturities(), std::min(5, T), 2);
    std::vector<double> ckk, ctt;
    ckk.reserve(static_cast<std::size_t>(T * N));
    ctt.reserve(static_cast<std::size_t>(T * N));
    for (int t = 0; t < T; ++t) {
        for (int k = 0; k < N; ++k) {
            double a = 0.0;
            for (std::size_t m = 0; m < sk[k].weights.size(); ++m) {
                a += sk[k].weights[m] * C.values(t, sk[k].start + static_cast<int>(m));
            }
            double b = 0.0;
            for (std::size_t m = 0; m < st[t].weights.size(); ++m) {
                b += st[t].weights[m] * C.values(st[t].start + static_cast<int>(m), k);
            }
            ckk.push_back(std::abs(a));
            ctt.push_back(std::abs(b));
        }
    }
    rep.envelope_K = percentile(ckk, 0.10);
    rep.envelope_tau = percentile(ctt, 0.10);
    rep.bound_K = c1 * rep.envelope_K;
    rep.bound_tau = c2 * rep.envelope_tau;

    if (rep.envelope_K <= 0.0 || rep.envelope_tau <= 0.0) {
        rep.pass = false;
        rep.reason = "zero curvature envelope";
        return rep;
    }
    const bool ok_k = rep.h_K <= rep.bound_K;
    const bool ok_t = rep.h_tau <= rep.bound_tau;
    rep.pass = ok_k && ok_t;
    if (!ok_k && !ok_t) {
        rep.reason = "both spacings exceed their bounds";
    } else if (!ok_k) {
        rep.reason = "strike spacing exceeds bound";
    } else if (!ok_t) {
        rep.reason = "maturity spacing exceeds bound";
    }
    return rep;
}

}  // namespace arbcert
