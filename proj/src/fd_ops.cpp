#include "arbcert/fd_ops.hpp"

#include <algorithm>
#include <cmath>

#include "arbcert/errors.hpp"
#include "arbcert/stencil.hpp"

namespace arbcert {

std::vector<Stencil> quadratic_stencils(const std::vector<double>& x, int window, int derivative) {
    const int n = static_cast<int>(x.size());
    if (window < 3 || window > n) {
        throw DimensionError("stencil window must be in [3, axis length]");
    }
    if (derivative != 1 && derivative != 2) {
        throw InputError("only first and second derivatives are supported");
    }
    const int half = window / 2;
    std::vector<Stencil> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const int start = std::clamp(i - half, 0, n - window);
        Eigen::MatrixXd X(window, 3);
        for (int m = 0; m < window; ++m) {
            const double d = x[start + m] - x[i];
            X(m, 0) = 1.0;
            X(m, 1) = d;
            X(m, 2) = d * d;
        }
        // Rows of the pseudo-inverse give coefficient functionals.
        const Eigen::MatrixXd pinv = (X.transpose() * X).ldlt().solve(X.transpose());
        Stencil s;
        s.start = start;
        s.weights.resize(static_cast<std::size_t>(window));
        for (int m = 0; m < window; ++m) {
            s.weights[m] = derivative == 1 ? pinv(1, m) : 2.0 * pinv(2, m);
        }
        out[i] = std::move(s);
    }
    return out;
}

void FdConfig::validate(const Grid2D& grid) const {
    if (window_K < 3 || window_K % 2 == 0 || window_tau < 3 || window_tau % 2 == 0) {
        throw InputError("FD windows must be odd and at least 3");
    }
    if (window_K > grid.n_strikes() || window_tau > grid.n_maturities()) {
        throw DimensionError("FD window larger than axis length");
    }
    if (!(clip_lo > 0.0) || !(clip_lo < clip_hi) || !(denom_floor > 0.0)) {
        throw InputError("invalid FD clipping configuration");
    }
}

FdDerivatives fd_derivatives(const Surface& C, const FdConfig& cfg) {
    cfg.validate(C.grid);
    const int T = C.grid.n_maturities();
    const int N = C.grid.n_strikes();
    const auto sk = quadratic_stencils(C.grid.strikes(), cfg.window_K, 2);
    const auto st = quadratic_stencils(C.grid.maturities(), cfg.window_tau, 1);
    FdDerivatives d{Field::Zero(T, N), Field::Zero(T, N)};
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
            d.C_KK(t, k) = a;
            d.C_tau(t, k) = b;
        }
    }
    return d;
}

DupireField dupire_field(const Surface& C, const FdConfig& cfg) {
    const FdDerivatives d = fd_derivatives(C, cfg);
    const int T = C.grid.n_maturities();
    const int N = C.grid.n_strikes();
    DupireField out{Field::Zero(T, N), BoolField::Constant(T, N, false)};
    for (int t = 0; t < T; ++t) {
        for (int k = 0; k < N; ++k) {
            const double K = C.grid.strikes()[k];
            double denom = K * K * d.C_KK(t, k);
            bool flag = false;
            if (denom < cfg.denom_floor) {
                denom = cfg.denom_floor;
                flag = true;
            }
            double s2 = 2.0 * d.C_tau(t, k) / denom;
            if (s2 < cfg.clip_lo) {
                s2 = cfg.clip_lo;
                flag = true;
            } else if (s2 > cfg.clip_hi) {
                s2 = cfg.clip_hi;
                flag = true;
            }
            out.sigma2(t, k) = s2;
            out.clipped(t, k) = flag;
        }
    }
    return out;
}

double dupire_total_variation(const DupireField& field, const WeightField& w) {
    const Field& s = field.sigma2;
    const Field& wv = w.values();
    if (s.rows() != wv.rows() || s.cols() != wv.cols()) {
        throw DimensionError("Dupire field and weight shapes differ");
    }
    double tv = 0.0;
    for (int t = 0; t < s.rows(); ++t) {
        for (int k = 0; k < s.cols(); ++k) {
            if (k + 1 < s.cols()) {
                tv += 0.5 * (wv(t, k) + wv(t, k + 1)) * std::abs(s(t, k + 1) - s(t, k));
            }
            if (t + 1 < s.rows()) {
                tv += 0.5 * (wv(t, k) + wv(t + 1, k)) * std::abs(s(t + 1, k) - s(t, k));
            }
        }
    }
    return tv;
}

Eigen::MatrixXd assemble_dkk(const Grid2D& grid, const FdConfig& cfg) {
    cfg.validate(grid);
    const int T = grid.n_maturities();
    const int N = grid.n_strikes();
    const auto sk = quadratic_stencils(grid.strikes(), cfg.window_K, 2);
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(T * N, T * N);
    for (int t = 0; t < T; ++t) {
        for (int k = 0; k < N; ++k) {
            for (std::size_t m = 0; m < sk[k].weights.size(); ++m) {
                D(t * N + k, t * N + sk[k].start + static_cast<int>(m)) = sk[k].weights[m];
            }
        }
    }
    return D;
}

Eigen::MatrixXd assemble_dtau(const Grid2D& grid, const FdConfig& cfg) {
    cfg.validate(grid);
    const int T = grid.n_maturities();
    const int N = grid.n_strikes();
    const auto st = quadratic_stencils(grid.maturities(), cfg.window_tau, 1);
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(T * N, T * N);
    for (int t = 0; t < T; ++t) {
        for (int k = 0; k < N; ++k) {
            for (std::size_t m = 0; m < st[t].weights.size(); ++m) {
                D(t * N + k, (st[t].start + static_cast<int>(m)) * N + k) = st[t].weights[m];
            }
        }
    }
    return D;
}

double weighted_operator_norm(const Eigen::MatrixXd& D, const WeightField& w, const Grid2D& grid,
                              int iterations) {
    const int T = grid.n_maturities();
    const int N = grid.n_strikes();
    if (D.rows() != T * N || D.cols() != T * N) {
        throw DimensionError("operator size does not match grid");
    }
    Eigen::VectorXd sq(T * N);
    for (int t = 0; t < T; ++t) {
        for (int k = 0; k < N; ++k) {
            sq[t * N + k] = std::sqrt(grid.maturity_quadrature()[t] * grid.strike_quadrature()[k] *
                                      w(t, k) / grid.area());
        }
    }
    const Eigen::MatrixXd B = sq.asDiagonal() * D * sq.cwiseInverse().asDiagonal();
    const Eigen::MatrixXd BtB = B.transpose() * B;
    Eigen::VectorXd v(T * N);
    for (int i = 0; i < T * N; ++i) {
        v[i] = 1.0 + 0.5 * std::sin(1.7 * i + 0.3);
    }
    v.normalize();
    double lambda = 0.0;
    for (int it = 0; it < iterations; ++it) {
        Eigen::VectorXd u = BtB * v;
        const double nrm = u.norm();
        if (nrm == 0.0) {
            return 0.0;
        }
        lambda = v.dot(u);
        v = u / nrm;
    }
    return std::sqrt(std::max(0.0, lambda));
}

}  // namespace arbcert
