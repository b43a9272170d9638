#include "arbcert/projection.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "arbcert/errors.hpp"
#include "arbcert/nnls.hpp"

namespace arbcert {

void ProjectionConfig::validate() const {
    if (tv2_lambda < 0.0 || path_steps < 1 || dykstra_rounds < 0) {
        throw InputError("invalid projection configuration");
    }
}

std::vector<double> pav_isotonic(const std::vector<double>& seq, const std::vector<double>& weights,
                                 Direction dir) {
    const std::size_t n = seq.size();
    if (n == 0) {
        throw DimensionError("PAV on empty sequence");
    }
    if (weights.size() != n) {
        throw DimensionError("PAV weights length mismatch");
    }
    const double sign = dir == Direction::nondecreasing ? 1.0 : -1.0;
    struct Block {
        double mean;
        double weight;
        std::size_t len;
    };
    std::vector<Block> st;
    st.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(weights[i] > 0.0)) {
            throw InputError("PAV weights must be positive");
        }
        st.push_back({sign * seq[i], weights[i], 1});
        while (st.size() > 1 && st[st.size() - 2].mean > st.back().mean) {
            Block b = st.back();
            st.pop_back();
            Block& a = st.back();
            const double wsum = a.weight + b.weight;
            a.mean = (a.weight * a.mean + b.weight * b.mean) / wsum;
            a.weight = wsum;
            a.len += b.len;
        }
    }
    std::vector<double> out;
    out.reserve(n);
    for (const auto& b : st) {
        out.insert(out.end(), b.len, sign * b.mean);
    }
    return out;
}

namespace {

std::vector<double> convex_projection(const std::vector<double>& row,
                                      const std::vector<double>& weights,
                                      const std::vector<double>& strikes,
                                      std::vector<char>* hint) {
    const int n = static_cast<int>(row.size());
    if (n < 3) {
        throw DimensionError("convex regression needs at least 3 points");
    }
    if (static_cast<int>(weights.size()) != n || static_cast<int>(strikes.size()) != n) {
        throw DimensionError("row, weights and strikes differ in length");
    }
    for (int i = 0; i + 1 < n; ++i) {
        if (!(strikes[i + 1] > strikes[i])) {
            throw InputError("strikes must be strictly increasing");
        }
    }
    for (double w : weights) {
        if (!(w > 0.0)) {
            throw InputError("weights must be positive");
        }
    }
    // Second-difference constraints in slope form: D x >= 0.
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n - 2, n);
    for (int i = 1; i + 1 < n; ++i) {
        const double hl = strikes[i] - strikes[i - 1];
        const double hr = strikes[i + 1] - strikes[i];
        D(i - 1, i - 1) = 1.0 / hl;
        D(i - 1, i) = -1.0 / hl - 1.0 / hr;
        D(i - 1, i + 1) = 1.0 / hr;
    }
    const Eigen::Map<const Eigen::VectorXd> y(row.data(), n);
    if ((D * y).minCoeff() >= 0.0) {
        if (hint) {
            hint->assign(static_cast<std::size_t>(n - 2), 0);
        }
        return row;
    }
    const Eigen::Map<const Eigen::VectorXd> om(weights.data(), n);
    const Eigen::VectorXd inv = om.cwiseInverse();
    // Dual of min ||x - y||_W^2 s.t. D x >= 0: x = y + W^-1 D' mu with mu >= 0.
    const Eigen::MatrixXd H = D * inv.asDiagonal() * D.transpose();
    const Eigen::VectorXd mu = nonneg_quadratic(H, D * y, hint);
    const Eigen::VectorXd x = y + inv.cwiseProduct(D.transpose() * mu);
    return {x.data(), x.data() + n};
}

}  // namespace

std::vector<double> convex_in_strike(const std::vector<double>& row,
                                     const std::vector<double>& weights,
                                     const std::vector<double>& strikes) {
    return convex_projection(row, weights, strikes, nullptr);
}

Field node_mass(const Grid2D& grid, const WeightField& w) {
    const int T = grid.n_maturities();
    const int N = grid.n_strikes();
    Field m(T, N);
    for (int t = 0; t < T; ++t) {
        for (int k = 0; k < N; ++k) {
            m(t, k) = grid.maturity_quadrature()[t] * grid.strike_quadrature()[k] * w(t, k) / grid.area();
        }
    }
    return m;
}

double cone_violation(const Field& C, const Grid2D& grid) {
    const int T = static_cast<int>(C.rows());
    const int N = static_cast<int>(C.cols());
    const auto& K = grid.strikes();
    double v = std::max(0.0, -C.minCoeff());
    for (int t = 0; t < T; ++t) {
        for (int k = 0; k < N; ++k) {
            if (t + 1 < T) {
                v = std::max(v, C(t, k) - C(t + 1, k));
            }
            if (k >= 1 && k + 1 < N) {
                const double sl = (C(t, k) - C(t, k - 1)) / (K[k] - K[k - 1]);
                const double sr = (C(t, k + 1) - C(t, k)) / (K[k + 1] - K[k]);
                v = std::max(v, sl - sr);
            }
        }
    }
    return v;
}

namespace {

void project_calendar(Field& x, const Field& mass) {
    const int T = static_cast<int>(x.rows());
    std::vector<double> col(static_cast<std::size_t>(T)), wt(static_cast<std::size_t>(T));
    for (int k = 0; k < x.cols(); ++k) {
        for (int t = 0; t < T; ++t) {
            col[t] = x(t, k);
            wt[t] = mass(t, k);
        }
        const auto p = pav_isotonic(col, wt, Direction::nondecreasing);
        for (int t = 0; t < T; ++t) {
            x(t, k) = p[t];
        }
    }
}

void project_convex(Field& x, const Field& mass, const std::vector<double>& strikes,
                    std::vector<std::vector<char>>& hints) {
    const int N = static_cast<int>(x.cols());
    hints.resize(static_cast<std::size_t>(x.rows()));
    std::vector<double> row(static_cast<std::size_t>(N)), wt(static_cast<std::size_t>(N));
    for (int t = 0; t < x.rows(); ++t) {
        for (int k = 0; k < N; ++k) {
            row[k] = x(t, k);
            wt[k] = mass(t, k);
        }
        const auto p = convex_projection(row, wt, strikes, &hints[static_cast<std::size_t>(t)]);
        for (int k = 0; k < N; ++k) {
            x(t, k) = p[k];
        }
    }
}

double mass_norm(const Field& f, const Field& mass) {
    return std::sqrt((f.array().square() * mass.array()).sum());
}

// Huberized second-difference shrinkage along strikes.
Field tv2_smooth(const Field& x, double lambda, int sweeps = 5) {
    Field y = x;
    for (int s = 0; s < sweeps; ++s) {
        for (int t = 0; t < y.rows(); ++t) {
            Eigen::VectorXd g = Eigen::VectorXd::Zero(y.cols());
            for (int k = 1; k + 1 < y.cols(); ++k) {
                const double d2 = y(t, k - 1) - 2.0 * y(t, k) + y(t, k + 1);
                const double c = std::clamp(d2, -lambda, lambda);
                g[k - 1] += c;
                g[k] -= 2.0 * c;
                g[k + 1] += c;
            }
            y.row(t) -= 0.25 * g.transpose();
        }
    }
    return y;
}

}  // namespace

Field project_field(const Field& C, const Grid2D& grid, const WeightField& w,
                    const ProjectionConfig& cfg, ProjectionInfo* info) {
    cfg.validate();
    if (C.rows() != grid.n_maturities() || C.cols() != grid.n_strikes()) {
        throw DimensionError("field shape does not match grid");
    }
    const Field mass = node_mass(grid, w);
    const double scale = std::max(1.0, C.cwiseAbs().maxCoeff());
    Field x = C;
    int rounds = 0;
    std::vector<std::vector<char>> hints;

    if (cfg.dykstra_rounds == 0) {
        for (; rounds < 10000; ++rounds) {
            project_calendar(x, mass);
            project_convex(x, mass, grid.strikes(), hints);
            x = x.cwiseMax(0.0);
            if (cone_violation(x, grid) <= 1e-12 * scale) {
                ++rounds;
                break;
            }
        }
    } else {
        Field p = Field::Zero(C.rows(), C.cols());
        Field q = p;
        Field r = p;
        const double ref = std::max(mass_norm(C, mass), 1e-300);
        for (; rounds < cfg.dykstra_rounds; ++rounds) {
            const Field prev = x;
            Field a = x + p;
            project_calendar(a, mass);
            p = x + p - a;
            Field b = a + q;
            project_convex(b, mass, grid.strikes(), hints);
            q = a + q - b;
            Field c = (b + r).cwiseMax(0.0);
            r = b + r - c;
            x = std::move(c);
            if (mass_norm(x - prev, mass) <= cfg.dykstra_tol * ref &&
                cone_violation(x, grid) <= 1e-12 * scale) {
                ++rounds;
                break;
            }
        }
    }

    bool tv2 = false;
    if (cfg.tv2_lambda > 0.0) {
        const Field s = tv2_smooth(x, cfg.tv2_lambda);
        if (cone_violation(s, grid) <= 1e-9) {
            x = s;
            tv2 = true;
        }
    }
    if (info) {
        info->rounds = rounds;
        info->tv2_applied = tv2;
        info->max_violation = cone_violation(x, grid);
    }
    return x;
}

Surface project_to_cone(const Surface& C, const WeightField& w, const ProjectionConfig& cfg,
                        ProjectionInfo* info) {
    Field x = project_field(C.values, C.grid, w, cfg, info);
    return Surface(C.grid, std::move(x), C.is_price);
}

ProjectionCertificates projection_certificates(const Surface& C_raw, const WeightField& w,
                                               const ProjectionConfig& cfg, const FdConfig& fd,
                                               int trials, std::uint64_t seed) {
    if (trials < 1) {
        throw InputError("at least one trial is required");
    }
    const Grid2D& g = C_raw.grid;
    const int T = g.n_maturities();
    const int N = g.n_strikes();
    const double amp = 0.01 * weighted_norm(C_raw.values, w, g);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    auto draw = [&] {
        Field d(T, N);
        for (int t = 0; t < T; ++t) {
            for (int k = 0; k < N; ++k) {
                d(t, k) = z(rng);
            }
        }
        return Field(d * (amp / weighted_norm(d, w, g)));
    };

    ProjectionCertificates cert;
    for (int i = 0; i < trials; ++i) {
        const Field d1 = draw();
        const Field d2 = draw();
        const double den = weighted_norm(d1 - d2, w, g);
        if (den == 0.0) {
            continue;
        }
        const Field p1 = project_field(C_raw.values + d1, g, w, cfg);
        const Field p2 = project_field(C_raw.values + d2, g, w, cfg);
        cert.lip_emp = std::max(cert.lip_emp, weighted_norm(p1 - p2, w, g) / den);
    }

    const Field target = project_field(C_raw.values, g, w, cfg);
    for (int s = 0; s <= cfg.path_steps; ++s) {
        const double a = static_cast<double>(s) / cfg.path_steps;
        const Surface step(g, (1.0 - a) * C_raw.values + a * target, false);
        cert.dup_tv_path.push_back(dupire_total_variation(dupire_field(step, fd), w));
    }
    cert.dup_ok = true;
    for (std::size_t i = 1; i < cert.dup_tv_path.size(); ++i) {
        if (cert.dup_tv_path[i] > cert.dup_tv_path[i - 1] + 1e-9) {
            cert.dup_ok = false;
        }
    }
    return cert;
}

}  // namespace arbcert
