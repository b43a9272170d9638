#include "arbcert/nnls.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace arbcert {

namespace {

// Solves H_PP s_P = -c_P; entries outside P are zero.
Eigen::VectorXd solve_on(const Eigen::MatrixXd& H, const Eigen::VectorXd& c,
                         const std::vector<char>& P) {
    const int n = static_cast<int>(c.size());
    std::vector<int> idx;
    for (int j = 0; j < n; ++j) {
        if (P[j]) {
            idx.push_back(j);
        }
    }
    Eigen::VectorXd s = Eigen::VectorXd::Zero(n);
    if (idx.empty()) {
        return s;
    }
    const auto m = static_cast<Eigen::Index>(idx.size());
    Eigen::MatrixXd Hp(m, m);
    Eigen::VectorXd cp(m);
    for (Eigen::Index a = 0; a < m; ++a) {
        cp[a] = c[idx[a]];
        for (Eigen::Index b = 0; b < m; ++b) {
            Hp(a, b) = H(idx[a], idx[b]);
        }
    }
    const Eigen::VectorXd sp = Hp.ldlt().solve(-cp);
    for (Eigen::Index a = 0; a < m; ++a) {
        s[idx[a]] = sp[a];
    }
    return s;
}

}  // namespace

Eigen::VectorXd nonneg_quadratic(const Eigen::MatrixXd& H, const Eigen::VectorXd& c,
                                 std::vector<char>* passive) {
    const int n = static_cast<int>(c.size());
    std::vector<char> P(static_cast<std::size_t>(n), 0);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    if (passive && static_cast<int>(passive->size()) == n) {
        const Eigen::VectorXd s = solve_on(H, c, *passive);
        bool ok = true;
        for (int j = 0; j < n; ++j) {
            if ((*passive)[j] && !(s[j] > 0.0)) {
                ok = false;
                break;
            }
        }
        if (ok) {
            P = *passive;
            x = s;
        }
    }
    const double tol = 1e-13 * std::max(1.0, c.cwiseAbs().maxCoeff());
    for (int outer = 0; outer < 3 * n + 10; ++outer) {
        const Eigen::VectorXd g = -(H * x + c);
        int t = -1;
        double best = tol;
        for (int j = 0; j < n; ++j) {
            if (!P[j] && g[j] > best) {
                best = g[j];
                t = j;
            }
        }
        if (t < 0) {
            break;
        }
        P[t] = 1;
        Eigen::VectorXd s = solve_on(H, c, P);
        for (int inner = 0; inner < 3 * n + 10; ++inner) {
            double alpha = std::numeric_limits<double>::infinity();
            for (int j = 0; j < n; ++j) {
                if (P[j] && s[j] <= 0.0) {
                    const double d = x[j] - s[j];
                    alpha = std::min(alpha, d > 0.0 ? x[j] / d : 0.0);
                }
            }
            if (!std::isfinite(alpha)) {
                break;
            }
            x += alpha * (s - x);
            for (int j = 0; j < n; ++j) {
                if (P[j] && x[j] <= 0.0) {
                    P[j] = 0;
                    x[j] = 0.0;
                }
            }
            s = solve_on(H, c, P);
        }
        x = s;
    }
    if (passive) {
        *passive = P;
    }
    return x.cwiseMax(0.0);
}

}  // namespace arbcert
