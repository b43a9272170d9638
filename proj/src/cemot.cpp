#include "arbcert/cemot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <tuple>

#include "arbcert/errors.hpp"
#include "arbcert/grid.hpp"

namespace arbcert {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kKernelFloor = 1e-300;
constexpr double kClipRel = 1e-10;
// Singular values below this are rounding noise of the SVD itself.
constexpr double kNoiseRel = 1e-15;

using Eigen::MatrixXd;
using Eigen::VectorXd;

double lse(const double* v, int n, int stride = 1) {
    double m = kNegInf;
    for (int i = 0; i < n; ++i) m = std::max(m, v[i * stride]);
    if (m == kNegInf) return kNegInf;
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += std::exp(v[i * stride] - m);
    return m + std::log(s);
}

// out_i = LSE_j(L_ij + add_j)
VectorXd lse_rows(const MatrixXd& L, const VectorXd& add) {
    const int n = static_cast<int>(L.rows()), m = static_cast<int>(L.cols());
    VectorXd out(n);
    std::vector<double> buf(m);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < m; ++j) buf[j] = L(i, j) + add[j];
        out[i] = lse(buf.data(), m);
    }
    return out;
}

// out_j = LSE_i(add_i + L_ij)
VectorXd lse_cols(const MatrixXd& L, const VectorXd& add) {
    const int n = static_cast<int>(L.rows()), m = static_cast<int>(L.cols());
    VectorXd out(m);
    std::vector<double> buf(n);
    for (int j = 0; j < m; ++j) {
        for (int i = 0; i < n; ++i) buf[i] = add[i] + L(i, j);
        out[j] = lse(buf.data(), n);
    }
    return out;
}

VectorXd safe_log(const VectorXd& m) {
    VectorXd out(m.size());
    for (Eigen::Index i = 0; i < m.size(); ++i) out[i] = m[i] > 0.0 ? std::log(m[i]) : kNegInf;
    return out;
}

double sup_diff(const VectorXd& a, const VectorXd& b) {
    return (a - b).cwiseAbs().maxCoeff();
}

// Everything the sweeps need that does not change within a stage.
struct Context {
    const TriMarginalProblem& p;
    const StageKernels& k;
    MatrixXd g12, g23;
    VectorXd lm1, lm2, lm3;
    double rhs;

    Context(const TriMarginalProblem& prob, const StageKernels& kern)
        : p(prob), k(kern), g12(prob.g12()), g23(prob.g23()), lm1(safe_log(prob.m1)),
          lm2(safe_log(prob.m2)), lm3(safe_log(prob.m3)), rhs(prob.martingale_rhs()) {}

    MatrixXd L12(double eta) const { return k.k12.log_kernel + (eta / k.epsilon) * g12; }
    MatrixXd L23(double eta) const { return k.k23.log_kernel + (eta / k.epsilon) * g23; }
};

struct MartingaleEval {
    double f = 0.0;   // sum(pi g) - rhs
    double fp = 0.0;  // d f / d eta
};

MartingaleEval eval_martingale(const Context& ctx, const VectorXd& a, const VectorXd& b,
                               const VectorXd& c, double eta) {
    const MatrixXd L12 = ctx.L12(eta), L23 = ctx.L23(eta);
    const VectorXd Lm = lse_cols(L12, a);
    const VectorXd R = lse_rows(L23, c);
    const int n = static_cast<int>(a.size());
    MartingaleEval out;
    double second = 0.0, first = 0.0;
    for (int j = 0; j < n; ++j) {
        const double lp2 = Lm[j] + b[j] + R[j];
        if (lp2 == kNegInf || std::isnan(lp2)) continue;
        double A = 0, A2 = 0, B = 0, B2 = 0;
        for (int i = 0; i < n; ++i) {
            const double w = std::exp(a[i] + L12(i, j) - Lm[j]);
            A += w * ctx.g12(i, j);
            A2 += w * ctx.g12(i, j) * ctx.g12(i, j);
        }
        for (int kk = 0; kk < n; ++kk) {
            const double w = std::exp(L23(j, kk) + c[kk] - R[j]);
            B += w * ctx.g23(j, kk);
            B2 += w * ctx.g23(j, kk) * ctx.g23(j, kk);
        }
        const double p2 = std::exp(lp2);
        first += p2 * (A + B);
        second += p2 * (A2 + 2.0 * A * B + B2);
    }
    out.f = first - ctx.rhs;
    out.fp = second / ctx.k.epsilon;
    return out;
}

// Safeguarded Newton for the increasing scalar map eta -> f(eta), bracket eta0 +- 50 eps.
double solve_eta(const Context& ctx, const VectorXd& a, const VectorXd& b, const VectorXd& c,
                 double eta0) {
    const double eps = ctx.k.epsilon;
    double lo = eta0 - 50.0 * eps, hi = eta0 + 50.0 * eps;
    MartingaleEval e = eval_martingale(ctx, a, b, c, eta0);
    const double ftol = 1e-15 * (1.0 + std::abs(ctx.rhs));
    if (std::abs(e.f) <= ftol || !(e.fp > 0.0)) return eta0;
    if (e.f > 0.0) {
        hi = eta0;
        if (eval_martingale(ctx, a, b, c, lo).f > 0.0) return lo;
    } else {
        lo = eta0;
        if (eval_martingale(ctx, a, b, c, hi).f < 0.0) return hi;
    }
    double eta = eta0;
    for (int it = 0; it < 100; ++it) {
        double next = eta - e.f / e.fp;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        eta = next;
        e = eval_martingale(ctx, a, b, c, eta);
        if (std::abs(e.f) <= ftol || hi - lo < 1e-15 * (1.0 + std::abs(eta))) break;
        if (e.f > 0.0) {
            hi = eta;
        } else {
            lo = eta;
        }
        if (!(e.fp > 0.0)) e.fp = std::numeric_limits<double>::min();
    }
    return eta;
}

void blend(VectorXd& cur, const VectorXd& target, double gamma) {
    for (Eigen::Index i = 0; i < cur.size(); ++i) {
        if (std::isfinite(target[i])) cur[i] = (1.0 - gamma) * cur[i] + gamma * target[i];
    }
}

// One block-ascent sweep: u, v, w by damped marginal matching, then eta.
void sweep(BridgeState& s, const Context& ctx, double gamma) {
    const VectorXd& lm1 = ctx.lm1;
    const VectorXd& lm2 = ctx.lm2;
    const VectorXd& lm3 = ctx.lm3;
    {
        const MatrixXd L12 = ctx.L12(s.eta), L23 = ctx.L23(s.eta);
        const VectorXd b = s.log_v + lm2, c = s.log_w + lm3;
        const VectorXd R = lse_rows(L23, c);
        blend(s.log_u, -lse_rows(L12, b + R), gamma);
        const VectorXd a = s.log_u + lm1;
        const VectorXd Lm = lse_cols(L12, a);
        blend(s.log_v, -(Lm + R), gamma);
        const VectorXd b2 = s.log_v + lm2;
        blend(s.log_w, -lse_cols(L23, Lm + b2), gamma);
    }
    s.eta = solve_eta(ctx, s.log_u + lm1, s.log_v + lm2, s.log_w + lm3, s.eta);
}

MatrixXd whitened_svd(const MatrixXd& approx, int rmax, MatrixXd& phi1, MatrixXd& phi2,
                      double& scale) {
    Eigen::JacobiSVD<MatrixXd> svd(approx, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const VectorXd& S = svd.singularValues();
    const double top = S.size() > 0 ? S[0] : 0.0;
    scale = top > 0.0 ? top : 1.0;
    int q = 0;
    if (top > 0.0) {
        while (q < S.size() && q < rmax && S[q] >= kNoiseRel * top) ++q;
    }
    if (q == 0) {
        phi1 = MatrixXd::Zero(approx.rows(), 1);
        phi2 = MatrixXd::Zero(approx.cols(), 1);
        return MatrixXd::Zero(approx.rows(), approx.cols());
    }
    const VectorXd root = (S.head(q) / top).cwiseSqrt();
    phi1 = svd.matrixU().leftCols(q) * root.asDiagonal();
    phi2 = svd.matrixV().leftCols(q) * root.asDiagonal();
    return top * phi1 * phi2.transpose();
}

MatrixXd pseudo_inverse(const MatrixXd& W) {
    Eigen::JacobiSVD<MatrixXd> svd(W, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const VectorXd& S = svd.singularValues();
    VectorXd inv = VectorXd::Zero(S.size());
    for (Eigen::Index i = 0; i < S.size(); ++i) {
        if (S[i] > kClipRel * S[0]) inv[i] = 1.0 / S[i];
    }
    return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

}  // namespace

FeatureKind parse_feature_kind(const std::string& s) {
    if (s == "dense") return FeatureKind::dense;
    if (s == "nystrom") return FeatureKind::nystrom;
    if (s == "rff") return FeatureKind::rff;
    throw InputError("unknown feature kind: " + s);
}

std::string to_string(FeatureKind k) {
    switch (k) {
        case FeatureKind::dense: return "dense";
        case FeatureKind::nystrom: return "nystrom";
        case FeatureKind::rff: return "rff";
    }
    return "dense";
}

void TriMarginalProblem::validate() const {
    const Eigen::Index n = x.size();
    if (n < 1) throw DimensionError("bridge grid is empty");
    for (Eigen::Index i = 1; i < n; ++i) {
        if (!(x[i] > x[i - 1])) throw InputError("bridge grid must be strictly increasing");
    }
    for (const VectorXd* m : {&m1, &m2, &m3}) {
        if (m->size() != n) throw DimensionError("marginal length differs from grid");
        if (!m->allFinite() || m->minCoeff() < 0.0) throw InputError("marginal must be nonnegative");
        if (std::abs(m->sum() - 1.0) > 1e-12) throw InputError("marginal must sum to one");
    }
    for (const MatrixXd* c : {&c12, &c23}) {
        if (c->size() != 0 && (c->rows() != n || c->cols() != n)) {
            throw DimensionError("cost matrix must be n x n");
        }
        if (c->size() != 0 && !c->allFinite()) throw InputError("cost must be finite");
    }
    if (epsilon_schedule.empty()) throw InputError("empty epsilon schedule");
    for (std::size_t i = 0; i < epsilon_schedule.size(); ++i) {
        if (!(epsilon_schedule[i] > 0.0)) throw InputError("epsilon must be positive");
        if (i > 0 && !(epsilon_schedule[i] < epsilon_schedule[i - 1])) {
            throw InputError("epsilon schedule must be strictly decreasing");
        }
    }
    if (rank < 0) throw InputError("rank must be nonnegative");
    if (rank > n) throw DimensionError("rank exceeds grid size");
}

MatrixXd TriMarginalProblem::cost12() const {
    if (c12.size() != 0) return c12;
    return (x.replicate(1, x.size()) - x.transpose().replicate(x.size(), 1)).array().square();
}

MatrixXd TriMarginalProblem::cost23() const {
    if (c23.size() != 0) return c23;
    return (x.replicate(1, x.size()) - x.transpose().replicate(x.size(), 1)).array().square();
}

MatrixXd TriMarginalProblem::g12() const {
    const Eigen::Index n = x.size();
    MatrixXd g(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) g(i, j) = 0.5 * x[i] * x[i] - x[i] * x[j];
    return g;
}

MatrixXd TriMarginalProblem::g23() const {
    const Eigen::Index n = x.size();
    MatrixXd g(n, n);
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index k = 0; k < n; ++k) g(j, k) = x[j] * x[k] - 0.5 * x[k] * x[k];
    return g;
}

double TriMarginalProblem::martingale_rhs() const {
    const VectorXd x2 = x.array().square();
    return m2.dot(x2) - 0.5 * (m1.dot(x2) + m3.dot(x2)) + rhs_shift;
}

double BridgeKernels::max_delta() const {
    double d = 0.0;
    for (const auto& s : stages) d = std::max({d, s.k12.delta, s.k23.delta});
    return d;
}

double spectral_norm_estimate(const MatrixXd& A, int iters) {
    const Eigen::Index m = A.cols();
    if (m == 0 || A.rows() == 0) return 0.0;
    VectorXd v(m);
    for (Eigen::Index i = 0; i < m; ++i) v[i] = 1.0 + 0.5 * std::sin(1.7 * static_cast<double>(i) + 0.3);
    v.normalize();
    double lambda = 0.0;
    for (int it = 0; it < iters; ++it) {
        VectorXd w = A.transpose() * (A * v);
        const double nw = w.norm();
        if (nw == 0.0) return 0.0;
        lambda = v.dot(w);
        v = w / nw;
    }
    return std::sqrt(std::max(lambda, 0.0));
}

KernelFactors factorize_kernel(const MatrixXd& cost, double epsilon, FeatureKind kind, int rank,
                               const VectorXd& x, bool squared_distance, std::uint64_t seed) {
    const int n = static_cast<int>(cost.rows());
    if (cost.cols() != n || x.size() != n) throw DimensionError("kernel size mismatch");
    if (!(epsilon > 0.0)) throw InputError("epsilon must be positive");
    if (rank < 0) throw InputError("rank must be nonnegative");
    if (rank > n) throw DimensionError("rank exceeds grid size");
    const int r = rank == 0 ? n : rank;

    KernelFactors out;
    const MatrixXd logK = -cost / epsilon;
    const MatrixXd K = logK.array().exp();
    MatrixXd approx;
    switch (kind) {
        case FeatureKind::dense:
            approx = K;
            break;
        case FeatureKind::nystrom: {
            // Every point a landmark: C W^+ R is K itself.
            if (r == n) {
                approx = K;
                break;
            }
            std::vector<int> idx(r);
            for (int l = 0; l < r; ++l) {
                idx[l] = r == 1 ? n / 2
                                : static_cast<int>(std::lround(static_cast<double>(l) * (n - 1) / (r - 1)));
            }
            MatrixXd C(n, r), R(r, n), W(r, r);
            for (int l = 0; l < r; ++l) {
                C.col(l) = K.col(idx[l]);
                R.row(l) = K.row(idx[l]);
                for (int m = 0; m < r; ++m) W(l, m) = K(idx[l], idx[m]);
            }
            approx = C * pseudo_inverse(W) * R;
            break;
        }
        case FeatureKind::rff: {
            if (!squared_distance) throw InputError("random features need the squared-distance cost");
            // Gaussian kernel exp(-(x-y)^2/eps) has spectral density N(0, 2/eps). With a
            // one-dimensional state each orthogonal block is a single frequency.
            std::mt19937_64 rng(seed);
            std::normal_distribution<double> freq(0.0, std::sqrt(2.0 / epsilon));
            std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
            MatrixXd Z(n, r);
            for (int l = 0; l < r; ++l) {
                const double w = freq(rng), b = phase(rng);
                for (int i = 0; i < n; ++i) Z(i, l) = std::sqrt(2.0 / r) * std::cos(w * x[i] + b);
            }
            approx = Z * Z.transpose();
            break;
        }
    }

    const MatrixXd Kw = whitened_svd(approx, r, out.phi1, out.phi2, out.scale);
    out.delta = spectral_norm_estimate(K - Kw);
    if (kind == FeatureKind::dense) {
        out.log_kernel = logK;
    } else {
        out.log_kernel = Kw.cwiseMax(kKernelFloor).array().log();
    }
    return out;
}

BridgeKernels build_bridge(const TriMarginalProblem& problem) {
    problem.validate();
    BridgeKernels out;
    out.kind = problem.feature_kind;
    out.rank = problem.rank;
    const bool sq12 = problem.c12.size() == 0, sq23 = problem.c23.size() == 0;
    const MatrixXd c12 = problem.cost12(), c23 = problem.cost23();
    for (double eps : problem.epsilon_schedule) {
        StageKernels s;
        s.epsilon = eps;
        s.k12 = factorize_kernel(c12, eps, problem.feature_kind, problem.rank, problem.x, sq12,
                                 problem.rff_seed);
        s.k23 = factorize_kernel(c23, eps, problem.feature_kind, problem.rank, problem.x, sq23,
                                 problem.rff_seed + 1);
        out.stages.push_back(std::move(s));
    }
    return out;
}

BridgeState BridgeState::zeros(int n, double epsilon) {
    BridgeState s;
    s.log_u = VectorXd::Zero(n);
    s.log_v = VectorXd::Zero(n);
    s.log_w = VectorXd::Zero(n);
    s.epsilon = epsilon;
    return s;
}

std::vector<double> BridgeState::kkt_trace() const {
    std::vector<double> out;
    out.reserve(residual_trace.size());
    for (const auto& r : residual_trace) out.push_back(*std::max_element(r.begin(), r.end()));
    return out;
}

void SinkhornOptions::validate() const {
    if (!(tol > 0.0)) throw InputError("tolerance must be positive");
    if (t_max < 1) throw InputError("t_max must be positive");
    if (!(gamma_min > 0.0) || gamma_max > 1.0 || gamma_min > gamma_max) {
        throw InputError("damping bounds must satisfy 0 < min <= max <= 1");
    }
    if (!(ridge > 0.0)) throw InputError("ridge must be positive");
}

CouplingSummary coupling_summary(const BridgeState& s, const TriMarginalProblem& problem,
                                 const StageKernels& k) {
    const Context ctx(problem, k);
    const int n = problem.size();
    const VectorXd a = s.log_u + ctx.lm1, b = s.log_v + ctx.lm2, c = s.log_w + ctx.lm3;
    const MatrixXd L12 = ctx.L12(s.eta), L23 = ctx.L23(s.eta);
    const VectorXd Lm = lse_cols(L12, a);
    const VectorXd R = lse_rows(L23, c);

    CouplingSummary out;
    out.p12.resize(n, n);
    out.p23.resize(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) out.p12(i, j) = std::exp(a[i] + L12(i, j) + b[j] + R[j]);
    for (int j = 0; j < n; ++j)
        for (int kk = 0; kk < n; ++kk) out.p23(j, kk) = std::exp(Lm[j] + b[j] + L23(j, kk) + c[kk]);
    out.p1 = out.p12.rowwise().sum();
    out.p2 = out.p12.colwise().sum().transpose();
    out.p3 = out.p23.colwise().sum().transpose();
    out.mass = out.p2.sum();
    out.martingale = out.p12.cwiseProduct(ctx.g12).sum() + out.p23.cwiseProduct(ctx.g23).sum() -
                     ctx.rhs;
    return out;
}

std::vector<double> coupling_tensor(const BridgeState& s, const TriMarginalProblem& problem,
                                    const StageKernels& k) {
    const Context ctx(problem, k);
    const int n = problem.size();
    const VectorXd a = s.log_u + ctx.lm1, b = s.log_v + ctx.lm2, c = s.log_w + ctx.lm3;
    const MatrixXd L12 = ctx.L12(s.eta), L23 = ctx.L23(s.eta);
    std::vector<double> pi(static_cast<std::size_t>(n) * n * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int kk = 0; kk < n; ++kk)
                pi[(static_cast<std::size_t>(i) * n + j) * n + kk] =
                    std::exp(a[i] + L12(i, j) + b[j] + L23(j, kk) + c[kk]);
    return pi;
}

std::pair<double, Residual4> kkt_residual(const BridgeState& s, const TriMarginalProblem& problem,
                                          const StageKernels& k) {
    const CouplingSummary cs = coupling_summary(s, problem, k);
    Residual4 r{sup_diff(cs.p1, problem.m1), sup_diff(cs.p2, problem.m2),
                sup_diff(cs.p3, problem.m3), std::abs(cs.martingale)};
    return {*std::max_element(r.begin(), r.end()), r};
}

namespace {

double masked_dot(const VectorXd& m, const VectorXd& l) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        if (m[i] != 0.0) s += m[i] * l[i];
    }
    return s;
}

}  // namespace

double dual_value(const BridgeState& s, const TriMarginalProblem& problem, const StageKernels& k) {
    const CouplingSummary cs = coupling_summary(s, problem, k);
    const double eps = k.epsilon;
    return eps * (masked_dot(problem.m1, s.log_u) + masked_dot(problem.m2, s.log_v) +
                  masked_dot(problem.m3, s.log_w)) +
           s.eta * problem.martingale_rhs() - eps * cs.mass;
}

double primal_value(const BridgeState& s, const TriMarginalProblem& problem,
                    const StageKernels& k) {
    // log(pi/rho) = lu + lv + lw + log K12 + log K23 + eta g / eps, and the cost is -eps log K,
    // so the kernel terms cancel against <c, pi>.
    const CouplingSummary cs = coupling_summary(s, problem, k);
    const double eps = k.epsilon;
    const double mart = cs.martingale + problem.martingale_rhs();
    return eps * (masked_dot(cs.p1, s.log_u) + masked_dot(cs.p2, s.log_v) +
                  masked_dot(cs.p3, s.log_w)) +
           s.eta * mart - eps * cs.mass;
}

double entropic_value(const BridgeState& s, const TriMarginalProblem& problem,
                      const StageKernels& k) {
    const CouplingSummary cs = coupling_summary(s, problem, k);
    return primal_value(s, problem, k) + k.epsilon * cs.mass;
}

RatioStats geometric_ratio(const std::vector<double>& residuals) {
    if (residuals.size() < 2) throw InsufficientDataError("residual trace needs two entries");
    std::vector<double> ratios;
    for (std::size_t t = 0; t + 1 < residuals.size(); ++t) {
        if (residuals[t] > 0.0) ratios.push_back(residuals[t + 1] / residuals[t]);
    }
    RatioStats out;
    if (ratios.empty()) return out;
    const std::size_t window =
        std::min(ratios.size(),
                 std::max<std::size_t>(10, static_cast<std::size_t>(std::ceil(0.1 * ratios.size()))));
    std::vector<double> tail(ratios.end() - static_cast<std::ptrdiff_t>(window), ratios.end());
    out.median = percentile(tail, 0.5);
    out.q10 = percentile(tail, 0.1);
    out.q90 = percentile(tail, 0.9);
    return out;
}

double mu_hat_from_features(const MatrixXd& phi2, const VectorXd& m1, const VectorXd& m3,
                            double ridge) {
    if (phi2.rows() != m1.size() || m1.size() != m3.size()) {
        throw DimensionError("feature rows must match marginal length");
    }
    MatrixXd G = phi2.transpose() * (m1 + m3).asDiagonal() * phi2;
    G.diagonal().array() += ridge;
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(G, Eigen::EigenvaluesOnly);
    return std::max(es.eigenvalues().minCoeff(), 1e-12);
}

CertificateSet certify(const BridgeState& s, const TriMarginalProblem& problem,
                       const StageKernels& k, double ridge) {
    const RatioStats rs = geometric_ratio(s.kkt_trace());
    CertificateSet c;
    std::tie(c.kkt, c.kkt_components) = kkt_residual(s, problem, k);
    c.r_geo = rs.median;
    c.r_geo_q10 = rs.q10;
    c.r_geo_q90 = rs.q90;
    c.mu_hat = mu_hat_from_features(k.k12.phi2, problem.m1, problem.m3, ridge);
    c.iterations = static_cast<int>(s.residual_trace.size());
    c.epsilon_final = k.epsilon;
    return c;
}

namespace {

struct StageRun {
    BridgeState& state;
    const TriMarginalProblem& problem;
    const SinkhornOptions& opts;
    std::vector<double>& dual_trace;

    // Returns true when the KKT residual reaches tol.
    bool run(const StageKernels& k, double gamma_cap) {
        const Context ctx(problem, k);
        state.epsilon = k.epsilon;
        state.damping = std::min(state.damping, gamma_cap);
        std::vector<double> local;
        int rises = 0;
        for (int t = 0; t < opts.t_max; ++t) {
            sweep(state, ctx, state.damping);
            const auto [kkt, comps] = kkt_residual(state, problem, k);
            state.residual_trace.push_back(comps);
            dual_trace.push_back(dual_value(state, problem, k));
            if (kkt <= opts.tol) return true;
            if (!local.empty() && kkt > local.back()) {
                if (++rises >= 2) {
                    state.damping = std::max(opts.gamma_min, state.damping / 1.5);
                    rises = 0;
                }
            } else {
                rises = 0;
            }
            local.push_back(kkt);
            const std::size_t L = local.size();
            if (L > 5) {
                const double before = local[L - 6];
                if (before > 0.0 && (before - kkt) / before < 1e-3) {
                    if (state.damping < gamma_cap) {
                        state.damping = std::min(gamma_cap, 1.5 * state.damping);
                    } else {
                        return false;
                    }
                }
            }
        }
        return false;
    }
};

void rescale_potentials(BridgeState& s, double eps_new) {
    const double f = s.epsilon / eps_new;
    s.log_u *= f;
    s.log_v *= f;
    s.log_w *= f;
    s.epsilon = eps_new;
}

}  // namespace

BridgeResult tri_sinkhorn(const TriMarginalProblem& problem, const BridgeKernels& kernels,
                          const SinkhornOptions& opts) {
    problem.validate();
    opts.validate();
    if (kernels.stages.empty()) throw InputError("no kernel stages");
    const int n = problem.size();
    for (const auto& st : kernels.stages) {
        if (st.k12.log_kernel.rows() != n || st.k23.log_kernel.rows() != n) {
            throw DimensionError("kernels do not match the problem size");
        }
    }

    BridgeResult res;
    res.state = BridgeState::zeros(n, kernels.stages.front().epsilon);
    res.state.damping = opts.gamma_max;
    std::vector<std::string> fallbacks;
    StageRun runner{res.state, problem, opts, res.dual_trace};
    const bool sq12 = problem.c12.size() == 0, sq23 = problem.c23.size() == 0;

    bool ok = false;
    for (std::size_t si = 0; si < kernels.stages.size(); ++si) {
        const StageKernels& k = kernels.stages[si];
        rescale_potentials(res.state, k.epsilon);
        ok = runner.run(k, opts.gamma_max);
        if (!ok) {
            // Put the coupling back on unit mass and restart at full step.
            const CouplingSummary cs = coupling_summary(res.state, problem, k);
            if (cs.mass > 0.0 && std::isfinite(cs.mass)) res.state.log_v.array() -= std::log(cs.mass);
            res.state.damping = opts.gamma_max;
            fallbacks.push_back("marginal_rebalancing@" + std::to_string(k.epsilon));
            ok = runner.run(k, opts.gamma_max);
        }
        if (!ok) {
            res.state.damping = opts.gamma_min;
            fallbacks.push_back("damping_increase@" + std::to_string(k.epsilon));
            ok = runner.run(k, opts.gamma_min);
        }
        if (!ok && si > 0) {
            const double eps_b = std::sqrt(kernels.stages[si - 1].epsilon * k.epsilon);
            StageKernels kb;
            kb.epsilon = eps_b;
            kb.k12 = factorize_kernel(problem.cost12(), eps_b, kernels.kind, kernels.rank, problem.x,
                                      sq12, problem.rff_seed);
            kb.k23 = factorize_kernel(problem.cost23(), eps_b, kernels.kind, kernels.rank, problem.x,
                                      sq23, problem.rff_seed + 1);
            fallbacks.push_back("epsilon_backtrack@" + std::to_string(k.epsilon));
            rescale_potentials(res.state, eps_b);
            res.state.damping = opts.gamma_max;
            runner.run(kb, opts.gamma_max);
            rescale_potentials(res.state, k.epsilon);
            res.state.damping = opts.gamma_max;
            ok = runner.run(k, opts.gamma_max);
        }
        res.stage_kkt.push_back(kkt_residual(res.state, problem, k).first);
    }

    const StageKernels& last = kernels.stages.back();
    if (res.state.residual_trace.size() >= 2) {
        res.certificates = certify(res.state, problem, last, opts.ridge);
    } else {
        std::tie(res.certificates.kkt, res.certificates.kkt_components) =
            kkt_residual(res.state, problem, last);
        res.certificates.mu_hat = mu_hat_from_features(last.k12.phi2, problem.m1, problem.m3, opts.ridge);
        res.certificates.iterations = static_cast<int>(res.state.residual_trace.size());
        res.certificates.epsilon_final = last.epsilon;
    }
    res.certificates.converged = ok;
    res.certificates.fallbacks_taken = std::move(fallbacks);
    return res;
}

}  // namespace arbcert
