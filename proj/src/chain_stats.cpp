#include "arbcert/chain_stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <tuple>

#include "arbcert/errors.hpp"
#include "arbcert/grid.hpp"

namespace arbcert {

void KernelMixture::validate() const {
    if (components.empty() || components.size() != weights.size()) {
        throw DimensionError("mixture needs one weight per component");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < components.size(); ++i) {
        if (!(components[i].scale > 0.0) || !(components[i].shape > 0.0)) {
            throw InputError("kernel scales must be positive");
        }
        if (weights[i] < 0.0) throw InputError("mixture weights must be nonnegative");
        s += weights[i];
    }
    if (std::abs(s - 1.0) > 1e-12) throw InputError("mixture weights must sum to one");
}

double KernelMixture::from_sq_dist(double d2) const {
    double v = 0.0;
    for (std::size_t i = 0; i < components.size(); ++i) {
        const KernelComponent& c = components[i];
        const double s2 = c.scale * c.scale;
        double kv;
        if (c.kind == KernelKind::gaussian) kv = std::exp(-d2 / (2.0 * s2));
        else if (c.shape == 0.5) kv = 1.0 / std::sqrt(1.0 + d2 / s2);
        else kv = std::pow(1.0 + d2 / s2, -c.shape);
        v += weights[i] * kv;
    }
    return v;
}

double KernelMixture::operator()(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
    return from_sq_dist((a - b).squaredNorm());
}

KernelMixture median_bandwidth_mixture(const Samples& X, const Samples& Y,
                                       const std::vector<int>& octaves) {
    if (X.rows() == 0 || Y.rows() == 0) throw InsufficientDataError("empty sample");
    if (X.cols() != Y.cols()) throw DimensionError("sample dimensions differ");
    std::vector<double> d;
    d.reserve(static_cast<std::size_t>(X.rows() * Y.rows()));
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        for (Eigen::Index j = 0; j < Y.rows(); ++j) d.push_back((X.row(i) - Y.row(j)).norm());
    KernelMixture k;
    k.bandwidth = percentile(std::move(d), 0.5);
    if (!(k.bandwidth > 0.0)) {
        k.bandwidth = 1.0;
        k.fallback = true;
    }
    for (int l : octaves) k.components.push_back({KernelKind::gaussian, std::ldexp(k.bandwidth, l), 0.5});
    k.components.push_back({KernelKind::imq, k.bandwidth, 0.5});
    k.weights.assign(k.components.size(), 1.0 / static_cast<double>(k.components.size()));
    return k;
}

namespace {

double kval(const KernelMixture& k, const Samples& A, Eigen::Index i, const Samples& B,
            Eigen::Index j) {
    return k.from_sq_dist((A.row(i) - B.row(j)).squaredNorm());
}

void check_pair(const Samples& X, const Samples& Y) {
    if (X.cols() != Y.cols()) throw DimensionError("sample dimensions differ");
}

}  // namespace

double mmd2_full(const Samples& X, const Samples& Y, const KernelMixture& k) {
    check_pair(X, Y);
    const Eigen::Index n = X.rows(), m = Y.rows();
    if (n < 2 || m < 2) throw InsufficientDataError("full MMD needs two samples per side");
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j) sxx += kval(k, X, i, X, j);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = i + 1; j < m; ++j) syy += kval(k, Y, i, Y, j);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < m; ++j) sxy += kval(k, X, i, Y, j);
    const double dn = static_cast<double>(n), dm = static_cast<double>(m);
    return 2.0 * sxx / (dn * (dn - 1.0)) + 2.0 * syy / (dm * (dm - 1.0)) - 2.0 * sxy / (dn * dm);
}

namespace {

using Pair = std::pair<Eigen::Index, Eigen::Index>;

// Pool indices map to unordered pairs i < j (same sample) or to the full grid (cross sample).
std::vector<Pair> sample_pairs(Eigen::Index n, Eigen::Index m, bool same, long M, bool replace,
                               std::mt19937_64& rng) {
    std::vector<Pair> out;
    out.reserve(static_cast<std::size_t>(M));
    if (replace) {
        std::uniform_int_distribution<Eigen::Index> di(0, n - 1), dj(0, m - 1);
        while (static_cast<long>(out.size()) < M) {
            Eigen::Index i = di(rng), j = dj(rng);
            if (same) {
                if (i == j) continue;
                if (i > j) std::swap(i, j);
            }
            out.emplace_back(i, j);
        }
        return out;
    }
    std::vector<Pair> pool;
    if (same) {
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = i + 1; j < n; ++j) pool.emplace_back(i, j);
    } else {
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < m; ++j) pool.emplace_back(i, j);
    }
    if (M > static_cast<long>(pool.size())) {
        throw InputError("cannot draw more pairs than the pool holds without replacement");
    }
    for (long t = 0; t < M; ++t) {
        std::uniform_int_distribution<std::size_t> d(static_cast<std::size_t>(t), pool.size() - 1);
        std::swap(pool[static_cast<std::size_t>(t)], pool[d(rng)]);
        out.push_back(pool[static_cast<std::size_t>(t)]);
    }
    return out;
}

}  // namespace

double mmd2_incomplete(const Samples& X, const Samples& Y, const KernelMixture& k,
                       const IncompleteSpec& spec) {
    check_pair(X, Y);
    if (spec.Mxx < 1 || spec.Myy < 1 || spec.Mxy < 1) {
        throw InsufficientDataError("incomplete MMD needs at least one pair per block");
    }
    if (X.rows() < 2 || Y.rows() < 2) throw InsufficientDataError("need two samples per side");
    std::mt19937_64 rng(spec.seed);
    const auto pxx = sample_pairs(X.rows(), X.rows(), true, spec.Mxx, spec.with_replacement, rng);
    const auto pyy = sample_pairs(Y.rows(), Y.rows(), true, spec.Myy, spec.with_replacement, rng);
    const auto pxy = sample_pairs(X.rows(), Y.rows(), false, spec.Mxy, spec.with_replacement, rng);
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (const auto& [i, j] : pxx) sxx += kval(k, X, i, X, j);
    for (const auto& [i, j] : pyy) syy += kval(k, Y, i, Y, j);
    for (const auto& [i, j] : pxy) sxy += kval(k, X, i, Y, j);
    return sxx / static_cast<double>(spec.Mxx) + syy / static_cast<double>(spec.Myy) -
           2.0 * sxy / static_cast<double>(spec.Mxy);
}

ChainEnergy chain_energy(const std::vector<Samples>& slices, const std::vector<double>& edge_weights,
                         const std::vector<int>& octaves, const IncompleteSpec* incomplete) {
    if (slices.size() < 2) throw InsufficientDataError("chain energy needs two slices");
    if (edge_weights.size() != slices.size() - 1) throw DimensionError("one weight per edge");
    double wsum = 0.0;
    for (double w : edge_weights) {
        if (!(w > 0.0)) throw InputError("edge weights must be positive");
        wsum += w;
    }
    if (std::abs(wsum - 1.0) > 1e-12) throw InputError("edge weights must sum to one");
    ChainEnergy out;
    for (std::size_t t = 0; t + 1 < slices.size(); ++t) {
        const KernelMixture k = median_bandwidth_mixture(slices[t], slices[t + 1], octaves);
        double e = 0.0;
        if (incomplete != nullptr) {
            IncompleteSpec s = *incomplete;
            s.seed += t;
            e = mmd2_incomplete(slices[t], slices[t + 1], k, s);
        } else {
            e = mmd2_full(slices[t], slices[t + 1], k);
        }
        out.edges.push_back(e);
        out.bandwidths.push_back(k.bandwidth);
        out.total += edge_weights[t] * e;
    }
    return out;
}

double n_eff(int n, const std::vector<double>& alpha, double gamma, double c_gamma) {
    if (n < 1) throw InputError("n must be positive");
    if (!(gamma > 0.0) || !(c_gamma > 0.0)) throw InputError("gamma and c_gamma must be positive");
    const double expo = std::isinf(gamma) ? 1.0 : gamma / (2.0 + gamma);
    double L = 1.0;
    for (int k = 1; k < n; ++k) {
        const double a = static_cast<std::size_t>(k - 1) < alpha.size() ? alpha[k - 1] : 0.0;
        if (a < 0.0) throw InputError("mixing coefficients must be nonnegative");
        if (a > 0.0) L += 2.0 * (1.0 - static_cast<double>(k) / n) * c_gamma * std::pow(a, expo);
    }
    return n / L;
}

std::vector<double> bartlett_alpha(const std::vector<double>& r, int bandwidth) {
    const std::size_t n = r.size();
    if (n < 2) throw InsufficientDataError("need two residuals");
    if (bandwidth < 0) {
        bandwidth = static_cast<int>(std::floor(4.0 * std::pow(static_cast<double>(n) / 100.0, 2.0 / 9.0)));
    }
    const double mean = std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(n);
    double c0 = 0.0;
    for (double v : r) c0 += (v - mean) * (v - mean);
    std::vector<double> alpha(n - 1, 0.0);
    if (c0 <= 0.0) return alpha;
    for (int k = 1; k <= bandwidth && static_cast<std::size_t>(k) < n; ++k) {
        double ck = 0.0;
        for (std::size_t t = static_cast<std::size_t>(k); t < n; ++t) ck += (r[t] - mean) * (r[t - k] - mean);
        const double w = 1.0 - static_cast<double>(k) / (bandwidth + 1.0);
        alpha[k - 1] = std::min(1.0, w * std::abs(ck / c0));
    }
    return alpha;
}

void ChainSeries::validate() const {
    if (sizes.size() != values.size() || sizes.size() != neff.size()) {
        throw DimensionError("chain series lengths differ");
    }
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        if (!(sizes[i] > 0.0)) throw InputError("sizes must be positive");
        if (i > 0 && !(sizes[i] > sizes[i - 1])) throw InputError("sizes must increase");
        if (!(neff[i] > 0.0)) throw InputError("effective sizes must be positive");
        if (!std::isfinite(values[i])) throw InputError("series values must be finite");
    }
}

std::vector<double> FirSmoother::apply(const std::vector<double>& y) const {
    if (y.size() != rows.size()) throw DimensionError("smoother length mismatch");
    std::vector<double> out(y.size(), 0.0);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j) {
            out[i] += rows[i][j] * y[static_cast<std::size_t>(starts[i]) + j];
        }
    }
    return out;
}

FirSmoother degree5_smoother(int length, int halfwidth) {
    if (length < 1 || halfwidth < 3) throw InputError("smoother needs length >= 1, halfwidth >= 3");
    constexpr int kMoments = 6;
    FirSmoother s;
    s.rows.resize(static_cast<std::size_t>(length));
    s.starts.resize(static_cast<std::size_t>(length));
    if (length < kMoments) {
        for (int i = 0; i < length; ++i) {
            s.rows[i] = {1.0};
            s.starts[i] = i;
        }
        return s;
    }
    const int width = std::min(2 * halfwidth + 1, length);
    s.l1 = 0.0;
    for (int i = 0; i < length; ++i) {
        const int start = std::clamp(i - halfwidth, 0, length - width);
        Eigen::MatrixXd V(kMoments, width);
        for (int j = 0; j < width; ++j) {
            const double off = static_cast<double>(start + j - i) / halfwidth;
            double p = 1.0;
            for (int r = 0; r < kMoments; ++r) {
                V(r, j) = p;
                p *= off;
            }
        }
        Eigen::VectorXd e = Eigen::VectorXd::Zero(kMoments);
        e[0] = 1.0;
        const Eigen::VectorXd h = V.transpose() * (V * V.transpose()).ldlt().solve(e);
        s.rows[i].assign(h.data(), h.data() + width);
        s.starts[i] = start;
        s.l1 = std::max(s.l1, h.lpNorm<1>());
    }
    if (s.l1 > 120.0) throw StructureError("FIR amplification exceeds 120");
    return s;
}

namespace {

double ols_slope(const double* x, const double* y, int m) {
    double mx = 0.0, my = 0.0;
    for (int i = 0; i < m; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= m;
    my /= m;
    double sxy = 0.0, sxx = 0.0;
    for (int i = 0; i < m; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxy / sxx;
}

std::pair<int, int> tail_range(int S, double tail_fraction) {
    const int begin = static_cast<int>(std::ceil((1.0 - tail_fraction) * S - 1e-9)) - 1;
    return {std::clamp(begin, 0, S - 1), S};
}

}  // namespace

TailDiagnostics tail_diagnostics(const ChainSeries& series, double tail_fraction, int window,
                                 int fir_halfwidth, Direction envelope) {
    series.validate();
    const int S = static_cast<int>(series.sizes.size());
    if (window < 2) throw InputError("slope window needs two points");
    if (!(tail_fraction > 0.0 && tail_fraction <= 1.0)) throw InputError("tail fraction in (0,1]");
    if (S < std::max(4, window)) throw InsufficientDataError("series too short");

    TailDiagnostics d;
    d.envelope = pav_isotonic(series.values, std::vector<double>(S, 1.0), envelope);
    const FirSmoother fir = degree5_smoother(S, fir_halfwidth);
    d.smoothed = fir.apply(d.envelope);
    d.fir_l1 = fir.l1;
    std::tie(d.tail_begin, d.tail_end) = tail_range(S, tail_fraction);
    const int m = d.tail_end - d.tail_begin;
    if (m < window) throw InsufficientDataError("tail shorter than slope window");

    const double* x = series.sizes.data() + d.tail_begin;
    const double* y = d.smoothed.data() + d.tail_begin;
    std::vector<double> slopes;
    for (int s = 0; s + window <= m; ++s) slopes.push_back(ols_slope(x + s, y + s, window));
    d.slope_tail = percentile(slopes, 0.5);

    double area = 0.0;
    for (int s = 1; s < m; ++s) area += 0.5 * (x[s] - x[s - 1]) * (y[s] + y[s - 1]);
    d.baseline_area = (x[m - 1] - x[0]) * y[0];
    d.area_drop = d.baseline_area != 0.0 ? (d.baseline_area - area) / std::abs(d.baseline_area)
                                         : d.baseline_area - area;
    return d;
}

ToleranceBands tolerance_band(int S, double delta, const std::vector<double>& neff_tail, double C,
                              const std::vector<double>& tail_x) {
    if (S < 1 || !(delta > 0.0 && delta < 1.0) || !(C > 0.0)) throw InputError("invalid band inputs");
    if (neff_tail.empty()) throw InsufficientDataError("empty tail");
    double worst = 0.0;
    for (double ne : neff_tail) {
        if (!(ne > 0.0)) throw InputError("effective sizes must be positive");
        if (std::isinf(ne)) continue;
        worst = std::max(worst, std::sqrt(std::log(2.0 * S / delta) / ne));
    }
    ToleranceBands b;
    b.per_point = C * worst;
    if (tail_x.size() >= 2) {
        const double mean = std::accumulate(tail_x.begin(), tail_x.end(), 0.0) / tail_x.size();
        double var = 0.0;
        for (double v : tail_x) var += (v - mean) * (v - mean);
        const double sigma = std::sqrt(var / tail_x.size());
        b.slope = sigma > 0.0 ? b.per_point / sigma : std::numeric_limits<double>::infinity();
        b.area = (tail_x.back() - tail_x.front()) * b.per_point;
    }
    return b;
}

GateDecision gate_v2(const ChainSeries& series, const GateThresholds& th, double delta) {
    const TailDiagnostics d =
        tail_diagnostics(series, th.tail_fraction, th.window, th.fir_halfwidth, th.envelope);
    const std::vector<double> neff_tail(series.neff.begin() + d.tail_begin,
                                        series.neff.begin() + d.tail_end);
    const std::vector<double> x_tail(series.sizes.begin() + d.tail_begin,
                                     series.sizes.begin() + d.tail_end);
    const ToleranceBands b = tolerance_band(static_cast<int>(series.sizes.size()), delta, neff_tail,
                                            th.band_constant, x_tail);
    GateDecision g;
    g.slope_tail = d.slope_tail;
    g.area_drop = d.area_drop;
    g.band_point = b.per_point;
    g.band_slope = b.slope;
    g.band_area = d.baseline_area != 0.0 ? b.area / std::abs(d.baseline_area) : b.area;
    g.fir_l1 = d.fir_l1;
    g.tail_begin = d.tail_begin;
    g.tail_end = d.tail_end;
    g.envelope_direction = th.envelope == Direction::nonincreasing ? "nonincreasing" : "nondecreasing";
    g.pass = std::abs(d.slope_tail) <= th.slope_max && d.area_drop >= th.area_min;
    return g;
}

}  // namespace arbcert
