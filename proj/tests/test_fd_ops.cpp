#include <doctest.h>

#include <cmath>
#include <random>

#include "arbcert/errors.hpp"
#include "arbcert/fd_ops.hpp"
#include "arbcert/synth.hpp"

using namespace arbcert;

namespace {

Surface sample(const Grid2D& g, double (*f)(double, double)) {
    Field v(g.n_maturities(), g.n_strikes());
    for (int t = 0; t < v.rows(); ++t)
        for (int k = 0; k < v.cols(); ++k) v(t, k) = f(g.strikes()[k], g.maturities()[t]);
    return Surface(g, v, false);
}

double slope(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

TEST_CASE("quadratic fits reproduce polynomials exactly") {
    const Grid2D g({1.0, 1.5, 2.5, 3.0, 4.5, 5.0, 6.0}, {0.1, 0.3, 0.4, 0.8, 1.0});
    const FdDerivatives a = fd_derivatives(sample(g, [](double K, double) { return K * K; }), {});
    CHECK((a.C_KK.array() - 2.0).abs().maxCoeff() < 1e-10);
    CHECK(a.C_tau.cwiseAbs().maxCoeff() < 1e-10);

    const FdDerivatives b = fd_derivatives(sample(g, [](double, double t) { return t; }), {});
    CHECK((b.C_tau.array() - 1.0).abs().maxCoeff() < 1e-10);
    CHECK(b.C_KK.cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("second strike derivative converges at second order") {
    MarketParams p;
    std::vector<double> logh, loge;
    for (int n : {21, 41, 81}) {
        const Grid2D g = Grid2D::uniform(80, 120, n, 0.1, 1.1, 11);
        const Surface C = generate_surface(p, g).clean;
        const FdDerivatives d = fd_derivatives(C, {});
        double s = 0.0;
        int cnt = 0;
        for (int t = 0; t < g.n_maturities(); ++t)
            for (int k = 0; k < n; ++k) {
                const double K = g.strikes()[k];
                if (K < 90 || K > 110) continue;
                const double e = d.C_KK(t, k) - model_call_KK(p, K, g.maturities()[t]);
                s += e * e;
                ++cnt;
            }
        logh.push_back(std::log(g.h_K()));
        loge.push_back(0.5 * std::log(s / cnt));
    }
    const double order = slope(logh, loge);
    CHECK(order > 1.7);
    CHECK(order < 2.3);
}

TEST_CASE("Dupire field") {
    SUBCASE("flat volatility is recovered on the interior") {
        MarketParams p;
        const Grid2D g = Grid2D::uniform(80, 120, 41, 0.1, 1.1, 21);
        const DupireField d = dupire_field(generate_surface(p, g).clean, {});
        double worst = 0.0;
        for (int t = 2; t < 19; ++t)
            for (int k = 8; k < 33; ++k) worst = std::max(worst, std::abs(d.sigma2(t, k) - 0.04));
        CHECK(worst <= 0.01);
    }
    SUBCASE("zero time value clips to the lower bound") {
        const Grid2D g = Grid2D::uniform(1, 5, 9, 0.1, 1.1, 5);
        const DupireField d = dupire_field(sample(g, [](double K, double) { return K * K; }), {});
        CHECK((d.sigma2.array() == FdConfig{}.clip_lo).all());
        CHECK(d.clipped.all());
    }
    SUBCASE("flat strike profile hits the denominator floor") {
        const Grid2D g = Grid2D::uniform(1, 5, 9, 0.1, 1.1, 5);
        FdConfig cfg;
        cfg.clip_hi = 1e12;
        const DupireField d = dupire_field(sample(g, [](double, double t) { return 1e-9 * t; }), cfg);
        // 2 * 1e-9 / denom_floor
        CHECK(d.sigma2(2, 4) == doctest::Approx(2e-9 / cfg.denom_floor));
        CHECK(d.clipped(2, 4));
    }
    SUBCASE("invalid windows are rejected") {
        const Grid2D g = Grid2D::uniform(1, 5, 9, 0.1, 1.1, 5);
        FdConfig cfg;
        cfg.window_K = 4;
        CHECK_THROWS_AS(fd_derivatives(sample(g, [](double K, double) { return K; }), cfg), InputError);
        cfg.window_K = 11;
        CHECK_THROWS_AS(fd_derivatives(sample(g, [](double K, double) { return K; }), cfg), DimensionError);
    }
}

TEST_CASE("Dupire total variation") {
    const Grid2D g = Grid2D::uniform(1, 5, 5, 0.1, 0.5, 5);
    const WeightField w1 = WeightField::uniform(g);
    DupireField f{Field::Constant(5, 5, 0.04), BoolField::Constant(5, 5, false)};
    CHECK(dupire_total_variation(f, w1) == 0.0);

    f.sigma2.block(0, 3, 5, 2).array() += 0.5;  // one vertical step line across all rows
    CHECK(dupire_total_variation(f, w1) == doctest::Approx(5 * 0.5));

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.1, 2.0);
    Field raw(5, 5), s(5, 5);
    for (int i = 0; i < 25; ++i) {
        raw.data()[i] = u(rng);
        s.data()[i] = u(rng);
    }
    const WeightField w(raw);
    double oracle = 0.0;
    for (int t1 = 0; t1 < 5; ++t1)
        for (int k1 = 0; k1 < 5; ++k1)
            for (int t2 = 0; t2 < 5; ++t2)
                for (int k2 = 0; k2 < 5; ++k2) {
                    const int dist = std::abs(t1 - t2) + std::abs(k1 - k2);
                    if (dist != 1 || t2 * 5 + k2 < t1 * 5 + k1) continue;
                    oracle += 0.5 * (w(t1, k1) + w(t2, k2)) * std::abs(s(t1, k1) - s(t2, k2));
                }
    CHECK(dupire_total_variation({s, BoolField::Constant(5, 5, false)}, w) ==
          doctest::Approx(oracle).epsilon(1e-13));
}

TEST_CASE("assembled operators agree with the pointwise stencils") {
    MarketParams p;
    const Grid2D g = Grid2D::uniform(80, 120, 9, 0.1, 1.1, 6);
    const Surface C = generate_surface(p, g).clean;
    const FdDerivatives d = fd_derivatives(C, {});
    Eigen::VectorXd v(54);
    for (int t = 0; t < 6; ++t)
        for (int k = 0; k < 9; ++k) v[t * 9 + k] = C.values(t, k);
    const Eigen::VectorXd kk = assemble_dkk(g, {}) * v;
    const Eigen::VectorXd tt = assemble_dtau(g, {}) * v;
    for (int t = 0; t < 6; ++t)
        for (int k = 0; k < 9; ++k) {
            CHECK(kk[t * 9 + k] == doctest::Approx(d.C_KK(t, k)).epsilon(1e-12));
            CHECK(tt[t * 9 + k] == doctest::Approx(d.C_tau(t, k)).epsilon(1e-12));
        }
    CHECK(weighted_operator_norm(Eigen::MatrixXd::Identity(54, 54), WeightField::uniform(g), g) ==
          doctest::Approx(1.0));
}
