#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <numeric>
#include <set>

#include "arbcert/errors.hpp"
#include "arbcert/smolyak.hpp"

using namespace arbcert;

namespace {

std::set<std::pair<int, int>> as_set(const std::vector<LevelPair>& v) {
    std::set<std::pair<int, int>> s;
    for (const auto& p : v) s.insert({p.i, p.j});
    return s;
}

AnisotropyConfig iso(int L) {
    AnisotropyConfig c;
    c.level_L = L;
    return c;
}

// Distinct points of the union of dyadic tensor grids, counted on a common fine lattice.
int count_nodes_oracle(const AnisotropyConfig& c) {
    std::set<std::pair<long, long>> pts;
    const long F = 1L << 20;
    for (const auto& lp : build_index_set(c))
        for (long m = 0; m <= (1L << lp.i); ++m)
            for (long n = 0; n <= (1L << lp.j); ++n) pts.insert({m * (F >> lp.i), n * (F >> lp.j)});
    return static_cast<int>(pts.size());
}

double regression_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / y.size();
    double sxy = 0, sxx = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxy / sxx;
}

const double kPi = std::acos(-1.0);

}  // namespace

TEST_CASE("index sets") {
    CHECK(as_set(build_index_set(iso(0))) == std::set<std::pair<int, int>>{{0, 0}});
    CHECK(as_set(build_index_set(iso(2))) ==
          std::set<std::pair<int, int>>{{0, 0}, {1, 0}, {0, 1}, {2, 0}, {1, 1}, {0, 2}});

    AnisotropyConfig a = iso(4);
    a.beta_K = 2;  // strike direction smoother -> slope 1/2, more strike levels
    const auto s = build_index_set(a);
    for (const auto& p : s) CHECK(a.slope_K() * p.i + a.slope_tau() * p.j <= 4.0 + 1e-12);
    CHECK(std::any_of(s.begin(), s.end(), [](const LevelPair& p) { return p.i == 8; }));
}

TEST_CASE("sparse node counts") {
    for (int L = 0; L <= 8; ++L) CHECK(sparse_node_count(iso(L)) == count_nodes_oracle(iso(L)));
    // Growth like 2^L * L: the normalized ratio stays within a constant band.
    for (int L = 2; L <= 8; ++L) {
        const double r = sparse_node_count(iso(L)) / (std::pow(2.0, L) * L);
        CHECK(r > 0.5);
        CHECK(r < 4.0);
    }
}

TEST_CASE("affine targets are reproduced exactly") {
    const Target2D g = [](double x, double y) { return 2 * x + 3 * y + 1; };
    const Rect dom{0.0, 2.0, 1.0, 4.0};
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> ux(0.0, 2.0), uy(1.0, 4.0);
    for (int L : {0, 1, 3, 5}) {
        const SmolyakFit f = smolyak_fit(g, iso(L), dom);
        double worst = 0.0;
        for (int i = 0; i < 100; ++i) {
            const double x = ux(rng), y = uy(rng);
            worst = std::max(worst, std::abs(f.cpwl.evaluate(x, y) - g(x, y)));
        }
        CHECK(worst < 1e-12);
    }
}

TEST_CASE("interpolation at activated nodes") {
    const Target2D g = [](double x, double y) { return std::exp(x) * std::cos(3 * y); };
    const SmolyakFit f = smolyak_fit(g, iso(5), {0, 1, 0, 1});
    CHECK(static_cast<int>(f.sparse_nodes.size()) == sparse_node_count(iso(5)));
    for (size_t i = 0; i < f.sparse_nodes.size(); ++i) {
        const auto& p = f.sparse_nodes[i];
        CHECK(std::abs(f.cpwl.evaluate(p.x(), p.y()) - g(p.x(), p.y())) < 1e-12);
    }
}

TEST_CASE("smooth target converges at the sparse-grid rate") {
    const Target2D g = [](double x, double y) { return std::sin(kPi * x) * std::sin(kPi * y); };
    std::vector<double> ls, le;
    for (int L = 2; L <= 7; ++L) {
        const SmolyakFit f = smolyak_fit(g, iso(L), {0, 1, 0, 1});
        const double e = weighted_l2_error([&](double x, double y) { return f.cpwl.evaluate(x, y); }, g,
                                           {0, 1, 0, 1}, 256);
        ls.push_back(std::log(std::pow(2.0, L)));
        le.push_back(std::log(e));
    }
    const double slope = regression_slope(ls, le);
    CHECK(slope >= -2.5);
    CHECK(slope <= -1.5);
}

TEST_CASE("error frontier") {
    const std::vector<int> levels{1, 2, 3, 4};
    const auto flat = error_frontier([](double x, double y) { return 1 - x + 0.5 * y; }, levels, iso(0),
                                     {0, 1, 0, 1}, 64);
    for (const auto& r : flat) CHECK(r.error <= 1e-12);
    for (size_t i = 1; i < flat.size(); ++i) CHECK(flat[i].node_count > flat[i - 1].node_count);

    const auto rows = error_frontier(
        [](double x, double y) { return std::sin(kPi * x) * std::sin(kPi * y); }, {3, 4, 5, 6, 7}, iso(0),
        {0, 1, 0, 1}, 256);
    std::vector<double> ln, le;
    for (const auto& r : rows) {
        ln.push_back(std::log(r.node_count));
        le.push_back(std::log(r.error));
    }
    const double slope = regression_slope(ln, le);
    CHECK(slope >= -1.5);
    CHECK(slope <= -0.5);
}

TEST_CASE("piecewise-linear function basics") {
    const std::vector<double> xs{0, 0.5, 1}, ys{0, 1};
    const CpwlFunction f = CpwlFunction::tensor(xs, ys, [&](int i, int j) { return 2 * xs[i] + 3 * ys[j]; });
    CHECK(f.vertex_count() == 6);
    CHECK(f.triangle_count() == 4);
    CHECK(f.locate({2.0, 0.5}) == -1);
    CHECK(f.evaluate(0.3, 0.7) == doctest::Approx(2 * 0.3 + 3 * 0.7));
    CHECK(f.lipschitz() == doctest::Approx(std::sqrt(13.0)));
    const int tri = f.locate({0.3, 0.2});
    const auto b = f.barycentric(tri, {0.3, 0.2});
    CHECK(b[0] + b[1] + b[2] == doctest::Approx(1.0));

    const std::vector<double> g5{0, 0.25, 0.5, 0.75, 1};
    CHECK(CpwlFunction::tensor(g5, g5, [](int, int) { return 0.0; }).max_valence() == 6);

    CHECK_THROWS_AS(CpwlFunction({{0, 0}, {1, 0}, {0, 1}}, {{0, 1, 1}}, {0, 0, 0}), StructureError);
}

TEST_CASE("weighted PCA head") {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> n01;
    Eigen::VectorXd q(12);
    for (int i = 0; i < 12; ++i) q[i] = 0.5 + std::abs(n01(rng));

    SUBCASE("rank one is exact") {
        Eigen::VectorXd u(8), z(12);
        for (int i = 0; i < 8; ++i) u[i] = n01(rng);
        for (int i = 0; i < 12; ++i) z[i] = n01(rng);
        CHECK(pca_head(u * z.transpose(), q, 1).residual <= 1e-10);
    }
    SUBCASE("full rank is exact") {
        const Eigen::MatrixXd M = Eigen::MatrixXd::NullaryExpr(8, 12, [&]() { return n01(rng); });
        CHECK(pca_head(M, q, 8).residual <= 1e-10);
    }
    SUBCASE("residual equals the weighted singular tail") {
        const Eigen::MatrixXd M = Eigen::MatrixXd::NullaryExpr(8, 12, [&]() { return n01(rng); });
        const Eigen::MatrixXd B = M * q.cwiseSqrt().asDiagonal();
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(B);
        const Eigen::VectorXd s = svd.singularValues();
        const double tail = s.tail(s.size() - 3).squaredNorm();
        const PcaHead h = pca_head(M, q, 3);
        CHECK(h.residual == doctest::Approx(tail).epsilon(1e-8));
        const Eigen::MatrixXd gram = h.modes.transpose() * q.asDiagonal() * h.modes;
        CHECK((gram - Eigen::MatrixXd::Identity(3, 3)).norm() < 1e-10);
    }
}
