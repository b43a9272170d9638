#include <doctest.h>

#include <cmath>
#include <random>

#include "arbcert/descent.hpp"
#include "arbcert/errors.hpp"

using namespace arbcert;

namespace {

Eigen::MatrixXd random_states(int T, int d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z;
    Eigen::MatrixXd X(T, d);
    for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = z(rng);
    return X;
}

DescentConfig chain_only(double lambda, double sigma, int steps) {
    DescentConfig c;
    c.fit_weight = 0.0;
    c.lambda_chain = lambda;
    c.noise_sigma = sigma;
    c.steps = steps;
    c.trust_region = false;
    return c;
}

}  // namespace

TEST_CASE("path Laplacian spectrum") {
    const PathGraph g2 = path_laplacian(2, {1.0});
    CHECK(g2.eigenvalues[0] == doctest::Approx(0.0).scale(1.0));
    CHECK(g2.eigenvalues[1] == doctest::Approx(2.0));
    const PathGraph g3 = path_laplacian(3, {1.0, 1.0});
    CHECK(std::abs(g3.eigenvalues[0]) <= 1e-12);
    CHECK(g3.eigenvalues[1] == doctest::Approx(1.0));
    CHECK(g3.eigenvalues[2] == doctest::Approx(3.0));
    CHECK(path_laplacian(3, {2.5, 2.5}).lambda2 == doctest::Approx(2.5));
    // Unit path on T nodes: lambda2 = 2(1 - cos(pi/T)).
    CHECK(path_laplacian(7, std::vector<double>(6, 1.0)).lambda2 ==
          doctest::Approx(2.0 * (1.0 - std::cos(M_PI / 7.0))).epsilon(1e-12));
    CHECK_THROWS_AS(path_laplacian(3, {1.0}), DimensionError);
    CHECK_THROWS_AS(path_laplacian(3, {1.0, 0.0}), InputError);
}

TEST_CASE("Dirichlet energy") {
    const PathGraph g = path_laplacian(3, {1.0, 1.0});
    Eigen::MatrixXd X(3, 1);
    X << 0, 1, 0;
    CHECK(chain_dirichlet_energy(X, g) == doctest::Approx(2.0));
    const Eigen::MatrixXd Y = random_states(3, 4, 1);
    CHECK(chain_dirichlet_energy(Y.array() + 7.0, g) == doctest::Approx(chain_dirichlet_energy(Y, g)));

    // Explicit feature means: sum w_t |mu_t - mu_{t+1}|^2 equals <mu, L mu>.
    const PathGraph gw = path_laplacian(5, {0.1, 0.4, 0.3, 0.2});
    const Eigen::MatrixXd mu = random_states(5, 6, 2);
    double edge = 0.0;
    for (int t = 0; t < 4; ++t) edge += gw.edge_weights[t] * (mu.row(t) - mu.row(t + 1)).squaredNorm();
    CHECK(std::abs((mu.transpose() * gw.laplacian * mu).trace() - edge) <= 1e-10);
    CHECK(std::abs(chain_dirichlet_energy(mu, gw) - edge) <= 1e-10);
    CHECK_THROWS_AS(chain_dirichlet_energy(mu, g), DimensionError);
}

TEST_CASE("no forcing leaves the chain in place") {
    const PathGraph g = path_laplacian(4, {1, 1, 1});
    const Eigen::MatrixXd X = random_states(4, 3, 3);
    const DescentResult r = projected_descent(X, X, g, identity_projector(), chain_only(0.0, 0.0, 10), 1);
    CHECK((r.states - X).cwiseAbs().maxCoeff() == 0.0);
    CHECK(r.trajectory.size() == 11u);
}

TEST_CASE("noiseless descent decreases the energy every step") {
    const PathGraph g = path_laplacian(6, std::vector<double>(5, 1.0));
    const Eigen::MatrixXd X = random_states(6, 4, 4);
    const DescentResult r = projected_descent(X, X, g, identity_projector(), chain_only(0.1, 0.0, 40), 9);
    for (size_t i = 1; i < r.trajectory.size(); ++i) CHECK(r.trajectory[i].chain_energy < r.trajectory[i - 1].chain_energy);
}

TEST_CASE("relaxed projection onto a box keeps states inside") {
    const PathGraph g = path_laplacian(4, {1, 1, 1});
    const Eigen::MatrixXd X = random_states(4, 3, 5);
    const Projector clip = [](const Eigen::MatrixXd& x) { return x.cwiseMax(-0.5).cwiseMin(0.5); };
    DescentConfig cfg = chain_only(0.1, 0.0, 5);
    cfg.fit_weight = 1.0;
    const DescentResult r = projected_descent(X, X, g, clip, cfg, 2);
    CHECK(r.states.cwiseAbs().maxCoeff() <= 0.5);
}

TEST_CASE("trust region rejects energy increases") {
    const PathGraph g = path_laplacian(3, {1, 1});
    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(3, 2);
    Eigen::MatrixXd target(3, 2);
    target << 1, 0, -1, 0, 1, 0;
    DescentConfig cfg;
    cfg.lambda_chain = 0.0;
    cfg.steps = 3;
    const DescentResult r = projected_descent(X, target, g, identity_projector(), cfg, 0);
    CHECK_FALSE(r.trajectory[1].accepted);
    CHECK(r.states.isZero());
    cfg.trust_region = false;
    const DescentResult free = projected_descent(X, target, g, identity_projector(), cfg, 0);
    CHECK(free.trajectory.back().chain_energy > 0.0);
}

TEST_CASE("larger spectral gap contracts faster") {
    const int T = 5;
    const double unit = path_laplacian(T, std::vector<double>(T - 1, 1.0)).lambda2;
    std::vector<double> rate;
    for (double l2 : {0.5, 1.0, 2.0}) {
        const PathGraph g = path_laplacian(T, std::vector<double>(T - 1, l2 / unit));
        double mean_log_ratio = 0.0;
        for (std::uint64_t s = 0; s < 10; ++s) {
            const Eigen::MatrixXd X = random_states(T, 4, 100 + s);
            const DescentResult r = projected_descent(X, X, g, identity_projector(), chain_only(0.05, 1e-4, 20), s);
            mean_log_ratio += std::log(r.trajectory.back().chain_energy / r.trajectory.front().chain_energy);
        }
        rate.push_back(-mean_log_ratio / 10.0);
    }
    CHECK(rate[0] > 0.0);
    CHECK(rate[1] > rate[0]);
    CHECK(rate[2] > rate[1]);
}

TEST_CASE("configuration checks") {
    DescentConfig c;
    c.alpha = 0.0;
    CHECK_THROWS_AS(c.validate(), InputError);
    c = {};
    c.steps = 0;
    CHECK_THROWS_AS(c.validate(), InputError);
    const PathGraph g = path_laplacian(3, {1, 1});
    CHECK_THROWS_AS(projected_descent(Eigen::MatrixXd::Zero(4, 2), Eigen::MatrixXd::Zero(4, 2), g,
                                      identity_projector(), {}, 0),
                    DimensionError);
}
