#include "arbcert/descent.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "arbcert/errors.hpp"

namespace arbcert {

PathGraph path_laplacian(int T, const std::vector<double>& w) {
    if (T < 2) throw DimensionError("path graph needs two nodes");
    if (static_cast<int>(w.size()) != T - 1) throw DimensionError("one weight per edge");
    PathGraph g;
    g.T = T;
    g.edge_weights = w;
    g.laplacian = Eigen::MatrixXd::Zero(T, T);
    for (int t = 0; t + 1 < T; ++t) {
        if (!(w[t] > 0.0)) throw InputError("edge weights must be positive");
        g.laplacian(t, t) += w[t];
        g.laplacian(t + 1, t + 1) += w[t];
        g.laplacian(t, t + 1) -= w[t];
        g.laplacian(t + 1, t) -= w[t];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g.laplacian, Eigen::EigenvaluesOnly);
    g.eigenvalues = es.eigenvalues();
    g.lambda2 = g.eigenvalues[1];
    return g;
}

double chain_dirichlet_energy(const Eigen::MatrixXd& X, const PathGraph& g) {
    if (X.rows() != g.T) throw DimensionError("one state per chain node");
    double edge = 0.0;
    for (int t = 0; t + 1 < g.T; ++t) edge += g.edge_weights[t] * (X.row(t) - X.row(t + 1)).squaredNorm();
    const double trace = (X.transpose() * g.laplacian * X).trace();
    if (std::abs(edge - trace) > 1e-10 * std::max(1.0, std::abs(edge))) {
        throw std::logic_error("edge-sum and trace forms of the chain energy disagree");
    }
    return edge;
}

void DescentConfig::validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw InputError("alpha must lie in (0,1]");
    if (steps < 1) throw InputError("steps must be positive");
    if (!(eta0 > 0.0) || noise_sigma < 0.0 || lambda_chain < 0.0 || fit_weight < 0.0 ||
        trust_tol < 0.0) {
        throw InputError("invalid descent configuration");
    }
}

Projector identity_projector() {
    return [](const Eigen::MatrixXd& x) { return x; };
}

DescentResult projected_descent(const Eigen::MatrixXd& initial, const Eigen::MatrixXd& targets,
                                const PathGraph& graph, const Projector& projector,
                                const DescentConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    if (initial.rows() != graph.T || targets.rows() != initial.rows() ||
        targets.cols() != initial.cols()) {
        throw DimensionError("states, targets and graph disagree");
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    DescentResult out;
    out.states = initial;
    auto fit = [&](const Eigen::MatrixXd& x) { return (x - targets).squaredNorm(); };
    double energy = chain_dirichlet_energy(out.states, graph);
    out.trajectory.push_back({0, energy, fit(out.states), true});

    Eigen::MatrixXd noise(initial.rows(), initial.cols());
    for (int t = 0; t < cfg.steps; ++t) {
        const double eta = cfg.eta0 / (t + 1.0);
        for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = gauss(rng);
        const Eigen::MatrixXd grad = cfg.fit_weight * 2.0 * (out.states - targets) +
                                     cfg.lambda_chain * 2.0 * graph.laplacian * out.states +
                                     cfg.noise_sigma * noise;
        Eigen::MatrixXd next = out.states - eta * grad;
        next = (1.0 - cfg.alpha) * next + cfg.alpha * projector(next);
        const double e_next = chain_dirichlet_energy(next, graph);
        const bool accept = !cfg.trust_region || e_next <= energy * (1.0 + cfg.trust_tol) + 1e-300;
        if (accept) {
            out.states = std::move(next);
            energy = e_next;
        }
        out.trajectory.push_back({t + 1, energy, fit(out.states), accept});
    }
    return out;
}

}  // namespace arbcert
