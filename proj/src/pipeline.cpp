#include "arbcert/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>
#include <thread>

#include "arbcert/cemot.hpp"
#include "arbcert/chain_stats.hpp"
#include "arbcert/descent.hpp"
#include "arbcert/errors.hpp"
#include "arbcert/projection.hpp"
#include "arbcert/relu.hpp"
#include "arbcert/risk.hpp"
#include "arbcert/smolyak.hpp"
#include "arbcert/synth.hpp"

namespace arbcert {

namespace {

constexpr const char* kStageNames[] = {"generate", "fit", "bridge", "project",
                                       "gate",     "descend", "risk", "all"};

using nlohmann::json;

json field_json(const Field& f) {
    json rows = json::array();
    for (Eigen::Index t = 0; t < f.rows(); ++t) {
        json row = json::array();
        for (Eigen::Index k = 0; k < f.cols(); ++k) row.push_back(f(t, k));
        rows.push_back(std::move(row));
    }
    return rows;
}

json surface_json(const Surface& s) {
    return {{"strikes", s.grid.strikes()},
            {"maturities", s.grid.maturities()},
            {"is_price", s.is_price},
            {"values", field_json(s.values)}};
}

// Records one threshold decision; `at_most` selects value <= threshold, otherwise >=.
struct GateBook {
    json list = json::array();
    bool all = true;

    bool add(const std::string& name, double value, double threshold, bool at_most) {
        const bool ok = std::isfinite(value) && (at_most ? value <= threshold : value >= threshold);
        push(name, value, threshold, at_most ? "<=" : ">=", ok);
        return ok;
    }
    void push(const std::string& name, double value, double threshold, const std::string& cmp,
              bool ok) {
        list.push_back({{"name", name},
                        {"value", std::isfinite(value) ? json(value) : json(nullptr)},
                        {"threshold", threshold},
                        {"comparison", cmp},
                        {"decision", ok ? "PASS" : "FAIL"}});
        all = all && ok;
    }
};

std::vector<int> geometric_sizes(int lo, int hi, int count) {
    std::vector<int> out;
    for (int i = 0; i < count; ++i) {
        const double f = static_cast<double>(i) / (count - 1);
        int s = static_cast<int>(std::lround(lo * std::pow(static_cast<double>(hi) / lo, f)));
        if (!out.empty()) s = std::max(s, out.back() + 1);
        out.push_back(s);
    }
    return out;
}

// Inverse-CDF draws from atoms on x with uniform jitter of one cell.
Samples draw_from_atoms(const Eigen::VectorXd& x, const Eigen::VectorXd& mass, int n,
                        std::mt19937_64& rng) {
    std::vector<double> cdf(mass.size());
    double acc = 0.0;
    for (Eigen::Index i = 0; i < mass.size(); ++i) cdf[i] = (acc += mass[i]);
    const double h = x.size() > 1 ? x[1] - x[0] : 1.0;
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    Samples out(n, 1);
    for (int s = 0; s < n; ++s) {
        const double u = u01(rng) * acc;
        auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        const auto idx = std::min<std::ptrdiff_t>(it - cdf.begin(), mass.size() - 1);
        out(s, 0) = x[idx] + (u01(rng) - 0.5) * h;
    }
    return out;
}

std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream f(p);
    if (!f) throw InputError("cannot write " + p.string());
    f << std::setprecision(12);
    return f;
}

}  // namespace

Stage parse_stage(const std::string& s) {
    for (int i = 0; i <= static_cast<int>(Stage::all); ++i) {
        if (s == kStageNames[i]) return static_cast<Stage>(i);
    }
    throw InputError("unknown stage: " + s);
}

std::string to_string(Stage s) { return kStageNames[static_cast<int>(s)]; }

PipelineResult run_pipeline(const RunConfig& cfg, Stage upto, const std::string& out_dir) {
    cfg.validate();
    const int last = static_cast<int>(upto == Stage::all ? Stage::risk : upto);
    auto runs = [&](Stage s) { return static_cast<int>(s) <= last; };
    const bool write = !out_dir.empty();
    const std::filesystem::path out(out_dir);
    if (write) std::filesystem::create_directories(out);

    PipelineResult res;
    json& sum = res.summary;
    sum["config"] = cfg.to_json();
    sum["config"].erase("threads");  // results do not depend on it
    sum["stage"] = to_string(upto);
    GateBook gates;

    // generate
    MarketParams mp;
    mp.spot = cfg.market.spot;
    mp.rate = cfg.market.rate;
    mp.dividend = cfg.market.dividend;
    mp.vol = {cfg.market.vol_a, cfg.market.vol_b};
    mp.noise_sigma = cfg.market.noise_sigma;
    mp.seed = cfg.market.seed;
    const auto& gs = cfg.grid;
    const Grid2D grid = Grid2D::uniform(gs.k_lo, gs.k_hi, gs.n_strikes, gs.tau_lo, gs.tau_hi,
                                        gs.n_maturities);
    auto surfaces = generate_surface(mp, grid);
    res.clean = surfaces.clean;
    res.noisy = surfaces.noisy;
    const WeightField w = cfg.weight.kind == "uniform"
                              ? WeightField::uniform(grid)
                              : WeightField::vega_bump(grid, mp.spot, cfg.weight.rel_width,
                                                       cfg.weight.floor);
    const double Z = weighted_norm(res.clean.values, w, grid);
    if (!(Z > 0.0)) throw InputError("reference surface has zero norm");

    const MeshReport mesh = check_mesh_admissibility(res.clean, cfg.mesh.c1, cfg.mesh.c2);
    sum["mesh"] = {{"advisory", true},        {"pass", mesh.pass},
                   {"h_K", mesh.h_K},         {"h_tau", mesh.h_tau},
                   {"envelope_K", mesh.envelope_K}, {"envelope_tau", mesh.envelope_tau},
                   {"bound_K", mesh.bound_K}, {"bound_tau", mesh.bound_tau},
                   {"reason", mesh.reason}};
    if (write) {
        auto f = open_out(out / "surfaces.json");
        f << json{{"clean", surface_json(res.clean)}, {"noisy", surface_json(res.noisy)},
                  {"weight", field_json(w.values())}}
                 .dump(1)
          << "\n";
    }

    // C1: sparse-grid fit of the noisy quotes and exact ReLU compilation.
    const double k_span = gs.k_hi - gs.k_lo, t_span = gs.tau_hi - gs.tau_lo;
    const auto& Ks = grid.strikes();
    const auto& Ts = grid.maturities();
    std::vector<double> u_nodes(Ks.size()), v_nodes(Ts.size());
    for (size_t k = 0; k < Ks.size(); ++k) u_nodes[k] = (Ks[k] - gs.k_lo) / k_span;
    for (size_t t = 0; t < Ts.size(); ++t) v_nodes[t] = (Ts[t] - gs.tau_lo) / t_span;
    const CpwlFunction data_interp = CpwlFunction::tensor(
        u_nodes, v_nodes, [&](int k, int t) { return res.noisy.values(t, k); });
    const Target2D target = [&](double u, double v) { return data_interp.evaluate(u, v); };
    const Rect unit{0.0, 1.0, 0.0, 1.0};

    double c1_error = 0.0, erm_term = 0.0;
    if (runs(Stage::fit)) {
        AnisotropyConfig ac;
        ac.beta_K = cfg.fit.beta_K;
        ac.beta_tau = cfg.fit.beta_tau;
        ac.level_L = cfg.fit.level;
        const SmolyakFit fit = smolyak_fit(target, ac, unit);
        Field G(grid.n_maturities(), grid.n_strikes());
        for (int t = 0; t < G.rows(); ++t)
            for (int k = 0; k < G.cols(); ++k) G(t, k) = fit.cpwl.evaluate(u_nodes[k], v_nodes[t]);
        res.fitted = Surface(grid, G);

        const CompiledNet compiled = compile_to_relu(fit.cpwl, cfg.fit.d_max);
        std::mt19937_64 rng(cfg.market.seed + 101);
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        double max_abs = 0.0;
        for (int i = 0; i < cfg.fit.relu_points; ++i) {
            const double u = u01(rng), v = u01(rng);
            max_abs = std::max(max_abs, std::abs(compiled.net.evaluate(u, v) - fit.cpwl.evaluate(u, v)));
        }
        const int s_L = sparse_node_count(ac);
        const double beta_bar = 2.0 / (1.0 / ac.beta_K + 1.0 / ac.beta_tau);
        c1_error = std::pow(s_L, -2.0 * beta_bar) * std::pow(std::log(static_cast<double>(s_L)), cfg.fit.xi);
        erm_term = weighted_norm(G - res.noisy.values, w, grid) / Z;
        const long long params = compiled.net.param_count();
        const double param_bound = compiled.c1 * compiled.vertices + compiled.c2 * compiled.triangles;

        const auto frontier = error_frontier(target, cfg.fit.frontier_levels, ac, unit, cfg.fit.eval_n);
        json fr = json::array();
        for (const auto& row : frontier) {
            fr.push_back({{"level", row.level},
                          {"node_count", row.node_count},
                          {"sparse_nodes", row.sparse_nodes},
                          {"param_count", row.param_count},
                          {"error", row.error},
                          {"error_envelope", row.error_envelope}});
        }
        sum["C1"] = {{"level", cfg.fit.level},
                     {"sparse_nodes", s_L},
                     {"cpwl_vertices", fit.cpwl.vertex_count()},
                     {"cpwl_triangles", fit.cpwl.triangle_count()},
                     {"relu",
                      {{"depth", compiled.net.depth()},
                       {"param_count", params},
                       {"param_bound", param_bound},
                       {"max_valence", compiled.max_valence},
                       {"max_abs_error", max_abs},
                       {"depth_within_bound", compiled.depth_within_bound}}},
                     {"c1_error", c1_error},
                     {"erm_term", erm_term},
                     {"frontier", fr}};
        gates.add("C1.relu_max_abs", max_abs, cfg.thresholds.relu_max_abs, true);
        gates.add("C1.relu_depth", compiled.net.depth(), cfg.thresholds.relu_depth, true);
        if (write) {
            auto f = open_out(out / "frontier.csv");
            f << "level,node_count,sparse_nodes,param_count,error,error_envelope\n";
            for (const auto& r : frontier)
                f << r.level << ',' << r.node_count << ',' << r.sparse_nodes << ',' << r.param_count
                  << ',' << r.error << ',' << r.error_envelope << '\n';
            auto n = open_out(out / "relu_net.json");
            n << compiled.net.to_json().dump() << "\n";
        }
    }

    // C2: entropic martingale bridge on each maturity triad of the clean densities.
    const auto& bs = cfg.bridge;
    const Grid2D fine = Grid2D::uniform(gs.k_lo, gs.k_hi, bs.n, gs.tau_lo, gs.tau_hi, gs.n_maturities);
    const Surface fine_clean = generate_surface(mp, fine).clean;
    Eigen::VectorXd x(bs.n);
    for (int i = 0; i < bs.n; ++i) x[i] = (fine.strikes()[i] - gs.k_lo) / k_span;
    std::vector<Eigen::VectorXd> densities;
    for (int t = 0; t < gs.n_maturities; ++t) {
        const Density d = extract_density(fine_clean, t);
        densities.push_back(Eigen::Map<const Eigen::VectorXd>(d.mass.data(), d.mass.size()));
    }

    RiskInputs risk_in;
    if (runs(Stage::bridge)) {
        const int n_triads = gs.n_maturities - 2;
        std::vector<BridgeResult> results(n_triads);
        std::vector<double> deltas(n_triads, 0.0);
        std::vector<std::string> errors(n_triads);
        SinkhornOptions so;
        so.tol = bs.tol;
        so.t_max = bs.t_max;
        so.gamma_min = bs.gamma_min;
        so.gamma_max = bs.gamma_max;
        so.ridge = bs.ridge;
        auto solve = [&](int i) {
            try {
                TriMarginalProblem p;
                p.x = x;
                p.m1 = densities[i];
                p.m2 = densities[i + 1];
                p.m3 = densities[i + 2];
                p.epsilon_schedule.clear();
                for (int s = 0; s < bs.stages; ++s) p.epsilon_schedule.push_back(bs.epsilon0 * std::pow(bs.ratio, s));
                p.feature_kind = parse_feature_kind(bs.feature_kind);
                p.rank = bs.rank;
                p.rff_seed = cfg.market.seed + 11;
                const BridgeKernels kern = build_bridge(p);
                deltas[i] = kern.max_delta();
                results[i] = tri_sinkhorn(p, kern, so);
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        };
        const int nth = std::min(cfg.threads, n_triads);
        if (nth <= 1) {
            for (int i = 0; i < n_triads; ++i) solve(i);
        } else {
            std::vector<std::thread> pool;
            for (int th = 0; th < nth; ++th)
                pool.emplace_back([&, th] {
                    for (int i = th; i < n_triads; i += nth) solve(i);
                });
            for (auto& t : pool) t.join();
        }

        json triads = json::array();
        double worst_kkt = 0.0, worst_r = 0.0, min_mu = std::numeric_limits<double>::infinity();
        double max_mu = 0.0, max_delta = 0.0, worst_term = -1.0;
        bool failed = false;
        for (int i = 0; i < n_triads; ++i) {
            if (!errors[i].empty()) {
                failed = true;
                triads.push_back({{"triad", i}, {"error", errors[i]}});
                continue;
            }
            const auto& c = results[i].certificates;
            triads.push_back({{"triad", i},
                              {"KKT", c.kkt},
                              {"rgeo", c.r_geo},
                              {"rgeo_q10", c.r_geo_q10},
                              {"rgeo_q90", c.r_geo_q90},
                              {"muhat", c.mu_hat},
                              {"iterations", c.iterations},
                              {"eta", results[i].state.eta},
                              {"epsilon_final", c.epsilon_final},
                              {"converged", c.converged},
                              {"delta", deltas[i]},
                              {"fallbacks_taken", c.fallbacks_taken}});
            failed = failed || !c.converged;
            worst_kkt = std::max(worst_kkt, c.kkt);
            worst_r = std::max(worst_r, c.r_geo);
            min_mu = std::min(min_mu, c.mu_hat);
            max_mu = std::max(max_mu, c.mu_hat);
            max_delta = std::max(max_delta, deltas[i]);
            // Risk uses the triad with the largest bridge contribution.
            const double term = (c.kkt + std::pow(c.r_geo, c.iterations)) / std::max(c.mu_hat, 1e-300);
            if (term > worst_term) {
                worst_term = term;
                risk_in.kkt = c.kkt;
                risk_in.r_geo = c.r_geo;
                risk_in.iterations = c.iterations;
                risk_in.mu_hat = c.mu_hat;
                risk_in.epsilon = c.epsilon_final;
            }
        }
        risk_in.delta_mr = max_delta;
        const double nan = std::numeric_limits<double>::quiet_NaN();
        if (failed) worst_kkt = worst_r = min_mu = max_mu = nan;
        sum["C2"] = {{"KKT", worst_kkt},  {"rgeo", worst_r},     {"muhat", min_mu},
                     {"muhat_max", max_mu}, {"delta", max_delta}, {"feature_kind", bs.feature_kind},
                     {"rank", bs.rank},   {"converged", !failed}, {"triads", triads}};
        gates.add("C2.KKT", worst_kkt, cfg.thresholds.kkt, true);
        gates.add("C2.rgeo", worst_r, cfg.thresholds.r_geo, true);
        gates.add("C2.muhat_min", min_mu, cfg.thresholds.mu_hat_lo, false);
        gates.add("C2.muhat_max", max_mu, cfg.thresholds.mu_hat_hi, true);
        if (write) {
            auto f = open_out(out / "residual_trace.csv");
            f << "triad,iteration,r_u,r_v,r_w,r_eta,kkt\n";
            for (int i = 0; i < n_triads; ++i) {
                const auto& tr = results[i].state.residual_trace;
                for (size_t it = 0; it < tr.size(); ++it) {
                    const auto& r = tr[it];
                    f << i << ',' << it << ',' << r[0] << ',' << r[1] << ',' << r[2] << ',' << r[3]
                      << ',' << std::max({r[0], r[1], r[2], r[3]}) << '\n';
                }
            }
        }
    }

    // C3: projection onto the static no-arbitrage cone.
    ProjectionConfig pc;
    pc.tv2_lambda = cfg.projection.tv2_lambda;
    pc.dykstra_rounds = cfg.projection.dykstra_rounds;
    pc.path_steps = cfg.projection.path_steps;
    pc.dykstra_tol = cfg.projection.dykstra_tol;
    FdConfig fd;
    fd.window_K = cfg.fd.window_K;
    fd.window_tau = cfg.fd.window_tau;
    fd.clip_lo = cfg.fd.clip_lo;
    fd.clip_hi = cfg.fd.clip_hi;
    fd.denom_floor = cfg.fd.denom_floor;
    if (runs(Stage::project)) {
        ProjectionInfo info;
        res.projected = project_to_cone(res.fitted, w, pc, &info);
        const auto cert = projection_certificates(res.fitted, w, pc, fd, cfg.projection.lipschitz_trials,
                                                  cfg.market.seed + 202);
        sum["C3"] = {{"lip_emp", cert.lip_emp},
                     {"dup_ok", cert.dup_ok},
                     {"dup_tv_path", cert.dup_tv_path},
                     {"rounds", info.rounds},
                     {"tv2_applied", info.tv2_applied},
                     {"max_violation", info.max_violation},
                     {"fit_violation", cone_violation(res.fitted.values, grid)}};
        gates.add("C3.lip_emp", cert.lip_emp, cfg.thresholds.lipschitz, true);
        gates.push("C3.dup_ok", cert.dup_ok ? 1.0 : 0.0, 1.0, "==", cert.dup_ok);
    }

    // R2: chain-energy series over growing sample sizes and the slope/area gate.
    GateDecision r2;
    double chain_value = 0.0;
    if (runs(Stage::gate)) {
        const auto& cs = cfg.chain;
        const auto sizes = geometric_sizes(cs.size_min, cs.size_max, cs.n_sizes);
        ChainSeries series;
        const std::vector<double> edge_w(gs.n_maturities - 1, 1.0 / (gs.n_maturities - 1));
        for (size_t s = 0; s < sizes.size(); ++s) {
            std::mt19937_64 rng(cfg.market.seed * 1000003ULL + 303 + s);
            std::vector<Samples> slices;
            for (const auto& d : densities) slices.push_back(draw_from_atoms(x, d, sizes[s], rng));
            const ChainEnergy ce = chain_energy(slices, edge_w, cs.octaves);
            Eigen::VectorXd resid = slices.front().col(0);
            resid.array() -= resid.mean();
            const auto alpha = bartlett_alpha(std::vector<double>(resid.data(), resid.data() + resid.size()));
            series.sizes.push_back(sizes[s]);
            series.values.push_back(ce.total);
            series.neff.push_back(n_eff(sizes[s], alpha, cs.gamma, cs.c_gamma));
        }
        GateThresholds th;
        th.slope_max = cfg.thresholds.slope;
        th.area_min = cfg.thresholds.area_drop;
        th.tail_fraction = cs.tail_fraction;
        th.window = cs.window;
        th.fir_halfwidth = cs.fir_halfwidth;
        th.band_constant = cs.band_constant;
        r2 = gate_v2(series, th, cs.delta);
        chain_value = series.values.back();
        sum["R2"] = {{"slope_tail", r2.slope_tail}, {"area_drop", r2.area_drop},
                     {"band_slope", r2.band_slope}, {"band_area", r2.band_area},
                     {"band_point", r2.band_point}, {"fir_l1", r2.fir_l1},
                     {"tail_begin", r2.tail_begin}, {"tail_end", r2.tail_end},
                     {"envelope", r2.envelope_direction}, {"pass", r2.pass},
                     {"chain_energy", chain_value}};
        gates.add("R2.slope_tail", std::abs(r2.slope_tail), th.slope_max, true);
        gates.add("R2.area_drop", r2.area_drop, th.area_min, false);
        if (write) {
            auto f = open_out(out / "chain_series.csv");
            f << "size,chain_energy,n_eff\n";
            for (size_t s = 0; s < series.sizes.size(); ++s)
                f << series.sizes[s] << ',' << series.values[s] << ',' << series.neff[s] << '\n';
        }
    }

    // C4: projected descent on the maturity chain.
    std::vector<double> edge_ones(gs.n_maturities - 1, 1.0);
    const PathGraph graph = path_laplacian(gs.n_maturities, edge_ones);
    Surface descended;
    if (runs(Stage::descend)) {
        DescentConfig dc;
        dc.alpha = cfg.descent.alpha;
        dc.eta0 = cfg.descent.eta0;
        dc.noise_sigma = cfg.descent.noise_sigma;
        dc.lambda_chain = cfg.descent.lambda_chain;
        dc.fit_weight = cfg.descent.fit_weight;
        dc.steps = cfg.descent.steps;
        dc.trust_region = cfg.descent.trust_region;
        dc.trust_tol = cfg.descent.trust_tol;
        const Projector proj = [&](const Eigen::MatrixXd& X) { return project_field(X, grid, w, pc); };
        const DescentResult dr = projected_descent(res.projected.values, res.projected.values, graph, proj,
                                                   dc, cfg.market.seed + 404);
        descended = Surface(grid, dr.states);
        res.output = Surface(grid, project_field(dr.states, grid, w, pc));
        const double e0 = dr.trajectory.front().chain_energy;
        const double e1 = dr.trajectory.back().chain_energy;
        int accepted = 0;
        for (const auto& st : dr.trajectory) accepted += st.accepted ? 1 : 0;
        sum["C4"] = {{"energy_initial", e0},
                     {"energy_final", e1},
                     {"lambda2", graph.lambda2},
                     {"steps", dc.steps},
                     {"accepted", accepted - 1},
                     {"output_violation", cone_violation(res.output.values, grid)}};
        gates.add("C4.energy_final", e1, e0, true);
        if (write) {
            auto f = open_out(out / "descent.csv");
            f << "step,chain_energy,data_fit,accepted\n";
            for (const auto& st : dr.trajectory)
                f << st.step << ',' << st.chain_energy << ',' << st.data_fit << ',' << (st.accepted ? 1 : 0)
                  << '\n';
        }
    }

    // Risk budget and its check against the realized error.
    if (runs(Stage::risk)) {
        risk_in.c1_error = c1_error;
        risk_in.c1_stat = 0.0;
        risk_in.erm_term = erm_term;
        risk_in.chain_energy = chain_value;
        risk_in.tol_band = r2.band_point;
        risk_in.lambda2 = graph.lambda2;
        risk_in.slope_plus = std::max(r2.slope_tail, 0.0);
        risk_in.area_minus = std::max(-r2.area_drop, 0.0);
        risk_in.eps_prox = eps_prox(descended, res.output, res.clean, w);
        RiskConstants rk{cfg.risk.c_appr, cfg.risk.c_erm, cfg.risk.c_br1, cfg.risk.c_br2,
                         cfg.risk.c3,     cfg.risk.c_ch,  cfg.risk.c};
        const RiskBudget b = assemble_risk(risk_in, rk);
        const double realized = 1.0 + weighted_norm(res.output.values - res.clean.values, w, grid) / Z;
        double log_sum = 0.0;
        for (double v : b.log_terms) log_sum += v;
        sum["Risk"] = {{"eps_prox", b.eps_prox},
                       {"e_c1", b.e_c1},
                       {"e_erm", b.e_erm},
                       {"e_bridge", b.e_bridge},
                       {"e_chain", b.e_chain},
                       {"chain_energy_form", b.chain_energy_form},
                       {"chain_slope_form", b.chain_slope_form},
                       {"total", b.total},
                       {"log_terms", b.log_terms},
                       {"log_total_minus_sum", std::log(b.total) - log_sum},
                       {"realized", realized}};
        gates.add("Risk.realized", realized, b.total, true);
    }
    if (write && runs(Stage::descend)) {
        auto f = open_out(out / "output_surface.json");
        f << surface_json(res.output).dump(1) << "\n";
    }

    sum["gates"] = gates.list;
    sum["all_pass"] = gates.all;
    res.all_pass = gates.all;
    if (write) {
        auto f = open_out(out / "summary.json");
        f << sum.dump(2) << "\n";
    }
    return res;
}

}  // namespace arbcert
