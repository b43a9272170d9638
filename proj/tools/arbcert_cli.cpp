// Command-line front end: one subcommand per pipeline stage, plus `all`.
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "arbcert/config.hpp"
#include "arbcert/errors.hpp"
#include "arbcert/pipeline.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Certified arbitrage-free surface pipeline"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out", stage_name;
    long long seed = -1;
    int threads = 0;
    app.add_option("--config", config_path, "JSON run configuration");
    app.add_option("--out", out_dir, "Output directory");
    app.add_option("--seed", seed, "Override the market seed");
    app.add_option("--threads", threads, "Worker threads for the bridge stage");
    app.add_option("--stage", stage_name, "Run up to this stage (same names as the subcommands)");

    const char* stages[][2] = {
        {"generate", "Synthesize clean and noisy surfaces"},
        {"fit", "Sparse-grid fit and ReLU compilation"},
        {"bridge", "Entropic martingale bridge certificates"},
        {"project", "No-arbitrage projection and its certificates"},
        {"gate", "Chain-energy slope/area gate"},
        {"descend", "Projected descent on the maturity chain"},
        {"risk", "Risk budget"},
        {"all", "Every stage"},
    };
    for (const auto& s : stages) app.add_subcommand(s[0], s[1])->fallthrough();

    CLI11_PARSE(app, argc, argv);

    try {
        arbcert::RunConfig cfg = config_path.empty() ? arbcert::RunConfig{}
                                                     : arbcert::RunConfig::load(config_path);
        if (seed >= 0) cfg.market.seed = static_cast<std::uint64_t>(seed);
        if (threads > 0) cfg.threads = threads;
        cfg.validate();
        arbcert::Stage stage = arbcert::parse_stage(app.get_subcommands().front()->get_name());
        if (!stage_name.empty()) stage = arbcert::parse_stage(stage_name);

        const auto res = arbcert::run_pipeline(cfg, stage, out_dir);
        for (const auto& g : res.summary["gates"]) {
            std::cout << g["decision"].get<std::string>() << "  " << g["name"].get<std::string>() << "  "
                      << g["value"].dump() << ' ' << g["comparison"].get<std::string>() << ' '
                      << g["threshold"].dump() << '\n';
        }
        std::cout << (res.all_pass ? "all gates passed" : "gate failure") << " -> " << out_dir
                  << "/summary.json\n";
        return res.all_pass ? 0 : 1;
    } catch (const arbcert::InputError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
}
