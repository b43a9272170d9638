#pragma once

#include <string>

#include <json.hpp>

#include "arbcert/config.hpp"
#include "arbcert/grid.hpp"

namespace arbcert {

// Stages run in this order; asking for one runs everything before it.
enum class Stage { generate, fit, bridge, project, gate, descend, risk, all };

Stage parse_stage(const std::string& s);
std::string to_string(Stage s);

struct PipelineResult {
    nlohmann::json summary;
    bool all_pass = false;
    Surface clean, noisy;
    Surface fitted;     // CPWL fit evaluated on the grid
    Surface projected;  // fit after the arbitrage projection
    Surface output;     // after chain descent
};

// With an empty out_dir nothing is written. Otherwise summary.json, the surfaces and the
// per-stage CSV tables land there. Timings are never recorded, so reruns are byte-identical.
PipelineResult run_pipeline(const RunConfig& cfg, Stage upto = Stage::all,
                            const std::string& out_dir = "");

}  // namespace arbcert
