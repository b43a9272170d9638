#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "arbcert/config.hpp"
#include "arbcert/errors.hpp"
#include "arbcert/pipeline.hpp"

using namespace arbcert;
using nlohmann::json;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

const json* find_gate(const json& summary, const std::string& name) {
    for (const auto& g : summary.at("gates"))
        if (g.at("name") == name) return &g;
    return nullptr;
}

}  // namespace

TEST_CASE("config round trip and key checking") {
    const RunConfig d;
    const RunConfig back = RunConfig::from_json(d.to_json());
    CHECK(back.to_json() == d.to_json());

    const RunConfig partial = RunConfig::from_json(json{{"bridge", {{"n", 11}}}});
    CHECK(partial.bridge.n == 11);
    CHECK(partial.bridge.ratio == d.bridge.ratio);

    CHECK_THROWS_AS(RunConfig::from_json(json{{"bridge", {{"size", 11}}}}), InputError);
    CHECK_THROWS_AS(RunConfig::from_json(json{{"colour", 1}}), InputError);
    CHECK_THROWS_AS(RunConfig::from_json(json{{"weight", {{"kind", "flat"}}}}), InputError);
    CHECK_THROWS_AS(RunConfig::load("/nonexistent/config.json"), InputError);
}

TEST_CASE("stage names") {
    for (int i = 0; i <= static_cast<int>(Stage::all); ++i) {
        const Stage s = static_cast<Stage>(i);
        CHECK(parse_stage(to_string(s)) == s);
    }
    CHECK(parse_stage("project") == Stage::project);
    CHECK_THROWS_AS(parse_stage("smooth"), InputError);
}

TEST_CASE("partial runs are byte-identical across invocations") {
    const auto root = std::filesystem::temp_directory_path() / "arbcert_pipeline_test";
    std::filesystem::remove_all(root);
    RunConfig cfg;
    run_pipeline(cfg, Stage::project, (root / "a").string());
    cfg.threads = 3;
    run_pipeline(cfg, Stage::project, (root / "b").string());
    for (const char* f : {"summary.json", "surfaces.json", "frontier.csv", "residual_trace.csv"}) {
        CAPTURE(f);
        const std::string a = slurp(root / "a" / f);
        CHECK_FALSE(a.empty());
        CHECK(a == slurp(root / "b" / f));
    }
    std::filesystem::remove_all(root);
}

TEST_CASE("a zero KKT threshold fails the bridge gate") {
    RunConfig cfg;
    cfg.thresholds.kkt = 0.0;
    const PipelineResult r = run_pipeline(cfg, Stage::bridge);
    const json* g = find_gate(r.summary, "C2.KKT");
    REQUIRE(g != nullptr);
    CHECK(g->at("decision") == "FAIL");
    CHECK_FALSE(r.all_pass);
    CHECK(find_gate(r.summary, "C3.lip_emp") == nullptr);
}
