#include <gtest/gtest.h>

#include <sstream>

#include "crowdcausal/error.hpp"
#include "crowdcausal/harness.hpp"
#include "support.hpp"

using namespace crowdcausal;
using testing_support::read_file;
using testing_support::scratch_dir;
using testing_support::write_file;

namespace {

const std::string kData = CROWDCAUSAL_TEST_DATA;

nlohmann::json base_doc() {
    return nlohmann::json::parse(R"({
        "network": "asia",
        "crowd": [{"archetype": "Imperfect", "count": 4}],
        "protocol": "edge",
        "aggregation": "expert-level",
        "design": {"criterion": "eig", "stages": [6, 6], "pool_mode": "remove"},
        "replicates": 4,
        "seed": 21
    })");
}

std::string error_message(const nlohmann::json& doc, const std::filesystem::path& base = {}) {
    try {
        experiment_config_from_json(doc, base);
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ConfigError);
        return e.what();
    }
    ADD_FAILURE() << "config was accepted";
    return {};
}

}  // namespace

TEST(Overrides, ReplaceLeavesByDottedPath) {
    nlohmann::json doc = base_doc();
    apply_override(doc, "design.stages=[3,3,3]");
    apply_override(doc, "crowd.0.count=2");
    apply_override(doc, "protocol=ordering");
    apply_override(doc, "output_dir=runs/a");
    apply_override(doc, "extra.nested.flag=true");
    EXPECT_EQ(doc["design"]["stages"], nlohmann::json::parse("[3,3,3]"));
    EXPECT_EQ(doc["crowd"][0]["count"], 2);
    EXPECT_EQ(doc["protocol"], "ordering");
    EXPECT_EQ(doc["output_dir"], "runs/a");
    EXPECT_EQ(doc["extra"]["nested"]["flag"], true);
    EXPECT_ERROR_CODE(apply_override(doc, "no-equals"), ConfigError);
    EXPECT_ERROR_CODE(apply_override(doc, "crowd.5.seed=1"), ConfigError);
    EXPECT_ERROR_CODE(apply_override(doc, "seed.x=1"), ConfigError);
}

TEST(Config, DefaultsAndExpansion) {
    const ExperimentConfig c = experiment_config_from_json(base_doc());
    ASSERT_EQ(c.crowd.size(), 4u);
    EXPECT_EQ(c.crowd[0].expert_id, "expert1-1");
    EXPECT_EQ(c.network.dag.edge_count(), 8u);
    EXPECT_EQ(c.criterion, Criterion::EIG);
    EXPECT_EQ(c.pool_mode, PoolMode::Remove);
    EXPECT_EQ(c.output_dir, "out");
}

TEST(Config, ErrorsNameTheField) {
    nlohmann::json doc = base_doc();
    doc["replicates"] = 0;
    EXPECT_NE(error_message(doc).find("replicates: must be >= 1"), std::string::npos);

    doc = base_doc();
    doc["design"]["stages"] = {4, 0};
    EXPECT_NE(error_message(doc).find("design.stages[1]"), std::string::npos);

    doc = base_doc();
    doc["crowd"][0]["archetype"] = "Oracle";
    EXPECT_NE(error_message(doc).find("crowd[0]"), std::string::npos);

    doc = base_doc();
    doc["protocol"] = "telepathy";
    EXPECT_NE(error_message(doc).find("protocol"), std::string::npos);

    doc = base_doc();
    doc["network"] = "does/not/exist.json";
    EXPECT_NE(error_message(doc).find("network"), std::string::npos);

    doc = base_doc();
    doc["crowd"] = nlohmann::json::parse(R"([{"expert_id": "a", "archetype": "Imperfect"},
                                             {"expert_id": "a", "archetype": "Uncertain"}])");
    EXPECT_NE(error_message(doc).find("duplicate"), std::string::npos);

    doc = base_doc();
    doc["crowd"] = nlohmann::json::array();
    EXPECT_NE(error_message(doc).find("crowd"), std::string::npos);
}

TEST(Config, RelativePathsResolveAgainstConfigDirectory) {
    const auto dir = scratch_dir("harness-paths");
    std::filesystem::create_directories(dir / "nets");
    write_file(dir / "nets" / "tiny.json", R"({"nodes": ["a", "b", "c"], "edges": [["a", "b"], ["b", "c"]]})");
    nlohmann::json doc = base_doc();
    doc["network"] = "nets/tiny.json";
    doc["design"] = {{"criterion", "exhaustive"}};
    write_file(dir / "experiment.json", doc.dump());
    const ExperimentConfig c = load_experiment_config((dir / "experiment.json").string(), {"replicates=2"});
    EXPECT_EQ(c.network.dag.size(), 3u);
    EXPECT_EQ(c.replicates, 2);
    EXPECT_ERROR_CODE(load_experiment_config((dir / "absent.json").string()), IoError);
}

TEST(Experiment, OmniscientCrowdHasZeroShd) {
    nlohmann::json doc = base_doc();
    doc["crowd"] = nlohmann::json::parse(R"([{"archetype": "Omniscient", "count": 3}])");
    doc["design"] = {{"criterion", "exhaustive"}};
    const ExperimentReport report = run_experiment(experiment_config_from_json(doc));
    ASSERT_EQ(report.replicates.size(), 4u);
    for (const auto& r : report.replicates) {
        EXPECT_EQ(r.metrics.shd, 0);
        EXPECT_EQ(r.mean_individual_shd, 0.0);
        EXPECT_EQ(r.response_count, 84u);
    }
    const auto summary = report.summary();
    EXPECT_EQ(summary["metrics"]["shd"]["mean"], 0.0);
    EXPECT_EQ(summary["replicates"], 4);
    EXPECT_EQ(report.crowd_beats_fraction(), 0.0);
}

TEST(Experiment, OutputsAreByteIdenticalAcrossRunsAndParallelism) {
    const ExperimentConfig serial = experiment_config_from_json(base_doc());
    ExperimentConfig parallel = serial;
    parallel.parallelism = 3;
    const auto a = scratch_dir("harness-a"), b = scratch_dir("harness-b"), c = scratch_dir("harness-c");
    write_experiment_outputs(run_experiment(serial), a);
    write_experiment_outputs(run_experiment(serial), b);
    write_experiment_outputs(run_experiment(parallel), c);
    for (const char* name : {"replicates.csv", "summary.json", "design-trace.jsonl"}) {
        const std::string first = read_file(a / name);
        EXPECT_FALSE(first.empty()) << name;
        EXPECT_EQ(first, read_file(b / name)) << name;
        EXPECT_EQ(first, read_file(c / name)) << name;
    }
    EXPECT_EQ(read_file(a / "replicates.csv").substr(0, 22), "replicate,seed,shd,edg");
}

TEST(Experiment, ReplicateSeedsAreOffsetsOfTheRunSeed) {
    const ExperimentConfig c = experiment_config_from_json(base_doc());
    const ExperimentReport report = run_experiment(c);
    for (int r = 0; r < 4; ++r) EXPECT_EQ(report.replicates[r].seed, 21u + static_cast<std::uint64_t>(r));
    // A single replicate reproduces its slot of the full run.
    EXPECT_EQ(run_replicate(c, 2).metrics.shd, report.replicates[2].metrics.shd);
    std::ostringstream trace;
    write_design_trace(trace, report);
    const auto first = nlohmann::json::parse(trace.str().substr(0, trace.str().find('\n')));
    EXPECT_EQ(first["replicate"], 0);
    EXPECT_EQ(first["t"], 1);
    EXPECT_EQ(first["pairs"].size(), 6u);
}

TEST(Experiment, ErrorsCarryTheReplicateIndex) {
    nlohmann::json doc = base_doc();
    doc["design"]["stages"] = {20, 20};  // the second stage outruns the shrinking pool
    const ExperimentConfig c = experiment_config_from_json(doc);
    try {
        run_experiment(c);
        FAIL() << "expected BudgetExceedsPool";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::BudgetExceedsPool);
        ASSERT_TRUE(e.replicate().has_value());
        EXPECT_EQ(*e.replicate(), 0);
        const auto line = nlohmann::json::parse(e.to_json_line());
        EXPECT_EQ(line["replicate"], 0);
        EXPECT_EQ(line["error_code"], "BudgetExceedsPool");
    }
}

TEST(Experiment, MockLlmExpertJoinsTheCrowd) {
    nlohmann::json doc = base_doc();
    doc["crowd"] = nlohmann::json::array();
    doc["crowd"].push_back({{"archetype", "Imperfect"}, {"count", 2}});
    doc["crowd"].push_back({{"llm", {{"expert_id", "gpt"}, {"mode", "mock"}, {"transcript", "asia_llm_edge.json"}}}});
    doc["design"] = {{"criterion", "exhaustive"}};
    doc["replicates"] = 2;
    const ExperimentConfig c = experiment_config_from_json(doc, kData);
    ASSERT_EQ(c.llm_experts.size(), 1u);
    const ExperimentReport report = run_experiment(c);
    for (const auto& r : report.replicates) {
        EXPECT_EQ(r.response_count, 84u);
        EXPECT_TRUE(r.warnings.empty());
    }

    doc["design"] = {{"criterion", "eig"}, {"stages", {4}}};
    EXPECT_NE(error_message(doc, kData).find("exhaustive"), std::string::npos);
}
