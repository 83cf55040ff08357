#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "crowdcausal/design.hpp"
#include "crowdcausal/expert.hpp"
#include "crowdcausal/graph.hpp"
#include "crowdcausal/llm.hpp"
#include "crowdcausal/metrics.hpp"

namespace crowdcausal {

/// One experiment as read from a single JSON document:
///
///   {"network": "asia" | "<path>" | {inline network},
///    "crowd": [{"expert_id", "archetype" | "profile", "seed", "count"} | {"llm": {...}}],
///    "protocol": "edge" | "ordering",
///    "aggregation": "individual" | "expert-level" | "query-level",
///    "design": {"criterion", "stages": [K_1, ...], "pool_mode"},
///    "replicates", "seed", "output_dir", "parallelism"}
///
/// Relative input paths resolve against the directory of the config file.
struct ExperimentConfig {
    Network network;
    std::string network_source = "asia";
    std::vector<ExpertSpec> crowd;
    std::vector<LlmExpertConfig> llm_experts;
    Protocol protocol = Protocol::EdgeWise;
    Aggregation aggregation = Aggregation::QueryLevel;
    Criterion criterion = Criterion::Exhaustive;
    std::vector<int> stages;
    PoolMode pool_mode = PoolMode::Fixed;
    int replicates = 1;
    std::uint64_t seed = 0;
    std::string output_dir = "out";
    int parallelism = 1;

    void validate() const;  // throws ConfigError naming the offending field
};

/// Replaces the leaf at a dotted path ("design.stages", "crowd.0.seed") with `value`, parsed
/// as JSON when possible and kept as a string otherwise. Throws ConfigError on a bad path.
void apply_override(nlohmann::json& doc, const std::string& assignment);

ExperimentConfig experiment_config_from_json(const nlohmann::json& doc,
                                             const std::filesystem::path& base_dir = {});
nlohmann::json load_config_document(const std::string& path, const std::vector<std::string>& overrides = {});
ExperimentConfig load_experiment_config(const std::string& path, const std::vector<std::string>& overrides = {});

struct ReplicateResult {
    int replicate = 0;
    std::uint64_t seed = 0;
    MetricsReport metrics;
    double mean_individual_shd = 0.0;
    bool crowd_beats_individual = false;
    std::size_t response_count = 0;
    std::vector<StageRecord> trace;
    std::vector<std::string> warnings;  // LLM parse warnings
};

struct ExperimentReport {
    std::vector<ReplicateResult> replicates;  // in replicate order

    nlohmann::json summary() const;
    double crowd_beats_fraction() const;
};

/// One replicate with seed = config.seed + r. Errors leave annotated with the replicate.
ReplicateResult run_replicate(const ExperimentConfig& config, int replicate);

/// All replicates, up to `parallelism` at a time. The first failing replicate (by index)
/// is rethrown.
ExperimentReport run_experiment(const ExperimentConfig& config);

void write_replicates_csv(std::ostream& out, const ExperimentReport& report);
void write_design_trace(std::ostream& out, const ExperimentReport& report);

/// replicates.csv, summary.json and design-trace.jsonl under `dir` (created if missing).
void write_experiment_outputs(const ExperimentReport& report, const std::filesystem::path& dir);

}  // namespace crowdcausal
