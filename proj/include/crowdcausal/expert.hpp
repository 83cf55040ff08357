#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "crowdcausal/graph.hpp"
#include "crowdcausal/knowledge.hpp"

namespace crowdcausal {

using Rng = std::mt19937_64;

enum class Archetype { Omniscient, PerfectIncomplete, Imperfect, Uncertain, BadActor };

std::string to_string(Archetype archetype);
Archetype archetype_from_string(const std::string& text);

/// Knowledge quality on four axes, each in [0, 1].
struct ExpertProfile {
    double completeness = 1.0;
    double validity = 1.0;
    double confidence = 1.0;
    double trustworthiness = 1.0;
    std::optional<Archetype> archetype;

    void validate() const;  // throws ConfigError
    /// Probability of asserting a spurious link on a known non-adjacent pair.
    double spurious_rate() const { return 0.2 * (1.0 - validity); }
};

ExpertProfile make_profile(Archetype archetype);

/// One informant's believed structure. Relations are defined only on known pairs and
/// the asserted edges may contain cycles.
class BeliefGraph {
public:
    BeliefGraph() = default;
    explicit BeliefGraph(std::vector<std::string> nodes);

    const std::vector<std::string>& nodes() const noexcept { return nodes_; }
    std::size_t size() const noexcept { return nodes_.size(); }

    void set(NodeIndex u, NodeIndex v, PairRelation relation);
    bool known(NodeIndex u, NodeIndex v) const { return known_[u * size() + v] != 0; }
    /// Relation of (u, v) as oriented by the caller; None for unknown pairs.
    PairRelation relation(NodeIndex u, NodeIndex v) const;

    std::vector<Edge> asserted_edges() const;
    std::size_t known_count() const;  // unordered pairs
    /// Shortest directed path in the asserted edge set.
    std::optional<int> path_length(NodeIndex from, NodeIndex to) const;

private:
    std::vector<std::string> nodes_;
    std::vector<signed char> relation_;  // +1 when u->v asserted, stored symmetrically
    std::vector<unsigned char> known_;
    std::vector<std::vector<NodeIndex>> children_;
};

BeliefGraph sample_belief_graph(const ExpertProfile& profile, const Dag& truth, Rng& rng);

/// Ternary answer for the oriented pair (u, v).
int answer_edge(const ExpertProfile& profile, const BeliefGraph& belief, NodeIndex u, NodeIndex v, Rng& rng);

/// Signed strength in [-10, 10] for "u is upstream of v".
int answer_order(const ExpertProfile& profile, const BeliefGraph& belief, NodeIndex u, NodeIndex v, Rng& rng);

/// One entry of a crowd specification.
struct ExpertSpec {
    std::string expert_id;
    ExpertProfile profile;
    std::uint64_t seed = 0;
};

/// [{expert_id, archetype | {completeness, validity, confidence, trustworthiness}, seed, count?}]
/// An entry with count k > 1 expands into ids "<expert_id>-1" ... "<expert_id>-k" with seeds
/// seed, seed+1, ...
std::vector<ExpertSpec> crowd_from_json(const nlohmann::json& j);
nlohmann::json crowd_to_json(const std::vector<ExpertSpec>& crowd);

/// A simulated informant owning its random source.
class SimulatedExpert {
public:
    SimulatedExpert(std::string id, ExpertProfile profile, const Dag& truth, Rng rng);

    const std::string& id() const noexcept { return id_; }
    const ExpertProfile& profile() const noexcept { return profile_; }
    const BeliefGraph& belief() const noexcept { return belief_; }

    Response answer(const Query& query, Protocol protocol);
    KnowledgeSet answer_all(const std::vector<Query>& queries, Protocol protocol);

private:
    std::string id_;
    ExpertProfile profile_;
    Dag truth_;
    BeliefGraph belief_;
    Rng rng_;
};

/// Seeds an expert's random source from the run seed and the expert's own seed.
Rng expert_rng(std::uint64_t run_seed, std::uint64_t expert_seed);

/// Every canonical pair of `dag` as a query, in canonical order.
std::vector<Query> all_pair_queries(const Dag& dag);

}  // namespace crowdcausal
