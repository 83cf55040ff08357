#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "crowdcausal/graph.hpp"
#include "crowdcausal/inference.hpp"
#include "crowdcausal/knowledge.hpp"

namespace crowdcausal {

/// Splits a merged transcript by expert id (sorted by id, arrival order kept within).
std::map<std::string, KnowledgeSet> split_by_expert(const KnowledgeSet& responses);

/// Per-pair weighted vote over {Forward, None, Backward}, projected to a DAG with
/// weight V_F - V_B and confidence max(V_F, V_B) (votes normalized by total weight).
Dag aggregate_expert_level(const std::vector<Dag>& estimates, const std::vector<double>& weights = {});
Dag aggregate_expert_level(const std::vector<EdgePosterior>& estimates, const std::vector<double>& weights = {});

/// Single-expert MAP structure: edge-wise posterior projection or ordering projection.
Dag individual_map_graph(const KnowledgeSet& responses, const std::vector<std::string>& nodes);

/// Responses grouped by (pair slot, expert, value) for the mixture fit.
struct ResponseData {
    struct Group {
        std::size_t slot = 0;
        std::size_t expert = 0;
        int y = 0;
        double count = 0.0;
    };

    Protocol protocol = Protocol::EdgeWise;
    PairIndex index;
    std::vector<std::string> experts;  // sorted
    std::vector<Group> groups;         // sorted by (slot, expert, y)
    std::size_t total = 0;

    /// Throws EmptyResponses, ProtocolMismatch (mixed protocols), UnknownNode.
    static ResponseData build(const KnowledgeSet& responses, const std::vector<std::string>& nodes);
};

/// Fitted mixture. Component order in every triple is (+, 0, -), matching Triple's
/// (forward, none, backward) with respect to the canonical pair orientation.
struct MixtureParams {
    Protocol protocol = Protocol::EdgeWise;
    std::vector<std::string> nodes;
    std::vector<std::string> experts;

    Triple linked{0.8, 0.1, 0.1};  // mixing weights for pairs the candidate links u -> v
    double spurious = 0.2;         // total +/- mass for unlinked pairs
    std::vector<Triple> pi;        // per canonical pair slot
    std::vector<double> g;         // pair difficulty per slot, in (0, 1]

    std::vector<double> f;    // per-expert reliability scale
    std::vector<double> rho;  // edge-wise: probability the answer reports the mechanism
    double mu = 8.0;          // ordering-wise: mean magnitude of the +/- components
    double sigma = 2.0;       // ordering-wise: base noise scale

    nlohmann::json to_json() const;
};

struct EmOptions {
    int max_iterations = 500;
    double tolerance = 1e-7;  // relative objective improvement
};

struct EmFit {
    MixtureParams params;
    double log_likelihood = 0.0;  // observed data
    double log_prior = 0.0;       // Dirichlet priors on the mixing weights
    double objective = 0.0;       // log_likelihood + log_prior
    std::vector<double> objective_trace;  // one value per iteration, starting at the initial point
    int iterations = 0;
};

/// MAP-EM for the three-mechanism mixture given a candidate graph. Starts from fixed
/// defaults, so the result is a pure function of (responses, candidate).
EmFit em_fit(const ResponseData& data, const Dag& candidate, const EmOptions& options = {});
EmFit em_fit(const KnowledgeSet& responses, const Dag& candidate, const EmOptions& options = {});

/// Posterior mechanism probabilities (+, 0, -) for one response under fitted params.
Triple responsibilities(const MixtureParams& params, const Response& response);

/// BIC-flavored edge penalty: 0.5 * log(total responses).
double default_edge_penalty(std::size_t total_responses);

/// Penalized score objective - penalty * |E|.
double score_graph(const ResponseData& data, const Dag& graph, double penalty, const EmOptions& options = {});

struct SearchOptions {
    int restarts = 3;  // climbs; climb 0 starts at init, later ones at random consistent graphs
    std::uint64_t seed = 0;
    std::optional<double> penalty;  // defaults to default_edge_penalty
    int max_steps = 1000;
    EmOptions em;
};

struct SearchMove {
    int restart = 0;
    std::string kind;  // add | delete | reverse
    std::string u;
    std::string v;  // the edge after the move (for delete: the removed edge)
    double score = 0.0;
};

struct CandidateState {
    Dag graph;
    double score = 0.0;
    EmFit fit;
    std::vector<SearchMove> moves;
    int evaluations = 0;

    /// Fit report: per-expert f, final log-likelihood, move trace.
    nlohmann::json report() const;
};

/// Best-improvement hill climbing over add / delete / reverse moves on acyclic graphs.
CandidateState structure_search(const ResponseData& data, const Dag& init, const SearchOptions& options = {});
CandidateState structure_search(const KnowledgeSet& responses, const Dag& init, const SearchOptions& options = {});

/// structure_search initialized at the expert-level vote of per-expert MAP graphs.
CandidateState query_level_aggregate(const KnowledgeSet& responses, const std::vector<std::string>& nodes,
                                     const SearchOptions& options = {});

}  // namespace crowdcausal
