#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "crowdcausal/graph.hpp"
#include "crowdcausal/knowledge.hpp"

namespace crowdcausal {

/// Outcome order used for every probability / count triple: forward, none, backward.
using Triple = std::array<double, 3>;

inline constexpr Triple kDefaultPseudocounts{1.0, 1.0, 1.0};

/// Maps unordered node pairs to their slot in canonical pair order.
class PairIndex {
public:
    PairIndex() = default;
    explicit PairIndex(std::vector<std::string> nodes);

    const std::vector<std::string>& nodes() const noexcept { return nodes_; }
    const std::vector<NodePair>& pairs() const noexcept { return pairs_; }
    std::size_t size() const noexcept { return pairs_.size(); }

    std::size_t slot(NodeIndex u, NodeIndex v) const { return slot_[u * nodes_.size() + v]; }
    /// Slot for a canonical query; throws UnknownNode.
    std::size_t slot(const Query& query) const;
    NodeIndex node(const std::string& name) const;

private:
    std::vector<std::string> nodes_;
    std::vector<NodePair> pairs_;
    std::vector<std::size_t> slot_;
    std::map<std::string, NodeIndex, std::less<>> index_;
};

/// Dirichlet-categorical belief over the three relations of every pair.
class EdgePosterior {
public:
    EdgePosterior() = default;
    explicit EdgePosterior(std::vector<std::string> nodes, Triple pseudocounts = kDefaultPseudocounts);

    const PairIndex& index() const noexcept { return index_; }
    const Triple& pseudocounts() const noexcept { return pseudocounts_; }
    const Triple& counts(std::size_t slot) const { return counts_.at(slot); }

    /// Adds one edge-wise answer (relative to the canonical orientation of the slot).
    void observe(std::size_t slot, int value);
    void observe(const Response& response);

    /// Posterior mean (p_forward, p_none, p_backward).
    Triple probabilities(std::size_t slot) const;
    /// Entropy of the posterior predictive for the next answer on this pair.
    double predictive_entropy(std::size_t slot) const;

    /// Projection with weight p_forward - p_backward and confidence max(p_forward, p_backward).
    Dag map_graph(double threshold = kDefaultEdgeThreshold) const;

    nlohmann::json to_json() const;

private:
    PairIndex index_;
    Triple pseudocounts_{kDefaultPseudocounts};
    std::vector<Triple> counts_;
};

struct EdgewiseResult {
    EdgePosterior posterior;
    Dag graph;
};

/// Conjugate update of every pair from edge-wise answers; unqueried pairs keep the prior.
EdgewiseResult infer_edgewise(const KnowledgeSet& responses, const std::vector<std::string>& nodes,
                              Triple pseudocounts = kDefaultPseudocounts);

/// Latent upstream score per node (higher = more upstream) and the response noise scale.
struct ScoreField {
    std::vector<std::string> nodes;
    Eigen::VectorXd phi;
    double sigma = 1.0;

    std::map<std::string, double> as_map() const;
    nlohmann::json to_json() const;
};

struct ScoreModelOptions {
    double prior_scale = 2.0;     // sd of the zero-mean Gaussian prior on each score
    double sigma_floor = 0.5;
    int sigma_update_every = 10;
    int max_iterations = 10000;
    double gradient_tolerance = 1e-8;
};

/// Ordering responses resolved to node indices.
struct OrderingObservation {
    NodeIndex u = 0;
    NodeIndex v = 0;
    double y = 0.0;
};

std::vector<OrderingObservation> ordering_observations(const KnowledgeSet& responses,
                                                       const std::vector<std::string>& nodes);

/// Data term: sum of log N(y | 10 tanh(phi_u - phi_v), sigma^2).
double score_data_loglik(const Eigen::VectorXd& phi, double sigma,
                         const std::vector<OrderingObservation>& data);

/// Data term plus the Gaussian prior on phi.
double score_loglik(const ScoreField& field, const KnowledgeSet& responses,
                    const ScoreModelOptions& options = {});
double score_loglik(const Eigen::VectorXd& phi, double sigma, const std::vector<OrderingObservation>& data,
                    double prior_scale);

Eigen::VectorXd score_grad(const ScoreField& field, const KnowledgeSet& responses,
                           const ScoreModelOptions& options = {});
Eigen::VectorXd score_grad(const Eigen::VectorXd& phi, double sigma,
                           const std::vector<OrderingObservation>& data, double prior_scale);

struct ScoreFitTrace {
    std::vector<double> objective;  // accepted steps, non-decreasing up to 1e-12 relative round-off
                                    // within a block; sigma may change between blocks
    std::vector<int> sigma_updates; // iteration indices where sigma was re-estimated
    int iterations = 0;
    double final_gradient_norm = 0.0;
};

/// MAP scores by gradient ascent with halving line search; gauge-fixed to sum zero.
ScoreField infer_scores(const KnowledgeSet& responses, const std::vector<std::string>& nodes,
                        const ScoreModelOptions& options = {}, ScoreFitTrace* trace = nullptr);

/// Ordering answers describe total influence: project the mean answer per pair (scaled to
/// [-1, 1]) and keep the transitive reduction.
Dag ordering_map_graph(const KnowledgeSet& responses, const std::vector<std::string>& nodes,
                       double threshold = kDefaultEdgeThreshold);

}  // namespace crowdcausal
