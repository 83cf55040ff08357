#pragma once

#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "crowdcausal/graph.hpp"
#include "crowdcausal/knowledge.hpp"

namespace crowdcausal {

struct MetricsReport {
    int shd = 0;
    double edge_precision = 1.0;
    double edge_recall = 1.0;
    double fdr = 0.0;
    double edge_coverage = 1.0;
    double rank_correlation = 0.0;
    double pairwise_order_accuracy = 1.0;
    double abstention_rate = 0.0;
    double cycle_injection_rate = 0.0;
    double edge_flip_frequency = 0.0;
    int inconsistency_count = 0;
};

nlohmann::json to_json(const MetricsReport& report);

/// Structural Hamming distance; a reversed edge counts once.
int shd(const Dag& a, const Dag& b);

/// Fills shd, edge_precision, edge_recall, fdr and edge_coverage.
/// Empty denominators: precision 1 / fdr 0 with no asserted edge, recall 1 with no true edge.
MetricsReport edge_metrics(const Dag& estimate, const Dag& truth);

struct OrderMetrics {
    double rank_correlation = 0.0;
    double pairwise_order_accuracy = 1.0;
};

/// Higher score = more upstream. Rank correlation is Spearman against the negated
/// longest-path depth; accuracy is over ordered pairs where u reaches v in `truth`.
OrderMetrics order_metrics(const std::map<std::string, double>& scores, const Dag& truth);

struct BehaviorMetrics {
    double cycle_injection_rate = 0.0;
    double edge_flip_frequency = 0.0;
    int inconsistency_count = 0;
    double abstention_rate = 0.0;
};

/// Per-expert snapshots (latest answer per pair) feed the cycle check; repeated queries of
/// the same pair feed flip frequency (a +/- reversal) and inconsistency (any disagreement).
BehaviorMetrics behavior_metrics(const KnowledgeSet& responses);

/// Average ranks (ties share the mean rank), 1-based.
std::vector<double> average_ranks(const std::vector<double>& values);
double spearman(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace crowdcausal
