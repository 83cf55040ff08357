#include "crowdcausal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "crowdcausal/error.hpp"

namespace crowdcausal {

namespace {
constexpr const char* kModule = "graph-core";

void require_same_nodes(const Dag& a, const Dag& b) {
    if (!a.same_nodes(b)) throw Error(ErrorCode::NodeSetMismatch, kModule, "graphs have different node sets");
}

// Relation of b's pair (name(u), name(v)) expressed in a's node order.
PairRelation relation_by_name(const Dag& g, const std::string& u, const std::string& v) {
    return g.relation(g.index_of(u), g.index_of(v));
}
}  // namespace

nlohmann::json to_json(const MetricsReport& r) {
    return {{"shd", r.shd},
            {"edge_precision", r.edge_precision},
            {"edge_recall", r.edge_recall},
            {"fdr", r.fdr},
            {"edge_coverage", r.edge_coverage},
            {"rank_correlation", r.rank_correlation},
            {"pairwise_order_accuracy", r.pairwise_order_accuracy},
            {"abstention_rate", r.abstention_rate},
            {"cycle_injection_rate", r.cycle_injection_rate},
            {"edge_flip_frequency", r.edge_flip_frequency},
            {"inconsistency_count", r.inconsistency_count}};
}

int shd(const Dag& a, const Dag& b) {
    require_same_nodes(a, b);
    int distance = 0;
    for (const NodePair& p : canonical_pairs(a.nodes())) {
        const std::string& u = a.name(p.u);
        const std::string& v = a.name(p.v);
        if (a.relation(p.u, p.v) != relation_by_name(b, u, v)) ++distance;
    }
    return distance;
}

MetricsReport edge_metrics(const Dag& estimate, const Dag& truth) {
    require_same_nodes(estimate, truth);
    MetricsReport report;
    report.shd = shd(estimate, truth);

    std::size_t correct = 0;
    for (const Edge& e : estimate.edges())
        if (truth.has_edge(estimate.name(e.from), estimate.name(e.to))) ++correct;
    std::size_t covered = 0;
    for (const Edge& e : truth.edges()) {
        const NodeIndex from = estimate.index_of(truth.name(e.from));
        const NodeIndex to = estimate.index_of(truth.name(e.to));
        if (estimate.relation(from, to) != PairRelation::None) ++covered;
    }
    const auto asserted = estimate.edge_count();
    const auto actual = truth.edge_count();
    report.edge_precision = asserted == 0 ? 1.0 : static_cast<double>(correct) / asserted;
    report.fdr = 1.0 - report.edge_precision;
    report.edge_recall = actual == 0 ? 1.0 : static_cast<double>(correct) / actual;
    report.edge_coverage = actual == 0 ? 1.0 : static_cast<double>(covered) / actual;
    return report;
}

std::vector<double> average_ranks(const std::vector<double>& values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
        const double mean_rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = mean_rank;
        i = j + 1;
    }
    return ranks;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    const auto ra = average_ranks(a);
    const auto rb = average_ranks(b);
    const double n = static_cast<double>(ra.size());
    if (ra.size() < 2) return 0.0;
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (saa <= 0 || sbb <= 0) return 0.0;  // a constant ranking carries no order
    return sab / std::sqrt(saa * sbb);
}

OrderMetrics order_metrics(const std::map<std::string, double>& scores, const Dag& truth) {
    std::vector<double> score(truth.size());
    for (NodeIndex i = 0; i < truth.size(); ++i) {
        auto it = scores.find(truth.name(i));
        if (it == scores.end())
            throw Error(ErrorCode::UnknownNode, kModule, "no score for node " + truth.name(i));
        score[i] = it->second;
    }
    for (const auto& [name, _] : scores)
        if (!truth.find(name)) throw Error(ErrorCode::UnknownNode, kModule, "score for unknown node " + name);

    const auto depth = longest_path_depth(truth);
    std::vector<double> negated_depth(depth.size());
    for (std::size_t i = 0; i < depth.size(); ++i) negated_depth[i] = -static_cast<double>(depth[i]);

    OrderMetrics out;
    out.rank_correlation = spearman(score, negated_depth);

    const auto dist = path_length_matrix(truth);
    const std::size_t n = truth.size();
    std::size_t connected = 0, agreeing = 0;
    for (NodeIndex u = 0; u < n; ++u)
        for (NodeIndex v = 0; v < n; ++v)
            if (u != v && dist[u * n + v] > 0) {
                ++connected;
                if (score[u] > score[v]) ++agreeing;
            }
    out.pairwise_order_accuracy = connected == 0 ? 1.0 : static_cast<double>(agreeing) / connected;
    return out;
}

BehaviorMetrics behavior_metrics(const KnowledgeSet& responses) {
    BehaviorMetrics out;
    if (responses.empty()) return out;

    std::size_t zeros = 0;
    // expert -> pair -> answers in arrival order
    std::map<std::string, std::map<Query, std::vector<int>>> by_expert;
    for (const Response& r : responses) {
        if (r.value == 0) ++zeros;
        by_expert[r.expert_id][r.query].push_back(r.value);
    }
    out.abstention_rate = static_cast<double>(zeros) / responses.size();

    std::size_t requeried = 0, flipped = 0, cyclic_snapshots = 0;
    for (const auto& [expert, pairs] : by_expert) {
        std::map<std::string, NodeIndex> index;
        std::vector<Edge> asserted;
        auto node = [&](const std::string& name) {
            auto [it, inserted] = index.emplace(name, index.size());
            return it->second;
        };
        for (const auto& [query, answers] : pairs) {
            if (answers.size() > 1) {
                ++requeried;
                const bool pos = std::any_of(answers.begin(), answers.end(), [](int a) { return a > 0; });
                const bool neg = std::any_of(answers.begin(), answers.end(), [](int a) { return a < 0; });
                if (pos && neg) ++flipped;
                if (std::any_of(answers.begin(), answers.end(), [&](int a) { return a != answers.front(); }))
                    ++out.inconsistency_count;
            }
            const int latest = answers.back();
            const NodeIndex u = node(query.u), v = node(query.v);
            if (latest > 0) asserted.push_back({u, v});
            if (latest < 0) asserted.push_back({v, u});
        }
        if (find_directed_cycle(index.size(), asserted)) ++cyclic_snapshots;
    }
    out.cycle_injection_rate = static_cast<double>(cyclic_snapshots) / by_expert.size();
    out.edge_flip_frequency = requeried == 0 ? 0.0 : static_cast<double>(flipped) / requeried;
    return out;
}

}  // namespace crowdcausal
