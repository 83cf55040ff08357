#include "crowdcausal/graph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <functional>
#include <queue>
#include <set>
#include <sstream>

#include "crowdcausal/error.hpp"

namespace crowdcausal {

namespace {

constexpr const char* kModule = "graph-core";

std::string describe_cycle(std::span<const std::string> nodes, const std::vector<NodeIndex>& cycle) {
    std::ostringstream out;
    for (NodeIndex i : cycle) out << nodes[i] << " -> ";
    out << nodes[cycle.front()];
    return out.str();
}

}  // namespace

int to_sign(PairRelation relation) noexcept {
    switch (relation) {
        case PairRelation::Forward: return 1;
        case PairRelation::Backward: return -1;
        case PairRelation::None: return 0;
    }
    return 0;
}

PairRelation relation_from_sign(int sign) noexcept {
    if (sign > 0) return PairRelation::Forward;
    if (sign < 0) return PairRelation::Backward;
    return PairRelation::None;
}

PairRelation reversed(PairRelation relation) noexcept {
    return relation_from_sign(-to_sign(relation));
}

std::vector<NodePair> canonical_pairs(std::span<const std::string> nodes) {
    std::vector<NodeIndex> order(nodes.size());
    for (NodeIndex i = 0; i < nodes.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](NodeIndex a, NodeIndex b) { return nodes[a] < nodes[b]; });
    std::vector<NodePair> pairs;
    pairs.reserve(nodes.size() * (nodes.size() - (nodes.empty() ? 0 : 1)) / 2);
    for (std::size_t a = 0; a < order.size(); ++a)
        for (std::size_t b = a + 1; b < order.size(); ++b) pairs.push_back({order[a], order[b]});
    return pairs;
}

std::optional<std::vector<NodeIndex>> find_directed_cycle(std::size_t node_count,
                                                          std::span<const Edge> edges) {
    std::vector<std::vector<NodeIndex>> children(node_count);
    for (const Edge& e : edges) children[e.from].push_back(e.to);
    for (auto& c : children) std::sort(c.begin(), c.end());

    // 0 = unvisited, 1 = on stack, 2 = done
    std::vector<int> state(node_count, 0);
    std::vector<NodeIndex> parent(node_count, node_count);
    for (NodeIndex root = 0; root < node_count; ++root) {
        if (state[root] != 0) continue;
        std::vector<std::pair<NodeIndex, std::size_t>> stack{{root, 0}};
        state[root] = 1;
        while (!stack.empty()) {
            auto& [node, next] = stack.back();
            if (next < children[node].size()) {
                NodeIndex child = children[node][next++];
                if (state[child] == 1) {
                    std::vector<NodeIndex> cycle;
                    for (NodeIndex cur = node; cur != child; cur = parent[cur]) cycle.push_back(cur);
                    cycle.push_back(child);
                    std::reverse(cycle.begin(), cycle.end());
                    return cycle;
                }
                if (state[child] == 0) {
                    state[child] = 1;
                    parent[child] = node;
                    stack.emplace_back(child, 0);
                }
            } else {
                state[node] = 2;
                stack.pop_back();
            }
        }
    }
    return std::nullopt;
}

std::optional<int> shortest_path_length(const std::vector<std::vector<NodeIndex>>& children,
                                        NodeIndex from, NodeIndex to) {
    if (from == to) return 0;
    std::vector<int> dist(children.size(), -1);
    std::deque<NodeIndex> frontier{from};
    dist[from] = 0;
    while (!frontier.empty()) {
        NodeIndex node = frontier.front();
        frontier.pop_front();
        for (NodeIndex child : children[node]) {
            if (dist[child] >= 0) continue;
            dist[child] = dist[node] + 1;
            if (child == to) return dist[child];
            frontier.push_back(child);
        }
    }
    return std::nullopt;
}

Dag::Dag(std::vector<std::string> nodes, std::vector<Edge> edges)
    : nodes_(std::move(nodes)), edges_(std::move(edges)) {
    const std::size_t n = nodes_.size();
    for (NodeIndex i = 0; i < n; ++i) {
        if (nodes_[i].empty()) throw Error(ErrorCode::InvalidNetwork, kModule, "empty node name");
        if (!index_.emplace(nodes_[i], i).second)
            throw Error(ErrorCode::InvalidNetwork, kModule, "duplicate node name: " + nodes_[i]);
    }
    std::sort(edges_.begin(), edges_.end());
    adjacency_.assign(n * n, 0);
    children_.assign(n, {});
    parents_.assign(n, {});
    for (const Edge& e : edges_) {
        if (e.from >= n || e.to >= n)
            throw Error(ErrorCode::UnknownNode, kModule, "edge endpoint out of range");
        if (e.from == e.to)
            throw Error(ErrorCode::CycleError, kModule, "self-loop on " + nodes_[e.from]);
        if (adjacency_[e.from * n + e.to])
            throw Error(ErrorCode::InvalidNetwork, kModule,
                        "duplicate edge " + nodes_[e.from] + " -> " + nodes_[e.to]);
        adjacency_[e.from * n + e.to] = 1;
        children_[e.from].push_back(e.to);
        parents_[e.to].push_back(e.from);
    }
    if (auto cycle = find_directed_cycle(n, edges_))
        throw Error(ErrorCode::CycleError, kModule, "directed cycle: " + describe_cycle(nodes_, *cycle));
}

Dag Dag::from_names(std::vector<std::string> nodes,
                    const std::vector<std::pair<std::string, std::string>>& edges) {
    std::map<std::string, NodeIndex, std::less<>> index;
    for (NodeIndex i = 0; i < nodes.size(); ++i) index.emplace(nodes[i], i);
    std::vector<Edge> indexed;
    indexed.reserve(edges.size());
    for (const auto& [from, to] : edges) {
        auto f = index.find(from);
        auto t = index.find(to);
        if (f == index.end()) throw Error(ErrorCode::UnknownNode, kModule, "unknown node: " + from);
        if (t == index.end()) throw Error(ErrorCode::UnknownNode, kModule, "unknown node: " + to);
        indexed.push_back({f->second, t->second});
    }
    return Dag(std::move(nodes), std::move(indexed));
}

std::optional<NodeIndex> Dag::find(std::string_view name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

NodeIndex Dag::index_of(std::string_view name) const {
    if (auto i = find(name)) return *i;
    throw Error(ErrorCode::UnknownNode, kModule, "unknown node: " + std::string(name));
}

PairRelation Dag::relation(NodeIndex u, NodeIndex v) const {
    if (has_edge(u, v)) return PairRelation::Forward;
    if (has_edge(v, u)) return PairRelation::Backward;
    return PairRelation::None;
}

bool Dag::same_nodes(const Dag& other) const {
    if (nodes_.size() != other.nodes_.size()) return false;
    for (const auto& [name, _] : index_)
        if (!other.index_.contains(name)) return false;
    return true;
}

std::vector<std::pair<std::string, std::string>> Dag::named_edges() const {
    std::vector<std::pair<std::string, std::string>> out;
    out.reserve(edges_.size());
    for (const Edge& e : edges_) out.emplace_back(nodes_[e.from], nodes_[e.to]);
    return out;
}

std::vector<NodeIndex> topological_indices(std::span<const std::string> nodes,
                                           std::span<const Edge> edges) {
    const std::size_t n = nodes.size();
    std::vector<std::vector<NodeIndex>> children(n);
    std::vector<std::size_t> indegree(n, 0);
    for (const Edge& e : edges) {
        children[e.from].push_back(e.to);
        ++indegree[e.to];
    }
    auto later = [&](NodeIndex a, NodeIndex b) { return nodes[a] > nodes[b]; };
    std::priority_queue<NodeIndex, std::vector<NodeIndex>, decltype(later)> ready(later);
    for (NodeIndex i = 0; i < n; ++i)
        if (indegree[i] == 0) ready.push(i);
    std::vector<NodeIndex> order;
    order.reserve(n);
    while (!ready.empty()) {
        NodeIndex node = ready.top();
        ready.pop();
        order.push_back(node);
        for (NodeIndex child : children[node])
            if (--indegree[child] == 0) ready.push(child);
    }
    if (order.size() != n) {
        auto cycle = find_directed_cycle(n, edges);
        throw Error(ErrorCode::CycleError, kModule,
                    "directed cycle: " + (cycle ? describe_cycle(nodes, *cycle) : std::string("?")));
    }
    return order;
}

std::vector<std::string> topological_order(const Dag& dag) {
    std::vector<std::string> names;
    for (NodeIndex i : topological_indices(dag.nodes(), dag.edges())) names.push_back(dag.name(i));
    return names;
}

std::optional<int> reachable(const Dag& dag, NodeIndex u, NodeIndex v) {
    if (u >= dag.size() || v >= dag.size())
        throw Error(ErrorCode::UnknownNode, kModule, "node index out of range");
    if (u == v) return std::nullopt;
    std::vector<std::vector<NodeIndex>> children(dag.size());
    for (NodeIndex i = 0; i < dag.size(); ++i) children[i] = dag.children(i);
    return shortest_path_length(children, u, v);
}

std::optional<int> reachable(const Dag& dag, std::string_view u, std::string_view v) {
    return reachable(dag, dag.index_of(u), dag.index_of(v));
}

std::vector<int> path_length_matrix(const Dag& dag) {
    const std::size_t n = dag.size();
    std::vector<int> dist(n * n, -1);
    for (NodeIndex s = 0; s < n; ++s) {
        dist[s * n + s] = 0;
        std::deque<NodeIndex> frontier{s};
        while (!frontier.empty()) {
            NodeIndex node = frontier.front();
            frontier.pop_front();
            for (NodeIndex child : dag.children(node)) {
                if (dist[s * n + child] >= 0) continue;
                dist[s * n + child] = dist[s * n + node] + 1;
                frontier.push_back(child);
            }
        }
    }
    return dist;
}

std::vector<int> longest_path_depth(const Dag& dag) {
    std::vector<int> depth(dag.size(), 0);
    for (NodeIndex node : topological_indices(dag.nodes(), dag.edges()))
        for (NodeIndex child : dag.children(node)) depth[child] = std::max(depth[child], depth[node] + 1);
    return depth;
}

Dag transitive_reduction(const Dag& dag) {
    std::vector<Edge> kept;
    for (const Edge& e : dag.edges()) {
        // Redundant when `to` is reachable from another child of `from`.
        bool redundant = false;
        for (NodeIndex child : dag.children(e.from)) {
            if (child == e.to) continue;
            if (reachable(dag, child, e.to)) {
                redundant = true;
                break;
            }
        }
        if (!redundant) kept.push_back(e);
    }
    return dag.with_edges(std::move(kept));
}

Dag project_to_dag(std::vector<std::string> nodes, std::span<const PairWeight> weights,
                   double threshold) {
    const std::size_t n = nodes.size();
    struct Candidate {
        Edge edge;
        double magnitude;
        std::string first, second;  // canonical names for tie-breaking
    };
    std::vector<Candidate> candidates;
    for (const PairWeight& w : weights) {
        if (w.u >= n || w.v >= n || w.u == w.v)
            throw Error(ErrorCode::UnknownNode, kModule, "invalid pair in weights");
        const double magnitude = std::abs(w.weight);
        const double confidence = w.confidence.value_or(magnitude);
        if (!(magnitude > 0.0) || confidence < threshold) continue;
        Edge edge = w.weight > 0 ? Edge{w.u, w.v} : Edge{w.v, w.u};
        std::string a = nodes[w.u], b = nodes[w.v];
        if (b < a) std::swap(a, b);
        candidates.push_back({edge, magnitude, std::move(a), std::move(b)});
    }
    std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& x, const Candidate& y) {
        if (x.magnitude != y.magnitude) return x.magnitude > y.magnitude;
        return std::tie(x.first, x.second) < std::tie(y.first, y.second);
    });

    std::vector<std::vector<NodeIndex>> children(n);
    std::vector<unsigned char> present(n * n, 0);
    std::vector<Edge> accepted;
    for (const Candidate& c : candidates) {
        const Edge& e = c.edge;
        if (present[e.from * n + e.to] || present[e.to * n + e.from]) continue;
        if (shortest_path_length(children, e.to, e.from)) continue;
        children[e.from].push_back(e.to);
        present[e.from * n + e.to] = 1;
        accepted.push_back(e);
    }
    return Dag(std::move(nodes), std::move(accepted));
}

std::vector<Dag> enumerate_dags(int n) {
    if (n < 0) throw Error(ErrorCode::InvalidNetwork, kModule, "negative node count");
    if (n > 4) throw Error(ErrorCode::TooLarge, kModule, "enumeration limited to n <= 4");
    std::vector<std::string> names;
    for (int i = 0; i < n; ++i) names.emplace_back(1, static_cast<char>('A' + i));
    const auto pairs = canonical_pairs(names);
    std::size_t total = 1;
    for (std::size_t i = 0; i < pairs.size(); ++i) total *= 3;

    std::vector<Dag> out;
    std::vector<Edge> edges;
    for (std::size_t code = 0; code < total; ++code) {
        edges.clear();
        std::size_t rest = code;
        for (const NodePair& p : pairs) {
            const std::size_t state = rest % 3;
            rest /= 3;
            if (state == 1) edges.push_back({p.u, p.v});
            if (state == 2) edges.push_back({p.v, p.u});
        }
        if (!find_directed_cycle(names.size(), edges)) out.emplace_back(names, edges);
    }
    return out;
}

Dag asia_fixture() {
    return Dag::from_names({"VisitAsia", "Tuberculosis", "Smoking", "LungCancer", "Bronchitis",
                            "TBorCancer", "Xray", "Dyspnea"},
                           {{"VisitAsia", "Tuberculosis"},
                            {"Smoking", "LungCancer"},
                            {"Smoking", "Bronchitis"},
                            {"Tuberculosis", "TBorCancer"},
                            {"LungCancer", "TBorCancer"},
                            {"TBorCancer", "Xray"},
                            {"TBorCancer", "Dyspnea"},
                            {"Bronchitis", "Dyspnea"}});
}

std::map<std::string, std::string> asia_descriptions() {
    return {{"VisitAsia", "Visit to Asia"},
            {"Tuberculosis", "Tuberculosis"},
            {"Smoking", "Smoking"},
            {"LungCancer", "Lung Cancer"},
            {"Bronchitis", "Bronchitis"},
            {"TBorCancer", "Tuberculosis or Cancer"},
            {"Xray", "Positive X-ray"},
            {"Dyspnea", "Dyspnea (shortness of breath)"}};
}

std::string Network::describe(const std::string& node) const {
    auto it = descriptions.find(node);
    return it == descriptions.end() ? node : it->second;
}

Network network_from_json(const nlohmann::json& j) {
    try {
        if (!j.is_object() || !j.contains("nodes") || !j.contains("edges"))
            throw Error(ErrorCode::InvalidNetwork, kModule, "network needs \"nodes\" and \"edges\"");
        auto nodes = j.at("nodes").get<std::vector<std::string>>();
        std::vector<std::pair<std::string, std::string>> edges;
        for (const auto& e : j.at("edges")) {
            if (!e.is_array() || e.size() != 2)
                throw Error(ErrorCode::InvalidNetwork, kModule, "each edge must be [\"u\",\"v\"]");
            edges.emplace_back(e[0].get<std::string>(), e[1].get<std::string>());
        }
        Network network{Dag::from_names(std::move(nodes), edges), {}};
        if (j.contains("descriptions"))
            network.descriptions = j.at("descriptions").get<std::map<std::string, std::string>>();
        return network;
    } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorCode::InvalidNetwork, kModule, std::string("malformed network: ") + ex.what());
    }
}

nlohmann::json network_to_json(const Dag& dag) {
    nlohmann::json j;
    j["nodes"] = dag.nodes();
    j["edges"] = nlohmann::json::array();
    for (const auto& [from, to] : dag.named_edges()) j["edges"].push_back({from, to});
    return j;
}

nlohmann::json network_to_json(const Network& network) {
    nlohmann::json j = network_to_json(network.dag);
    if (!network.descriptions.empty()) j["descriptions"] = network.descriptions;
    return j;
}

Network load_network(const std::string& source) {
    if (source == "asia") return {asia_fixture(), asia_descriptions()};
    std::ifstream in(source);
    if (!in) throw Error(ErrorCode::IoError, kModule, "cannot open network file: " + source);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorCode::InvalidNetwork, kModule, source + ": " + ex.what());
    }
    return network_from_json(j);
}

}  // namespace crowdcausal
