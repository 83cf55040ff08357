#pragma once

#include <compare>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace crowdcausal {

using NodeIndex = std::size_t;

/// Relation of an ordered pair (u, v): u->v, v->u, or no direct link.
enum class PairRelation { Forward, Backward, None };

int to_sign(PairRelation relation) noexcept;
PairRelation relation_from_sign(int sign) noexcept;
PairRelation reversed(PairRelation relation) noexcept;

struct Edge {
    NodeIndex from = 0;
    NodeIndex to = 0;
    auto operator<=>(const Edge&) const = default;
};

/// Unordered pair stored in canonical orientation: name(u) < name(v).
struct NodePair {
    NodeIndex u = 0;
    NodeIndex v = 0;
    auto operator<=>(const NodePair&) const = default;
};

/// All unordered pairs of `nodes`, canonically oriented and sorted
/// lexicographically by (name(u), name(v)).
std::vector<NodePair> canonical_pairs(std::span<const std::string> nodes);

/// Returns one directed cycle as a node sequence (first node not repeated), if any.
std::optional<std::vector<NodeIndex>> find_directed_cycle(std::size_t node_count,
                                                          std::span<const Edge> edges);

/// Shortest directed path length in an arbitrary digraph given as child lists.
std::optional<int> shortest_path_length(const std::vector<std::vector<NodeIndex>>& children,
                                        NodeIndex from, NodeIndex to);

/// Immutable directed acyclic graph over named variables.
///
/// Construction validates node names (unique, non-empty), edge endpoints, self-loops and
/// duplicates, and rejects any directed cycle with CycleError naming the cycle.
class Dag {
public:
    Dag() = default;
    Dag(std::vector<std::string> nodes, std::vector<Edge> edges);
    explicit Dag(std::vector<std::string> nodes) : Dag(std::move(nodes), {}) {}

    static Dag from_names(std::vector<std::string> nodes,
                          const std::vector<std::pair<std::string, std::string>>& edges);

    const std::vector<std::string>& nodes() const noexcept { return nodes_; }
    std::size_t size() const noexcept { return nodes_.size(); }
    const std::string& name(NodeIndex i) const { return nodes_.at(i); }

    /// Sorted by (from, to).
    const std::vector<Edge>& edges() const noexcept { return edges_; }
    std::size_t edge_count() const noexcept { return edges_.size(); }

    std::optional<NodeIndex> find(std::string_view name) const;
    NodeIndex index_of(std::string_view name) const;  // throws UnknownNode

    bool has_edge(NodeIndex from, NodeIndex to) const {
        return adjacency_[from * nodes_.size() + to] != 0;
    }
    bool has_edge(std::string_view from, std::string_view to) const {
        return has_edge(index_of(from), index_of(to));
    }
    PairRelation relation(NodeIndex u, NodeIndex v) const;

    const std::vector<NodeIndex>& children(NodeIndex i) const { return children_.at(i); }
    const std::vector<NodeIndex>& parents(NodeIndex i) const { return parents_.at(i); }

    bool same_nodes(const Dag& other) const;

    /// Same nodes, different edge set (validated).
    Dag with_edges(std::vector<Edge> edges) const { return Dag(nodes_, std::move(edges)); }

    std::vector<std::pair<std::string, std::string>> named_edges() const;

    friend bool operator==(const Dag& a, const Dag& b) {
        return a.nodes_ == b.nodes_ && a.edges_ == b.edges_;
    }

private:
    std::vector<std::string> nodes_;
    std::vector<Edge> edges_;
    std::vector<unsigned char> adjacency_;
    std::vector<std::vector<NodeIndex>> children_;
    std::vector<std::vector<NodeIndex>> parents_;
    std::map<std::string, NodeIndex, std::less<>> index_;
};

/// Kahn's algorithm; among ready nodes the smallest name goes first.
std::vector<std::string> topological_order(const Dag& dag);
std::vector<NodeIndex> topological_indices(std::span<const std::string> nodes,
                                           std::span<const Edge> edges);

/// Minimal number of edges on a directed path u -> ... -> v.
std::optional<int> reachable(const Dag& dag, std::string_view u, std::string_view v);
std::optional<int> reachable(const Dag& dag, NodeIndex u, NodeIndex v);

/// All-pairs shortest directed path lengths; -1 for unreachable (diagonal 0).
std::vector<int> path_length_matrix(const Dag& dag);

/// Longest path from any root, per node.
std::vector<int> longest_path_depth(const Dag& dag);

Dag transitive_reduction(const Dag& dag);

/// Signed confidence for one pair; positive weight favors u -> v.
struct PairWeight {
    NodeIndex u = 0;
    NodeIndex v = 0;
    double weight = 0.0;
    std::optional<double> confidence;  // defaults to |weight|
};

inline constexpr double kDefaultEdgeThreshold = 0.5;

/// Greedy acyclic projection: candidates with confidence >= threshold are inserted by
/// decreasing |weight| (ties in lexicographic pair order); an edge that would close a
/// cycle is skipped.
Dag project_to_dag(std::vector<std::string> nodes, std::span<const PairWeight> weights,
                   double threshold = kDefaultEdgeThreshold);

/// Every labeled DAG on n <= 4 nodes named "A", "B", ...
std::vector<Dag> enumerate_dags(int n);

/// The eight-node, eight-edge Asia chest-clinic network.
Dag asia_fixture();

/// Human-readable variable descriptions for the Asia fixture.
std::map<std::string, std::string> asia_descriptions();

struct Network {
    Dag dag;
    std::map<std::string, std::string> descriptions;

    std::string describe(const std::string& node) const;
};

/// {"nodes": [...], "edges": [["u","v"], ...], "descriptions": {...}}
Network network_from_json(const nlohmann::json& j);
nlohmann::json network_to_json(const Dag& dag);
nlohmann::json network_to_json(const Network& network);

/// Loads a network file, or the built-in fixture when `source` is "asia".
Network load_network(const std::string& source);

}  // namespace crowdcausal
