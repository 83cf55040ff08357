#include "crowdcausal/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <tuple>

#include "crowdcausal/error.hpp"
#include "crowdcausal/expert.hpp"

namespace crowdcausal {

namespace {
constexpr const char* kModule = "crowd-aggregation";

// Dirichlet pseudo-counts (alpha - 1) in (+, 0, -) order.
constexpr Triple kLinkedPseudo{2.0, 0.5, 0.5};
constexpr double kSpuriousPseudo = 1.0;  // 0.5 for each of +/-
constexpr double kAbsentPseudo = 2.0;

constexpr double kRhoMin = 1.0 / 3.0 + 0.01;
constexpr double kRhoMax = 0.999;
constexpr double kMuMin = 0.5;
constexpr double kVarMin = 1.25;
constexpr double kFMin = 0.1;
constexpr double kFMax = 10.0;
constexpr double kUnlinkedDifficulty = 0.5;

int value_slot(int y) { return y > 0 ? 0 : (y < 0 ? 2 : 1); }

Triple mirrored(const Triple& t) { return {t[2], t[1], t[0]}; }

// ρ = 1/3 + (2/3)(1 - exp(-f g)) solved for f.
double reliability_from_rho(double rho, double g) {
    return -std::log(1.0 - 1.5 * (rho - 1.0 / 3.0)) / g;
}

double log_sum_exp3(const Triple& x) {
    const double m = std::max({x[0], x[1], x[2]});
    return m + std::log(std::exp(x[0] - m) + std::exp(x[1] - m) + std::exp(x[2] - m));
}

std::vector<NodeIndex> node_map(const Dag& graph, const std::vector<std::string>& nodes) {
    if (graph.size() != nodes.size())
        throw Error(ErrorCode::NodeSetMismatch, kModule, "candidate graph has a different node set");
    std::vector<NodeIndex> map(nodes.size());
    for (NodeIndex i = 0; i < nodes.size(); ++i) {
        const auto found = graph.find(nodes[i]);
        if (!found) throw Error(ErrorCode::NodeSetMismatch, kModule, "candidate graph lacks node " + nodes[i]);
        map[i] = *found;
    }
    return map;
}

// Per slot: +1 / -1 when the candidate relates the canonical pair forward / backward,
// plus the difficulty g of the pair.
struct PairClasses {
    std::vector<int> sign;
    std::vector<double> g;
};

PairClasses classify_pairs(const ResponseData& data, const Dag& candidate) {
    const auto map = node_map(candidate, data.index.nodes());
    const auto& pairs = data.index.pairs();
    PairClasses out{std::vector<int>(pairs.size(), 0), std::vector<double>(pairs.size(), kUnlinkedDifficulty)};
    if (data.protocol == Protocol::EdgeWise) {
        // The edge-wise question asks about direct influence.
        for (std::size_t s = 0; s < pairs.size(); ++s)
            out.sign[s] = to_sign(candidate.relation(map[pairs[s].u], map[pairs[s].v]));
        return out;
    }
    const auto dist = path_length_matrix(candidate);
    const std::size_t n = candidate.size();
    for (std::size_t s = 0; s < pairs.size(); ++s) {
        const NodeIndex u = map[pairs[s].u], v = map[pairs[s].v];
        if (dist[u * n + v] > 0) {
            out.sign[s] = 1;
            out.g[s] = 1.0 / (1.0 + dist[u * n + v]);
        } else if (dist[v * n + u] > 0) {
            out.sign[s] = -1;
            out.g[s] = 1.0 / (1.0 + dist[v * n + u]);
        }
    }
    return out;
}

Triple class_mixing(int sign, const Triple& linked, double spurious) {
    if (sign > 0) return linked;
    if (sign < 0) return mirrored(linked);
    return {spurious / 2.0, 1.0 - spurious, spurious / 2.0};
}

double mixing_log_prior(const Triple& linked, double spurious) {
    double lp = 0.0;
    for (int k = 0; k < 3; ++k) lp += kLinkedPseudo[k] * std::log(linked[k]);
    lp += kSpuriousPseudo * std::log(spurious / 2.0) + kAbsentPseudo * std::log(1.0 - spurious);
    return lp;
}

// Log of the joint p(z, y) for the three mechanisms.
Triple edge_log_joint(const Triple& pi, double rho, int y) {
    const int yi = value_slot(y);
    Triple out{};
    for (int z = 0; z < 3; ++z) out[z] = std::log(pi[z]) + std::log(z == yi ? rho : (1.0 - rho) / 2.0);
    return out;
}

Triple order_log_joint(const Triple& pi, double mu, double var, int y) {
    const Triple means{mu, 0.0, -mu};
    const double norm = -0.5 * std::log(2.0 * std::numbers::pi * var);
    Triple out{};
    for (int z = 0; z < 3; ++z) {
        const double r = y - means[z];
        out[z] = std::log(pi[z]) + norm - r * r / (2.0 * var);
    }
    return out;
}

}  // namespace

std::map<std::string, KnowledgeSet> split_by_expert(const KnowledgeSet& responses) {
    std::map<std::string, KnowledgeSet> out;
    for (const Response& r : responses) out[r.expert_id].push_back(r);
    return out;
}

namespace {
std::vector<double> resolve_weights(std::size_t count, const std::vector<double>& weights) {
    if (count == 0) throw Error(ErrorCode::EmptyResponses, kModule, "no expert estimates to aggregate");
    if (weights.empty()) return std::vector<double>(count, 1.0);
    if (weights.size() != count)
        throw Error(ErrorCode::ConfigError, kModule, "weight count differs from estimate count");
    double total = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0) || !std::isfinite(w))
            throw Error(ErrorCode::ConfigError, kModule, "expert weights must be finite and nonnegative");
        total += w;
    }
    if (total <= 0.0) throw Error(ErrorCode::AllZeroWeights, kModule, "all expert weights are zero");
    return weights;
}

Dag project_votes(const std::vector<std::string>& nodes, const std::vector<Triple>& votes, double total) {
    const auto pairs = canonical_pairs(nodes);
    std::vector<PairWeight> weights;
    weights.reserve(pairs.size());
    for (std::size_t s = 0; s < pairs.size(); ++s) {
        const double vf = votes[s][0] / total, vb = votes[s][2] / total;
        weights.push_back({pairs[s].u, pairs[s].v, vf - vb, std::max(vf, vb)});
    }
    return project_to_dag(nodes, weights);
}
}  // namespace

Dag aggregate_expert_level(const std::vector<Dag>& estimates, const std::vector<double>& weights) {
    const auto w = resolve_weights(estimates.size(), weights);
    const auto& nodes = estimates.front().nodes();
    const PairIndex index(nodes);
    std::vector<Triple> votes(index.size(), Triple{0, 0, 0});
    for (std::size_t m = 0; m < estimates.size(); ++m) {
        if (!estimates[m].same_nodes(estimates.front()))
            throw Error(ErrorCode::NodeSetMismatch, kModule, "expert estimates use different node sets");
        const auto map = node_map(estimates[m], nodes);
        for (std::size_t s = 0; s < index.size(); ++s) {
            const auto& p = index.pairs()[s];
            votes[s][value_slot(to_sign(estimates[m].relation(map[p.u], map[p.v])))] += w[m];
        }
    }
    return project_votes(nodes, votes, std::accumulate(w.begin(), w.end(), 0.0));
}

Dag aggregate_expert_level(const std::vector<EdgePosterior>& estimates, const std::vector<double>& weights) {
    const auto w = resolve_weights(estimates.size(), weights);
    const auto& nodes = estimates.front().index().nodes();
    std::vector<Triple> votes(estimates.front().index().size(), Triple{0, 0, 0});
    for (std::size_t m = 0; m < estimates.size(); ++m) {
        if (estimates[m].index().nodes() != nodes)
            throw Error(ErrorCode::NodeSetMismatch, kModule, "expert posteriors use different node sets");
        for (std::size_t s = 0; s < votes.size(); ++s) {
            const Triple p = estimates[m].probabilities(s);
            for (int k = 0; k < 3; ++k) votes[s][k] += w[m] * p[k];
        }
    }
    return project_votes(nodes, votes, std::accumulate(w.begin(), w.end(), 0.0));
}

Dag individual_map_graph(const KnowledgeSet& responses, const std::vector<std::string>& nodes) {
    if (responses.empty()) return Dag(nodes);
    if (responses.front().protocol == Protocol::EdgeWise) return infer_edgewise(responses, nodes).graph;
    return ordering_map_graph(responses, nodes);
}

ResponseData ResponseData::build(const KnowledgeSet& responses, const std::vector<std::string>& nodes) {
    if (responses.empty()) throw Error(ErrorCode::EmptyResponses, kModule, "no responses to aggregate");
    ResponseData data;
    data.protocol = responses.front().protocol;
    require_protocol(responses, data.protocol, kModule);
    data.index = PairIndex(nodes);
    for (const Response& r : responses) data.experts.push_back(r.expert_id);
    std::sort(data.experts.begin(), data.experts.end());
    data.experts.erase(std::unique(data.experts.begin(), data.experts.end()), data.experts.end());

    std::map<std::tuple<std::size_t, std::size_t, int>, double> counts;
    for (const Response& r : responses) {
        const auto expert = static_cast<std::size_t>(
            std::lower_bound(data.experts.begin(), data.experts.end(), r.expert_id) - data.experts.begin());
        counts[{data.index.slot(r.query), expert, r.value}] += 1.0;
    }
    data.groups.reserve(counts.size());
    for (const auto& [key, count] : counts)
        data.groups.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), count});
    data.total = responses.size();
    return data;
}

nlohmann::json MixtureParams::to_json() const {
    nlohmann::json experts_json = nlohmann::json::object();
    for (std::size_t m = 0; m < experts.size(); ++m) {
        nlohmann::json e{{"f", f[m]}};
        if (protocol == Protocol::EdgeWise) e["rho"] = rho[m];
        experts_json[experts[m]] = e;
    }
    nlohmann::json out{{"protocol", to_string(protocol)},
                       {"linked_mixing", linked},
                       {"spurious_rate", spurious},
                       {"experts", experts_json}};
    if (protocol == Protocol::OrderingWise) {
        out["mu"] = mu;
        out["sigma"] = sigma;
    }
    return out;
}

EmFit em_fit(const ResponseData& data, const Dag& candidate, const EmOptions& options) {
    if (data.groups.empty()) throw Error(ErrorCode::EmptyResponses, kModule, "no responses to fit");
    const PairClasses classes = classify_pairs(data, candidate);
    const std::size_t experts = data.experts.size();
    const bool edgewise = data.protocol == Protocol::EdgeWise;

    MixtureParams p;
    p.protocol = data.protocol;
    p.nodes = data.index.nodes();
    p.experts = data.experts;
    p.g = classes.g;
    p.rho.assign(experts, 0.8);
    p.f.assign(experts, 1.0);

    // The likelihood depends on a response only through (class, difficulty, expert, value),
    // so responses are pooled by that key.
    struct Cell {
        int sign;
        double g;
        std::size_t expert;
        int y;
        double count;
    };
    std::vector<Cell> cells;
    {
        std::map<std::tuple<int, double, std::size_t, int>, double> pooled;
        for (const auto& grp : data.groups)
            pooled[{classes.sign[grp.slot], classes.g[grp.slot], grp.expert, grp.y}] += grp.count;
        cells.reserve(pooled.size());
        for (const auto& [key, count] : pooled)
            cells.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), std::get<3>(key), count});
    }

    std::vector<Triple> resp(cells.size());
    EmFit fit;
    double previous = -std::numeric_limits<double>::infinity();

    for (int iteration = 0;; ++iteration) {
        // E-step at the current parameters.
        const Triple class_pi[3] = {class_mixing(-1, p.linked, p.spurious), class_mixing(0, p.linked, p.spurious),
                                    class_mixing(1, p.linked, p.spurious)};
        const double var = p.sigma * p.sigma;
        double loglik = 0.0;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            const auto& grp = cells[i];
            const Triple& pi = class_pi[grp.sign + 1];
            const Triple joint = edgewise
                                     ? edge_log_joint(pi, p.rho[grp.expert], grp.y)
                                     : order_log_joint(pi, p.mu, var / (p.f[grp.expert] * grp.g), grp.y);
            const double lse = log_sum_exp3(joint);
            loglik += grp.count * lse;
            for (int z = 0; z < 3; ++z) resp[i][z] = std::exp(joint[z] - lse);
        }
        const double prior = mixing_log_prior(p.linked, p.spurious);
        const double objective = loglik + prior;
        fit.objective_trace.push_back(objective);
        fit.log_likelihood = loglik;
        fit.log_prior = prior;
        fit.objective = objective;
        fit.iterations = iteration;

        const bool converged = iteration > 0 && std::abs(objective - previous) <=
                                                    options.tolerance * std::max(1.0, std::abs(objective));
        if (converged || iteration >= options.max_iterations) break;
        previous = objective;

        // M-step: mixing weights (MAP under the Dirichlet priors).
        Triple linked_counts{0, 0, 0};
        double spurious_count = 0.0, absent_count = 0.0;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            const auto& grp = cells[i];
            const int sign = grp.sign;
            const Triple& r = resp[i];
            if (sign > 0) {
                for (int z = 0; z < 3; ++z) linked_counts[z] += grp.count * r[z];
            } else if (sign < 0) {
                for (int z = 0; z < 3; ++z) linked_counts[2 - z] += grp.count * r[z];
            } else {
                spurious_count += grp.count * (r[0] + r[2]);
                absent_count += grp.count * r[1];
            }
        }
        const double linked_total = linked_counts[0] + linked_counts[1] + linked_counts[2] + kLinkedPseudo[0] +
                                    kLinkedPseudo[1] + kLinkedPseudo[2];
        for (int z = 0; z < 3; ++z) p.linked[z] = (linked_counts[z] + kLinkedPseudo[z]) / linked_total;
        p.spurious = (spurious_count + kSpuriousPseudo) /
                     (spurious_count + absent_count + kSpuriousPseudo + kAbsentPseudo);

        if (edgewise) {
            std::vector<double> match(experts, 0.0), total(experts, 0.0);
            for (std::size_t i = 0; i < cells.size(); ++i) {
                const auto& grp = cells[i];
                match[grp.expert] += grp.count * resp[i][value_slot(grp.y)];
                total[grp.expert] += grp.count;
            }
            for (std::size_t m = 0; m < experts; ++m) p.rho[m] = std::clamp(match[m] / total[m], kRhoMin, kRhoMax);
            continue;
        }

        // Ordering-wise: exact coordinate updates of mu, sigma^2, then f.
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            const auto& grp = cells[i];
            const double w = grp.count * p.f[grp.expert] * grp.g;
            num += w * (resp[i][0] - resp[i][2]) * grp.y;
            den += w * (resp[i][0] + resp[i][2]);
        }
        if (den > 0.0) p.mu = std::max(kMuMin, num / den);

        const Triple means{p.mu, 0.0, -p.mu};
        std::vector<double> sq(cells.size());
        for (std::size_t i = 0; i < cells.size(); ++i) {
            double s = 0.0;
            for (int z = 0; z < 3; ++z) s += resp[i][z] * (cells[i].y - means[z]) * (cells[i].y - means[z]);
            sq[i] = s;
        }
        double ss = 0.0;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            const auto& grp = cells[i];
            ss += grp.count * sq[i] * p.f[grp.expert] * grp.g;
        }
        p.sigma = std::sqrt(std::max(kVarMin, ss / static_cast<double>(data.total)));

        std::vector<double> expert_ss(experts, 0.0), expert_n(experts, 0.0);
        for (std::size_t i = 0; i < cells.size(); ++i) {
            const auto& grp = cells[i];
            expert_ss[grp.expert] += grp.count * sq[i] * grp.g;
            expert_n[grp.expert] += grp.count;
        }
        const double var_new = p.sigma * p.sigma;
        for (std::size_t m = 0; m < experts; ++m)
            p.f[m] = expert_ss[m] > 0.0 ? std::clamp(expert_n[m] * var_new / expert_ss[m], kFMin, kFMax) : kFMax;
    }

    if (edgewise)
        for (std::size_t m = 0; m < experts; ++m) p.f[m] = reliability_from_rho(p.rho[m], kUnlinkedDifficulty);
    p.pi.resize(classes.sign.size());
    for (std::size_t s = 0; s < classes.sign.size(); ++s) p.pi[s] = class_mixing(classes.sign[s], p.linked, p.spurious);
    fit.params = std::move(p);
    return fit;
}

EmFit em_fit(const KnowledgeSet& responses, const Dag& candidate, const EmOptions& options) {
    return em_fit(ResponseData::build(responses, candidate.nodes()), candidate, options);
}

Triple responsibilities(const MixtureParams& params, const Response& response) {
    if (response.protocol != params.protocol)
        throw Error(ErrorCode::ProtocolMismatch, kModule, "response protocol differs from the fitted model");
    const PairIndex index(params.nodes);
    const std::size_t slot = index.slot(response.query);
    const auto it = std::lower_bound(params.experts.begin(), params.experts.end(), response.expert_id);
    if (it == params.experts.end() || *it != response.expert_id)
        throw Error(ErrorCode::ConfigError, kModule, "expert " + response.expert_id + " is not part of the fit");
    const auto m = static_cast<std::size_t>(it - params.experts.begin());
    const Triple joint = params.protocol == Protocol::EdgeWise
                             ? edge_log_joint(params.pi[slot], params.rho[m], response.value)
                             : order_log_joint(params.pi[slot], params.mu,
                                               params.sigma * params.sigma / (params.f[m] * params.g[slot]),
                                               response.value);
    const double lse = log_sum_exp3(joint);
    return {std::exp(joint[0] - lse), std::exp(joint[1] - lse), std::exp(joint[2] - lse)};
}

double default_edge_penalty(std::size_t total_responses) {
    return 0.5 * std::log(static_cast<double>(std::max<std::size_t>(total_responses, 1)));
}

double score_graph(const ResponseData& data, const Dag& graph, double penalty, const EmOptions& options) {
    return em_fit(data, graph, options).objective - penalty * static_cast<double>(graph.edge_count());
}

nlohmann::json CandidateState::report() const {
    nlohmann::json moves_json = nlohmann::json::array();
    for (const auto& m : moves)
        moves_json.push_back({{"restart", m.restart}, {"move", m.kind}, {"u", m.u}, {"v", m.v}, {"score", m.score}});
    return {{"graph", network_to_json(graph)},
            {"score", score},
            {"log_likelihood", fit.log_likelihood},
            {"objective", fit.objective},
            {"em_iterations", fit.iterations},
            {"params", fit.params.to_json()},
            {"moves", moves_json},
            {"evaluations", evaluations}};
}

namespace {

// Mutable adjacency over the data's node order, used only inside the search.
class SearchGraph {
public:
    explicit SearchGraph(std::size_t n) : n_(n), adj_(n * n, 0) {}

    bool has(NodeIndex u, NodeIndex v) const { return adj_[u * n_ + v] != 0; }
    void set(NodeIndex u, NodeIndex v, bool on) { adj_[u * n_ + v] = on ? 1 : 0; }

    bool reaches(NodeIndex from, NodeIndex to) const {
        std::vector<NodeIndex> stack{from};
        std::vector<unsigned char> seen(n_, 0);
        seen[from] = 1;
        while (!stack.empty()) {
            const NodeIndex x = stack.back();
            stack.pop_back();
            for (NodeIndex y = 0; y < n_; ++y) {
                if (!has(x, y) || seen[y]) continue;
                if (y == to) return true;
                seen[y] = 1;
                stack.push_back(y);
            }
        }
        return false;
    }

    std::vector<Edge> edges() const {
        std::vector<Edge> out;
        for (NodeIndex u = 0; u < n_; ++u)
            for (NodeIndex v = 0; v < n_; ++v)
                if (has(u, v)) out.push_back({u, v});
        return out;
    }

private:
    std::size_t n_;
    std::vector<unsigned char> adj_;
};

class Scorer {
public:
    Scorer(const ResponseData& data, double penalty, const EmOptions& options)
        : data_(data), penalty_(penalty), options_(options) {}

    double operator()(const std::vector<Edge>& edges) {
        auto it = cache_.find(edges);
        if (it != cache_.end()) return it->second;
        ++evaluations;
        const double score = score_graph(data_, Dag(data_.index.nodes(), edges), penalty_, options_);
        cache_.emplace(edges, score);
        return score;
    }

    int evaluations = 0;

private:
    const ResponseData& data_;
    double penalty_;
    EmOptions options_;
    std::map<std::vector<Edge>, double> cache_;
};

struct ClimbResult {
    SearchGraph graph;
    double score;
};

ClimbResult climb(SearchGraph graph, Scorer& scorer, const ResponseData& data, int restart, int max_steps,
                  std::vector<SearchMove>& trace) {
    const auto& pairs = data.index.pairs();
    const auto& names = data.index.nodes();
    double current = scorer(graph.edges());
    enum Kind { Delete, Reverse, Add };

    for (int step = 0; step < max_steps; ++step) {
        double best = current;
        std::optional<std::tuple<Kind, NodeIndex, NodeIndex>> best_move;
        auto consider = [&](Kind kind, NodeIndex u, NodeIndex v, SearchGraph& g) {
            const double s = scorer(g.edges());
            if (s > best + 1e-9) {
                best = s;
                best_move = std::make_tuple(kind, u, v);
            }
        };
        // Delete, then reverse, then add; lexicographic pairs within each kind.
        for (Kind kind : {Delete, Reverse, Add}) {
            for (const NodePair& p : pairs) {
                for (auto [u, v] : {std::pair{p.u, p.v}, std::pair{p.v, p.u}}) {
                    if (kind == Add) {
                        if (graph.has(u, v) || graph.has(v, u) || graph.reaches(v, u)) continue;
                        graph.set(u, v, true);
                        consider(kind, u, v, graph);
                        graph.set(u, v, false);
                        continue;
                    }
                    if (!graph.has(u, v)) continue;
                    graph.set(u, v, false);
                    if (kind == Delete) {
                        consider(kind, u, v, graph);
                    } else if (!graph.reaches(u, v)) {
                        graph.set(v, u, true);
                        consider(kind, v, u, graph);
                        graph.set(v, u, false);
                    }
                    graph.set(u, v, true);
                }
            }
        }
        if (!best_move) break;
        const auto [kind, u, v] = *best_move;
        if (kind == Delete) graph.set(u, v, false);
        if (kind == Reverse) {
            graph.set(v, u, false);
            graph.set(u, v, true);
        }
        if (kind == Add) graph.set(u, v, true);
        current = best;
        static const char* kKindNames[] = {"delete", "reverse", "add"};
        trace.push_back({restart, kKindNames[kind], names[u], names[v], current});
    }
    return {std::move(graph), current};
}

SearchGraph consistent_graph(const ResponseData& data, const std::vector<double>& vote,
                             const std::vector<std::size_t>& position) {
    SearchGraph g(data.index.nodes().size());
    for (std::size_t s = 0; s < data.index.size(); ++s) {
        const auto& p = data.index.pairs()[s];
        if (vote[s] > 0 && position[p.u] < position[p.v]) g.set(p.u, p.v, true);
        if (vote[s] < 0 && position[p.v] < position[p.u]) g.set(p.v, p.u, true);
    }
    return g;
}

}  // namespace

CandidateState structure_search(const ResponseData& data, const Dag& init, const SearchOptions& options) {
    if (data.groups.empty()) throw Error(ErrorCode::EmptyResponses, kModule, "no responses to search over");
    if (options.restarts < 1) throw Error(ErrorCode::ConfigError, kModule, "restarts must be >= 1");
    const auto& nodes = data.index.nodes();
    const std::size_t n = nodes.size();
    const auto map = node_map(init, nodes);
    const double penalty = options.penalty.value_or(default_edge_penalty(data.total));

    std::vector<NodeIndex> inverse(n);
    for (NodeIndex i = 0; i < n; ++i) inverse[map[i]] = i;
    SearchGraph start(n);
    for (const Edge& e : init.edges()) start.set(inverse[e.from], inverse[e.to], true);

    std::vector<double> vote(data.index.size(), 0.0);
    for (const auto& grp : data.groups) vote[grp.slot] += grp.count * grp.y;

    Scorer scorer(data, penalty, options.em);
    CandidateState state;
    std::optional<ClimbResult> best;
    Rng rng(options.seed);
    for (int r = 0; r < options.restarts; ++r) {
        SearchGraph from = start;
        if (r > 0) {
            std::vector<std::size_t> order(n);
            std::iota(order.begin(), order.end(), 0);
            std::shuffle(order.begin(), order.end(), rng);
            std::vector<std::size_t> position(n);
            for (std::size_t k = 0; k < n; ++k) position[order[k]] = k;
            from = consistent_graph(data, vote, position);
        }
        ClimbResult result = climb(std::move(from), scorer, data, r, options.max_steps, state.moves);
        if (!best || result.score > best->score + 1e-9) best = std::move(result);
    }

    state.graph = Dag(nodes, best->graph.edges());
    state.score = best->score;
    state.fit = em_fit(data, state.graph, options.em);
    state.evaluations = scorer.evaluations;
    return state;
}

CandidateState structure_search(const KnowledgeSet& responses, const Dag& init, const SearchOptions& options) {
    return structure_search(ResponseData::build(responses, init.nodes()), init, options);
}

CandidateState query_level_aggregate(const KnowledgeSet& responses, const std::vector<std::string>& nodes,
                                     const SearchOptions& options) {
    const ResponseData data = ResponseData::build(responses, nodes);
    std::vector<Dag> individual;
    for (const auto& [expert, own] : split_by_expert(responses)) individual.push_back(individual_map_graph(own, nodes));
    return structure_search(data, aggregate_expert_level(individual), options);
}

}  // namespace crowdcausal
