#include "crowdcausal/expert.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "crowdcausal/error.hpp"

namespace crowdcausal {

namespace {
constexpr const char* kModule = "expert-sim";

double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

PairRelation random_direction(Rng& rng) {
    return uniform01(rng) < 0.5 ? PairRelation::Forward : PairRelation::Backward;
}
}  // namespace

std::string to_string(Archetype archetype) {
    switch (archetype) {
        case Archetype::Omniscient: return "Omniscient";
        case Archetype::PerfectIncomplete: return "PerfectIncomplete";
        case Archetype::Imperfect: return "Imperfect";
        case Archetype::Uncertain: return "Uncertain";
        case Archetype::BadActor: return "BadActor";
    }
    return "?";
}

// Case-insensitive; "-" and "_" are ignored, so "perfect-incomplete" also matches.
Archetype archetype_from_string(const std::string& text) {
    auto fold = [](const std::string& s) {
        std::string out;
        for (unsigned char c : s)
            if (c != '-' && c != '_') out += static_cast<char>(std::tolower(c));
        return out;
    };
    for (Archetype a : {Archetype::Omniscient, Archetype::PerfectIncomplete, Archetype::Imperfect,
                        Archetype::Uncertain, Archetype::BadActor})
        if (fold(to_string(a)) == fold(text)) return a;
    throw Error(ErrorCode::ConfigError, kModule, "unknown archetype: " + text);
}

void ExpertProfile::validate() const {
    for (double x : {completeness, validity, confidence, trustworthiness})
        if (!(x >= 0.0 && x <= 1.0))
            throw Error(ErrorCode::ConfigError, kModule, "profile dimensions must lie in [0, 1]");
}

ExpertProfile make_profile(Archetype archetype) {
    switch (archetype) {
        case Archetype::Omniscient: return {1.0, 1.0, 1.0, 1.0, archetype};
        case Archetype::PerfectIncomplete: return {0.4, 1.0, 0.9, 1.0, archetype};
        case Archetype::Imperfect: return {0.8, 0.7, 0.7, 0.9, archetype};
        case Archetype::Uncertain: return {0.7, 0.85, 0.3, 1.0, archetype};
        case Archetype::BadActor: return {0.9, 0.2, 0.9, 0.1, archetype};
    }
    return {};
}

BeliefGraph::BeliefGraph(std::vector<std::string> nodes)
    : nodes_(std::move(nodes)),
      relation_(nodes_.size() * nodes_.size(), 0),
      known_(nodes_.size() * nodes_.size(), 0),
      children_(nodes_.size()) {}

void BeliefGraph::set(NodeIndex u, NodeIndex v, PairRelation relation) {
    const std::size_t n = size();
    auto drop_child = [&](NodeIndex from, NodeIndex to) {
        auto& c = children_[from];
        c.erase(std::remove(c.begin(), c.end(), to), c.end());
    };
    drop_child(u, v);
    drop_child(v, u);
    const int sign = to_sign(relation);
    relation_[u * n + v] = static_cast<signed char>(sign);
    relation_[v * n + u] = static_cast<signed char>(-sign);
    known_[u * n + v] = known_[v * n + u] = 1;
    if (sign > 0) children_[u].push_back(v);
    if (sign < 0) children_[v].push_back(u);
}

PairRelation BeliefGraph::relation(NodeIndex u, NodeIndex v) const {
    return relation_from_sign(relation_[u * size() + v]);
}

std::vector<Edge> BeliefGraph::asserted_edges() const {
    std::vector<Edge> out;
    for (NodeIndex u = 0; u < size(); ++u)
        for (NodeIndex v : children_[u]) out.push_back({u, v});
    std::sort(out.begin(), out.end());
    return out;
}

std::size_t BeliefGraph::known_count() const {
    std::size_t count = 0;
    for (NodeIndex u = 0; u < size(); ++u)
        for (NodeIndex v = u + 1; v < size(); ++v) count += known(u, v);
    return count;
}

std::optional<int> BeliefGraph::path_length(NodeIndex from, NodeIndex to) const {
    if (from == to) return std::nullopt;
    return shortest_path_length(children_, from, to);
}

BeliefGraph sample_belief_graph(const ExpertProfile& profile, const Dag& truth, Rng& rng) {
    profile.validate();
    BeliefGraph belief(truth.nodes());
    const double spurious = profile.spurious_rate();
    const bool adversarial = profile.trustworthiness < 0.5;
    for (const NodePair& p : canonical_pairs(truth.nodes())) {
        if (!(uniform01(rng) < profile.completeness)) continue;
        const PairRelation actual = truth.relation(p.u, p.v);
        PairRelation believed = PairRelation::None;
        if (actual != PairRelation::None) {
            if (uniform01(rng) < profile.validity)
                believed = actual;
            else
                believed = uniform01(rng) < 0.5 ? reversed(actual) : PairRelation::None;
        } else if (uniform01(rng) < spurious) {
            believed = random_direction(rng);
        }
        if (adversarial && uniform01(rng) < 1.0 - profile.trustworthiness)
            believed = believed == PairRelation::None ? random_direction(rng) : reversed(believed);
        belief.set(p.u, p.v, believed);
    }
    return belief;
}

int answer_edge(const ExpertProfile& profile, const BeliefGraph& belief, NodeIndex u, NodeIndex v, Rng& rng) {
    const bool speaks = uniform01(rng) < profile.confidence;
    if (!belief.known(u, v) || !speaks) return 0;
    return to_sign(belief.relation(u, v));
}

int answer_order(const ExpertProfile& profile, const BeliefGraph& belief, NodeIndex u, NodeIndex v, Rng& rng) {
    const double n = static_cast<double>(belief.size());
    auto strength = [&](std::optional<int> length) {
        return length ? 10.0 * (1.0 - (*length - 1) / n) : 0.0;
    };
    // Cyclic beliefs may connect both ways; the stronger direction wins.
    const double base = strength(belief.path_length(u, v)) - strength(belief.path_length(v, u));
    const double noise_sd = 2.0 * (1.0 - profile.validity);
    const double eps = std::normal_distribution<double>(0.0, 1.0)(rng) * noise_sd;
    const double raw = std::round(profile.confidence * base + eps);
    return static_cast<int>(std::clamp(raw, -10.0, 10.0));
}

std::vector<ExpertSpec> crowd_from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw Error(ErrorCode::ConfigError, kModule, "crowd must be a JSON array");
    std::vector<ExpertSpec> crowd;
    try {
        for (std::size_t i = 0; i < j.size(); ++i) {
            const auto& entry = j[i];
            const std::string id = entry.value("expert_id", "expert" + std::to_string(i + 1));
            ExpertProfile profile;
            if (entry.contains("archetype")) {
                profile = make_profile(archetype_from_string(entry.at("archetype").get<std::string>()));
            } else if (entry.contains("profile")) {
                const auto& p = entry.at("profile");
                profile.completeness = p.at("completeness").get<double>();
                profile.validity = p.at("validity").get<double>();
                profile.confidence = p.at("confidence").get<double>();
                profile.trustworthiness = p.at("trustworthiness").get<double>();
            } else {
                throw Error(ErrorCode::ConfigError, kModule,
                            "crowd[" + std::to_string(i) + "] needs \"archetype\" or \"profile\"");
            }
            profile.validate();
            const auto seed = entry.value("seed", static_cast<std::uint64_t>(i + 1));
            const int count = entry.value("count", 1);
            if (count < 1)
                throw Error(ErrorCode::ConfigError, kModule, "crowd[" + std::to_string(i) + "].count must be >= 1");
            if (count == 1) {
                crowd.push_back({id, profile, seed});
            } else {
                for (int k = 0; k < count; ++k)
                    crowd.push_back({id + "-" + std::to_string(k + 1), profile, seed + static_cast<std::uint64_t>(k)});
            }
        }
    } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorCode::ConfigError, kModule, std::string("malformed crowd: ") + ex.what());
    }
    return crowd;
}

nlohmann::json crowd_to_json(const std::vector<ExpertSpec>& crowd) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& e : crowd) {
        nlohmann::json entry{{"expert_id", e.expert_id}, {"seed", e.seed}};
        if (e.profile.archetype) {
            entry["archetype"] = to_string(*e.profile.archetype);
        } else {
            entry["profile"] = {{"completeness", e.profile.completeness},
                                {"validity", e.profile.validity},
                                {"confidence", e.profile.confidence},
                                {"trustworthiness", e.profile.trustworthiness}};
        }
        out.push_back(std::move(entry));
    }
    return out;
}

SimulatedExpert::SimulatedExpert(std::string id, ExpertProfile profile, const Dag& truth, Rng rng)
    : id_(std::move(id)), profile_(profile), truth_(truth), rng_(std::move(rng)) {
    belief_ = sample_belief_graph(profile_, truth, rng_);
}

Response SimulatedExpert::answer(const Query& query, Protocol protocol) {
    const NodeIndex u = truth_.index_of(query.u);
    const NodeIndex v = truth_.index_of(query.v);
    const int value = protocol == Protocol::EdgeWise ? answer_edge(profile_, belief_, u, v, rng_)
                                                     : answer_order(profile_, belief_, u, v, rng_);
    return make_response(id_, query, protocol, value);
}

KnowledgeSet SimulatedExpert::answer_all(const std::vector<Query>& queries, Protocol protocol) {
    KnowledgeSet out;
    out.reserve(queries.size());
    for (const Query& q : queries) out.push_back(answer(q, protocol));
    return out;
}

Rng expert_rng(std::uint64_t run_seed, std::uint64_t expert_seed) {
    std::seed_seq seq{static_cast<std::uint32_t>(run_seed), static_cast<std::uint32_t>(run_seed >> 32),
                      static_cast<std::uint32_t>(expert_seed), static_cast<std::uint32_t>(expert_seed >> 32)};
    return Rng(seq);
}

std::vector<Query> all_pair_queries(const Dag& dag) {
    std::vector<Query> out;
    for (const NodePair& p : canonical_pairs(dag.nodes())) out.emplace_back(dag.name(p.u), dag.name(p.v));
    return out;
}

}  // namespace crowdcausal
