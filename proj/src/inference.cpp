#include "crowdcausal/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "crowdcausal/error.hpp"

namespace crowdcausal {

namespace {
constexpr const char* kModule = "single-expert-inference";
constexpr double kScale = 10.0;

int outcome_slot(int value) { return value > 0 ? 0 : (value < 0 ? 2 : 1); }
}  // namespace

PairIndex::PairIndex(std::vector<std::string> nodes) : nodes_(std::move(nodes)) {
    const std::size_t n = nodes_.size();
    pairs_ = canonical_pairs(nodes_);
    slot_.assign(n * n, static_cast<std::size_t>(-1));
    for (std::size_t s = 0; s < pairs_.size(); ++s) {
        slot_[pairs_[s].u * n + pairs_[s].v] = s;
        slot_[pairs_[s].v * n + pairs_[s].u] = s;
    }
    for (NodeIndex i = 0; i < n; ++i) index_.emplace(nodes_[i], i);
}

NodeIndex PairIndex::node(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error(ErrorCode::UnknownNode, kModule, "unknown node: " + name);
    return it->second;
}

std::size_t PairIndex::slot(const Query& query) const { return slot(node(query.u), node(query.v)); }

EdgePosterior::EdgePosterior(std::vector<std::string> nodes, Triple pseudocounts)
    : index_(std::move(nodes)), pseudocounts_(pseudocounts), counts_(index_.size(), Triple{0, 0, 0}) {
    for (double a : pseudocounts_)
        if (!(a > 0.0)) throw Error(ErrorCode::ConfigError, kModule, "pseudocounts must be positive");
}

void EdgePosterior::observe(std::size_t slot, int value) {
    if (value < -1 || value > 1) throw Error(ErrorCode::OutOfRange, kModule, "edge-wise value must be -1, 0 or 1");
    counts_.at(slot)[outcome_slot(value)] += 1.0;
}

void EdgePosterior::observe(const Response& response) {
    if (response.protocol != Protocol::EdgeWise)
        throw Error(ErrorCode::ProtocolMismatch, kModule, "ordering response given to the edge-wise posterior");
    // Slots are canonical, and so are response queries.
    observe(index_.slot(response.query), response.value);
}

Triple EdgePosterior::probabilities(std::size_t slot) const {
    const Triple& c = counts_.at(slot);
    const double total = c[0] + c[1] + c[2] + pseudocounts_[0] + pseudocounts_[1] + pseudocounts_[2];
    return {(c[0] + pseudocounts_[0]) / total, (c[1] + pseudocounts_[1]) / total,
            (c[2] + pseudocounts_[2]) / total};
}

double EdgePosterior::predictive_entropy(std::size_t slot) const {
    double h = 0.0;
    for (double p : probabilities(slot))
        if (p > 0) h -= p * std::log(p);
    return h;
}

Dag EdgePosterior::map_graph(double threshold) const {
    std::vector<PairWeight> weights;
    weights.reserve(index_.size());
    for (std::size_t s = 0; s < index_.size(); ++s) {
        const Triple p = probabilities(s);
        weights.push_back({index_.pairs()[s].u, index_.pairs()[s].v, p[0] - p[2], std::max(p[0], p[2])});
    }
    return project_to_dag(index_.nodes(), weights, threshold);
}

nlohmann::json EdgePosterior::to_json() const {
    nlohmann::json pairs = nlohmann::json::array();
    for (std::size_t s = 0; s < index_.size(); ++s) {
        const Triple p = probabilities(s);
        pairs.push_back({{"u", index_.nodes()[index_.pairs()[s].u]},
                         {"v", index_.nodes()[index_.pairs()[s].v]},
                         {"p_forward", p[0]},
                         {"p_none", p[1]},
                         {"p_backward", p[2]}});
    }
    return {{"pseudocounts", pseudocounts_}, {"pairs", pairs}};
}

EdgewiseResult infer_edgewise(const KnowledgeSet& responses, const std::vector<std::string>& nodes,
                              Triple pseudocounts) {
    require_protocol(responses, Protocol::EdgeWise, kModule);
    EdgePosterior posterior(nodes, pseudocounts);
    for (const Response& r : responses) posterior.observe(r);
    Dag graph = posterior.map_graph();
    return {std::move(posterior), std::move(graph)};
}

std::map<std::string, double> ScoreField::as_map() const {
    std::map<std::string, double> out;
    for (std::size_t i = 0; i < nodes.size(); ++i) out[nodes[i]] = phi[static_cast<Eigen::Index>(i)];
    return out;
}

nlohmann::json ScoreField::to_json() const {
    nlohmann::json phi_json = nlohmann::json::object();
    for (const auto& [name, value] : as_map()) phi_json[name] = value;
    return {{"phi", phi_json}, {"sigma", sigma}};
}

std::vector<OrderingObservation> ordering_observations(const KnowledgeSet& responses,
                                                       const std::vector<std::string>& nodes) {
    require_protocol(responses, Protocol::OrderingWise, kModule);
    std::map<std::string, NodeIndex, std::less<>> index;
    for (NodeIndex i = 0; i < nodes.size(); ++i) index.emplace(nodes[i], i);
    auto lookup = [&](const std::string& name) {
        auto it = index.find(name);
        if (it == index.end()) throw Error(ErrorCode::UnknownNode, kModule, "unknown node: " + name);
        return it->second;
    };
    std::vector<OrderingObservation> out;
    out.reserve(responses.size());
    for (const Response& r : responses)
        out.push_back({lookup(r.query.u), lookup(r.query.v), static_cast<double>(r.value)});
    return out;
}

double score_data_loglik(const Eigen::VectorXd& phi, double sigma,
                         const std::vector<OrderingObservation>& data) {
    const double var = sigma * sigma;
    const double norm = -0.5 * std::log(2.0 * std::numbers::pi * var);
    double total = 0.0;
    for (const auto& obs : data) {
        const double mean = kScale * std::tanh(phi[obs.u] - phi[obs.v]);
        const double r = obs.y - mean;
        total += norm - r * r / (2.0 * var);
    }
    return total;
}

double score_loglik(const Eigen::VectorXd& phi, double sigma, const std::vector<OrderingObservation>& data,
                    double prior_scale) {
    const double pvar = prior_scale * prior_scale;
    const double prior = static_cast<double>(phi.size()) * -0.5 * std::log(2.0 * std::numbers::pi * pvar) -
                         phi.squaredNorm() / (2.0 * pvar);
    return score_data_loglik(phi, sigma, data) + prior;
}

Eigen::VectorXd score_grad(const Eigen::VectorXd& phi, double sigma,
                           const std::vector<OrderingObservation>& data, double prior_scale) {
    Eigen::VectorXd grad = -phi / (prior_scale * prior_scale);
    const double var = sigma * sigma;
    for (const auto& obs : data) {
        const double t = std::tanh(phi[obs.u] - phi[obs.v]);
        const double r = obs.y - kScale * t;
        const double g = r / var * kScale * (1.0 - t * t);
        grad[obs.u] += g;
        grad[obs.v] -= g;
    }
    return grad;
}

namespace {
Eigen::VectorXd field_phi(const ScoreField& field) {
    if (static_cast<std::size_t>(field.phi.size()) != field.nodes.size())
        throw Error(ErrorCode::ConfigError, kModule, "score vector length differs from node count");
    if (!(field.sigma > 0.0)) throw Error(ErrorCode::ConfigError, kModule, "sigma must be positive");
    return field.phi;
}
}  // namespace

double score_loglik(const ScoreField& field, const KnowledgeSet& responses, const ScoreModelOptions& options) {
    return score_loglik(field_phi(field), field.sigma, ordering_observations(responses, field.nodes),
                        options.prior_scale);
}

Eigen::VectorXd score_grad(const ScoreField& field, const KnowledgeSet& responses,
                           const ScoreModelOptions& options) {
    return score_grad(field_phi(field), field.sigma, ordering_observations(responses, field.nodes),
                      options.prior_scale);
}

ScoreField infer_scores(const KnowledgeSet& responses, const std::vector<std::string>& nodes,
                        const ScoreModelOptions& options, ScoreFitTrace* trace) {
    const auto data = ordering_observations(responses, nodes);
    if (data.empty()) throw Error(ErrorCode::EmptyResponses, kModule, "no ordering responses");

    const auto n = static_cast<Eigen::Index>(nodes.size());
    Eigen::VectorXd phi = Eigen::VectorXd::Zero(n);
    auto residual_sigma = [&](const Eigen::VectorXd& p) {
        double ss = 0.0;
        for (const auto& obs : data) {
            const double r = obs.y - kScale * std::tanh(p[obs.u] - p[obs.v]);
            ss += r * r;
        }
        return std::max(options.sigma_floor, std::sqrt(ss / static_cast<double>(data.size())));
    };
    double sigma = residual_sigma(phi);

    double value = score_loglik(phi, sigma, data, options.prior_scale);
    Eigen::VectorXd grad = score_grad(phi, sigma, data, options.prior_scale);
    Eigen::VectorXd prev_phi, prev_grad;
    double step = 1e-3;
    int iteration = 0;
    bool converged = false;
    ScoreFitTrace local;
    local.objective.push_back(value);

    for (; iteration < options.max_iterations; ++iteration) {
        if (grad.lpNorm<Eigen::Infinity>() < options.gradient_tolerance) {
            converged = true;
            break;
        }
        // Barzilai-Borwein proposal (or a doubled previous step), then halve until the
        // objective does not decrease. Once differences are below round-off, a step is
        // accepted only if it also shrinks the gradient.
        bool bb = false;
        if (prev_phi.size() == n) {
            const Eigen::VectorXd s = phi - prev_phi;
            const Eigen::VectorXd yv = grad - prev_grad;
            const double sy = s.dot(yv);
            if (sy < 0.0) {
                step = std::clamp(-s.squaredNorm() / sy, 1e-10, 1e3);
                bb = true;
            }
        }
        if (!bb) step = std::min(step * 2.0, 1e3);
        const double grad_norm = grad.norm();
        const double roundoff = 1e-12 * std::max(1.0, std::abs(value));
        Eigen::VectorXd candidate, candidate_grad;
        double candidate_value = value;
        bool accepted = false;
        for (int halving = 0; halving < 60 && !accepted; ++halving, step *= 0.5) {
            candidate = phi + step * grad;
            candidate_value = score_loglik(candidate, sigma, data, options.prior_scale);
            if (candidate_value < value - roundoff) continue;
            candidate_grad = score_grad(candidate, sigma, data, options.prior_scale);
            accepted = candidate_value > value + roundoff || candidate_grad.norm() < grad_norm;
            if (accepted) step *= 2.0;  // undo the loop's halving
        }
        if (!accepted) break;  // no ascent direction at machine precision
        prev_phi = phi;
        prev_grad = grad;
        phi = candidate;
        value = candidate_value;
        grad = candidate_grad;
        local.objective.push_back(value);

        if ((iteration + 1) % options.sigma_update_every == 0) {
            const double updated = residual_sigma(phi);
            if (updated != sigma) {
                sigma = updated;
                value = score_loglik(phi, sigma, data, options.prior_scale);
                grad = score_grad(phi, sigma, data, options.prior_scale);
                prev_phi.resize(0);  // curvature changed with sigma
                local.sigma_updates.push_back(static_cast<int>(local.objective.size()));
                local.objective.push_back(value);
            }
        }
    }
    if (!converged && grad.lpNorm<Eigen::Infinity>() < options.gradient_tolerance) converged = true;
    local.iterations = iteration;
    local.final_gradient_norm = grad.lpNorm<Eigen::Infinity>();
    if (trace) *trace = local;
    if (!converged)
        throw Error(ErrorCode::NonConvergence, kModule,
                    "score ascent stopped after " + std::to_string(iteration) +
                        " iterations with gradient sup-norm " + std::to_string(local.final_gradient_norm));

    phi.array() -= phi.mean();
    return {nodes, phi, sigma};
}

Dag ordering_map_graph(const KnowledgeSet& responses, const std::vector<std::string>& nodes, double threshold) {
    require_protocol(responses, Protocol::OrderingWise, kModule);
    PairIndex index(nodes);
    std::vector<double> sum(index.size(), 0.0), count(index.size(), 0.0);
    for (const Response& r : responses) {
        const std::size_t s = index.slot(r.query);
        sum[s] += r.value;
        count[s] += 1.0;
    }
    std::vector<PairWeight> weights;
    for (std::size_t s = 0; s < index.size(); ++s)
        if (count[s] > 0)
            weights.push_back({index.pairs()[s].u, index.pairs()[s].v, sum[s] / count[s] / kScale, std::nullopt});
    return transitive_reduction(project_to_dag(nodes, weights, threshold));
}

}  // namespace crowdcausal
