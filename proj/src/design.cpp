#include "crowdcausal/design.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "crowdcausal/error.hpp"

namespace crowdcausal {

namespace {
constexpr const char* kModule = "design-engine";
constexpr double kTieTolerance = 1e-12;
constexpr double kAnswerScale = 10.0;

NodePair resolve(const PairIndex& index, const Query& q) { return {index.node(q.u), index.node(q.v)}; }
}  // namespace

std::string to_string(Criterion criterion) {
    switch (criterion) {
        case Criterion::Exhaustive: return "exhaustive";
        case Criterion::EOpt: return "eopt";
        case Criterion::EIG: return "eig";
        case Criterion::Random: return "random";
    }
    return "?";
}

Criterion criterion_from_string(const std::string& text) {
    for (Criterion c : {Criterion::Exhaustive, Criterion::EOpt, Criterion::EIG, Criterion::Random})
        if (to_string(c) == text) return c;
    throw Error(ErrorCode::ConfigError, kModule, "unknown design criterion: " + text);
}

std::string to_string(PoolMode mode) { return mode == PoolMode::Remove ? "remove" : "fixed"; }

PoolMode pool_mode_from_string(const std::string& text) {
    if (text == "remove") return PoolMode::Remove;
    if (text == "fixed") return PoolMode::Fixed;
    throw Error(ErrorCode::ConfigError, kModule, "unknown pool mode: " + text);
}

std::string to_string(Aggregation aggregation) {
    switch (aggregation) {
        case Aggregation::Individual: return "individual";
        case Aggregation::ExpertLevel: return "expert-level";
        case Aggregation::QueryLevel: return "query-level";
    }
    return "?";
}

Aggregation aggregation_from_string(const std::string& text) {
    for (Aggregation a : {Aggregation::Individual, Aggregation::ExpertLevel, Aggregation::QueryLevel})
        if (to_string(a) == text) return a;
    throw Error(ErrorCode::ConfigError, kModule, "unknown aggregation strategy: " + text);
}

Eigen::MatrixXd information_matrix(std::size_t node_count, const std::vector<WeightedPair>& design) {
    const auto n = static_cast<Eigen::Index>(node_count);
    Eigen::MatrixXd info = Eigen::MatrixXd::Zero(n, n);
    for (const auto& p : design) {
        if (p.u >= node_count || p.v >= node_count || p.u == p.v)
            throw Error(ErrorCode::UnknownNode, kModule, "design pair outside the node set");
        const auto u = static_cast<Eigen::Index>(p.u), v = static_cast<Eigen::Index>(p.v);
        info(u, u) += p.weight;
        info(v, v) += p.weight;
        info(u, v) -= p.weight;
        info(v, u) -= p.weight;
    }
    return info;
}

Eigen::MatrixXd information_matrix(const std::vector<std::string>& nodes, const std::vector<Query>& design) {
    const PairIndex index(nodes);
    std::vector<WeightedPair> pairs;
    for (const Query& q : design) {
        const NodePair p = resolve(index, q);
        pairs.push_back({p.u, p.v, 1.0});
    }
    return information_matrix(nodes.size(), pairs);
}

double e_optimality(const Eigen::MatrixXd& information) {
    if (information.rows() < 2) return 0.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(information, Eigen::EigenvaluesOnly);
    const double lambda = solver.eigenvalues()[1];
    return lambda < 1e-10 ? 0.0 : lambda;
}

int comparison_components(std::size_t node_count, const std::vector<WeightedPair>& design) {
    std::vector<std::size_t> parent(node_count);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    int components = static_cast<int>(node_count);
    for (const auto& p : design) {
        const auto a = find(p.u), b = find(p.v);
        if (a != b) {
            parent[a] = b;
            --components;
        }
    }
    return components;
}

GaussianBelief::GaussianBelief(Eigen::VectorXd mean, Eigen::MatrixXd covariance, double noise_var)
    : mean_(std::move(mean)), covariance_(std::move(covariance)), noise_var_(noise_var) {
    if (covariance_.rows() != mean_.size() || covariance_.cols() != mean_.size())
        throw Error(ErrorCode::ConfigError, kModule, "belief covariance shape differs from the mean");
    if (!(noise_var_ > 0.0)) throw Error(ErrorCode::ConfigError, kModule, "noise variance must be positive");
}

GaussianBelief GaussianBelief::prior(std::size_t node_count, double prior_scale, double noise_var) {
    const auto n = static_cast<Eigen::Index>(node_count);
    return {Eigen::VectorXd::Zero(n), Eigen::MatrixXd::Identity(n, n) * (prior_scale * prior_scale), noise_var};
}

GaussianBelief GaussianBelief::laplace(const ScoreField& field, const std::vector<WeightedPair>& answered,
                                       double prior_scale) {
    const std::size_t n = field.nodes.size();
    const double noise_var = (field.sigma / kAnswerScale) * (field.sigma / kAnswerScale);
    Eigen::MatrixXd precision = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)) /
                                    (prior_scale * prior_scale) +
                                information_matrix(n, answered) / noise_var;
    Eigen::MatrixXd covariance = precision.ldlt().solve(
        Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)));
    covariance = 0.5 * (covariance + covariance.transpose());
    return {field.phi, covariance, noise_var};
}

double GaussianBelief::contrast_variance(NodeIndex u, NodeIndex v) const {
    const auto a = static_cast<Eigen::Index>(u), b = static_cast<Eigen::Index>(v);
    return std::max(0.0, covariance_(a, a) + covariance_(b, b) - 2.0 * covariance_(a, b));
}

void GaussianBelief::condition(NodeIndex u, NodeIndex v) {
    const Eigen::VectorXd sd = covariance_.col(static_cast<Eigen::Index>(u)) - covariance_.col(static_cast<Eigen::Index>(v));
    const double s = contrast_variance(u, v) + noise_var_;
    covariance_ -= sd * sd.transpose() / s;
    covariance_ = 0.5 * (covariance_ + covariance_.transpose());
}

void GaussianBelief::observe(NodeIndex u, NodeIndex v, double z) {
    const Eigen::VectorXd sd = covariance_.col(static_cast<Eigen::Index>(u)) - covariance_.col(static_cast<Eigen::Index>(v));
    const double s = contrast_variance(u, v) + noise_var_;
    const double innovation = z - (mean_[static_cast<Eigen::Index>(u)] - mean_[static_cast<Eigen::Index>(v)]);
    mean_ += sd * (innovation / s);
    covariance_ -= sd * sd.transpose() / s;
    covariance_ = 0.5 * (covariance_ + covariance_.transpose());
}

double GaussianBelief::order_probability(NodeIndex u, NodeIndex v) const {
    const double diff = mean_[static_cast<Eigen::Index>(u)] - mean_[static_cast<Eigen::Index>(v)];
    const double sd = std::sqrt(contrast_variance(u, v));
    if (sd <= 0.0) return diff > 0 ? 1.0 : (diff < 0 ? 0.0 : 0.5);
    return 0.5 * std::erfc(-diff / (sd * std::numbers::sqrt2));
}

double GaussianBelief::entropy() const {
    const double n = static_cast<double>(mean_.size());
    Eigen::LLT<Eigen::MatrixXd> llt(covariance_);
    if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
    const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    return 0.5 * (n * std::log(2.0 * std::numbers::pi * std::numbers::e) + log_det);
}

double eig_gain(const GaussianBelief& belief, NodeIndex u, NodeIndex v) {
    return 0.5 * std::log1p(belief.contrast_variance(u, v) / belief.noise_var());
}

DesignState DesignState::initial(const std::vector<std::string>& nodes, Protocol protocol,
                                 const ScoreModelOptions& scores) {
    DesignState state;
    state.nodes = nodes;
    state.protocol = protocol;
    state.posterior = EdgePosterior(nodes);
    const double default_sigma = 2.0;
    state.belief = GaussianBelief::prior(nodes.size(), scores.prior_scale,
                                         (default_sigma / kAnswerScale) * (default_sigma / kAnswerScale));
    return state;
}

nlohmann::json StageDesign::to_json() const {
    nlohmann::json pairs = nlohmann::json::array();
    for (const Query& q : queries) pairs.push_back({q.u, q.v});
    return {{"t", stage}, {"K_t", budget}, {"pool_size", pool.size()}, {"pairs", pairs}, {"criterion_values", gains}};
}

AggregatedDesign aggregate_designs(std::vector<StageDesign> stages) {
    AggregatedDesign out;
    for (const auto& s : stages) out.total_budget += s.budget;
    for (const auto& s : stages)
        out.weights.push_back(out.total_budget > 0 ? static_cast<double>(s.budget) / out.total_budget : 0.0);
    out.stages = std::move(stages);
    return out;
}

namespace {

// Lexicographic comparison of gain tuples with a tie tolerance.
bool better(const std::array<double, 3>& a, const std::array<double, 3>& b) {
    for (int k = 0; k < 3; ++k) {
        if (a[k] > b[k] + kTieTolerance) return true;
        if (a[k] < b[k] - kTieTolerance) return false;
    }
    return false;
}

}  // namespace

StageDesign select_stage(const std::vector<Query>& pool, int budget, Criterion criterion, const DesignState& state,
                         Rng* rng, int stage) {
    if (budget < 1) throw Error(ErrorCode::InvalidBudget, kModule, "stage budget must be >= 1");
    if (static_cast<std::size_t>(budget) > pool.size())
        throw Error(ErrorCode::BudgetExceedsPool, kModule,
                    "stage budget " + std::to_string(budget) + " exceeds pool size " + std::to_string(pool.size()));

    const PairIndex index(state.nodes);
    std::vector<NodePair> resolved;
    resolved.reserve(pool.size());
    for (const Query& q : pool) resolved.push_back(resolve(index, q));

    StageDesign design;
    design.stage = stage;
    design.budget = budget;
    design.pool = pool;
    design.mask.assign(pool.size(), 0);
    auto pick = [&](std::size_t i, double gain) {
        design.mask[i] = 1;
        design.queries.push_back(pool[i]);
        design.gains.push_back(gain);
    };

    if (criterion == Criterion::Random) {
        if (!rng) throw Error(ErrorCode::ConfigError, kModule, "random selection needs a random source");
        std::vector<std::size_t> order(pool.size());
        std::iota(order.begin(), order.end(), 0);
        for (int k = 0; k < budget; ++k) {
            std::uniform_int_distribution<std::size_t> dist(static_cast<std::size_t>(k), order.size() - 1);
            std::swap(order[static_cast<std::size_t>(k)], order[dist(*rng)]);
            pick(order[static_cast<std::size_t>(k)], 0.0);
        }
        return design;
    }
    if (criterion == Criterion::Exhaustive) {
        for (int k = 0; k < budget; ++k) pick(static_cast<std::size_t>(k), 0.0);
        return design;
    }

    GaussianBelief working = state.belief;
    std::vector<WeightedPair> comparisons = state.answered;
    const std::size_t n = state.nodes.size();
    double lambda = e_optimality(information_matrix(n, comparisons));
    int components = comparison_components(n, comparisons);

    for (int k = 0; k < budget; ++k) {
        std::optional<std::size_t> best;
        std::array<double, 3> best_gain{};
        double best_lambda = 0.0;
        int best_components = 0;
        for (std::size_t i = 0; i < pool.size(); ++i) {
            if (design.mask[i]) continue;
            const NodePair& p = resolved[i];
            std::array<double, 3> gain{};
            double cand_lambda = 0.0;
            int cand_components = 0;
            if (criterion == Criterion::EIG) {
                gain[0] = state.protocol == Protocol::EdgeWise ? state.posterior.predictive_entropy(index.slot(p.u, p.v))
                                                               : eig_gain(working, p.u, p.v);
            } else {
                comparisons.push_back({p.u, p.v, 1.0});
                cand_lambda = e_optimality(information_matrix(n, comparisons));
                cand_components = comparison_components(n, comparisons);
                comparisons.pop_back();
                gain = {cand_lambda - lambda, static_cast<double>(components - cand_components), 2.0};
            }
            const bool wins = !best || better(gain, best_gain) ||
                              (!better(best_gain, gain) && pool[i] < pool[*best]);
            if (wins) {
                best = i;
                best_gain = gain;
                best_lambda = cand_lambda;
                best_components = cand_components;
            }
        }
        const NodePair& p = resolved[*best];
        pick(*best, best_gain[0]);
        if (criterion == Criterion::EIG && state.protocol == Protocol::OrderingWise) working.condition(p.u, p.v);
        if (criterion == Criterion::EOpt) {
            comparisons.push_back({p.u, p.v, 1.0});
            lambda = best_lambda;
            components = best_components;
        }
    }
    return design;
}

nlohmann::json StageRecord::to_json() const {
    nlohmann::json out = design.to_json();
    out["metrics"] = crowdcausal::to_json(metrics);
    out["pool_size_after"] = pool_size_after;
    return out;
}

Dag estimate_structure(const KnowledgeSet& responses, const std::vector<std::string>& nodes, Aggregation aggregation,
                       std::uint64_t seed) {
    if (responses.empty()) return Dag(nodes);
    switch (aggregation) {
        case Aggregation::Individual: return individual_map_graph(responses, nodes);
        case Aggregation::ExpertLevel: {
            std::vector<Dag> graphs;
            for (const auto& [expert, own] : split_by_expert(responses)) graphs.push_back(individual_map_graph(own, nodes));
            return aggregate_expert_level(graphs);
        }
        case Aggregation::QueryLevel: {
            SearchOptions options;
            options.seed = seed;
            return query_level_aggregate(responses, nodes, options).graph;
        }
    }
    return Dag(nodes);
}

SequentialResult run_sequential(std::vector<SimulatedExpert>& experts, const Dag& truth,
                                const SequentialOptions& options) {
    if (experts.empty()) throw Error(ErrorCode::ConfigError, kModule, "run_sequential needs at least one expert");
    const std::vector<Query> all_pairs = all_pair_queries(truth);
    std::vector<int> stages = options.stages;
    if (options.criterion == Criterion::Exhaustive) stages = {static_cast<int>(all_pairs.size())};
    if (stages.empty()) throw Error(ErrorCode::ConfigError, kModule, "at least one stage is required");

    const auto& nodes = truth.nodes();
    const PairIndex index(nodes);
    DesignState state = DesignState::initial(nodes, options.protocol, options.scores);
    std::vector<Query> pool = all_pairs;
    Rng rng(options.seed);
    SequentialResult result;
    std::vector<StageDesign> designs;

    for (std::size_t t = 0; t < stages.size(); ++t) {
        StageDesign design = select_stage(pool, stages[t], options.criterion, state, &rng, static_cast<int>(t + 1));
        for (const Query& q : design.queries) {
            const NodePair p = resolve(index, q);
            for (auto& expert : experts) {
                Response r = expert.answer(q, options.protocol);
                if (options.protocol == Protocol::EdgeWise) state.posterior.observe(r);
                state.answered.push_back({p.u, p.v, 1.0});
                result.responses.push_back(std::move(r));
            }
        }
        if (options.protocol == Protocol::OrderingWise) {
            result.scores = infer_scores(result.responses, nodes, options.scores);
            state.belief = GaussianBelief::laplace(*result.scores, state.answered, options.scores.prior_scale);
        }
        if (options.pool_mode == PoolMode::Remove) {
            std::vector<Query> next;
            for (std::size_t i = 0; i < pool.size(); ++i)
                if (!design.mask[i]) next.push_back(pool[i]);
            pool = std::move(next);
        }

        result.estimate = estimate_structure(result.responses, nodes, options.aggregation, options.seed);
        StageRecord record;
        record.metrics = edge_metrics(result.estimate, truth);
        if (result.scores) {
            const OrderMetrics om = order_metrics(result.scores->as_map(), truth);
            record.metrics.rank_correlation = om.rank_correlation;
            record.metrics.pairwise_order_accuracy = om.pairwise_order_accuracy;
        }
        if (options.protocol == Protocol::EdgeWise) {
            const BehaviorMetrics bm = behavior_metrics(result.responses);
            record.metrics.abstention_rate = bm.abstention_rate;
            record.metrics.cycle_injection_rate = bm.cycle_injection_rate;
            record.metrics.edge_flip_frequency = bm.edge_flip_frequency;
            record.metrics.inconsistency_count = bm.inconsistency_count;
        }
        record.pool_size_after = pool.size();
        record.design = design;
        result.trace.push_back(std::move(record));
        designs.push_back(std::move(design));
    }
    result.design = aggregate_designs(std::move(designs));
    return result;
}

}  // namespace crowdcausal
