#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "crowdcausal/aggregation.hpp"
#include "crowdcausal/expert.hpp"
#include "crowdcausal/graph.hpp"
#include "crowdcausal/inference.hpp"
#include "crowdcausal/knowledge.hpp"
#include "crowdcausal/metrics.hpp"

namespace crowdcausal {

/// Exhaustive asks every pair once and ignores stage budgets; Random is the uniform baseline.
enum class Criterion { Exhaustive, EOpt, EIG, Random };
enum class PoolMode { Remove, Fixed };
enum class Aggregation { Individual, ExpertLevel, QueryLevel };

std::string to_string(Criterion criterion);
Criterion criterion_from_string(const std::string& text);  // exhaustive | eopt | eig | random
std::string to_string(PoolMode mode);
PoolMode pool_mode_from_string(const std::string& text);   // remove | fixed
std::string to_string(Aggregation aggregation);
Aggregation aggregation_from_string(const std::string& text);  // individual | expert-level | query-level

struct WeightedPair {
    NodeIndex u = 0;
    NodeIndex v = 0;
    double weight = 1.0;
};

/// Weighted Laplacian of the comparison graph: sum of w (e_u - e_v)(e_u - e_v)^T.
Eigen::MatrixXd information_matrix(std::size_t node_count, const std::vector<WeightedPair>& design);
Eigen::MatrixXd information_matrix(const std::vector<std::string>& nodes, const std::vector<Query>& design);

/// Smallest eigenvalue off the all-ones direction (second-smallest of the Laplacian),
/// clipped to 0 below 1e-10.
double e_optimality(const Eigen::MatrixXd& information);

/// Connected components of the comparison graph.
int comparison_components(std::size_t node_count, const std::vector<WeightedPair>& design);

/// Gaussian belief over the score vector for the linearized observation z = phi_u - phi_v + e,
/// e ~ N(0, noise_var).
class GaussianBelief {
public:
    GaussianBelief() = default;
    GaussianBelief(Eigen::VectorXd mean, Eigen::MatrixXd covariance, double noise_var);

    static GaussianBelief prior(std::size_t node_count, double prior_scale, double noise_var);
    /// Laplace approximation at a score MAP: precision = I / prior_scale^2 + L(answered) / noise_var,
    /// with noise_var = (sigma / 10)^2 on the answer scale divided by 10.
    static GaussianBelief laplace(const ScoreField& field, const std::vector<WeightedPair>& answered,
                                  double prior_scale);

    const Eigen::VectorXd& mean() const noexcept { return mean_; }
    const Eigen::MatrixXd& covariance() const noexcept { return covariance_; }
    double noise_var() const noexcept { return noise_var_; }
    std::size_t size() const noexcept { return static_cast<std::size_t>(mean_.size()); }

    /// d^T Sigma d for d = e_u - e_v.
    double contrast_variance(NodeIndex u, NodeIndex v) const;
    /// Rank-one conditioning on one answer (covariance only; the mean is untouched).
    void condition(NodeIndex u, NodeIndex v);
    /// Kalman update with an observed contrast z.
    void observe(NodeIndex u, NodeIndex v, double z);
    /// Probability that phi_u > phi_v.
    double order_probability(NodeIndex u, NodeIndex v) const;
    /// Differential entropy 0.5 log det(2 pi e Sigma).
    double entropy() const;

private:
    Eigen::VectorXd mean_;
    Eigen::MatrixXd covariance_;
    double noise_var_ = 1.0;
};

/// 0.5 log(1 + d^T Sigma d / noise_var).
double eig_gain(const GaussianBelief& belief, NodeIndex u, NodeIndex v);

/// Everything the criteria may condition on before a stage.
struct DesignState {
    std::vector<std::string> nodes;
    Protocol protocol = Protocol::EdgeWise;
    EdgePosterior posterior;                // edge-wise belief
    GaussianBelief belief;                  // ordering-wise belief
    std::vector<WeightedPair> answered;     // comparison graph of all answered queries

    static DesignState initial(const std::vector<std::string>& nodes, Protocol protocol,
                               const ScoreModelOptions& scores = {});
};

struct StageDesign {
    int stage = 0;
    int budget = 0;
    std::vector<Query> pool;            // candidate pool C at selection time
    std::vector<unsigned char> mask;    // alpha_t over the pool
    std::vector<Query> queries;         // Q_t in selection order
    std::vector<double> gains;          // criterion marginal gain per pick

    nlohmann::json to_json() const;
};

struct AggregatedDesign {
    std::vector<StageDesign> stages;
    std::vector<double> weights;  // K_t / K
    int total_budget = 0;
};

AggregatedDesign aggregate_designs(std::vector<StageDesign> stages);

/// Greedy forward selection of `budget` distinct pool pairs. Random draws from `rng`.
StageDesign select_stage(const std::vector<Query>& pool, int budget, Criterion criterion, const DesignState& state,
                         Rng* rng = nullptr, int stage = 1);

struct SequentialOptions {
    std::vector<int> stages;
    Criterion criterion = Criterion::EIG;
    Protocol protocol = Protocol::EdgeWise;
    PoolMode pool_mode = PoolMode::Fixed;
    Aggregation aggregation = Aggregation::Individual;
    std::uint64_t seed = 0;  // drives Random selection and structure-search restarts
    ScoreModelOptions scores;
};

struct StageRecord {
    StageDesign design;
    MetricsReport metrics;
    std::size_t pool_size_after = 0;

    nlohmann::json to_json() const;
};

struct SequentialResult {
    AggregatedDesign design;
    KnowledgeSet responses;
    Dag estimate;
    std::optional<ScoreField> scores;  // ordering-wise runs
    std::vector<StageRecord> trace;
};

/// Structure estimate of a transcript under the chosen aggregation. Individual treats the
/// transcript as one informant.
Dag estimate_structure(const KnowledgeSet& responses, const std::vector<std::string>& nodes, Aggregation aggregation,
                       std::uint64_t seed = 0);

/// select_stage -> ask every expert -> update belief -> update pool, for each stage.
SequentialResult run_sequential(std::vector<SimulatedExpert>& experts, const Dag& truth,
                                const SequentialOptions& options);

}  // namespace crowdcausal
