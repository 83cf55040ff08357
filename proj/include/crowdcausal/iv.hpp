#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "crowdcausal/expert.hpp"

namespace crowdcausal {

/// Linear two-stage model without intercepts:
///   exposure = Z alpha + U xi + noise_exposure * e_E
///   outcome  = exposure beta + Z gamma + U zeta + noise_outcome * e_O
/// with Z, e_E, e_O i.i.d. standard normal and U = confounder_scale * N(0, 1).
struct IvScenario {
    std::vector<double> alpha;
    double beta = 1.0;
    std::vector<double> gamma;  // direct effects on the outcome; nonzero marks an invalid instrument
    double xi = 1.0;            // confounder loading on the exposure
    double zeta = 1.0;          // confounder loading on the outcome
    double noise_exposure = 1.0;
    double noise_outcome = 1.0;
    double confounder_scale = 1.0;

    std::size_t instrument_count() const noexcept { return alpha.size(); }
    void validate() const;  // throws ConfigError
};

/// Five instruments, the last one leaking directly into the outcome.
IvScenario default_iv_scenario();

IvScenario iv_scenario_from_json(const nlohmann::json& j);
nlohmann::json to_json(const IvScenario& scenario);

struct IvDataset {
    Eigen::MatrixXd instruments;  // n x p
    Eigen::VectorXd exposure;
    Eigen::VectorXd outcome;

    std::size_t rows() const noexcept { return static_cast<std::size_t>(exposure.size()); }
};

/// Throws TooFewSamples when n < p + 2.
IvDataset simulate_iv(const IvScenario& scenario, std::size_t n, Rng& rng);

struct IvEstimate {
    double beta_hat = 0.0;
    double f_statistic = 0.0;  // first-stage F from the uncentered R^2; +inf for an exact fit
    std::vector<std::size_t> instruments;
};

/// Two-stage least squares on the chosen instrument columns.
/// Throws EmptySubset, RankDeficient.
IvEstimate tsls(const IvDataset& data, const std::vector<std::size_t>& subset);

/// tsls on the instruments flagged valid. Throws NoValidInstruments.
IvEstimate knowledge_filter(const std::vector<bool>& valid, const IvDataset& data);

inline constexpr double kWeakInstrumentThreshold = 10.0;

struct RelevanceReport {
    double f_statistic = 0.0;
    bool weak = false;  // F below kWeakInstrumentThreshold
};

RelevanceReport relevance_check(const IvDataset& data, const std::vector<std::size_t>& subset);

/// "1;2;5" style label (1-based instrument numbers).
std::string subset_label(const std::vector<std::size_t>& subset);

struct IvResultRow {
    std::uint64_t seed = 0;
    std::string subset;
    double beta_hat = 0.0;
    double f_statistic = 0.0;
};

/// CSV with header `seed,subset,beta_hat,F`.
void write_iv_results_csv(std::ostream& out, const std::vector<IvResultRow>& rows);

}  // namespace crowdcausal
