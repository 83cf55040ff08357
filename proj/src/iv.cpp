#include "crowdcausal/iv.hpp"

#include <cmath>
#include <limits>
#include <ostream>

#include "crowdcausal/error.hpp"
#include "crowdcausal/format.hpp"

namespace crowdcausal {

namespace {
constexpr const char* kModule = "iv-inference";

Eigen::MatrixXd select_columns(const IvDataset& data, const std::vector<std::size_t>& subset) {
    if (subset.empty()) throw Error(ErrorCode::EmptySubset, kModule, "instrument subset is empty");
    if (data.rows() == 0) throw Error(ErrorCode::EmptySubset, kModule, "dataset has no rows");
    const auto p = static_cast<std::size_t>(data.instruments.cols());
    Eigen::MatrixXd z(data.instruments.rows(), static_cast<Eigen::Index>(subset.size()));
    for (std::size_t k = 0; k < subset.size(); ++k) {
        if (subset[k] >= p)
            throw Error(ErrorCode::ConfigError, kModule, "instrument index " + std::to_string(subset[k]) + " out of range");
        z.col(static_cast<Eigen::Index>(k)) = data.instruments.col(static_cast<Eigen::Index>(subset[k]));
    }
    return z;
}

struct FirstStage {
    Eigen::VectorXd fitted;
    double f_statistic = 0.0;
};

FirstStage first_stage(const IvDataset& data, const Eigen::MatrixXd& z) {
    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(z);
    if (qr.rank() < z.cols() || static_cast<std::size_t>(z.rows()) <= static_cast<std::size_t>(z.cols()))
        throw Error(ErrorCode::RankDeficient, kModule, "instrument matrix is rank deficient");
    FirstStage out;
    out.fitted = z * qr.solve(data.exposure);
    const double explained = out.fitted.squaredNorm();
    const double total = data.exposure.squaredNorm();
    const double k = static_cast<double>(z.cols());
    const double n = static_cast<double>(z.rows());
    const double residual = std::max(0.0, total - explained);
    if (residual <= 1e-12 * std::max(total, 1e-300))
        out.f_statistic = std::numeric_limits<double>::infinity();
    else
        out.f_statistic = (explained / k) / (residual / (n - k));
    return out;
}
}  // namespace

void IvScenario::validate() const {
    if (alpha.empty()) throw Error(ErrorCode::ConfigError, kModule, "scenario needs at least one instrument");
    if (gamma.size() != alpha.size())
        throw Error(ErrorCode::ConfigError, kModule, "gamma must have one entry per instrument");
    for (double s : {noise_exposure, noise_outcome, confounder_scale})
        if (!(s >= 0.0) || !std::isfinite(s))
            throw Error(ErrorCode::ConfigError, kModule, "noise and confounder scales must be finite and >= 0");
}

IvScenario default_iv_scenario() {
    IvScenario s;
    s.alpha = {1.0, 1.0, 1.0, 0.5, 0.5};
    s.gamma = {0.0, 0.0, 0.0, 0.0, 1.0};
    return s;
}

IvScenario iv_scenario_from_json(const nlohmann::json& j) {
    IvScenario s = default_iv_scenario();
    try {
        if (j.contains("alpha")) s.alpha = j.at("alpha").get<std::vector<double>>();
        if (j.contains("gamma")) s.gamma = j.at("gamma").get<std::vector<double>>();
        else if (j.contains("alpha")) s.gamma.assign(s.alpha.size(), 0.0);
        s.beta = j.value("beta", s.beta);
        s.xi = j.value("xi", s.xi);
        s.zeta = j.value("zeta", s.zeta);
        s.noise_exposure = j.value("noise_exposure", s.noise_exposure);
        s.noise_outcome = j.value("noise_outcome", s.noise_outcome);
        s.confounder_scale = j.value("confounder_scale", s.confounder_scale);
    } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorCode::ConfigError, kModule, std::string("malformed scenario: ") + ex.what());
    }
    s.validate();
    return s;
}

nlohmann::json to_json(const IvScenario& s) {
    return {{"alpha", s.alpha},
            {"beta", s.beta},
            {"gamma", s.gamma},
            {"xi", s.xi},
            {"zeta", s.zeta},
            {"noise_exposure", s.noise_exposure},
            {"noise_outcome", s.noise_outcome},
            {"confounder_scale", s.confounder_scale}};
}

IvDataset simulate_iv(const IvScenario& scenario, std::size_t n, Rng& rng) {
    scenario.validate();
    const std::size_t p = scenario.instrument_count();
    if (n < p + 2)
        throw Error(ErrorCode::TooFewSamples, kModule,
                    "need at least " + std::to_string(p + 2) + " samples, got " + std::to_string(n));
    std::normal_distribution<double> normal(0.0, 1.0);
    IvDataset d;
    const auto rows = static_cast<Eigen::Index>(n);
    d.instruments.resize(rows, static_cast<Eigen::Index>(p));
    d.exposure.resize(rows);
    d.outcome.resize(rows);
    for (Eigen::Index i = 0; i < rows; ++i) {
        double iv_exposure = 0.0, iv_outcome = 0.0;
        for (std::size_t j = 0; j < p; ++j) {
            const double z = normal(rng);
            d.instruments(i, static_cast<Eigen::Index>(j)) = z;
            iv_exposure += z * scenario.alpha[j];
            iv_outcome += z * scenario.gamma[j];
        }
        const double u = scenario.confounder_scale * normal(rng);
        const double e_exposure = normal(rng);
        const double e_outcome = normal(rng);
        d.exposure[i] = iv_exposure + u * scenario.xi + scenario.noise_exposure * e_exposure;
        d.outcome[i] = d.exposure[i] * scenario.beta + iv_outcome + u * scenario.zeta +
                       scenario.noise_outcome * e_outcome;
    }
    return d;
}

IvEstimate tsls(const IvDataset& data, const std::vector<std::size_t>& subset) {
    const Eigen::MatrixXd z = select_columns(data, subset);
    const FirstStage fs = first_stage(data, z);
    const double denom = fs.fitted.squaredNorm();
    if (denom <= 0.0) throw Error(ErrorCode::RankDeficient, kModule, "first stage explains none of the exposure");
    IvEstimate est;
    est.beta_hat = fs.fitted.dot(data.outcome) / denom;
    est.f_statistic = fs.f_statistic;
    est.instruments = subset;
    return est;
}

IvEstimate knowledge_filter(const std::vector<bool>& valid, const IvDataset& data) {
    if (valid.size() != static_cast<std::size_t>(data.instruments.cols()))
        throw Error(ErrorCode::ConfigError, kModule, "one validity flag per instrument is required");
    std::vector<std::size_t> subset;
    for (std::size_t j = 0; j < valid.size(); ++j)
        if (valid[j]) subset.push_back(j);
    if (subset.empty()) throw Error(ErrorCode::NoValidInstruments, kModule, "no instrument was flagged valid");
    return tsls(data, subset);
}

RelevanceReport relevance_check(const IvDataset& data, const std::vector<std::size_t>& subset) {
    const FirstStage fs = first_stage(data, select_columns(data, subset));
    return {fs.f_statistic, fs.f_statistic < kWeakInstrumentThreshold};
}

std::string subset_label(const std::vector<std::size_t>& subset) {
    std::string out;
    for (std::size_t k = 0; k < subset.size(); ++k) {
        if (k) out += ';';
        out += std::to_string(subset[k] + 1);
    }
    return out;
}

void write_iv_results_csv(std::ostream& out, const std::vector<IvResultRow>& rows) {
    out << "seed,subset,beta_hat,F\n";
    for (const auto& r : rows)
        out << r.seed << ',' << r.subset << ',' << format_double(r.beta_hat) << ',' << format_double(r.f_statistic)
            << '\n';
}

}  // namespace crowdcausal
