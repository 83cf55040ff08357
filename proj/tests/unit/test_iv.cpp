#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "crowdcausal/error.hpp"
#include "crowdcausal/iv.hpp"
#include "support.hpp"

using namespace crowdcausal;

namespace {

// Textbook 2SLS via the explicit projection matrix.
std::pair<double, double> oracle_tsls(const IvDataset& d, const std::vector<std::size_t>& subset) {
    Eigen::MatrixXd z(d.instruments.rows(), static_cast<Eigen::Index>(subset.size()));
    for (std::size_t k = 0; k < subset.size(); ++k) z.col(static_cast<Eigen::Index>(k)) = d.instruments.col(static_cast<Eigen::Index>(subset[k]));
    const Eigen::MatrixXd p = z * (z.transpose() * z).inverse() * z.transpose();
    const double beta = (d.exposure.transpose() * p * d.outcome)(0) / (d.exposure.transpose() * p * d.exposure)(0);
    const double r2 = (d.exposure.transpose() * p * d.exposure)(0) / d.exposure.squaredNorm();
    const double n = static_cast<double>(z.rows()), k = static_cast<double>(z.cols());
    return {beta, (r2 / k) / ((1.0 - r2) / (n - k))};
}

}  // namespace

TEST(SimulateIv, ShapesAndDeterminism) {
    const IvScenario s = default_iv_scenario();
    Rng a(3), b(3);
    const IvDataset d1 = simulate_iv(s, 200, a);
    const IvDataset d2 = simulate_iv(s, 200, b);
    EXPECT_EQ(d1.rows(), 200u);
    EXPECT_EQ(d1.instruments.cols(), 5);
    EXPECT_EQ(d1.outcome, d2.outcome);
    Rng c(3);
    EXPECT_ERROR_CODE(simulate_iv(s, 6, c), TooFewSamples);
    EXPECT_NO_THROW(simulate_iv(s, 7, c));
}

TEST(Tsls, MatchesProjectionOracle) {
    Rng rng(8);
    const IvDataset d = simulate_iv(default_iv_scenario(), 300, rng);
    for (const std::vector<std::size_t>& subset : {std::vector<std::size_t>{0, 1, 2, 3, 4}, {0, 1, 2, 3}, {4}, {1, 3}}) {
        const auto [beta, f] = oracle_tsls(d, subset);
        const IvEstimate est = tsls(d, subset);
        EXPECT_NEAR(est.beta_hat, beta, 1e-10);
        EXPECT_NEAR(est.f_statistic, f, 1e-8 * f);
    }
}

TEST(Tsls, NoiselessValidInstrumentsRecoverBetaExactly) {
    IvScenario s;
    s.alpha = {1.0, 2.0};
    s.gamma = {0.0, 0.0};
    s.beta = 0.7;
    s.noise_exposure = s.noise_outcome = s.confounder_scale = 0.0;
    Rng rng(1);
    const IvDataset d = simulate_iv(s, 50, rng);
    const IvEstimate est = tsls(d, {0, 1});
    EXPECT_NEAR(est.beta_hat, 0.7, 1e-10);
    EXPECT_TRUE(std::isinf(est.f_statistic));
}

TEST(Tsls, InvariantToInstrumentScaling) {
    Rng rng(4);
    IvDataset d = simulate_iv(default_iv_scenario(), 400, rng);
    const IvEstimate before = tsls(d, {0, 1, 2});
    d.instruments.col(1) *= -7.5;
    d.instruments.col(2) *= 0.01;
    const IvEstimate after = tsls(d, {0, 1, 2});
    EXPECT_NEAR(after.beta_hat, before.beta_hat, 1e-9);
    EXPECT_NEAR(after.f_statistic, before.f_statistic, 1e-7 * before.f_statistic);
}

TEST(Tsls, Errors) {
    Rng rng(2);
    IvDataset d = simulate_iv(default_iv_scenario(), 100, rng);
    EXPECT_ERROR_CODE(tsls(d, {}), EmptySubset);
    EXPECT_ERROR_CODE(tsls(d, {9}), ConfigError);
    d.instruments.col(1) = d.instruments.col(0) * 2.0;
    EXPECT_ERROR_CODE(tsls(d, {0, 1}), RankDeficient);
}

TEST(KnowledgeFilter, DroppingTheLeakyInstrumentRemovesTheBias) {
    // Large-sample limits: beta + alpha.gamma / alpha.alpha with all five, beta with the first four.
    const IvScenario s = default_iv_scenario();
    double all = 0.0, filtered = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed);
        const IvDataset d = simulate_iv(s, 10000, rng);
        all += tsls(d, {0, 1, 2, 3, 4}).beta_hat / 10.0;
        filtered += knowledge_filter({true, true, true, true, false}, d).beta_hat / 10.0;
    }
    EXPECT_NEAR(all, 1.0 + 0.5 / 3.5, 0.02);
    EXPECT_NEAR(filtered, 1.0, 0.02);

    Rng rng(0);
    const IvDataset d = simulate_iv(s, 100, rng);
    EXPECT_ERROR_CODE(knowledge_filter({false, false, false, false, false}, d), NoValidInstruments);
    EXPECT_ERROR_CODE(knowledge_filter({true}, d), ConfigError);
}

TEST(Relevance, FlagsWeakInstruments) {
    IvScenario s;
    s.alpha = {1.0, 0.01};
    s.gamma = {0.0, 0.0};
    Rng rng(6);
    const IvDataset d = simulate_iv(s, 2000, rng);
    EXPECT_FALSE(relevance_check(d, {0}).weak);
    const RelevanceReport weak = relevance_check(d, {1});
    EXPECT_TRUE(weak.weak);
    EXPECT_LT(weak.f_statistic, kWeakInstrumentThreshold);
}

TEST(Scenario, JsonAndValidation) {
    const IvScenario s = iv_scenario_from_json(nlohmann::json::parse(R"({"alpha": [1, 2], "beta": 3})"));
    EXPECT_EQ(s.gamma, (std::vector<double>{0.0, 0.0}));
    EXPECT_EQ(iv_scenario_from_json(to_json(s)).beta, 3.0);
    EXPECT_ERROR_CODE(iv_scenario_from_json(nlohmann::json::parse(R"({"alpha": [1], "gamma": [0, 1]})")), ConfigError);
    EXPECT_ERROR_CODE(iv_scenario_from_json(nlohmann::json::parse(R"({"noise_outcome": -1})")), ConfigError);
}

TEST(IvCsv, HeaderAndLabels) {
    EXPECT_EQ(subset_label({0, 1, 4}), "1;2;5");
    std::ostringstream out;
    write_iv_results_csv(out, {{7, "1;2", 1.5, 20.25}});
    EXPECT_EQ(out.str(), "seed,subset,beta_hat,F\n7,1;2,1.5,20.25\n");
}
