#include <gtest/gtest.h>

#include <sstream>

#include "crowdcausal/error.hpp"
#include "crowdcausal/expert.hpp"
#include "crowdcausal/knowledge.hpp"
#include "support.hpp"

using namespace crowdcausal;

namespace {

NodeIndex idx(const Dag& d, const std::string& name) { return d.index_of(name); }

}  // namespace

TEST(Profiles, Presets) {
    const ExpertProfile omni = make_profile(Archetype::Omniscient);
    EXPECT_EQ(omni.completeness, 1.0);
    EXPECT_EQ(omni.validity, 1.0);
    EXPECT_EQ(omni.confidence, 1.0);
    EXPECT_EQ(omni.trustworthiness, 1.0);

    const ExpertProfile pi = make_profile(Archetype::PerfectIncomplete);
    EXPECT_EQ(pi.validity, 1.0);
    EXPECT_LT(pi.completeness, 1.0);
    EXPECT_DOUBLE_EQ(make_profile(Archetype::BadActor).trustworthiness, 0.1);

    const ExpertProfile imperfect = make_profile(Archetype::Imperfect);
    EXPECT_DOUBLE_EQ(imperfect.completeness, 0.8);
    EXPECT_DOUBLE_EQ(imperfect.validity, 0.7);
    EXPECT_DOUBLE_EQ(imperfect.confidence, 0.7);
    EXPECT_DOUBLE_EQ(imperfect.trustworthiness, 0.9);
    EXPECT_DOUBLE_EQ(make_profile(Archetype::Uncertain).confidence, 0.3);
    EXPECT_EQ(archetype_from_string("perfect-incomplete"), Archetype::PerfectIncomplete);
    EXPECT_THROW(archetype_from_string("oracle"), Error);

    ExpertProfile bad;
    bad.validity = 1.5;
    EXPECT_THROW(bad.validate(), Error);
}

TEST(BeliefGraph, OmniscientMatchesTruthOnEveryPair) {
    const Dag asia = asia_fixture();
    Rng rng(3);
    const BeliefGraph g = sample_belief_graph(make_profile(Archetype::Omniscient), asia, rng);
    EXPECT_EQ(g.known_count(), 28u);
    for (NodeIndex u = 0; u < asia.size(); ++u)
        for (NodeIndex v = 0; v < asia.size(); ++v)
            if (u != v) EXPECT_EQ(g.relation(u, v), asia.relation(u, v));
}

TEST(BeliefGraph, PerfectIncompleteOnlyAssertsTrueEdges) {
    const Dag asia = asia_fixture();
    std::size_t unknown = 0;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        Rng rng(seed);
        const BeliefGraph g = sample_belief_graph(make_profile(Archetype::PerfectIncomplete), asia, rng);
        for (const Edge& e : g.asserted_edges()) EXPECT_TRUE(asia.has_edge(e.from, e.to));
        unknown += 28 - g.known_count();
    }
    EXPECT_GT(unknown, 0u);
}

TEST(BeliefGraph, ImperfectBelievesKnownTrueEdgesWithProbabilityValidity) {
    const Dag asia = asia_fixture();
    double correct = 0.0, known = 0.0;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        Rng rng(seed);
        const BeliefGraph g = sample_belief_graph(make_profile(Archetype::Imperfect), asia, rng);
        for (const Edge& e : asia.edges()) {
            if (!g.known(e.from, e.to)) continue;
            known += 1.0;
            correct += g.relation(e.from, e.to) == PairRelation::Forward;
        }
    }
    EXPECT_NEAR(correct / known, 0.7, 0.03);
}

TEST(BeliefGraph, DeterministicGivenSeed) {
    const Dag asia = asia_fixture();
    Rng a(11), b(11);
    const BeliefGraph ga = sample_belief_graph(make_profile(Archetype::BadActor), asia, a);
    const BeliefGraph gb = sample_belief_graph(make_profile(Archetype::BadActor), asia, b);
    EXPECT_EQ(ga.asserted_edges(), gb.asserted_edges());
    EXPECT_EQ(ga.known_count(), gb.known_count());
}

TEST(AnswerEdge, Examples) {
    const Dag asia = asia_fixture();
    const ExpertProfile omni = make_profile(Archetype::Omniscient);
    Rng rng(1);
    const BeliefGraph g = sample_belief_graph(omni, asia, rng);
    for (int k = 0; k < 20; ++k)
        EXPECT_EQ(answer_edge(omni, g, idx(asia, "Smoking"), idx(asia, "LungCancer"), rng), 1);
    EXPECT_EQ(answer_edge(omni, g, idx(asia, "LungCancer"), idx(asia, "Smoking"), rng), -1);

    // Unknown pairs: a belief graph with nothing set.
    const BeliefGraph blank(asia.nodes());
    EXPECT_EQ(answer_edge(omni, blank, 0, 1, rng), 0);
}

TEST(AnswerEdge, UncertainAbstainsAtOneMinusConfidenceOnKnownPairs) {
    const Dag asia = asia_fixture();
    ExpertProfile uncertain = make_profile(Archetype::Uncertain);
    BeliefGraph g(asia.nodes());
    const NodeIndex s = idx(asia, "Smoking"), l = idx(asia, "LungCancer");
    g.set(s, l, PairRelation::Forward);
    Rng rng(5);
    int zeros = 0;
    for (int k = 0; k < 1000; ++k) zeros += answer_edge(uncertain, g, s, l, rng) == 0;
    EXPECT_NEAR(zeros / 1000.0, 0.7, 0.03);
}

TEST(AnswerEdge, AbstentionRateIsOneMinusConfidenceTimesKnownRate) {
    const Dag asia = asia_fixture();
    const auto queries = all_pair_queries(asia);
    const ExpertProfile p = make_profile(Archetype::Uncertain);
    double zeros = 0.0, total = 0.0, expected = 0.0;
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        SimulatedExpert e("u", p, asia, Rng(seed));
        const double known = static_cast<double>(e.belief().known_count()) / 28.0;
        for (int rep = 0; rep < 25; ++rep)
            for (const Response& r : e.answer_all(queries, Protocol::EdgeWise)) {
                zeros += r.value == 0;
                total += 1.0;
                expected += 1.0 - p.confidence * known;
            }
    }
    // Known pairs whose believed relation is "none" also produce zeros.
    EXPECT_GE(zeros / total, expected / total - 0.03);
}

TEST(AnswerOrder, OmniscientExamples) {
    const Dag asia = asia_fixture();
    SimulatedExpert e("o", make_profile(Archetype::Omniscient), asia, Rng(0));
    // Answers are stored canonically: LungCancer < Smoking, so the sign flips.
    EXPECT_EQ(e.answer(Query("Smoking", "LungCancer"), Protocol::OrderingWise).value, -10);
    EXPECT_EQ(e.answer(Query("Bronchitis", "Dyspnea"), Protocol::OrderingWise).value, 10);
    // path length 2 on 8 nodes: round(10 * (1 - 1/8)) = 9
    const Response r = e.answer(Query("Smoking", "Dyspnea"), Protocol::OrderingWise);
    EXPECT_EQ(r.query, Query("Dyspnea", "Smoking"));
    EXPECT_EQ(r.value, -9);
    EXPECT_EQ(e.answer(Query("VisitAsia", "Smoking"), Protocol::OrderingWise).value, 0);
}

TEST(Responses, AlwaysInProtocolRangeAndReproducible) {
    const Dag asia = asia_fixture();
    const auto queries = all_pair_queries(asia);
    for (Archetype a : {Archetype::Omniscient, Archetype::PerfectIncomplete, Archetype::Imperfect,
                        Archetype::Uncertain, Archetype::BadActor})
        for (Protocol p : {Protocol::EdgeWise, Protocol::OrderingWise})
            for (std::uint64_t seed = 0; seed < 10; ++seed) {
                SimulatedExpert e1("x", make_profile(a), asia, expert_rng(seed, 1));
                SimulatedExpert e2("x", make_profile(a), asia, expert_rng(seed, 1));
                const auto r1 = e1.answer_all(queries, p);
                const auto r2 = e2.answer_all(queries, p);
                ASSERT_EQ(r1.size(), r2.size());
                for (std::size_t k = 0; k < r1.size(); ++k) {
                    EXPECT_EQ(r1[k].value, r2[k].value);
                    EXPECT_LE(std::abs(r1[k].value), protocol_limit(p));
                }
            }
}

TEST(Responses, OmniscientIsConsistentWithTruthUnderBothProtocols) {
    const Dag asia = asia_fixture();
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        SimulatedExpert e("o", make_profile(Archetype::Omniscient), asia, Rng(seed));
        for (const Response& r : e.answer_all(all_pair_queries(asia), Protocol::EdgeWise))
            EXPECT_EQ(r.value, to_sign(asia.relation(asia.index_of(r.query.u), asia.index_of(r.query.v))));
        for (const Response& r : e.answer_all(all_pair_queries(asia), Protocol::OrderingWise)) {
            const bool down = reachable(asia, r.query.u, r.query.v).has_value();
            const bool up = reachable(asia, r.query.v, r.query.u).has_value();
            EXPECT_EQ(r.value > 0, down);
            EXPECT_EQ(r.value < 0, up);
        }
    }
}

TEST(Responses, PerfectIncompleteAssertionsHavePrecisionOne) {
    const Dag asia = asia_fixture();
    const auto ks = testing_support::crowd_transcript(asia, Archetype::PerfectIncomplete, 50, 9, Protocol::EdgeWise);
    for (const Response& r : ks) {
        if (r.value == 0) continue;
        EXPECT_EQ(r.value, to_sign(asia.relation(asia.index_of(r.query.u), asia.index_of(r.query.v))));
    }
}

TEST(Crowd, CountExpandsIdsAndSeeds) {
    const auto crowd = crowd_from_json(nlohmann::json::parse(
        R"([{"expert_id": "imp", "archetype": "Imperfect", "seed": 10, "count": 3},
            {"expert_id": "x", "profile": {"completeness": 0.5, "validity": 0.5, "confidence": 0.5, "trustworthiness": 1}}])"));
    ASSERT_EQ(crowd.size(), 4u);
    EXPECT_EQ(crowd[0].expert_id, "imp-1");
    EXPECT_EQ(crowd[2].expert_id, "imp-3");
    EXPECT_EQ(crowd[2].seed, 12u);
    EXPECT_FALSE(crowd[3].profile.archetype.has_value());
    EXPECT_EQ(crowd_from_json(crowd_to_json(crowd)).size(), 4u);
    EXPECT_THROW(crowd_from_json(nlohmann::json::parse(R"([{"expert_id": "a"}])")), Error);
}

TEST(Transcript, CsvRoundTrip) {
    const Dag asia = asia_fixture();
    const auto ks = testing_support::crowd_transcript(asia, Archetype::Imperfect, 3, 4, Protocol::OrderingWise);
    std::stringstream buffer;
    write_transcript_csv(buffer, ks);
    const KnowledgeSet back = read_transcript_csv(buffer);
    ASSERT_EQ(back.size(), ks.size());
    for (std::size_t k = 0; k < ks.size(); ++k) {
        EXPECT_EQ(back[k].query, ks[k].query);
        EXPECT_EQ(back[k].value, ks[k].value);
        EXPECT_EQ(back[k].expert_id, ks[k].expert_id);
        EXPECT_EQ(back[k].protocol, ks[k].protocol);
    }
}

TEST(Knowledge, ResponsesAreCanonicalizedWithSignFlip) {
    const Response r = make_response("x", Query("b", "a"), Protocol::EdgeWise, 1);
    EXPECT_EQ(r.query, Query("a", "b"));
    EXPECT_EQ(r.value, -1);
    EXPECT_THROW(make_response("x", Query("a", "b"), Protocol::EdgeWise, 2), Error);
    EXPECT_THROW(make_response("x", Query("a", "b"), Protocol::OrderingWise, 11), Error);
    EXPECT_THROW(Query("a", "a"), Error);
}
