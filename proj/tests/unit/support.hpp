#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "crowdcausal/error.hpp"
#include "crowdcausal/expert.hpp"
#include "crowdcausal/graph.hpp"
#include "crowdcausal/knowledge.hpp"

// Asserts that `stmt` throws crowdcausal::Error with the given code.
#define EXPECT_ERROR_CODE(stmt, expected_code)                                                 \
    do {                                                                                       \
        try {                                                                                  \
            stmt;                                                                              \
            ADD_FAILURE() << #stmt " did not throw";                                           \
        } catch (const ::crowdcausal::Error& error_) {                                         \
            EXPECT_EQ(::crowdcausal::to_string(error_.code()),                                 \
                      ::crowdcausal::to_string(::crowdcausal::ErrorCode::expected_code))       \
                << error_.what();                                                              \
        }                                                                                      \
    } while (0)

namespace testing_support {

using namespace crowdcausal;

/// Every expert answers every pair once.
inline KnowledgeSet crowd_transcript(const Dag& truth, Archetype archetype, int count, std::uint64_t run_seed,
                                     Protocol protocol, const std::string& prefix = "e") {
    KnowledgeSet all;
    const auto queries = all_pair_queries(truth);
    for (int k = 0; k < count; ++k) {
        SimulatedExpert expert(prefix + std::to_string(100 + k), make_profile(archetype), truth,
                               expert_rng(run_seed, static_cast<std::uint64_t>(k + 1)));
        auto own = expert.answer_all(queries, protocol);
        all.insert(all.end(), own.begin(), own.end());
    }
    return all;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("crowdcausal-test-" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

inline Dag chain(int n) {
    std::vector<std::string> nodes;
    std::vector<std::pair<std::string, std::string>> edges;
    for (int i = 0; i < n; ++i) nodes.push_back(std::string(1, static_cast<char>('a' + i)));
    for (int i = 0; i + 1 < n; ++i) edges.emplace_back(nodes[i], nodes[i + 1]);
    return Dag::from_names(nodes, edges);
}

}  // namespace testing_support
