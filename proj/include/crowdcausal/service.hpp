#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "crowdcausal/design.hpp"
#include "crowdcausal/error.hpp"
#include "crowdcausal/graph.hpp"
#include "crowdcausal/knowledge.hpp"

namespace httplib {
class Server;
}

namespace crowdcausal {

/// POST /sessions body: {"network": "asia" | {"nodes", "edges"?, "descriptions"?},
/// "protocol", "criterion", "budget", "seed"?}. Edges, when given, are ignored by the service.
struct SessionSpec {
    Network network;
    Protocol protocol = Protocol::OrderingWise;
    Criterion criterion = Criterion::EIG;
    int budget = 0;
    std::uint64_t seed = 0;  // Random criterion only

    nlohmann::json to_json() const;
};

/// Throws InvalidNetwork, InvalidBudget, ConfigError.
SessionSpec session_spec_from_json(const nlohmann::json& j);

struct PendingQuery {
    Query pair;  // canonical
    std::string question_text;
    int remaining = 0;

    nlohmann::json to_json() const;
};

/// Survey question wording for one pair, using the node descriptions.
std::string question_text(const Network& network, const Query& pair, Protocol protocol);

/// One elicitation session with a single respondent and one-query stages.
class Session {
public:
    Session(std::string id, SessionSpec spec);

    const std::string& id() const noexcept { return id_; }
    const SessionSpec& spec() const noexcept { return spec_; }

    /// Serves (and caches) the next pair. Throws SessionExhausted.
    PendingQuery next_query();
    /// Records an answer to the pending pair. Throws OutOfRange, NoPendingQuery.
    nlohmann::json submit(int value);
    /// Applies an answer for an explicit pair (log replay).
    void apply(const Query& pair, int value);

    nlohmann::json estimate() const;
    int remaining() const noexcept { return spec_.budget - static_cast<int>(responses_.size()); }
    const KnowledgeSet& responses() const noexcept { return responses_; }
    const Dag& current_estimate() const noexcept { return estimate_; }
    std::optional<Query> pending() const { return pending_; }

private:
    void recompute();
    double entropy() const;

    std::string id_;
    SessionSpec spec_;
    DesignState state_;
    std::vector<Query> pool_;
    PoolMode pool_mode_ = PoolMode::Remove;
    std::optional<Query> pending_;
    KnowledgeSet responses_;
    Dag estimate_;
    std::vector<double> entropy_trace_;
};

/// Thread-safe registry. With a data directory every session is mirrored to
/// `<dir>/<id>.jsonl` (one "create" event, then one "answer" event per response) and
/// rebuilt from those logs on construction.
class SessionManager {
public:
    explicit SessionManager(std::optional<std::filesystem::path> data_dir = std::nullopt);

    std::string create(const nlohmann::json& request);
    nlohmann::json next_query(const std::string& id);
    nlohmann::json submit(const std::string& id, const nlohmann::json& body);
    nlohmann::json estimate(const std::string& id) const;
    std::size_t size() const;

    /// Rebuilds a session from its event lines.
    static std::unique_ptr<Session> replay(const std::vector<nlohmann::json>& events);

private:
    struct Entry {
        std::unique_ptr<Session> session;
        mutable std::shared_mutex mutex;
    };

    std::shared_ptr<Entry> find(const std::string& id) const;
    void append(const std::string& id, const nlohmann::json& event) const;
    std::string fresh_id();

    std::optional<std::filesystem::path> data_dir_;
    mutable std::shared_mutex registry_mutex_;
    std::map<std::string, std::shared_ptr<Entry>> sessions_;
    std::uint64_t counter_ = 0;
    std::uint64_t salt_ = 0;
};

/// HTTP status for a library error code.
int http_status(ErrorCode code);

/// Installs the session routes. When `token` is set every request must carry
/// `Authorization: Bearer <token>`.
void register_routes(httplib::Server& server, SessionManager& manager, std::optional<std::string> token = std::nullopt);

}  // namespace crowdcausal
