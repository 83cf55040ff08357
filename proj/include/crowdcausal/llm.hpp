#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "crowdcausal/graph.hpp"
#include "crowdcausal/knowledge.hpp"

namespace crowdcausal {

enum class LlmMode { Live, Mock };

struct LlmExpertConfig {
    std::string expert_id = "llm";
    LlmMode mode = LlmMode::Mock;
    std::string endpoint;          // Live: full URL of an OpenAI-compatible chat-completions route
    std::string model;
    std::string background;        // fills the "[Background Clarification]" slot
    double timeout_seconds = 60.0;
    std::optional<double> temperature;  // passed through untouched when set
    std::string api_key_env = "CROWDCAUSAL_LLM_API_KEY";
    std::string transcript_path;   // Mock
    bool verify = false;           // ask the verification follow-up and keep its answers

    void validate() const;  // throws ConfigError
};

/// {"expert_id", "mode": "mock"|"live", "endpoint", "model", "background", "timeout_seconds",
///  "temperature", "api_key_env", "transcript", "verify"}
LlmExpertConfig llm_config_from_json(const nlohmann::json& j);

struct ChatMessage {
    std::string role;
    std::string content;
};

/// Sends a conversation and returns the assistant reply.
class LlmTransport {
public:
    virtual ~LlmTransport() = default;
    virtual std::string complete(const std::vector<ChatMessage>& messages) = 0;
};

/// Replays the replies of a recorded transcript, one per call.
class MockTransport : public LlmTransport {
public:
    explicit MockTransport(std::vector<std::string> replies) : replies_(std::move(replies)) {}
    std::string complete(const std::vector<ChatMessage>& messages) override;

private:
    std::vector<std::string> replies_;
    std::size_t next_ = 0;
};

/// POSTs {model, messages, temperature?} with a bearer key read from the environment.
class HttpTransport : public LlmTransport {
public:
    explicit HttpTransport(LlmExpertConfig config);
    std::string complete(const std::vector<ChatMessage>& messages) override;

private:
    LlmExpertConfig config_;
};

/// Recorded exchange: {"queries": [["u", "v"], ...], "replies": ["...", ...]}.
struct MockTranscript {
    std::vector<Query> queries;  // in the orientation they were asked
    std::vector<std::string> replies;
};

MockTranscript load_mock_transcript(const std::string& path);
MockTranscript mock_transcript_from_json(const nlohmann::json& j);

/// Single-step survey prompt with the pair list and a reply-format instruction.
std::string build_survey_prompt(const LlmExpertConfig& config, const Network& network,
                                const std::vector<Query>& queries, Protocol protocol);
std::string verification_prompt();

struct ParsedRatings {
    std::vector<int> values;
    std::vector<std::string> warnings;
};

/// Reply grammar, first match wins: a JSON array of integers; lines enumerated 1..count, each
/// once (surrounding prose is ignored); one line per query (the last integer after any leading
/// enumerator); otherwise the k-th integer token for query k.
/// Unparseable or out-of-range ratings become 0 with a warning.
ParsedRatings parse_ratings(const std::string& reply, std::size_t count, Protocol protocol);

/// Asks `queries` through `transport`; the verification reply replaces the first when enabled.
KnowledgeSet llm_elicit(const LlmExpertConfig& config, const Network& network, const std::vector<Query>& queries,
                        Protocol protocol, LlmTransport& transport, std::vector<std::string>* warnings = nullptr);

/// Builds the transport from the config (Mock checks the transcript's query list).
KnowledgeSet llm_elicit(const LlmExpertConfig& config, const Network& network, const std::vector<Query>& queries,
                        Protocol protocol, std::vector<std::string>* warnings = nullptr);

}  // namespace crowdcausal
