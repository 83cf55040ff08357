#include "crowdcausal/llm.hpp"

#include <cstdlib>
#include <limits>
#include <fstream>
#include <iostream>
#include <regex>
#include <sstream>

#include <httplib.h>

#include "crowdcausal/error.hpp"

namespace crowdcausal {

namespace {
constexpr const char* kModule = "harness-cli";

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

// Integer tokens not glued to letters, e.g. "-3" in "rating: -3" but not "2" in "X2".
std::vector<long long> integer_tokens(const std::string& text) {
    static const std::regex token(R"((^|[^A-Za-z0-9_.])([+-]?\d+)(?![A-Za-z0-9_]|\.\d))");
    std::vector<long long> out;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), token); it != std::sregex_iterator(); ++it) {
        try {
            out.push_back(std::stoll((*it)[2].str()));
        } catch (const std::out_of_range&) {
            out.push_back(std::numeric_limits<long long>::max());
        }
    }
    return out;
}

const std::regex& enumerator_pattern() {
    static const std::regex enumerator(R"(^\s*(?:(?:Q|Pair|Question)\s*)?\(?(\d+)\s*[\.\):]\s*)", std::regex::icase);
    return enumerator;
}

std::string strip_enumerator(const std::string& line) {
    return std::regex_replace(line, enumerator_pattern(), "", std::regex_constants::format_first_only);
}

// Lines led by enumerators 1..count, each exactly once; empty otherwise.
std::vector<std::optional<long long>> numbered_ratings(const std::vector<std::string>& lines, std::size_t count) {
    std::vector<std::optional<long long>> raw(count);
    std::vector<bool> seen(count, false);
    std::size_t numbered = 0;
    for (const auto& line : lines) {
        std::smatch m;
        if (!std::regex_search(line, m, enumerator_pattern())) continue;
        std::size_t k = 0;
        try {
            k = std::stoul(m[1].str());
        } catch (const std::exception&) {
            return {};
        }
        if (k < 1 || k > count || seen[k - 1]) return {};
        seen[k - 1] = true;
        ++numbered;
        const auto tokens = integer_tokens(m.suffix().str());
        if (!tokens.empty()) raw[k - 1] = tokens.back();
    }
    if (numbered != count) return {};
    return raw;
}

struct UrlParts {
    std::string origin;
    std::string path;
};

UrlParts split_url(const std::string& url) {
    const auto scheme = url.find("://");
    if (scheme == std::string::npos) throw Error(ErrorCode::ConfigError, kModule, "endpoint must be an absolute URL");
    const auto slash = url.find('/', scheme + 3);
    if (slash == std::string::npos) return {url, "/"};
    return {url.substr(0, slash), url.substr(slash)};
}
}  // namespace

void LlmExpertConfig::validate() const {
    if (mode == LlmMode::Mock && transcript_path.empty())
        throw Error(ErrorCode::ConfigError, kModule, "mock LLM expert needs a transcript path");
    if (mode == LlmMode::Live && (endpoint.empty() || model.empty()))
        throw Error(ErrorCode::ConfigError, kModule, "live LLM expert needs an endpoint and a model");
    if (!(timeout_seconds > 0)) throw Error(ErrorCode::ConfigError, kModule, "timeout_seconds must be positive");
}

LlmExpertConfig llm_config_from_json(const nlohmann::json& j) {
    LlmExpertConfig c;
    try {
        c.expert_id = j.value("expert_id", c.expert_id);
        const std::string mode = j.value("mode", std::string("mock"));
        if (mode == "mock") c.mode = LlmMode::Mock;
        else if (mode == "live") c.mode = LlmMode::Live;
        else throw Error(ErrorCode::ConfigError, kModule, "llm.mode must be \"mock\" or \"live\"");
        c.endpoint = j.value("endpoint", c.endpoint);
        c.model = j.value("model", c.model);
        c.background = j.value("background", c.background);
        c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
        if (j.contains("temperature") && !j.at("temperature").is_null()) c.temperature = j.at("temperature").get<double>();
        c.api_key_env = j.value("api_key_env", c.api_key_env);
        c.transcript_path = j.value("transcript", c.transcript_path);
        c.verify = j.value("verify", c.verify);
    } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorCode::ConfigError, kModule, std::string("malformed llm expert: ") + ex.what());
    }
    c.validate();
    return c;
}

std::string MockTransport::complete(const std::vector<ChatMessage>&) {
    if (next_ >= replies_.size())
        throw Error(ErrorCode::TranscriptMismatch, kModule,
                    "transcript has " + std::to_string(replies_.size()) + " replies; request " +
                        std::to_string(next_ + 1) + " has none");
    return replies_[next_++];
}

HttpTransport::HttpTransport(LlmExpertConfig config) : config_(std::move(config)) {}

std::string HttpTransport::complete(const std::vector<ChatMessage>& messages) {
    const UrlParts url = split_url(config_.endpoint);
    httplib::Client client(url.origin);
    const auto seconds = static_cast<time_t>(config_.timeout_seconds);
    client.set_connection_timeout(seconds);
    client.set_read_timeout(seconds);
    client.set_write_timeout(seconds);

    httplib::Headers headers;
    if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key)
        headers.emplace("Authorization", std::string("Bearer ") + key);

    nlohmann::json body{{"model", config_.model}, {"messages", nlohmann::json::array()}};
    for (const auto& m : messages) body["messages"].push_back({{"role", m.role}, {"content", m.content}});
    if (config_.temperature) body["temperature"] = *config_.temperature;

    const auto response = client.Post(url.path, headers, body.dump(), "application/json");
    if (!response)
        throw Error(ErrorCode::EndpointUnreachable, kModule,
                    "cannot reach " + url.origin + ": " + httplib::to_string(response.error()));
    if (response->status != 200)
        throw Error(ErrorCode::EndpointUnreachable, kModule,
                    "endpoint answered HTTP " + std::to_string(response->status));
    try {
        const auto reply = nlohmann::json::parse(response->body);
        return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorCode::ParseError, kModule, std::string("unexpected completion payload: ") + ex.what());
    }
}

MockTranscript mock_transcript_from_json(const nlohmann::json& j) {
    MockTranscript t;
    try {
        for (const auto& q : j.at("queries")) t.queries.emplace_back(q.at(0).get<std::string>(), q.at(1).get<std::string>());
        t.replies = j.at("replies").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorCode::ParseError, kModule, std::string("malformed mock transcript: ") + ex.what());
    }
    return t;
}

MockTranscript load_mock_transcript(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, kModule, "cannot open transcript " + path);
    try {
        return mock_transcript_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& ex) {
        throw Error(ErrorCode::ParseError, kModule, "transcript " + path + ": " + ex.what());
    }
}

std::string build_survey_prompt(const LlmExpertConfig& config, const Network& network,
                                const std::vector<Query>& queries, Protocol protocol) {
    std::ostringstream out;
    const std::string background = config.background.empty() ? "causal inference" : config.background;
    out << "You are an expert in " << background
        << ". Based on your expertise,  answer the following survey. For each pair, please answer the question: ";
    if (protocol == Protocol::OrderingWise) {
        out << "‘How strongly do you believe that Factor A is an upstream causal variable of Factor B "
               "(A → B)?’";
    } else {
        out << "‘When the question is presented as Factor A – Factor B, please use 1 to denote a direct causal "
               "influence from A → B, use -1 to denote A ← B, and use 0 to denote no direct causal influence "
               "between A and B.’";
    }
    out << " Output [Rating answers].\n\n";
    for (std::size_t k = 0; k < queries.size(); ++k)
        out << (k + 1) << ". Factor A: " << network.describe(queries[k].u)
            << "; Factor B: " << network.describe(queries[k].v) << "\n";
    const int limit = protocol_limit(protocol);
    out << "\nReply with exactly one line per pair in the form \"<number>: <rating>\", where each rating is an "
           "integer from "
        << -limit << " to " << limit << ".";
    return out.str();
}

std::string verification_prompt() {
    return "Please confirm the correctness of the causal relationships step by step and check the prior knowledge "
           "provided by the survey. Output [Rating answers].";
}

ParsedRatings parse_ratings(const std::string& reply, std::size_t count, Protocol protocol) {
    ParsedRatings out;
    const int limit = protocol_limit(protocol);
    std::vector<std::optional<long long>> raw(count);

    bool parsed = false;
    const std::string trimmed = trim(reply);
    if (!trimmed.empty() && trimmed.front() == '[') {
        try {
            const auto arr = nlohmann::json::parse(trimmed);
            if (arr.is_array()) {
                parsed = true;
                if (arr.size() != count)
                    out.warnings.push_back("JSON reply has " + std::to_string(arr.size()) + " ratings for " +
                                           std::to_string(count) + " queries");
                for (std::size_t k = 0; k < count && k < arr.size(); ++k)
                    if (arr[k].is_number_integer()) raw[k] = arr[k].get<long long>();
            }
        } catch (const nlohmann::json::exception&) {
        }
    }
    if (!parsed) {
        std::vector<std::string> lines;
        std::istringstream in(reply);
        for (std::string line; std::getline(in, line);)
            if (!trim(line).empty()) lines.push_back(line);
        if (auto numbered = numbered_ratings(lines, count); !numbered.empty()) {
            raw = std::move(numbered);
        } else if (lines.size() == count) {
            for (std::size_t k = 0; k < count; ++k) {
                const auto tokens = integer_tokens(strip_enumerator(lines[k]));
                if (!tokens.empty()) raw[k] = tokens.back();
            }
        } else {
            const auto tokens = integer_tokens(reply);
            for (std::size_t k = 0; k < count && k < tokens.size(); ++k) raw[k] = tokens[k];
        }
    }

    out.values.assign(count, 0);
    for (std::size_t k = 0; k < count; ++k) {
        if (!raw[k]) {
            out.warnings.push_back("query " + std::to_string(k + 1) + ": no rating found, recorded as 0");
        } else if (*raw[k] < -limit || *raw[k] > limit) {
            out.warnings.push_back("query " + std::to_string(k + 1) + ": rating " + std::to_string(*raw[k]) +
                                   " outside [" + std::to_string(-limit) + ", " + std::to_string(limit) +
                                   "], recorded as 0");
        } else {
            out.values[k] = static_cast<int>(*raw[k]);
        }
    }
    return out;
}

KnowledgeSet llm_elicit(const LlmExpertConfig& config, const Network& network, const std::vector<Query>& queries,
                        Protocol protocol, LlmTransport& transport, std::vector<std::string>* warnings) {
    if (queries.empty()) throw Error(ErrorCode::ConfigError, kModule, "llm_elicit needs at least one query");
    for (const Query& q : queries) {
        network.dag.index_of(q.u);
        network.dag.index_of(q.v);
    }
    std::vector<ChatMessage> messages{{"user", build_survey_prompt(config, network, queries, protocol)}};
    std::string reply = transport.complete(messages);
    if (config.verify) {
        messages.push_back({"assistant", reply});
        messages.push_back({"user", verification_prompt()});
        reply = transport.complete(messages);
    }
    const ParsedRatings ratings = parse_ratings(reply, queries.size(), protocol);
    for (const auto& w : ratings.warnings) {
        std::clog << "warning: [" << kModule << "] " << config.expert_id << ": " << w << '\n';
        if (warnings) warnings->push_back(w);
    }
    KnowledgeSet out;
    out.reserve(queries.size());
    for (std::size_t k = 0; k < queries.size(); ++k)
        out.push_back(make_response(config.expert_id, queries[k], protocol, ratings.values[k]));
    return out;
}

KnowledgeSet llm_elicit(const LlmExpertConfig& config, const Network& network, const std::vector<Query>& queries,
                        Protocol protocol, std::vector<std::string>* warnings) {
    config.validate();
    if (config.mode == LlmMode::Live) {
        HttpTransport transport(config);
        return llm_elicit(config, network, queries, protocol, transport, warnings);
    }
    const MockTranscript transcript = load_mock_transcript(config.transcript_path);
    if (transcript.queries.size() != queries.size())
        throw Error(ErrorCode::TranscriptMismatch, kModule,
                    "transcript covers " + std::to_string(transcript.queries.size()) + " queries, asked " +
                        std::to_string(queries.size()));
    for (std::size_t k = 0; k < queries.size(); ++k)
        if (transcript.queries[k].u != queries[k].u || transcript.queries[k].v != queries[k].v)
            throw Error(ErrorCode::TranscriptMismatch, kModule,
                        "transcript query " + std::to_string(k + 1) + " is (" + transcript.queries[k].u + ", " +
                            transcript.queries[k].v + "), asked (" + queries[k].u + ", " + queries[k].v + ")");
    MockTransport transport(transcript.replies);
    return llm_elicit(config, network, queries, protocol, transport, warnings);
}

}  // namespace crowdcausal
