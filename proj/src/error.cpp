#include "crowdcausal/error.hpp"

#include <nlohmann/json.hpp>

namespace crowdcausal {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::CycleError: return "CycleError";
        case ErrorCode::UnknownNode: return "UnknownNode";
        case ErrorCode::NodeSetMismatch: return "NodeSetMismatch";
        case ErrorCode::TooLarge: return "TooLarge";
        case ErrorCode::InvalidNetwork: return "InvalidNetwork";
        case ErrorCode::ProtocolMismatch: return "ProtocolMismatch";
        case ErrorCode::NonConvergence: return "NonConvergence";
        case ErrorCode::EmptyResponses: return "EmptyResponses";
        case ErrorCode::AllZeroWeights: return "AllZeroWeights";
        case ErrorCode::BudgetExceedsPool: return "BudgetExceedsPool";
        case ErrorCode::InvalidBudget: return "InvalidBudget";
        case ErrorCode::TooFewSamples: return "TooFewSamples";
        case ErrorCode::RankDeficient: return "RankDeficient";
        case ErrorCode::EmptySubset: return "EmptySubset";
        case ErrorCode::NoValidInstruments: return "NoValidInstruments";
        case ErrorCode::ConfigError: return "ConfigError";
        case ErrorCode::EndpointUnreachable: return "EndpointUnreachable";
        case ErrorCode::TranscriptMismatch: return "TranscriptMismatch";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::UnknownSession: return "UnknownSession";
        case ErrorCode::SessionExhausted: return "SessionExhausted";
        case ErrorCode::NoPendingQuery: return "NoPendingQuery";
        case ErrorCode::OutOfRange: return "OutOfRange";
        case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

std::string Error::to_json_line() const {
    nlohmann::json j;
    j["error_code"] = std::string(to_string(code_));
    j["module"] = module_;
    j["replicate"] = replicate_ ? nlohmann::json(*replicate_) : nlohmann::json(nullptr);
    j["message"] = what();
    return j.dump();
}

}  // namespace crowdcausal
