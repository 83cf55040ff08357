#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace crowdcausal {

enum class ErrorCode {
    CycleError,
    UnknownNode,
    NodeSetMismatch,
    TooLarge,
    InvalidNetwork,
    ProtocolMismatch,
    NonConvergence,
    EmptyResponses,
    AllZeroWeights,
    BudgetExceedsPool,
    InvalidBudget,
    TooFewSamples,
    RankDeficient,
    EmptySubset,
    NoValidInstruments,
    ConfigError,
    EndpointUnreachable,
    TranscriptMismatch,
    ParseError,
    UnknownSession,
    SessionExhausted,
    NoPendingQuery,
    OutOfRange,
    IoError,
};

std::string_view to_string(ErrorCode code) noexcept;

// Every failure surfaced by the library carries a machine-readable code and the
// module that raised it. The harness attaches the replicate index on the way out.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, std::string module, const std::string& message)
        : std::runtime_error(message), code_(code), module_(std::move(module)) {}

    ErrorCode code() const noexcept { return code_; }
    const std::string& module() const noexcept { return module_; }
    const std::optional<int>& replicate() const noexcept { return replicate_; }

    Error with_replicate(int replicate) const {
        Error copy = *this;
        copy.replicate_ = replicate;
        return copy;
    }

    // One line: {"error_code":...,"module":...,"replicate":...,"message":...}
    std::string to_json_line() const;

private:
    ErrorCode code_;
    std::string module_;
    std::optional<int> replicate_;
};

}  // namespace crowdcausal
