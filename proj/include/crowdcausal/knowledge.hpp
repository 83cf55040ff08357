#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace crowdcausal {

enum class Protocol { EdgeWise, OrderingWise };

std::string to_string(Protocol protocol);
Protocol protocol_from_string(const std::string& text);  // "edge" | "ordering"

inline int protocol_limit(Protocol protocol) { return protocol == Protocol::EdgeWise ? 1 : 10; }

/// Pair query over variable names. Stored canonically (u < v); `canonical()` flips the
/// orientation and reports whether it did so, so answers can be sign-corrected.
struct Query {
    std::string u;
    std::string v;

    Query() = default;
    Query(std::string a, std::string b);  // throws if a == b

    bool is_canonical() const { return u < v; }
    Query canonical() const;

    friend bool operator==(const Query&, const Query&) = default;
    friend auto operator<=>(const Query&, const Query&) = default;
};

struct Response {
    Query query;       // canonical
    Protocol protocol = Protocol::EdgeWise;
    int value = 0;     // +: query.u upstream of / causes query.v
    std::string expert_id;
};

/// Builds a response for an arbitrarily oriented query, canonicalizing it and
/// flipping the sign of `value` when needed. Validates the protocol range.
Response make_response(std::string expert_id, const Query& query, Protocol protocol, int value);

using KnowledgeSet = std::vector<Response>;

/// CSV transcript: header `expert_id,u,v,protocol,value`.
void write_transcript_csv(std::ostream& out, const KnowledgeSet& responses);
KnowledgeSet read_transcript_csv(std::istream& in);
KnowledgeSet load_transcript(const std::string& path);

/// Throws ProtocolMismatch unless every response uses `protocol`.
void require_protocol(const KnowledgeSet& responses, Protocol protocol, const char* module);

}  // namespace crowdcausal
