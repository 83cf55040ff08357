#include "crowdcausal/knowledge.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "crowdcausal/error.hpp"

namespace crowdcausal {

namespace {
constexpr const char* kModule = "expert-sim";

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}
}  // namespace

std::string to_string(Protocol protocol) {
    return protocol == Protocol::EdgeWise ? "edge" : "ordering";
}

Protocol protocol_from_string(const std::string& text) {
    if (text == "edge" || text == "edge-wise" || text == "EdgeWise") return Protocol::EdgeWise;
    if (text == "ordering" || text == "ordering-wise" || text == "OrderingWise")
        return Protocol::OrderingWise;
    throw Error(ErrorCode::ConfigError, kModule, "unknown protocol: " + text);
}

Query::Query(std::string a, std::string b) : u(std::move(a)), v(std::move(b)) {
    if (u == v) throw Error(ErrorCode::UnknownNode, kModule, "query needs two distinct nodes: " + u);
}

Query Query::canonical() const {
    if (is_canonical()) return *this;
    return Query(v, u);
}

Response make_response(std::string expert_id, const Query& query, Protocol protocol, int value) {
    const int limit = protocol_limit(protocol);
    if (value < -limit || value > limit)
        throw Error(ErrorCode::OutOfRange, kModule,
                    "value " + std::to_string(value) + " outside [-" + std::to_string(limit) + "," +
                        std::to_string(limit) + "]");
    Response r;
    r.query = query.canonical();
    r.protocol = protocol;
    r.value = query.is_canonical() ? value : -value;
    r.expert_id = std::move(expert_id);
    return r;
}

void write_transcript_csv(std::ostream& out, const KnowledgeSet& responses) {
    out << "expert_id,u,v,protocol,value\n";
    for (const Response& r : responses)
        out << r.expert_id << ',' << r.query.u << ',' << r.query.v << ',' << to_string(r.protocol) << ','
            << r.value << '\n';
}

KnowledgeSet read_transcript_csv(std::istream& in) {
    KnowledgeSet out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line_no == 1 && line.rfind("expert_id", 0) == 0) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != 5)
            throw Error(ErrorCode::ParseError, kModule,
                        "transcript line " + std::to_string(line_no) + ": expected 5 fields");
        int value = 0;
        try {
            std::size_t used = 0;
            value = std::stoi(fields[4], &used);
            if (used != fields[4].size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw Error(ErrorCode::ParseError, kModule,
                        "transcript line " + std::to_string(line_no) + ": bad value '" + fields[4] + "'");
        }
        out.push_back(make_response(fields[0], Query(fields[1], fields[2]),
                                    protocol_from_string(fields[3]), value));
    }
    return out;
}

KnowledgeSet load_transcript(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, kModule, "cannot open transcript: " + path);
    return read_transcript_csv(in);
}

void require_protocol(const KnowledgeSet& responses, Protocol protocol, const char* module) {
    for (const Response& r : responses)
        if (r.protocol != protocol)
            throw Error(ErrorCode::ProtocolMismatch, module,
                        "expected only " + to_string(protocol) + " responses, found " +
                            to_string(r.protocol));
}

}  // namespace crowdcausal
