#include "crowdcausal/service.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <random>
#include <regex>

#include <httplib.h>

#include "crowdcausal/aggregation.hpp"

namespace crowdcausal {

namespace {
constexpr const char* kModule = "elicitation-service";

std::string timestamp() {
    const auto now = std::chrono::system_clock::now();
    return std::to_string(std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count());
}

nlohmann::json error_body(const std::string& code, const std::string& message) {
    return {{"error_code", code}, {"message", message}};
}

NodePair resolve(const PairIndex& index, const Query& q) { return {index.node(q.u), index.node(q.v)}; }
}  // namespace

nlohmann::json SessionSpec::to_json() const {
    return {{"network", network_to_json(network)},
            {"protocol", crowdcausal::to_string(protocol)},
            {"criterion", crowdcausal::to_string(criterion)},
            {"budget", budget},
            {"seed", seed}};
}

SessionSpec session_spec_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw Error(ErrorCode::ConfigError, kModule, "session request must be a JSON object");
    SessionSpec spec;
    if (!j.contains("network")) throw Error(ErrorCode::InvalidNetwork, kModule, "network is required");
    const auto& network = j.at("network");
    if (network.is_string()) {
        if (network.get<std::string>() != "asia")
            throw Error(ErrorCode::InvalidNetwork, kModule, "unknown network fixture \"" + network.get<std::string>() + "\"");
        spec.network = load_network("asia");
    } else if (network.is_object()) {
        nlohmann::json copy = network;
        copy["edges"] = nlohmann::json::array();
        spec.network = network_from_json(copy);
    } else {
        throw Error(ErrorCode::InvalidNetwork, kModule, "network must be \"asia\" or an object");
    }
    if (spec.network.dag.size() < 2) throw Error(ErrorCode::InvalidNetwork, kModule, "network needs at least two nodes");
    spec.network.dag = Dag(spec.network.dag.nodes());

    try {
        spec.protocol = protocol_from_string(j.value("protocol", std::string("ordering")));
        spec.criterion = criterion_from_string(j.value("criterion", std::string("eig")));
        spec.seed = j.value("seed", std::uint64_t{0});
        if (!j.contains("budget") || !j.at("budget").is_number_integer())
            throw Error(ErrorCode::InvalidBudget, kModule, "budget must be an integer");
        spec.budget = j.at("budget").get<int>();
    } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorCode::ConfigError, kModule, std::string("malformed session request: ") + ex.what());
    }
    if (spec.budget < 1) throw Error(ErrorCode::InvalidBudget, kModule, "budget must be >= 1");
    return spec;
}

nlohmann::json PendingQuery::to_json() const {
    return {{"pair", {pair.u, pair.v}}, {"question_text", question_text}, {"remaining", remaining}};
}

std::string question_text(const Network& network, const Query& pair, Protocol protocol) {
    const std::string a = network.describe(pair.u);
    const std::string b = network.describe(pair.v);
    if (protocol == Protocol::OrderingWise)
        return "How strongly do you believe that " + a + " is an upstream causal variable of " + b +
               "? Answer with an integer from -10 to 10: positive if " + a + " is upstream of " + b +
               ", negative for the opposite, 0 for no causal relationship.";
    return "When the question is presented as " + a + " – " + b + ", please use 1 to denote a direct causal influence from " +
           a + " → " + b + ", use -1 to denote " + a + " ← " + b + ", and use 0 to denote no direct causal influence between " +
           a + " and " + b + ".";
}

Session::Session(std::string id, SessionSpec spec) : id_(std::move(id)), spec_(std::move(spec)) {
    const auto& nodes = spec_.network.dag.nodes();
    state_ = DesignState::initial(nodes, spec_.protocol);
    pool_ = all_pair_queries(spec_.network.dag);
    pool_mode_ = static_cast<std::size_t>(spec_.budget) <= pool_.size() ? PoolMode::Remove : PoolMode::Fixed;
    estimate_ = Dag(nodes);
    entropy_trace_.push_back(entropy());
}

PendingQuery Session::next_query() {
    if (remaining() <= 0) throw Error(ErrorCode::SessionExhausted, kModule, "session " + id_ + " has no budget left");
    if (!pending_) {
        Rng rng(spec_.seed + responses_.size());
        const StageDesign design = select_stage(pool_, 1, spec_.criterion, state_, &rng,
                                                static_cast<int>(responses_.size()) + 1);
        pending_ = design.queries.front();
    }
    return {*pending_, question_text(spec_.network, *pending_, spec_.protocol), remaining()};
}

nlohmann::json Session::submit(int value) {
    const int limit = protocol_limit(spec_.protocol);
    if (value < -limit || value > limit)
        throw Error(ErrorCode::OutOfRange, kModule,
                    "answer " + std::to_string(value) + " outside [" + std::to_string(-limit) + ", " +
                        std::to_string(limit) + "]");
    if (!pending_) throw Error(ErrorCode::NoPendingQuery, kModule, "session " + id_ + " has no pending query");
    apply(*pending_, value);
    nlohmann::json summary = estimate();
    summary["remaining"] = remaining();
    return summary;
}

void Session::apply(const Query& pair, int value) {
    if (remaining() <= 0) throw Error(ErrorCode::SessionExhausted, kModule, "session " + id_ + " has no budget left");
    Response r = make_response("respondent", pair, spec_.protocol, value);
    const PairIndex& index = state_.posterior.index();
    const NodePair p = resolve(index, r.query);
    if (spec_.protocol == Protocol::EdgeWise) {
        state_.posterior.observe(r);
    } else {
        state_.belief.observe(p.u, p.v, static_cast<double>(r.value) / 10.0);
    }
    state_.answered.push_back({p.u, p.v, 1.0});
    if (pool_mode_ == PoolMode::Remove) std::erase(pool_, r.query);
    responses_.push_back(std::move(r));
    pending_.reset();
    recompute();
    entropy_trace_.push_back(entropy());
}

void Session::recompute() {
    const auto& nodes = spec_.network.dag.nodes();
    if (spec_.protocol == Protocol::EdgeWise)
        estimate_ = state_.posterior.map_graph();
    else
        estimate_ = individual_map_graph(responses_, nodes);
}

double Session::entropy() const {
    if (spec_.protocol == Protocol::OrderingWise) return state_.belief.entropy();
    double h = 0.0;
    for (std::size_t s = 0; s < state_.posterior.index().size(); ++s) h += state_.posterior.predictive_entropy(s);
    return h;
}

nlohmann::json Session::estimate() const {
    const PairIndex& index = state_.posterior.index();
    const auto& nodes = index.nodes();
    auto forward_confidence = [&](NodeIndex u, NodeIndex v) {
        if (spec_.protocol == Protocol::OrderingWise) return state_.belief.order_probability(u, v);
        const Triple p = state_.posterior.probabilities(index.slot(u, v));
        return index.pairs()[index.slot(u, v)].u == u ? p[0] : p[2];
    };

    nlohmann::json edges = nlohmann::json::array();
    for (const Edge& e : estimate_.edges())
        edges.push_back({nodes[e.from], nodes[e.to], forward_confidence(e.from, e.to)});
    nlohmann::json pairs = nlohmann::json::array();
    for (const NodePair& p : index.pairs()) {
        nlohmann::json entry{{"pair", {nodes[p.u], nodes[p.v]}},
                             {"forward", forward_confidence(p.u, p.v)},
                             {"backward", forward_confidence(p.v, p.u)}};
        if (spec_.protocol == Protocol::EdgeWise) entry["none"] = state_.posterior.probabilities(index.slot(p.u, p.v))[1];
        pairs.push_back(std::move(entry));
    }
    return {{"edges", edges},
            {"pairs", pairs},
            {"entropy", entropy_trace_},
            {"answered", responses_.size()},
            {"remaining", remaining()}};
}

SessionManager::SessionManager(std::optional<std::filesystem::path> data_dir) : data_dir_(std::move(data_dir)) {
    salt_ = std::random_device{}();
    salt_ = (salt_ << 32) ^ std::random_device{}();
    if (!data_dir_) return;
    std::error_code ec;
    std::filesystem::create_directories(*data_dir_, ec);
    if (ec) throw Error(ErrorCode::IoError, kModule, "cannot create " + data_dir_->string() + ": " + ec.message());
    for (const auto& file : std::filesystem::directory_iterator(*data_dir_)) {
        if (file.path().extension() != ".jsonl") continue;
        std::ifstream in(file.path());
        std::vector<nlohmann::json> events;
        for (std::string line; std::getline(in, line);) {
            if (line.empty()) continue;
            try {
                events.push_back(nlohmann::json::parse(line));
            } catch (const nlohmann::json::parse_error& ex) {
                throw Error(ErrorCode::ParseError, kModule, file.path().string() + ": " + ex.what());
            }
        }
        if (events.empty()) continue;
        auto entry = std::make_shared<Entry>();
        entry->session = replay(events);
        sessions_[entry->session->id()] = std::move(entry);
    }
}

std::unique_ptr<Session> SessionManager::replay(const std::vector<nlohmann::json>& events) {
    if (events.empty() || events.front().value("event", "") != "create")
        throw Error(ErrorCode::ParseError, kModule, "session log must start with a create event");
    try {
        auto session = std::make_unique<Session>(events.front().at("session_id").get<std::string>(),
                                                 session_spec_from_json(events.front().at("request")));
        for (std::size_t k = 1; k < events.size(); ++k) {
            const auto& e = events[k];
            if (e.value("event", "") != "answer") continue;
            const auto pair = e.at("pair");
            session->apply(Query(pair.at(0).get<std::string>(), pair.at(1).get<std::string>()), e.at("value").get<int>());
        }
        return session;
    } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorCode::ParseError, kModule, std::string("malformed session log: ") + ex.what());
    }
}

std::string SessionManager::fresh_id() {
    std::uint64_t x = salt_ + 0x9E3779B97F4A7C15ULL * ++counter_;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    x ^= x >> 31;
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
    return buf;
}

std::string SessionManager::create(const nlohmann::json& request) {
    SessionSpec spec = session_spec_from_json(request);
    std::unique_lock lock(registry_mutex_);
    std::string id = fresh_id();
    while (sessions_.count(id)) id = fresh_id();
    auto entry = std::make_shared<Entry>();
    entry->session = std::make_unique<Session>(id, spec);
    append(id, {{"event", "create"}, {"session_id", id}, {"request", spec.to_json()}, {"at", timestamp()}});
    sessions_[id] = std::move(entry);
    return id;
}

std::shared_ptr<SessionManager::Entry> SessionManager::find(const std::string& id) const {
    std::shared_lock lock(registry_mutex_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(ErrorCode::UnknownSession, kModule, "no session \"" + id + "\"");
    return it->second;
}

nlohmann::json SessionManager::next_query(const std::string& id) {
    const auto entry = find(id);
    std::unique_lock lock(entry->mutex);
    return entry->session->next_query().to_json();
}

nlohmann::json SessionManager::submit(const std::string& id, const nlohmann::json& body) {
    const auto entry = find(id);
    if (!body.is_object() || !body.contains("value") || !body.at("value").is_number_integer())
        throw Error(ErrorCode::ConfigError, kModule, "body must be {\"value\": <integer>}");
    const auto raw = body.at("value").get<long long>();
    if (raw > 1000 || raw < -1000) throw Error(ErrorCode::OutOfRange, kModule, "answer " + std::to_string(raw) + " is out of range");
    const int value = static_cast<int>(raw);
    std::unique_lock lock(entry->mutex);
    const std::optional<Query> pair = entry->session->pending();
    nlohmann::json summary = entry->session->submit(value);
    append(id, {{"event", "answer"}, {"pair", {pair->u, pair->v}}, {"value", value}, {"at", timestamp()}});
    return {{"estimate_summary", summary}};
}

nlohmann::json SessionManager::estimate(const std::string& id) const {
    const auto entry = find(id);
    std::shared_lock lock(entry->mutex);
    return entry->session->estimate();
}

std::size_t SessionManager::size() const {
    std::shared_lock lock(registry_mutex_);
    return sessions_.size();
}

void SessionManager::append(const std::string& id, const nlohmann::json& event) const {
    if (!data_dir_) return;
    const auto path = *data_dir_ / (id + ".jsonl");
    std::ofstream out(path, std::ios::app | std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, kModule, "cannot append to " + path.string());
    out << event.dump() << '\n';
}

int http_status(ErrorCode code) {
    switch (code) {
        case ErrorCode::UnknownSession: return 404;
        case ErrorCode::NoPendingQuery:
        case ErrorCode::SessionExhausted: return 409;
        case ErrorCode::OutOfRange:
        case ErrorCode::InvalidBudget:
        case ErrorCode::InvalidNetwork: return 422;
        case ErrorCode::IoError: return 500;
        default: return 400;
    }
}

void register_routes(httplib::Server& server, SessionManager& manager, std::optional<std::string> token) {
    using httplib::Request;
    using httplib::Response;

    auto send = [](Response& res, int status, const nlohmann::json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    };
    // Wraps a handler with auth, JSON decoding and error mapping.
    auto guarded = [send, token](auto handler) {
        return [send, token, handler](const Request& req, Response& res) {
            if (token && req.get_header_value("Authorization") != "Bearer " + *token) {
                send(res, 401, error_body("Unauthorized", "missing or wrong bearer token"));
                return;
            }
            try {
                handler(req, res);
            } catch (const Error& ex) {
                send(res, http_status(ex.code()), error_body(std::string(to_string(ex.code())), ex.what()));
            } catch (const nlohmann::json::exception& ex) {
                send(res, 400, error_body(std::string(to_string(ErrorCode::ParseError)), ex.what()));
            } catch (const std::exception& ex) {
                send(res, 500, error_body("InternalError", ex.what()));
            }
        };
    };
    auto parse_body = [](const Request& req) {
        try {
            return nlohmann::json::parse(req.body);
        } catch (const nlohmann::json::parse_error& ex) {
            throw Error(ErrorCode::ParseError, kModule, std::string("request body is not JSON: ") + ex.what());
        }
    };

    server.Post("/sessions", guarded([&manager, send, parse_body](const Request& req, Response& res) {
                    send(res, 201, {{"session_id", manager.create(parse_body(req))}});
                }));
    server.Get(R"(/sessions/([^/]+)/next-query)", guarded([&manager, send](const Request& req, Response& res) {
                   send(res, 200, manager.next_query(req.matches[1]));
               }));
    server.Post(R"(/sessions/([^/]+)/responses)",
                guarded([&manager, send, parse_body](const Request& req, Response& res) {
                    send(res, 200, manager.submit(req.matches[1], parse_body(req)));
                }));
    server.Get(R"(/sessions/([^/]+)/estimate)", guarded([&manager, send](const Request& req, Response& res) {
                   send(res, 200, manager.estimate(req.matches[1]));
               }));
}

}  // namespace crowdcausal
