#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "crowdcausal/aggregation.hpp"
#include "crowdcausal/design.hpp"
#include "crowdcausal/error.hpp"
#include "crowdcausal/format.hpp"
#include "crowdcausal/harness.hpp"
#include "crowdcausal/iv.hpp"
#include "crowdcausal/knowledge.hpp"
#include "crowdcausal/metrics.hpp"
#include "crowdcausal/service.hpp"

// After Eigen: <resolv.h>, pulled in by httplib, defines a macro that collides with Eigen internals.
#include <httplib.h>

using namespace crowdcausal;
using nlohmann::json;

namespace {

constexpr const char* kModule = "harness-cli";

// Each subcommand builds one JSON document: the optional --config file, then explicit
// flags, then --set overrides.
struct Document {
    std::string config_path;
    std::vector<std::string> overrides;
    std::map<std::string, json> flags;

    json resolve() const {
        json doc = config_path.empty() ? json::object() : load_config_document(config_path);
        for (const auto& [key, value] : flags) doc[key] = value;
        for (const auto& o : overrides) apply_override(doc, o);
        return doc;
    }
};

template <typename T>
void add_flag(CLI::App* cmd, Document& doc, const std::string& flag, const std::string& key, const std::string& help) {
    cmd->add_option_function<T>(flag, [&doc, key](const T& v) { doc.flags[key] = v; }, help);
}

void add_common(CLI::App* cmd, Document& doc) {
    cmd->add_option("--config", doc.config_path, "JSON config file")->check(CLI::ExistingFile);
    cmd->add_option("--set", doc.overrides, "dotted-path override, e.g. design.stages=[4,4]");
}

template <typename T>
T require(const json& doc, const char* key) {
    if (!doc.contains(key)) throw Error(ErrorCode::ConfigError, kModule, std::string("missing --") + key);
    try {
        return doc.at(key).get<T>();
    } catch (const json::exception& ex) {
        throw Error(ErrorCode::ConfigError, kModule, std::string(key) + ": " + ex.what());
    }
}

template <typename T>
T optional_field(const json& doc, const char* key, T fallback) {
    if (!doc.contains(key)) return fallback;
    try {
        return doc.at(key).get<T>();
    } catch (const json::exception& ex) {
        throw Error(ErrorCode::ConfigError, kModule, std::string(key) + ": " + ex.what());
    }
}

Dag load_graph(const std::string& source) {
    if (source == "asia") return asia_fixture();
    return load_network(source).dag;
}

void emit(const json& value, const std::string& output) {
    if (output.empty()) {
        std::cout << value.dump(2) << '\n';
        return;
    }
    std::ofstream out(output, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, kModule, "cannot write " + output);
    out << value.dump(2) << '\n';
}

int run_simulate(const Document& d) {
    if (d.config_path.empty()) throw Error(ErrorCode::ConfigError, kModule, "simulate needs --config");
    json doc = d.resolve();
    const ExperimentConfig config =
        experiment_config_from_json(doc, std::filesystem::path(d.config_path).parent_path());
    const ExperimentReport report = run_experiment(config);
    write_experiment_outputs(report, config.output_dir);
    for (const auto& r : report.replicates)
        for (const auto& w : r.warnings) std::clog << "warning: replicate " << r.replicate << ": " << w << '\n';
    std::cout << report.summary().dump() << '\n';
    return 0;
}

int run_aggregate(const Document& d) {
    const json doc = d.resolve();
    const KnowledgeSet responses = load_transcript(require<std::string>(doc, "transcript"));
    const Dag reference = load_graph(optional_field<std::string>(doc, "network", "asia"));
    const Aggregation aggregation =
        aggregation_from_string(optional_field<std::string>(doc, "aggregation", "query-level"));
    const Dag estimate =
        estimate_structure(responses, reference.nodes(), aggregation, optional_field<std::uint64_t>(doc, "seed", 0));
    emit(network_to_json(estimate), optional_field<std::string>(doc, "output", ""));
    return 0;
}

int run_design(const Document& d) {
    const json doc = d.resolve();
    const Dag reference = load_graph(optional_field<std::string>(doc, "network", "asia"));
    const Protocol protocol = protocol_from_string(optional_field<std::string>(doc, "protocol", "ordering"));
    const Criterion criterion = criterion_from_string(optional_field<std::string>(doc, "criterion", "eig"));
    const int budget = require<int>(doc, "budget");
    DesignState state = DesignState::initial(reference.nodes(), protocol);
    std::vector<Query> pool = all_pair_queries(reference);
    const std::string transcript = optional_field<std::string>(doc, "transcript", "");
    if (!transcript.empty()) {
        const KnowledgeSet answered = load_transcript(transcript);
        require_protocol(answered, protocol, kModule);
        const PairIndex& index = state.posterior.index();
        for (const Response& r : answered) {
            if (protocol == Protocol::EdgeWise) state.posterior.observe(r);
            state.answered.push_back({index.node(r.query.u), index.node(r.query.v), 1.0});
        }
        if (protocol == Protocol::OrderingWise && !answered.empty())
            state.belief = GaussianBelief::laplace(infer_scores(answered, reference.nodes()), state.answered,
                                                   ScoreModelOptions{}.prior_scale);
        if (pool_mode_from_string(optional_field<std::string>(doc, "pool_mode", "fixed")) == PoolMode::Remove)
            for (const Response& r : answered) std::erase(pool, r.query);
    }
    Rng rng(optional_field<std::uint64_t>(doc, "seed", 0));
    emit(select_stage(pool, budget, criterion, state, &rng).to_json(), optional_field<std::string>(doc, "output", ""));
    return 0;
}

int run_iv_demo(const Document& d) {
    const json doc = d.resolve();
    const std::string scenario_source = optional_field<std::string>(doc, "scenario", "default");
    IvScenario scenario = default_iv_scenario();
    if (scenario_source != "default") {
        std::ifstream in(scenario_source);
        if (!in) throw Error(ErrorCode::IoError, kModule, "cannot open scenario " + scenario_source);
        try {
            scenario = iv_scenario_from_json(json::parse(in));
        } catch (const json::parse_error& ex) {
            throw Error(ErrorCode::ConfigError, kModule, scenario_source + ": " + ex.what());
        }
    }
    const auto n = optional_field<std::size_t>(doc, "n", 10000);
    const int replicates = optional_field<int>(doc, "replicates", 10);
    const auto seed = optional_field<std::uint64_t>(doc, "seed", 0);
    if (replicates < 1) throw Error(ErrorCode::ConfigError, kModule, "replicates must be >= 1");

    std::vector<std::size_t> all;
    std::vector<bool> valid;
    for (std::size_t j = 0; j < scenario.instrument_count(); ++j) {
        all.push_back(j);
        valid.push_back(scenario.gamma[j] == 0.0);
    }
    std::vector<IvResultRow> rows;
    for (int r = 0; r < replicates; ++r) {
        const std::uint64_t s = seed + static_cast<std::uint64_t>(r);
        Rng rng(s);
        const IvDataset data = simulate_iv(scenario, n, rng);
        const IvEstimate naive = tsls(data, all);
        rows.push_back({s, subset_label(naive.instruments), naive.beta_hat, naive.f_statistic});
        const IvEstimate filtered = knowledge_filter(valid, data);
        rows.push_back({s, subset_label(filtered.instruments), filtered.beta_hat, filtered.f_statistic});
    }
    const std::string output = optional_field<std::string>(doc, "output", "");
    if (output.empty()) {
        write_iv_results_csv(std::cout, rows);
    } else {
        std::ofstream out(output, std::ios::binary);
        if (!out) throw Error(ErrorCode::IoError, kModule, "cannot write " + output);
        write_iv_results_csv(out, rows);
    }
    return 0;
}

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, kModule, "cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& ex) {
        throw Error(ErrorCode::ParseError, kModule, path + ": " + ex.what());
    }
}

int run_metrics(const Document& d) {
    const json doc = d.resolve();
    const Dag truth = load_graph(require<std::string>(doc, "truth"));
    const Network estimate = network_from_json(load_json_file(require<std::string>(doc, "estimate")));
    MetricsReport report = edge_metrics(estimate.dag, truth);
    const std::string transcript = optional_field<std::string>(doc, "transcript", "");
    if (!transcript.empty()) {
        const BehaviorMetrics bm = behavior_metrics(load_transcript(transcript));
        report.abstention_rate = bm.abstention_rate;
        report.cycle_injection_rate = bm.cycle_injection_rate;
        report.edge_flip_frequency = bm.edge_flip_frequency;
        report.inconsistency_count = bm.inconsistency_count;
    }
    emit(to_json(report), optional_field<std::string>(doc, "output", ""));
    return 0;
}

httplib::Server* g_server = nullptr;

int run_serve(const Document& d) {
    const json doc = d.resolve();
    const std::string host = optional_field<std::string>(doc, "host", "127.0.0.1");
    const int port = optional_field<int>(doc, "port", 8080);
    const std::string data_dir = optional_field<std::string>(doc, "data_dir", "sessions");
    const std::string token_env = optional_field<std::string>(doc, "token_env", "");
    std::optional<std::string> token;
    if (!token_env.empty()) {
        const char* value = std::getenv(token_env.c_str());
        if (!value || !*value) throw Error(ErrorCode::ConfigError, kModule, "environment variable " + token_env + " is not set");
        token = value;
    }
    SessionManager manager(data_dir);
    httplib::Server server;
    register_routes(server, manager, token);
    g_server = &server;
    std::signal(SIGINT, [](int) { if (g_server) g_server->stop(); });
    std::signal(SIGTERM, [](int) { if (g_server) g_server->stop(); });
    std::clog << "listening on " << host << ':' << port << " with " << manager.size() << " restored sessions\n";
    if (!server.listen(host, port))
        throw Error(ErrorCode::IoError, "elicitation-service", "cannot listen on " + host + ":" + std::to_string(port));
    return 0;
}

void print_usage_error(const std::string& message) {
    std::cerr << json{{"error_code", "UsageError"}, {"module", kModule}, {"replicate", nullptr}, {"message", message}}.dump()
              << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Crowd causal knowledge elicitation toolkit"};
    app.require_subcommand(1);

    Document simulate, aggregate, design, iv, metrics, serve;

    auto* sim = app.add_subcommand("simulate", "run a seeded experiment from a config file");
    add_common(sim, simulate);
    add_flag<std::uint64_t>(sim, simulate, "--seed", "seed", "master seed");
    add_flag<int>(sim, simulate, "--replicates", "replicates", "replicate count");
    add_flag<int>(sim, simulate, "--parallelism", "parallelism", "concurrent replicates");
    add_flag<std::string>(sim, simulate, "--output-dir", "output_dir", "report directory");

    auto* agg = app.add_subcommand("aggregate", "estimate a structure from a response transcript");
    add_common(agg, aggregate);
    add_flag<std::string>(agg, aggregate, "--transcript", "transcript", "CSV transcript");
    add_flag<std::string>(agg, aggregate, "--network", "network", "\"asia\" or network JSON (node set)");
    add_flag<std::string>(agg, aggregate, "--aggregation", "aggregation", "individual | expert-level | query-level");
    add_flag<std::uint64_t>(agg, aggregate, "--seed", "seed", "structure-search seed");
    add_flag<std::string>(agg, aggregate, "--output", "output", "write the estimate here instead of stdout");

    auto* des = app.add_subcommand("design", "select the next batch of queries");
    add_common(des, design);
    add_flag<std::string>(des, design, "--network", "network", "\"asia\" or network JSON");
    add_flag<std::string>(des, design, "--protocol", "protocol", "edge | ordering");
    add_flag<std::string>(des, design, "--criterion", "criterion", "exhaustive | eopt | eig | random");
    add_flag<int>(des, design, "--budget", "budget", "queries to select");
    add_flag<std::string>(des, design, "--transcript", "transcript", "answers collected so far");
    add_flag<std::string>(des, design, "--pool-mode", "pool_mode", "remove | fixed");
    add_flag<std::uint64_t>(des, design, "--seed", "seed", "random criterion seed");
    add_flag<std::string>(des, design, "--output", "output", "write the design here instead of stdout");

    auto* ivc = app.add_subcommand("iv-demo", "instrumental-variable simulation with knowledge filtering");
    add_common(ivc, iv);
    add_flag<std::string>(ivc, iv, "--scenario", "scenario", "\"default\" or scenario JSON");
    add_flag<std::size_t>(ivc, iv, "--n", "n", "samples per replicate");
    add_flag<int>(ivc, iv, "--replicates", "replicates", "number of seeds");
    add_flag<std::uint64_t>(ivc, iv, "--seed", "seed", "first seed");
    add_flag<std::string>(ivc, iv, "--output", "output", "CSV path instead of stdout");

    auto* met = app.add_subcommand("metrics", "score an estimated graph against a reference");
    add_common(met, metrics);
    add_flag<std::string>(met, metrics, "--estimate", "estimate", "estimated network JSON");
    add_flag<std::string>(met, metrics, "--truth", "truth", "\"asia\" or network JSON");
    add_flag<std::string>(met, metrics, "--transcript", "transcript", "optional transcript for behavior metrics");
    add_flag<std::string>(met, metrics, "--output", "output", "write the report here instead of stdout");

    auto* srv = app.add_subcommand("serve", "run the elicitation HTTP service");
    add_common(srv, serve);
    add_flag<std::string>(srv, serve, "--host", "host", "bind address");
    add_flag<int>(srv, serve, "--port", "port", "TCP port");
    add_flag<std::string>(srv, serve, "--data-dir", "data_dir", "session event-log directory");
    add_flag<std::string>(srv, serve, "--token-env", "token_env", "environment variable holding the bearer token");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        print_usage_error(e.what());
        return 2;
    }

    try {
        if (sim->parsed()) return run_simulate(simulate);
        if (agg->parsed()) return run_aggregate(aggregate);
        if (des->parsed()) return run_design(design);
        if (ivc->parsed()) return run_iv_demo(iv);
        if (met->parsed()) return run_metrics(metrics);
        if (srv->parsed()) return run_serve(serve);
    } catch (const Error& e) {
        std::cerr << e.to_json_line() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << Error(ErrorCode::ConfigError, kModule, e.what()).to_json_line() << '\n';
        return 1;
    }
    return 1;
}
