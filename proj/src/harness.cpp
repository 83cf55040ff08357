#include "crowdcausal/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "crowdcausal/aggregation.hpp"
#include "crowdcausal/error.hpp"
#include "crowdcausal/format.hpp"

namespace crowdcausal {

namespace {
constexpr const char* kModule = "harness-cli";

Error config_error(const std::string& field, const std::string& message) {
    return Error(ErrorCode::ConfigError, kModule, field + ": " + message);
}

bool is_index(const std::string& s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& path) {
    const std::filesystem::path p(path);
    return p.is_absolute() || base.empty() ? p : base / p;
}

template <typename T>
T field(const nlohmann::json& doc, const char* name, T fallback) {
    if (!doc.contains(name)) return fallback;
    try {
        return doc.at(name).get<T>();
    } catch (const nlohmann::json::exception& ex) {
        throw config_error(name, ex.what());
    }
}

// Re-raises a parse error from a lower module with the field path in front.
template <typename F>
auto at_field(const std::string& path, F&& parse) -> decltype(parse()) {
    try {
        return parse();
    } catch (const Error& ex) {
        throw config_error(path, ex.what());
    } catch (const nlohmann::json::exception& ex) {
        throw config_error(path, ex.what());
    }
}

struct Moments {
    double mean = 0.0;
    double sd = 0.0;
};

Moments moments(const std::vector<double>& xs) {
    Moments m;
    if (xs.empty()) return m;
    for (double x : xs) m.mean += x;
    m.mean /= static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - m.mean) * (x - m.mean);
        m.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    }
    return m;
}

struct MetricColumn {
    const char* name;
    double (*get)(const MetricsReport&);
};

const std::vector<MetricColumn>& metric_columns() {
    static const std::vector<MetricColumn> columns{
        {"shd", [](const MetricsReport& m) { return static_cast<double>(m.shd); }},
        {"edge_precision", [](const MetricsReport& m) { return m.edge_precision; }},
        {"edge_recall", [](const MetricsReport& m) { return m.edge_recall; }},
        {"fdr", [](const MetricsReport& m) { return m.fdr; }},
        {"edge_coverage", [](const MetricsReport& m) { return m.edge_coverage; }},
        {"rank_correlation", [](const MetricsReport& m) { return m.rank_correlation; }},
        {"pairwise_order_accuracy", [](const MetricsReport& m) { return m.pairwise_order_accuracy; }},
        {"abstention_rate", [](const MetricsReport& m) { return m.abstention_rate; }},
        {"cycle_injection_rate", [](const MetricsReport& m) { return m.cycle_injection_rate; }},
        {"edge_flip_frequency", [](const MetricsReport& m) { return m.edge_flip_frequency; }},
        {"inconsistency_count", [](const MetricsReport& m) { return static_cast<double>(m.inconsistency_count); }},
    };
    return columns;
}

MetricsReport full_metrics(const Dag& estimate, const Dag& truth, const KnowledgeSet& responses,
                           const std::optional<ScoreField>& scores) {
    MetricsReport m = edge_metrics(estimate, truth);
    if (scores) {
        const OrderMetrics om = order_metrics(scores->as_map(), truth);
        m.rank_correlation = om.rank_correlation;
        m.pairwise_order_accuracy = om.pairwise_order_accuracy;
    }
    if (!responses.empty() && responses.front().protocol == Protocol::EdgeWise) {
        const BehaviorMetrics bm = behavior_metrics(responses);
        m.abstention_rate = bm.abstention_rate;
        m.cycle_injection_rate = bm.cycle_injection_rate;
        m.edge_flip_frequency = bm.edge_flip_frequency;
        m.inconsistency_count = bm.inconsistency_count;
    }
    return m;
}

// Crowds with an LLM member are asked every pair once; the LLM cannot be driven stage by stage.
SequentialResult run_exhaustive_with_llm(const ExperimentConfig& config, std::vector<SimulatedExpert>& experts,
                                         std::vector<std::string>& warnings) {
    const Dag& truth = config.network.dag;
    const std::vector<Query> pairs = all_pair_queries(truth);
    SequentialResult result;
    for (auto& expert : experts) {
        KnowledgeSet own = expert.answer_all(pairs, config.protocol);
        result.responses.insert(result.responses.end(), own.begin(), own.end());
    }
    for (const auto& llm : config.llm_experts) {
        KnowledgeSet own = llm_elicit(llm, config.network, pairs, config.protocol, &warnings);
        result.responses.insert(result.responses.end(), own.begin(), own.end());
    }
    if (config.protocol == Protocol::OrderingWise) result.scores = infer_scores(result.responses, truth.nodes());
    result.estimate = estimate_structure(result.responses, truth.nodes(), config.aggregation, config.seed);

    StageRecord record;
    record.design.stage = 1;
    record.design.budget = static_cast<int>(pairs.size());
    record.design.pool = pairs;
    record.design.mask.assign(pairs.size(), 1);
    record.design.queries = pairs;
    record.metrics = full_metrics(result.estimate, truth, result.responses, result.scores);
    record.pool_size_after = pairs.size();
    result.trace.push_back(record);
    result.design = aggregate_designs({record.design});
    return result;
}
}  // namespace

void ExperimentConfig::validate() const {
    if (replicates < 1) throw config_error("replicates", "must be >= 1");
    if (parallelism < 1) throw config_error("parallelism", "must be >= 1");
    if (crowd.empty() && llm_experts.empty()) throw config_error("crowd", "needs at least one expert");
    if (criterion != Criterion::Exhaustive) {
        if (stages.empty()) throw config_error("design.stages", "needs at least one stage budget");
        if (!llm_experts.empty())
            throw config_error("design.criterion", "LLM experts are supported with the exhaustive criterion only");
    }
    for (std::size_t t = 0; t < stages.size(); ++t)
        if (stages[t] < 1) throw config_error("design.stages[" + std::to_string(t) + "]", "stage budgets must be positive");
    std::vector<std::string> ids;
    for (const auto& e : crowd) ids.push_back(e.expert_id);
    for (const auto& e : llm_experts) ids.push_back(e.expert_id);
    std::sort(ids.begin(), ids.end());
    if (const auto dup = std::adjacent_find(ids.begin(), ids.end()); dup != ids.end())
        throw config_error("crowd", "duplicate expert_id \"" + *dup + "\"");
    if (output_dir.empty()) throw config_error("output_dir", "must not be empty");
}

void apply_override(nlohmann::json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw Error(ErrorCode::ConfigError, kModule, "override \"" + assignment + "\" is not of the form path=value");
    const std::string path = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    nlohmann::json value;
    try {
        value = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error&) {
        value = text;
    }

    nlohmann::json* node = &doc;
    std::stringstream segments(path);
    std::string segment;
    std::vector<std::string> parts;
    while (std::getline(segments, segment, '.')) parts.push_back(segment);
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const std::string& key = parts[k];
        if (key.empty()) throw config_error(path, "empty path segment");
        if (node->is_array()) {
            if (!is_index(key)) throw config_error(path, "\"" + key + "\" indexes an array");
            const auto i = std::stoul(key);
            if (i >= node->size()) throw config_error(path, "index " + key + " out of range");
            node = &(*node)[i];
        } else {
            if (node->is_null()) *node = nlohmann::json::object();
            if (!node->is_object()) throw config_error(path, "\"" + key + "\" descends into a scalar");
            node = &(*node)[key];
        }
    }
    *node = std::move(value);
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir) {
    if (!doc.is_object()) throw Error(ErrorCode::ConfigError, kModule, "config must be a JSON object");
    ExperimentConfig c;

    if (doc.contains("network") && doc.at("network").is_object()) {
        c.network_source = "inline";
        c.network = at_field("network", [&] { return network_from_json(doc.at("network")); });
    } else {
        c.network_source = field<std::string>(doc, "network", "asia");
        const std::string source =
            c.network_source == "asia" ? c.network_source : resolve(base_dir, c.network_source).string();
        if (source != "asia" && !std::filesystem::exists(source))
            throw config_error("network", "file not found: " + source);
        c.network = at_field("network", [&] { return load_network(source); });
    }

    if (doc.contains("crowd")) {
        const auto& crowd = doc.at("crowd");
        if (!crowd.is_array()) throw config_error("crowd", "must be an array");
        nlohmann::json simulated = nlohmann::json::array();
        for (std::size_t i = 0; i < crowd.size(); ++i) {
            const std::string path = "crowd[" + std::to_string(i) + "]";
            if (crowd[i].is_object() && crowd[i].contains("llm")) {
                LlmExpertConfig llm = at_field(path + ".llm", [&] { return llm_config_from_json(crowd[i].at("llm")); });
                if (llm.mode == LlmMode::Mock) {
                    llm.transcript_path = resolve(base_dir, llm.transcript_path).string();
                    if (!std::filesystem::exists(llm.transcript_path))
                        throw config_error(path + ".llm.transcript", "file not found: " + llm.transcript_path);
                }
                c.llm_experts.push_back(std::move(llm));
            } else {
                at_field(path, [&] { return crowd_from_json(nlohmann::json::array({crowd[i]})); });
                nlohmann::json entry = crowd[i];
                if (!entry.contains("expert_id")) entry["expert_id"] = "expert" + std::to_string(i + 1);
                if (!entry.contains("seed")) entry["seed"] = i + 1;
                simulated.push_back(std::move(entry));
            }
        }
        c.crowd = at_field("crowd", [&] { return crowd_from_json(simulated); });
    }

    c.protocol = at_field("protocol", [&] { return protocol_from_string(field<std::string>(doc, "protocol", "edge")); });
    c.aggregation = at_field(
        "aggregation", [&] { return aggregation_from_string(field<std::string>(doc, "aggregation", "query-level")); });
    if (doc.contains("design")) {
        const auto& design = doc.at("design");
        if (!design.is_object()) throw config_error("design", "must be an object");
        c.criterion = at_field("design.criterion", [&] {
            return criterion_from_string(design.value("criterion", std::string("exhaustive")));
        });
        c.stages = at_field("design.stages", [&] { return design.value("stages", std::vector<int>{}); });
        c.pool_mode = at_field("design.pool_mode", [&] {
            return pool_mode_from_string(design.value("pool_mode", std::string("fixed")));
        });
    }
    c.replicates = field<int>(doc, "replicates", c.replicates);
    c.seed = field<std::uint64_t>(doc, "seed", c.seed);
    c.output_dir = field<std::string>(doc, "output_dir", c.output_dir);
    c.parallelism = field<int>(doc, "parallelism", c.parallelism);
    c.validate();
    return c;
}

nlohmann::json load_config_document(const std::string& path, const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, kModule, "cannot open config " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorCode::ConfigError, kModule, path + ": " + ex.what());
    }
    for (const auto& o : overrides) apply_override(doc, o);
    return doc;
}

ExperimentConfig load_experiment_config(const std::string& path, const std::vector<std::string>& overrides) {
    return experiment_config_from_json(load_config_document(path, overrides),
                                       std::filesystem::path(path).parent_path());
}

ReplicateResult run_replicate(const ExperimentConfig& config, int replicate) {
    try {
        ReplicateResult out;
        out.replicate = replicate;
        out.seed = config.seed + static_cast<std::uint64_t>(replicate);
        const Dag& truth = config.network.dag;

        std::vector<SimulatedExpert> experts;
        experts.reserve(config.crowd.size());
        for (const auto& spec : config.crowd)
            experts.emplace_back(spec.expert_id, spec.profile, truth, expert_rng(out.seed, spec.seed));

        SequentialResult run;
        if (config.llm_experts.empty()) {
            SequentialOptions options;
            options.stages = config.stages;
            options.criterion = config.criterion;
            options.protocol = config.protocol;
            options.pool_mode = config.pool_mode;
            options.aggregation = config.aggregation;
            options.seed = out.seed;
            run = run_sequential(experts, truth, options);
        } else {
            ExperimentConfig seeded = config;
            seeded.seed = out.seed;
            run = run_exhaustive_with_llm(seeded, experts, out.warnings);
        }

        out.metrics = run.trace.back().metrics;
        out.response_count = run.responses.size();
        const auto per_expert = split_by_expert(run.responses);
        std::vector<double> individual;
        for (const auto& [id, own] : per_expert) individual.push_back(shd(individual_map_graph(own, truth.nodes()), truth));
        out.mean_individual_shd = moments(individual).mean;
        out.crowd_beats_individual = static_cast<double>(out.metrics.shd) < out.mean_individual_shd;
        out.trace = std::move(run.trace);
        return out;
    } catch (const Error& ex) {
        throw ex.with_replicate(replicate);
    } catch (const std::exception& ex) {
        throw Error(ErrorCode::ConfigError, kModule, ex.what()).with_replicate(replicate);
    }
}

ExperimentReport run_experiment(const ExperimentConfig& config) {
    config.validate();
    const int n = config.replicates;
    std::vector<std::optional<ReplicateResult>> results(static_cast<std::size_t>(n));
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int r = next++; r < n; r = next++) {
            try {
                results[static_cast<std::size_t>(r)] = run_replicate(config, r);
            } catch (...) {
                errors[static_cast<std::size_t>(r)] = std::current_exception();
            }
        }
    };
    const int threads = std::min(config.parallelism, n);
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    ExperimentReport report;
    for (auto& r : results) report.replicates.push_back(std::move(*r));
    return report;
}

double ExperimentReport::crowd_beats_fraction() const {
    if (replicates.empty()) return 0.0;
    const auto wins = std::count_if(replicates.begin(), replicates.end(),
                                    [](const ReplicateResult& r) { return r.crowd_beats_individual; });
    return static_cast<double>(wins) / static_cast<double>(replicates.size());
}

nlohmann::json ExperimentReport::summary() const {
    nlohmann::json metrics = nlohmann::json::object();
    for (const auto& column : metric_columns()) {
        std::vector<double> xs;
        for (const auto& r : replicates) xs.push_back(column.get(r.metrics));
        const Moments m = moments(xs);
        metrics[column.name] = {{"mean", m.mean}, {"sd", m.sd}};
    }
    std::vector<double> individual;
    for (const auto& r : replicates) individual.push_back(r.mean_individual_shd);
    const Moments ind = moments(individual);
    return {{"replicates", replicates.size()},
            {"metrics", metrics},
            {"mean_individual_shd", {{"mean", ind.mean}, {"sd", ind.sd}}},
            {"crowd_beats_individual_fraction", crowd_beats_fraction()}};
}

void write_replicates_csv(std::ostream& out, const ExperimentReport& report) {
    out << "replicate,seed";
    for (const auto& column : metric_columns()) out << ',' << column.name;
    out << ",mean_individual_shd,crowd_beats_individual,responses\n";
    for (const auto& r : report.replicates) {
        out << r.replicate << ',' << r.seed;
        for (const auto& column : metric_columns()) out << ',' << format_double(column.get(r.metrics));
        out << ',' << format_double(r.mean_individual_shd) << ',' << (r.crowd_beats_individual ? 1 : 0) << ','
            << r.response_count << '\n';
    }
}

void write_design_trace(std::ostream& out, const ExperimentReport& report) {
    for (const auto& r : report.replicates)
        for (const auto& record : r.trace) {
            nlohmann::json line = record.to_json();
            line["replicate"] = r.replicate;
            line["seed"] = r.seed;
            out << line.dump() << '\n';
        }
}

void write_experiment_outputs(const ExperimentReport& report, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::IoError, kModule, "cannot create " + dir.string() + ": " + ec.message());
    auto open = [&](const char* name) {
        std::ofstream f(dir / name, std::ios::binary);
        if (!f) throw Error(ErrorCode::IoError, kModule, "cannot write " + (dir / name).string());
        return f;
    };
    {
        auto f = open("replicates.csv");
        write_replicates_csv(f, report);
    }
    {
        auto f = open("summary.json");
        f << report.summary().dump(2) << '\n';
    }
    {
        auto f = open("design-trace.jsonl");
        write_design_trace(f, report);
    }
}

}  // namespace crowdcausal
