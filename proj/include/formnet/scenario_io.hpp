#pragma once

#include <json.hpp>

#include <charconv>
#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "formnet/harness.hpp"

namespace formnet::io {

using ordered_json = nlohmann::ordered_json;

/// Shortest decimal form that parses back to the identical double; keeps
/// CSV output byte-stable and lets the validator rebuild exact values.
inline std::string format_double(double value) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view text) {
    double value = 0.0;
    auto res = std::from_chars(text.data(), text.data() + text.size(), value);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size())
        throw std::invalid_argument("malformed numeric field: " + std::string(text));
    return value;
}

inline long parse_long(std::string_view text) {
    long value = 0;
    auto res = std::from_chars(text.data(), text.data() + text.size(), value);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size())
        throw std::invalid_argument("malformed integer field: " + std::string(text));
    return value;
}

namespace detail {

inline void require_keys(const ordered_json& obj, std::initializer_list<const char*> allowed,
                         const char* context) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* key : allowed)
            if (it.key() == key) { known = true; break; }
        if (!known)
            throw std::invalid_argument("unknown key '" + it.key() + "' in " + context);
    }
}

inline const ordered_json& require(const ordered_json& obj, const char* key, const char* context) {
    auto it = obj.find(key);
    if (it == obj.end())
        throw std::invalid_argument(std::string("missing key '") + key + "' in " + context);
    return *it;
}

inline Eigen::MatrixXd parse_point_rows(const ordered_json& arr, int n, int d, const char* context) {
    if (!arr.is_array() || static_cast<int>(arr.size()) != n)
        throw std::invalid_argument(std::string(context) + " must list one entry per agent");
    Eigen::MatrixXd out(n, d);
    for (int i = 0; i < n; ++i) {
        const ordered_json& row = arr[i];
        if (!row.is_array() || static_cast<int>(row.size()) != d)
            throw std::invalid_argument(std::string(context) + " entries must have one value per dimension");
        for (int c = 0; c < d; ++c) out(i, c) = row[c].get<double>();
    }
    return out;
}

inline int agent_index(const ordered_json& value, int n, const char* context) {
    const long idx = value.get<long>();
    if (idx < 1 || idx > n)
        throw std::invalid_argument(std::string(context) + ": agent index " + std::to_string(idx) +
                                    " out of range 1.." + std::to_string(n));
    return static_cast<int>(idx - 1);
}

/// Resolves a 1-based [i, j] pair to the matching formation edge index.
inline int resolve_edge(const ordered_json& pair, const FormationGraph& g, const char* context) {
    if (!pair.is_array() || pair.size() != 2)
        throw std::invalid_argument(std::string(context) + " entries must be [i, j] pairs");
    const int a = agent_index(pair[0], g.agent_count, context);
    const int b = agent_index(pair[1], g.agent_count, context);
    for (std::size_t e = 0; e < g.edges.size(); ++e) {
        const Edge& edge = g.edges[e];
        if ((edge.tail == a && edge.head == b) || (edge.tail == b && edge.head == a))
            return static_cast<int>(e);
    }
    throw std::invalid_argument(std::string(context) + ": link (" + std::to_string(a + 1) + ", " +
                                std::to_string(b + 1) + ") is not a formation edge");
}

inline LossModel parse_loss(const ordered_json& j, const FormationGraph& g) {
    const std::string type = require(j, "type", "loss").get<std::string>();
    if (type == "none") {
        require_keys(j, {"type"}, "loss");
        return LossModel::none();
    }
    if (type == "bernoulli") {
        require_keys(j, {"type", "p"}, "loss");
        return LossModel::bernoulli(require(j, "p", "loss").get<double>());
    }
    if (type == "persistent") {
        require_keys(j, {"type", "failed_edges", "start_epoch"}, "loss");
        const ordered_json& listed = require(j, "failed_edges", "loss");
        if (!listed.is_array() || listed.empty())
            throw std::invalid_argument("loss.failed_edges must be a nonempty list of [i, j] pairs");
        std::vector<int> edges;
        for (const auto& pair : listed) edges.push_back(resolve_edge(pair, g, "loss.failed_edges"));
        long start = 0;
        if (auto it = j.find("start_epoch"); it != j.end()) start = it->get<long>();
        return LossModel::persistent(std::move(edges), start);
    }
    if (type == "scheduled") {
        require_keys(j, {"type", "schedule"}, "loss");
        const ordered_json& plan = require(j, "schedule", "loss");
        if (!plan.is_object())
            throw std::invalid_argument("loss.schedule must map epoch strings to lists of [i, j] pairs");
        std::map<long, std::vector<int>> schedule;
        for (auto it = plan.begin(); it != plan.end(); ++it) {
            const long epoch = parse_long(it.key());
            if (epoch < 0) throw std::invalid_argument("loss.schedule epochs must be non-negative");
            std::vector<int> edges;
            for (const auto& pair : it.value()) edges.push_back(resolve_edge(pair, g, "loss.schedule"));
            schedule[epoch] = std::move(edges);
        }
        return LossModel::scheduled(std::move(schedule));
    }
    throw std::invalid_argument("unknown loss type: " + type);
}

inline Strategy parse_strategy_name(const std::string& name) {
    if (name == "zero" || name == "to_zero") return Strategy::to_zero;
    if (name == "hold" || name == "to_hold") return Strategy::to_hold;
    if (name == "combination") return Strategy::combination;
    throw std::invalid_argument("unknown compensation strategy: " + name);
}

inline StrategyConfig parse_strategy_object(const ordered_json& j) {
    require_keys(j, {"type", "gamma"}, "strategy");
    StrategyConfig cfg;
    cfg.kind = parse_strategy_name(require(j, "type", "strategy").get<std::string>());
    if (auto it = j.find("gamma"); it != j.end()) {
        if (cfg.kind != Strategy::combination)
            throw std::invalid_argument("strategy.gamma only applies to the combination strategy");
        cfg.gamma = it->get<double>();
    }
    cfg.validate();
    return cfg;
}

}  // namespace detail

/// CLI strategy token: zero | hold | combination[:gamma].
inline StrategyConfig parse_strategy_token(const std::string& token) {
    StrategyConfig cfg;
    const auto colon = token.find(':');
    const std::string name = token.substr(0, colon);
    cfg.kind = detail::parse_strategy_name(name);
    if (colon != std::string::npos) {
        if (cfg.kind != Strategy::combination)
            throw std::invalid_argument("only combination takes a :gamma suffix");
        cfg.gamma = parse_double(token.substr(colon + 1));
    }
    if (!(cfg.gamma >= 0.0 && cfg.gamma <= 1.0))
        throw std::invalid_argument("gamma out of range: " + token);
    return cfg;
}

inline std::string strategy_label(const StrategyConfig& cfg) {
    std::string label = strategy_name(cfg.kind);
    if (cfg.kind == Strategy::combination) label += ":" + format_double(cfg.gamma);
    return label;
}

/// Parses a scenario document. Agent indices in the file are 1-based;
/// unknown keys are rejected by name.
inline Scenario parse_scenario(const ordered_json& j) {
    detail::require_keys(j,
                         {"name", "description", "agents", "edges", "leader", "desired_offsets",
                          "initial_positions", "noise_sigma", "loss", "strategy", "control_topology",
                          "estimation_topology", "step_h", "epochs", "seed", "halt_on_disconnect"},
                         "scenario");
    Scenario s;
    if (auto it = j.find("name"); it != j.end()) s.name = it->get<std::string>();
    if (auto it = j.find("description"); it != j.end()) s.description = it->get<std::string>();

    const ordered_json& agents = detail::require(j, "agents", "scenario");
    detail::require_keys(agents, {"count", "dimension"}, "agents");
    s.graph.agent_count = detail::require(agents, "count", "agents").get<int>();
    s.graph.dimension = detail::require(agents, "dimension", "agents").get<int>();

    const ordered_json& edges = detail::require(j, "edges", "scenario");
    if (!edges.is_array() || edges.empty())
        throw std::invalid_argument("edges must be a nonempty list of [i, j, weight?]");
    int weighted = 0;
    for (const auto& entry : edges) {
        if (!entry.is_array() || entry.size() < 2 || entry.size() > 3)
            throw std::invalid_argument("edges entries must be [i, j] or [i, j, weight]");
        Edge e;
        e.tail = detail::agent_index(entry[0], s.graph.agent_count, "edges");
        e.head = detail::agent_index(entry[1], s.graph.agent_count, "edges");
        if (entry.size() == 3) {
            e.weight = entry[2].get<double>();
            ++weighted;
        }
        s.graph.edges.push_back(e);
    }
    if (weighted != 0 && weighted != static_cast<int>(s.graph.edges.size()))
        throw std::invalid_argument("either every edge or no edge may carry a static weight");
    s.static_weights = weighted != 0;

    s.graph.leader = detail::agent_index(detail::require(j, "leader", "scenario"),
                                         s.graph.agent_count, "leader");

    s.offsets = detail::parse_point_rows(detail::require(j, "desired_offsets", "scenario"),
                                         s.graph.agent_count, s.graph.dimension, "desired_offsets");
    s.initial_positions = detail::parse_point_rows(detail::require(j, "initial_positions", "scenario"),
                                                   s.graph.agent_count, s.graph.dimension,
                                                   "initial_positions");
    // Per-edge target separations follow from the offset points.
    for (Edge& e : s.graph.edges) e.separation = target_separation(s.offsets, e);

    if (auto it = j.find("noise_sigma"); it != j.end()) s.sigma = it->get<double>();
    if (auto it = j.find("loss"); it != j.end()) s.loss = detail::parse_loss(*it, s.graph);
    if (auto it = j.find("strategy"); it != j.end()) s.strategy = detail::parse_strategy_object(*it);
    if (auto it = j.find("control_topology"); it != j.end())
        s.control_topology = parse_control_topology(it->get<std::string>());
    if (auto it = j.find("estimation_topology"); it != j.end())
        s.estimation_topology = parse_estimation_topology(it->get<std::string>());
    if (auto it = j.find("step_h"); it != j.end()) s.step = it->get<double>();
    s.epochs = detail::require(j, "epochs", "scenario").get<long>();
    if (auto it = j.find("seed"); it != j.end()) s.seed = it->get<std::uint64_t>();
    if (auto it = j.find("halt_on_disconnect"); it != j.end()) s.halt_on_disconnect = it->get<bool>();
    return s;
}

struct LoadedScenario {
    Scenario scenario;
    ordered_json raw;  // echoed verbatim into summaries
};

inline LoadedScenario load_scenario_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open scenario file: " + path);
    LoadedScenario loaded;
    try {
        loaded.raw = ordered_json::parse(in);
    } catch (const ordered_json::parse_error& e) {
        throw std::invalid_argument(path + ": " + e.what());
    }
    loaded.scenario = parse_scenario(loaded.raw);
    return loaded;
}

inline std::string coordinate_suffix(int c) {
    switch (c) {
        case 0: return "x";
        case 1: return "y";
        case 2: return "z";
        default: return "c" + std::to_string(c);
    }
}

/// Per-epoch time series, one row per agent per epoch, agent ids 1-based,
/// LF line endings, `.` decimal, shortest round-trip doubles.
inline std::string timeseries_csv(int dimension, const std::vector<EpochRecord>& records) {
    std::string out = "epoch,agent";
    for (int c = 0; c < dimension; ++c) out += ",true_" + coordinate_suffix(c);
    for (int c = 0; c < dimension; ++c) out += ",est_" + coordinate_suffix(c);
    out += ",formation_error,cov_trace,mst_connected,tokens\n";
    for (const EpochRecord& r : records) {
        std::string shared = "," + format_double(r.formation_err) + "," + format_double(r.cov_trace) +
                             "," + (r.mst_connected ? "1" : "0") + ",";
        for (bool token : r.tokens) shared += token ? '1' : '0';
        shared += '\n';
        for (Eigen::Index i = 0; i < r.positions.rows(); ++i) {
            out += std::to_string(r.epoch) + "," + std::to_string(i + 1);
            for (int c = 0; c < dimension; ++c) out += "," + format_double(r.positions(i, c));
            for (int c = 0; c < dimension; ++c) out += "," + format_double(r.estimates(i, c));
            out += shared;
        }
    }
    return out;
}

/// Rebuilds epoch records from timeseries_csv output (inverse up to the
/// fields the CSV carries; substitution counters are not serialized).
inline std::vector<EpochRecord> parse_timeseries_csv(const std::string& text) {
    std::vector<std::string_view> lines;
    std::string_view body(text);
    while (!body.empty()) {
        auto nl = body.find('\n');
        std::string_view line = nl == std::string_view::npos ? body : body.substr(0, nl);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (!line.empty()) lines.push_back(line);
        if (nl == std::string_view::npos) break;
        body.remove_prefix(nl + 1);
    }
    if (lines.empty()) throw std::invalid_argument("time series is empty");

    auto split = [](std::string_view line) {
        std::vector<std::string_view> fields;
        while (true) {
            auto comma = line.find(',');
            fields.push_back(line.substr(0, comma));
            if (comma == std::string_view::npos) break;
            line.remove_prefix(comma + 1);
        }
        return fields;
    };

    const auto header = split(lines[0]);
    if (header.size() < 8 || (header.size() - 6) % 2 != 0)
        throw std::invalid_argument("unrecognized time series header");
    const int d = static_cast<int>((header.size() - 6) / 2);

    std::vector<EpochRecord> records;
    std::size_t row = 1;
    while (row < lines.size()) {
        auto first = split(lines[row]);
        if (first.size() != header.size())
            throw std::invalid_argument("time series row has wrong field count");
        const long epoch = parse_long(first[0]);
        // Collect this epoch's block to learn the agent count.
        std::size_t end = row;
        while (end < lines.size() && parse_long(split(lines[end])[0]) == epoch) ++end;
        const int n = static_cast<int>(end - row);

        EpochRecord rec;
        rec.epoch = epoch;
        rec.positions.resize(n, d);
        rec.estimates.resize(n, d);
        for (int i = 0; i < n; ++i) {
            auto fields = split(lines[row + i]);
            if (fields.size() != header.size())
                throw std::invalid_argument("time series row has wrong field count");
            if (parse_long(fields[1]) != i + 1)
                throw std::invalid_argument("agent rows out of order in time series");
            for (int c = 0; c < d; ++c) rec.positions(i, c) = parse_double(fields[2 + c]);
            for (int c = 0; c < d; ++c) rec.estimates(i, c) = parse_double(fields[2 + d + c]);
            if (i == 0) {
                rec.formation_err = parse_double(fields[2 + 2 * d]);
                rec.cov_trace = parse_double(fields[3 + 2 * d]);
                const std::string_view flag = fields[4 + 2 * d];
                if (flag != "0" && flag != "1")
                    throw std::invalid_argument("mst_connected must be 0 or 1");
                rec.mst_connected = flag == "1";
                for (char ch : fields[5 + 2 * d]) {
                    if (ch != '0' && ch != '1')
                        throw std::invalid_argument("tokens must be a bitstring");
                    rec.tokens.push_back(ch == '1');
                }
            }
        }
        records.push_back(std::move(rec));
        row = end;
    }
    for (std::size_t i = 1; i < records.size(); ++i)
        if (records[i].epoch <= records[i - 1].epoch)
            throw std::invalid_argument("epochs must be strictly increasing");
    return records;
}

inline ordered_json summary_json(const Summary& s) {
    ordered_json j;
    j["epochs"] = s.epochs;
    j["final_formation_error"] = s.final_formation_error;
    j["peak_formation_error"] = s.peak_formation_error;
    j["mean_formation_error"] = s.mean_formation_error;
    j["mean_cov_trace"] = s.mean_cov_trace;
    j["final_cov_trace"] = s.final_cov_trace;
    j["mean_sq_estimation_error"] = s.mean_sq_estimation_error;
    j["disconnect_epochs"] = s.disconnect_epochs;
    j["first_disconnect"] = s.first_disconnect;
    return j;
}

/// Exact (bitwise) agreement between stored aggregates and a recomputation.
inline bool aggregates_match(const ordered_json& stored, const Summary& recomputed,
                             std::string* detail_out = nullptr) {
    const ordered_json fresh = summary_json(recomputed);
    for (auto it = fresh.begin(); it != fresh.end(); ++it) {
        auto found = stored.find(it.key());
        if (found == stored.end()) {
            if (detail_out) *detail_out = "missing aggregate field: " + it.key();
            return false;
        }
        bool same;
        if (it->is_number_float() || found->is_number_float())
            same = found->get<double>() == it->get<double>();
        else
            same = found->get<long>() == it->get<long>();
        if (!same) {
            if (detail_out)
                *detail_out = "aggregate mismatch on " + it.key() + ": stored " + found->dump() +
                              ", recomputed " + it->dump();
            return false;
        }
    }
    return true;
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << content;
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace formnet::io
