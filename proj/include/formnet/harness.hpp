#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "formnet/controller.hpp"
#include "formnet/estimation.hpp"
#include "formnet/graph.hpp"
#include "formnet/loss.hpp"
#include "formnet/spanning_tree.hpp"
#include "formnet/types.hpp"

namespace formnet {

/// Which links feed the position estimator each epoch.
///  mst     - spanning tree over the healthy links (minimum-traffic reading)
///  healthy - every link that delivered this epoch
///  all     - every formation link; lost ones get substituted values, which
///            is the setting where compensation strategies actually differ
enum class EstimationTopology { mst, healthy, all };

enum class ControlTopology { healthy, mst };

inline const char* estimation_topology_name(EstimationTopology t) {
    switch (t) {
        case EstimationTopology::mst: return "mst";
        case EstimationTopology::healthy: return "healthy";
        case EstimationTopology::all: return "all";
    }
    return "unknown";
}

inline EstimationTopology parse_estimation_topology(const std::string& name) {
    if (name == "mst") return EstimationTopology::mst;
    if (name == "healthy") return EstimationTopology::healthy;
    if (name == "all") return EstimationTopology::all;
    throw std::invalid_argument("unknown estimation topology: " + name);
}

inline const char* control_topology_name(ControlTopology t) {
    return t == ControlTopology::mst ? "mst" : "healthy";
}

inline ControlTopology parse_control_topology(const std::string& name) {
    if (name == "healthy") return ControlTopology::healthy;
    if (name == "mst") return ControlTopology::mst;
    throw std::invalid_argument("unknown control topology: " + name);
}

struct Scenario {
    std::string name;
    std::string description;
    FormationGraph graph;
    Eigen::MatrixXd initial_positions;  // n x d
    Eigen::MatrixXd offsets;            // n x d desired formation points
    double sigma = 0.01;
    LossModel loss;
    StrategyConfig strategy;
    EstimationTopology estimation_topology = EstimationTopology::mst;
    ControlTopology control_topology = ControlTopology::healthy;
    double step = 0.05;
    long epochs = 1;
    std::uint64_t seed = 0;
    bool halt_on_disconnect = false;
    bool static_weights = false;  // true when every edge carries a file weight
};

/// Hard-validates the scenario and returns soft warnings (non-rigid target
/// formation, unstable step size). Throws std::invalid_argument on errors.
inline std::vector<std::string> validate_scenario(const Scenario& s) {
    validate(s.graph);
    const int n = s.graph.agent_count;
    const int d = s.graph.dimension;
    if (s.initial_positions.rows() != n || s.initial_positions.cols() != d)
        throw std::invalid_argument("initial positions must be n x d");
    if (!s.initial_positions.allFinite())
        throw std::invalid_argument("initial positions must be finite");
    validate_offsets(s.graph, s.offsets);
    if (s.epochs < 1) throw std::invalid_argument("epoch count must be at least 1");
    if (!(s.sigma >= 0.0) || !std::isfinite(s.sigma))
        throw std::invalid_argument("noise sigma must be non-negative and finite");
    if (!(s.step > 0.0) || !std::isfinite(s.step))
        throw std::invalid_argument("step size must be positive and finite");
    s.strategy.validate();

    std::vector<int> all_edges(s.graph.edges.size());
    for (std::size_t i = 0; i < all_edges.size(); ++i) all_edges[i] = static_cast<int>(i);
    if (!is_connected(s.graph, all_edges))
        throw std::invalid_argument("formation graph must be connected");
    if (s.static_weights)
        for (const Edge& e : s.graph.edges)
            if (!e.weight) throw std::invalid_argument("static weights requested but an edge has none");
    auto check_edges = [&](const std::vector<int>& idx) {
        for (int e : idx)
            if (e < 0 || e >= static_cast<int>(s.graph.edges.size()))
                throw std::invalid_argument("loss model references an edge index out of range");
    };
    check_edges(s.loss.failed_edges);
    for (const auto& [epoch, idx] : s.loss.schedule) {
        if (epoch < 0) throw std::invalid_argument("scheduled loss epoch must be non-negative");
        check_edges(idx);
    }

    std::vector<std::string> warnings;
    Configuration target{s.offsets, 0};
    RigidityVerdict verdict = is_generically_rigid(s.graph, target);
    if (!verdict.rigid)
        warnings.push_back("target formation is not rigid (rank " + std::to_string(verdict.rank) +
                           " < " + std::to_string(verdict.required) + ")");
    else if (verdict.degenerate_placement)
        warnings.push_back("target formation placement is degenerate; rigidity verdict taken from a perturbed copy");
    if (!step_size_stable(s.graph, all_edges, s.step))
        warnings.push_back("step size violates h * lambda_max < 2; consensus iteration may diverge");
    return warnings;
}

struct EpochRecord {
    long epoch = 0;
    Eigen::MatrixXd positions;  // true state before this epoch's control step
    Eigen::MatrixXd estimates;
    double formation_err = 0.0;
    double cov_trace = 0.0;
    bool mst_connected = true;  // healthy links span all agents this epoch
    std::vector<bool> tokens;
    int substituted = 0;
    int cold_starts = 0;
};

struct SimulationResult {
    std::vector<EpochRecord> records;
    Eigen::MatrixXd final_positions;  // state after the last integration step
    std::vector<std::string> warnings;
    bool halted = false;
    long halted_epoch = -1;
};

/// Aggregates recomputable from the per-epoch records alone (the validator
/// re-derives them from the CSV and must match bit for bit, so every field
/// here is a plain ordered accumulation over records).
struct Summary {
    long epochs = 0;
    double final_formation_error = 0.0;
    double peak_formation_error = 0.0;
    double mean_formation_error = 0.0;
    double mean_cov_trace = 0.0;
    double final_cov_trace = 0.0;
    double mean_sq_estimation_error = 0.0;
    long disconnect_epochs = 0;
    long first_disconnect = -1;
};

inline Summary summarize(const std::vector<EpochRecord>& records) {
    Summary s;
    s.epochs = static_cast<long>(records.size());
    if (records.empty()) return s;
    double err_sum = 0.0, cov_sum = 0.0, sq_sum = 0.0;
    for (const EpochRecord& r : records) {
        err_sum += r.formation_err;
        cov_sum += r.cov_trace;
        sq_sum += (r.estimates - r.positions).squaredNorm();
        s.peak_formation_error = std::max(s.peak_formation_error, r.formation_err);
        if (!r.mst_connected) {
            ++s.disconnect_epochs;
            if (s.first_disconnect < 0) s.first_disconnect = r.epoch;
        }
    }
    const double count = static_cast<double>(records.size());
    s.final_formation_error = records.back().formation_err;
    s.mean_formation_error = err_sum / count;
    s.mean_cov_trace = cov_sum / count;
    s.final_cov_trace = records.back().cov_trace;
    s.mean_sq_estimation_error = sq_sum / count;
    return s;
}

namespace detail {

inline std::vector<double> edge_weights(const Scenario& s, const Eigen::MatrixXd& positions) {
    std::vector<double> w(s.graph.edges.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
        const Edge& e = s.graph.edges[i];
        w[i] = s.static_weights ? *e.weight
                                : (positions.row(e.tail) - positions.row(e.head)).norm();
    }
    return w;
}

}  // namespace detail

/// One run of the per-epoch loop: sample tokens, prune, pick the estimation
/// link set, synthesize measurements, substitute losses, estimate anchored
/// at the leader, steer from the estimate, integrate. Deterministic given
/// the scenario (tokens are counter-based; noise comes from one seeded
/// engine and is drawn for every edge each epoch whether or not the packet
/// survives, so strategies under the same seed see identical streams).
inline SimulationResult run_simulation(const Scenario& s) {
    SimulationResult result;
    result.warnings = validate_scenario(s);

    const int n = s.graph.agent_count;
    const int d = s.graph.dimension;
    const int m = static_cast<int>(s.graph.edges.size());
    const int leader = s.graph.leader;

    const Eigen::MatrixXd h_full = build_incidence(s.graph);
    std::vector<int> all_edges(m);
    for (int i = 0; i < m; ++i) all_edges[i] = i;

    Eigen::MatrixXd x = s.initial_positions;
    Eigen::MatrixXd prev_est;
    bool have_prev = false;
    std::vector<LinkState> memory(m);

    std::mt19937_64 engine(s.seed ^ 0x6e6f697365ULL);
    std::normal_distribution<double> gauss(0.0, 1.0);

    result.records.reserve(static_cast<std::size_t>(s.epochs));
    for (long k = 0; k < s.epochs; ++k) {
        LinkTokenVector tokens = draw_tokens(s.loss, s.graph, k, s.seed);
        HealthySubgraph healthy = prune_unhealthy(s.graph, tokens);
        const std::vector<double> weights = detail::edge_weights(s, x);
        const bool connected = is_connected(s.graph, healthy.retained);

        std::optional<std::vector<int>> tree;
        auto tree_edges = [&]() -> const std::vector<int>& {
            if (!tree) {
                HealthySubgraph pool;
                pool.retained = connected ? healthy.retained : all_edges;
                pool.healthy_count = static_cast<int>(pool.retained.size());
                tree = build_mst(s.graph, pool, weights).edges;
            }
            return *tree;
        };

        // Estimation link set. When the healthy links cannot span the team,
        // fall back to the full formation so the anchored solve stays
        // well-posed; the lost links are filled by the strategy below.
        std::vector<int> est_edges;
        switch (s.estimation_topology) {
            case EstimationTopology::mst:
                est_edges = tree_edges();
                break;
            case EstimationTopology::healthy:
                est_edges = connected ? healthy.retained : all_edges;
                break;
            case EstimationTopology::all:
                est_edges = all_edges;
                break;
        }

        // True relative measurements; noise is drawn for every edge so the
        // stream does not depend on the loss pattern or strategy.
        Eigen::MatrixXd z_full(m, d);
        for (int e = 0; e < m; ++e) {
            const Edge& edge = s.graph.edges[e];
            for (int c = 0; c < d; ++c)
                z_full(e, c) = x(edge.tail, c) - x(edge.head, c) + s.sigma * gauss(engine);
        }
        for (int e = 0; e < m; ++e)
            if (tokens.tokens[e]) {
                memory[e].last_received = z_full.row(e);
                memory[e].received_once = true;
            }

        MeasurementSet z;
        z.values.resize(static_cast<Eigen::Index>(est_edges.size()), d);
        int substituted = 0, cold = 0;
        for (std::size_t r = 0; r < est_edges.size(); ++r) {
            const int e = est_edges[r];
            const Edge& edge = s.graph.edges[e];
            z.edges.emplace_back(edge.tail, edge.head);
            if (tokens.tokens[e]) {
                z.values.row(static_cast<Eigen::Index>(r)) = z_full.row(e);
            } else {
                Eigen::RowVectorXd est_diff = have_prev
                    ? Eigen::RowVectorXd(prev_est.row(edge.tail) - prev_est.row(edge.head))
                    : Eigen::RowVectorXd::Zero(d).eval();
                SubstitutionOutcome out =
                    substitute_measurement(s.strategy, memory[e], est_diff, have_prev, d);
                z.values.row(static_cast<Eigen::Index>(r)) = out.value;
                ++substituted;
                if (out.cold_start) ++cold;
            }
        }
        // Zero noise still needs a positive-definite weighting; identity is
        // the natural choice and the estimate is invariant to the scale.
        z.covariance = isotropic_covariance(static_cast<Eigen::Index>(est_edges.size()), d,
                                            s.sigma > 0.0 ? s.sigma : 1.0);

        Eigen::MatrixXd h_est = h_full(est_edges, Eigen::all);
        PartitionedIncidence part = partition_incidence(h_est, leader);
        Estimate est = anchored_blue(part, x.row(leader).transpose(), z);
        est.epoch = k;

        // Control runs over the configured topology; an agent whose links
        // all dropped simply gets a zero input and holds position.
        const std::vector<int>& control_edges =
            s.control_topology == ControlTopology::mst
                ? (connected ? tree_edges() : healthy.retained)
                : healthy.retained;
        Eigen::MatrixXd u = control_input(s.graph, control_edges, est.positions, s.offsets);

        EpochRecord rec;
        rec.epoch = k;
        rec.positions = x;
        rec.estimates = est.positions;
        rec.formation_err = formation_error(s.graph, x, s.offsets);
        // With sigma 0 the solve ran under the identity weighting, but the
        // true error covariance scales with sigma^2 and is exactly zero.
        rec.cov_trace = s.sigma > 0.0 ? est.covariance.trace() : 0.0;
        rec.mst_connected = connected;
        rec.tokens = tokens.tokens;
        rec.substituted = substituted;
        rec.cold_starts = cold;
        result.records.push_back(std::move(rec));

        if (!connected && s.halt_on_disconnect) {
            result.halted = true;
            result.halted_epoch = k;
            break;
        }

        x = euler_step(x, u, s.step);
        prev_est = est.positions;
        have_prev = true;
    }

    result.final_positions = x;
    return result;
}

struct StrategyOutcome {
    StrategyConfig strategy;
    SimulationResult result;
    Summary summary;
};

/// Runs the same scenario once per strategy under the identical seed, so
/// every strategy faces the same token and noise streams.
inline std::vector<StrategyOutcome> compare_strategies(const Scenario& base,
                                                       std::span<const StrategyConfig> strategies) {
    if (strategies.empty()) throw std::invalid_argument("strategy list must be nonempty");
    std::vector<StrategyOutcome> outcomes;
    outcomes.reserve(strategies.size());
    for (const StrategyConfig& cfg : strategies) {
        Scenario run = base;
        run.strategy = cfg;
        StrategyOutcome out;
        out.strategy = cfg;
        out.result = run_simulation(run);
        out.summary = summarize(out.result.records);
        outcomes.push_back(std::move(out));
    }
    return outcomes;
}

/// True when every outcome saw the same token vector at every epoch.
inline bool token_streams_identical(std::span<const StrategyOutcome> outcomes) {
    if (outcomes.size() < 2) return true;
    const auto& first = outcomes.front().result.records;
    for (std::size_t i = 1; i < outcomes.size(); ++i) {
        const auto& other = outcomes[i].result.records;
        if (other.size() != first.size()) return false;
        for (std::size_t k = 0; k < first.size(); ++k)
            if (other[k].tokens != first[k].tokens) return false;
    }
    return true;
}

}  // namespace formnet
