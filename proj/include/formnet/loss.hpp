#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "formnet/spanning_tree.hpp"
#include "formnet/types.hpp"

namespace formnet {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Deterministic uniform draw in [0, 1) keyed by (seed, epoch, edge).
/// Counter-based so the token stream is identical across reruns and across
/// whichever compensation strategy consumes it.
inline double token_uniform(std::uint64_t seed, long epoch, int edge) {
    std::uint64_t h = splitmix64(seed ^ 0x746f6b656e73ULL);
    h = splitmix64(h ^ static_cast<std::uint64_t>(epoch));
    h = splitmix64(h ^ static_cast<std::uint64_t>(edge));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

struct LossModel {
    enum class Kind { none, bernoulli, persistent, scheduled };

    Kind kind = Kind::none;
    double probability = 0.0;             // bernoulli
    std::vector<int> failed_edges;        // persistent
    long start_epoch = 0;                 // persistent
    std::map<long, std::vector<int>> schedule;  // scheduled: epoch -> dropped edge indices

    static LossModel none() { return {}; }

    static LossModel bernoulli(double p) {
        if (!(p >= 0.0 && p <= 1.0))
            throw std::invalid_argument("loss probability must lie in [0, 1]");
        LossModel m;
        m.kind = Kind::bernoulli;
        m.probability = p;
        return m;
    }

    static LossModel persistent(std::vector<int> edges, long start = 0) {
        if (start < 0) throw std::invalid_argument("failure start epoch must be non-negative");
        LossModel m;
        m.kind = Kind::persistent;
        m.failed_edges = std::move(edges);
        m.start_epoch = start;
        return m;
    }

    static LossModel scheduled(std::map<long, std::vector<int>> plan) {
        LossModel m;
        m.kind = Kind::scheduled;
        m.schedule = std::move(plan);
        return m;
    }
};

/// One token per graph edge for the given epoch; true means delivered.
inline LinkTokenVector draw_tokens(const LossModel& model, const FormationGraph& g, long epoch,
                                   std::uint64_t seed) {
    LinkTokenVector tv;
    tv.epoch = epoch;
    tv.tokens.assign(g.edges.size(), true);
    switch (model.kind) {
        case LossModel::Kind::none:
            break;
        case LossModel::Kind::bernoulli:
            for (int e = 0; e < static_cast<int>(g.edges.size()); ++e)
                if (token_uniform(seed, epoch, e) < model.probability) tv.tokens[e] = false;
            break;
        case LossModel::Kind::persistent:
            if (epoch >= model.start_epoch)
                for (int e : model.failed_edges) {
                    if (e < 0 || e >= static_cast<int>(g.edges.size()))
                        throw std::invalid_argument("persistent failure edge index out of range");
                    tv.tokens[e] = false;
                }
            break;
        case LossModel::Kind::scheduled:
            if (auto it = model.schedule.find(epoch); it != model.schedule.end())
                for (int e : it->second) {
                    if (e < 0 || e >= static_cast<int>(g.edges.size()))
                        throw std::invalid_argument("scheduled failure edge index out of range");
                    tv.tokens[e] = false;
                }
            break;
    }
    return tv;
}

enum class Strategy { to_zero, to_hold, combination };

inline const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::to_zero: return "to_zero";
        case Strategy::to_hold: return "to_hold";
        case Strategy::combination: return "combination";
    }
    return "unknown";
}

inline Strategy parse_strategy(const std::string& name) {
    if (name == "to_zero") return Strategy::to_zero;
    if (name == "to_hold") return Strategy::to_hold;
    if (name == "combination") return Strategy::combination;
    throw std::invalid_argument("unknown compensation strategy: " + name);
}

struct StrategyConfig {
    Strategy kind = Strategy::to_zero;
    double gamma = 0.5;  // combination blend weight

    void validate() const {
        if (!(gamma >= 0.0 && gamma <= 1.0))
            throw std::invalid_argument("combination gamma must lie in [0, 1]");
    }
};

/// Receiver-side memory for one link.
struct LinkState {
    Eigen::RowVectorXd last_received;
    bool received_once = false;
};

struct SubstitutionOutcome {
    Eigen::RowVectorXd value;
    bool cold_start = false;  // strategy had no memory to draw on
};

/// Value a receiver substitutes for a lost measurement. `estimate_diff` is
/// the previous-epoch estimated relative position across the link (tail
/// minus head); `estimate_valid` is false on the very first epoch.
inline SubstitutionOutcome substitute_measurement(const StrategyConfig& cfg, const LinkState& state,
                                                  const Eigen::RowVectorXd& estimate_diff,
                                                  bool estimate_valid, Eigen::Index dim) {
    cfg.validate();
    SubstitutionOutcome out;
    const Eigen::RowVectorXd zero = Eigen::RowVectorXd::Zero(dim);
    switch (cfg.kind) {
        case Strategy::to_zero:
            out.value = zero;
            break;
        case Strategy::to_hold:
            if (state.received_once) {
                out.value = state.last_received;
            } else {
                out.value = zero;
                out.cold_start = true;
            }
            break;
        case Strategy::combination: {
            const Eigen::RowVectorXd held = state.received_once ? state.last_received : zero;
            const Eigen::RowVectorXd est = estimate_valid ? estimate_diff : zero;
            out.value = cfg.gamma * held + (1.0 - cfg.gamma) * est;
            out.cold_start = !state.received_once && !estimate_valid;
            break;
        }
    }
    return out;
}

}  // namespace formnet
