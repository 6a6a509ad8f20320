#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace formnet {

/// One communication link of the formation graph. Endpoints are 0-based
/// agent indices; the stored orientation (tail, head) fixes the sign of
/// relative measurements: z = x_tail - x_head. `weight` is the static MST
/// weight; when unset the simulation refreshes it from the current
/// inter-agent distance each epoch.
struct Edge {
    int tail = 0;
    int head = 0;
    double separation = 1.0;  // desired distance between the endpoints, > 0
    std::optional<double> weight{};
};

/// Weighted formation graph G = {N, E, W} plus the designated leader.
struct FormationGraph {
    int agent_count = 0;
    int dimension = 2;  // 2 or 3
    std::vector<Edge> edges;
    int leader = 0;

    int edge_count() const { return static_cast<int>(edges.size()); }
};

/// Stacked agent positions at one epoch. Row i holds agent i's coordinates.
struct Configuration {
    Eigen::MatrixXd positions;  // agent_count x dimension
    long epoch = 0;
};

inline void validate(const FormationGraph& g) {
    if (g.agent_count < 1)
        throw std::invalid_argument("formation graph needs at least one agent");
    if (g.dimension != 2 && g.dimension != 3)
        throw std::invalid_argument("dimension must be 2 or 3");
    if (g.leader < 0 || g.leader >= g.agent_count)
        throw std::invalid_argument("leader index out of range");
    std::set<std::pair<int, int>> seen;
    for (std::size_t k = 0; k < g.edges.size(); ++k) {
        const Edge& e = g.edges[k];
        const std::string tag = "edge " + std::to_string(k) + ": ";
        if (e.tail < 0 || e.tail >= g.agent_count || e.head < 0 || e.head >= g.agent_count)
            throw std::invalid_argument(tag + "endpoint out of range");
        if (e.tail == e.head)
            throw std::invalid_argument(tag + "self-loop");
        if (!(e.separation > 0.0))
            throw std::invalid_argument(tag + "desired separation must be positive");
        if (e.weight && !(*e.weight >= 0.0))
            throw std::invalid_argument(tag + "weight must be nonnegative");
        auto key = std::minmax(e.tail, e.head);
        if (!seen.insert(key).second)
            throw std::invalid_argument(tag + "duplicate undirected edge");
    }
}

inline void validate(const Configuration& c, const FormationGraph& g) {
    if (c.positions.rows() != g.agent_count || c.positions.cols() != g.dimension)
        throw std::invalid_argument("configuration does not match graph dimensions");
    if (!c.positions.allFinite())
        throw std::invalid_argument("configuration has non-finite coordinates");
    if (c.epoch < 0)
        throw std::invalid_argument("epoch must be nonnegative");
}

/// Stack an n x d row-per-agent matrix into the nd vector
/// [x1^T, x2^T, ..., xn^T]^T.
inline Eigen::VectorXd stack_rows(const Eigen::MatrixXd& m) {
    Eigen::VectorXd v(m.size());
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        v.segment(i * m.cols(), m.cols()) = m.row(i);
    return v;
}

inline Eigen::MatrixXd unstack_rows(const Eigen::VectorXd& v, Eigen::Index rows, Eigen::Index cols) {
    if (v.size() != rows * cols)
        throw std::invalid_argument("stacked vector length does not match shape");
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        m.row(i) = v.segment(i * cols, cols);
    return m;
}

}  // namespace formnet
