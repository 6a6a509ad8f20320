#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "formnet/types.hpp"

namespace formnet {

/// Relative singular-value cutoff for numerical rank decisions.
inline constexpr double kRankTolerance = 1e-9;

/// Edge-by-node incidence matrix H: row k carries +1 at edge k's tail and
/// -1 at its head, so H x reproduces the measurement left sides
/// z_ij = x_i - x_j edge by edge.
inline Eigen::MatrixXd build_incidence(const FormationGraph& g) {
    validate(g);
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(g.edge_count(), g.agent_count);
    for (int k = 0; k < g.edge_count(); ++k) {
        h(k, g.edges[k].tail) = 1.0;
        h(k, g.edges[k].head) = -1.0;
    }
    return h;
}

/// Rigidity matrix R(q), m x (n*d). Row for edge {i,j} holds (x_i - x_j)^T
/// in agent i's column block and the negation in agent j's block; its kernel
/// contains exactly the distance-preserving infinitesimal motions.
inline Eigen::MatrixXd build_rigidity_matrix(const FormationGraph& g, const Configuration& c) {
    validate(g);
    validate(c, g);
    const int d = g.dimension;
    Eigen::MatrixXd r = Eigen::MatrixXd::Zero(g.edge_count(), g.agent_count * d);
    for (int k = 0; k < g.edge_count(); ++k) {
        const Edge& e = g.edges[k];
        Eigen::RowVectorXd diff = c.positions.row(e.tail) - c.positions.row(e.head);
        r.block(k, e.tail * d, 1, d) = diff;
        r.block(k, e.head * d, 1, d) = -diff;
    }
    return r;
}

inline Eigen::Index numerical_rank(const Eigen::MatrixXd& m, double tol = kRankTolerance) {
    if (m.rows() == 0 || m.cols() == 0) return 0;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0 || sv(0) <= 0.0) return 0;
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv(i) > tol * sv(0)) ++rank;
    return rank;
}

struct RigidityVerdict {
    bool rigid = false;
    Eigen::Index rank = 0;
    Eigen::Index required = 0;
    /// Set when a seeded random perturbation of the placement changes the
    /// verdict: the supplied placement is non-generic (e.g. collinear) and
    /// the rank test is not conclusive for the graph itself.
    bool degenerate_placement = false;
};

/// Generic rigidity test: rank(R(q)) == 2n-3 (d=2) or 3n-6 (d=3).
inline RigidityVerdict is_generically_rigid(const FormationGraph& g, const Configuration& c,
                                            double tol = kRankTolerance) {
    if ((g.dimension == 2 && g.agent_count < 2) || (g.dimension == 3 && g.agent_count < 3))
        throw std::invalid_argument("too few agents for the rigidity rank formula");

    RigidityVerdict v;
    v.required = g.dimension == 2 ? 2L * g.agent_count - 3 : 3L * g.agent_count - 6;
    v.rank = numerical_rank(build_rigidity_matrix(g, c), tol);
    v.rigid = v.rank == v.required;

    // Cross-check at a perturbed placement; the formula holds for generic q.
    std::mt19937_64 rng(0x666f726d6e6574ULL);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    const double scale = 1e-3 * std::max(1.0, c.positions.cwiseAbs().maxCoeff());
    Configuration jittered = c;
    for (Eigen::Index i = 0; i < jittered.positions.rows(); ++i)
        for (Eigen::Index j = 0; j < jittered.positions.cols(); ++j)
            jittered.positions(i, j) += scale * unit(rng);
    Eigen::Index jittered_rank = numerical_rank(build_rigidity_matrix(g, jittered), tol);
    v.degenerate_placement = (jittered_rank == v.required) != v.rigid;
    return v;
}

/// H^T P^{-1} H for an m x m SPD edge covariance P. Symmetric PSD with zero
/// row sums; rank n - c.
inline Eigen::MatrixXd weighted_laplacian(const FormationGraph& g, const Eigen::MatrixXd& noise_cov) {
    const int m = g.edge_count();
    if (noise_cov.rows() != m || noise_cov.cols() != m)
        throw std::invalid_argument("edge covariance must be m x m");
    const double sym_tol = 1e-12 * std::max(1.0, noise_cov.cwiseAbs().maxCoeff());
    if ((noise_cov - noise_cov.transpose()).cwiseAbs().maxCoeff() > sym_tol)
        throw std::invalid_argument("edge covariance must be symmetric");
    Eigen::LLT<Eigen::MatrixXd> llt(noise_cov);
    if (m > 0 && llt.info() != Eigen::Success)
        throw std::invalid_argument("edge covariance must be positive definite");
    Eigen::MatrixXd h = build_incidence(g);
    Eigen::MatrixXd weighted = m > 0 ? llt.solve(h).eval() : h;  // P^{-1} H
    Eigen::MatrixXd lap = h.transpose() * weighted;
    return ((lap + lap.transpose()) / 2.0).eval();
}

/// Reachability over a subset of edges, given by indices into g.edges.
inline bool is_connected(const FormationGraph& g, std::span<const int> active_edges) {
    validate(g);
    std::vector<std::vector<int>> adj(g.agent_count);
    for (int k : active_edges) {
        if (k < 0 || k >= g.edge_count())
            throw std::invalid_argument("active edge index out of range");
        adj[g.edges[k].tail].push_back(g.edges[k].head);
        adj[g.edges[k].head].push_back(g.edges[k].tail);
    }
    std::vector<char> seen(g.agent_count, 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    int reached = 1;
    while (!stack.empty()) {
        int u = stack.back();
        stack.pop_back();
        for (int w : adj[u])
            if (!seen[w]) {
                seen[w] = 1;
                ++reached;
                stack.push_back(w);
            }
    }
    return reached == g.agent_count;
}

}  // namespace formnet
