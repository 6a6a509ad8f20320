#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <stdexcept>

#include "formnet/graph.hpp"
#include "formnet/types.hpp"

namespace formnet {

inline void validate_offsets(const FormationGraph& g, const Eigen::MatrixXd& offsets) {
    if (offsets.rows() != g.agent_count || offsets.cols() != g.dimension)
        throw std::invalid_argument("formation offsets must be n x d");
    if (!offsets.allFinite())
        throw std::invalid_argument("formation offsets must be finite");
}

/// Desired inter-agent separation for one edge, induced by the offsets.
inline double target_separation(const Eigen::MatrixXd& offsets, const Edge& e) {
    return (offsets.row(e.tail) - offsets.row(e.head)).norm();
}

/// Consensus control input over the active edge set:
///   u_i = -sum_{j ~ i} [(x_i - x_j) - (delta_i - delta_j)]
/// Zero exactly at any common translation of the offsets, and invariant to
/// translating all positions together.
inline Eigen::MatrixXd control_input(const FormationGraph& g, std::span<const int> active_edges,
                                     const Eigen::MatrixXd& positions, const Eigen::MatrixXd& offsets) {
    if (positions.rows() != g.agent_count || positions.cols() != g.dimension)
        throw std::invalid_argument("positions must be n x d");
    validate_offsets(g, offsets);
    Eigen::MatrixXd u = Eigen::MatrixXd::Zero(g.agent_count, g.dimension);
    for (int idx : active_edges) {
        if (idx < 0 || idx >= static_cast<int>(g.edges.size()))
            throw std::invalid_argument("active edge index out of range");
        const Edge& e = g.edges[idx];
        Eigen::RowVectorXd mismatch = (positions.row(e.tail) - positions.row(e.head)) -
                                      (offsets.row(e.tail) - offsets.row(e.head));
        u.row(e.tail) -= mismatch;
        u.row(e.head) += mismatch;
    }
    return u;
}

inline Eigen::MatrixXd euler_step(const Eigen::MatrixXd& positions, const Eigen::MatrixXd& input, double h) {
    if (!(h > 0.0) || !std::isfinite(h))
        throw std::invalid_argument("step size must be positive and finite");
    return positions + h * input;
}

/// Largest Laplacian eigenvalue of the active subgraph; the explicit Euler
/// consensus iteration is stable iff h * lambda_max < 2.
inline double laplacian_spectral_radius(const FormationGraph& g, std::span<const int> active_edges) {
    Eigen::MatrixXd h = build_incidence(g);
    Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(g.agent_count, g.agent_count);
    for (int idx : active_edges) {
        Eigen::RowVectorXd row = h.row(idx);
        lap += row.transpose() * row;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(lap, Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff();
}

inline bool step_size_stable(const FormationGraph& g, std::span<const int> active_edges, double h) {
    return h * laplacian_spectral_radius(g, active_edges) < 2.0;
}

/// Aggregate shape error: sum over every formation edge of the absolute gap
/// between the realized inter-agent distance and the offset-induced target.
inline double formation_error(const FormationGraph& g, const Eigen::MatrixXd& positions,
                              const Eigen::MatrixXd& offsets) {
    if (positions.rows() != g.agent_count || positions.cols() != g.dimension)
        throw std::invalid_argument("positions must be n x d");
    validate_offsets(g, offsets);
    double total = 0.0;
    for (const Edge& e : g.edges) {
        const double actual = (positions.row(e.tail) - positions.row(e.head)).norm();
        total += std::abs(actual - target_separation(offsets, e));
    }
    return total;
}

}  // namespace formnet
