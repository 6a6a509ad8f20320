#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <utility>
#include <vector>

#include "formnet/types.hpp"

namespace formnet {

/// Condition-number ceiling for the anchored normal matrix; beyond it the
/// measurement graph is treated as rank deficient.
inline constexpr double kConditionLimit = 1e12;

/// Noisy relative measurements z = H x + eps over a set of active edges.
/// `values` has one row per edge (row order matches the incidence rows);
/// `covariance` is the (m*d) x (m*d) SPD noise covariance of the stacked
/// measurement vector, block-diagonal per edge in the default model.
struct MeasurementSet {
    Eigen::MatrixXd values;
    Eigen::MatrixXd covariance;
    std::vector<std::pair<int, int>> edges;  // (tail, head) per row, bookkeeping

    Eigen::Index count() const { return values.rows(); }
    Eigen::Index dim() const { return values.cols(); }
};

/// Isotropic per-edge noise, sigma^2 * I, the default measurement model.
inline Eigen::MatrixXd isotropic_covariance(Eigen::Index edge_count, Eigen::Index dim, double sigma) {
    return sigma * sigma * Eigen::MatrixXd::Identity(edge_count * dim, edge_count * dim);
}

/// Incidence matrix split into the reference (leader) column H_r and the
/// columns of everyone else H_b, ascending agent order.
struct PartitionedIncidence {
    Eigen::MatrixXd h_others;     // m x (n-1)
    Eigen::VectorXd h_reference;  // m
    int reference = 0;
    std::vector<int> others;  // original agent index per h_others column
};

struct Estimate {
    Eigen::MatrixXd positions;   // n x d
    Eigen::MatrixXd covariance;  // anchored: (n-1)d x (n-1)d; plain LS/BLUE: nd x nd pseudo-covariance
    long epoch = 0;
};

class RankDeficientError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// a (x) I_d, the lift that applies per-node coefficients to d-vector blocks.
inline Eigen::MatrixXd kron_identity(const Eigen::MatrixXd& a, Eigen::Index d) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(a.rows() * d, a.cols() * d);
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            if (a(i, j) != 0.0)
                out.block(i * d, j * d, d, d) = a(i, j) * Eigen::MatrixXd::Identity(d, d);
    return out;
}

namespace detail {

inline void check_measurements(const Eigen::MatrixXd& h, const MeasurementSet& z) {
    if (z.values.rows() != h.rows())
        throw std::invalid_argument("measurement count does not match incidence rows");
    const Eigen::Index md = z.values.size();
    if (z.covariance.rows() != md || z.covariance.cols() != md)
        throw std::invalid_argument("measurement covariance must be (m*d) x (m*d)");
}

/// Cholesky factor of the noise covariance, rejecting non-SPD inputs.
inline Eigen::LLT<Eigen::MatrixXd> noise_factor(const Eigen::MatrixXd& p) {
    const double tol = 1e-12 * std::max(1.0, p.cwiseAbs().maxCoeff());
    if ((p - p.transpose()).cwiseAbs().maxCoeff() > tol)
        throw std::invalid_argument("noise covariance must be symmetric");
    Eigen::LLT<Eigen::MatrixXd> llt(p);
    if (p.rows() > 0 && llt.info() != Eigen::Success)
        throw std::invalid_argument("noise covariance must be positive definite");
    return llt;
}

/// Moore-Penrose inverse of a symmetric PSD matrix via eigendecomposition.
inline Eigen::MatrixXd psd_pseudo_inverse(const Eigen::MatrixXd& m, double tol = 1e-12) {
    if (m.rows() == 0) return m;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    const auto& vals = es.eigenvalues();
    const double cutoff = tol * std::max(vals.cwiseAbs().maxCoeff(), 1e-300);
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(vals.size());
    for (Eigen::Index i = 0; i < vals.size(); ++i)
        if (vals(i) > cutoff) inv(i) = 1.0 / vals(i);
    return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

/// Minimum-norm weighted least squares over the full (gauge-free) incidence.
inline Estimate gauge_free_estimate(const Eigen::MatrixXd& h, const MeasurementSet& z, bool whiten) {
    check_measurements(h, z);
    const Eigen::Index d = z.dim();
    Eigen::MatrixXd design = kron_identity(h, d);
    Eigen::VectorXd rhs = stack_rows(z.values);
    if (whiten) {
        auto llt = noise_factor(z.covariance);
        design = llt.matrixL().solve(design);
        rhs = llt.matrixL().solve(rhs);
    }
    // The incidence annihilates the all-ones vector, so the normal matrix is
    // singular; complete orthogonal decomposition yields the minimum-norm
    // least-squares solution.
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(design);
    Estimate est;
    est.positions = unstack_rows(cod.solve(rhs), h.cols(), d);
    est.covariance = psd_pseudo_inverse((design.transpose() * design).eval());
    return est;
}

}  // namespace detail

/// Least-squares node estimate from relative measurements, minimum-norm
/// over the translation gauge freedom.
inline Estimate ls_estimate(const Eigen::MatrixXd& h, const MeasurementSet& z) {
    return detail::gauge_free_estimate(h, z, false);
}

/// Best linear unbiased estimate with noise weighting P^{-1}; reduces to
/// ls_estimate when P = I.
inline Estimate blue_estimate(const Eigen::MatrixXd& h, const MeasurementSet& z) {
    return detail::gauge_free_estimate(h, z, true);
}

inline PartitionedIncidence partition_incidence(const Eigen::MatrixXd& h, int reference) {
    if (reference < 0 || reference >= h.cols())
        throw std::invalid_argument("reference agent index out of range");
    PartitionedIncidence part;
    part.reference = reference;
    part.h_reference = h.col(reference);
    part.h_others.resize(h.rows(), h.cols() - 1);
    for (int j = 0, slot = 0; j < h.cols(); ++j) {
        if (j == reference) continue;
        part.h_others.col(slot) = h.col(j);
        part.others.push_back(j);
        ++slot;
    }
    return part;
}

/// Anchored BLUE of the non-reference agents,
/// x_b = (H_b^T P^{-1} H_b)^{-1} H_b^T P^{-1} (z - H_r x_r),
/// with covariance (H_b^T P^{-1} H_b)^{-1}. The anchor removes the
/// translation gauge, so the normal matrix is invertible exactly when every
/// agent is measurement-connected to the reference.
inline Estimate anchored_blue(const PartitionedIncidence& part, const Eigen::VectorXd& reference_position,
                              const MeasurementSet& z) {
    const Eigen::Index d = z.dim();
    if (reference_position.size() != d)
        throw std::invalid_argument("reference position dimension mismatch");
    if (z.values.rows() != part.h_others.rows())
        throw std::invalid_argument("measurement count does not match incidence rows");
    const Eigen::Index md = z.values.size();
    if (z.covariance.rows() != md || z.covariance.cols() != md)
        throw std::invalid_argument("measurement covariance must be (m*d) x (m*d)");

    const Eigen::Index n = part.h_others.cols() + 1;
    auto llt = detail::noise_factor(z.covariance);

    Eigen::MatrixXd design = llt.matrixL().solve(kron_identity(part.h_others, d));
    Eigen::VectorXd shifted = stack_rows(z.values) -
                              kron_identity(part.h_reference, d) * reference_position;
    Eigen::VectorXd rhs_whitened = llt.matrixL().solve(shifted);

    Eigen::MatrixXd normal = design.transpose() * design;
    if (normal.rows() > 0) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(normal);
        const double lo = es.eigenvalues().minCoeff();
        const double hi = es.eigenvalues().maxCoeff();
        if (!(lo > 0.0) || hi / lo > kConditionLimit)
            throw RankDeficientError("measurement graph does not connect every agent to the anchor");
    }

    Eigen::LDLT<Eigen::MatrixXd> solver(normal);
    if (normal.rows() > 0 && solver.info() != Eigen::Success)
        throw RankDeficientError("anchored normal matrix factorization failed");

    Eigen::VectorXd xb = solver.solve(design.transpose() * rhs_whitened);

    Estimate est;
    est.positions.resize(n, d);
    est.positions.row(part.reference) = reference_position;
    for (std::size_t slot = 0; slot < part.others.size(); ++slot)
        est.positions.row(part.others[slot]) = xb.segment(slot * d, d);
    est.covariance = solver.solve(Eigen::MatrixXd::Identity(normal.rows(), normal.cols()));
    return est;
}

}  // namespace formnet
