#pragma once

// Training objectives: inner-product adjacency reconstruction, Student's-t
// soft assignment, the sharpened target distribution and KL clustering loss.
// Each comes as a plain value function and, where it is trained through, as a
// differentiable version recorded on a tape.

#include "dgen/graph.hpp"
#include "dgen/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace dgen {

inline constexpr double kProbabilityClamp = 1e-7;
inline constexpr double kKlFloor = 1e-12;

/// A_hat(i, j) = sigmoid(z_i . z_j).
inline Matrix reconstruct(const Matrix& z) {
    Matrix logits = z * z.transpose();
    return logits.unaryExpr(&ad::sigmoid_value);
}

/// Reconstruction target: the adjacency with every self-pair set to 1.
inline Matrix reconstruction_target(const Matrix& adjacency) {
    Matrix t = adjacency;
    t.diagonal().setOnes();
    return t;
}

inline Matrix reconstruction_target(const Topology& t) { return reconstruction_target(t.dense()); }

/// #zeros / #ones of a binary target; 1 when either class is absent.
inline double positive_weight(const Matrix& target) {
    const double ones = target.sum();
    const double zeros = static_cast<double>(target.size()) - ones;
    if (ones <= 0.0 || zeros <= 0.0) return 1.0;
    return zeros / ones;
}

/// Positively reweighted mean binary cross-entropy between a predicted
/// adjacency and `adjacency` (self-pairs count as positives).
inline double reconstruction_loss(const Matrix& a_hat, const Matrix& adjacency) {
    if (a_hat.rows() != adjacency.rows() || a_hat.cols() != adjacency.cols())
        throw DimensionError("reconstruction_loss: incompatible shapes " + shape_string(a_hat) + " and " +
                             shape_string(adjacency));
    Matrix target = reconstruction_target(adjacency);
    const double w = positive_weight(target);
    double total = 0.0;
    for (Eigen::Index i = 0; i < a_hat.rows(); ++i)
        for (Eigen::Index j = 0; j < a_hat.cols(); ++j) {
            double p = std::clamp(a_hat(i, j), kProbabilityClamp, 1.0 - kProbabilityClamp);
            double t = target(i, j);
            total += -w * t * std::log(p) - (1.0 - t) * std::log(1.0 - p);
        }
    return total / static_cast<double>(a_hat.size());
}

/// Differentiable reconstruction loss of embedding `z` against a precomputed
/// target (see reconstruction_target).
inline ad::Tensor reconstruction_loss(ad::Tape& tape, const ad::Tensor& z, const Matrix& target) {
    ad::Tensor logits = ad::matmul(tape, z, ad::transpose(tape, z));
    return ad::bce_with_logits(tape, logits, target, positive_weight(target));
}

/// q_ij = (1 + ||z_i - mu_j||^2)^-1 normalized over j.
inline Matrix soft_assign(const Matrix& z, const Matrix& mu) {
    if (mu.rows() == 0) throw ContractError("soft_assign: no centers");
    if (z.cols() != mu.cols())
        throw DimensionError("soft_assign: incompatible shapes " + shape_string(z) + " and " + shape_string(mu));
    Matrix q(z.rows(), mu.rows());
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        for (Eigen::Index j = 0; j < mu.rows(); ++j) q(i, j) = 1.0 / (1.0 + (z.row(i) - mu.row(j)).squaredNorm());
        q.row(i) /= q.row(i).sum();
    }
    return q;
}

inline ad::Tensor soft_assign(ad::Tape& tape, const ad::Tensor& z, const ad::Tensor& mu) {
    if (mu.rows() == 0) throw ContractError("soft_assign: no centers");
    ad::Tensor kernel = ad::reciprocal(tape, ad::add_scalar(tape, ad::pairwise_sq_dist(tape, z, mu), 1.0));
    return ad::row_normalize(tape, kernel);
}

/// p_ij = (q_ij^2 / f_j) / sum_k (q_ik^2 / f_k), f_j = sum_i q_ij.
inline Matrix target_distribution(const Matrix& q) {
    Eigen::RowVectorXd f = q.colwise().sum();
    Matrix p(q.rows(), q.cols());
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
        for (Eigen::Index j = 0; j < q.cols(); ++j) p(i, j) = f(j) > 0.0 ? q(i, j) * q(i, j) / f(j) : 0.0;
        double s = p.row(i).sum();
        if (s > 0.0) p.row(i) /= s;
    }
    return p;
}

/// KL(P || Q) with 0 log 0 = 0. Q entries below 1e-12 are clamped and counted.
inline double clustering_loss(const Matrix& p, const Matrix& q, std::size_t* clamped = nullptr) {
    if (p.rows() != q.rows() || p.cols() != q.cols())
        throw DimensionError("clustering_loss: incompatible shapes " + shape_string(p) + " and " + shape_string(q));
    double total = 0.0;
    for (Eigen::Index i = 0; i < p.rows(); ++i)
        for (Eigen::Index j = 0; j < p.cols(); ++j) {
            double qv = q(i, j);
            if (qv < kKlFloor) {
                qv = kKlFloor;
                if (clamped) ++*clamped;
            }
            if (p(i, j) > 0.0) total += p(i, j) * std::log(p(i, j) / qv);
        }
    return total;
}

/// Differentiable KL(P || Q) with P held constant.
inline ad::Tensor clustering_loss(ad::Tape& tape, const Matrix& p, const ad::Tensor& q, std::size_t* clamped = nullptr) {
    if (p.rows() != q.rows() || p.cols() != q.cols())
        throw DimensionError("clustering_loss: incompatible shapes " + shape_string(p) + " and " +
                             shape_string(q.value()));
    double entropy_term = 0.0;
    for (Eigen::Index k = 0; k < p.size(); ++k)
        if (p.data()[k] > 0.0) entropy_term += p.data()[k] * std::log(p.data()[k]);
    if (clamped) *clamped += static_cast<std::size_t>((q.value().array() < kKlFloor).count());
    ad::Tensor log_q = ad::log(tape, ad::clamp_min(tape, q, kKlFloor));
    ad::Tensor cross = ad::sum(tape, ad::elementwise_mul(tape, log_q, ad::Tensor::constant(p)));
    return ad::add_scalar(tape, ad::scale(tape, cross, -1.0), entropy_term);
}

inline double total_loss(double reconstruction, double clustering, double lambda) {
    require(lambda >= 0.0, "total_loss: lambda must be non-negative");
    return reconstruction + lambda * clustering;
}

inline ad::Tensor total_loss(ad::Tape& tape, const ad::Tensor& reconstruction, const ad::Tensor& clustering,
                             double lambda) {
    require(lambda >= 0.0, "total_loss: lambda must be non-negative");
    return ad::add(tape, reconstruction, ad::scale(tape, clustering, lambda));
}

/// Row-wise argmax, ties to the lowest column.
inline std::vector<int> argmax_rows(const Matrix& m) {
    std::vector<int> out(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        int best = 0;
        for (Eigen::Index j = 1; j < m.cols(); ++j)
            if (m(i, j) > m(i, best)) best = static_cast<int>(j);
        out[static_cast<std::size_t>(i)] = best;
    }
    return out;
}

struct ClusterState {
    ad::Tensor centers;  ///< trainable C x emb_dim
    Matrix q;            ///< soft assignment of the current embedding
    Matrix p;            ///< target distribution, held constant between refreshes
    std::vector<int> hard_labels;
};

}  // namespace dgen
