#pragma once

#include "dtcl/numerics.hpp"
#include "dtcl/types.hpp"

#include <cmath>
#include <stdexcept>

namespace dtcl {

/// Softmax weights of one anchor over {k+, k_1..k_K}.
///
/// p_neg[j] is the probability of the anchor being recognized as k_j, p_hat
/// is p_neg renormalized over the negatives only, and scalar_sum is the
/// attraction weight on k+ (the sum of p_neg).
template <typename Scalar>
struct AnchorWeights {
  Scalar p_pos{};
  Vec<Scalar> p_neg;
  Vec<Scalar> p_hat;
  Scalar scalar_sum{};
};

/// Inter-anchor scalar times intra-anchor vector; full_grad carries the 1/tau.
template <typename Scalar>
struct GradDecomposition {
  Scalar scalar{};
  Vec<Scalar> vector;
  Vec<Scalar> full_grad;
};

template <typename Scalar>
AnchorWeights<Scalar> prob_weights(const ContrastiveInstance<Scalar>& inst, Scalar tau) {
  inst.check_dims("prob_weights");
  if (inst.num_negatives() < 1) {
    throw std::invalid_argument("prob_weights: need at least one negative key");
  }
  if (!(tau > 0)) throw std::invalid_argument("prob_weights: temperature must be positive");

  const Eigen::Index k = inst.num_negatives();
  Vec<Scalar> sims(k + 1);
  sims(0) = inst.query.dot(inst.positive);
  sims.tail(k) = inst.negatives.transpose() * inst.query;
  const Vec<Scalar> p = tempered_softmax(sims, tau);

  AnchorWeights<Scalar> w;
  w.p_pos = p(0);
  w.p_neg = p.tail(k);
  // Summed directly rather than as 1 - p_pos: the masked sum keeps its
  // relative precision when p_pos rounds to one.
  w.scalar_sum = w.p_neg.sum();
  // Softmax over the negatives alone equals p_neg / scalar_sum but never
  // degenerates into 0/0.
  w.p_hat = tempered_softmax(Vec<Scalar>(sims.tail(k)), tau);
  return w;
}

/// Gradient of the uniform-weight loss: -(k+ - mean_j k_j).
template <typename Scalar>
Vec<Scalar> simple_grad(const ContrastiveInstance<Scalar>& inst) {
  inst.check_dims("simple_grad");
  if (inst.num_negatives() < 1) throw std::invalid_argument("simple_grad: need K >= 1");
  return -(inst.positive - inst.negatives.rowwise().mean());
}

/// InfoNCE gradient on the (normalized) query, factorized as
/// -(1/tau) * sum_j p_j * (k+ - sum_j p_hat_j k_j).
template <typename Scalar>
GradDecomposition<Scalar> infonce_grad(const ContrastiveInstance<Scalar>& inst, Scalar tau) {
  const AnchorWeights<Scalar> w = prob_weights(inst, tau);
  GradDecomposition<Scalar> g;
  g.scalar = w.scalar_sum;
  g.vector = inst.positive - inst.negatives * w.p_hat;
  g.full_grad = -(g.scalar / tau) * g.vector;
  return g;
}

/// Central differences, one coordinate at a time.
template <typename Fn>
Eigen::VectorXd fd_gradient(Fn&& loss_fn, const Eigen::VectorXd& at, double h = 1e-4) {
  if (!(h > 0)) throw std::invalid_argument("fd_gradient: step must be positive");
  Eigen::VectorXd x = at;
  Eigen::VectorXd grad(at.size());
  for (Eigen::Index i = 0; i < at.size(); ++i) {
    const double saved = x(i);
    x(i) = saved + h;
    const double up = loss_fn(static_cast<const Eigen::VectorXd&>(x));
    x(i) = saved - h;
    const double down = loss_fn(static_cast<const Eigen::VectorXd&>(x));
    x(i) = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw std::domain_error("fd_gradient: non-finite loss evaluation");
    }
    grad(i) = (up - down) / (2 * h);
  }
  return grad;
}

/// Chain rule through q = z / ||z||: returns (I - q q^T) grad_q / ||z||.
template <typename DerivedZ, typename DerivedG>
Vec<typename DerivedZ::Scalar> normalize_backward(const Eigen::MatrixBase<DerivedZ>& z,
                                                  const Eigen::MatrixBase<DerivedG>& grad_q) {
  using Scalar = typename DerivedZ::Scalar;
  const Scalar norm = z.norm();
  if (!(norm > 0)) throw std::domain_error("normalize_backward: zero-norm input");
  const Vec<Scalar> q = z / norm;
  return (grad_q - q * q.dot(grad_q)) / norm;
}

/// Column-wise normalize_backward.
template <typename Scalar>
Mat<Scalar> normalize_backward_columns(const Mat<Scalar>& z, const Mat<Scalar>& grad_q) {
  if (z.rows() != grad_q.rows() || z.cols() != grad_q.cols()) {
    throw std::invalid_argument("normalize_backward_columns: shape mismatch");
  }
  Mat<Scalar> out(z.rows(), z.cols());
  for (Eigen::Index c = 0; c < z.cols(); ++c) {
    out.col(c) = normalize_backward(z.col(c), grad_q.col(c));
  }
  return out;
}

}  // namespace dtcl
