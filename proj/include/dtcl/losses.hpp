#pragma once

#include "dtcl/gradients.hpp"
#include "dtcl/numerics.hpp"
#include "dtcl/types.hpp"

#include <optional>
#include <stdexcept>

namespace dtcl {

/// -log of the positive's share of the tempered softmax over {k+, k_j}.
template <typename Scalar>
Scalar infonce_loss(const ContrastiveInstance<Scalar>& inst, Scalar tau) {
  inst.check_dims("infonce_loss");
  if (!(tau > 0)) throw std::invalid_argument("infonce_loss: temperature must be positive");
  const Eigen::Index k = inst.num_negatives();
  Vec<Scalar> logits(k + 1);
  logits(0) = inst.query.dot(inst.positive);
  if (k > 0) logits.tail(k) = inst.negatives.transpose() * inst.query;
  logits /= tau;
  return neg_log_softmax_at(logits, 0);
}

template <typename Scalar>
Scalar simple_loss(const ContrastiveInstance<Scalar>& inst) {
  inst.check_dims("simple_loss");
  if (inst.num_negatives() < 1) throw std::invalid_argument("simple_loss: need K >= 1");
  return -inst.query.dot(inst.positive) + (inst.negatives.transpose() * inst.query).mean();
}

template <typename Scalar>
struct DecomposedLoss {
  Scalar loss{};          // sg[grad] . q
  Vec<Scalar> grad;       // -(1/tau_alpha) * scalar * vector
  Scalar scalar{};        // sum_j p_j at tau_beta over the scalar negatives
  Vec<Scalar> vector;     // k+ - sum_j p_hat_j k_j at tau_alpha over the vector negatives
};

/// The stop-gradient reformulation of InfoNCE with independent negative sets
/// and temperatures for its two factors.
///
/// Both factors are frozen numbers; the only differentiable quantity is the
/// bare query, so the returned gradient is exact by construction.
template <typename Scalar>
DecomposedLoss<Scalar> decomposed_loss(const ContrastiveInstance<Scalar>& inst_scalar,
                                       const ContrastiveInstance<Scalar>& inst_vector,
                                       const DualTempConfig& cfg) {
  cfg.validate();
  if (inst_scalar.num_negatives() < 1 || inst_vector.num_negatives() < 1) {
    throw std::invalid_argument("decomposed_loss: empty negative set");
  }
  if (inst_scalar.query != inst_vector.query || inst_scalar.positive != inst_vector.positive) {
    throw std::invalid_argument("decomposed_loss: instances must share query and positive key");
  }
  const Scalar tau_a = static_cast<Scalar>(cfg.tau_alpha);
  const Scalar tau_b = static_cast<Scalar>(cfg.tau_beta);

  DecomposedLoss<Scalar> out;
  out.scalar = prob_weights(inst_scalar, tau_b).scalar_sum;
  const AnchorWeights<Scalar> intra = prob_weights(inst_vector, tau_a);
  out.vector = inst_vector.positive - inst_vector.negatives * intra.p_hat;
  out.grad = -(out.scalar / tau_a) * out.vector;
  out.loss = out.grad.dot(inst_vector.query);
  return out;
}

/// Value plus gradients for a batch loss over S = Q^T K.
template <typename Scalar>
struct BatchLoss {
  Scalar loss{};
  Mat<Scalar> grad_queries;  // dim x N
  Mat<Scalar> grad_keys;     // dim x N
  Vec<Scalar> ratios;        // per-anchor frozen W_beta / W_alpha (ones for plain InfoNCE)
};

namespace detail {

/// Sum of all entries but one, accumulated without the excluded term.
template <typename Scalar>
Scalar sum_except(const Vec<Scalar>& v, Eigen::Index skip) {
  Scalar s = 0;
  for (Eigen::Index j = 0; j < v.size(); ++j) {
    if (j != skip) s += v(j);
  }
  return s;
}

/// One direction of the batch loss: anchors are the columns of `anchors`,
/// candidates the columns of `candidates`, with candidate i positive for
/// anchor i. Accumulates weight * dL/d(anchors) and dL/d(candidates).
///
/// With `tau_b` unset the ratio is skipped entirely, which is the plain
/// tempered InfoNCE over the batch.
template <typename Scalar>
Scalar directional_batch_loss(const Mat<Scalar>& anchors, const Mat<Scalar>& candidates,
                              Scalar tau_a, std::optional<Scalar> tau_b, Scalar weight,
                              Mat<Scalar>& grad_anchors, Mat<Scalar>& grad_candidates,
                              Vec<Scalar>* ratios_out) {
  const Eigen::Index n = anchors.cols();
  const Mat<Scalar> sims = anchors.transpose() * candidates;  // n x n
  Mat<Scalar> dsims(n, n);
  Scalar total = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec<Scalar> row = sims.row(i).transpose();
    const Vec<Scalar> p_a = tempered_softmax(row, tau_a);
    const Scalar w_a = detail::sum_except(p_a, i);
    Scalar ratio = 1;
    if (tau_b) {
      const Vec<Scalar> p_b = tempered_softmax(row, *tau_b);
      const Scalar w_b = detail::sum_except(p_b, i);
      ratio = w_b / w_a;
      total += ratio * neg_log_softmax_at(Vec<Scalar>(row / tau_a), i);
    } else {
      total += neg_log_softmax_at(Vec<Scalar>(row / tau_a), i);
    }
    if (ratios_out) (*ratios_out)(i) = ratio;
    const Scalar c = weight * ratio / (tau_a * static_cast<Scalar>(n));
    dsims.row(i) = c * p_a.transpose();
    dsims(i, i) = -c * w_a;
  }
  grad_anchors.noalias() += candidates * dsims.transpose();
  grad_candidates.noalias() += anchors * dsims;
  return total / static_cast<Scalar>(n);
}

template <typename Scalar>
BatchLoss<Scalar> batch_loss(const BatchPair<Scalar>& batch, Scalar tau_a,
                             std::optional<Scalar> tau_b, bool symmetric) {
  BatchLoss<Scalar> out;
  const Eigen::Index n = batch.size();
  out.grad_queries = Mat<Scalar>::Zero(batch.queries.rows(), n);
  out.grad_keys = Mat<Scalar>::Zero(batch.keys.rows(), n);
  out.ratios = Vec<Scalar>::Ones(n);
  if (!symmetric) {
    out.loss = directional_batch_loss(batch.queries, batch.keys, tau_a, tau_b, Scalar(1),
                                      out.grad_queries, out.grad_keys, &out.ratios);
    return out;
  }
  const Scalar half(0.5);
  const Scalar lq = directional_batch_loss(batch.queries, batch.keys, tau_a, tau_b, half,
                                           out.grad_queries, out.grad_keys, &out.ratios);
  const Scalar lk = directional_batch_loss(batch.keys, batch.queries, tau_a, tau_b, half,
                                           out.grad_keys, out.grad_queries,
                                           static_cast<Vec<Scalar>*>(nullptr));
  out.loss = (lq + lk) / 2;
  return out;
}

}  // namespace detail

/// Dual-temperature batch loss with gradients on both queries and keys.
///
/// Per anchor: -sg(W_beta / W_alpha) * log softmax_{tau_alpha}(q_i . k)[i],
/// where W at each temperature is the off-diagonal probability mass.
/// `ratios` reports the q-side factors.
template <typename Scalar>
BatchLoss<Scalar> dt_loss_with_grad(const BatchPair<Scalar>& batch, const DualTempConfig& cfg,
                                    bool symmetric) {
  batch.validate("dt_loss");
  cfg.validate();
  return detail::batch_loss(batch, static_cast<Scalar>(cfg.tau_alpha),
                            std::optional<Scalar>(static_cast<Scalar>(cfg.tau_beta)), symmetric);
}

template <typename Scalar>
Scalar dt_loss(const BatchPair<Scalar>& batch, const DualTempConfig& cfg, bool symmetric = false) {
  return dt_loss_with_grad(batch, cfg, symmetric).loss;
}

/// Plain single-temperature InfoNCE over the batch (same-batch keys as negatives).
template <typename Scalar>
BatchLoss<Scalar> infonce_batch_loss_with_grad(const BatchPair<Scalar>& batch, Scalar tau,
                                               bool symmetric) {
  batch.validate("infonce_batch_loss");
  if (!(tau > 0)) throw std::invalid_argument("infonce_batch_loss: temperature must be positive");
  return detail::batch_loss(batch, tau, std::optional<Scalar>{}, symmetric);
}

template <typename Scalar>
Scalar infonce_batch_loss(const BatchPair<Scalar>& batch, Scalar tau, bool symmetric = false) {
  return infonce_batch_loss_with_grad(batch, tau, symmetric).loss;
}

/// Batched decomposed loss for anchors that share dictionary negatives.
///
/// Column i of `positives` is the positive key of query i. The scalar factor
/// uses `scalar_negatives` at tau_beta, the vector factor `vector_negatives`
/// at tau_alpha. Gradients reach the queries only; the reported loss is
/// sg(scalar / W_alpha) * InfoNCE_alpha, whose query gradient is the
/// decomposed one. Everything is averaged over the batch.
template <typename Scalar>
BatchLoss<Scalar> decomposed_batch_loss(const Mat<Scalar>& queries, const Mat<Scalar>& positives,
                                        const Mat<Scalar>& scalar_negatives,
                                        const Mat<Scalar>& vector_negatives,
                                        const DualTempConfig& cfg) {
  cfg.validate();
  const Eigen::Index n = queries.cols();
  if (positives.cols() != n || positives.rows() != queries.rows() ||
      scalar_negatives.rows() != queries.rows() || vector_negatives.rows() != queries.rows()) {
    throw std::invalid_argument("decomposed_batch_loss: shape mismatch");
  }
  if (n < 1 || scalar_negatives.cols() < 1 || vector_negatives.cols() < 1) {
    throw std::invalid_argument("decomposed_batch_loss: empty batch or negative set");
  }
  const Scalar tau_a = static_cast<Scalar>(cfg.tau_alpha);
  const Scalar tau_b = static_cast<Scalar>(cfg.tau_beta);
  const Eigen::Index ks = scalar_negatives.cols();
  const Eigen::Index kv = vector_negatives.cols();
  const Mat<Scalar> sims_s = scalar_negatives.transpose() * queries;  // Ks x N
  const Mat<Scalar> sims_v = vector_negatives.transpose() * queries;  // Kv x N
  Mat<Scalar> p_hat(kv, n);

  BatchLoss<Scalar> out;
  out.ratios.resize(n);
  Vec<Scalar> scalars(n);
  Scalar total = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar pos = queries.col(i).dot(positives.col(i));
    Vec<Scalar> logits_s(ks + 1);
    logits_s(0) = pos;
    logits_s.tail(ks) = sims_s.col(i);
    scalars(i) = tempered_softmax(logits_s, tau_b).tail(ks).sum();

    Vec<Scalar> logits_v(kv + 1);
    logits_v(0) = pos;
    logits_v.tail(kv) = sims_v.col(i);
    const Scalar w_a = tempered_softmax(logits_v, tau_a).tail(kv).sum();
    p_hat.col(i) = tempered_softmax(Vec<Scalar>(sims_v.col(i)), tau_a);
    out.ratios(i) = scalars(i) / w_a;
    total += out.ratios(i) * neg_log_softmax_at(Vec<Scalar>(logits_v / tau_a), 0);
  }
  const Scalar inv_n = Scalar(1) / static_cast<Scalar>(n);
  out.loss = total * inv_n;
  out.grad_queries = positives - vector_negatives * p_hat;  // vector factors
  for (Eigen::Index i = 0; i < n; ++i) {
    out.grad_queries.col(i) *= -(scalars(i) / tau_a) * inv_n;
  }
  out.grad_keys = Mat<Scalar>::Zero(positives.rows(), n);
  return out;
}

template <typename Scalar>
struct NonClLoss {
  Scalar loss{};
  Vec<Scalar> grad_predicted;  // with respect to the unnormalized prediction
};

/// -normalize(predicted) . target, optionally scaled by a frozen
/// inter-anchor factor. The target is a constant.
template <typename Scalar>
NonClLoss<Scalar> noncl_loss(const Vec<Scalar>& predicted, const Vec<Scalar>& target_key,
                             std::optional<Scalar> ha_factor = std::nullopt) {
  if (predicted.size() != target_key.size()) {
    throw std::invalid_argument("noncl_loss: dimension mismatch");
  }
  const Scalar scale = ha_factor.value_or(Scalar(1));
  const Vec<Scalar> p = l2_normalize(predicted);
  NonClLoss<Scalar> out;
  out.loss = -scale * p.dot(target_key);
  out.grad_predicted = normalize_backward(predicted, Vec<Scalar>(-scale * target_key));
  return out;
}

template <typename Scalar>
struct LogitLoss {
  Scalar loss{};
  Vec<Scalar> grad_logits;
  Scalar ratio{1};
};

/// Tempered cross-entropy on raw logits (no normalization step).
template <typename Scalar>
LogitLoss<Scalar> ce_loss_with_grad(const LogitInstance<Scalar>& inst, Scalar tau) {
  inst.validate("ce_loss");
  if (!(tau > 0)) throw std::invalid_argument("ce_loss: temperature must be positive");
  const Vec<Scalar> p = tempered_softmax(inst.logits, tau);
  LogitLoss<Scalar> out;
  out.loss = neg_log_softmax_at(Vec<Scalar>(inst.logits / tau), inst.gt_index);
  out.grad_logits = p / tau;
  out.grad_logits(inst.gt_index) = -detail::sum_except(p, inst.gt_index) / tau;
  return out;
}

template <typename Scalar>
Scalar ce_loss(const LogitInstance<Scalar>& inst, Scalar tau) {
  return ce_loss_with_grad(inst, tau).loss;
}

/// Cross-entropy with the inter-anchor factor moved to tau_beta, the
/// one-hot-key analogue of dt_loss.
template <typename Scalar>
LogitLoss<Scalar> ce_dt_loss_with_grad(const LogitInstance<Scalar>& inst, const DualTempConfig& cfg) {
  inst.validate("ce_dt_loss");
  cfg.validate();
  const Scalar tau_a = static_cast<Scalar>(cfg.tau_alpha);
  const Scalar tau_b = static_cast<Scalar>(cfg.tau_beta);
  const Vec<Scalar> p_a = tempered_softmax(inst.logits, tau_a);
  const Vec<Scalar> p_b = tempered_softmax(inst.logits, tau_b);
  const Eigen::Index gt = inst.gt_index;
  const Scalar w_a = detail::sum_except(p_a, gt);
  const Scalar w_b = detail::sum_except(p_b, gt);

  LogitLoss<Scalar> out;
  out.ratio = w_b / w_a;
  out.loss = out.ratio * neg_log_softmax_at(Vec<Scalar>(inst.logits / tau_a), gt);
  out.grad_logits = (out.ratio / tau_a) * p_a;
  out.grad_logits(gt) = -(out.ratio / tau_a) * w_a;
  return out;
}

template <typename Scalar>
Scalar ce_dt_loss(const LogitInstance<Scalar>& inst, const DualTempConfig& cfg) {
  return ce_dt_loss_with_grad(inst, cfg).loss;
}

}  // namespace dtcl
