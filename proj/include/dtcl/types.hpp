#pragma once

#include "dtcl/numerics.hpp"

#include <stdexcept>
#include <string>

namespace dtcl {

/// One anchor with its positive key and K negative keys (stored as columns).
template <typename Scalar>
struct ContrastiveInstance {
  Vec<Scalar> query;
  Vec<Scalar> positive;
  Mat<Scalar> negatives;  // dim x K

  Eigen::Index dim() const { return query.size(); }
  Eigen::Index num_negatives() const { return negatives.cols(); }

  /// Throws when the vectors do not share one dimension.
  void check_dims(const char* who) const {
    if (positive.size() != query.size() ||
        (negatives.cols() > 0 && negatives.rows() != query.size())) {
      throw std::invalid_argument(std::string(who) + ": dimension mismatch");
    }
  }

  /// Throws unless every vector is unit norm within tol.
  void check_unit_norm(Scalar tol = Scalar(1e-6)) const {
    auto unit = [tol](const auto& v) { return std::abs(v.norm() - Scalar(1)) <= tol; };
    bool ok = unit(query) && unit(positive);
    for (Eigen::Index j = 0; ok && j < negatives.cols(); ++j) ok = unit(negatives.col(j));
    if (!ok) throw std::invalid_argument("ContrastiveInstance: vectors must be unit norm");
  }
};

/// tau_alpha governs the intra-anchor (vector) component, tau_beta the
/// inter-anchor (scalar) component.
struct DualTempConfig {
  double tau_alpha = 0.1;
  double tau_beta = 1.0;

  void validate() const {
    if (!(tau_alpha > 0) || !(tau_beta > 0)) {
      throw std::invalid_argument("DualTempConfig: temperatures must be positive");
    }
  }
  bool single_temperature() const { return tau_alpha == tau_beta; }
};

/// N queries paired with N keys; q_i and k_i are positives, k_j (j != i)
/// are negatives for q_i.
template <typename Scalar>
struct BatchPair {
  Mat<Scalar> queries;  // dim x N
  Mat<Scalar> keys;     // dim x N

  Eigen::Index size() const { return queries.cols(); }

  void validate(const char* who) const {
    if (queries.cols() != keys.cols() || queries.rows() != keys.rows()) {
      throw std::invalid_argument(std::string(who) + ": queries and keys must have equal shape");
    }
    if (queries.cols() < 2) {
      throw std::invalid_argument(std::string(who) + ": batch needs N >= 2 (no negatives otherwise)");
    }
  }

  BatchPair swapped() const { return BatchPair{keys, queries}; }
};

/// Unnormalized class logits with the ground-truth index.
template <typename Scalar>
struct LogitInstance {
  Vec<Scalar> logits;
  Eigen::Index gt_index = 0;

  void validate(const char* who) const {
    if (logits.size() < 2) {
      throw std::invalid_argument(std::string(who) + ": need at least two classes");
    }
    if (gt_index < 0 || gt_index >= logits.size()) {
      throw std::out_of_range(std::string(who) + ": ground-truth index out of range");
    }
  }
};

}  // namespace dtcl
