#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>

namespace dtcl {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Returns v / ||v||. Throws on a zero or non-finite norm.
template <typename Derived>
Vec<typename Derived::Scalar> l2_normalize(const Eigen::MatrixBase<Derived>& v) {
  const auto norm = v.norm();
  if (!(norm > 0) || !std::isfinite(norm)) {
    throw std::domain_error("l2_normalize: vector has zero or non-finite norm");
  }
  return v / norm;
}

/// Normalizes every column of m to unit length.
template <typename Derived>
Mat<typename Derived::Scalar> normalize_columns(const Eigen::MatrixBase<Derived>& m) {
  Mat<typename Derived::Scalar> out(m.rows(), m.cols());
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    out.col(c) = l2_normalize(m.col(c));
  }
  return out;
}

template <typename Derived>
typename Derived::Scalar logsumexp(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  if (logits.size() == 0) {
    return -std::numeric_limits<Scalar>::infinity();
  }
  const Scalar peak = logits.maxCoeff();
  return peak + std::log((logits.array() - peak).exp().sum());
}

/// -log softmax(logits)[index], accurate when the indexed entry dominates.
///
/// When the target logit is the maximum, the result is computed as
/// log1p(sum_{j != index} exp(l_j - l_index)) so probabilities close to one
/// do not round the loss to zero.
template <typename Derived>
typename Derived::Scalar neg_log_softmax_at(const Eigen::MatrixBase<Derived>& logits,
                                            Eigen::Index index) {
  using Scalar = typename Derived::Scalar;
  if (index < 0 || index >= logits.size()) {
    throw std::out_of_range("neg_log_softmax_at: index out of range");
  }
  const Scalar target = logits(index);
  if (target >= logits.maxCoeff()) {
    Scalar rest = 0;
    for (Eigen::Index j = 0; j < logits.size(); ++j) {
      if (j != index) rest += std::exp(logits(j) - target);
    }
    return std::log1p(rest);
  }
  return logsumexp(logits) - target;
}

/// exp(logits / tau) normalized to a probability vector (max-subtracted).
template <typename Derived>
Vec<typename Derived::Scalar> tempered_softmax(const Eigen::MatrixBase<Derived>& logits,
                                               typename Derived::Scalar tau) {
  using Scalar = typename Derived::Scalar;
  if (!(tau > 0)) {
    throw std::invalid_argument("tempered_softmax: temperature must be positive");
  }
  if (logits.size() == 0) {
    throw std::invalid_argument("tempered_softmax: empty logit vector");
  }
  Vec<Scalar> scaled = logits / tau;
  const Scalar peak = scaled.maxCoeff();
  Vec<Scalar> e = (scaled.array() - peak).exp();
  return e / e.sum();
}

/// Shannon entropy in nats, with 0 ln 0 := 0.
template <typename Derived>
typename Derived::Scalar entropy(const Eigen::MatrixBase<Derived>& p) {
  using Scalar = typename Derived::Scalar;
  Scalar h = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const Scalar pi = p(i);
    if (pi > 0) h -= pi * std::log(pi);
  }
  return h;
}

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine_similarity(const Eigen::MatrixBase<DerivedA>& a,
                                            const Eigen::MatrixBase<DerivedB>& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("cosine_similarity: dimension mismatch");
  }
  const auto na = a.norm();
  const auto nb = b.norm();
  if (!(na > 0) || !(nb > 0)) {
    throw std::domain_error("cosine_similarity: zero-norm input");
  }
  const auto c = a.dot(b) / (na * nb);
  return std::clamp(c, decltype(c)(-1), decltype(c)(1));
}

/// xoshiro256** seeded through splitmix64.
///
/// Bit-stable across platforms; the floating-point helpers only use IEEE
/// arithmetic plus log/sqrt/cos, so draws agree wherever libm does.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0x5eed) { reseed(seed); }

  void reseed(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& word : state_) word = splitmix64(x);
    has_spare_ = false;
  }

  /// An independent generator for the given stream id.
  [[nodiscard]] Rng fork(std::uint64_t stream) const {
    std::uint64_t x = state_[0] ^ (stream * 0x9e3779b97f4a7c15ULL) ^ rotl(state_[2], 17);
    return Rng(splitmix64(x));
  }

  /// Full generator state, for checkpoints.
  struct Snapshot {
    std::array<std::uint64_t, 4> words{};
    double spare = 0.0;
    bool has_spare = false;
  };

  Snapshot snapshot() const {
    return {{state_[0], state_[1], state_[2], state_[3]}, spare_, has_spare_};
  }

  static Rng restore(const Snapshot& s) {
    Rng r;
    for (int i = 0; i < 4; ++i) r.state_[i] = s.words[static_cast<std::size_t>(i)];
    r.spare_ = s.spare;
    r.has_spare_ = s.has_spare;
    return r;
  }

  friend bool operator==(const Rng& a, const Rng& b) {
    return std::equal(a.state_, a.state_ + 4, b.state_) && a.has_spare_ == b.has_spare_ &&
           (!a.has_spare_ || a.spare_ == b.spare_);
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return next(); }

  std::uint64_t next() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n), unbiased (rejection on the top range).
  std::uint64_t index(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::index: empty range");
    const std::uint64_t limit = max() - (max() % n);
    std::uint64_t r;
    do {
      r = next();
    } while (r >= limit);
    return r % n;
  }

  /// Standard normal via Box-Muller; caches the second variate.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * 3.14159265358979323846 * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  Eigen::VectorXd normal_vector(Eigen::Index dim) {
    Eigen::VectorXd v(dim);
    for (Eigen::Index i = 0; i < dim; ++i) v(i) = normal();
    return v;
  }

  Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c) {
      for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = normal();
    }
    return m;
  }

  /// Uniform on the unit sphere S^{dim-1}.
  Eigen::VectorXd unit_vector(Eigen::Index dim) {
    for (;;) {
      Eigen::VectorXd v = normal_vector(dim);
      const double n = v.norm();
      if (n > 1e-12) return v / n;
    }
  }

  /// dim x count matrix of unit columns.
  Eigen::MatrixXd unit_vectors(Eigen::Index dim, Eigen::Index count) {
    Eigen::MatrixXd m(dim, count);
    for (Eigen::Index c = 0; c < count; ++c) m.col(c) = unit_vector(dim);
    return m;
  }

  /// In-place Fisher-Yates shuffle.
  template <typename Container>
  void shuffle(Container& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(index(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  static std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_[4]{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace dtcl
