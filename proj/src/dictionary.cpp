#include "dtcl/dictionary.hpp"

#include "dtcl/binary_io.hpp"

#include <numeric>
#include <stdexcept>
#include <string>

namespace dtcl {

SamplingStrategy parse_sampling_strategy(std::string_view name) {
  if (name == "earliest") return SamplingStrategy::kEarliest;
  if (name == "random") return SamplingStrategy::kRandom;
  if (name == "newest") return SamplingStrategy::kNewest;
  throw std::invalid_argument("unknown sampling strategy: " + std::string(name));
}

std::string_view to_string(SamplingStrategy s) {
  switch (s) {
    case SamplingStrategy::kEarliest: return "earliest";
    case SamplingStrategy::kRandom: return "random";
    case SamplingStrategy::kNewest: return "newest";
  }
  return "unknown";
}

QueueDictionary::QueueDictionary(std::size_t capacity, Eigen::Index dim)
    : capacity_(capacity),
      dim_(dim),
      storage_(Eigen::MatrixXd::Zero(dim, static_cast<Eigen::Index>(capacity))),
      tags_(capacity, 0) {
  if (capacity == 0) throw std::invalid_argument("QueueDictionary: capacity must be positive");
  if (dim <= 0) throw std::invalid_argument("QueueDictionary: dimension must be positive");
}

void QueueDictionary::push(const Eigen::MatrixXd& keys, std::int64_t iteration) {
  if (keys.cols() > 0 && keys.rows() != dim_) {
    throw std::invalid_argument("QueueDictionary::push: key dimension mismatch");
  }
  if (iteration < last_iteration_) {
    throw std::invalid_argument("QueueDictionary::push: iteration tags must not decrease");
  }
  // Only the newest `capacity` keys of an oversized batch can survive.
  const auto count = static_cast<std::size_t>(keys.cols());
  const std::size_t first = count > capacity_ ? count - capacity_ : 0;
  for (std::size_t c = first; c < count; ++c) {
    std::size_t dst;
    if (length_ < capacity_) {
      dst = slot(length_);
      ++length_;
    } else {
      dst = head_;
      head_ = (head_ + 1) % capacity_;
    }
    storage_.col(static_cast<Eigen::Index>(dst)) = keys.col(static_cast<Eigen::Index>(c));
    tags_[dst] = iteration;
  }
  last_iteration_ = iteration;
}

KeySample QueueDictionary::sample(SamplingStrategy strategy, std::size_t count, Rng& rng) const {
  if (count > length_) {
    throw std::invalid_argument("QueueDictionary::sample: count " + std::to_string(count) +
                                " exceeds length " + std::to_string(length_));
  }
  std::vector<std::size_t> ranks(count);
  switch (strategy) {
    case SamplingStrategy::kEarliest:
      std::iota(ranks.begin(), ranks.end(), std::size_t{0});
      break;
    case SamplingStrategy::kNewest:
      std::iota(ranks.begin(), ranks.end(), length_ - count);
      break;
    case SamplingStrategy::kRandom: {
      // Partial Fisher-Yates over the age ranks.
      std::vector<std::size_t> pool(length_);
      std::iota(pool.begin(), pool.end(), std::size_t{0});
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.index(length_ - i));
        std::swap(pool[i], pool[j]);
        ranks[i] = pool[i];
      }
      break;
    }
  }
  KeySample out;
  out.keys.resize(dim_, static_cast<Eigen::Index>(count));
  out.tags.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t s = slot(ranks[i]);
    out.keys.col(static_cast<Eigen::Index>(i)) = storage_.col(static_cast<Eigen::Index>(s));
    out.tags[i] = tags_[s];
  }
  return out;
}

KeySample QueueDictionary::contents() const {
  Rng unused(0);
  return sample(SamplingStrategy::kEarliest, length_, unused);
}

void QueueDictionary::write(std::ostream& out) const {
  binio::write_u64(out, capacity_);
  binio::write_u64(out, length_);
  binio::write_u64(out, static_cast<std::uint64_t>(dim_));
  binio::write_i64(out, last_iteration_);
  const KeySample all = contents();
  for (std::size_t r = 0; r < length_; ++r) {
    for (Eigen::Index c = 0; c < dim_; ++c) {
      binio::write_f64(out, all.keys(c, static_cast<Eigen::Index>(r)));
    }
  }
  for (const std::int64_t tag : all.tags) binio::write_i64(out, tag);
  if (!out) throw std::runtime_error("QueueDictionary::write: stream failure");
}

QueueDictionary QueueDictionary::read(std::istream& in) {
  const auto capacity = binio::read_u64(in);
  const auto length = binio::read_u64(in);
  const auto dim = binio::read_u64(in);
  const auto last = binio::read_i64(in);
  if (length > capacity) throw std::runtime_error("QueueDictionary::read: length exceeds capacity");
  QueueDictionary q(capacity, static_cast<Eigen::Index>(dim));
  Eigen::MatrixXd keys(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(length));
  for (std::uint64_t r = 0; r < length; ++r) {
    for (std::uint64_t c = 0; c < dim; ++c) {
      keys(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(r)) = binio::read_f64(in);
    }
  }
  for (std::uint64_t r = 0; r < length; ++r) {
    const auto tag = binio::read_i64(in);
    q.storage_.col(static_cast<Eigen::Index>(r)) = keys.col(static_cast<Eigen::Index>(r));
    q.tags_[r] = tag;
  }
  q.length_ = length;
  q.head_ = 0;
  q.last_iteration_ = last;
  return q;
}

bool operator==(const QueueDictionary& a, const QueueDictionary& b) {
  if (a.capacity_ != b.capacity_ || a.dim_ != b.dim_ || a.length_ != b.length_ ||
      a.last_iteration_ != b.last_iteration_) {
    return false;
  }
  const KeySample ca = a.contents();
  const KeySample cb = b.contents();
  return ca.keys == cb.keys && ca.tags == cb.tags;
}

void MomentumConfig::validate() const {
  if (!(coefficient >= 0.0 && coefficient <= 1.0)) {
    throw std::invalid_argument("MomentumConfig: coefficient must lie in [0, 1]");
  }
}

void momentum_update(std::span<const double> online, std::span<double> target,
                     const MomentumConfig& m) {
  m.validate();
  if (online.size() != target.size()) {
    throw std::invalid_argument("momentum_update: parameter shape mismatch");
  }
  const double keep = m.coefficient;
  const double take = 1.0 - m.coefficient;
  for (std::size_t i = 0; i < target.size(); ++i) {
    target[i] = keep * target[i] + take * online[i];
  }
}

}  // namespace dtcl
