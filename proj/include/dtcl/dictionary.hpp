#pragma once

#include "dtcl/numerics.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dtcl {

enum class SamplingStrategy { kEarliest, kRandom, kNewest };

SamplingStrategy parse_sampling_strategy(std::string_view name);
std::string_view to_string(SamplingStrategy s);

/// Keys drawn from a dictionary, in chronological order except for random
/// draws, which come back in draw order.
struct KeySample {
  Eigen::MatrixXd keys;  // dim x count
  std::vector<std::int64_t> tags;
};

/// Fixed-capacity FIFO of detached keys, each tagged with the training
/// iteration that produced it.
class QueueDictionary {
 public:
  QueueDictionary(std::size_t capacity, Eigen::Index dim);

  /// Appends the columns of `keys`; the oldest entries are evicted once the
  /// queue is full. Tags must not decrease.
  void push(const Eigen::MatrixXd& keys, std::int64_t iteration);

  /// Throws when count exceeds the current length. Never mutates the queue.
  KeySample sample(SamplingStrategy strategy, std::size_t count, Rng& rng) const;

  /// All entries, oldest first.
  KeySample contents() const;

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return length_; }
  bool empty() const { return length_ == 0; }
  bool full() const { return length_ == capacity_; }
  Eigen::Index dim() const { return dim_; }
  std::int64_t last_iteration() const { return last_iteration_; }

  /// Little-endian block: capacity, length, dim, last iteration (u64/i64),
  /// then length x dim row-major f64 keys (oldest first), then length i64 tags.
  void write(std::ostream& out) const;
  static QueueDictionary read(std::istream& in);

  friend bool operator==(const QueueDictionary& a, const QueueDictionary& b);

 private:
  /// Ring slot of the entry `age_rank` positions after the oldest one.
  std::size_t slot(std::size_t age_rank) const { return (head_ + age_rank) % capacity_; }

  std::size_t capacity_;
  Eigen::Index dim_;
  Eigen::MatrixXd storage_;  // dim x capacity
  std::vector<std::int64_t> tags_;
  std::size_t head_ = 0;  // oldest entry
  std::size_t length_ = 0;
  std::int64_t last_iteration_ = -1;
};

struct MomentumConfig {
  double coefficient = 0.99;
  void validate() const;
};

/// target <- m * target + (1 - m) * online, elementwise.
void momentum_update(std::span<const double> online, std::span<double> target,
                     const MomentumConfig& m);

}  // namespace dtcl
