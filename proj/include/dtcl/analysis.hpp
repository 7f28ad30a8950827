#pragma once

#include "dtcl/numerics.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace dtcl {

/// Batch-normalized attraction weights r_+^i = S_i / sum_i S_i, where S_i is
/// anchor i's total negative probability mass.
struct RPlusProfile {
  Eigen::VectorXd r_plus;
  double entropy = 0.0;  // nats
  Eigen::Index num_anchors = 0;
  Eigen::Index num_negatives = 0;
  double tau = 0.0;
};

/// Per-anchor negative mass sum_j p_j^i; negatives shared by every anchor.
Eigen::VectorXd scalar_sums(const Eigen::MatrixXd& queries, const Eigen::MatrixXd& positives,
                            const Eigen::MatrixXd& negatives, double tau);

/// r_+ with one negative set shared by all anchors (a dictionary).
RPlusProfile r_plus(const Eigen::MatrixXd& queries, const Eigen::MatrixXd& positives,
                    const Eigen::MatrixXd& negatives, double tau);

/// r_+ where anchor i uses keys j != i of the same batch as negatives.
RPlusProfile r_plus_in_batch(const Eigen::MatrixXd& queries, const Eigen::MatrixXd& keys,
                             double tau);

/// Positives and negatives drawn for a fixed set of queries.
struct KeyDraw {
  Eigen::MatrixXd positives;  // dim x N
  Eigen::MatrixXd negatives;  // dim x K
};

using KeySource = std::function<KeyDraw(const Eigen::MatrixXd& queries, Rng& rng)>;

/// Random unit negatives; each positive is normalize(q + noise) with noise
/// norm about positive_noise, i.e. another "view" of the anchor. A negative
/// positive_noise draws positives independently of the queries.
KeySource random_key_source(Eigen::Index num_negatives, double positive_noise);

/// Cosine similarity between r_+ computed from two independent key draws.
double r_plus_similarity(const Eigen::MatrixXd& queries, const KeySource& source, double tau,
                         Rng& rng);

/// Mean pairwise cosine similarity of the columns (1 means full collapse).
double collapse_stat(const Eigen::MatrixXd& embeddings);

struct SweepRow {
  Eigen::Index dict_size = 0;
  double tau = 0.0;
  std::uint64_t seed = 0;
  double value = 0.0;
};

struct SweepConfig {
  Eigen::Index num_anchors = 256;
  Eigen::Index dim = 32;
  std::vector<Eigen::Index> dict_sizes{64, 256, 1024, 4096};
  std::vector<double> taus{0.1};
  std::vector<std::uint64_t> seeds{};
  double positive_noise = 0.5;
};

/// One full draw for a sweep: N queries with positives and a pool of negatives.
struct SweepDraw {
  Eigen::MatrixXd queries;
  Eigen::MatrixXd positives;
  Eigen::MatrixXd negatives;
};

using SweepSampler =
    std::function<SweepDraw(Eigen::Index num_anchors, Eigen::Index num_negatives, Rng& rng)>;

/// Random unit queries plus random_key_source draws.
SweepSampler random_sweep_sampler(Eigen::Index dim, double positive_noise);

/// Anchors, positives and negatives sampled (without replacement) from a pool
/// of embedded pairs, e.g. a trained encoder applied to a dataset.
SweepSampler embedding_pool_sampler(Eigen::MatrixXd queries, Eigen::MatrixXd keys);

/// Entropy of r_+ for every (K, tau, seed). Each seed draws once with the
/// largest K; smaller dictionaries use a prefix of the same negatives.
std::vector<SweepRow> entropy_sweep(const SweepConfig& cfg, const SweepSampler& sampler);
std::vector<SweepRow> entropy_sweep(const SweepConfig& cfg);

/// r_+ resampling similarity for every (K, tau, seed).
std::vector<SweepRow> similarity_sweep(const SweepConfig& cfg);

/// Mean value over seeds for one (K, tau) cell.
double sweep_mean(const std::vector<SweepRow>& rows, Eigen::Index dict_size, double tau);

/// CSV with header K,tau,seed,value.
void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);

}  // namespace dtcl
