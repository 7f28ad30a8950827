#include "dtcl/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace dtcl {

namespace {

RPlusProfile make_profile(const Eigen::VectorXd& sums, Eigen::Index k, double tau) {
  RPlusProfile prof;
  prof.r_plus = sums / sums.sum();
  prof.entropy = entropy(prof.r_plus);
  prof.num_anchors = sums.size();
  prof.num_negatives = k;
  prof.tau = tau;
  return prof;
}

// Negative mass of one anchor given its positive similarity and the
// similarities to its negatives.
double negative_mass(double pos_sim, const Eigen::VectorXd& neg_sims, double tau) {
  const double peak = std::max(pos_sim, neg_sims.maxCoeff());
  const double pos = std::exp((pos_sim - peak) / tau);
  const double neg = ((neg_sims.array() - peak) / tau).exp().sum();
  return neg / (pos + neg);
}

}  // namespace

Eigen::VectorXd scalar_sums(const Eigen::MatrixXd& queries, const Eigen::MatrixXd& positives,
                            const Eigen::MatrixXd& negatives, double tau) {
  if (queries.cols() != positives.cols() || queries.rows() != positives.rows() ||
      (negatives.cols() > 0 && negatives.rows() != queries.rows())) {
    throw std::invalid_argument("scalar_sums: shape mismatch");
  }
  if (negatives.cols() < 1) throw std::invalid_argument("r_plus: anchors need at least one negative");
  if (!(tau > 0)) throw std::invalid_argument("r_plus: temperature must be positive");
  const Eigen::MatrixXd neg_sims = queries.transpose() * negatives;  // N x K
  Eigen::VectorXd sums(queries.cols());
  for (Eigen::Index i = 0; i < queries.cols(); ++i) {
    sums(i) = negative_mass(queries.col(i).dot(positives.col(i)), neg_sims.row(i).transpose(), tau);
  }
  return sums;
}

RPlusProfile r_plus(const Eigen::MatrixXd& queries, const Eigen::MatrixXd& positives,
                    const Eigen::MatrixXd& negatives, double tau) {
  if (queries.cols() < 2) throw std::invalid_argument("r_plus: need N >= 2 anchors");
  return make_profile(scalar_sums(queries, positives, negatives, tau), negatives.cols(), tau);
}

RPlusProfile r_plus_in_batch(const Eigen::MatrixXd& queries, const Eigen::MatrixXd& keys,
                             double tau) {
  const Eigen::Index n = queries.cols();
  if (n < 2) throw std::invalid_argument("r_plus: need N >= 2 anchors");
  if (keys.cols() != n || keys.rows() != queries.rows()) {
    throw std::invalid_argument("r_plus_in_batch: shape mismatch");
  }
  if (!(tau > 0)) throw std::invalid_argument("r_plus: temperature must be positive");
  const Eigen::MatrixXd sims = queries.transpose() * keys;
  Eigen::VectorXd sums(n);
  Eigen::VectorXd negs(n - 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index at = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) negs(at++) = sims(i, j);
    }
    sums(i) = negative_mass(sims(i, i), negs, tau);
  }
  return make_profile(sums, n - 1, tau);
}

KeySource random_key_source(Eigen::Index num_negatives, double positive_noise) {
  return [num_negatives, positive_noise](const Eigen::MatrixXd& queries, Rng& rng) {
    const Eigen::Index dim = queries.rows();
    KeyDraw d;
    d.positives.resize(dim, queries.cols());
    const double sigma = positive_noise / std::sqrt(static_cast<double>(dim));
    for (Eigen::Index i = 0; i < queries.cols(); ++i) {
      d.positives.col(i) = positive_noise < 0
                               ? rng.unit_vector(dim)
                               : l2_normalize(queries.col(i) + sigma * rng.normal_vector(dim));
    }
    d.negatives = rng.unit_vectors(dim, num_negatives);
    return d;
  };
}

double r_plus_similarity(const Eigen::MatrixXd& queries, const KeySource& source, double tau,
                         Rng& rng) {
  Rng first = rng.fork(1);
  Rng second = rng.fork(2);
  const KeyDraw a = source(queries, first);
  const KeyDraw b = source(queries, second);
  const RPlusProfile ra = r_plus(queries, a.positives, a.negatives, tau);
  const RPlusProfile rb = r_plus(queries, b.positives, b.negatives, tau);
  return cosine_similarity(ra.r_plus, rb.r_plus);
}

double collapse_stat(const Eigen::MatrixXd& embeddings) {
  const Eigen::Index n = embeddings.cols();
  if (n < 2) throw std::invalid_argument("collapse_stat: need at least two embeddings");
  const Eigen::MatrixXd unit = normalize_columns(embeddings);
  const Eigen::VectorXd total = unit.rowwise().sum();
  // sum_{i != j} u_i . u_j = ||sum u||^2 - n
  const double off_diagonal = total.squaredNorm() - static_cast<double>(n);
  return off_diagonal / static_cast<double>(n * (n - 1));
}

SweepSampler random_sweep_sampler(Eigen::Index dim, double positive_noise) {
  return [dim, positive_noise](Eigen::Index n, Eigen::Index k, Rng& rng) {
    SweepDraw d;
    d.queries = rng.unit_vectors(dim, n);
    KeyDraw keys = random_key_source(k, positive_noise)(d.queries, rng);
    d.positives = std::move(keys.positives);
    d.negatives = std::move(keys.negatives);
    return d;
  };
}

SweepSampler embedding_pool_sampler(Eigen::MatrixXd queries, Eigen::MatrixXd keys) {
  if (queries.cols() != keys.cols() || queries.rows() != keys.rows()) {
    throw std::invalid_argument("embedding_pool_sampler: queries and keys must pair up");
  }
  return [queries = std::move(queries), keys = std::move(keys)](Eigen::Index n, Eigen::Index k,
                                                                 Rng& rng) {
    const auto pool = static_cast<std::size_t>(queries.cols());
    if (static_cast<std::size_t>(n + k) > pool) {
      throw std::invalid_argument("embedding_pool_sampler: pool of " + std::to_string(pool) +
                                  " pairs is smaller than N + K");
    }
    std::vector<std::size_t> idx(pool);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < static_cast<std::size_t>(n + k); ++i) {
      std::swap(idx[i], idx[i + static_cast<std::size_t>(rng.index(pool - i))]);
    }
    SweepDraw d;
    d.queries.resize(queries.rows(), n);
    d.positives.resize(queries.rows(), n);
    d.negatives.resize(queries.rows(), k);
    for (Eigen::Index i = 0; i < n; ++i) {
      d.queries.col(i) = queries.col(static_cast<Eigen::Index>(idx[static_cast<std::size_t>(i)]));
      d.positives.col(i) = keys.col(static_cast<Eigen::Index>(idx[static_cast<std::size_t>(i)]));
    }
    for (Eigen::Index j = 0; j < k; ++j) {
      d.negatives.col(j) = keys.col(static_cast<Eigen::Index>(idx[static_cast<std::size_t>(n + j)]));
    }
    return d;
  };
}

std::vector<SweepRow> entropy_sweep(const SweepConfig& cfg, const SweepSampler& sampler) {
  if (cfg.dict_sizes.empty() || cfg.taus.empty()) {
    throw std::invalid_argument("entropy_sweep: need dictionary sizes and temperatures");
  }
  const Eigen::Index k_max = *std::max_element(cfg.dict_sizes.begin(), cfg.dict_sizes.end());
  std::vector<SweepRow> rows;
  for (const std::uint64_t seed : cfg.seeds) {
    Rng rng(seed);
    const SweepDraw draw = sampler(cfg.num_anchors, k_max, rng);
    for (const Eigen::Index k : cfg.dict_sizes) {
      const Eigen::MatrixXd negatives = draw.negatives.leftCols(k);
      for (const double tau : cfg.taus) {
        const RPlusProfile prof = r_plus(draw.queries, draw.positives, negatives, tau);
        rows.push_back({k, tau, seed, prof.entropy});
      }
    }
  }
  return rows;
}

std::vector<SweepRow> entropy_sweep(const SweepConfig& cfg) {
  return entropy_sweep(cfg, random_sweep_sampler(cfg.dim, cfg.positive_noise));
}

std::vector<SweepRow> similarity_sweep(const SweepConfig& cfg) {
  if (cfg.dict_sizes.empty() || cfg.taus.empty()) {
    throw std::invalid_argument("similarity_sweep: need dictionary sizes and temperatures");
  }
  const Eigen::Index k_max = *std::max_element(cfg.dict_sizes.begin(), cfg.dict_sizes.end());
  std::vector<SweepRow> rows;
  for (const std::uint64_t seed : cfg.seeds) {
    Rng rng(seed);
    const Eigen::MatrixXd queries = rng.unit_vectors(cfg.dim, cfg.num_anchors);
    const KeySource source = random_key_source(k_max, cfg.positive_noise);
    Rng first = rng.fork(1);
    Rng second = rng.fork(2);
    const KeyDraw a = source(queries, first);
    const KeyDraw b = source(queries, second);
    for (const Eigen::Index k : cfg.dict_sizes) {
      for (const double tau : cfg.taus) {
        const RPlusProfile ra = r_plus(queries, a.positives, a.negatives.leftCols(k), tau);
        const RPlusProfile rb = r_plus(queries, b.positives, b.negatives.leftCols(k), tau);
        rows.push_back({k, tau, seed, cosine_similarity(ra.r_plus, rb.r_plus)});
      }
    }
  }
  return rows;
}

double sweep_mean(const std::vector<SweepRow>& rows, Eigen::Index dict_size, double tau) {
  double sum = 0.0;
  int count = 0;
  for (const auto& r : rows) {
    if (r.dict_size == dict_size && r.tau == tau) {
      sum += r.value;
      ++count;
    }
  }
  if (count == 0) throw std::invalid_argument("sweep_mean: no rows for the requested cell");
  return sum / count;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "K,tau,seed,value\n";
  out << std::setprecision(17);
  for (const auto& r : rows) {
    out << r.dict_size << ',' << r.tau << ',' << r.seed << ',' << r.value << '\n';
  }
}

}  // namespace dtcl
