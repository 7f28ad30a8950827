#include "dtcl/data.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>

namespace dtcl {

void PairDataset::validate() const {
  const auto n = static_cast<Eigen::Index>(labels.size());
  if (view1.cols() != n || view2.cols() != n || view1.rows() != view2.rows()) {
    throw std::invalid_argument("PairDataset: views and labels disagree in shape");
  }
  for (const int l : labels) {
    if (l < 0 || l >= num_classes) throw std::out_of_range("PairDataset: label out of range");
  }
}

void SyntheticSpec::validate() const {
  if (classes < 2) throw std::invalid_argument("SyntheticSpec: need at least two classes");
  if (dim < 2) throw std::invalid_argument("SyntheticSpec: need dim >= 2");
  if (!(noise_scale >= 0)) throw std::invalid_argument("SyntheticSpec: noise scale must be >= 0");
  if (samples < 1 || test_samples < 0) throw std::invalid_argument("SyntheticSpec: invalid sample counts");
}

namespace {

PairDataset draw_pairs(const Eigen::MatrixXd& centers, int count, double sigma, int classes,
                       Rng& rng) {
  const Eigen::Index dim = centers.rows();
  PairDataset d;
  d.num_classes = classes;
  d.view1.resize(dim, count);
  d.view2.resize(dim, count);
  d.labels.resize(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const int label = static_cast<int>(rng.index(static_cast<std::uint64_t>(classes)));
    d.labels[static_cast<std::size_t>(i)] = label;
    d.view1.col(i) = centers.col(label) + sigma * rng.normal_vector(dim);
    d.view2.col(i) = centers.col(label) + sigma * rng.normal_vector(dim);
  }
  return d;
}

}  // namespace

SplitDataset generate_synthetic_pairs(const SyntheticSpec& spec, Rng& rng) {
  spec.validate();
  const Eigen::MatrixXd centers = rng.unit_vectors(spec.dim, spec.classes);
  return generate_synthetic_pairs(spec, centers, rng);
}

SplitDataset generate_synthetic_pairs(const SyntheticSpec& spec, const Eigen::MatrixXd& centers,
                                      Rng& rng) {
  spec.validate();
  if (centers.rows() != spec.dim || centers.cols() != spec.classes) {
    throw std::invalid_argument("generate_synthetic_pairs: centers must be dim x classes");
  }
  const double sigma = spec.noise_scale / std::sqrt(static_cast<double>(spec.dim));
  SplitDataset out;
  out.train = draw_pairs(centers, spec.samples, sigma, spec.classes, rng);
  out.test = draw_pairs(centers, spec.test_samples, sigma, spec.classes, rng);
  return out;
}

CifarVariant parse_cifar_variant(std::string_view name) {
  if (name == "cifar10") return CifarVariant::kCifar10;
  if (name == "cifar100") return CifarVariant::kCifar100;
  throw std::invalid_argument("unknown CIFAR variant: " + std::string(name));
}

std::size_t cifar_record_size(CifarVariant v) {
  return v == CifarVariant::kCifar10 ? 3073 : 3074;
}

LabeledImages load_cifar_binary(const std::filesystem::path& path, CifarVariant variant) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_cifar_binary: cannot open " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  const std::size_t record = cifar_record_size(variant);
  if (bytes.empty() || bytes.size() % record != 0) {
    throw std::runtime_error("load_cifar_binary: " + path.string() + " has " +
                             std::to_string(bytes.size()) +
                             " bytes, not a positive multiple of the expected record size " +
                             std::to_string(record));
  }
  constexpr Eigen::Index kPixels = 3072;
  const std::size_t label_bytes = record - kPixels;
  const std::size_t n = bytes.size() / record;

  LabeledImages out;
  out.num_classes = variant == CifarVariant::kCifar10 ? 10 : 100;
  out.pixels.resize(kPixels, static_cast<Eigen::Index>(n));
  out.labels.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    const unsigned char* rec = bytes.data() + r * record;
    const int label = rec[label_bytes - 1];  // fine label for CIFAR-100
    if (label >= out.num_classes) {
      throw std::runtime_error("load_cifar_binary: label " + std::to_string(label) +
                               " out of range in record " + std::to_string(r));
    }
    out.labels[r] = label;
    for (Eigen::Index p = 0; p < kPixels; ++p) {
      out.pixels(p, static_cast<Eigen::Index>(r)) = rec[label_bytes + static_cast<std::size_t>(p)] / 255.0;
    }
  }
  return out;
}

PairDataset make_noisy_views(const LabeledImages& images, double noise_scale, Rng& rng) {
  PairDataset d;
  d.num_classes = images.num_classes;
  d.labels = images.labels;
  const Eigen::Index dim = images.pixels.rows();
  const double sigma = noise_scale / std::sqrt(static_cast<double>(dim));
  d.view1 = images.pixels + sigma * rng.normal_matrix(dim, images.pixels.cols());
  d.view2 = images.pixels + sigma * rng.normal_matrix(dim, images.pixels.cols());
  return d;
}

LabelNoiseKind parse_label_noise_kind(std::string_view name) {
  if (name == "symmetric") return LabelNoiseKind::kSymmetric;
  if (name == "asymmetric") return LabelNoiseKind::kAsymmetric;
  throw std::invalid_argument("unknown label noise kind: " + std::string(name));
}

std::vector<int> inject_label_noise(const std::vector<int>& labels, int num_classes,
                                    const LabelNoiseSpec& spec, Rng& rng) {
  if (!(spec.ratio >= 0.0 && spec.ratio < 1.0)) {
    throw std::invalid_argument("inject_label_noise: ratio must lie in [0, 1)");
  }
  if (num_classes < 2) throw std::invalid_argument("inject_label_noise: need at least two classes");
  std::vector<int> out = labels;
  if (spec.ratio == 0.0) return out;
  for (int& l : out) {
    if (rng.uniform() >= spec.ratio) continue;
    if (spec.kind == LabelNoiseKind::kSymmetric) {
      // Uniform over the C - 1 other classes.
      const int shift = 1 + static_cast<int>(rng.index(static_cast<std::uint64_t>(num_classes - 1)));
      l = (l + shift) % num_classes;
    } else {
      l = (l + 1) % num_classes;
    }
  }
  return out;
}

}  // namespace dtcl
