#pragma once

#include "dtcl/numerics.hpp"

#include <filesystem>
#include <string_view>
#include <vector>

namespace dtcl {

/// Paired views of the same underlying samples, one sample per column.
struct PairDataset {
  Eigen::MatrixXd view1;  // input_dim x n
  Eigen::MatrixXd view2;  // input_dim x n
  std::vector<int> labels;
  int num_classes = 0;

  std::size_t size() const { return labels.size(); }
  Eigen::Index input_dim() const { return view1.rows(); }
  void validate() const;
};

struct SplitDataset {
  PairDataset train;
  PairDataset test;
};

/// Class centers on the unit sphere; each sample's two views are its
/// center plus independent isotropic Gaussian noise with per-coordinate
/// standard deviation noise_scale / sqrt(dim), so the noise norm is about
/// noise_scale.
struct SyntheticSpec {
  int classes = 32;
  Eigen::Index dim = 64;
  double noise_scale = 2.5;
  int samples = 4096;
  int test_samples = 1024;

  void validate() const;
};

SplitDataset generate_synthetic_pairs(const SyntheticSpec& spec, Rng& rng);

/// Same as above with caller-supplied centers (dim x classes).
SplitDataset generate_synthetic_pairs(const SyntheticSpec& spec, const Eigen::MatrixXd& centers,
                                      Rng& rng);

enum class CifarVariant { kCifar10, kCifar100 };

CifarVariant parse_cifar_variant(std::string_view name);

/// Bytes per record: 1 label + 3072 pixels (CIFAR-10), or coarse label +
/// fine label + 3072 pixels (CIFAR-100).
std::size_t cifar_record_size(CifarVariant v);

struct LabeledImages {
  Eigen::MatrixXd pixels;  // 3072 x n, scaled to [0, 1]
  std::vector<int> labels;
  int num_classes = 0;
};

/// Reads the binary CIFAR format. CIFAR-100 records use the fine label.
LabeledImages load_cifar_binary(const std::filesystem::path& path, CifarVariant variant);

/// Two views per image: pixels plus independent Gaussian noise.
PairDataset make_noisy_views(const LabeledImages& images, double noise_scale, Rng& rng);

enum class LabelNoiseKind { kSymmetric, kAsymmetric };

struct LabelNoiseSpec {
  LabelNoiseKind kind = LabelNoiseKind::kSymmetric;
  double ratio = 0.0;
};

LabelNoiseKind parse_label_noise_kind(std::string_view name);

/// Symmetric: with probability ratio, relabel uniformly among the other
/// classes. Asymmetric: with probability ratio, map c to (c + 1) mod C.
std::vector<int> inject_label_noise(const std::vector<int>& labels, int num_classes,
                                    const LabelNoiseSpec& spec, Rng& rng);

}  // namespace dtcl
