#pragma once

#include "dtcl/analysis.hpp"
#include "dtcl/data.hpp"
#include "dtcl/trainer.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace dtcl {

enum class Mode { kTrain, kEntropySweep, kSimilaritySweep, kGradcheck };

Mode parse_mode(std::string_view name);
std::string_view to_string(Mode m);

struct CifarSource {
  std::string train_path;
  std::string test_path;
  std::string variant = "cifar10";
  /// Noise norm of the two views built from each image.
  double view_noise = 1.0;
};

struct DatasetConfig {
  std::string kind = "synthetic";  // synthetic | cifar
  SyntheticSpec synthetic{};
  CifarSource cifar{};
  /// Shared by every training seed, so seeds differ only in training.
  std::uint64_t seed = 1234;
  std::optional<LabelNoiseSpec> label_noise;
};

struct SweepSettings {
  SweepConfig sweep{};
  /// random | checkpoint
  std::string source = "random";
  std::string checkpoint;
};

/// Everything a run needs, with every default materialized.
struct ExperimentConfig {
  Mode mode = Mode::kTrain;
  TrainConfig train{};
  DatasetConfig dataset{};
  std::vector<std::uint64_t> seeds{0};
  SweepSettings sweep{};
  int gradcheck_instances = 50;
  bool save_checkpoints = false;
  std::string out = "out";

  void validate() const;
};

nlohmann::ordered_json to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_from_json(const nlohmann::json& j);

/// Synthetic data or CIFAR files, with label noise applied to training labels.
SplitDataset build_dataset(const DatasetConfig& cfg);

/// Executes the configured mode, writing outputs under cfg.out. Progress goes
/// to `log`. Returns a process exit code.
int run_experiment(const ExperimentConfig& cfg, std::ostream& log);

}  // namespace dtcl
