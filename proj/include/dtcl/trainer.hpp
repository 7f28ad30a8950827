#pragma once

#include "dtcl/data.hpp"
#include "dtcl/dictionary.hpp"
#include "dtcl/network.hpp"
#include "dtcl/schedule.hpp"
#include "dtcl/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dtcl {

enum class Framework { kMocoV2, kSimMoCo, kSimCo, kSingleTemp, kNonClSimSiam, kNonClByol };

/// Accepts mocov2, simmoco, simco, st, noncl (SimSiam-style), noncl-simsiam
/// and noncl-byol.
Framework parse_framework(std::string_view name);
std::string_view to_string(Framework f);

bool uses_momentum_encoder(Framework f);
bool uses_queues(Framework f);
bool uses_predictor(Framework f);

struct FrameworkSpec {
  Framework framework = Framework::kSimCo;
  DualTempConfig temps{};
  /// Average the loss over both view orders (simco, mocov2+, simmoco+, noncl).
  bool symmetric = false;
  MomentumConfig momentum{};
  std::size_t dict_size_scalar = 1024;
  std::size_t dict_size_vector = 1024;
  /// Negatives drawn from the vector dictionary per step; 0 takes all of it.
  std::size_t sample_count = 0;
  SamplingStrategy sampling = SamplingStrategy::kRandom;
  /// One queue serves both factors; with equal temperatures the update is
  /// plain InfoNCE over the sampled keys.
  bool shared_dictionary = false;
  /// Inter-anchor hardness factor. simco/st: the scalar factor uses tau_alpha.
  /// noncl: each anchor's loss is scaled by its frozen in-batch negative mass.
  bool ha_toggle = false;

  void validate() const;
};

/// Online linear probe on detached backbone features. Its learning rate
/// follows the backbone schedule's shape scaled to base_lr.
struct LinearEvalConfig {
  double base_lr = 0.5;
  double momentum = 0.9;
  double weight_decay = 0.0;
};

struct TrainConfig {
  FrameworkSpec framework{};
  ScheduleConfig schedule{};
  NetworkShape network{};
  LinearEvalConfig linear{};
  std::uint64_t seed = 0;
  /// Test embeddings used for the collapse statistic and r_+ entropy.
  Eigen::Index diagnostics_sample = 256;
};

struct LinearClassifier {
  Eigen::MatrixXd weight;  // classes x features
  Eigen::VectorXd bias;
  Eigen::MatrixXd weight_velocity;
  Eigen::VectorXd bias_velocity;

  static LinearClassifier zeros(int num_classes, Eigen::Index feature_dim);
  int num_classes() const { return static_cast<int>(weight.rows()); }
};

/// Predicted class per column; exact ties go to the lowest class index.
std::vector<int> classify(const LinearClassifier& clf, const Eigen::MatrixXd& features);

double top1_accuracy(const LinearClassifier& clf, const Eigen::MatrixXd& features,
                     const std::vector<int>& labels);

/// One SGD step of softmax cross-entropy on the given features. Returns the
/// mean loss before the update.
double linear_eval_step(LinearClassifier& clf, const Eigen::MatrixXd& features,
                        const std::vector<int>& labels, double lr, const LinearEvalConfig& cfg);

struct TrainState {
  EncoderParams online;
  std::optional<EncoderParams> momentum_copy;  // backbone and projector only
  std::optional<QueueDictionary> queue_scalar;
  std::optional<QueueDictionary> queue_vector;
  EncoderParams velocity;
  std::int64_t step = 0;
  LinearClassifier classifier;
  Rng rng;  // negative sampling

  /// Throws when the optional parts disagree with the framework.
  void check(const FrameworkSpec& spec) const;
};

TrainState init_state(const TrainConfig& cfg, int num_classes, Rng& init_rng);

struct StepMetrics {
  double loss = 0.0;
  double lr = 0.0;
  double probe_loss = 0.0;
  /// Mean frozen inter-anchor factor of the step (1 where not applicable).
  double mean_scalar = 1.0;
};

/// One training step on a batch of paired views (columns).
StepMetrics train_step(TrainState& state, const TrainConfig& cfg, const Eigen::MatrixXd& view1,
                       const Eigen::MatrixXd& view2, const std::vector<int>& labels,
                       std::int64_t steps_per_epoch);

/// Loss and parameter gradients of the framework objective, without any
/// update. Exposed for gradient checks; `grads` has the layout of the online
/// encoder (predictor included when present).
struct ObjectiveResult {
  double loss = 0.0;
  double mean_scalar = 1.0;
  EncoderParams grads;
  Eigen::MatrixXd keys;  // detached keys to push, when the framework queues them
};

ObjectiveResult objective(const TrainState& state, const FrameworkSpec& spec,
                          const Eigen::MatrixXd& view1, const Eigen::MatrixXd& view2, Rng& rng);

/// EMA over backbone and projector; the predictor is never copied.
void momentum_update(const EncoderParams& online, EncoderParams& target, const MomentumConfig& m);

struct EpochMetrics {
  int epoch = 0;
  std::int64_t step = 0;
  std::optional<double> loss;  // unset for the initial evaluation
  double top1 = 0.0;
  double r_plus_entropy = 0.0;
  double lr = 0.0;
  double collapse = 0.0;
};

struct MetricLog {
  std::string framework;
  std::uint64_t seed = 0;
  std::vector<EpochMetrics> epochs;  // epochs[0] is the evaluation before training
};

/// Runs the full loop: per epoch a seeded shuffle, full batches only, then
/// evaluation on the test split.
MetricLog run_training(const TrainConfig& cfg, const SplitDataset& data,
                       TrainState* final_state = nullptr);

/// One JSON object per line.
void write_metric_log(std::ostream& out, const MetricLog& log);

/// Versioned little-endian checkpoint of a full TrainState.
void write_checkpoint(std::ostream& out, const TrainState& state);
TrainState read_checkpoint(std::istream& in);

}  // namespace dtcl
