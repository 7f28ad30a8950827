#include "dtcl/trainer.hpp"

#include "dtcl/analysis.hpp"
#include "dtcl/binary_io.hpp"
#include "dtcl/losses.hpp"

#include <json.hpp>

#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

namespace dtcl {

Framework parse_framework(std::string_view name) {
  if (name == "mocov2") return Framework::kMocoV2;
  if (name == "simmoco") return Framework::kSimMoCo;
  if (name == "simco") return Framework::kSimCo;
  if (name == "st") return Framework::kSingleTemp;
  if (name == "noncl" || name == "noncl-simsiam") return Framework::kNonClSimSiam;
  if (name == "noncl-byol") return Framework::kNonClByol;
  throw std::invalid_argument("unknown framework: " + std::string(name));
}

std::string_view to_string(Framework f) {
  switch (f) {
    case Framework::kMocoV2: return "mocov2";
    case Framework::kSimMoCo: return "simmoco";
    case Framework::kSimCo: return "simco";
    case Framework::kSingleTemp: return "st";
    case Framework::kNonClSimSiam: return "noncl-simsiam";
    case Framework::kNonClByol: return "noncl-byol";
  }
  return "unknown";
}

bool uses_momentum_encoder(Framework f) {
  return f == Framework::kMocoV2 || f == Framework::kSimMoCo || f == Framework::kNonClByol;
}

bool uses_queues(Framework f) { return f == Framework::kMocoV2; }

bool uses_predictor(Framework f) {
  return f == Framework::kNonClSimSiam || f == Framework::kNonClByol;
}

void FrameworkSpec::validate() const {
  temps.validate();
  momentum.validate();
  if (uses_queues(framework)) {
    if (dict_size_vector < 1 || (!shared_dictionary && dict_size_scalar < 1)) {
      throw std::invalid_argument("FrameworkSpec: dictionary sizes must be positive");
    }
    if (sample_count > dict_size_vector) {
      throw std::invalid_argument("FrameworkSpec: sample count exceeds the vector dictionary size");
    }
  }
}

LinearClassifier LinearClassifier::zeros(int num_classes, Eigen::Index feature_dim) {
  LinearClassifier c;
  c.weight = Eigen::MatrixXd::Zero(num_classes, feature_dim);
  c.bias = Eigen::VectorXd::Zero(num_classes);
  c.weight_velocity = c.weight;
  c.bias_velocity = c.bias;
  return c;
}

namespace {

void check_labels(const std::vector<int>& labels, Eigen::Index cols, int num_classes) {
  if (static_cast<Eigen::Index>(labels.size()) != cols) {
    throw std::invalid_argument("linear eval: one label per feature column required");
  }
  for (const int l : labels) {
    if (l < 0 || l >= num_classes) throw std::out_of_range("linear eval: label out of range");
  }
}

}  // namespace

std::vector<int> classify(const LinearClassifier& clf, const Eigen::MatrixXd& features) {
  if (features.rows() != clf.weight.cols()) {
    throw std::invalid_argument("classify: feature dimension mismatch");
  }
  const Eigen::MatrixXd logits = (clf.weight * features).colwise() + clf.bias;
  std::vector<int> out(static_cast<std::size_t>(features.cols()));
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    Eigen::Index best = 0;
    for (Eigen::Index r = 1; r < logits.rows(); ++r) {
      if (logits(r, c) > logits(best, c)) best = r;
    }
    out[static_cast<std::size_t>(c)] = static_cast<int>(best);
  }
  return out;
}

double top1_accuracy(const LinearClassifier& clf, const Eigen::MatrixXd& features,
                     const std::vector<int>& labels) {
  check_labels(labels, features.cols(), clf.num_classes());
  if (labels.empty()) return 0.0;
  const std::vector<int> pred = classify(clf, features);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += pred[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double linear_eval_step(LinearClassifier& clf, const Eigen::MatrixXd& features,
                        const std::vector<int>& labels, double lr, const LinearEvalConfig& cfg) {
  check_labels(labels, features.cols(), clf.num_classes());
  if (features.rows() != clf.weight.cols()) {
    throw std::invalid_argument("linear_eval_step: feature dimension mismatch");
  }
  const Eigen::Index n = features.cols();
  Eigen::MatrixXd grad_logits = (clf.weight * features).colwise() + clf.bias;
  double loss = 0.0;
  for (Eigen::Index c = 0; c < n; ++c) {
    const auto label = static_cast<Eigen::Index>(labels[static_cast<std::size_t>(c)]);
    const Eigen::VectorXd logits = grad_logits.col(c);
    loss += neg_log_softmax_at(logits, label);
    grad_logits.col(c) = tempered_softmax(logits, 1.0);
    grad_logits(label, c) -= 1.0;
  }
  grad_logits /= static_cast<double>(n);
  const Eigen::MatrixXd grad_w = grad_logits * features.transpose();
  const Eigen::VectorXd grad_b = grad_logits.rowwise().sum();
  clf.weight_velocity = cfg.momentum * clf.weight_velocity + grad_w + cfg.weight_decay * clf.weight;
  clf.bias_velocity = cfg.momentum * clf.bias_velocity + grad_b;
  clf.weight -= lr * clf.weight_velocity;
  clf.bias -= lr * clf.bias_velocity;
  return loss / static_cast<double>(n);
}

void TrainState::check(const FrameworkSpec& spec) const {
  const Framework f = spec.framework;
  if (momentum_copy.has_value() != uses_momentum_encoder(f)) {
    throw std::invalid_argument("train_step: momentum encoder presence does not match " +
                                std::string(to_string(f)));
  }
  if (queue_scalar.has_value() != uses_queues(f) || queue_vector.has_value() != uses_queues(f)) {
    throw std::invalid_argument("train_step: dictionary presence does not match " +
                                std::string(to_string(f)));
  }
  if (online.predictor.has_value() != uses_predictor(f)) {
    throw std::invalid_argument("train_step: predictor presence does not match " +
                                std::string(to_string(f)));
  }
}

TrainState init_state(const TrainConfig& cfg, int num_classes, Rng& init_rng) {
  cfg.framework.validate();
  cfg.schedule.validate();
  const Framework f = cfg.framework.framework;
  TrainState s;
  s.online = init_encoder(cfg.network, uses_predictor(f), init_rng);
  if (uses_momentum_encoder(f)) {
    EncoderParams copy = s.online;
    copy.predictor.reset();
    s.momentum_copy = std::move(copy);
  }
  if (uses_queues(f)) {
    const Eigen::Index d = cfg.network.embed_dim;
    s.queue_scalar.emplace(cfg.framework.shared_dictionary ? cfg.framework.dict_size_vector
                                                           : cfg.framework.dict_size_scalar,
                           d);
    s.queue_vector.emplace(cfg.framework.dict_size_vector, d);
  }
  s.velocity = zeros_like(s.online);
  s.classifier = LinearClassifier::zeros(num_classes, cfg.network.feature_dim);
  s.rng = init_rng.fork(7);
  return s;
}

void momentum_update(const EncoderParams& online, EncoderParams& target, const MomentumConfig& m) {
  auto update = [&m](const Mlp& src, Mlp& dst) {
    if (src.layers.size() != dst.layers.size()) {
      throw std::invalid_argument("momentum_update: layer count mismatch");
    }
    for (std::size_t i = 0; i < src.layers.size(); ++i) {
      const auto& a = src.layers[i];
      auto& b = dst.layers[i];
      if (a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols() ||
          a.bias.size() != b.bias.size()) {
        throw std::invalid_argument("momentum_update: shape mismatch");
      }
      momentum_update({a.weight.data(), static_cast<std::size_t>(a.weight.size())},
                      {b.weight.data(), static_cast<std::size_t>(b.weight.size())}, m);
      momentum_update({a.bias.data(), static_cast<std::size_t>(a.bias.size())},
                      {b.bias.data(), static_cast<std::size_t>(b.bias.size())}, m);
    }
  };
  update(online.backbone, target.backbone);
  update(online.projector, target.projector);
}

namespace {

void add_into(Mlp& dst, const Mlp& src, double scale = 1.0) {
  for (std::size_t i = 0; i < dst.layers.size(); ++i) {
    dst.layers[i].weight += scale * src.layers[i].weight;
    dst.layers[i].bias += scale * src.layers[i].bias;
  }
}

void add_encoder_grads(EncoderParams& dst, const EncoderParams& src) {
  add_into(dst.backbone, src.backbone);
  add_into(dst.projector, src.projector);
}

Eigen::MatrixXd encode_keys(const EncoderParams& net, const Eigen::MatrixXd& x) {
  return forward(net, x).normalized;
}

DualTempConfig effective_temps(const FrameworkSpec& spec) {
  DualTempConfig t = spec.temps;
  if (spec.ha_toggle) t.tau_beta = t.tau_alpha;
  return t;
}

// Contrastive directions whose negatives are the other keys of the batch.
BatchLoss<double> in_batch(const Eigen::MatrixXd& queries, const Eigen::MatrixXd& keys,
                           const DualTempConfig& temps) {
  return dt_loss_with_grad(BatchPair<double>{queries, keys}, temps, false);
}

struct DictionaryNegatives {
  Eigen::MatrixXd scalar;
  Eigen::MatrixXd vector;
};

std::optional<DictionaryNegatives> draw_negatives(const TrainState& state,
                                                  const FrameworkSpec& spec, Rng& rng) {
  const QueueDictionary& qv = *state.queue_vector;
  const QueueDictionary& qs = *state.queue_scalar;
  const std::size_t need = std::max<std::size_t>(spec.sample_count, 1);
  if (qv.size() < need || (!spec.shared_dictionary && qs.empty())) return std::nullopt;
  DictionaryNegatives neg;
  neg.vector = spec.sample_count == 0 ? qv.contents().keys
                                      : qv.sample(spec.sampling, spec.sample_count, rng).keys;
  neg.scalar = spec.shared_dictionary ? neg.vector : qs.contents().keys;
  return neg;
}

// Stop-gradient prediction loss of one direction. Returns the loss and
// accumulates weight * gradients into `grads` (predictor included).
double noncl_direction(const EncoderParams& online, const EmbeddingCache& cache,
                       const Eigen::MatrixXd& target, const FrameworkSpec& spec, double weight,
                       EncoderParams& grads, double& scalar_sum) {
  const PredictionCache pred = predict(*online.predictor, cache.embedding);
  const Eigen::Index n = target.cols();
  Eigen::VectorXd ha = Eigen::VectorXd::Ones(n);
  if (spec.ha_toggle) {
    const Eigen::MatrixXd sims = pred.normalized.transpose() * target;
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::VectorXd p = tempered_softmax(Eigen::VectorXd(sims.row(i).transpose()),
                                                 spec.temps.tau_alpha);
      ha(i) = detail::sum_except(p, i);
    }
  }
  Eigen::MatrixXd grad_pred(pred.prediction.rows(), n);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto term = noncl_loss<double>(pred.prediction.col(i), target.col(i),
                                         spec.ha_toggle ? std::optional<double>(ha(i)) : std::nullopt);
    loss += term.loss;
    grad_pred.col(i) = (weight / static_cast<double>(n)) * term.grad_predicted;
  }
  Eigen::MatrixXd grad_embedding;
  const Mlp head_grads = backward(*online.predictor, pred.head, grad_pred, &grad_embedding);
  add_into(*grads.predictor, head_grads);
  add_encoder_grads(grads, backward_from_embedding(online, cache, grad_embedding));
  scalar_sum += weight * ha.mean();
  return loss / static_cast<double>(n);
}

}  // namespace

ObjectiveResult objective(const TrainState& state, const FrameworkSpec& spec,
                          const Eigen::MatrixXd& view1, const Eigen::MatrixXd& view2, Rng& rng) {
  if (view1.cols() < 2 || view1.cols() != view2.cols() || view1.rows() != view2.rows()) {
    throw std::invalid_argument("objective: need two views of a batch with N >= 2");
  }
  state.check(spec);
  const EncoderParams& online = state.online;
  ObjectiveResult out;
  out.grads = zeros_like(online);
  const EmbeddingCache c1 = forward(online, view1);
  const DualTempConfig temps = effective_temps(spec);

  switch (spec.framework) {
    case Framework::kSimCo:
    case Framework::kSingleTemp: {
      const EmbeddingCache c2 = forward(online, view2);
      const BatchPair<double> batch{c1.normalized, c2.normalized};
      const BatchLoss<double> bl =
          spec.framework == Framework::kSimCo
              ? dt_loss_with_grad(batch, temps, spec.symmetric)
              : infonce_batch_loss_with_grad(batch, temps.tau_alpha, spec.symmetric);
      add_encoder_grads(out.grads, backward(online, c1, bl.grad_queries));
      add_encoder_grads(out.grads, backward(online, c2, bl.grad_keys));
      out.loss = bl.loss;
      out.mean_scalar = bl.ratios.mean();
      break;
    }
    case Framework::kSimMoCo:
    case Framework::kMocoV2: {
      const EncoderParams& key_net = *state.momentum_copy;
      const Eigen::MatrixXd k2 = encode_keys(key_net, view2);
      std::optional<DictionaryNegatives> neg;
      if (spec.framework == Framework::kMocoV2) neg = draw_negatives(state, spec, rng);
      auto direction = [&](const Eigen::MatrixXd& q, const Eigen::MatrixXd& k) {
        return neg ? decomposed_batch_loss<double>(q, k, neg->scalar, neg->vector, temps)
                   : in_batch(q, k, temps);
      };
      const double w = spec.symmetric ? 0.5 : 1.0;
      const BatchLoss<double> l1 = direction(c1.normalized, k2);
      add_encoder_grads(out.grads, backward(online, c1, w * l1.grad_queries));
      out.loss = w * l1.loss;
      out.mean_scalar = w * l1.ratios.mean();
      if (spec.symmetric) {
        const EmbeddingCache c2 = forward(online, view2);
        const BatchLoss<double> l2 = direction(c2.normalized, encode_keys(key_net, view1));
        add_encoder_grads(out.grads, backward(online, c2, w * l2.grad_queries));
        out.loss += w * l2.loss;
        out.mean_scalar += w * l2.ratios.mean();
      }
      if (spec.framework == Framework::kMocoV2) out.keys = k2;
      break;
    }
    case Framework::kNonClSimSiam:
    case Framework::kNonClByol: {
      const bool byol = spec.framework == Framework::kNonClByol;
      const EncoderParams& target_net = byol ? *state.momentum_copy : online;
      const double w = spec.symmetric ? 0.5 : 1.0;
      double scalar_sum = 0.0;
      out.loss = w * noncl_direction(online, c1, encode_keys(target_net, view2), spec, w,
                                     out.grads, scalar_sum);
      if (spec.symmetric) {
        const EmbeddingCache c2 = forward(online, view2);
        out.loss += w * noncl_direction(online, c2, encode_keys(target_net, view1), spec, w,
                                        out.grads, scalar_sum);
      }
      out.mean_scalar = scalar_sum;
      break;
    }
  }
  return out;
}

StepMetrics train_step(TrainState& state, const TrainConfig& cfg, const Eigen::MatrixXd& view1,
                       const Eigen::MatrixXd& view2, const std::vector<int>& labels,
                       std::int64_t steps_per_epoch) {
  const FrameworkSpec& spec = cfg.framework;
  const ObjectiveResult obj = objective(state, spec, view1, view2, state.rng);

  StepMetrics m;
  m.loss = obj.loss;
  m.mean_scalar = obj.mean_scalar;
  m.lr = lr_at(state.step, cfg.schedule, steps_per_epoch);

  // Probe features come from the encoder that produced this step's loss.
  const Eigen::MatrixXd features = forward(state.online.backbone, view1).output;

  sgd_step(state.online, state.velocity, obj.grads, m.lr,
           SgdConfig{cfg.schedule.momentum, cfg.schedule.weight_decay});
  if (state.queue_vector) {
    state.queue_vector->push(obj.keys, state.step);
    state.queue_scalar->push(obj.keys, state.step);
  }
  if (state.momentum_copy) momentum_update(state.online, *state.momentum_copy, spec.momentum);

  const double peak = cfg.schedule.peak_lr();
  const double probe_lr = peak > 0 ? cfg.linear.base_lr * m.lr / peak : 0.0;
  m.probe_loss = linear_eval_step(state.classifier, features, labels, probe_lr, cfg.linear);
  ++state.step;
  return m;
}

namespace {

struct Evaluation {
  double top1 = 0.0;
  double entropy = 0.0;
  double collapse = 0.0;
};

Evaluation evaluate(const TrainState& state, const TrainConfig& cfg, const PairDataset& test) {
  Evaluation e;
  const EmbeddingCache c1 = forward(state.online, test.view1);
  e.top1 = top1_accuracy(state.classifier, c1.features, test.labels);
  const Eigen::Index n = std::min<Eigen::Index>(cfg.diagnostics_sample, test.view1.cols());
  if (n >= 2) {
    const Eigen::MatrixXd q = c1.normalized.leftCols(n);
    const Eigen::MatrixXd k = forward(state.online, test.view2.leftCols(n)).normalized;
    e.entropy = r_plus_in_batch(q, k, cfg.framework.temps.tau_alpha).entropy;
    e.collapse = collapse_stat(q);
  }
  return e;
}

}  // namespace

MetricLog run_training(const TrainConfig& cfg, const SplitDataset& data, TrainState* final_state) {
  data.train.validate();
  data.test.validate();
  if (data.train.input_dim() != data.test.input_dim()) {
    throw std::invalid_argument("run_training: train and test input dimensions differ");
  }
  TrainConfig resolved = cfg;
  resolved.network.input_dim = data.train.input_dim();
  resolved.schedule.validate();
  const auto n = static_cast<std::int64_t>(data.train.size());
  const std::int64_t batch = resolved.schedule.batch_size;
  const std::int64_t steps_per_epoch = n / batch;
  if (steps_per_epoch < 1 && resolved.schedule.total_epochs > 0) {
    throw std::invalid_argument("run_training: fewer training samples than one batch");
  }

  Rng root(resolved.seed);
  Rng init_rng = root.fork(1);
  Rng shuffle_rng = root.fork(2);
  TrainState state = init_state(resolved, data.train.num_classes, init_rng);

  MetricLog log;
  log.framework = std::string(to_string(resolved.framework.framework));
  log.seed = resolved.seed;

  auto record = [&](int epoch, std::optional<double> loss, double lr) {
    const Evaluation e = evaluate(state, resolved, data.test);
    log.epochs.push_back({epoch, state.step, loss, e.top1, e.entropy, lr, e.collapse});
  };
  record(0, std::nullopt, lr_at(0, resolved.schedule, std::max<std::int64_t>(steps_per_epoch, 1)));

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const Eigen::Index dim = data.train.input_dim();
  Eigen::MatrixXd x1(dim, batch), x2(dim, batch);
  std::vector<int> labels(static_cast<std::size_t>(batch));
  for (int epoch = 1; epoch <= resolved.schedule.total_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    double last_lr = 0.0;
    for (std::int64_t s = 0; s < steps_per_epoch; ++s) {
      for (std::int64_t b = 0; b < batch; ++b) {
        const Eigen::Index idx = order[static_cast<std::size_t>(s * batch + b)];
        x1.col(b) = data.train.view1.col(idx);
        x2.col(b) = data.train.view2.col(idx);
        labels[static_cast<std::size_t>(b)] = data.train.labels[static_cast<std::size_t>(idx)];
      }
      const StepMetrics m = train_step(state, resolved, x1, x2, labels, steps_per_epoch);
      loss_sum += m.loss;
      last_lr = m.lr;
    }
    record(epoch, loss_sum / static_cast<double>(steps_per_epoch), last_lr);
  }
  if (final_state) *final_state = std::move(state);
  return log;
}

void write_metric_log(std::ostream& out, const MetricLog& log) {
  for (const auto& e : log.epochs) {
    nlohmann::ordered_json j;
    j["epoch"] = e.epoch;
    j["step"] = e.step;
    j["loss"] = e.loss ? nlohmann::ordered_json(*e.loss) : nlohmann::ordered_json(nullptr);
    j["top1"] = e.top1;
    j["r_plus_entropy"] = e.r_plus_entropy;
    j["lr"] = e.lr;
    j["collapse"] = e.collapse;
    j["framework"] = log.framework;
    j["seed"] = log.seed;
    out << j.dump() << '\n';
  }
}

namespace {

constexpr std::uint64_t kCheckpointMagic = 0x54504b434c435444ULL;  // "DTCLCKPT"
constexpr std::uint64_t kCheckpointVersion = 1;

void write_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
  binio::write_u64(out, static_cast<std::uint64_t>(m.rows()));
  binio::write_u64(out, static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) binio::write_f64(out, m(r, c));
  }
}

Eigen::MatrixXd read_matrix(std::istream& in) {
  const auto rows = static_cast<Eigen::Index>(binio::read_u64(in));
  const auto cols = static_cast<Eigen::Index>(binio::read_u64(in));
  if (rows > (1 << 24) || cols > (1 << 24)) throw std::runtime_error("checkpoint: corrupt matrix header");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = binio::read_f64(in);
  }
  return m;
}

}  // namespace

void write_checkpoint(std::ostream& out, const TrainState& s) {
  binio::write_u64(out, kCheckpointMagic);
  binio::write_u64(out, kCheckpointVersion);
  binio::write_i64(out, s.step);
  write_encoder(out, s.online);
  write_encoder(out, s.velocity);
  binio::write_u64(out, s.momentum_copy ? 1 : 0);
  if (s.momentum_copy) write_encoder(out, *s.momentum_copy);
  binio::write_u64(out, s.queue_vector ? 1 : 0);
  if (s.queue_vector) {
    s.queue_scalar->write(out);
    s.queue_vector->write(out);
  }
  write_matrix(out, s.classifier.weight);
  write_matrix(out, s.classifier.bias);
  write_matrix(out, s.classifier.weight_velocity);
  write_matrix(out, s.classifier.bias_velocity);
  const Rng::Snapshot snap = s.rng.snapshot();
  for (const std::uint64_t w : snap.words) binio::write_u64(out, w);
  binio::write_f64(out, snap.spare);
  binio::write_u64(out, snap.has_spare ? 1 : 0);
}

TrainState read_checkpoint(std::istream& in) {
  if (binio::read_u64(in) != kCheckpointMagic) throw std::runtime_error("checkpoint: bad magic");
  const std::uint64_t version = binio::read_u64(in);
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }
  TrainState s;
  s.step = binio::read_i64(in);
  s.online = read_encoder(in);
  s.velocity = read_encoder(in);
  if (binio::read_u64(in) != 0) s.momentum_copy = read_encoder(in);
  if (binio::read_u64(in) != 0) {
    s.queue_scalar = QueueDictionary::read(in);
    s.queue_vector = QueueDictionary::read(in);
  }
  s.classifier.weight = read_matrix(in);
  s.classifier.bias = read_matrix(in);
  s.classifier.weight_velocity = read_matrix(in);
  s.classifier.bias_velocity = read_matrix(in);
  Rng::Snapshot snap;
  for (auto& w : snap.words) w = binio::read_u64(in);
  snap.spare = binio::read_f64(in);
  snap.has_spare = binio::read_u64(in) != 0;
  s.rng = Rng::restore(snap);
  return s;
}

}  // namespace dtcl
