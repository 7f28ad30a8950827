#pragma once

#include "dtcl/numerics.hpp"

#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace dtcl {

enum class Activation { kNone, kRelu, kTanh };

std::string_view to_string(Activation a);

/// y = act(W x + b), applied column-wise.
struct AffineLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
  Activation activation = Activation::kNone;

  Eigen::Index in_dim() const { return weight.cols(); }
  Eigen::Index out_dim() const { return weight.rows(); }
};

struct Mlp {
  std::vector<AffineLayer> layers;

  bool empty() const { return layers.empty(); }
  Eigen::Index in_dim() const;
  Eigen::Index out_dim() const;
  /// Throws when consecutive layer dimensions do not chain.
  void validate(const char* who) const;
};

/// Activations recorded by Mlp forward; inputs[l] feeds layer l and
/// preacts[l] is W x + b before the nonlinearity.
struct MlpCache {
  std::vector<Eigen::MatrixXd> inputs;
  std::vector<Eigen::MatrixXd> preacts;
  Eigen::MatrixXd output;
};

MlpCache forward(const Mlp& net, const Eigen::MatrixXd& input);

/// Reverse-mode gradients of the parameters given dL/d(output). When
/// grad_input is non-null it receives dL/d(input).
Mlp backward(const Mlp& net, const MlpCache& cache, const Eigen::MatrixXd& grad_output,
             Eigen::MatrixXd* grad_input = nullptr);

/// Backbone (features for linear evaluation), projector (embedding head) and
/// an optional prediction head applied on top of the projector output.
struct EncoderParams {
  Mlp backbone;
  Mlp projector;
  std::optional<Mlp> predictor;

  Eigen::Index input_dim() const;
  Eigen::Index feature_dim() const;
  Eigen::Index embed_dim() const;
  void validate() const;
};

/// Flat views over every weight and bias, in a fixed order.
std::vector<std::span<double>> tensors(EncoderParams& p);
std::vector<std::span<const double>> tensors(const EncoderParams& p);
std::size_t parameter_count(const EncoderParams& p);
Eigen::VectorXd flatten(const EncoderParams& p);
void unflatten(const Eigen::VectorXd& flat, EncoderParams& p);

/// Same shapes as `p`, all zeros.
EncoderParams zeros_like(const EncoderParams& p);

/// Encoder forward for a batch of columns.
struct EmbeddingCache {
  MlpCache backbone;
  MlpCache projector;
  Eigen::MatrixXd features;   // backbone output
  Eigen::MatrixXd embedding;  // projector output before normalization
  Eigen::MatrixXd normalized; // unit columns
};

EmbeddingCache forward(const EncoderParams& params, const Eigen::MatrixXd& input);

/// Gradients of all encoder parameters (predictor excluded) given dL/d(normalized).
/// Includes the normalization Jacobian (I - q q^T) / ||z||.
EncoderParams backward(const EncoderParams& params, const EmbeddingCache& cache,
                       const Eigen::MatrixXd& grad_normalized);

/// Same as backward, starting from dL/d(embedding) before normalization.
EncoderParams backward_from_embedding(const EncoderParams& params, const EmbeddingCache& cache,
                                      const Eigen::MatrixXd& grad_embedding);

/// Predictor pass on top of an embedding, normalized at the end.
struct PredictionCache {
  MlpCache head;
  Eigen::MatrixXd prediction;  // before normalization
  Eigen::MatrixXd normalized;
};

PredictionCache predict(const Mlp& predictor, const Eigen::MatrixXd& embedding);

struct NetworkShape {
  Eigen::Index input_dim = 64;
  Eigen::Index hidden_dim = 128;
  Eigen::Index feature_dim = 128;
  Eigen::Index projector_hidden = 128;
  Eigen::Index embed_dim = 32;
  Eigen::Index predictor_hidden = 64;
};

/// Two ReLU hidden layers, a two-layer projector with a ReLU between, and
/// optionally a predictor of the same form. He-normal weights, zero biases.
EncoderParams init_encoder(const NetworkShape& shape, bool with_predictor, Rng& rng);

/// velocity = momentum * velocity + grad + weight_decay * param;
/// param -= lr * velocity.
struct SgdConfig {
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

void sgd_step(std::span<double> param, std::span<double> velocity, std::span<const double> grad,
              double lr, const SgdConfig& cfg);
void sgd_step(EncoderParams& params, EncoderParams& velocity, const EncoderParams& grad, double lr,
              const SgdConfig& cfg);

/// dst += scale * src, tensor by tensor.
void accumulate(EncoderParams& dst, const EncoderParams& src, double scale = 1.0);

void write_encoder(std::ostream& out, const EncoderParams& p);
EncoderParams read_encoder(std::istream& in);

}  // namespace dtcl
