#include "dtcl/network.hpp"

#include "dtcl/binary_io.hpp"
#include "dtcl/gradients.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace dtcl {

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::kNone: return "none";
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
  }
  return "unknown";
}

namespace {

Eigen::MatrixXd activate(const Eigen::MatrixXd& z, Activation a) {
  switch (a) {
    case Activation::kNone: return z;
    case Activation::kRelu: return z.cwiseMax(0.0);
    case Activation::kTanh: return z.array().tanh().matrix();
  }
  return z;
}

// dL/dz from dL/dy, where y = act(z).
Eigen::MatrixXd activate_backward(const Eigen::MatrixXd& z, const Eigen::MatrixXd& grad_y,
                                  Activation a) {
  switch (a) {
    case Activation::kNone: return grad_y;
    case Activation::kRelu: return (z.array() > 0.0).select(grad_y.array(), 0.0).matrix();
    case Activation::kTanh: return (grad_y.array() * (1.0 - z.array().tanh().square())).matrix();
  }
  return grad_y;
}

template <typename Fn>
void for_each_layer(EncoderParams& p, bool with_predictor, Fn&& fn) {
  for (auto& l : p.backbone.layers) fn(l);
  for (auto& l : p.projector.layers) fn(l);
  if (with_predictor && p.predictor) {
    for (auto& l : p.predictor->layers) fn(l);
  }
}

template <typename Fn>
void for_each_layer(const EncoderParams& p, bool with_predictor, Fn&& fn) {
  for (const auto& l : p.backbone.layers) fn(l);
  for (const auto& l : p.projector.layers) fn(l);
  if (with_predictor && p.predictor) {
    for (const auto& l : p.predictor->layers) fn(l);
  }
}

Mlp zeros_like(const Mlp& m) {
  Mlp out;
  for (const auto& l : m.layers) {
    out.layers.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                          Eigen::VectorXd::Zero(l.bias.size()), l.activation});
  }
  return out;
}

Eigen::MatrixXd he_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double scale = std::sqrt(2.0 / static_cast<double>(cols));
  return rng.normal_matrix(rows, cols) * scale;
}

AffineLayer make_layer(Eigen::Index in, Eigen::Index out, Activation act, Rng& rng) {
  return {he_normal(out, in, rng), Eigen::VectorXd::Zero(out), act};
}

void write_mlp(std::ostream& out, const Mlp& m) {
  binio::write_u64(out, m.layers.size());
  for (const auto& l : m.layers) {
    binio::write_u64(out, static_cast<std::uint64_t>(l.weight.rows()));
    binio::write_u64(out, static_cast<std::uint64_t>(l.weight.cols()));
    binio::write_u64(out, static_cast<std::uint64_t>(l.activation));
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) binio::write_f64(out, l.weight(r, c));
    }
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) binio::write_f64(out, l.bias(r));
  }
}

Mlp read_mlp(std::istream& in) {
  Mlp m;
  const auto count = binio::read_u64(in);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto rows = static_cast<Eigen::Index>(binio::read_u64(in));
    const auto cols = static_cast<Eigen::Index>(binio::read_u64(in));
    const auto act = binio::read_u64(in);
    if (act > static_cast<std::uint64_t>(Activation::kTanh)) {
      throw std::runtime_error("read_encoder: unknown activation code");
    }
    AffineLayer l{Eigen::MatrixXd(rows, cols), Eigen::VectorXd(rows), static_cast<Activation>(act)};
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) l.weight(r, c) = binio::read_f64(in);
    }
    for (Eigen::Index r = 0; r < rows; ++r) l.bias(r) = binio::read_f64(in);
    m.layers.push_back(std::move(l));
  }
  return m;
}

}  // namespace

Eigen::Index Mlp::in_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
Eigen::Index Mlp::out_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }

void Mlp::validate(const char* who) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.bias.size() != l.weight.rows()) {
      throw std::invalid_argument(std::string(who) + ": bias size does not match layer output");
    }
    if (i > 0 && layers[i - 1].out_dim() != l.in_dim()) {
      throw std::invalid_argument(std::string(who) + ": layer dimensions do not chain");
    }
  }
}

MlpCache forward(const Mlp& net, const Eigen::MatrixXd& input) {
  if (!net.empty() && input.rows() != net.in_dim()) {
    throw std::invalid_argument("forward: input dimension " + std::to_string(input.rows()) +
                                " does not match layer input " + std::to_string(net.in_dim()));
  }
  MlpCache cache;
  cache.inputs.reserve(net.layers.size());
  cache.preacts.reserve(net.layers.size());
  Eigen::MatrixXd x = input;
  for (const auto& l : net.layers) {
    Eigen::MatrixXd z = l.weight * x;
    z.colwise() += l.bias;
    cache.inputs.push_back(std::move(x));
    x = activate(z, l.activation);
    cache.preacts.push_back(std::move(z));
  }
  cache.output = std::move(x);
  return cache;
}

Mlp backward(const Mlp& net, const MlpCache& cache, const Eigen::MatrixXd& grad_output,
             Eigen::MatrixXd* grad_input) {
  if (cache.inputs.size() != net.layers.size() || cache.output.rows() != grad_output.rows() ||
      cache.output.cols() != grad_output.cols()) {
    throw std::invalid_argument("backward: cache does not match network or upstream gradient");
  }
  Mlp grads = zeros_like(net);
  Eigen::MatrixXd g = grad_output;
  for (std::size_t i = net.layers.size(); i-- > 0;) {
    const auto& l = net.layers[i];
    const Eigen::MatrixXd gz = activate_backward(cache.preacts[i], g, l.activation);
    grads.layers[i].weight.noalias() = gz * cache.inputs[i].transpose();
    grads.layers[i].bias = gz.rowwise().sum();
    if (i > 0 || grad_input) g.noalias() = l.weight.transpose() * gz;
  }
  if (grad_input) *grad_input = net.layers.empty() ? grad_output : g;
  return grads;
}

Eigen::Index EncoderParams::input_dim() const { return backbone.in_dim(); }
Eigen::Index EncoderParams::feature_dim() const { return backbone.out_dim(); }
Eigen::Index EncoderParams::embed_dim() const {
  return projector.empty() ? backbone.out_dim() : projector.out_dim();
}

void EncoderParams::validate() const {
  backbone.validate("backbone");
  projector.validate("projector");
  if (backbone.empty()) throw std::invalid_argument("EncoderParams: empty backbone");
  if (!projector.empty() && projector.in_dim() != backbone.out_dim()) {
    throw std::invalid_argument("EncoderParams: projector input does not match backbone output");
  }
  if (predictor) {
    predictor->validate("predictor");
    if (predictor->in_dim() != embed_dim() || predictor->out_dim() != embed_dim()) {
      throw std::invalid_argument("EncoderParams: predictor must map the embedding space to itself");
    }
  }
}

std::vector<std::span<double>> tensors(EncoderParams& p) {
  std::vector<std::span<double>> out;
  for_each_layer(p, true, [&](AffineLayer& l) {
    out.emplace_back(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
    out.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
  });
  return out;
}

std::vector<std::span<const double>> tensors(const EncoderParams& p) {
  std::vector<std::span<const double>> out;
  for_each_layer(p, true, [&](const AffineLayer& l) {
    out.emplace_back(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
    out.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
  });
  return out;
}

std::size_t parameter_count(const EncoderParams& p) {
  std::size_t n = 0;
  for (const auto& t : tensors(p)) n += t.size();
  return n;
}

Eigen::VectorXd flatten(const EncoderParams& p) {
  Eigen::VectorXd flat(static_cast<Eigen::Index>(parameter_count(p)));
  Eigen::Index at = 0;
  for (const auto& t : tensors(p)) {
    for (const double v : t) flat(at++) = v;
  }
  return flat;
}

void unflatten(const Eigen::VectorXd& flat, EncoderParams& p) {
  if (static_cast<std::size_t>(flat.size()) != parameter_count(p)) {
    throw std::invalid_argument("unflatten: size mismatch");
  }
  Eigen::Index at = 0;
  for (auto& t : tensors(p)) {
    for (double& v : t) v = flat(at++);
  }
}

EncoderParams zeros_like(const EncoderParams& p) {
  EncoderParams out;
  out.backbone = zeros_like(p.backbone);
  out.projector = zeros_like(p.projector);
  if (p.predictor) out.predictor = zeros_like(*p.predictor);
  return out;
}

EmbeddingCache forward(const EncoderParams& params, const Eigen::MatrixXd& input) {
  EmbeddingCache c;
  c.backbone = forward(params.backbone, input);
  c.features = c.backbone.output;
  c.projector = forward(params.projector, c.features);
  c.embedding = c.projector.output;
  c.normalized = normalize_columns(c.embedding);
  return c;
}

EncoderParams backward(const EncoderParams& params, const EmbeddingCache& cache,
                       const Eigen::MatrixXd& grad_normalized) {
  if (grad_normalized.rows() != cache.normalized.rows() ||
      grad_normalized.cols() != cache.normalized.cols()) {
    throw std::invalid_argument("backward: upstream gradient does not match cached embedding");
  }
  return backward_from_embedding(
      params, cache, normalize_backward_columns<double>(cache.embedding, grad_normalized));
}

EncoderParams backward_from_embedding(const EncoderParams& params, const EmbeddingCache& cache,
                                      const Eigen::MatrixXd& grad_embedding) {
  if (grad_embedding.rows() != cache.embedding.rows() ||
      grad_embedding.cols() != cache.embedding.cols()) {
    throw std::invalid_argument("backward: upstream gradient does not match cached embedding");
  }
  EncoderParams grads;
  Eigen::MatrixXd grad_features;
  grads.projector = backward(params.projector, cache.projector, grad_embedding, &grad_features);
  grads.backbone = backward(params.backbone, cache.backbone, grad_features);
  return grads;
}

PredictionCache predict(const Mlp& predictor, const Eigen::MatrixXd& embedding) {
  PredictionCache c;
  c.head = forward(predictor, embedding);
  c.prediction = c.head.output;
  c.normalized = normalize_columns(c.prediction);
  return c;
}

EncoderParams init_encoder(const NetworkShape& s, bool with_predictor, Rng& rng) {
  EncoderParams p;
  p.backbone.layers.push_back(make_layer(s.input_dim, s.hidden_dim, Activation::kRelu, rng));
  p.backbone.layers.push_back(make_layer(s.hidden_dim, s.feature_dim, Activation::kRelu, rng));
  p.projector.layers.push_back(make_layer(s.feature_dim, s.projector_hidden, Activation::kRelu, rng));
  p.projector.layers.push_back(make_layer(s.projector_hidden, s.embed_dim, Activation::kNone, rng));
  if (with_predictor) {
    Mlp h;
    h.layers.push_back(make_layer(s.embed_dim, s.predictor_hidden, Activation::kRelu, rng));
    h.layers.push_back(make_layer(s.predictor_hidden, s.embed_dim, Activation::kNone, rng));
    p.predictor = std::move(h);
  }
  p.validate();
  return p;
}

void sgd_step(std::span<double> param, std::span<double> velocity, std::span<const double> grad,
              double lr, const SgdConfig& cfg) {
  if (param.size() != velocity.size() || param.size() != grad.size()) {
    throw std::invalid_argument("sgd_step: shape mismatch");
  }
  for (std::size_t i = 0; i < param.size(); ++i) {
    velocity[i] = cfg.momentum * velocity[i] + grad[i] + cfg.weight_decay * param[i];
    param[i] -= lr * velocity[i];
  }
}

void sgd_step(EncoderParams& params, EncoderParams& velocity, const EncoderParams& grad, double lr,
              const SgdConfig& cfg) {
  auto p = tensors(params);
  auto v = tensors(velocity);
  const auto g = tensors(grad);
  if (p.size() != v.size() || p.size() != g.size()) {
    throw std::invalid_argument("sgd_step: parameter structure mismatch");
  }
  for (std::size_t i = 0; i < p.size(); ++i) sgd_step(p[i], v[i], g[i], lr, cfg);
}

void accumulate(EncoderParams& dst, const EncoderParams& src, double scale) {
  auto d = tensors(dst);
  const auto s = tensors(src);
  if (d.size() != s.size()) throw std::invalid_argument("accumulate: structure mismatch");
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i].size() != s[i].size()) throw std::invalid_argument("accumulate: shape mismatch");
    for (std::size_t j = 0; j < d[i].size(); ++j) d[i][j] += scale * s[i][j];
  }
}

void write_encoder(std::ostream& out, const EncoderParams& p) {
  write_mlp(out, p.backbone);
  write_mlp(out, p.projector);
  binio::write_u64(out, p.predictor ? 1 : 0);
  if (p.predictor) write_mlp(out, *p.predictor);
}

EncoderParams read_encoder(std::istream& in) {
  EncoderParams p;
  p.backbone = read_mlp(in);
  p.projector = read_mlp(in);
  if (binio::read_u64(in) != 0) p.predictor = read_mlp(in);
  p.validate();
  return p;
}

}  // namespace dtcl
