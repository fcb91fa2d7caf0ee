#include "tripletsearch/embedding.hpp"

#include <algorithm>
#include <cmath>

#include "tripletsearch/errors.hpp"
#include "tripletsearch/random.hpp"

namespace tripletsearch {

namespace {

void require_same_dim(std::span<const double> u, std::span<const double> v, const char* what) {
  if (u.size() != v.size())
    throw UsageError(std::string(what) + ": dimension mismatch (" + std::to_string(u.size()) +
                     " vs " + std::to_string(v.size()) + ")");
  if (u.empty()) throw UsageError(std::string(what) + ": empty vector");
}

void require_nondegenerate(double norm, const char* what) {
  if (!(norm > kNormEpsilon))
    throw DegenerateInputError(std::string(what) + ": vector norm below epsilon (embedding collapse?)");
}

// y += W x
void gemv_add(const Matrix& w, std::span<const double> x, std::span<double> y) {
  for (std::size_t r = 0; r < w.rows; ++r) y[r] += dot(w.row(r), x);
}

DenseLayer zero_layer(const DenseLayer& like) {
  return DenseLayer{like.name, Matrix(like.weight.rows, like.weight.cols),
                    Vector(like.bias.size(), 0.0)};
}

template <typename Layers, typename Span>
std::vector<Span> layer_blocks(Layers& layers) {
  std::vector<Span> out;
  out.reserve(layers.size() * 2);
  for (auto& layer : layers) {
    out.emplace_back(layer.weight.data);
    out.emplace_back(layer.bias);
  }
  return out;
}

}  // namespace

double dot(std::span<const double> u, std::span<const double> v) {
  double acc = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) acc += u[i] * v[i];
  return acc;
}

double l2_norm(std::span<const double> u) { return std::sqrt(dot(u, u)); }

bool all_finite(std::span<const double> u) {
  return std::all_of(u.begin(), u.end(), [](double x) { return std::isfinite(x); });
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  require_same_dim(u, v, "cosine_similarity");
  const double nu = l2_norm(u);
  const double nv = l2_norm(v);
  require_nondegenerate(nu, "cosine_similarity");
  require_nondegenerate(nv, "cosine_similarity");
  return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

CosineGradient grad_cosine(std::span<const double> u, std::span<const double> v) {
  require_same_dim(u, v, "grad_cosine");
  const double nu = l2_norm(u);
  const double nv = l2_norm(v);
  require_nondegenerate(nu, "grad_cosine");
  require_nondegenerate(nv, "grad_cosine");
  const double s = std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
  const double inv = 1.0 / (nu * nv);
  const double su = s / (nu * nu);
  const double sv = s / (nv * nv);
  CosineGradient g{Vector(u.size()), Vector(v.size())};
  for (std::size_t i = 0; i < u.size(); ++i) {
    g.d_u[i] = v[i] * inv - su * u[i];
    g.d_v[i] = u[i] * inv - sv * v[i];
  }
  return g;
}

std::string to_string(Architecture arch) {
  return arch == Architecture::Linear ? "linear" : "mlp1";
}

Architecture parse_architecture(const std::string& name) {
  if (name == "linear" || name == "Linear") return Architecture::Linear;
  if (name == "mlp1" || name == "MLP1") return Architecture::MLP1;
  throw UsageError("unknown architecture '" + name + "' (expected linear or mlp1)");
}

void GradientBuffer::zero() {
  for (auto& layer : layers_) {
    std::fill(layer.weight.data.begin(), layer.weight.data.end(), 0.0);
    std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
  }
}

std::vector<std::span<double>> GradientBuffer::blocks() {
  return layer_blocks<std::vector<DenseLayer>, std::span<double>>(layers_);
}

std::vector<std::span<const double>> GradientBuffer::blocks() const {
  return layer_blocks<const std::vector<DenseLayer>, std::span<const double>>(layers_);
}

EmbeddingModel::EmbeddingModel(Architecture arch, std::size_t input_dim, std::size_t hidden_dim,
                               std::size_t output_dim)
    : arch_(arch), input_dim_(input_dim), hidden_dim_(hidden_dim), output_dim_(output_dim) {
  if (input_dim == 0 || output_dim == 0) throw UsageError("model dimensions must be positive");
  if (arch == Architecture::Linear) {
    hidden_dim_ = 0;
    layers_.push_back({"fc", Matrix(output_dim, input_dim), Vector(output_dim, 0.0)});
  } else {
    if (hidden_dim == 0) throw UsageError("mlp1 requires a positive hidden_dim");
    layers_.push_back({"fc1", Matrix(hidden_dim, input_dim), Vector(hidden_dim, 0.0)});
    layers_.push_back({"fc2", Matrix(output_dim, hidden_dim), Vector(output_dim, 0.0)});
  }
}

EmbeddingModel EmbeddingModel::initialized(Architecture arch, std::size_t input_dim,
                                           std::size_t hidden_dim, std::size_t output_dim,
                                           std::uint64_t seed) {
  EmbeddingModel model(arch, input_dim, hidden_dim, output_dim);
  model.seed_ = seed;
  Rng rng = make_rng(seed, rng_stream::kModelInit);
  for (auto& layer : model.layers_) {
    const double a =
        std::sqrt(6.0 / static_cast<double>(layer.weight.rows + layer.weight.cols));
    std::uniform_real_distribution<double> dist(-a, a);
    for (double& w : layer.weight.data) w = dist(rng);
  }
  return model;
}

EmbeddingModel EmbeddingModel::identity(std::size_t dim) {
  EmbeddingModel model(Architecture::Linear, dim, 0, dim);
  for (std::size_t i = 0; i < dim; ++i) model.layers_[0].weight(i, i) = 1.0;
  return model;
}

std::vector<std::span<double>> EmbeddingModel::blocks() {
  return layer_blocks<std::vector<DenseLayer>, std::span<double>>(layers_);
}

std::vector<std::span<const double>> EmbeddingModel::blocks() const {
  return layer_blocks<const std::vector<DenseLayer>, std::span<const double>>(layers_);
}

std::size_t EmbeddingModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += layer.weight.data.size() + layer.bias.size();
  return n;
}

GradientBuffer EmbeddingModel::make_gradient_buffer() const {
  std::vector<DenseLayer> zeros;
  zeros.reserve(layers_.size());
  for (const auto& layer : layers_) zeros.push_back(zero_layer(layer));
  return GradientBuffer(std::move(zeros));
}

void EmbeddingModel::validate_shapes() const {
  auto check = [](const DenseLayer& layer, std::size_t out, std::size_t in) {
    if (layer.weight.rows != out || layer.weight.cols != in ||
        layer.weight.data.size() != out * in || layer.bias.size() != out)
      throw UsageError("layer '" + layer.name + "' has inconsistent shape");
  };
  if (arch_ == Architecture::Linear) {
    if (layers_.size() != 1) throw UsageError("linear model must have exactly one layer");
    check(layers_[0], output_dim_, input_dim_);
  } else {
    if (layers_.size() != 2) throw UsageError("mlp1 model must have exactly two layers");
    check(layers_[0], hidden_dim_, input_dim_);
    check(layers_[1], output_dim_, hidden_dim_);
  }
}

Vector EmbeddingModel::forward(std::span<const double> x) const {
  if (x.size() != input_dim_)
    throw UsageError("forward: input has dim " + std::to_string(x.size()) + ", model expects " +
                     std::to_string(input_dim_));
  if (arch_ == Architecture::Linear) {
    const auto& fc = layers_[0];
    Vector y(fc.bias);
    gemv_add(fc.weight, x, y);
    return y;
  }
  const auto& fc1 = layers_[0];
  const auto& fc2 = layers_[1];
  Vector h(fc1.bias);
  gemv_add(fc1.weight, x, h);
  for (double& v : h) v = std::max(v, 0.0);
  Vector y(fc2.bias);
  gemv_add(fc2.weight, h, y);
  return y;
}

void EmbeddingModel::backward(std::span<const double> x, std::span<const double> upstream,
                              GradientBuffer& grads) const {
  if (x.size() != input_dim_) throw UsageError("backward: input dimension mismatch");
  if (upstream.size() != output_dim_) throw UsageError("backward: upstream dimension mismatch");
  auto& g = grads.layers();
  if (g.size() != layers_.size()) throw UsageError("backward: gradient buffer shape mismatch");
  for (std::size_t l = 0; l < layers_.size(); ++l)
    if (g[l].weight.rows != layers_[l].weight.rows || g[l].weight.cols != layers_[l].weight.cols ||
        g[l].bias.size() != layers_[l].bias.size())
      throw UsageError("backward: gradient buffer shape mismatch");

  auto accumulate_affine = [](DenseLayer& grad, std::span<const double> input,
                              std::span<const double> delta) {
    for (std::size_t r = 0; r < grad.weight.rows; ++r) {
      if (delta[r] == 0.0) continue;
      auto row = grad.weight.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) row[c] += delta[r] * input[c];
      grad.bias[r] += delta[r];
    }
  };

  if (arch_ == Architecture::Linear) {
    accumulate_affine(g[0], x, upstream);
    return;
  }
  const auto& fc1 = layers_[0];
  const auto& fc2 = layers_[1];
  Vector pre(fc1.bias);
  gemv_add(fc1.weight, x, pre);
  Vector h(pre.size());
  for (std::size_t i = 0; i < pre.size(); ++i) h[i] = std::max(pre[i], 0.0);
  accumulate_affine(g[1], h, upstream);

  Vector delta(hidden_dim_, 0.0);
  for (std::size_t r = 0; r < fc2.weight.rows; ++r) {
    const double up = upstream[r];
    if (up == 0.0) continue;
    auto row = fc2.weight.row(r);
    for (std::size_t c = 0; c < hidden_dim_; ++c) delta[c] += up * row[c];
  }
  for (std::size_t i = 0; i < hidden_dim_; ++i)
    if (!(pre[i] > 0.0)) delta[i] = 0.0;
  accumulate_affine(g[0], x, delta);
}

}  // namespace tripletsearch
