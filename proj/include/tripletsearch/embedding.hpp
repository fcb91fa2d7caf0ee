#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace tripletsearch {

using Vector = std::vector<double>;

/// Norms at or below this are treated as degenerate by every cosine routine.
inline constexpr double kNormEpsilon = 1e-12;

double dot(std::span<const double> u, std::span<const double> v);
double l2_norm(std::span<const double> u);
bool all_finite(std::span<const double> u);

/// u.v / (|u| |v|), clamped to [-1, 1].
double cosine_similarity(std::span<const double> u, std::span<const double> v);

struct CosineGradient {
  Vector d_u;
  Vector d_v;
};

/// Partial derivatives of cosine_similarity with respect to both arguments.
CosineGradient grad_cosine(std::span<const double> u, std::span<const double> v);

/// Dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  bool operator==(const Matrix&) const = default;
};

enum class Architecture { Linear, MLP1 };

std::string to_string(Architecture arch);
Architecture parse_architecture(const std::string& name);

/// One affine layer: y = weight * x + bias, weight is (out x in).
struct DenseLayer {
  std::string name;
  Matrix weight;
  Vector bias;

  bool operator==(const DenseLayer&) const = default;
};

/// Same shapes as a model's layers; holds accumulated parameter gradients.
class GradientBuffer {
 public:
  GradientBuffer() = default;
  explicit GradientBuffer(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {}

  void zero();
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  /// Weight then bias for every layer, in layer order.
  std::vector<std::span<double>> blocks();
  std::vector<std::span<const double>> blocks() const;

  bool operator==(const GradientBuffer&) const = default;

 private:
  std::vector<DenseLayer> layers_;
};

/// The trainable embedding function. Linear: W x + b. MLP1: W2 relu(W1 x + b1) + b2.
class EmbeddingModel {
 public:
  EmbeddingModel(Architecture arch, std::size_t input_dim, std::size_t hidden_dim,
                 std::size_t output_dim);

  /// Uniform(-a, a) weights with a = sqrt(6 / (fan_in + fan_out)), zero biases.
  static EmbeddingModel initialized(Architecture arch, std::size_t input_dim,
                                    std::size_t hidden_dim, std::size_t output_dim,
                                    std::uint64_t seed);
  /// Linear model with W = I and b = 0; needs input_dim == output_dim.
  static EmbeddingModel identity(std::size_t dim);

  Architecture arch() const { return arch_; }
  std::size_t input_dim() const { return input_dim_; }
  std::size_t hidden_dim() const { return hidden_dim_; }
  std::size_t output_dim() const { return output_dim_; }
  std::uint64_t seed() const { return seed_; }
  void set_seed(std::uint64_t seed) { seed_ = seed; }

  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  std::vector<std::span<double>> blocks();
  std::vector<std::span<const double>> blocks() const;
  std::size_t parameter_count() const;

  /// Zeroed buffer shaped like this model.
  GradientBuffer make_gradient_buffer() const;

  Vector forward(std::span<const double> x) const;

  /// Adds d(upstream . f(x)) / d(theta) into grads for every parameter.
  void backward(std::span<const double> x, std::span<const double> upstream,
                GradientBuffer& grads) const;

  /// Throws UsageError when any layer shape disagrees with the declared dims.
  void validate_shapes() const;

  bool operator==(const EmbeddingModel&) const = default;

 private:
  Architecture arch_;
  std::size_t input_dim_;
  std::size_t hidden_dim_;
  std::size_t output_dim_;
  std::uint64_t seed_ = 0;
  std::vector<DenseLayer> layers_;
};

}  // namespace tripletsearch
