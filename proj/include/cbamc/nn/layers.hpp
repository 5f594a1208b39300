#pragma once

#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "cbamc/nn/tensor.hpp"
#include "cbamc/rng.hpp"

namespace cbamc::nn {

enum class Mode { Train, Eval };

struct Padding {
  int top = 0;
  int bottom = 0;
  int left = 0;
  int right = 0;

  /// Symmetric (height, width) padding as in (0, 10).
  static Padding symmetric(int height, int width) { return {height, height, width, width}; }
  bool operator==(const Padding&) const = default;
};

struct Conv2dSpec {
  int out_channels = 1;
  int kernel_h = 1;
  int kernel_w = 1;
  Padding padding;
  bool operator==(const Conv2dSpec&) const = default;
};
struct ReluSpec {
  bool operator==(const ReluSpec&) const = default;
};
struct DropoutSpec {
  double rate = 0.5;
  bool operator==(const DropoutSpec&) const = default;
};
struct FlattenSpec {
  bool operator==(const FlattenSpec&) const = default;
};
struct LinearSpec {
  int out_features = 1;
  bool operator==(const LinearSpec&) const = default;
};
struct SoftmaxSpec {
  bool operator==(const SoftmaxSpec&) const = default;
};

using LayerSpec = std::variant<Conv2dSpec, ReluSpec, DropoutSpec, FlattenSpec, LinearSpec, SoftmaxSpec>;

std::string layer_name(const LayerSpec& spec);

/// Per-example output shape of one layer. Throws ShapeMismatch.
Shape layer_output_shape(const LayerSpec& spec, const Shape& input);
std::size_t layer_parameter_count(const LayerSpec& spec, const Shape& input);

/// Every tensor passed to a layer carries a leading batch dimension.
template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::string name() const = 0;
  /// Caches what backward() needs. Dropout requires rng in Train mode.
  virtual Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng* rng) = 0;
  /// Eval-mode forward with no caching; safe to call concurrently.
  virtual Tensor<T> infer(const Tensor<T>& x) const = 0;
  /// Returns the input gradient and accumulates parameter gradients.
  virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;
  virtual std::vector<Param<T>*> params() { return {}; }
  virtual std::vector<const Param<T>*> params() const { return {}; }
  /// Fan-in-scaled uniform init; `relu_follows` selects the He bound.
  virtual void initialize(Rng& /*rng*/, bool /*relu_follows*/) {}
};

/// Cross-correlation, stride 1, zero padding. Input (B, C, H, W).
template <typename T>
class Conv2d : public Layer<T> {
 public:
  Conv2d(int in_channels, const Conv2dSpec& spec);

  std::string name() const override { return "Conv2d"; }
  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng* rng) override;
  Tensor<T> infer(const Tensor<T>& x) const override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::vector<Param<T>*> params() override { return {&weight_, &bias_}; }
  std::vector<const Param<T>*> params() const override { return {&weight_, &bias_}; }
  void initialize(Rng& rng, bool relu_follows) override;

 private:
  void check_input(const Tensor<T>& x) const;
  Shape output_shape(const Tensor<T>& x) const;
  void im2col(const T* image, int height, int width, T* cols) const;
  void col2im(const T* cols, int height, int width, T* image) const;

  int in_channels_;
  Conv2dSpec spec_;
  Param<T> weight_;  // (O, C, kh, kw)
  Param<T> bias_;    // (O)
  std::optional<Tensor<T>> cached_input_;
};

/// Input (B, F).
template <typename T>
class Linear : public Layer<T> {
 public:
  Linear(int in_features, const LinearSpec& spec);

  std::string name() const override { return "Linear"; }
  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng* rng) override;
  Tensor<T> infer(const Tensor<T>& x) const override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::vector<Param<T>*> params() override { return {&weight_, &bias_}; }
  std::vector<const Param<T>*> params() const override { return {&weight_, &bias_}; }
  void initialize(Rng& rng, bool relu_follows) override;

 private:
  void check_input(const Tensor<T>& x) const;

  int in_features_;
  int out_features_;
  Param<T> weight_;  // (O, F)
  Param<T> bias_;    // (O)
  std::optional<Tensor<T>> cached_input_;
};

template <typename T>
class Relu : public Layer<T> {
 public:
  std::string name() const override { return "ReLU"; }
  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng* rng) override;
  Tensor<T> infer(const Tensor<T>& x) const override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;

 private:
  std::optional<Tensor<T>> cached_input_;
};

/// Inverted dropout: survivors are scaled by 1/(1 - rate) in Train mode,
/// identity in Eval mode.
template <typename T>
class Dropout : public Layer<T> {
 public:
  explicit Dropout(double rate);

  std::string name() const override { return "Dropout"; }
  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng* rng) override;
  Tensor<T> infer(const Tensor<T>& x) const override { return x; }
  Tensor<T> backward(const Tensor<T>& grad_out) override;

 private:
  double rate_;
  std::optional<Tensor<T>> mask_;  // empty tensor after an Eval forward
  bool has_forward_ = false;
};

template <typename T>
class Flatten : public Layer<T> {
 public:
  std::string name() const override { return "Flatten"; }
  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng* rng) override;
  Tensor<T> infer(const Tensor<T>& x) const override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;

 private:
  std::optional<Shape> cached_shape_;
};

/// Row-wise softmax over (B, K), max-subtracted.
template <typename T>
class Softmax : public Layer<T> {
 public:
  std::string name() const override { return "Softmax"; }
  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng* rng) override;
  Tensor<T> infer(const Tensor<T>& x) const override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;

 private:
  std::optional<Tensor<T>> cached_output_;
};

/// Builds a layer for a per-example input shape.
template <typename T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& spec, const Shape& input);

}  // namespace cbamc::nn
