#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include <json.hpp>

#include "cbamc/nn/layers.hpp"

namespace cbamc::nn {

struct NetworkSpec {
  Shape input_shape;  // per example, e.g. (1, 2, 128) or (5)
  std::vector<LayerSpec> layers;

  bool operator==(const NetworkSpec&) const = default;
};

/// Per-example output shape; throws ShapeMismatch if the chain is broken.
Shape output_shape(const NetworkSpec& spec);
std::size_t parameter_count(const NetworkSpec& spec);

nlohmann::json to_json(const NetworkSpec& spec);
NetworkSpec network_spec_from_json(const nlohmann::json& j);

/// Sequential stack of layers built from a NetworkSpec.
template <typename T>
class Network {
 public:
  /// Empty network with no layers; placeholder until assigned.
  Network() = default;
  Network(NetworkSpec spec, std::uint64_t init_seed);
  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  const NetworkSpec& spec() const { return spec_; }
  std::size_t layer_count() const { return layers_.size(); }
  Layer<T>& layer(std::size_t i) { return *layers_.at(i); }

  /// Input is (B, input_shape...).
  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng* rng);
  Tensor<T> infer(const Tensor<T>& x) const;
  Tensor<T> backward(const Tensor<T>& grad_out);

  std::vector<Param<T>*> params();
  void zero_grad();
  std::size_t parameter_count() const;

  std::vector<T> flat_parameters() const;
  void set_flat_parameters(std::span<const T> values);
  std::vector<T> flat_gradients() const;

  /// Same architecture and parameters in another precision.
  template <typename U>
  Network<U> cast() const {
    Network<U> out(spec_, 0);
    const auto mine = flat_parameters();
    std::vector<U> converted(mine.begin(), mine.end());
    out.set_flat_parameters(converted);
    return out;
  }

 private:
  void check_input(const Tensor<T>& x) const;

  NetworkSpec spec_;
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

}  // namespace cbamc::nn
