#include "cbamc/nn/network.hpp"

#include <string>

namespace cbamc::nn {

Shape output_shape(const NetworkSpec& spec) {
  Shape shape = spec.input_shape;
  for (const auto& layer : spec.layers) shape = layer_output_shape(layer, shape);
  return shape;
}

std::size_t parameter_count(const NetworkSpec& spec) {
  Shape shape = spec.input_shape;
  std::size_t total = 0;
  for (const auto& layer : spec.layers) {
    total += layer_parameter_count(layer, shape);
    shape = layer_output_shape(layer, shape);
  }
  return total;
}

nlohmann::json to_json(const NetworkSpec& spec) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : spec.layers) {
    nlohmann::json j;
    j["type"] = layer_name(layer);
    if (const auto* c = std::get_if<Conv2dSpec>(&layer)) {
      j["out_channels"] = c->out_channels;
      j["kernel"] = {c->kernel_h, c->kernel_w};
      j["padding"] = {c->padding.top, c->padding.bottom, c->padding.left, c->padding.right};
    } else if (const auto* d = std::get_if<DropoutSpec>(&layer)) {
      j["rate"] = d->rate;
    } else if (const auto* l = std::get_if<LinearSpec>(&layer)) {
      j["out_features"] = l->out_features;
    }
    layers.push_back(std::move(j));
  }
  return {{"input_shape", spec.input_shape}, {"layers", layers}};
}

NetworkSpec network_spec_from_json(const nlohmann::json& j) {
  try {
    NetworkSpec spec;
    spec.input_shape = j.at("input_shape").get<Shape>();
    for (const auto& l : j.at("layers")) {
      const auto type = l.at("type").get<std::string>();
      if (type == "Conv2d") {
        const auto k = l.at("kernel").get<std::vector<int>>();
        const auto p = l.at("padding").get<std::vector<int>>();
        if (k.size() != 2 || p.size() != 4) throw Error(ErrorCode::CorruptFile, "bad Conv2d descriptor");
        spec.layers.emplace_back(Conv2dSpec{l.at("out_channels").get<int>(), k[0], k[1], {p[0], p[1], p[2], p[3]}});
      } else if (type == "ReLU") {
        spec.layers.emplace_back(ReluSpec{});
      } else if (type == "Dropout") {
        spec.layers.emplace_back(DropoutSpec{l.at("rate").get<double>()});
      } else if (type == "Flatten") {
        spec.layers.emplace_back(FlattenSpec{});
      } else if (type == "Linear") {
        spec.layers.emplace_back(LinearSpec{l.at("out_features").get<int>()});
      } else if (type == "Softmax") {
        spec.layers.emplace_back(SoftmaxSpec{});
      } else {
        throw Error(ErrorCode::CorruptFile, "unknown layer type " + type);
      }
    }
    output_shape(spec);
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptFile, std::string("network descriptor: ") + e.what());
  }
}

template <typename T>
Network<T>::Network(NetworkSpec spec, std::uint64_t init_seed) : spec_(std::move(spec)) {
  Shape shape = spec_.input_shape;
  for (const auto& layer : spec_.layers) {
    layers_.push_back(make_layer<T>(layer, shape));
    shape = layer_output_shape(layer, shape);
  }
  Rng rng(init_seed);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const bool relu_follows = i + 1 < spec_.layers.size() && std::holds_alternative<ReluSpec>(spec_.layers[i + 1]);
    layers_[i]->initialize(rng, relu_follows);
  }
}

template <typename T>
Network<T>::Network(const Network& other) : Network(other.spec_, 0) {
  set_flat_parameters(other.flat_parameters());
}

template <typename T>
Network<T>& Network<T>::operator=(const Network& other) {
  if (this != &other) {
    Network copy(other);
    *this = std::move(copy);
  }
  return *this;
}

template <typename T>
void Network<T>::check_input(const Tensor<T>& x) const {
  Shape expected = {x.rank() > 0 ? x.dim(0) : 0};
  expected.insert(expected.end(), spec_.input_shape.begin(), spec_.input_shape.end());
  if (x.shape() != expected) {
    throw Error(ErrorCode::ShapeMismatch,
                "network input " + shape_string(x.shape()) + ", expected (B," + shape_string(spec_.input_shape) + ")");
  }
}

template <typename T>
Tensor<T> Network<T>::forward(const Tensor<T>& x, Mode mode, Rng* rng) {
  check_input(x);
  Tensor<T> h = x;
  for (auto& layer : layers_) h = layer->forward(h, mode, rng);
  return h;
}

template <typename T>
Tensor<T> Network<T>::infer(const Tensor<T>& x) const {
  check_input(x);
  Tensor<T> h = x;
  for (const auto& layer : layers_) h = layer->infer(h);
  return h;
}

template <typename T>
Tensor<T> Network<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

template <typename T>
std::vector<Param<T>*> Network<T>::params() {
  std::vector<Param<T>*> out;
  for (auto& layer : layers_) {
    for (auto* p : layer->params()) out.push_back(p);
  }
  return out;
}

template <typename T>
void Network<T>::zero_grad() {
  for (auto* p : params()) p->grad.fill(T(0));
}

template <typename T>
std::size_t Network<T>::parameter_count() const {
  std::size_t total = 0;
  for (const auto& layer : layers_) {
    for (const auto* p : std::as_const(*layer).params()) total += p->value.size();
  }
  return total;
}

template <typename T>
std::vector<T> Network<T>::flat_parameters() const {
  std::vector<T> out;
  out.reserve(parameter_count());
  for (const auto& layer : layers_) {
    for (const auto* p : std::as_const(*layer).params()) {
      out.insert(out.end(), p->value.values().begin(), p->value.values().end());
    }
  }
  return out;
}

template <typename T>
std::vector<T> Network<T>::flat_gradients() const {
  std::vector<T> out;
  out.reserve(parameter_count());
  for (const auto& layer : layers_) {
    for (const auto* p : std::as_const(*layer).params()) {
      out.insert(out.end(), p->grad.values().begin(), p->grad.values().end());
    }
  }
  return out;
}

template <typename T>
void Network<T>::set_flat_parameters(std::span<const T> values) {
  if (values.size() != parameter_count()) {
    throw Error(ErrorCode::ShapeMismatch, "expected " + std::to_string(parameter_count()) + " parameters, got " +
                                              std::to_string(values.size()));
  }
  std::size_t offset = 0;
  for (auto* p : params()) {
    auto dst = p->value.values();
    std::copy(values.begin() + offset, values.begin() + offset + dst.size(), dst.begin());
    offset += dst.size();
  }
}

template class Network<float>;
template class Network<double>;

}  // namespace cbamc::nn
