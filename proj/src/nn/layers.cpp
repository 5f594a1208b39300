#include "cbamc/nn/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

namespace cbamc::nn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using VecMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <typename T>
using ConstVecMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;

[[noreturn]] void shape_error(const std::string& what) { throw Error(ErrorCode::ShapeMismatch, what); }
[[noreturn]] void no_forward(const std::string& layer) {
  throw Error(ErrorCode::NoCachedForward, layer + " backward called without a cached forward pass");
}

template <typename T>
void uniform_fill(Tensor<T>& t, Rng& rng, double bound) {
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-bound, bound));
}

Shape conv_output(const Conv2dSpec& spec, const Shape& in) {
  if (in.size() != 3) shape_error("Conv2d expects (C, H, W), got " + shape_string(in));
  const int h = in[1] + spec.padding.top + spec.padding.bottom - spec.kernel_h + 1;
  const int w = in[2] + spec.padding.left + spec.padding.right - spec.kernel_w + 1;
  if (h <= 0 || w <= 0) shape_error("Conv2d kernel larger than padded input " + shape_string(in));
  return {spec.out_channels, h, w};
}

}  // namespace

std::string layer_name(const LayerSpec& spec) {
  return std::visit(
      [](const auto& s) -> std::string {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, Conv2dSpec>) return "Conv2d";
        if constexpr (std::is_same_v<S, ReluSpec>) return "ReLU";
        if constexpr (std::is_same_v<S, DropoutSpec>) return "Dropout";
        if constexpr (std::is_same_v<S, FlattenSpec>) return "Flatten";
        if constexpr (std::is_same_v<S, LinearSpec>) return "Linear";
        if constexpr (std::is_same_v<S, SoftmaxSpec>) return "Softmax";
      },
      spec);
}

Shape layer_output_shape(const LayerSpec& spec, const Shape& in) {
  return std::visit(
      [&](const auto& s) -> Shape {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, Conv2dSpec>) {
          return conv_output(s, in);
        } else if constexpr (std::is_same_v<S, LinearSpec>) {
          if (in.size() != 1) shape_error("Linear expects a flat input, got " + shape_string(in));
          return {s.out_features};
        } else if constexpr (std::is_same_v<S, FlattenSpec>) {
          return {static_cast<int>(shape_size(in))};
        } else if constexpr (std::is_same_v<S, SoftmaxSpec>) {
          if (in.size() != 1) shape_error("Softmax expects a flat input, got " + shape_string(in));
          return in;
        } else {
          return in;
        }
      },
      spec);
}

std::size_t layer_parameter_count(const LayerSpec& spec, const Shape& in) {
  if (const auto* conv = std::get_if<Conv2dSpec>(&spec)) {
    conv_output(*conv, in);
    return static_cast<std::size_t>(conv->out_channels) * in[0] * conv->kernel_h * conv->kernel_w +
           conv->out_channels;
  }
  if (const auto* linear = std::get_if<LinearSpec>(&spec)) {
    if (in.size() != 1) shape_error("Linear expects a flat input, got " + shape_string(in));
    return static_cast<std::size_t>(linear->out_features) * in[0] + linear->out_features;
  }
  return 0;
}

// ---------------------------------------------------------------- Conv2d

template <typename T>
Conv2d<T>::Conv2d(int in_channels, const Conv2dSpec& spec) : in_channels_(in_channels), spec_(spec) {
  if (in_channels < 1 || spec.out_channels < 1 || spec.kernel_h < 1 || spec.kernel_w < 1) {
    throw Error(ErrorCode::InvalidParameter, "Conv2d dimensions must be positive");
  }
  weight_ = {"weight", Tensor<T>({spec.out_channels, in_channels, spec.kernel_h, spec.kernel_w}),
             Tensor<T>({spec.out_channels, in_channels, spec.kernel_h, spec.kernel_w})};
  bias_ = {"bias", Tensor<T>({spec.out_channels}), Tensor<T>({spec.out_channels})};
}

template <typename T>
void Conv2d<T>::initialize(Rng& rng, bool relu_follows) {
  const double fan_in = static_cast<double>(in_channels_) * spec_.kernel_h * spec_.kernel_w;
  uniform_fill(weight_.value, rng, std::sqrt((relu_follows ? 6.0 : 3.0) / fan_in));
  bias_.value.fill(T(0));
}

template <typename T>
void Conv2d<T>::check_input(const Tensor<T>& x) const {
  if (x.rank() != 4 || x.dim(1) != in_channels_) {
    shape_error("Conv2d expects (B, " + std::to_string(in_channels_) + ", H, W), got " + shape_string(x.shape()));
  }
}

template <typename T>
Shape Conv2d<T>::output_shape(const Tensor<T>& x) const {
  const Shape per = conv_output(spec_, {x.dim(1), x.dim(2), x.dim(3)});
  return {x.dim(0), per[0], per[1], per[2]};
}

template <typename T>
void Conv2d<T>::im2col(const T* image, int height, int width, T* cols) const {
  const Shape out = conv_output(spec_, {in_channels_, height, width});
  const int oh = out[1];
  const int ow = out[2];
  std::size_t row = 0;
  for (int c = 0; c < in_channels_; ++c) {
    for (int i = 0; i < spec_.kernel_h; ++i) {
      for (int j = 0; j < spec_.kernel_w; ++j, ++row) {
        T* dst = cols + row * static_cast<std::size_t>(oh * ow);
        for (int y = 0; y < oh; ++y) {
          const int src_y = y + i - spec_.padding.top;
          T* dst_row = dst + static_cast<std::size_t>(y) * ow;
          if (src_y < 0 || src_y >= height) {
            std::fill(dst_row, dst_row + ow, T(0));
            continue;
          }
          const T* src_row = image + (static_cast<std::size_t>(c) * height + src_y) * width;
          for (int x = 0; x < ow; ++x) {
            const int src_x = x + j - spec_.padding.left;
            dst_row[x] = (src_x < 0 || src_x >= width) ? T(0) : src_row[src_x];
          }
        }
      }
    }
  }
}

template <typename T>
void Conv2d<T>::col2im(const T* cols, int height, int width, T* image) const {
  const Shape out = conv_output(spec_, {in_channels_, height, width});
  const int oh = out[1];
  const int ow = out[2];
  std::size_t row = 0;
  for (int c = 0; c < in_channels_; ++c) {
    for (int i = 0; i < spec_.kernel_h; ++i) {
      for (int j = 0; j < spec_.kernel_w; ++j, ++row) {
        const T* src = cols + row * static_cast<std::size_t>(oh * ow);
        for (int y = 0; y < oh; ++y) {
          const int dst_y = y + i - spec_.padding.top;
          if (dst_y < 0 || dst_y >= height) continue;
          T* dst_row = image + (static_cast<std::size_t>(c) * height + dst_y) * width;
          const T* src_row = src + static_cast<std::size_t>(y) * ow;
          for (int x = 0; x < ow; ++x) {
            const int dst_x = x + j - spec_.padding.left;
            if (dst_x >= 0 && dst_x < width) dst_row[dst_x] += src_row[x];
          }
        }
      }
    }
  }
}

template <typename T>
Tensor<T> Conv2d<T>::infer(const Tensor<T>& x) const {
  check_input(x);
  const Shape out_shape = output_shape(x);
  Tensor<T> out(out_shape);
  const int batch = x.dim(0);
  const int height = x.dim(2);
  const int width = x.dim(3);
  const int patch = in_channels_ * spec_.kernel_h * spec_.kernel_w;
  const int positions = out_shape[2] * out_shape[3];
  const std::size_t in_stride = static_cast<std::size_t>(in_channels_) * height * width;
  const std::size_t out_stride = static_cast<std::size_t>(spec_.out_channels) * positions;

  RowMat<T> cols(patch, positions);
  ConstMatMap<T> weight(weight_.value.data(), spec_.out_channels, patch);
  ConstVecMap<T> bias(bias_.value.data(), spec_.out_channels);
  for (int b = 0; b < batch; ++b) {
    im2col(x.data() + b * in_stride, height, width, cols.data());
    MatMap<T> y(out.data() + b * out_stride, spec_.out_channels, positions);
    y.noalias() = weight * cols;
    y.colwise() += bias;
  }
  return out;
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x, Mode, Rng*) {
  Tensor<T> out = infer(x);
  cached_input_ = x;
  return out;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& grad_out) {
  if (!cached_input_) no_forward(name());
  const Tensor<T>& x = *cached_input_;
  const Shape out_shape = output_shape(x);
  if (grad_out.shape() != out_shape) {
    shape_error("Conv2d gradient " + shape_string(grad_out.shape()) + " vs output " + shape_string(out_shape));
  }
  const int batch = x.dim(0);
  const int height = x.dim(2);
  const int width = x.dim(3);
  const int patch = in_channels_ * spec_.kernel_h * spec_.kernel_w;
  const int positions = out_shape[2] * out_shape[3];
  const std::size_t in_stride = static_cast<std::size_t>(in_channels_) * height * width;
  const std::size_t out_stride = static_cast<std::size_t>(spec_.out_channels) * positions;

  Tensor<T> grad_in(x.shape());
  RowMat<T> cols(patch, positions);
  RowMat<T> grad_cols(patch, positions);
  ConstMatMap<T> weight(weight_.value.data(), spec_.out_channels, patch);
  MatMap<T> grad_weight(weight_.grad.data(), spec_.out_channels, patch);
  VecMap<T> grad_bias(bias_.grad.data(), spec_.out_channels);
  for (int b = 0; b < batch; ++b) {
    ConstMatMap<T> dy(grad_out.data() + b * out_stride, spec_.out_channels, positions);
    im2col(x.data() + b * in_stride, height, width, cols.data());
    grad_weight.noalias() += dy * cols.transpose();
    grad_bias += dy.rowwise().sum();
    grad_cols.noalias() = weight.transpose() * dy;
    col2im(grad_cols.data(), height, width, grad_in.data() + b * in_stride);
  }
  return grad_in;
}

// ---------------------------------------------------------------- Linear

template <typename T>
Linear<T>::Linear(int in_features, const LinearSpec& spec) : in_features_(in_features), out_features_(spec.out_features) {
  if (in_features < 1 || spec.out_features < 1) {
    throw Error(ErrorCode::InvalidParameter, "Linear dimensions must be positive");
  }
  weight_ = {"weight", Tensor<T>({out_features_, in_features_}), Tensor<T>({out_features_, in_features_})};
  bias_ = {"bias", Tensor<T>({out_features_}), Tensor<T>({out_features_})};
}

template <typename T>
void Linear<T>::initialize(Rng& rng, bool relu_follows) {
  uniform_fill(weight_.value, rng, std::sqrt((relu_follows ? 6.0 : 3.0) / in_features_));
  bias_.value.fill(T(0));
}

template <typename T>
void Linear<T>::check_input(const Tensor<T>& x) const {
  if (x.rank() != 2 || x.dim(1) != in_features_) {
    shape_error("Linear expects (B, " + std::to_string(in_features_) + "), got " + shape_string(x.shape()));
  }
}

template <typename T>
Tensor<T> Linear<T>::infer(const Tensor<T>& x) const {
  check_input(x);
  const int batch = x.dim(0);
  Tensor<T> out({batch, out_features_});
  ConstMatMap<T> in(x.data(), batch, in_features_);
  ConstMatMap<T> weight(weight_.value.data(), out_features_, in_features_);
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bias(bias_.value.data(), out_features_);
  MatMap<T> y(out.data(), batch, out_features_);
  y.noalias() = in * weight.transpose();
  y.rowwise() += bias;
  return out;
}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x, Mode, Rng*) {
  Tensor<T> out = infer(x);
  cached_input_ = x;
  return out;
}

template <typename T>
Tensor<T> Linear<T>::backward(const Tensor<T>& grad_out) {
  if (!cached_input_) no_forward(name());
  const Tensor<T>& x = *cached_input_;
  const int batch = x.dim(0);
  if (grad_out.shape() != Shape{batch, out_features_}) {
    shape_error("Linear gradient shape " + shape_string(grad_out.shape()));
  }
  ConstMatMap<T> in(x.data(), batch, in_features_);
  ConstMatMap<T> dy(grad_out.data(), batch, out_features_);
  ConstMatMap<T> weight(weight_.value.data(), out_features_, in_features_);
  MatMap<T> grad_weight(weight_.grad.data(), out_features_, in_features_);
  Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> grad_bias(bias_.grad.data(), out_features_);
  grad_weight.noalias() += dy.transpose() * in;
  grad_bias += dy.colwise().sum();

  Tensor<T> grad_in(x.shape());
  MatMap<T> dx(grad_in.data(), batch, in_features_);
  dx.noalias() = dy * weight;
  return grad_in;
}

// ---------------------------------------------------------------- ReLU

template <typename T>
Tensor<T> Relu<T>::infer(const Tensor<T>& x) const {
  Tensor<T> out = x;
  for (auto& v : out.values()) v = v > T(0) ? v : T(0);
  return out;
}

template <typename T>
Tensor<T> Relu<T>::forward(const Tensor<T>& x, Mode, Rng*) {
  cached_input_ = x;
  return infer(x);
}

template <typename T>
Tensor<T> Relu<T>::backward(const Tensor<T>& grad_out) {
  if (!cached_input_) no_forward(name());
  if (grad_out.shape() != cached_input_->shape()) shape_error("ReLU gradient shape mismatch");
  Tensor<T> grad_in = grad_out;
  const auto x = cached_input_->values();
  auto g = grad_in.values();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(x[i] > T(0))) g[i] = T(0);
  }
  return grad_in;
}

// ---------------------------------------------------------------- Dropout

template <typename T>
Dropout<T>::Dropout(double rate) : rate_(rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw Error(ErrorCode::InvalidParameter, "dropout rate must be in [0, 1)");
}

template <typename T>
Tensor<T> Dropout<T>::forward(const Tensor<T>& x, Mode mode, Rng* rng) {
  has_forward_ = true;
  if (mode == Mode::Eval) {
    mask_.reset();
    return x;
  }
  if (rng == nullptr) throw Error(ErrorCode::InvalidParameter, "Dropout in Train mode needs an rng");
  Tensor<T> mask(x.shape());
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate_));
  for (auto& m : mask.values()) m = rng->uniform() >= rate_ ? keep_scale : T(0);
  Tensor<T> out = x;
  auto o = out.values();
  const auto mv = mask.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= mv[i];
  mask_ = std::move(mask);
  return out;
}

template <typename T>
Tensor<T> Dropout<T>::backward(const Tensor<T>& grad_out) {
  if (!has_forward_) no_forward(name());
  if (!mask_) return grad_out;
  if (grad_out.shape() != mask_->shape()) shape_error("Dropout gradient shape mismatch");
  Tensor<T> grad_in = grad_out;
  auto g = grad_in.values();
  const auto mv = mask_->values();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= mv[i];
  return grad_in;
}

// ---------------------------------------------------------------- Flatten

template <typename T>
Tensor<T> Flatten<T>::infer(const Tensor<T>& x) const {
  if (x.rank() < 1) shape_error("Flatten needs a batch dimension");
  Tensor<T> out = x;
  out.reshape({x.dim(0), static_cast<int>(x.size() / std::max(1, x.dim(0)))});
  return out;
}

template <typename T>
Tensor<T> Flatten<T>::forward(const Tensor<T>& x, Mode, Rng*) {
  cached_shape_ = x.shape();
  return infer(x);
}

template <typename T>
Tensor<T> Flatten<T>::backward(const Tensor<T>& grad_out) {
  if (!cached_shape_) no_forward(name());
  Tensor<T> grad_in = grad_out;
  grad_in.reshape(*cached_shape_);
  return grad_in;
}

// ---------------------------------------------------------------- Softmax

template <typename T>
Tensor<T> Softmax<T>::infer(const Tensor<T>& x) const {
  if (x.rank() != 2) shape_error("Softmax expects (B, K), got " + shape_string(x.shape()));
  Tensor<T> out = x;
  const int batch = x.dim(0);
  const int k = x.dim(1);
  for (int b = 0; b < batch; ++b) {
    T* row = out.data() + static_cast<std::size_t>(b) * k;
    const T peak = *std::max_element(row, row + k);
    T sum = T(0);
    for (int i = 0; i < k; ++i) {
      row[i] = std::exp(row[i] - peak);
      sum += row[i];
    }
    for (int i = 0; i < k; ++i) row[i] /= sum;
  }
  return out;
}

template <typename T>
Tensor<T> Softmax<T>::forward(const Tensor<T>& x, Mode, Rng*) {
  Tensor<T> out = infer(x);
  cached_output_ = out;
  return out;
}

template <typename T>
Tensor<T> Softmax<T>::backward(const Tensor<T>& grad_out) {
  if (!cached_output_) no_forward(name());
  const Tensor<T>& y = *cached_output_;
  if (grad_out.shape() != y.shape()) shape_error("Softmax gradient shape mismatch");
  Tensor<T> grad_in(y.shape());
  const int batch = y.dim(0);
  const int k = y.dim(1);
  for (int b = 0; b < batch; ++b) {
    const std::size_t off = static_cast<std::size_t>(b) * k;
    T dot = T(0);
    for (int i = 0; i < k; ++i) dot += grad_out[off + i] * y[off + i];
    for (int i = 0; i < k; ++i) grad_in[off + i] = y[off + i] * (grad_out[off + i] - dot);
  }
  return grad_in;
}

// ---------------------------------------------------------------- factory

template <typename T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& spec, const Shape& input) {
  layer_output_shape(spec, input);
  return std::visit(
      [&](const auto& s) -> std::unique_ptr<Layer<T>> {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, Conv2dSpec>) return std::make_unique<Conv2d<T>>(input[0], s);
        if constexpr (std::is_same_v<S, ReluSpec>) return std::make_unique<Relu<T>>();
        if constexpr (std::is_same_v<S, DropoutSpec>) return std::make_unique<Dropout<T>>(s.rate);
        if constexpr (std::is_same_v<S, FlattenSpec>) return std::make_unique<Flatten<T>>();
        if constexpr (std::is_same_v<S, LinearSpec>) return std::make_unique<Linear<T>>(input[0], s);
        if constexpr (std::is_same_v<S, SoftmaxSpec>) return std::make_unique<Softmax<T>>();
      },
      spec);
}

#define CBAMC_INSTANTIATE_LAYERS(T)                                                   \
  template class Conv2d<T>;                                                           \
  template class Linear<T>;                                                           \
  template class Relu<T>;                                                             \
  template class Dropout<T>;                                                          \
  template class Flatten<T>;                                                          \
  template class Softmax<T>;                                                          \
  template std::unique_ptr<Layer<T>> make_layer<T>(const LayerSpec&, const Shape&);

CBAMC_INSTANTIATE_LAYERS(float)
CBAMC_INSTANTIATE_LAYERS(double)

#undef CBAMC_INSTANTIATE_LAYERS

}  // namespace cbamc::nn
