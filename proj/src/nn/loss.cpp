#include "cbamc/nn/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cbamc::nn {

template <typename T>
LossResult<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.shape() != target.shape()) {
    throw Error(ErrorCode::ShapeMismatch, "mse: " + shape_string(pred.shape()) + " vs " + shape_string(target.shape()));
  }
  LossResult<T> out{0.0, Tensor<T>(pred.shape())};
  const double n = static_cast<double>(pred.size());
  if (pred.size() == 0) return out;
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    acc += d * d;
    out.grad[i] = static_cast<T>(2.0 * d / n);
  }
  out.value = acc / n;
  return out;
}

template <typename T>
LossResult<T> cross_entropy_loss(const Tensor<T>& logits, std::span<const int> labels) {
  if (logits.rank() != 2) throw Error(ErrorCode::ShapeMismatch, "cross entropy expects (B, K) logits");
  const int batch = logits.dim(0);
  const int k = logits.dim(1);
  if (static_cast<std::size_t>(batch) != labels.size()) {
    throw Error(ErrorCode::ShapeMismatch, "cross entropy: label count does not match batch");
  }
  LossResult<T> out{0.0, Tensor<T>(logits.shape())};
  double total = 0.0;
  for (int b = 0; b < batch; ++b) {
    const int label = labels[b];
    if (label < 0 || label >= k) {
      throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(label) + " with " + std::to_string(k) + " classes");
    }
    const T* row = logits.data() + static_cast<std::size_t>(b) * k;
    const double peak = static_cast<double>(*std::max_element(row, row + k));
    double sum = 0.0;
    for (int i = 0; i < k; ++i) sum += std::exp(static_cast<double>(row[i]) - peak);
    const double log_sum = peak + std::log(sum);
    total += log_sum - static_cast<double>(row[label]);
    T* g = out.grad.data() + static_cast<std::size_t>(b) * k;
    for (int i = 0; i < k; ++i) {
      const double p = std::exp(static_cast<double>(row[i]) - log_sum);
      g[i] = static_cast<T>((p - (i == label ? 1.0 : 0.0)) / batch);
    }
  }
  out.value = batch > 0 ? total / batch : 0.0;
  return out;
}

template <typename T>
LossResult<T> cross_entropy_loss(const Tensor<T>& logits, int label) {
  Tensor<T> row = logits;
  if (logits.rank() == 1) row.reshape({1, logits.dim(0)});
  const int labels[] = {label};
  auto out = cross_entropy_loss(row, std::span<const int>(labels));
  out.grad.reshape(logits.shape());
  return out;
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& logits) {
  if (logits.rank() != 2) throw Error(ErrorCode::ShapeMismatch, "softmax expects (B, K)");
  Tensor<T> out = logits;
  const int batch = logits.dim(0);
  const int k = logits.dim(1);
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

template LossResult<float> mse_loss(const Tensor<float>&, const Tensor<float>&);
template LossResult<double> mse_loss(const Tensor<double>&, const Tensor<double>&);
template LossResult<float> cross_entropy_loss(const Tensor<float>&, std::span<const int>);
template LossResult<double> cross_entropy_loss(const Tensor<double>&, std::span<const int>);
template LossResult<float> cross_entropy_loss(const Tensor<float>&, int);
template LossResult<double> cross_entropy_loss(const Tensor<double>&, int);
template Tensor<float> softmax_rows(const Tensor<float>&);
template Tensor<double> softmax_rows(const Tensor<double>&);

}  // namespace cbamc::nn
