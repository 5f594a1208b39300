#pragma once

#include <span>

#include "cbamc/nn/tensor.hpp"

namespace cbamc::nn {

template <typename T>
struct LossResult {
  double value = 0.0;
  Tensor<T> grad;  // d value / d input, same shape as the input
};

/// Mean of squared differences over all elements; gradient 2(pred - target)/n.
template <typename T>
LossResult<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target);

/// Softmax cross-entropy over logits (B, K), averaged over the batch.
/// Uses the log-sum-exp form; gradient (softmax - onehot)/B.
template <typename T>
LossResult<T> cross_entropy_loss(const Tensor<T>& logits, std::span<const int> labels);

/// Single example: logits of shape (K) or (1, K).
template <typename T>
LossResult<T> cross_entropy_loss(const Tensor<T>& logits, int label);

/// Row-wise softmax of (B, K) logits.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& logits);

}  // namespace cbamc::nn
