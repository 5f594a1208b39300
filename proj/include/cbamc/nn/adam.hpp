#pragma once

#include <cstdint>
#include <vector>

#include "cbamc/nn/tensor.hpp"

namespace cbamc::nn {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam over a fixed parameter list.
template <typename T>
class Adam {
 public:
  Adam(AdamConfig config, std::vector<Param<T>*> params);

  /// Applies one update from the accumulated gradients. Does not clear them.
  void step();

  std::int64_t step_count() const { return step_count_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  std::vector<Param<T>*> params_;
  std::vector<std::vector<T>> first_moment_;
  std::vector<std::vector<T>> second_moment_;
  std::int64_t step_count_ = 0;
};

}  // namespace cbamc::nn
