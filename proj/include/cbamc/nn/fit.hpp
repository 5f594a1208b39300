#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "cbamc/nn/adam.hpp"
#include "cbamc/rng.hpp"

namespace cbamc::nn {

struct FitOptions {
  int epochs = 1;
  int batch_size = 256;
  std::uint64_t seed = 0;  // shuffling and dropout masks
  AdamConfig adam;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct FitHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_val_loss = 0.0;
};

/// Everything fit() needs to train one objective. train_batch runs a
/// Train-mode forward/backward over the given example indices, accumulating
/// gradients into `params` (fit zeroes them first), and returns the mean
/// batch loss. validation_loss runs in Eval mode.
template <typename T>
struct FitProblem {
  std::size_t train_size = 0;
  std::vector<Param<T>*> params;
  std::function<double(std::span<const std::size_t> batch, Rng& rng)> train_batch;
  std::function<double()> validation_loss;
};

/// Epoch loop with seeded shuffling and best-validation checkpointing.
/// On return the parameters hold the snapshot from the epoch with the
/// lowest validation loss (earliest on ties). Throws EmptyDataset, or
/// Divergence on a non-finite loss.
template <typename T>
FitHistory fit(FitProblem<T>& problem, const FitOptions& options);

/// Index of the earliest minimum; the checkpoint rule fit() applies.
int best_epoch_index(std::span<const double> val_losses);

}  // namespace cbamc::nn
