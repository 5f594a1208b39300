#include "cbamc/nn/fit.hpp"

#include <cmath>
#include <numeric>
#include <string>

namespace cbamc::nn {

int best_epoch_index(std::span<const double> val_losses) {
  int best = -1;
  for (std::size_t i = 0; i < val_losses.size(); ++i) {
    if (best < 0 || val_losses[i] < val_losses[best]) best = static_cast<int>(i);
  }
  return best;
}

template <typename T>
FitHistory fit(FitProblem<T>& problem, const FitOptions& options) {
  if (problem.train_size == 0) throw Error(ErrorCode::EmptyDataset, "no training examples");
  if (options.epochs < 1) throw Error(ErrorCode::InvalidParameter, "epochs must be >= 1");
  if (options.batch_size < 1) throw Error(ErrorCode::InvalidParameter, "batch size must be >= 1");

  Adam<T> optimizer(options.adam, problem.params);
  Rng rng(options.seed);
  std::vector<std::size_t> order(problem.train_size);
  std::iota(order.begin(), order.end(), std::size_t{0});

  auto snapshot = [&problem] {
    std::vector<std::vector<T>> values;
    for (const auto* p : problem.params) values.emplace_back(p->value.values().begin(), p->value.values().end());
    return values;
  };

  FitHistory history;
  std::vector<std::vector<T>> best_params;
  for (int epoch = 1; epoch <= options.epochs; ++epoch) {
    // Fisher-Yates with the explicit sampler keeps the order portable.
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }
    double weighted = 0.0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(options.batch_size));
      for (auto* p : problem.params) p->grad.fill(T(0));
      const double loss = problem.train_batch(std::span(order).subspan(start, end - start), rng);
      if (!std::isfinite(loss)) {
        throw Error(ErrorCode::Divergence,
                    "non-finite training loss at epoch " + std::to_string(epoch) + ", batch starting " + std::to_string(start));
      }
      optimizer.step();
      weighted += loss * static_cast<double>(end - start);
    }
    const double val = problem.validation_loss();
    if (!std::isfinite(val)) {
      throw Error(ErrorCode::Divergence, "non-finite validation loss at epoch " + std::to_string(epoch));
    }
    history.epochs.push_back({epoch, weighted / static_cast<double>(order.size()), val});
    if (epoch == 1 || val < history.best_val_loss) {
      history.best_epoch = epoch;
      history.best_val_loss = val;
      best_params = snapshot();
    }
  }

  for (std::size_t k = 0; k < problem.params.size(); ++k) {
    auto dst = problem.params[k]->value.values();
    std::copy(best_params[k].begin(), best_params[k].end(), dst.begin());
  }
  return history;
}

template FitHistory fit(FitProblem<float>&, const FitOptions&);
template FitHistory fit(FitProblem<double>&, const FitOptions&);

}  // namespace cbamc::nn
