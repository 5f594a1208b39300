#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cbamc/nn/network.hpp"

namespace cbamc::nn {

inline constexpr double kGradcheckStep = 1e-5;
inline constexpr double kGradcheckTolerance = 1e-4;

struct GradcheckReport {
  std::string subject;
  std::size_t entries_checked = 0;
  double max_rel_error = 0.0;
  std::string worst_entry;
  bool passed = false;
};

/// |a - n| / max(|a|, |n|, 1e-4). The floor turns the check absolute
/// (1e-8) for entries whose true gradient is near zero, where central
/// differences are dominated by rounding.
double gradcheck_relative_error(double analytic, double numeric);

/// Compares a layer's analytic gradients (input and parameters) with
/// central finite differences of the scalar head L = sum(r * layer(x)) for a
/// random projection r. Train mode; the dropout rng is re-seeded for each
/// evaluation so the mask is fixed. max_entries = 0 checks every entry.
GradcheckReport gradcheck_layer(Layer<double>& layer, const Shape& batch_input_shape, std::uint64_t seed,
                                std::size_t max_entries = 0);

GradcheckReport gradcheck_network(Network<double>& net, int batch, std::uint64_t seed, std::size_t max_entries = 0);

GradcheckReport gradcheck_mse(const Shape& shape, std::uint64_t seed);
GradcheckReport gradcheck_cross_entropy(int batch, int classes, std::uint64_t seed);

/// The layer and loss checks run by `verify` and the acceptance suite:
/// both Conv2d kernel shapes, Linear, ReLU, Dropout (train mode), Flatten,
/// Softmax, MSE and cross-entropy, `instances` random draws each. One
/// report per subject, holding the worst error across instances.
std::vector<GradcheckReport> standard_gradcheck_suite(int instances, std::uint64_t seed);

}  // namespace cbamc::nn
