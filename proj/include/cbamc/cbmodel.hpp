#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cbamc/concepts.hpp"
#include "cbamc/datagen.hpp"
#include "cbamc/nn/fit.hpp"
#include "cbamc/nn/network.hpp"

namespace cbamc::cbm {

enum class Regime : std::uint8_t { Independent, Sequential, Joint, Baseline };
enum class ScaleProfile : std::uint8_t { Paper, Desk };

std::string_view to_string(Regime regime);
std::string_view to_string(ScaleProfile profile);
std::optional<Regime> parse_regime(std::string_view name);
std::optional<ScaleProfile> parse_profile(std::string_view name);

inline bool has_concepts(Regime regime) { return regime != Regime::Baseline; }

struct ArchitectureOptions {
  int conv_channels = 96;
  int dense_width = 384;
  /// Pads the second convolution by one row below so its output keeps
  /// height 2. Without it the output height is 1.
  bool preserve_height = true;
  double dropout = 0.5;

  static ArchitectureOptions for_profile(ScaleProfile profile);
  bool operator==(const ArchitectureOptions&) const = default;
};

/// Conv(K,(1,21)) ReLU Drop Conv(K,(2,21)) ReLU Drop Flatten Linear(D) ReLU Drop Linear(5).
nn::NetworkSpec regressor_spec(const ArchitectureOptions& options);
/// Linear(64) ReLU Drop Linear(64) ReLU Drop Linear(n_classes), input 5.
nn::NetworkSpec classifier_spec(int n_classes);
/// Regressor body with an n_classes output layer (softmax applied by the loss).
nn::NetworkSpec baseline_spec(const ArchitectureOptions& options, int n_classes);

/// BPSK, QPSK, FSK, AM_DSB.
std::vector<Scheme> desk_classes();
inline constexpr int kDeskExamplesPerClass = 500;

struct TrainingConfig {
  Regime regime = Regime::Independent;
  ScaleProfile profile = ScaleProfile::Paper;
  double lr = 1e-4;
  int epochs_regressor = 200;
  int epochs_classifier = 100;
  double joint_classifier_weight = 0.3;
  int batch_size = 256;
  std::uint64_t seed = 0;
  ArchitectureOptions architecture;

  static TrainingConfig defaults(Regime regime, ScaleProfile profile);
  /// Each of the five regression heads gets (1 - classifier weight) / 5.
  double head_weight() const { return (1.0 - joint_classifier_weight) / static_cast<double>(ConceptVector::kSize); }
  /// Throws Error(InvalidParameter).
  void validate() const;
  bool operator==(const TrainingConfig&) const = default;
};

nlohmann::json to_json(const TrainingConfig& config);
TrainingConfig training_config_from_json(const nlohmann::json& j);

struct TrainedNetwork {
  nn::Network<float> net;
  nn::FitHistory history;
  int epochs = 0;
};

struct ModelBundle {
  Regime kind = Regime::Independent;
  std::vector<Scheme> classes;
  std::optional<TrainedNetwork> regressor;  // absent for the baseline
  TrainedNetwork classifier;                // the single network for the baseline
  TrainingConfig config;
};

/// Fits the concept regressor (x -> c, MSE). Shared by the independent and
/// sequential regimes; identical config and seed give identical parameters.
TrainedNetwork fit_regressor(const datagen::DatasetSplit& train, const datagen::DatasetSplit& val,
                             const TrainingConfig& config);

/// Classifier on pristine concepts (c -> y). The classifier half of the
/// independent regime.
TrainedNetwork fit_concept_classifier(const datagen::DatasetSplit& train, const datagen::DatasetSplit& val,
                                      const TrainingConfig& config);

ModelBundle train_independent(const datagen::DatasetSplit& train, const datagen::DatasetSplit& val,
                              const TrainingConfig& config);
/// Fits the regressor (or reuses `pretrained`), freezes it, and fits the
/// classifier on its eval-mode predictions over the training set.
ModelBundle train_sequential(const datagen::DatasetSplit& train, const datagen::DatasetSplit& val,
                             const TrainingConfig& config, const TrainedNetwork* pretrained = nullptr);
ModelBundle train_joint(const datagen::DatasetSplit& train, const datagen::DatasetSplit& val,
                        const TrainingConfig& config);
ModelBundle train_baseline(const datagen::DatasetSplit& train, const datagen::DatasetSplit& val,
                           const TrainingConfig& config);
/// Dispatches on config.regime.
ModelBundle train(const datagen::DatasetSplit& train, const datagen::DatasetSplit& val, const TrainingConfig& config);

struct JointLossTerms {
  double total = 0.0;
  double cross_entropy = 0.0;
  std::array<double, ConceptVector::kSize> head_mse{};
  nn::Tensor<float> grad_concepts;  // d total / d predicted concepts (MSE part only)
  nn::Tensor<float> grad_logits;    // d total / d logits
};

/// total = w * CE(logits, labels) + (1 - w)/5 * sum_i MSE_i(predicted_i, target_i).
JointLossTerms joint_loss(const nn::Tensor<float>& predicted_concepts, const nn::Tensor<float>& logits,
                          const nn::Tensor<float>& target_concepts, std::span<const int> labels,
                          double classifier_weight);

struct Prediction {
  std::vector<double> probabilities;
  int label = 0;
  std::optional<ConceptVector> concepts;  // the explanation; absent for the baseline
};

/// Eval mode, no state touched; safe to call concurrently.
Prediction predict(const ModelBundle& bundle, std::span<const float> iq);
std::vector<Prediction> predict_split(const ModelBundle& bundle, const datagen::DatasetSplit& split);

/// Regressor outputs over a split, batched; Throws NoRegressor.
std::vector<ConceptVector> predict_concepts(const ModelBundle& bundle, const datagen::DatasetSplit& split);

/// (B, 1, 2, 128) input tensor for the given example indices.
nn::Tensor<float> iq_batch(const datagen::DatasetSplit& split, std::span<const std::size_t> indices);

/// bundle.json plus one checkpoint per network.
void save_bundle(const ModelBundle& bundle, const std::filesystem::path& dir, const nlohmann::json& run_config = {});
ModelBundle load_bundle(const std::filesystem::path& dir);

}  // namespace cbamc::cbm
