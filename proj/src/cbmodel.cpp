#include "cbamc/cbmodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <numeric>

#include "cbamc/error.hpp"
#include "cbamc/nn/checkpoint.hpp"
#include "cbamc/nn/loss.hpp"
#include "cbamc/parallel.hpp"

namespace cbamc::cbm {

namespace {

using datagen::DatasetSplit;
using nn::Tensor;

constexpr int kConcepts = static_cast<int>(ConceptVector::kSize);
constexpr std::size_t kEvalChunk = 256;

enum SeedSlot : std::uint64_t {
  RegressorInit = 1,
  RegressorFit = 2,
  ClassifierInit = 3,
  ClassifierFit = 4,
  JointFit = 5,
  BaselineInit = 6,
  BaselineFit = 7,
};

std::uint64_t slot_seed(const TrainingConfig& config, SeedSlot slot) { return derive_seed(splitmix64(config.seed), slot); }

void require_examples(const DatasetSplit& split, const char* what) {
  if (split.examples.empty()) throw Error(ErrorCode::EmptyDataset, std::string(what) + " split is empty");
}

void require_same_classes(const DatasetSplit& train, const DatasetSplit& val) {
  if (train.class_list != val.class_list) {
    throw Error(ErrorCode::ClassMismatch, "train and validation splits have different class lists");
  }
}

Tensor<float> concept_rows(std::span<const std::array<float, kConcepts>> rows, std::span<const std::size_t> indices) {
  Tensor<float> out({static_cast<int>(indices.size()), kConcepts});
  for (std::size_t b = 0; b < indices.size(); ++b) {
    std::copy(rows[indices[b]].begin(), rows[indices[b]].end(), out.data() + b * kConcepts);
  }
  return out;
}

std::vector<std::array<float, kConcepts>> truth_concepts(const DatasetSplit& split) {
  std::vector<std::array<float, kConcepts>> out(split.examples.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = split.examples[i].concepts;
  return out;
}

std::vector<int> labels_of(const DatasetSplit& split, std::span<const std::size_t> indices) {
  std::vector<int> out(indices.size());
  for (std::size_t b = 0; b < indices.size(); ++b) out[b] = split.examples[indices[b]].label_id;
  return out;
}

/// Calls fn(indices) over [0, n) in fixed-size chunks and returns the
/// count-weighted mean of the returned losses.
template <typename Fn>
double chunked_mean(std::size_t n, Fn&& fn) {
  double total = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < n; start += kEvalChunk) {
    const std::size_t end = std::min(n, start + kEvalChunk);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    total += fn(std::span<const std::size_t>(idx)) * static_cast<double>(end - start);
  }
  return total / static_cast<double>(n);
}

nn::FitOptions fit_options(const TrainingConfig& config, int epochs, SeedSlot slot) {
  nn::FitOptions options;
  options.epochs = epochs;
  options.batch_size = config.batch_size;
  options.seed = slot_seed(config, slot);
  options.adam.learning_rate = config.lr;
  return options;
}

/// Classifier on fixed concept inputs (pristine or frozen-regressor outputs).
TrainedNetwork fit_classifier_on(std::span<const std::array<float, kConcepts>> train_inputs, const DatasetSplit& train,
                                 std::span<const std::array<float, kConcepts>> val_inputs, const DatasetSplit& val,
                                 const TrainingConfig& config) {
  const int n_classes = static_cast<int>(train.class_list.size());
  TrainedNetwork out{nn::Network<float>(classifier_spec(n_classes), slot_seed(config, ClassifierInit)), {},
                     config.epochs_classifier};
  auto& net = out.net;

  nn::FitProblem<float> problem;
  problem.train_size = train.examples.size();
  problem.params = net.params();
  problem.train_batch = [&](std::span<const std::size_t> idx, Rng& rng) {
    const auto x = concept_rows(train_inputs, idx);
    const auto labels = labels_of(train, idx);
    const auto logits = net.forward(x, nn::Mode::Train, &rng);
    const auto loss = nn::cross_entropy_loss(logits, std::span<const int>(labels));
    net.backward(loss.grad);
    return loss.value;
  };
  problem.validation_loss = [&] {
    return chunked_mean(val.examples.size(), [&](std::span<const std::size_t> idx) {
      const auto labels = labels_of(val, idx);
      return nn::cross_entropy_loss(net.infer(concept_rows(val_inputs, idx)), std::span<const int>(labels)).value;
    });
  };
  out.history = nn::fit(problem, fit_options(config, config.epochs_classifier, ClassifierFit));
  return out;
}

std::vector<std::array<float, kConcepts>> regressor_outputs(const nn::Network<float>& regressor,
                                                            const DatasetSplit& split) {
  std::vector<std::array<float, kConcepts>> out(split.examples.size());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < out.size(); start += kEvalChunk) {
    const std::size_t end = std::min(out.size(), start + kEvalChunk);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const auto y = regressor.infer(iq_batch(split, idx));
    for (std::size_t b = 0; b < idx.size(); ++b) {
      std::copy(y.data() + b * kConcepts, y.data() + (b + 1) * kConcepts, out[start + b].begin());
    }
  }
  return out;
}

ConceptVector to_concept_vector(const float* values) {
  ConceptVector c;
  for (int i = 0; i < kConcepts; ++i) c[i] = values[i];
  return c;
}

std::vector<double> softmax_row(const float* logits, int k) {
  std::vector<double> p(k);
  const double peak = *std::max_element(logits, logits + k);
  double sum = 0.0;
  for (int i = 0; i < k; ++i) {
    p[i] = std::exp(static_cast<double>(logits[i]) - peak);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

nlohmann::json history_json(const nn::FitHistory& h) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : h.epochs) epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}});
  return {{"best_epoch", h.best_epoch}, {"best_val_loss", h.best_val_loss}, {"epochs", epochs}};
}

nn::FitHistory history_from_json(const nlohmann::json& j) {
  nn::FitHistory h;
  h.best_epoch = j.at("best_epoch").get<int>();
  h.best_val_loss = j.at("best_val_loss").get<double>();
  for (const auto& e : j.at("epochs")) {
    h.epochs.push_back({e.at("epoch").get<int>(), e.at("train_loss").get<double>(), e.at("val_loss").get<double>()});
  }
  return h;
}

}  // namespace

std::string_view to_string(Regime regime) {
  switch (regime) {
    case Regime::Independent: return "independent";
    case Regime::Sequential: return "sequential";
    case Regime::Joint: return "joint";
    case Regime::Baseline: return "baseline";
  }
  return "?";
}

std::string_view to_string(ScaleProfile profile) { return profile == ScaleProfile::Paper ? "paper" : "desk"; }

std::optional<Regime> parse_regime(std::string_view name) {
  for (auto r : {Regime::Independent, Regime::Sequential, Regime::Joint, Regime::Baseline}) {
    if (to_string(r) == name) return r;
  }
  return std::nullopt;
}

std::optional<ScaleProfile> parse_profile(std::string_view name) {
  if (name == "paper") return ScaleProfile::Paper;
  if (name == "desk") return ScaleProfile::Desk;
  return std::nullopt;
}

ArchitectureOptions ArchitectureOptions::for_profile(ScaleProfile profile) {
  ArchitectureOptions options;
  if (profile == ScaleProfile::Desk) {
    options.conv_channels = 16;
    options.dense_width = 96;
  }
  return options;
}

namespace {

std::vector<nn::LayerSpec> regressor_body(const ArchitectureOptions& o) {
  const nn::Padding second_pad = o.preserve_height ? nn::Padding{0, 1, 10, 10} : nn::Padding::symmetric(0, 10);
  return {
      nn::Conv2dSpec{o.conv_channels, 1, 21, nn::Padding::symmetric(0, 10)},
      nn::ReluSpec{},
      nn::DropoutSpec{o.dropout},
      nn::Conv2dSpec{o.conv_channels, 2, 21, second_pad},
      nn::ReluSpec{},
      nn::DropoutSpec{o.dropout},
      nn::FlattenSpec{},
      nn::LinearSpec{o.dense_width},
      nn::ReluSpec{},
      nn::DropoutSpec{o.dropout},
  };
}

}  // namespace

nn::NetworkSpec regressor_spec(const ArchitectureOptions& options) {
  nn::NetworkSpec spec{{1, 2, datagen::kIqLength}, regressor_body(options)};
  spec.layers.emplace_back(nn::LinearSpec{kConcepts});
  return spec;
}

nn::NetworkSpec classifier_spec(int n_classes) {
  return nn::NetworkSpec{{kConcepts},
                         {nn::LinearSpec{64}, nn::ReluSpec{}, nn::DropoutSpec{0.5}, nn::LinearSpec{64}, nn::ReluSpec{},
                          nn::DropoutSpec{0.5}, nn::LinearSpec{n_classes}}};
}

nn::NetworkSpec baseline_spec(const ArchitectureOptions& options, int n_classes) {
  nn::NetworkSpec spec{{1, 2, datagen::kIqLength}, regressor_body(options)};
  spec.layers.emplace_back(nn::LinearSpec{n_classes});
  return spec;
}

std::vector<Scheme> desk_classes() { return {Scheme::BPSK, Scheme::QPSK, Scheme::FSK, Scheme::AM_DSB}; }

TrainingConfig TrainingConfig::defaults(Regime regime, ScaleProfile profile) {
  TrainingConfig c;
  c.regime = regime;
  c.profile = profile;
  c.architecture = ArchitectureOptions::for_profile(profile);
  if (profile == ScaleProfile::Desk) {
    c.epochs_regressor = 40;
    c.epochs_classifier = 20;
    c.batch_size = 32;
  }
  return c;
}

void TrainingConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidParameter, what); };
  if (!(lr > 0.0) || !std::isfinite(lr)) fail("learning rate must be positive");
  if (epochs_regressor < 1 || epochs_classifier < 1) fail("epoch counts must be >= 1");
  if (!(joint_classifier_weight > 0.0 && joint_classifier_weight <= 1.0)) fail("joint classifier weight must be in (0, 1]");
  if (batch_size < 1) fail("batch size must be >= 1");
  if (architecture.conv_channels < 1 || architecture.dense_width < 1) fail("architecture widths must be >= 1");
}

nlohmann::json to_json(const TrainingConfig& c) {
  nlohmann::json heads = nlohmann::json::array();
  for (int i = 0; i < kConcepts; ++i) heads.push_back(c.head_weight());
  return {
      {"regime", to_string(c.regime)},
      {"profile", to_string(c.profile)},
      {"lr", c.lr},
      {"epochs_regressor", c.epochs_regressor},
      {"epochs_classifier", c.epochs_classifier},
      {"joint_classifier_weight", c.joint_classifier_weight},
      {"joint_head_weights", heads},
      {"batch_size", c.batch_size},
      {"seed", c.seed},
      {"architecture",
       {{"conv_channels", c.architecture.conv_channels},
        {"dense_width", c.architecture.dense_width},
        {"preserve_height", c.architecture.preserve_height},
        {"dropout", c.architecture.dropout}}},
  };
}

TrainingConfig training_config_from_json(const nlohmann::json& j) {
  try {
    TrainingConfig c;
    const auto regime = parse_regime(j.at("regime").get<std::string>());
    const auto profile = parse_profile(j.at("profile").get<std::string>());
    if (!regime || !profile) throw Error(ErrorCode::CorruptFile, "unknown regime or profile in training config");
    c.regime = *regime;
    c.profile = *profile;
    c.lr = j.at("lr").get<double>();
    c.epochs_regressor = j.at("epochs_regressor").get<int>();
    c.epochs_classifier = j.at("epochs_classifier").get<int>();
    c.joint_classifier_weight = j.at("joint_classifier_weight").get<double>();
    c.batch_size = j.at("batch_size").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    const auto& a = j.at("architecture");
    c.architecture.conv_channels = a.at("conv_channels").get<int>();
    c.architecture.dense_width = a.at("dense_width").get<int>();
    c.architecture.preserve_height = a.at("preserve_height").get<bool>();
    c.architecture.dropout = a.at("dropout").get<double>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptFile, std::string("training config: ") + e.what());
  }
}

Tensor<float> iq_batch(const DatasetSplit& split, std::span<const std::size_t> indices) {
  constexpr int kPer = 2 * datagen::kIqLength;
  Tensor<float> x({static_cast<int>(indices.size()), 1, 2, datagen::kIqLength});
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const auto& iq = split.examples.at(indices[b]).iq;
    std::copy(iq.begin(), iq.end(), x.data() + b * kPer);
  }
  return x;
}

JointLossTerms joint_loss(const Tensor<float>& predicted, const Tensor<float>& logits, const Tensor<float>& target,
                          std::span<const int> labels, double classifier_weight) {
  if (predicted.shape() != target.shape() || predicted.rank() != 2 || predicted.dim(1) != kConcepts) {
    throw Error(ErrorCode::ShapeMismatch, "joint loss: concept tensors must be (B, 5)");
  }
  const int batch = predicted.dim(0);
  const double head_weight = (1.0 - classifier_weight) / kConcepts;

  JointLossTerms out;
  auto ce = nn::cross_entropy_loss(logits, labels);
  out.cross_entropy = ce.value;
  out.grad_logits = std::move(ce.grad);
  for (auto& g : out.grad_logits.values()) g = static_cast<float>(g * classifier_weight);

  out.grad_concepts = Tensor<float>(predicted.shape());
  for (int b = 0; b < batch; ++b) {
    for (int i = 0; i < kConcepts; ++i) {
      const std::size_t k = static_cast<std::size_t>(b) * kConcepts + i;
      const double d = static_cast<double>(predicted[k]) - static_cast<double>(target[k]);
      out.head_mse[i] += d * d / batch;
      out.grad_concepts[k] = static_cast<float>(head_weight * 2.0 * d / batch);
    }
  }
  out.total = classifier_weight * out.cross_entropy;
  for (double m : out.head_mse) out.total += head_weight * m;
  return out;
}

TrainedNetwork fit_regressor(const DatasetSplit& train, const DatasetSplit& val, const TrainingConfig& config) {
  config.validate();
  require_examples(train, "training");
  require_examples(val, "validation");
  TrainedNetwork out{nn::Network<float>(regressor_spec(config.architecture), slot_seed(config, RegressorInit)), {},
                     config.epochs_regressor};
  auto& net = out.net;
  const auto train_c = truth_concepts(train);
  const auto val_c = truth_concepts(val);

  nn::FitProblem<float> problem;
  problem.train_size = train.examples.size();
  problem.params = net.params();
  problem.train_batch = [&](std::span<const std::size_t> idx, Rng& rng) {
    const auto y = net.forward(iq_batch(train, idx), nn::Mode::Train, &rng);
    const auto loss = nn::mse_loss(y, concept_rows(train_c, idx));
    net.backward(loss.grad);
    return loss.value;
  };
  problem.validation_loss = [&] {
    return chunked_mean(val.examples.size(), [&](std::span<const std::size_t> idx) {
      return nn::mse_loss(net.infer(iq_batch(val, idx)), concept_rows(val_c, idx)).value;
    });
  };
  out.history = nn::fit(problem, fit_options(config, config.epochs_regressor, RegressorFit));
  return out;
}

TrainedNetwork fit_concept_classifier(const DatasetSplit& train, const DatasetSplit& val, const TrainingConfig& config) {
  config.validate();
  require_examples(train, "training");
  require_examples(val, "validation");
  require_same_classes(train, val);
  const auto train_c = truth_concepts(train);
  const auto val_c = truth_concepts(val);
  return fit_classifier_on(train_c, train, val_c, val, config);
}

ModelBundle train_independent(const DatasetSplit& train, const DatasetSplit& val, const TrainingConfig& config) {
  config.validate();
  require_same_classes(train, val);
  ModelBundle bundle{Regime::Independent, train.class_list, std::nullopt, {}, config};
  bundle.config.regime = Regime::Independent;

  // The two halves never see each other's outputs.
  if (worker_count() > 1) {
    auto classifier = std::async(std::launch::async, [&] { return fit_concept_classifier(train, val, config); });
    bundle.regressor = fit_regressor(train, val, config);
    bundle.classifier = classifier.get();
  } else {
    bundle.regressor = fit_regressor(train, val, config);
    bundle.classifier = fit_concept_classifier(train, val, config);
  }
  return bundle;
}

ModelBundle train_sequential(const DatasetSplit& train, const DatasetSplit& val, const TrainingConfig& config,
                             const TrainedNetwork* pretrained) {
  config.validate();
  require_same_classes(train, val);
  ModelBundle bundle{Regime::Sequential, train.class_list, std::nullopt, {}, config};
  bundle.config.regime = Regime::Sequential;
  bundle.regressor = pretrained ? *pretrained : fit_regressor(train, val, config);

  const auto train_hat = regressor_outputs(bundle.regressor->net, train);
  const auto val_hat = regressor_outputs(bundle.regressor->net, val);
  bundle.classifier = fit_classifier_on(train_hat, train, val_hat, val, config);
  return bundle;
}

ModelBundle train_joint(const DatasetSplit& train, const DatasetSplit& val, const TrainingConfig& config) {
  config.validate();
  require_examples(train, "training");
  require_examples(val, "validation");
  require_same_classes(train, val);
  const int n_classes = static_cast<int>(train.class_list.size());

  ModelBundle bundle{Regime::Joint, train.class_list, std::nullopt, {}, config};
  bundle.config.regime = Regime::Joint;
  bundle.regressor = TrainedNetwork{
      nn::Network<float>(regressor_spec(config.architecture), slot_seed(config, RegressorInit)), {}, config.epochs_regressor};
  bundle.classifier = TrainedNetwork{nn::Network<float>(classifier_spec(n_classes), slot_seed(config, ClassifierInit)),
                                     {}, config.epochs_regressor};
  auto& g = bundle.regressor->net;
  auto& f = bundle.classifier.net;
  const auto train_c = truth_concepts(train);
  const auto val_c = truth_concepts(val);
  const double w = config.joint_classifier_weight;

  nn::FitProblem<float> problem;
  problem.train_size = train.examples.size();
  problem.params = g.params();
  for (auto* p : f.params()) problem.params.push_back(p);
  problem.train_batch = [&](std::span<const std::size_t> idx, Rng& rng) {
    const auto labels = labels_of(train, idx);
    const auto c_hat = g.forward(iq_batch(train, idx), nn::Mode::Train, &rng);
    const auto logits = f.forward(c_hat, nn::Mode::Train, &rng);
    auto terms = joint_loss(c_hat, logits, concept_rows(train_c, idx), labels, w);
    auto grad_c = f.backward(terms.grad_logits);
    for (std::size_t i = 0; i < grad_c.size(); ++i) grad_c[i] += terms.grad_concepts[i];
    g.backward(grad_c);
    return terms.total;
  };
  problem.validation_loss = [&] {
    return chunked_mean(val.examples.size(), [&](std::span<const std::size_t> idx) {
      const auto labels = labels_of(val, idx);
      const auto c_hat = g.infer(iq_batch(val, idx));
      return joint_loss(c_hat, f.infer(c_hat), concept_rows(val_c, idx), labels, w).total;
    });
  };
  const auto history = nn::fit(problem, fit_options(config, config.epochs_regressor, JointFit));
  bundle.regressor->history = history;
  bundle.classifier.history = history;
  return bundle;
}

ModelBundle train_baseline(const DatasetSplit& train, const DatasetSplit& val, const TrainingConfig& config) {
  config.validate();
  require_examples(train, "training");
  require_examples(val, "validation");
  require_same_classes(train, val);
  const int n_classes = static_cast<int>(train.class_list.size());

  ModelBundle bundle{Regime::Baseline, train.class_list, std::nullopt, {}, config};
  bundle.config.regime = Regime::Baseline;
  bundle.classifier = TrainedNetwork{
      nn::Network<float>(baseline_spec(config.architecture, n_classes), slot_seed(config, BaselineInit)), {},
      config.epochs_regressor};
  auto& net = bundle.classifier.net;

  nn::FitProblem<float> problem;
  problem.train_size = train.examples.size();
  problem.params = net.params();
  problem.train_batch = [&](std::span<const std::size_t> idx, Rng& rng) {
    const auto labels = labels_of(train, idx);
    const auto logits = net.forward(iq_batch(train, idx), nn::Mode::Train, &rng);
    const auto loss = nn::cross_entropy_loss(logits, std::span<const int>(labels));
    net.backward(loss.grad);
    return loss.value;
  };
  problem.validation_loss = [&] {
    return chunked_mean(val.examples.size(), [&](std::span<const std::size_t> idx) {
      const auto labels = labels_of(val, idx);
      return nn::cross_entropy_loss(net.infer(iq_batch(val, idx)), std::span<const int>(labels)).value;
    });
  };
  bundle.classifier.history = nn::fit(problem, fit_options(config, config.epochs_regressor, BaselineFit));
  return bundle;
}

ModelBundle train(const DatasetSplit& train_split, const DatasetSplit& val, const TrainingConfig& config) {
  switch (config.regime) {
    case Regime::Independent: return train_independent(train_split, val, config);
    case Regime::Sequential: return train_sequential(train_split, val, config);
    case Regime::Joint: return train_joint(train_split, val, config);
    case Regime::Baseline: return train_baseline(train_split, val, config);
  }
  throw Error(ErrorCode::InvalidParameter, "unknown regime");
}

Prediction predict(const ModelBundle& bundle, std::span<const float> iq) {
  constexpr std::size_t kPer = 2 * datagen::kIqLength;
  if (iq.size() != kPer) throw Error(ErrorCode::ShapeMismatch, "predict expects 2x128 IQ values");
  Tensor<float> x({1, 1, 2, datagen::kIqLength}, std::vector<float>(iq.begin(), iq.end()));
  Prediction out;
  Tensor<float> logits;
  if (bundle.regressor) {
    const auto c_hat = bundle.regressor->net.infer(x);
    out.concepts = to_concept_vector(c_hat.data());
    logits = bundle.classifier.net.infer(c_hat);
  } else {
    logits = bundle.classifier.net.infer(x);
  }
  out.probabilities = softmax_row(logits.data(), logits.dim(1));
  out.label = static_cast<int>(std::max_element(out.probabilities.begin(), out.probabilities.end()) -
                               out.probabilities.begin());
  return out;
}

std::vector<Prediction> predict_split(const ModelBundle& bundle, const DatasetSplit& split) {
  std::vector<Prediction> out(split.examples.size());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < out.size(); start += kEvalChunk) {
    const std::size_t end = std::min(out.size(), start + kEvalChunk);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const auto x = iq_batch(split, idx);
    Tensor<float> logits;
    Tensor<float> c_hat;
    if (bundle.regressor) {
      c_hat = bundle.regressor->net.infer(x);
      logits = bundle.classifier.net.infer(c_hat);
    } else {
      logits = bundle.classifier.net.infer(x);
    }
    const int k = logits.dim(1);
    for (std::size_t b = 0; b < idx.size(); ++b) {
      auto& p = out[start + b];
      p.probabilities = softmax_row(logits.data() + b * k, k);
      p.label = static_cast<int>(std::max_element(p.probabilities.begin(), p.probabilities.end()) -
                                 p.probabilities.begin());
      if (bundle.regressor) p.concepts = to_concept_vector(c_hat.data() + b * kConcepts);
    }
  }
  return out;
}

std::vector<ConceptVector> predict_concepts(const ModelBundle& bundle, const DatasetSplit& split) {
  if (!bundle.regressor) throw Error(ErrorCode::NoRegressor, "bundle has no concept regressor");
  const auto rows = regressor_outputs(bundle.regressor->net, split);
  std::vector<ConceptVector> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = to_concept_vector(rows[i].data());
  return out;
}

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& dir, const nlohmann::json& run_config) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string());

  nlohmann::json classes = nlohmann::json::array();
  for (Scheme s : bundle.classes) classes.push_back(to_string(s));
  nlohmann::json networks;
  auto describe = [&](const char* name, const TrainedNetwork& t) {
    const nlohmann::json provenance{{"epochs", t.epochs}, {"history", history_json(t.history)}, {"seed", bundle.config.seed},
                                    {"lr", bundle.config.lr}};
    nn::save_checkpoint(dir, name, t.net, provenance);
    networks[name] = {{"checkpoint", name},
                      {"parameter_count", t.net.parameter_count()},
                      {"epochs", t.epochs},
                      {"best_epoch", t.history.best_epoch},
                      {"best_val_loss", t.history.best_val_loss}};
  };
  if (bundle.regressor) describe("regressor", *bundle.regressor);
  describe("classifier", bundle.classifier);

  nlohmann::json j{
      {"format_version", 1},
      {"kind", to_string(bundle.kind)},
      {"classes", classes},
      {"config", to_json(bundle.config)},
      {"networks", networks},
      {"checkpoint_rule", bundle.kind == Regime::Joint ? "lowest total (weighted) validation loss"
                                                        : "lowest validation loss, earliest epoch on ties"},
  };
  if (bundle.kind == Regime::Joint) {
    j["joint_weights"] = {{"classifier", bundle.config.joint_classifier_weight},
                          {"heads", to_json(bundle.config)["joint_head_weights"]},
                          {"epochs", bundle.config.epochs_regressor}};
  }
  if (!run_config.is_null()) j["run_config"] = run_config;

  std::ofstream out(dir / "bundle.json", std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + (dir / "bundle.json").string());
  out << j.dump(2) << '\n';
}

ModelBundle load_bundle(const std::filesystem::path& dir) {
  std::ifstream in(dir / "bundle.json");
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + (dir / "bundle.json").string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptFile, std::string("bundle.json: ") + e.what());
  }
  ModelBundle bundle;
  const auto kind = parse_regime(j.at("kind").get<std::string>());
  if (!kind) throw Error(ErrorCode::CorruptFile, "bundle.json: unknown kind");
  bundle.kind = *kind;
  for (const auto& name : j.at("classes")) {
    const auto s = parse_scheme(name.get<std::string>());
    if (!s) throw Error(ErrorCode::CorruptFile, "bundle.json: unknown class");
    bundle.classes.push_back(*s);
  }
  bundle.config = training_config_from_json(j.at("config"));

  auto load = [&](const char* name) {
    auto cp = nn::load_checkpoint(dir, name);
    TrainedNetwork t{nn::to_network(cp), {}, cp.provenance.value("epochs", 0)};
    if (cp.provenance.contains("history")) t.history = history_from_json(cp.provenance.at("history"));
    return t;
  };
  if (has_concepts(bundle.kind)) {
    bundle.regressor = load("regressor");
    if (nn::output_shape(bundle.regressor->net.spec()) != nn::Shape{kConcepts}) {
      throw Error(ErrorCode::CorruptFile, "regressor output is not 5-dimensional");
    }
  }
  bundle.classifier = load("classifier");
  if (nn::output_shape(bundle.classifier.net.spec()) != nn::Shape{static_cast<int>(bundle.classes.size())}) {
    throw Error(ErrorCode::CorruptFile, "classifier output does not match the class list");
  }
  return bundle;
}

}  // namespace cbamc::cbm
