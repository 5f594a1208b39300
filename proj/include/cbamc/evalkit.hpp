#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cbamc/cbmodel.hpp"
#include "cbamc/concepts.hpp"
#include "cbamc/datagen.hpp"

namespace cbamc::eval {

inline constexpr int kReportSchemaVersion = 1;
inline constexpr int kOrderBins = 50;
inline constexpr double kOrderLow = -0.1;
inline constexpr double kOrderHigh = 1.1;

/// Heads summarized as box statistics (the four binary ones).
inline constexpr std::array<std::size_t, 4> kBinaryHeads{ConceptVector::Analog, ConceptVector::Amplitude,
                                                         ConceptVector::Phase, ConceptVector::Frequency};

struct BoxStats {
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double whisker_low = 0.0;   // most extreme sample within q1 - 1.5 IQR
  double whisker_high = 0.0;  // most extreme sample within q3 + 1.5 IQR
  int outliers = 0;
  int count = 0;

  bool operator==(const BoxStats&) const = default;
};

/// Quartiles by linear interpolation between order statistics.
BoxStats box_stats(std::span<const double> samples);

struct ZeroShotRow {
  Scheme scheme = Scheme::BPSK;
  int total = 0;
  std::map<std::string, int> assignments;  // assigned scheme name -> count
  double self_rate = 0.0;                  // fraction assigned to its own concept vector's class
  std::vector<std::string> tied_with;      // other schemes sharing this scheme's concept vector

  bool operator==(const ZeroShotRow&) const = default;
};

enum class ClassifierMode {
  /// Every split class must be in the bundle's class list.
  Strict,
  /// Split classes may lie outside the class list; the confusion matrix has
  /// one row per split class and one column per bundle class, and no
  /// accuracy is reported.
  ForcedChoice,
};

struct EvalReport {
  int schema_version = kReportSchemaVersion;
  std::string split;
  int example_count = 0;

  // Classification.
  bool has_classification = false;
  bool forced_choice = false;
  std::vector<std::string> truth_classes;       // confusion rows
  std::vector<std::string> predicted_classes;   // confusion columns
  std::optional<double> overall_accuracy;
  std::map<int, double> accuracy_by_snr;
  std::map<int, int> count_by_snr;
  std::vector<std::vector<int>> confusion;

  // Regression.
  bool has_regression = false;
  std::map<std::string, BoxStats> head_errors;  // signed error per binary head
  std::vector<int> order_histogram;             // kOrderBins bins over [kOrderLow, kOrderHigh]
  std::map<std::string, std::array<double, ConceptVector::kSize>> per_modulation_mae;

  // Zero-shot probe.
  std::vector<ZeroShotRow> zero_shot;

  std::vector<std::string> notes;
  nlohmann::json provenance = nlohmann::json::object();

  bool operator==(const EvalReport&) const = default;
};

/// Classification fields from predicted indices into `classes`.
EvalReport evaluate_classifier(std::span<const int> predicted, const std::vector<Scheme>& classes,
                               const datagen::DatasetSplit& split, ClassifierMode mode = ClassifierMode::Strict);
EvalReport evaluate_classifier(const cbm::ModelBundle& bundle, const datagen::DatasetSplit& split,
                               ClassifierMode mode = ClassifierMode::Strict);

/// Regression fields from predicted concept vectors, one per example.
EvalReport evaluate_regressor(std::span<const ConceptVector> predicted, const datagen::DatasetSplit& split);
/// Throws NoRegressor for a baseline bundle.
EvalReport evaluate_regressor(const cbm::ModelBundle& bundle, const datagen::DatasetSplit& split);

/// Candidate set for the probe: every scheme's concept vector, labeled by scheme id.
std::vector<ConceptCandidate> zero_shot_candidates();

/// Nearest-concept assignment per example, tabulated per true scheme.
std::vector<ZeroShotRow> zero_shot_probe(std::span<const ConceptVector> predicted, const datagen::DatasetSplit& split);
std::vector<ZeroShotRow> zero_shot_probe(const cbm::ModelBundle& bundle, const datagen::DatasetSplit& split);

/// Bin index for a predicted order value; values outside the range land in the edge bins.
int order_bin(double value);

/// Fraction of predicted order values within `tolerance` of any value in `legal`.
double fraction_near(std::span<const ConceptVector> predicted, std::span<const double> legal, double tolerance);

/// Combines the sections of several partial reports over the same split.
EvalReport merge_reports(const EvalReport& classification, const EvalReport& regression);

nlohmann::json to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);

/// Writes `path` (JSON) and CSV companions next to it: accuracy_by_snr.csv,
/// confusion.csv, and when present head_errors.csv, order_histogram.csv,
/// per_modulation.csv, zero_shot.csv. Throws IoError.
void write_report(const EvalReport& report, const std::filesystem::path& path);
EvalReport read_report(const std::filesystem::path& path);

}  // namespace cbamc::eval
