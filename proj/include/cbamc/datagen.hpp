#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cbamc/concepts.hpp"
#include "cbamc/scheme.hpp"
#include "cbamc/sigsynth.hpp"

namespace cbamc::datagen {

inline constexpr int kIqLength = 128;
inline constexpr std::uint16_t kFormatVersion = 1;

enum class SplitKind : std::uint8_t {
  Train = 0,
  Val = 1,
  TestInset = 2,
  TestNearset = 3,
  TestOutofset = 4,
};

std::string_view to_string(SplitKind kind);
std::optional<SplitKind> parse_split_kind(std::string_view name);

struct Example {
  std::array<float, 2 * kIqLength> iq{};  // I row, then Q row
  std::uint8_t label_id = 0;              // index into the split's class list
  std::array<float, ConceptVector::kSize> concepts{};
  std::int16_t snr_db = 0;
  Scheme scheme = Scheme::BPSK;

  bool operator==(const Example&) const = default;
};

struct Manifest {
  std::uint16_t format_version = kFormatVersion;
  SplitKind kind = SplitKind::Train;
  std::uint64_t seed = 0;
  int per_class = 0;
  std::vector<Scheme> class_list;
  std::map<std::string, int> counts;  // scheme name -> example count
  double nominal_sample_rate_hz = sigsynth::kDefaultSampleRateHz;
  int n_samples = kIqLength;
  std::string snr_rule;
  std::vector<std::string> notes;

  bool operator==(const Manifest&) const = default;
};

struct DatasetSplit {
  SplitKind kind = SplitKind::Train;
  std::vector<Scheme> class_list;
  std::vector<Example> examples;
  Manifest manifest;

  bool operator==(const DatasetSplit&) const = default;
};

struct GenerationConfig {
  double nominal_sample_rate_hz = sigsynth::kDefaultSampleRateHz;
  /// Restricts the class list (e.g. the four-class desk profile). Empty
  /// selects every class the split kind admits.
  std::vector<Scheme> classes;
  /// 0 selects worker_count().
  unsigned workers = 0;
};

/// Classes a split of `kind` contains under `config`; throws
/// Error(InvalidParameter) if the override names a class the kind excludes.
std::vector<Scheme> split_classes(SplitKind kind, const GenerationConfig& config);

/// SNR values (dB) a split of `kind` draws from, uniformly.
std::vector<int> snr_choices(SplitKind kind);

/// splitmix64 chain over (master seed, kind, scheme id, example index).
std::uint64_t example_seed(std::uint64_t master_seed, SplitKind kind, Scheme scheme, std::uint64_t index);

Example make_example(const sigsynth::IQCapture& capture, std::uint8_t label_id);

DatasetSplit generate_split(SplitKind kind, int per_class, std::uint64_t seed, const GenerationConfig& config = {});

/// Sidecar path for a dataset file: "train.cbam" -> "train.manifest.json".
std::filesystem::path manifest_path(const std::filesystem::path& dataset_path);

std::string manifest_json(const Manifest& manifest);
Manifest parse_manifest_json(const std::string& text);

/// CRC-32 of the canonical manifest JSON, as 8 hex digits.
std::string manifest_hash(const Manifest& manifest);

/// Writes the binary dataset and its manifest sidecar.
void write_split(const DatasetSplit& split, const std::filesystem::path& path);

/// Reads and validates a dataset file. If the manifest sidecar exists its
/// counts must match the file. Throws IoError, CorruptFile or
/// VersionMismatch.
DatasetSplit read_split(const std::filesystem::path& path);

/// Serialized bytes of the binary file (header, examples, CRC-32).
std::vector<std::uint8_t> encode_split(const DatasetSplit& split);
DatasetSplit decode_split(std::span<const std::uint8_t> bytes);

}  // namespace cbamc::datagen
