#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>

namespace cbamc {

// Numeric values are the on-disk scheme ids; do not reorder.
enum class Scheme : std::uint8_t {
  BPSK = 0,
  QPSK = 1,
  PSK8 = 2,
  QAM16 = 3,
  QAM64 = 4,
  FSK = 5,
  AM_DSB = 6,
  FM_NB = 7,
  AWGN = 8,
  PSK16 = 9,
  QAM32 = 10,
  MSK = 11,
  GFSK = 12,
  AM_LSB = 13,
  FM_WB = 14,
};

inline constexpr std::size_t kSchemeCount = 15;

enum class Family : std::uint8_t {
  LinearDigital,
  FrequencyDigital,
  AnalogAmplitude,
  AnalogFrequency,
  Noise,
};

struct SchemeInfo {
  Scheme scheme;
  std::string_view name;
  Family family;
  std::optional<int> symbol_order;  // defined only for digital families
  bool in_set;
};

const SchemeInfo& scheme_info(Scheme scheme);

std::span<const Scheme> all_schemes();
std::span<const Scheme> in_set_schemes();
std::span<const Scheme> out_of_set_schemes();

std::string_view to_string(Scheme scheme);
std::string_view to_string(Family family);

/// Accepts the canonical names ("BPSK", "PSK8", "QAM16", "AM_DSB", ...)
/// and the table spellings ("8PSK", "16QAM", "FM-NB", ...).
std::optional<Scheme> parse_scheme(std::string_view name);

/// Throws Error(UnknownScheme) for ids outside [0, 15).
Scheme scheme_from_id(int id);

inline bool is_digital(Family family) {
  return family == Family::LinearDigital || family == Family::FrequencyDigital;
}

}  // namespace cbamc
