#include "cbamc/scheme.hpp"

#include <array>
#include <string>

#include "cbamc/error.hpp"

namespace cbamc {

namespace {

constexpr std::array<SchemeInfo, kSchemeCount> kSchemes{{
    {Scheme::BPSK, "BPSK", Family::LinearDigital, 2, true},
    {Scheme::QPSK, "QPSK", Family::LinearDigital, 4, true},
    {Scheme::PSK8, "PSK8", Family::LinearDigital, 8, true},
    {Scheme::QAM16, "QAM16", Family::LinearDigital, 16, true},
    {Scheme::QAM64, "QAM64", Family::LinearDigital, 64, true},
    {Scheme::FSK, "FSK", Family::FrequencyDigital, 2, true},
    {Scheme::AM_DSB, "AM_DSB", Family::AnalogAmplitude, std::nullopt, true},
    {Scheme::FM_NB, "FM_NB", Family::AnalogFrequency, std::nullopt, true},
    {Scheme::AWGN, "AWGN", Family::Noise, std::nullopt, true},
    {Scheme::PSK16, "PSK16", Family::LinearDigital, 16, false},
    {Scheme::QAM32, "QAM32", Family::LinearDigital, 32, false},
    {Scheme::MSK, "MSK", Family::FrequencyDigital, 2, false},
    {Scheme::GFSK, "GFSK", Family::FrequencyDigital, 2, false},
    {Scheme::AM_LSB, "AM_LSB", Family::AnalogAmplitude, std::nullopt, false},
    {Scheme::FM_WB, "FM_WB", Family::AnalogFrequency, std::nullopt, false},
}};

constexpr std::array<Scheme, kSchemeCount> kAll{
    Scheme::BPSK,  Scheme::QPSK,  Scheme::PSK8, Scheme::QAM16, Scheme::QAM64,
    Scheme::FSK,   Scheme::AM_DSB, Scheme::FM_NB, Scheme::AWGN, Scheme::PSK16,
    Scheme::QAM32, Scheme::MSK,   Scheme::GFSK, Scheme::AM_LSB, Scheme::FM_WB};

struct Alias {
  std::string_view alias;
  Scheme scheme;
};

constexpr std::array<Alias, 11> kAliases{{
    {"8PSK", Scheme::PSK8},
    {"16QAM", Scheme::QAM16},
    {"64QAM", Scheme::QAM64},
    {"16PSK", Scheme::PSK16},
    {"32QAM", Scheme::QAM32},
    {"AM-DSB", Scheme::AM_DSB},
    {"AM-LSB", Scheme::AM_LSB},
    {"FM-NB", Scheme::FM_NB},
    {"FM-WB", Scheme::FM_WB},
    {"AM", Scheme::AM_DSB},
    {"NOISE", Scheme::AWGN},
}};

}  // namespace

const SchemeInfo& scheme_info(Scheme scheme) {
  const auto index = static_cast<std::size_t>(scheme);
  if (index >= kSchemeCount) {
    throw Error(ErrorCode::UnknownScheme, "scheme id " + std::to_string(index));
  }
  return kSchemes[index];
}

std::span<const Scheme> all_schemes() { return kAll; }
std::span<const Scheme> in_set_schemes() { return std::span<const Scheme>(kAll).first(9); }
std::span<const Scheme> out_of_set_schemes() { return std::span<const Scheme>(kAll).subspan(9); }

std::string_view to_string(Scheme scheme) { return scheme_info(scheme).name; }

std::string_view to_string(Family family) {
  switch (family) {
    case Family::LinearDigital: return "linear-digital";
    case Family::FrequencyDigital: return "frequency-digital";
    case Family::AnalogAmplitude: return "analog-amplitude";
    case Family::AnalogFrequency: return "analog-frequency";
    case Family::Noise: return "noise";
  }
  return "?";
}

std::optional<Scheme> parse_scheme(std::string_view name) {
  for (const auto& info : kSchemes) {
    if (info.name == name) return info.scheme;
  }
  for (const auto& a : kAliases) {
    if (a.alias == name) return a.scheme;
  }
  return std::nullopt;
}

Scheme scheme_from_id(int id) {
  if (id < 0 || id >= static_cast<int>(kSchemeCount)) {
    throw Error(ErrorCode::UnknownScheme, "scheme id " + std::to_string(id));
  }
  return static_cast<Scheme>(id);
}

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidParameter: return "invalid-parameter";
    case ErrorCode::UnknownScheme: return "unknown-scheme";
    case ErrorCode::EmptyCandidateSet: return "empty-candidate-set";
    case ErrorCode::IoError: return "io-error";
    case ErrorCode::CorruptFile: return "corrupt-file";
    case ErrorCode::VersionMismatch: return "version-mismatch";
    case ErrorCode::ShapeMismatch: return "shape-mismatch";
    case ErrorCode::NoCachedForward: return "no-cached-forward";
    case ErrorCode::LabelOutOfRange: return "label-out-of-range";
    case ErrorCode::EmptyDataset: return "empty-dataset";
    case ErrorCode::Divergence: return "divergence";
    case ErrorCode::ClassMismatch: return "class-mismatch";
    case ErrorCode::NoRegressor: return "no-regressor";
  }
  return "error";
}

}  // namespace cbamc
