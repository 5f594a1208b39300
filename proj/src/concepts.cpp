#include "cbamc/concepts.hpp"

#include <cmath>
#include <limits>

#include "cbamc/error.hpp"

namespace cbamc {

const char* head_name(std::size_t head) {
  static constexpr const char* kNames[] = {"analog", "amplitude", "phase", "frequency", "order"};
  return head < ConceptVector::kSize ? kNames[head] : "?";
}

ConceptVector concept_vector(Scheme scheme) {
  const SchemeInfo& info = scheme_info(scheme);
  ConceptVector c;
  const bool analog = info.family == Family::AnalogAmplitude || info.family == Family::AnalogFrequency;
  const bool qam = scheme == Scheme::QAM16 || scheme == Scheme::QAM32 || scheme == Scheme::QAM64;

  c[ConceptVector::Analog] = analog ? 1.0 : 0.0;
  c[ConceptVector::Amplitude] = (info.family == Family::AnalogAmplitude || qam) ? 1.0 : 0.0;
  c[ConceptVector::Phase] = info.family == Family::LinearDigital ? 1.0 : 0.0;
  c[ConceptVector::Frequency] =
      (info.family == Family::AnalogFrequency || info.family == Family::FrequencyDigital) ? 1.0 : 0.0;
  c[ConceptVector::Order] = info.symbol_order ? 1.0 / std::log2(static_cast<double>(*info.symbol_order)) : 0.0;
  return c;
}

double concept_distance(const ConceptVector& a, const ConceptVector& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < ConceptVector::kSize; ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

int nearest_concept_class(const ConceptVector& predicted, std::span<const ConceptCandidate> candidates) {
  if (candidates.empty()) throw Error(ErrorCode::EmptyCandidateSet, "no concept candidates");
  int best_label = 0;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& candidate : candidates) {
    const double d = concept_distance(predicted, candidate.concepts);
    if (d < best || (d == best && candidate.label < best_label)) {
      best = d;
      best_label = candidate.label;
    }
  }
  return best_label;
}

}  // namespace cbamc
