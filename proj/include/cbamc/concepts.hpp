#pragma once

#include <array>
#include <span>
#include <utility>

#include "cbamc/scheme.hpp"

namespace cbamc {

/// Five interpretable concepts predicted by the regressor:
/// analog, amplitude-modulated, phase-modulated, frequency-modulated, and
/// inverse log2 of the symbol order (0 when the order is undefined).
struct ConceptVector {
  static constexpr std::size_t kSize = 5;
  enum Head : std::size_t { Analog = 0, Amplitude = 1, Phase = 2, Frequency = 3, Order = 4 };

  std::array<double, kSize> values{};

  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
  double analog() const { return values[Analog]; }
  double amplitude() const { return values[Amplitude]; }
  double phase() const { return values[Phase]; }
  double frequency() const { return values[Frequency]; }
  double order() const { return values[Order]; }

  bool operator==(const ConceptVector&) const = default;
};

const char* head_name(std::size_t head);

ConceptVector concept_vector(Scheme scheme);

/// Euclidean distance in concept space.
double concept_distance(const ConceptVector& a, const ConceptVector& b);

struct ConceptCandidate {
  ConceptVector concepts;
  int label;
};

/// Label of the candidate nearest to `predicted`; ties go to the lowest
/// label. Throws Error(EmptyCandidateSet).
int nearest_concept_class(const ConceptVector& predicted, std::span<const ConceptCandidate> candidates);

}  // namespace cbamc
