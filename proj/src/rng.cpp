#include "cbamc/rng.hpp"

#include <cmath>
#include <numbers>

namespace cbamc {

int Rng::uniform_int(int lo, int hi) {
  const auto span = static_cast<double>(hi) - static_cast<double>(lo) + 1.0;
  const int offset = static_cast<int>(std::floor(uniform() * span));
  return lo + offset;
}

double Rng::normal() {
  if (has_cached_normal_) {
    has_cached_normal_ = false;
    return cached_normal_;
  }
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  cached_normal_ = radius * std::sin(angle);
  has_cached_normal_ = true;
  return radius * std::cos(angle);
}

}  // namespace cbamc
