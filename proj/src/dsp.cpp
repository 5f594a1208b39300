#include "cbamc/dsp.hpp"

#include <fftw3.h>

#include <cmath>
#include <cstring>
#include <mutex>
#include <numbers>

namespace cbamc::dsp {

namespace {

// FFTW's planner is not thread-safe; execution on a created plan is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

std::vector<cplx> transform(std::span<const cplx> input, int sign) {
  const int n = static_cast<int>(input.size());
  if (n == 0) return {};
  auto* buffer = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
  fftw_plan plan;
  {
    std::lock_guard lock(planner_mutex());
    plan = fftw_plan_dft_1d(n, buffer, buffer, sign, FFTW_ESTIMATE);
  }
  std::memcpy(buffer, input.data(), sizeof(fftw_complex) * n);
  fftw_execute(plan);
  std::vector<cplx> out(n);
  std::memcpy(static_cast<void*>(out.data()), buffer, sizeof(fftw_complex) * n);
  {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(buffer);
  return out;
}

}  // namespace

std::vector<cplx> fft(std::span<const cplx> input) { return transform(input, FFTW_FORWARD); }

std::vector<cplx> ifft(std::span<const cplx> input) {
  auto out = transform(input, FFTW_BACKWARD);
  const double scale = 1.0 / static_cast<double>(out.size());
  for (auto& v : out) v *= scale;
  return out;
}

std::vector<double> convolve(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) return {};
  std::vector<double> out(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  }
  return out;
}

std::vector<double> lowpass_fir(double cutoff, int half_length) {
  const int taps = 2 * half_length + 1;
  std::vector<double> h(taps);
  double sum = 0.0;
  for (int i = 0; i < taps; ++i) {
    const double t = i - half_length;
    const double sinc = t == 0.0 ? 2.0 * cutoff
                                 : std::sin(2.0 * std::numbers::pi * cutoff * t) / (std::numbers::pi * t);
    const double window = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / (taps - 1));
    h[i] = sinc * window;
    sum += h[i];
  }
  for (auto& v : h) v /= sum;
  return h;
}

double mean_power(std::span<const cplx> x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& v : x) acc += std::norm(v);
  return acc / static_cast<double>(x.size());
}

}  // namespace cbamc::dsp
