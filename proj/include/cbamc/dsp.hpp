#pragma once

#include <complex>
#include <span>
#include <vector>

namespace cbamc::dsp {

using cplx = std::complex<double>;

/// Forward DFT (negative exponent, unnormalized). Backed by FFTW.
std::vector<cplx> fft(std::span<const cplx> input);

/// Inverse DFT, normalized by 1/N so that ifft(fft(x)) == x.
std::vector<cplx> ifft(std::span<const cplx> input);

/// Full linear convolution, length a.size() + b.size() - 1.
std::vector<double> convolve(std::span<const double> a, std::span<const double> b);

/// Hamming-windowed sinc low-pass with cutoff in cycles/sample, unit DC gain.
std::vector<double> lowpass_fir(double cutoff, int half_length);

/// Mean of |x|^2.
double mean_power(std::span<const cplx> x);

}  // namespace cbamc::dsp
