#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "cbamc/rng.hpp"
#include "cbamc/scheme.hpp"

namespace cbamc::sigsynth {

using cplx = std::complex<double>;

inline constexpr double kDefaultSampleRateHz = 200e3;
inline constexpr int kDefaultCaptureLength = 128;
inline constexpr double kMaxFrequencyOffset = 0.1 * 3.14159265358979323846;
/// Cutoff of the low-pass filtered analog message, cycles/sample.
inline constexpr double kMessageBandwidth = 0.125;

/// Per-capture modulation parameters. Only the fields that apply to the
/// scheme are populated; validate() enforces that.
struct GenerationParams {
  Scheme scheme = Scheme::BPSK;
  std::optional<int> symbol_order;
  std::optional<int> samples_per_symbol;
  std::optional<double> excess_bandwidth;
  std::optional<int> symbol_overlap;
  std::optional<double> carrier_spacing_hz;
  std::optional<double> gaussian_beta;
  std::optional<double> modulation_index;
  double nominal_sample_rate_hz = kDefaultSampleRateHz;

  bool operator==(const GenerationParams&) const = default;
};

struct ChannelSpec {
  int snr_db = 0;
  double freq_offset_rad = 0.0;  // radians/sample, constant across the capture
  double phase_offset_rad = 0.0;
  double channel_gain = 1.0;

  bool operator==(const ChannelSpec&) const = default;
};

struct IQCapture {
  std::vector<cplx> samples;
  GenerationParams params;
  std::optional<ChannelSpec> channel;  // absent for noise-free captures

  std::size_t n_samples() const { return samples.size(); }
};

struct SynthConfig {
  double nominal_sample_rate_hz = kDefaultSampleRateHz;
  int n_samples = kDefaultCaptureLength;
};

/// Throws Error(InvalidParameter) if a field is missing, present when it
/// does not apply, or outside the supported range.
void validate(const GenerationParams& params);

/// Draws every randomized parameter of `scheme` from its generation table.
GenerationParams draw_params(Scheme scheme, Rng& rng, const SynthConfig& config = {});

/// Root-raised-cosine taps, 2*overlap*sps + 1 long, unit energy.
std::vector<double> design_rrc_filter(double beta, int samples_per_symbol, int overlap_symbols);

/// Unit-average-power constellation for a linear scheme, indexed by bit label.
/// PSK and square QAM are Gray mapped; 32QAM is the cross constellation in
/// row-major label order.
std::vector<cplx> constellation(Scheme scheme);

IQCapture modulate_linear(const GenerationParams& params, int n_samples, Rng& rng);
IQCapture modulate_frequency(const GenerationParams& params, int n_samples, Rng& rng);
IQCapture modulate_analog(const GenerationParams& params, int n_samples, Rng& rng);

/// Analog modulation of a caller-supplied message (|m| <= 1). The length of
/// the message sets the capture length.
IQCapture modulate_analog_message(const GenerationParams& params, std::span<const double> message);

/// Band-limited random message: white Gaussian noise low-pass filtered to
/// kMessageBandwidth, peak-normalized to |m| <= 1.
std::vector<double> random_message(int n_samples, Rng& rng);

IQCapture synthesize_awgn(int n_samples, Rng& rng);

/// Dispatches on the scheme family. Output is noise-free (AWGN aside).
IQCapture modulate(const GenerationParams& params, int n_samples, Rng& rng);

/// Applies frequency offset and calibrated complex AWGN to a noise-free
/// capture. Noise power is set relative to the measured clean power.
IQCapture apply_channel(const IQCapture& clean, const ChannelSpec& channel, Rng& rng);

/// Gamma_s = 10 log10( sum|s - nu|^2 / sum|nu|^2 ).
double measured_snr_db(std::span<const cplx> received, std::span<const cplx> noise);

/// Full capture pipeline from a single seed: params, channel draw,
/// modulation, impairments. The AWGN class gets the rotation but no added
/// noise, so its snr_db is recorded but inert.
struct CaptureRequest {
  Scheme scheme = Scheme::BPSK;
  std::vector<int> snr_choices;  // snr drawn uniformly from this list
  SynthConfig config;
};
IQCapture synthesize_capture(const CaptureRequest& request, std::uint64_t seed);

}  // namespace cbamc::sigsynth
