#include "cbamc/sigsynth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "cbamc/dsp.hpp"
#include "cbamc/error.hpp"

namespace cbamc::sigsynth {

namespace {

constexpr double kPi = std::numbers::pi;

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorCode::InvalidParameter, what); }

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

template <typename T>
T pick(Rng& rng, std::initializer_list<T> choices) {
  const int i = rng.uniform_int(0, static_cast<int>(choices.size()) - 1);
  return *(choices.begin() + i);
}

void require(bool ok, const GenerationParams& p, const char* what) {
  if (!ok) invalid(std::string(to_string(p.scheme)) + ": " + what);
}

void normalize_power(std::vector<cplx>& x) {
  const double power = dsp::mean_power(x);
  if (power <= 0.0) return;
  const double scale = 1.0 / std::sqrt(power);
  for (auto& v : x) v *= scale;
}

std::vector<cplx> psk_points(int order) {
  std::vector<cplx> points(order);
  for (int label = 0; label < order; ++label) {
    // Position p carries label gray(p); invert that to place each label.
    int position = 0;
    for (int g = label; g != 0; g >>= 1) position ^= g;
    const double angle = 2.0 * kPi * position / order;
    points[label] = std::polar(1.0, angle);
  }
  return points;
}

std::vector<cplx> square_qam_points(int order) {
  const int side = static_cast<int>(std::lround(std::sqrt(order)));
  const int bits_per_axis = static_cast<int>(std::lround(std::log2(side)));
  std::vector<cplx> points(order);
  auto level = [side](int axis_label) {
    int position = 0;
    for (int g = axis_label; g != 0; g >>= 1) position ^= g;
    return static_cast<double>(2 * position - (side - 1));
  };
  for (int label = 0; label < order; ++label) {
    const int i_label = label >> bits_per_axis;
    const int q_label = label & (side - 1);
    points[label] = {level(i_label), level(q_label)};
  }
  return points;
}

std::vector<cplx> cross_qam32_points() {
  std::vector<cplx> points;
  points.reserve(32);
  for (int row = 0; row < 6; ++row) {
    for (int col = 0; col < 6; ++col) {
      const bool corner = (row == 0 || row == 5) && (col == 0 || col == 5);
      if (corner) continue;
      points.emplace_back(2.0 * col - 5.0, 5.0 - 2.0 * row);
    }
  }
  return points;
}

std::vector<double> gaussian_frequency_pulse(int sps, int span_symbols, double bt) {
  const int half = span_symbols * sps;
  const double sigma = std::sqrt(std::log(2.0)) / (2.0 * kPi * bt);
  std::vector<double> g(2 * half + 1);
  double sum = 0.0;
  for (int i = 0; i <= 2 * half; ++i) {
    const double t = static_cast<double>(i - half) / sps;
    g[i] = std::exp(-t * t / (2.0 * sigma * sigma));
    sum += g[i];
  }
  for (auto& v : g) v /= sum;
  const std::vector<double> rect(sps, 1.0);
  return dsp::convolve(rect, g);
}

}  // namespace

void validate(const GenerationParams& p) {
  const SchemeInfo& info = scheme_info(p.scheme);
  require(p.nominal_sample_rate_hz > 0.0, p, "nominal sample rate must be positive");

  const bool digital = is_digital(info.family);
  require(digital == p.symbol_order.has_value(), p, "symbol order presence");
  require(digital == p.samples_per_symbol.has_value(), p, "samples per symbol presence");
  if (digital) {
    require(is_power_of_two(*p.symbol_order), p, "symbol order must be a power of two");
    require(*p.symbol_order == *info.symbol_order, p, "symbol order does not match scheme");
    require(*p.samples_per_symbol >= 2, p, "samples per symbol must be >= 2");
  }

  const bool linear = info.family == Family::LinearDigital;
  require(linear == p.excess_bandwidth.has_value(), p, "excess bandwidth presence");
  if (linear) {
    require(*p.excess_bandwidth > 0.0 && *p.excess_bandwidth <= 1.0, p, "excess bandwidth out of (0, 1]");
  }

  const bool frequency = info.family == Family::FrequencyDigital;
  const bool gfsk = p.scheme == Scheme::GFSK;
  require((linear || gfsk) == p.symbol_overlap.has_value(), p, "symbol overlap presence");
  if (p.symbol_overlap) require(*p.symbol_overlap >= 1, p, "symbol overlap must be >= 1");
  require(frequency == p.carrier_spacing_hz.has_value(), p, "carrier spacing presence");
  if (frequency) {
    require(*p.carrier_spacing_hz > 0.0, p, "carrier spacing must be positive");
    require(*p.carrier_spacing_hz / p.nominal_sample_rate_hz < 0.5, p, "carrier spacing at or above Nyquist");
  }
  require(gfsk == p.gaussian_beta.has_value(), p, "gaussian beta presence");
  if (gfsk) require(*p.gaussian_beta > 0.0, p, "gaussian beta must be positive");

  const bool analog = info.family == Family::AnalogAmplitude || info.family == Family::AnalogFrequency;
  require(analog == p.modulation_index.has_value(), p, "modulation index presence");
  if (analog) require(*p.modulation_index > 0.0, p, "modulation index must be positive");
}

GenerationParams draw_params(Scheme scheme, Rng& rng, const SynthConfig& config) {
  const SchemeInfo& info = scheme_info(scheme);
  GenerationParams p;
  p.scheme = scheme;
  p.nominal_sample_rate_hz = config.nominal_sample_rate_hz;
  if (is_digital(info.family)) {
    p.symbol_order = info.symbol_order;
    p.samples_per_symbol = pick(rng, {4, 8});
  }
  switch (info.family) {
    case Family::LinearDigital:
      p.excess_bandwidth = pick(rng, {0.35, 0.5});
      p.symbol_overlap = pick(rng, {3, 5});
      break;
    case Family::FrequencyDigital:
      if (scheme == Scheme::MSK) {
        p.carrier_spacing_hz = 2500.0;
      } else {
        p.carrier_spacing_hz = pick(rng, {5000.0, 75000.0});
      }
      if (scheme == Scheme::GFSK) {
        p.symbol_overlap = pick(rng, {2, 4});
        p.gaussian_beta = pick(rng, {0.3, 0.5});
      }
      break;
    case Family::AnalogAmplitude:
      p.modulation_index = rng.uniform(0.5, 0.9);
      break;
    case Family::AnalogFrequency:
      p.modulation_index = scheme == Scheme::FM_WB ? rng.uniform(0.825, 1.88) : rng.uniform(0.05, 0.4);
      break;
    case Family::Noise:
      break;
  }
  return p;
}

std::vector<double> design_rrc_filter(double beta, int samples_per_symbol, int overlap_symbols) {
  if (!(beta > 0.0 && beta <= 1.0)) invalid("rrc beta must be in (0, 1]");
  if (samples_per_symbol < 2) invalid("rrc samples per symbol must be >= 2");
  if (overlap_symbols < 1) invalid("rrc overlap must be >= 1");

  const int half = overlap_symbols * samples_per_symbol;
  std::vector<double> h(2 * half + 1);
  const double singular_t = 1.0 / (4.0 * beta);
  for (int i = 0; i <= 2 * half; ++i) {
    const double t = static_cast<double>(i - half) / samples_per_symbol;
    double v;
    if (t == 0.0) {
      v = 1.0 - beta + 4.0 * beta / kPi;
    } else if (std::abs(std::abs(t) - singular_t) < 1e-12) {
      const double a = kPi / (4.0 * beta);
      v = beta / std::numbers::sqrt2 * ((1.0 + 2.0 / kPi) * std::sin(a) + (1.0 - 2.0 / kPi) * std::cos(a));
    } else {
      const double num = std::sin(kPi * t * (1.0 - beta)) + 4.0 * beta * t * std::cos(kPi * t * (1.0 + beta));
      const double den = kPi * t * (1.0 - (4.0 * beta * t) * (4.0 * beta * t));
      v = num / den;
    }
    h[i] = v;
  }
  double energy = 0.0;
  for (double v : h) energy += v * v;
  const double scale = 1.0 / std::sqrt(energy);
  for (auto& v : h) v *= scale;
  return h;
}

std::vector<cplx> constellation(Scheme scheme) {
  std::vector<cplx> points;
  switch (scheme) {
    case Scheme::BPSK: points = psk_points(2); break;
    case Scheme::QPSK: points = psk_points(4); break;
    case Scheme::PSK8: points = psk_points(8); break;
    case Scheme::PSK16: points = psk_points(16); break;
    case Scheme::QAM16: points = square_qam_points(16); break;
    case Scheme::QAM64: points = square_qam_points(64); break;
    case Scheme::QAM32: points = cross_qam32_points(); break;
    default: invalid(std::string(to_string(scheme)) + " has no constellation");
  }
  normalize_power(points);
  return points;
}

IQCapture modulate_linear(const GenerationParams& params, int n_samples, Rng& rng) {
  if (scheme_info(params.scheme).family != Family::LinearDigital) {
    invalid(std::string(to_string(params.scheme)) + " is not linear-digital");
  }
  validate(params);
  const int sps = *params.samples_per_symbol;
  if (n_samples < sps) invalid("capture shorter than one symbol");

  const auto points = constellation(params.scheme);
  const auto h = design_rrc_filter(*params.excess_bandwidth, sps, *params.symbol_overlap);
  const int delay = *params.symbol_overlap * sps;
  const int n_symbols = (n_samples + 2 * delay + sps - 1) / sps + 1;

  std::vector<cplx> symbols(n_symbols);
  const int order = static_cast<int>(points.size());
  for (auto& s : symbols) s = points[rng.uniform_int(0, order - 1)];

  // Full-convolution index 2*delay is the first sample past the warm-up of
  // the delay-compensated output.
  std::vector<cplx> out(n_samples);
  const int taps = static_cast<int>(h.size());
  for (int i = 0; i < n_samples; ++i) {
    const int n = 2 * delay + i;
    cplx acc{0.0, 0.0};
    const int k_lo = std::max(0, (n - taps + 1 + sps - 1) / sps);
    const int k_hi = std::min(n_symbols - 1, n / sps);
    for (int k = k_lo; k <= k_hi; ++k) acc += symbols[k] * h[n - k * sps];
    out[i] = acc;
  }
  normalize_power(out);
  return IQCapture{std::move(out), params, std::nullopt};
}

IQCapture modulate_frequency(const GenerationParams& params, int n_samples, Rng& rng) {
  if (scheme_info(params.scheme).family != Family::FrequencyDigital) {
    invalid(std::string(to_string(params.scheme)) + " is not frequency-digital");
  }
  validate(params);
  const int sps = *params.samples_per_symbol;
  if (n_samples < 1) invalid("capture length must be positive");

  // MSK is defined by h = 0.5: the tone offset is a quarter cycle per symbol.
  const double deviation = params.scheme == Scheme::MSK
                               ? 1.0 / (4.0 * sps)
                               : (*params.carrier_spacing_hz / 2.0) / params.nominal_sample_rate_hz;

  std::vector<double> pulse;
  int warmup = 0;
  if (params.scheme == Scheme::GFSK) {
    pulse = gaussian_frequency_pulse(sps, *params.symbol_overlap, *params.gaussian_beta);
    warmup = 2 * *params.symbol_overlap * sps;
  } else {
    pulse.assign(sps, 1.0);
  }

  const int total = n_samples + warmup;
  const int n_symbols = (total + sps - 1) / sps + 1;
  std::vector<double> freq(total, 0.0);
  for (int k = 0; k < n_symbols; ++k) {
    const double a = rng.coin() ? 1.0 : -1.0;
    for (std::size_t j = 0; j < pulse.size(); ++j) {
      const std::size_t n = static_cast<std::size_t>(k) * sps + j;
      if (n >= freq.size()) break;
      freq[n] += a * deviation * pulse[j];
    }
  }

  std::vector<cplx> out(n_samples);
  double phase = 0.0;
  for (int n = 0; n < total; ++n) {
    if (n >= warmup) out[n - warmup] = std::polar(1.0, phase);
    phase = std::remainder(phase + 2.0 * kPi * freq[n], 2.0 * kPi);
  }
  return IQCapture{std::move(out), params, std::nullopt};
}

std::vector<double> random_message(int n_samples, Rng& rng) {
  if (n_samples < 1) invalid("message length must be positive");
  constexpr int kHalf = 32;
  const auto h = dsp::lowpass_fir(kMessageBandwidth, kHalf);
  std::vector<double> white(n_samples + 2 * kHalf);
  for (auto& v : white) v = rng.normal();
  std::vector<double> m(n_samples, 0.0);
  double peak = 0.0;
  for (int i = 0; i < n_samples; ++i) {
    double acc = 0.0;
    for (int j = 0; j <= 2 * kHalf; ++j) acc += h[j] * white[i + 2 * kHalf - j];
    m[i] = acc;
    peak = std::max(peak, std::abs(acc));
  }
  if (peak > 0.0) {
    for (auto& v : m) v /= peak;
  }
  return m;
}

IQCapture modulate_analog_message(const GenerationParams& params, std::span<const double> message) {
  const Family family = scheme_info(params.scheme).family;
  if (family != Family::AnalogAmplitude && family != Family::AnalogFrequency) {
    invalid(std::string(to_string(params.scheme)) + " is not analog");
  }
  validate(params);
  const int n = static_cast<int>(message.size());
  if (n < 1) invalid("message length must be positive");
  const double mu = *params.modulation_index;

  std::vector<cplx> out(n);
  switch (params.scheme) {
    case Scheme::AM_DSB:
      for (int i = 0; i < n; ++i) out[i] = {1.0 + mu * message[i], 0.0};
      break;
    case Scheme::AM_LSB: {
      // Keep only the negative-frequency half of mu*m: mu*(m - j H{m}).
      std::vector<cplx> a(n);
      for (int i = 0; i < n; ++i) a[i] = {mu * message[i], 0.0};
      auto spectrum = dsp::fft(a);
      const int half = n / 2;
      for (int k = 1; k < n; ++k) {
        const bool nyquist = (n % 2 == 0) && k == half;
        if (nyquist) continue;
        if (k <= (n - 1) / 2) {
          spectrum[k] = 0.0;
        } else {
          spectrum[k] *= 2.0;
        }
      }
      const auto lsb = dsp::ifft(spectrum);
      for (int i = 0; i < n; ++i) out[i] = 1.0 + lsb[i];
      break;
    }
    case Scheme::FM_NB:
    case Scheme::FM_WB: {
      const double deviation = mu * kMessageBandwidth;
      double phase = 0.0;
      for (int i = 0; i < n; ++i) {
        phase = std::remainder(phase + 2.0 * kPi * deviation * message[i], 2.0 * kPi);
        out[i] = std::polar(1.0, phase);
      }
      break;
    }
    default:
      invalid("unhandled analog scheme");
  }
  normalize_power(out);
  return IQCapture{std::move(out), params, std::nullopt};
}

IQCapture modulate_analog(const GenerationParams& params, int n_samples, Rng& rng) {
  const Family family = scheme_info(params.scheme).family;
  if (family != Family::AnalogAmplitude && family != Family::AnalogFrequency) {
    invalid(std::string(to_string(params.scheme)) + " is not analog");
  }
  const auto message = random_message(n_samples, rng);
  return modulate_analog_message(params, message);
}

IQCapture synthesize_awgn(int n_samples, Rng& rng) {
  if (n_samples < 1) invalid("capture length must be positive");
  std::vector<cplx> out(n_samples);
  const double sigma = std::sqrt(0.5);
  for (auto& v : out) {
    const double re = rng.normal();
    const double im = rng.normal();
    v = {sigma * re, sigma * im};
  }
  GenerationParams params;
  params.scheme = Scheme::AWGN;
  return IQCapture{std::move(out), params, std::nullopt};
}

IQCapture modulate(const GenerationParams& params, int n_samples, Rng& rng) {
  switch (scheme_info(params.scheme).family) {
    case Family::LinearDigital: return modulate_linear(params, n_samples, rng);
    case Family::FrequencyDigital: return modulate_frequency(params, n_samples, rng);
    case Family::AnalogAmplitude:
    case Family::AnalogFrequency: return modulate_analog(params, n_samples, rng);
    case Family::Noise: {
      auto capture = synthesize_awgn(n_samples, rng);
      capture.params = params;
      return capture;
    }
  }
  invalid("unhandled family");
}

IQCapture apply_channel(const IQCapture& clean, const ChannelSpec& channel, Rng& rng) {
  if (std::abs(channel.freq_offset_rad) > kMaxFrequencyOffset + 1e-12) {
    invalid("frequency offset outside [-0.1 pi, 0.1 pi]");
  }
  if (channel.phase_offset_rad != 0.0) invalid("phase offset must be 0");
  if (channel.channel_gain != 1.0) invalid("channel gain must be 1");
  if (clean.channel) invalid("capture already has a channel applied");

  const double signal_power = dsp::mean_power(clean.samples);
  const double noise_power = signal_power * std::pow(10.0, -channel.snr_db / 10.0);
  const double sigma = std::sqrt(noise_power / 2.0);

  IQCapture out{clean.samples, clean.params, channel};
  for (std::size_t t = 0; t < out.samples.size(); ++t) {
    const double re = rng.normal();
    const double im = rng.normal();
    const cplx rotation = std::polar(channel.channel_gain, channel.freq_offset_rad * static_cast<double>(t));
    out.samples[t] = out.samples[t] * rotation + cplx{sigma * re, sigma * im};
  }
  return out;
}

double measured_snr_db(std::span<const cplx> received, std::span<const cplx> noise) {
  if (received.size() != noise.size() || received.empty()) invalid("snr inputs must be equal-length and non-empty");
  double signal = 0.0;
  double noise_energy = 0.0;
  for (std::size_t t = 0; t < received.size(); ++t) {
    signal += std::norm(received[t] - noise[t]);
    noise_energy += std::norm(noise[t]);
  }
  return 10.0 * std::log10(signal / noise_energy);
}

IQCapture synthesize_capture(const CaptureRequest& request, std::uint64_t seed) {
  if (request.snr_choices.empty()) invalid("no snr choices");
  Rng rng(seed);
  const GenerationParams params = draw_params(request.scheme, rng, request.config);
  ChannelSpec channel;
  channel.snr_db = request.snr_choices[rng.uniform_int(0, static_cast<int>(request.snr_choices.size()) - 1)];
  channel.freq_offset_rad = rng.uniform(-kMaxFrequencyOffset, kMaxFrequencyOffset);

  IQCapture clean = modulate(params, request.config.n_samples, rng);
  if (request.scheme != Scheme::AWGN) return apply_channel(clean, channel, rng);

  for (std::size_t t = 0; t < clean.samples.size(); ++t) {
    clean.samples[t] *= std::polar(1.0, channel.freq_offset_rad * static_cast<double>(t));
  }
  clean.channel = channel;
  return clean;
}

}  // namespace cbamc::sigsynth
