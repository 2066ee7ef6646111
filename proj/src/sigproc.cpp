#include "rcbf/sigproc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <type_traits>

#include "rcbf/parallel.hpp"

namespace rcbf {

namespace {

constexpr double kPi = std::numbers::pi;

double hamming(std::size_t n, std::size_t count) {
  if (count == 1) return 1.0;
  return 0.54 - 0.46 * std::cos(2 * kPi * static_cast<double>(n) / static_cast<double>(count - 1));
}

double sinc(double x) {
  if (x == 0) return 1.0;
  return std::sin(kPi * x) / (kPi * x);
}

// Peak |H| located on a fine grid and refined by golden-section search, so the result bounds
// the response on any coarser grid.
double refined_peak_gain(const FirFilter& f) {
  constexpr std::size_t kGrid = 16384;
  double best = -1;
  double best_f = 0;
  for (std::size_t i = 0; i < kGrid; ++i) {
    const double fr = -0.5 + static_cast<double>(i) / kGrid;
    const double g = std::abs(frequency_response(f, fr));
    if (g > best) {
      best = g;
      best_f = fr;
    }
  }
  double a = best_f - 1.0 / kGrid;
  double b = best_f + 1.0 / kGrid;
  const double phi = (std::sqrt(5.0) - 1) / 2;
  for (int it = 0; it < 60; ++it) {
    const double c = b - phi * (b - a);
    const double d = a + phi * (b - a);
    if (std::abs(frequency_response(f, c)) > std::abs(frequency_response(f, d))) {
      b = d;
    } else {
      a = c;
    }
  }
  return std::max(best, std::abs(frequency_response(f, 0.5 * (a + b))));
}

void normalize(FirFilter& f) {
  const double peak = refined_peak_gain(f);
  if (peak > 0) {
    for (auto& t : f.taps) t /= peak;
  }
  f.normalized = true;
}

// Full-rate width (Hz) of the band where the normalized response is at least -6 dB.
double passband_width_hz(const std::vector<cf32>& taps, double fs) {
  constexpr std::size_t kGrid = 4096;
  FirFilter f;
  f.taps.assign(taps.begin(), taps.end());
  const double peak = peak_gain(f, kGrid);
  if (peak <= 0) return 0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < kGrid; ++i) {
    const double fr = -0.5 + static_cast<double>(i) / kGrid;
    if (std::abs(frequency_response(f, fr)) >= 0.5 * peak) ++count;
  }
  return fs * static_cast<double>(count) / kGrid;
}

inline void cmac(float& re, float& im, cf32 a, cf32 b) {
  re += a.real() * b.real() - a.imag() * b.imag();
  im += a.real() * b.imag() + a.imag() * b.real();
}

inline cf32 load_sample(int16_t v) { return {static_cast<float>(v), 0.0f}; }
inline cf32 load_sample(float v) { return {v, 0.0f}; }
inline cf32 load_sample(ci16 v) { return {static_cast<float>(v.re), static_cast<float>(v.im)}; }
inline cf32 load_sample(cf32 v) { return v; }

template <class Out>
Out store_sample(float re, float im) {
  if constexpr (std::is_same_v<Out, cf32>) {
    return {re, im};
  } else {
    return ci16{to_int16(re), to_int16(im)};
  }
}

}  // namespace

double tukey(double x, double alpha) {
  if (x < 0 || x > 1) return 0.0;
  if (alpha <= 0) return 1.0;
  if (x < alpha / 2) return 0.5 * (1 + std::cos(2 * kPi / alpha * (x - alpha / 2)));
  if (x > 1 - alpha / 2) return 0.5 * (1 + std::cos(2 * kPi / alpha * (x - 1 + alpha / 2)));
  return 1.0;
}

int16_t to_int16(double v) {
  if (std::isnan(v)) return 0;
  const double r = v >= 0 ? std::floor(v + 0.5) : -std::floor(-v + 0.5);
  return static_cast<int16_t>(std::clamp(r, -32768.0, 32767.0));
}

std::complex<double> frequency_response(const FirFilter& filter, double f) {
  std::complex<double> acc = 0;
  for (std::size_t k = 0; k < filter.taps.size(); ++k) {
    acc += filter.taps[k] * std::polar(1.0, -2 * kPi * f * static_cast<double>(k));
  }
  return acc;
}

double peak_gain(const FirFilter& filter, std::size_t grid_points) {
  double best = 0;
  for (std::size_t i = 0; i < grid_points; ++i) {
    const double fr = -0.5 + static_cast<double>(i) / static_cast<double>(grid_points);
    best = std::max(best, std::abs(frequency_response(filter, fr)));
  }
  return best;
}

FirFilter design_lowpass(uint32_t tap_count, double cutoff_fraction) {
  if (tap_count < 3) throw std::invalid_argument("design_lowpass: tap_count must be >= 3");
  if (!(cutoff_fraction > 0 && cutoff_fraction < 1))
    throw std::invalid_argument("design_lowpass: cutoff_fraction must be in (0, 1)");
  FirFilter f;
  f.taps.resize(tap_count);
  const double fc = cutoff_fraction / 2;  // cycles/sample
  const double centre = 0.5 * (tap_count - 1.0);
  for (uint32_t n = 0; n < tap_count; ++n) {
    f.taps[n] = 2 * fc * sinc(2 * fc * (n - centre)) * hamming(n, tap_count);
  }
  f.group_delay_samples = centre;
  normalize(f);
  return f;
}

std::vector<std::complex<double>> chirp_baseband(const ChirpSpec& chirp, double sampling_freq,
                                                 double demodulation_freq) {
  const auto length = static_cast<std::size_t>(std::floor(chirp.duration * sampling_freq + 1e-9)) + 1;
  const double sweep = (chirp.f_end - chirp.f_start) / chirp.duration;
  std::vector<std::complex<double>> out(length);
  for (std::size_t n = 0; n < length; ++n) {
    const double t = static_cast<double>(n) / sampling_freq;
    const double phase = 2 * kPi * (chirp.f_start * t + 0.5 * sweep * t * t - demodulation_freq * t);
    out[n] = tukey(t / chirp.duration, 0.2) * std::polar(1.0, phase);
  }
  return out;
}

FirFilter design_matched(const ChirpSpec& chirp, double sampling_freq, double demodulation_freq,
                         uint32_t tap_count) {
  if (!(chirp.duration > 0) || !(sampling_freq > 0))
    throw std::invalid_argument("design_matched: duration and sampling_freq must be positive");
  const auto c = chirp_baseband(chirp, sampling_freq, demodulation_freq);
  if (c.size() > tap_count)
    throw std::invalid_argument("design_matched: chirp of " + std::to_string(c.size()) +
                                " samples exceeds tap window of " + std::to_string(tap_count));
  FirFilter f;
  f.taps.assign(tap_count, 0.0);
  for (std::size_t k = 0; k < tap_count; ++k) {
    const std::size_t src = tap_count - 1 - k;
    if (src < c.size()) f.taps[k] = std::conj(c[src]);
  }
  f.group_delay_samples = tap_count - 1.0;
  normalize(f);
  return f;
}

FirFilter design_matched_waveform(std::span<const double> waveform, double sampling_freq,
                                  double demodulation_freq) {
  if (waveform.empty()) throw std::invalid_argument("design_matched_waveform: empty waveform");
  const std::size_t n = waveform.size();
  FirFilter f;
  f.taps.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t src = n - 1 - k;
    const double phase = -2 * kPi * demodulation_freq * static_cast<double>(src) / sampling_freq;
    f.taps[k] = std::conj(waveform[src] * std::polar(1.0, phase));
  }
  f.group_delay_samples = static_cast<double>(n - 1);
  normalize(f);
  return f;
}

FirFilter fir_hilbert(uint32_t tap_count) {
  if (tap_count % 2 == 0 || tap_count < 3)
    throw std::invalid_argument("fir_hilbert: tap_count must be odd and >= 3");
  FirFilter f;
  f.taps.assign(tap_count, 0.0);
  const int centre = static_cast<int>(tap_count / 2);
  for (int k = 1; k <= centre; k += 2) {
    const double w = hamming(static_cast<std::size_t>(centre + k), tap_count);
    const double v = 2.0 / (kPi * k) * w;
    f.taps[static_cast<std::size_t>(centre + k)] = v;
    f.taps[static_cast<std::size_t>(centre - k)] = -v;
  }
  f.group_delay_samples = centre;
  normalize(f);
  return f;
}

FirFilter design_filter(const FilterSpec& spec, double sampling_freq, double demodulation_freq) {
  switch (spec.kind) {
    case FilterSpec::Kind::LowPass: return design_lowpass(spec.tap_count, spec.passband_fraction);
    case FilterSpec::Kind::MatchedChirp:
      return design_matched(spec.chirp, sampling_freq, demodulation_freq, spec.tap_count);
    case FilterSpec::Kind::MatchedWaveform:
      return design_matched_waveform(spec.waveform, sampling_freq, demodulation_freq);
  }
  throw std::invalid_argument("unknown filter kind");
}

DemodPlan::DemodPlan(const AcquisitionDescriptor& input, const FirFilter& filter,
                     const DemodOptions& options)
    : input_(input), output_(input), options_(options) {
  if (filter.taps.empty()) throw std::invalid_argument("demodulate: empty filter");
  if (options.decimation_factor < 1) throw std::invalid_argument("demodulate: decimation_factor must be >= 1");
  if (options.output_format != SampleFormat::Float32Complex &&
      options.output_format != SampleFormat::Int16Complex)
    throw std::invalid_argument("demodulate: output format must be complex");
  if (is_complex(input.format) && options.demodulation_freq != 0)
    throw std::invalid_argument("demodulate: complex input with nonzero demodulation requested");

  taps_.reserve(filter.taps.size());
  for (const auto& t : filter.taps) taps_.emplace_back(static_cast<float>(t.real()), static_cast<float>(t.imag()));

  mix_ = options.demodulation_freq != 0;
  if (mix_) {
    phasors_.resize(input.sample_count);
    const double w = -2 * kPi * options.demodulation_freq / input.sampling_freq;
    for (uint32_t n = 0; n < input.sample_count; ++n) {
      const double ph = std::remainder(w * n, 2 * kPi);
      phasors_[n] = {static_cast<float>(std::cos(ph)), static_cast<float>(std::sin(ph))};
    }
  }

  const uint32_t d = options.decimation_factor;
  out_samples_ = (input.sample_count + d - 1) / d;
  output_.sample_count = out_samples_;
  output_.format = options.output_format;
  output_.sampling_freq = input.sampling_freq / d;
  output_.time_offset = input.time_offset - filter.group_delay_samples / input.sampling_freq;
  if (!is_complex(input.format)) output_.demodulation_freq = options.demodulation_freq;
  output_.quadrature_sampled = false;

  const double band = passband_width_hz(taps_, input.sampling_freq);
  if (output_.sampling_freq < band) {
    warnings_.push_back({"decimation_factor", "decimation below post-filter Nyquist bound (" +
                                                  std::to_string(output_.sampling_freq) + " Hz < " +
                                                  std::to_string(band) + " Hz)"});
  }
}

template <class In, class Out>
void DemodPlan::run_typed(const std::vector<In>& in, Block<Out>& out) const {
  const uint32_t S = input_.sample_count;
  const uint32_t C = input_.channel_count;
  const std::size_t lines = std::size_t{C} * input_.transmit_count;
  const std::size_t taps = taps_.size();
  const uint32_t d = options_.decimation_factor;

  parallel_for(lines, options_.workers, [&](std::size_t line) {
    const auto c = static_cast<uint32_t>(line % C);
    const auto t = static_cast<uint32_t>(line / C);
    const In* src = in.data() + line * S;
    std::vector<cf32> window(kBlock + taps - 1);
    for (uint32_t b = 0; b < S; b += kBlock) {
      const uint32_t end = std::min<uint32_t>(b + kBlock, S);
      uint32_t m = (b + d - 1) / d;
      if (std::size_t{m} * d >= end) continue;
      // History before sample 0 is zero.
      for (std::size_t i = 0; i < window.size(); ++i) {
        const int64_t n = static_cast<int64_t>(b) - static_cast<int64_t>(taps - 1) + static_cast<int64_t>(i);
        if (n < 0 || n >= S) {
          window[i] = {0, 0};
          continue;
        }
        cf32 v = load_sample(src[n]);
        if (mix_) {
          const cf32 p = phasors_[static_cast<std::size_t>(n)];
          v = {v.real() * p.real() - v.imag() * p.imag(), v.real() * p.imag() + v.imag() * p.real()};
        }
        window[i] = v;
      }
      for (; std::size_t{m} * d < end; ++m) {
        const std::size_t base = std::size_t{m} * d - b + taps - 1;
        float re = 0, im = 0;
        for (std::size_t k = 0; k < taps; ++k) cmac(re, im, taps_[k], window[base - k]);
        out.at(m, c, t) = store_sample<Out>(re, im);
      }
    }
  });
}

DemodResult DemodPlan::run(const RfFrame& frame) const {
  const auto& fd = frame.descriptor;
  if (shape_of(fd) != shape_of(input_) || fd.format != input_.format)
    throw std::invalid_argument("demodulate: frame shape/format does not match plan");
  if (sample_buffer_size(frame.data) != fd.total_samples() || sample_buffer_format(frame.data) != fd.format)
    throw std::invalid_argument("demodulate: frame data does not match descriptor");

  const BlockShape shape{out_samples_, input_.channel_count, input_.transmit_count};
  DemodResult result;
  result.descriptor = output_;
  result.warnings = warnings_;
  auto run_into = [&](auto& block) {
    std::visit([&](const auto& v) { run_typed(v, block); }, frame.data);
  };
  if (options_.output_format == SampleFormat::Int16Complex) {
    Block<ci16> b(shape, options_.output_layout);
    run_into(b);
    result.block = std::move(b);
  } else {
    Block<cf32> b(shape, options_.output_layout);
    run_into(b);
    result.block = std::move(b);
  }
  return result;
}

DemodResult demodulate(const RfFrame& frame, const FirFilter& filter, const DemodOptions& options) {
  return DemodPlan(frame.descriptor, filter, options).run(frame);
}

RfFrame quadrature_unpack_ns200(const RfFrame& frame) {
  const auto& d = frame.descriptor;
  if (is_complex(d.format)) throw std::invalid_argument("quadrature_unpack_ns200: input must be real");
  if (d.sample_count % 2 != 0) throw std::invalid_argument("quadrature_unpack_ns200: odd sample_count");
  if (std::abs(d.sampling_freq - 4 * d.demodulation_freq) > 0.01 * 4 * d.demodulation_freq)
    throw std::invalid_argument("quadrature_unpack_ns200: sampling_freq must be 4x demodulation_freq");
  if (sample_buffer_size(frame.data) != d.total_samples())
    throw std::invalid_argument("quadrature_unpack_ns200: frame data does not match descriptor");

  RfFrame out;
  out.frame_id = frame.frame_id;
  out.descriptor = d;
  out.descriptor.sample_count = d.sample_count / 2;
  out.descriptor.sampling_freq = d.sampling_freq / 2;
  out.descriptor.quadrature_sampled = false;
  const std::size_t lines = std::size_t{d.channel_count} * d.transmit_count;
  const uint32_t half = d.sample_count / 2;

  std::visit(
      [&](const auto& in) {
        using T = typename std::decay_t<decltype(in)>::value_type;
        if constexpr (std::is_same_v<T, int16_t>) {
          out.descriptor.format = SampleFormat::Int16Complex;
          std::vector<ci16> v(lines * half);
          for (std::size_t l = 0; l < lines; ++l) {
            for (uint32_t m = 0; m < half; ++m) {
              const double sign = (m % 2 == 0) ? 1.0 : -1.0;
              const int16_t a = in[l * d.sample_count + 2 * m];
              const int16_t b = in[l * d.sample_count + 2 * m + 1];
              v[l * half + m] = {to_int16(sign * a), to_int16(-sign * b)};
            }
          }
          out.data = std::move(v);
        } else if constexpr (std::is_same_v<T, float>) {
          out.descriptor.format = SampleFormat::Float32Complex;
          std::vector<cf32> v(lines * half);
          for (std::size_t l = 0; l < lines; ++l) {
            for (uint32_t m = 0; m < half; ++m) {
              const float sign = (m % 2 == 0) ? 1.0f : -1.0f;
              const float a = in[l * d.sample_count + 2 * m];
              const float b = in[l * d.sample_count + 2 * m + 1];
              v[l * half + m] = {sign * a, -sign * b};
            }
          }
          out.data = std::move(v);
        } else {
          throw std::invalid_argument("quadrature_unpack_ns200: input must be real");
        }
      },
      frame.data);
  return out;
}

std::vector<cf32> analytic_signal(std::span<const float> x, const FirFilter& hilbert) {
  const std::size_t n = x.size();
  const std::size_t taps = hilbert.taps.size();
  const auto delay = static_cast<std::ptrdiff_t>(std::llround(hilbert.group_delay_samples));
  std::vector<cf32> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0;
    for (std::size_t k = 0; k < taps; ++k) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(i) + delay - static_cast<std::ptrdiff_t>(k);
      if (src >= 0 && src < static_cast<std::ptrdiff_t>(n)) acc += hilbert.taps[k].real() * x[static_cast<std::size_t>(src)];
    }
    out[i] = {x[i], static_cast<float>(acc)};
  }
  return out;
}

}  // namespace rcbf
