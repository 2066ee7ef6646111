#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "rcbf/block.hpp"
#include "rcbf/model.hpp"

namespace rcbf {

struct FirFilter {
  std::vector<std::complex<double>> taps;
  /// Output lag (in input samples) of the filter's reference point.
  double group_delay_samples = 0;
  bool normalized = false;
};

/// Hamming-windowed sinc, cutoff given as a fraction of Nyquist, unity peak gain.
FirFilter design_lowpass(uint32_t tap_count, double cutoff_fraction);

/// Matched filter for a Tukey(0.2)-tapered linear chirp, shifted to baseband by
/// `demodulation_freq`. Doubles as the demodulation low-pass. Peak lag is tap_count - 1.
FirFilter design_matched(const ChirpSpec& chirp, double sampling_freq, double demodulation_freq,
                         uint32_t tap_count);

/// Matched filter for an arbitrary sampled transmit waveform (real samples at `sampling_freq`).
FirFilter design_matched_waveform(std::span<const double> waveform, double sampling_freq,
                                  double demodulation_freq);

/// Type-III FIR Hilbert transformer (odd tap count), Hamming windowed, unity peak gain.
FirFilter fir_hilbert(uint32_t tap_count);

FirFilter design_filter(const FilterSpec& spec, double sampling_freq, double demodulation_freq);

/// H(f) = sum_k h[k] exp(-j 2 pi f k) with f in cycles/sample.
std::complex<double> frequency_response(const FirFilter& filter, double f);
/// max |H(f)| over an evenly spaced grid on [-0.5, 0.5).
double peak_gain(const FirFilter& filter, std::size_t grid_points = 4096);

/// Tukey window evaluated at x in [0, 1]; zero outside.
double tukey(double x, double alpha);

/// Complex baseband samples of the Tukey-tapered linear chirp at rate `sampling_freq`.
std::vector<std::complex<double>> chirp_baseband(const ChirpSpec& chirp, double sampling_freq,
                                                 double demodulation_freq);

/// Round half away from zero, then saturate.
int16_t to_int16(double v);

struct DemodOptions {
  /// Mixing frequency; must be 0 for complex input.
  double demodulation_freq = 0;
  uint32_t decimation_factor = 1;
  Layout output_layout = Layout::SampleMajor;
  /// Float32Complex or Int16Complex.
  SampleFormat output_format = SampleFormat::Float32Complex;
  unsigned workers = 1;
};

using ComplexBlock = std::variant<Block<cf32>, Block<ci16>>;

struct DemodResult {
  ComplexBlock block;
  AcquisitionDescriptor descriptor;
  /// Non-fatal problems such as decimating below the filtered signal's Nyquist rate.
  std::vector<Violation> warnings;
};

/// Frozen demodulation kernel: mixing phasors, single-precision taps and output geometry are
/// resolved once and reused for every frame of the same shape.
class DemodPlan {
 public:
  DemodPlan(const AcquisitionDescriptor& input, const FirFilter& filter, const DemodOptions& options);

  DemodResult run(const RfFrame& frame) const;

  const AcquisitionDescriptor& input_descriptor() const { return input_; }
  const AcquisitionDescriptor& output_descriptor() const { return output_; }
  const std::vector<Violation>& warnings() const { return warnings_; }

  /// Samples per evaluation block; each block loads block + taps - 1 inputs once.
  static constexpr uint32_t kBlock = 128;

 private:
  template <class In, class Out>
  void run_typed(const std::vector<In>& in, Block<Out>& out) const;

  AcquisitionDescriptor input_;
  AcquisitionDescriptor output_;
  DemodOptions options_;
  std::vector<cf32> taps_;
  std::vector<cf32> phasors_;
  bool mix_ = false;
  uint32_t out_samples_ = 0;
  std::vector<Violation> warnings_;
};

/// y[m] = sum_k h[k] s[n-k] exp(-j 2 pi fd (n-k) / fs), n = m * decimation; zero history before
/// sample 0. Throws std::invalid_argument for complex input with nonzero mixing.
DemodResult demodulate(const RfFrame& frame, const FirFilter& filter, const DemodOptions& options);

/// Unpacks 4x-carrier quadrature sampling: out[m] = (-1)^m (s[2m] - j s[2m+1]).
RfFrame quadrature_unpack_ns200(const RfFrame& frame);

/// x[n] + j * hilbert(x)[n], with the transformer's delay compensated.
std::vector<cf32> analytic_signal(std::span<const float> x, const FirFilter& hilbert);

}  // namespace rcbf
