#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "../support/oracles.hpp"
#include "rcbf/sigproc.hpp"

using namespace rcbf;
using namespace rcbf::testing;

namespace {
RfFrame real_frame(uint32_t S, uint32_t C, uint32_t T, std::mt19937_64& rng) {
  RfFrame f;
  f.descriptor.acquisition_mode = AcquisitionMode::RawSa;
  f.descriptor.sample_count = S;
  f.descriptor.channel_count = C;
  f.descriptor.transmit_count = T;
  f.descriptor.format = SampleFormat::Float32;
  f.descriptor.channel_map = identity_channel_map(C);
  std::vector<float> v(f.descriptor.total_samples());
  fill_random(v, rng);
  f.data = v;
  return f;
}

// Direct evaluation of the documented demodulation sum.
std::vector<std::complex<double>> demod_oracle(const std::vector<float>& s, const FirFilter& h, double fd,
                                              double fs, uint32_t dec) {
  std::vector<std::complex<double>> y;
  for (std::size_t n = 0; n < s.size(); n += dec) {
    std::complex<double> acc;
    for (std::size_t k = 0; k < h.taps.size() && k <= n; ++k)
      acc += h.taps[k] * static_cast<double>(s[n - k]) *
             std::polar(1.0, -2 * std::numbers::pi * fd * static_cast<double>(n - k) / fs);
    y.push_back(acc);
  }
  return y;
}
}  // namespace

TEST_CASE("to_int16 rounds half away from zero and saturates") {
  CHECK(to_int16(0.5) == 1);
  CHECK(to_int16(-0.5) == -1);
  CHECK(to_int16(1.49) == 1);
  CHECK(to_int16(40000) == 32767);
  CHECK(to_int16(-40000) == -32768);
}

TEST_CASE("tukey window") {
  CHECK(tukey(0.5, 0.2) == doctest::Approx(1));
  CHECK(tukey(0.0, 0.2) == doctest::Approx(0));
  CHECK(tukey(0.05, 0.2) == doctest::Approx(0.5));
  CHECK(tukey(1.5, 0.2) == 0);
}

TEST_CASE("lowpass design") {
  const FirFilter f = design_lowpass(36, 0.5);
  CHECK(f.taps.size() == 36);
  CHECK(f.group_delay_samples == doctest::Approx(17.5));
  CHECK(peak_gain(f) == doctest::Approx(1).epsilon(1e-3));
  CHECK(std::abs(frequency_response(f, 0.0)) == doctest::Approx(1).epsilon(0.01));
  CHECK(std::abs(frequency_response(f, 0.45)) < 0.01);
  CHECK_THROWS_AS(design_lowpass(2, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(design_lowpass(36, 1.5), std::invalid_argument);
}

TEST_CASE("matched chirp filter") {
  const ChirpSpec c{3e6, 7e6, 5e-6};
  const FirFilter f = design_matched(c, 40e6, 5e6, 301);
  CHECK(f.taps.size() == 301);
  CHECK(f.group_delay_samples == doctest::Approx(300));
  CHECK(peak_gain(f) == doctest::Approx(1).epsilon(1e-3));
  // Passband centred on the baseband chirp band.
  CHECK(std::abs(frequency_response(f, 0.0)) > 0.5);
  CHECK(std::abs(frequency_response(f, 0.2)) < 0.1);
  CHECK_THROWS(design_matched(c, 40e6, 5e6, 100));
}

TEST_CASE("demodulation matches the direct sum") {
  std::mt19937_64 rng(11);
  RfFrame f = real_frame(97, 3, 2, rng);
  f.descriptor.sampling_freq = 20e6;
  f.descriptor.time_offset = 2e-6;
  const FirFilter h = design_lowpass(15, 0.4);
  for (uint32_t dec : {1u, 2u, 3u}) {
    DemodOptions o;
    o.demodulation_freq = 5e6;
    o.decimation_factor = dec;
    const DemodResult r = demodulate(f, h, o);
    CHECK(r.descriptor.sample_count == (97 + dec - 1) / dec);
    CHECK(r.descriptor.sampling_freq == doctest::Approx(20e6 / dec));
    CHECK(r.descriptor.time_offset == doctest::Approx(2e-6 - 7.0 / 20e6));
    const auto& out = std::get<Block<cf32>>(r.block);
    const auto& in = std::get<std::vector<float>>(f.data);
    double worst = 0;
    for (uint32_t line = 0; line < 6; ++line) {
      const std::vector<float> s(in.begin() + line * 97, in.begin() + (line + 1) * 97);
      const auto expect = demod_oracle(s, h, 5e6, 20e6, dec);
      std::vector<cf32> got(out.data.begin() + line * expect.size(), out.data.begin() + (line + 1) * expect.size());
      worst = std::max(worst, relative_l2(got, expect));
    }
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("demodulation output layouts agree") {
  std::mt19937_64 rng(12);
  const RfFrame f = real_frame(50, 2, 4, rng);
  DemodOptions a;
  a.demodulation_freq = 5e6;
  DemodOptions b = a;
  b.output_layout = Layout::TransmitMajor;
  const auto ra = std::get<Block<cf32>>(demodulate(f, design_lowpass(9, 0.5), a).block);
  const auto rb = std::get<Block<cf32>>(demodulate(f, design_lowpass(9, 0.5), b).block);
  CHECK(rb.layout == Layout::TransmitMajor);
  CHECK(bit_equal(reorder_transmit_major(ra).data, rb.data));
}

TEST_CASE("int16 complex output and complex input") {
  RfFrame f;
  f.descriptor.sample_count = 8;
  f.descriptor.format = SampleFormat::Int16Complex;
  f.descriptor.channel_map = {0};
  f.descriptor.acquisition_mode = AcquisitionMode::RawSa;
  f.data = std::vector<ci16>(8, ci16{100, -50});
  DemodOptions o;
  o.output_format = SampleFormat::Int16Complex;
  FirFilter one;
  one.taps = {1.0};
  const auto r = demodulate(f, one, o);
  const auto& b = std::get<Block<ci16>>(r.block);
  CHECK(b.data[3] == ci16{100, -50});
  o.demodulation_freq = 1e6;
  CHECK_THROWS_AS(demodulate(f, one, o), std::invalid_argument);
}

TEST_CASE("decimating too far warns") {
  std::mt19937_64 rng(13);
  const RfFrame f = real_frame(64, 1, 1, rng);
  DemodOptions o;
  o.demodulation_freq = 5e6;
  o.decimation_factor = 16;
  const DemodResult r = demodulate(f, design_lowpass(16, 0.5), o);
  REQUIRE_FALSE(r.warnings.empty());
  CHECK(r.warnings[0].field == "decimation_factor");
}

TEST_CASE("quadrature unpack") {
  RfFrame f;
  f.descriptor.sample_count = 8;
  f.descriptor.sampling_freq = 20e6;
  f.descriptor.demodulation_freq = 5e6;
  f.descriptor.format = SampleFormat::Int16;
  f.descriptor.quadrature_sampled = true;
  f.descriptor.acquisition_mode = AcquisitionMode::RawSa;
  f.descriptor.channel_map = {0};
  f.data = std::vector<int16_t>{1, 2, 3, 4, 5, 6, 7, 8};
  const RfFrame u = quadrature_unpack_ns200(f);
  CHECK(u.descriptor.format == SampleFormat::Int16Complex);
  CHECK(u.descriptor.sample_count == 4);
  CHECK(u.descriptor.sampling_freq == doctest::Approx(10e6));
  const auto& v = std::get<std::vector<ci16>>(u.data);
  CHECK(v[0] == ci16{1, -2});
  CHECK(v[1] == ci16{-3, 4});
  CHECK(v[2] == ci16{5, -6});
  CHECK(v[3] == ci16{-7, 8});
  f.descriptor.sampling_freq = 30e6;
  CHECK_THROWS(quadrature_unpack_ns200(f));
}

TEST_CASE("analytic signal of a cosine has unit envelope") {
  std::vector<float> x(256);
  for (std::size_t n = 0; n < x.size(); ++n) x[n] = static_cast<float>(std::cos(2 * std::numbers::pi * 0.2 * n));
  const auto a = analytic_signal(x, fir_hilbert(31));
  for (std::size_t n = 40; n < 216; ++n) {
    CHECK(std::abs(a[n]) == doctest::Approx(1).epsilon(0.05));
  }
  CHECK_THROWS(fir_hilbert(30));
}
