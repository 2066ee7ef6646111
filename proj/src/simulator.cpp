#include "rcbf/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <stdexcept>

#include "rcbf/das.hpp"
#include "rcbf/decode.hpp"
#include "rcbf/parallel.hpp"
#include "rcbf/sigproc.hpp"

namespace rcbf {

namespace {

constexpr double kPi = std::numbers::pi;

double gaussian_sigma(const GaussianPulse& g) {
  return std::sqrt(2.0 * std::numbers::ln2) / (kPi * g.fractional_bandwidth * g.center_freq);
}

struct Path {
  TransmitModel tx;
  ReceiveElement rx;
};

// Response of one transmit/receive path over all scatterers, sampled at the descriptor's rate.
std::vector<std::complex<double>> path_response(const Path& path, const std::vector<Scatterer>& scatterers,
                                                const ArrayGeometry& g, const AcquisitionDescriptor& d,
                                                const Excitation& ex, double c, bool complex_out) {
  std::vector<std::complex<double>> out(d.sample_count);
  const auto [u0, u1] = excitation_support(ex);
  const double fs = d.sampling_freq;
  for (const Scatterer& s : scatterers) {
    const double tau = tof_transmit(path.tx, s.position, c, g, d.transmit_rows) + tof_receive(path.rx, s.position, c);
    const double first = std::ceil((tau + u0 - d.time_offset) * fs);
    const double last = std::floor((tau + u1 - d.time_offset) * fs);
    const auto n0 = static_cast<int64_t>(std::max(first, 0.0));
    const auto n1 = static_cast<int64_t>(std::min(last, static_cast<double>(d.sample_count) - 1.0));
    for (int64_t n = n0; n <= n1; ++n) {
      const double t = d.time_offset + static_cast<double>(n) / fs;
      if (complex_out) {
        const std::complex<double> mix = std::polar(1.0, -2.0 * kPi * d.demodulation_freq * t);
        out[static_cast<std::size_t>(n)] += s.reflectivity * excitation_analytic(ex, t - tau) * mix;
      } else {
        out[static_cast<std::size_t>(n)] += s.reflectivity * excitation_value(ex, t - tau);
      }
    }
  }
  return out;
}

void add_noise(std::vector<std::complex<double>>& v, double rms, uint64_t seed, uint32_t t, uint32_t ch, bool cplx) {
  if (rms <= 0) return;
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32), t, ch};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> n(0.0, rms);
  for (auto& x : v) {
    const double re = n(rng);
    const double im = cplx ? n(rng) : 0.0;
    x += std::complex<double>(re, im);
  }
}

void store(SampleBuffer& buf, std::size_t offset, const std::vector<std::complex<double>>& v, double amp) {
  std::visit(
      [&](auto& out) {
        using T = typename std::decay_t<decltype(out)>::value_type;
        for (std::size_t n = 0; n < v.size(); ++n) {
          const std::complex<double> x = amp * v[n];
          if constexpr (std::is_same_v<T, int16_t>) out[offset + n] = to_int16(x.real());
          else if constexpr (std::is_same_v<T, ci16>) out[offset + n] = {to_int16(x.real()), to_int16(x.imag())};
          else if constexpr (std::is_same_v<T, float>) out[offset + n] = static_cast<float>(x.real());
          else out[offset + n] = cf32(static_cast<float>(x.real()), static_cast<float>(x.imag()));
        }
      },
      buf);
}

std::vector<Scatterer> to_array(const Phantom& p, const ArrayGeometry& g) {
  std::vector<Scatterer> out = p.scatterers;
  for (auto& s : out) {
    if (!std::isfinite(s.reflectivity) || !std::isfinite(s.position.x) || !std::isfinite(s.position.y) ||
        !std::isfinite(s.position.z))
      throw std::invalid_argument("phantom scatterer is not finite");
    s.position = g.global_to_array.transform_point(s.position);
  }
  return out;
}

void require_valid(const AcquisitionDescriptor& d, const Excitation& ex) {
  const auto v = validate_descriptor(d);
  if (!v.empty()) throw std::invalid_argument(describe(v));
  validate_excitation(ex);
}

// Maps (data channel, encoded index) of a HERCULES acquisition to a receive_aperture point.
std::vector<uint32_t> hercules_points(const ArrayGeometry& g, const AcquisitionDescriptor& d) {
  const std::vector<uint32_t> map = d.channel_map.empty() ? identity_channel_map(d.channel_count) : d.channel_map;
  const uint32_t encoded = d.receive_rows ? g.column_count : g.row_count;
  std::vector<uint32_t> pt(std::size_t{d.channel_count} * encoded);
  for (uint32_t j = 0; j < d.channel_count; ++j)
    for (uint32_t e = 0; e < encoded; ++e) {
      const uint32_t row = d.receive_rows ? map[j] : e;
      const uint32_t col = d.receive_rows ? e : map[j];
      pt[j + std::size_t{d.channel_count} * e] = col + g.column_count * row;
    }
  return pt;
}

}  // namespace

void validate_excitation(const Excitation& e) {
  if (const auto* g = std::get_if<GaussianPulse>(&e)) {
    if (!(g->center_freq > 0) || !(g->fractional_bandwidth > 0) || g->fractional_bandwidth > 2)
      throw std::invalid_argument("gaussian pulse needs center_freq > 0 and fractional_bandwidth in (0, 2]");
    return;
  }
  const auto& c = std::get<ChirpSpec>(e);
  if (!(c.f_start > 0) || !(c.f_end > 0) || !(c.duration > 0))
    throw std::invalid_argument("chirp needs positive f_start, f_end and duration");
}

double excitation_value(const Excitation& e, double t) { return excitation_analytic(e, t).real(); }

std::complex<double> excitation_analytic(const Excitation& e, double t) {
  if (const auto* g = std::get_if<GaussianPulse>(&e)) {
    const double s = gaussian_sigma(*g);
    return std::exp(-t * t / (2 * s * s)) * std::polar(1.0, 2 * kPi * g->center_freq * t);
  }
  const auto& c = std::get<ChirpSpec>(e);
  if (t < 0 || t > c.duration) return {};
  const double sweep = (c.f_end - c.f_start) / c.duration;
  return tukey(t / c.duration, 0.2) * std::polar(1.0, 2 * kPi * (c.f_start * t + 0.5 * sweep * t * t));
}

std::pair<double, double> excitation_support(const Excitation& e) {
  if (const auto* g = std::get_if<GaussianPulse>(&e)) {
    const double s = gaussian_sigma(*g);
    return {-7 * s, 7 * s};
  }
  return {0.0, std::get<ChirpSpec>(e).duration};
}

RfFrame simulate(const Phantom& phantom, const ArrayGeometry& g, const AcquisitionDescriptor& d,
                 const Excitation& ex, const SimulationOptions& opt) {
  require_valid(d, ex);
  const std::vector<Scatterer> scat = to_array(phantom, g);
  const double c = phantom.sound_speed;
  const bool cplx = is_complex(d.format);
  const std::size_t S = d.sample_count;
  const uint32_t C = d.channel_count;
  const uint32_t T = d.transmit_count;

  RfFrame frame;
  frame.descriptor = d;
  frame.data = make_sample_buffer(d.format, d.total_samples());

  std::vector<Path> paths;
  // Output (t, j) = sum over k of weight(t, j, k) * response(path(t, j, k)).
  uint32_t terms = 1;
  std::function<std::pair<std::size_t, int>(uint32_t, uint32_t, uint32_t)> term;

  if (d.acquisition_mode == AcquisitionMode::Hercules) {
    const TransmitModel tx = to_array_frame(resolve_transmits(d, {})[0], g);
    for (const ReceiveElement& e : receive_aperture(g, d)) paths.push_back({tx, e});
    const HadamardMatrix h(T);
    const std::vector<uint32_t> pt = hercules_points(g, d);
    const uint32_t encoded = d.receive_rows ? g.column_count : g.row_count;
    if (encoded != T) throw std::invalid_argument("hercules transmit_count does not match array");
    terms = T;
    term = [h, pt, C](uint32_t t, uint32_t j, uint32_t e) {
      return std::pair<std::size_t, int>{pt[j + std::size_t{C} * e], h(t, e)};
    };
  } else {
    const std::vector<ReceiveElement> rx = receive_aperture(g, d);
    if (is_hadamard_encoded(d.acquisition_mode)) {
      const uint32_t order = hadamard_order_for(d);
      const HadamardMatrix h(order);
      const std::vector<uint32_t> rows = encoding_rows(d);
      for (uint32_t e = 0; e < order; ++e)
        for (const ReceiveElement& r : rx) paths.push_back({ElementTransmit{e}, r});
      terms = order;
      term = [h, rows, C](uint32_t t, uint32_t j, uint32_t e) {
        return std::pair<std::size_t, int>{std::size_t{e} * C + j, h(rows[t], e)};
      };
    } else {
      const std::vector<TransmitModel> tx = resolve_transmits(d, {});
      for (const TransmitModel& m : tx)
        for (const ReceiveElement& r : rx) paths.push_back({to_array_frame(m, g), r});
      term = [C](uint32_t t, uint32_t j, uint32_t) { return std::pair<std::size_t, int>{std::size_t{t} * C + j, 1}; };
    }
  }

  std::vector<std::vector<std::complex<double>>> resp(paths.size());
  parallel_for(paths.size(), opt.workers, [&](std::size_t p) {
    resp[p] = path_response(paths[p], scat, g, d, ex, c, cplx);
  });

  parallel_for(T, opt.workers, [&](std::size_t ti) {
    const auto t = static_cast<uint32_t>(ti);
    std::vector<std::complex<double>> acc(S);
    for (uint32_t j = 0; j < C; ++j) {
      std::fill(acc.begin(), acc.end(), std::complex<double>{});
      for (uint32_t k = 0; k < terms; ++k) {
        const auto [p, w] = term(t, j, k);
        const auto& r = resp[p];
        for (std::size_t n = 0; n < S; ++n) acc[n] += static_cast<double>(w) * r[n];
      }
      add_noise(acc, opt.noise_rms, opt.seed, t, j, cplx);
      store(frame.data, (std::size_t{t} * C + j) * S, acc, opt.amplitude);
    }
  });
  return frame;
}

RfFrame simulate_matrix_receive(const Phantom& phantom, const ArrayGeometry& g, const AcquisitionDescriptor& d,
                                const Excitation& ex, const SimulationOptions& opt) {
  if (d.acquisition_mode != AcquisitionMode::Hercules)
    throw std::invalid_argument("simulate_matrix_receive requires a hercules descriptor");
  require_valid(d, ex);
  const std::vector<Scatterer> scat = to_array(phantom, g);
  const bool cplx = is_complex(d.format);
  const TransmitModel tx = to_array_frame(resolve_transmits(d, {})[0], g);
  const std::vector<ReceiveElement> rx = receive_aperture(g, d);
  const std::vector<uint32_t> pt = hercules_points(g, d);

  RfFrame frame;
  frame.descriptor = decoded_descriptor(d);
  frame.descriptor.format = cplx ? SampleFormat::Float32Complex : SampleFormat::Float32;
  const AcquisitionDescriptor& out = frame.descriptor;
  frame.data = make_sample_buffer(out.format, out.total_samples());
  const std::size_t S = out.sample_count;
  const uint32_t C = out.channel_count;
  parallel_for(out.transmit_count, opt.workers, [&](std::size_t e) {
    for (uint32_t j = 0; j < C; ++j) {
      auto v = path_response({tx, rx[pt[j + std::size_t{C} * e]]}, scat, g, d, ex, phantom.sound_speed, cplx);
      add_noise(v, opt.noise_rms, opt.seed, static_cast<uint32_t>(e), j, cplx);
      store(frame.data, (e * C + j) * S, v, opt.amplitude);
    }
  });
  return frame;
}

}  // namespace rcbf
