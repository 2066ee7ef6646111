#pragma once

#include <complex>
#include <cstdint>
#include <utility>
#include <variant>
#include <vector>

#include "rcbf/model.hpp"

namespace rcbf {

struct Scatterer {
  /// Global frame, metres.
  Vec3 position;
  double reflectivity = 1.0;
};

struct Phantom {
  std::vector<Scatterer> scatterers;
  double sound_speed = 1540.0;
};

/// cos carrier under a Gaussian envelope whose -6 dB bandwidth is fractional_bandwidth * center_freq.
struct GaussianPulse {
  double center_freq = 5e6;
  double fractional_bandwidth = 0.6;
};

/// Chirp excitations reuse the Tukey(0.2)-tapered linear sweep of the matched filter.
using Excitation = std::variant<GaussianPulse, ChirpSpec>;

/// Real pressure waveform at time t (t = 0 is the pulse centre, or the start of a chirp).
double excitation_value(const Excitation& e, double t);
/// Analytic counterpart of excitation_value.
std::complex<double> excitation_analytic(const Excitation& e, double t);
/// Interval outside which the waveform is treated as zero.
std::pair<double, double> excitation_support(const Excitation& e);
/// Throws std::invalid_argument on non-positive parameters.
void validate_excitation(const Excitation& e);

struct SimulationOptions {
  double noise_rms = 0;
  uint64_t seed = 0;
  /// Scale applied before integer quantization (and to float output).
  double amplitude = 1.0;
  unsigned workers = 1;
};

/// RF (real formats) or baseband IQ (complex formats) for every physical transmit of the
/// descriptor. Noise is drawn per (transmit, channel) stream from `seed`.
RfFrame simulate(const Phantom& phantom, const ArrayGeometry& g, const AcquisitionDescriptor& d,
                 const Excitation& excitation, const SimulationOptions& options = {});

/// What a fully sampled 2D receive aperture would record for the HERCULES transmit, laid out
/// like the decoded HERCULES block (channel = array line, transmit = encoded index). Float output.
RfFrame simulate_matrix_receive(const Phantom& phantom, const ArrayGeometry& g, const AcquisitionDescriptor& d,
                                const Excitation& excitation, const SimulationOptions& options = {});

}  // namespace rcbf
