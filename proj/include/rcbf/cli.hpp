#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "rcbf/model.hpp"
#include "rcbf/simulator.hpp"

namespace rcbf::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Entry point behind the `rcbf` executable. Returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// "builtin:point" (0, 0, 20 mm), "builtin:grid" (3 x 3 points, x in {-5, 0, 5} mm,
/// z in {10, 20, 30} mm), or a text file of "x y z [reflectivity]" lines in meters.
Phantom load_phantom(std::string_view spec);

/// "gaussian", "gaussian:<fractional bandwidth>", "chirp" or "chirp:<f0>,<f1>,<duration>".
Excitation parse_excitation(std::string_view spec, double center_freq);

/// "log:<dB>" or "power:<threshold>".
DisplaySettings parse_display(std::string_view spec);

struct SimulationSetup {
  std::string phantom = "builtin:point";
  AcquisitionMode mode = AcquisitionMode::Forces;
  uint32_t elements = 64;
  /// 0 picks 1 (linear aperture) except for hercules, which uses a square array.
  uint32_t rows = 0;
  /// 0 picks one wavelength.
  double pitch = 0;
  double center_freq = 5e6;
  double sampling_freq = 20e6;
  std::string excitation = "gaussian";
  SampleFormat format = SampleFormat::Int16;
  /// 0 sizes the record to the deepest scatterer.
  uint32_t samples = 0;
  /// Transmits for uforces, vls and tpw; 0 picks elements/4 (uforces) or 16.
  uint32_t transmits = 0;
  double noise = 0;
  uint64_t seed = 0;
  /// 0 picks 100 for integer formats and 1 for float.
  double amplitude = 0;
  double sound_speed = 1540.0;
  unsigned workers = 1;
};

struct SimulationPlan {
  Phantom phantom;
  ArrayGeometry geometry;
  AcquisitionDescriptor descriptor;
  Excitation excitation;
  SimulationOptions options;
};

/// Resolves defaults into a complete simulation. Throws std::invalid_argument on bad settings.
SimulationPlan plan_simulation(const SimulationSetup& setup);

/// Default beamforming region for a dataset: the aperture width laterally, 2 mm to the
/// record depth axially.
BeamformParams default_beamform(const AcquisitionDescriptor& d, const ArrayGeometry& g);

struct BenchConfig {
  std::string name;
  uint32_t samples = 704;
  uint32_t channels = 64;
  uint32_t transmits = 64;
  uint32_t image_x = 256;
  uint32_t image_z = 256;
  uint32_t filter_taps = 166;
  Interpolation interpolation = Interpolation::CubicHermite;
  uint32_t frames = 3;
};

/// "table3", "small" or "custom:samples,channels,transmits,image_x,image_z,taps".
BenchConfig parse_bench_config(std::string_view spec);
/// Rough peak working set of one bench run in bytes.
std::size_t bench_memory_estimate(const BenchConfig& c);

}  // namespace rcbf::cli
