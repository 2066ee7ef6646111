#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace rcbf {

using cf32 = std::complex<float>;

/// Packed complex 16-bit sample (I then Q).
struct ci16 {
  int16_t re = 0;
  int16_t im = 0;
  friend bool operator==(ci16, ci16) = default;
};

enum class SampleFormat : uint32_t { Int16 = 0, Int16Complex = 1, Float32 = 2, Float32Complex = 3 };

constexpr std::size_t element_size(SampleFormat f) {
  switch (f) {
    case SampleFormat::Int16: return 2;
    case SampleFormat::Int16Complex: return 4;
    case SampleFormat::Float32: return 4;
    case SampleFormat::Float32Complex: return 8;
  }
  return 0;
}

constexpr bool is_complex(SampleFormat f) {
  return f == SampleFormat::Int16Complex || f == SampleFormat::Float32Complex;
}

enum class AcquisitionMode : uint32_t { Forces = 0, UForces, Hercules, Vls, Tpw, Flash, RawSa };

/// Modes whose transmit axis carries a Hadamard encoding.
constexpr bool is_hadamard_encoded(AcquisitionMode m) {
  return m == AcquisitionMode::Forces || m == AcquisitionMode::UForces || m == AcquisitionMode::Hercules;
}

enum class Interpolation : uint32_t { Nearest = 0, Linear, CubicHermite };

std::string_view to_string(SampleFormat f);
std::string_view to_string(AcquisitionMode m);
std::string_view to_string(Interpolation i);
std::optional<SampleFormat> parse_sample_format(std::string_view s);
std::optional<AcquisitionMode> parse_acquisition_mode(std::string_view s);
std::optional<Interpolation> parse_interpolation(std::string_view s);

struct Vec3 {
  double x = 0, y = 0, z = 0;

  friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
  friend bool operator==(Vec3, Vec3) = default;
};

inline double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
double norm(Vec3 a);

/// Row-major 4x4 affine transform.
struct Mat4 {
  std::array<double, 16> m{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};

  static Mat4 identity() { return {}; }
  static Mat4 translation(Vec3 t);
  /// Right-handed rotation about +z by `radians`.
  static Mat4 rotation_z(double radians);

  double operator()(int r, int c) const { return m[static_cast<std::size_t>(r * 4 + c)]; }
  double& operator()(int r, int c) { return m[static_cast<std::size_t>(r * 4 + c)]; }

  Vec3 transform_point(Vec3 p) const;
  Vec3 transform_direction(Vec3 d) const;
  /// Upper-left 3x3 block orthonormal within `tol` and bottom row (0,0,0,1).
  bool is_rigid(double tol = 1e-6) const;
  bool is_identity() const { return *this == Mat4{}; }

  friend Mat4 operator*(const Mat4& a, const Mat4& b);
  friend bool operator==(const Mat4&, const Mat4&) = default;
};

struct ElementTransmit {
  uint32_t index = 0;
  friend bool operator==(const ElementTransmit&, const ElementTransmit&) = default;
};
struct PlaneTransmit {
  Vec3 direction{0, 0, 1};
  friend bool operator==(const PlaneTransmit&, const PlaneTransmit&) = default;
};
struct VirtualSourceTransmit {
  Vec3 focus;
  friend bool operator==(const VirtualSourceTransmit&, const VirtualSourceTransmit&) = default;
};

/// How the wave of one emission was formed. Plane/VirtualSource are given in the global frame.
using TransmitModel = std::variant<ElementTransmit, PlaneTransmit, VirtualSourceTransmit>;

/// Shape, format and transmit sequence of one RF dataset.
struct AcquisitionDescriptor {
  uint32_t sample_count = 1;
  uint32_t channel_count = 1;
  uint32_t transmit_count = 1;
  SampleFormat format = SampleFormat::Int16;
  double sampling_freq = 20e6;
  double demodulation_freq = 5e6;
  double sound_speed = 1540.0;
  /// Time of sample 0 relative to the transmit trigger.
  double time_offset = 0.0;
  AcquisitionMode acquisition_mode = AcquisitionMode::Forces;
  bool transmit_rows = false;
  bool receive_rows = false;
  /// Samples were taken at 4x the demodulation frequency with the quadrature sign pattern.
  bool quadrature_sampled = false;
  std::optional<std::vector<uint32_t>> sparse_transmit_indices;
  /// Data channel -> array element.
  std::vector<uint32_t> channel_map;
  /// Emission sequence for Flash/Tpw/Vls/Hercules (one per transmit, or one shared).
  std::vector<TransmitModel> transmit_models;

  std::size_t total_samples() const {
    return std::size_t{sample_count} * channel_count * transmit_count;
  }
  std::size_t payload_bytes() const { return total_samples() * element_size(format); }

  friend bool operator==(const AcquisitionDescriptor&, const AcquisitionDescriptor&) = default;
};

/// Row/column array layout. The array frame has its origin at the centre of the corner
/// element, x along the column index, y along the row index and z along the array normal.
struct ArrayGeometry {
  double row_pitch = 0.3e-3;
  double column_pitch = 0.3e-3;
  uint32_t row_count = 1;
  uint32_t column_count = 1;
  Mat4 global_to_array;

  /// Geometry whose global origin sits at the centre of the aperture.
  static ArrayGeometry centered(uint32_t rows, uint32_t columns, double row_pitch, double column_pitch);

  friend bool operator==(const ArrayGeometry&, const ArrayGeometry&) = default;
};

struct ChirpSpec {
  double f_start = 3e6;
  double f_end = 7e6;
  double duration = 20e-6;
  friend bool operator==(const ChirpSpec&, const ChirpSpec&) = default;
};

struct FilterSpec {
  enum class Kind : uint32_t { LowPass = 0, MatchedChirp, MatchedWaveform };

  Kind kind = Kind::LowPass;
  uint32_t tap_count = 36;
  double passband_fraction = 0.5;
  ChirpSpec chirp;
  std::vector<double> waveform;

  friend bool operator==(const FilterSpec&, const FilterSpec&) = default;
};

enum class DisplayMode : uint32_t { Log = 0, Power };

struct DisplaySettings {
  DisplayMode mode = DisplayMode::Log;
  double dynamic_range_db = 60.0;
  double power_threshold = 0.1;
  friend bool operator==(const DisplaySettings&, const DisplaySettings&) = default;
};

struct BeamformParams {
  Vec3 region_min{-5e-3, 0, 5e-3};
  Vec3 region_max{5e-3, 0, 30e-3};
  std::array<uint32_t, 3> points{64, 1, 128};
  /// Applied to the region-mapped point of each grid index.
  Mat4 output_transform;
  double f_number = 1.0;
  Interpolation interpolation = Interpolation::CubicHermite;
  /// Overrides the descriptor's transmit sequence when non-empty.
  std::vector<TransmitModel> transmit;
  bool coherence_weighting = false;
  uint32_t decimation_factor = 1;
  FilterSpec filter;

  std::size_t point_count() const { return std::size_t{points[0]} * points[1] * points[2]; }

  friend bool operator==(const BeamformParams&, const BeamformParams&) = default;
};

using SampleBuffer =
    std::variant<std::vector<int16_t>, std::vector<ci16>, std::vector<float>, std::vector<cf32>>;

/// Empty buffer holding the element type of `format`.
SampleBuffer make_sample_buffer(SampleFormat format, std::size_t count = 0);
std::size_t sample_buffer_size(const SampleBuffer& b);
SampleFormat sample_buffer_format(const SampleBuffer& b);

/// Raw samples of one acquisition, sample-fastest then channel then transmit.
struct RfFrame {
  AcquisitionDescriptor descriptor;
  SampleBuffer data;
  uint64_t frame_id = 0;
};

struct StageTiming {
  std::string stage;
  int64_t ns = 0;
};

struct ImageFrame {
  std::array<uint32_t, 3> dims{0, 0, 0};
  /// x fastest, then y, then z.
  std::vector<cf32> values;
  uint32_t params_id = 0;
  uint64_t frame_id = 0;
  std::vector<StageTiming> stage_timings;
  uint64_t points_beamformed = 0;
  /// Set when any input sample feeding the image was NaN/inf.
  bool non_finite_input = false;

  cf32& at(uint32_t i, uint32_t j, uint32_t k) {
    return values[i + std::size_t{dims[0]} * (j + std::size_t{dims[1]} * k)];
  }
  const cf32& at(uint32_t i, uint32_t j, uint32_t k) const {
    return values[i + std::size_t{dims[0]} * (j + std::size_t{dims[1]} * k)];
  }
};

struct Violation {
  std::string field;
  std::string rule;
  friend bool operator==(const Violation&, const Violation&) = default;
};

/// Largest payload accepted in a single upload.
inline constexpr std::size_t kMaxPayloadBytes = std::size_t{1} << 31;

bool is_power_of_two(uint64_t v);

std::vector<Violation> validate_descriptor(const AcquisitionDescriptor& d);
std::vector<Violation> validate_geometry(const ArrayGeometry& g);
std::vector<Violation> validate_params(const BeamformParams& p);
std::string describe(const std::vector<Violation>& violations);

/// Identity channel map of length n.
std::vector<uint32_t> identity_channel_map(uint32_t n);

/// Maps a grid index to a point in metres. Throws std::out_of_range for indices outside `points`.
Vec3 grid_index_to_point(const BeamformParams& params, std::array<uint32_t, 3> idx);

}  // namespace rcbf
