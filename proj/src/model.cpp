#include "rcbf/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace rcbf {

namespace {

constexpr std::array<std::string_view, 4> kFormatNames{"int16", "int16_complex", "float32", "float32_complex"};
constexpr std::array<std::string_view, 7> kModeNames{"forces", "uforces", "hercules", "vls", "tpw", "flash", "rawsa"};
constexpr std::array<std::string_view, 3> kInterpNames{"nearest", "linear", "cubic"};

template <class E, std::size_t N>
std::optional<E> parse_enum(std::string_view s, const std::array<std::string_view, N>& names) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == s) return static_cast<E>(i);
  }
  return std::nullopt;
}

}  // namespace

std::string_view to_string(SampleFormat f) { return kFormatNames.at(static_cast<std::size_t>(f)); }
std::string_view to_string(AcquisitionMode m) { return kModeNames.at(static_cast<std::size_t>(m)); }
std::string_view to_string(Interpolation i) { return kInterpNames.at(static_cast<std::size_t>(i)); }

std::optional<SampleFormat> parse_sample_format(std::string_view s) {
  return parse_enum<SampleFormat>(s, kFormatNames);
}
std::optional<AcquisitionMode> parse_acquisition_mode(std::string_view s) {
  return parse_enum<AcquisitionMode>(s, kModeNames);
}
std::optional<Interpolation> parse_interpolation(std::string_view s) {
  if (s == "cubic_hermite" || s == "hermite") return Interpolation::CubicHermite;
  return parse_enum<Interpolation>(s, kInterpNames);
}

double norm(Vec3 a) { return std::sqrt(dot(a, a)); }

Mat4 Mat4::translation(Vec3 t) {
  Mat4 r;
  r(0, 3) = t.x;
  r(1, 3) = t.y;
  r(2, 3) = t.z;
  return r;
}

Mat4 Mat4::rotation_z(double radians) {
  Mat4 r;
  const double c = std::cos(radians);
  const double s = std::sin(radians);
  r(0, 0) = c;
  r(0, 1) = -s;
  r(1, 0) = s;
  r(1, 1) = c;
  return r;
}

Vec3 Mat4::transform_point(Vec3 p) const {
  const auto& a = *this;
  return {a(0, 0) * p.x + a(0, 1) * p.y + a(0, 2) * p.z + a(0, 3),
          a(1, 0) * p.x + a(1, 1) * p.y + a(1, 2) * p.z + a(1, 3),
          a(2, 0) * p.x + a(2, 1) * p.y + a(2, 2) * p.z + a(2, 3)};
}

Vec3 Mat4::transform_direction(Vec3 d) const {
  const auto& a = *this;
  return {a(0, 0) * d.x + a(0, 1) * d.y + a(0, 2) * d.z,
          a(1, 0) * d.x + a(1, 1) * d.y + a(1, 2) * d.z,
          a(2, 0) * d.x + a(2, 1) * d.y + a(2, 2) * d.z};
}

bool Mat4::is_rigid(double tol) const {
  const auto& a = *this;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double s = 0;
      for (int k = 0; k < 3; ++k) s += a(i, k) * a(j, k);
      if (std::abs(s - (i == j ? 1.0 : 0.0)) > tol) return false;
    }
  }
  return a(3, 0) == 0 && a(3, 1) == 0 && a(3, 2) == 0 && a(3, 3) == 1;
}

Mat4 operator*(const Mat4& a, const Mat4& b) {
  Mat4 r;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      double s = 0;
      for (int k = 0; k < 4; ++k) s += a(i, k) * b(k, j);
      r(i, j) = s;
    }
  }
  return r;
}

ArrayGeometry ArrayGeometry::centered(uint32_t rows, uint32_t columns, double row_pitch,
                                      double column_pitch) {
  ArrayGeometry g;
  g.row_count = rows;
  g.column_count = columns;
  g.row_pitch = row_pitch;
  g.column_pitch = column_pitch;
  g.global_to_array = Mat4::translation({0.5 * (columns - 1.0) * column_pitch,
                                         0.5 * (rows - 1.0) * row_pitch, 0.0});
  return g;
}

SampleBuffer make_sample_buffer(SampleFormat format, std::size_t count) {
  switch (format) {
    case SampleFormat::Int16: return std::vector<int16_t>(count);
    case SampleFormat::Int16Complex: return std::vector<ci16>(count);
    case SampleFormat::Float32: return std::vector<float>(count);
    case SampleFormat::Float32Complex: return std::vector<cf32>(count);
  }
  throw std::invalid_argument("unknown sample format");
}

std::size_t sample_buffer_size(const SampleBuffer& b) {
  return std::visit([](const auto& v) { return v.size(); }, b);
}

SampleFormat sample_buffer_format(const SampleBuffer& b) {
  return static_cast<SampleFormat>(b.index());
}

bool is_power_of_two(uint64_t v) { return v != 0 && (v & (v - 1)) == 0; }

std::vector<uint32_t> identity_channel_map(uint32_t n) {
  std::vector<uint32_t> m(n);
  for (uint32_t i = 0; i < n; ++i) m[i] = i;
  return m;
}

std::vector<Violation> validate_descriptor(const AcquisitionDescriptor& d) {
  std::vector<Violation> out;
  if (d.sample_count < 1) out.push_back({"sample_count", "sample_count must be >= 1"});
  if (d.channel_count < 1) out.push_back({"channel_count", "channel_count must be >= 1"});
  if (d.transmit_count < 1) out.push_back({"transmit_count", "transmit_count must be >= 1"});
  if (d.payload_bytes() > kMaxPayloadBytes) out.push_back({"payload", "payload exceeds 2^31 bytes"});
  if (!(d.sampling_freq > 0) || !std::isfinite(d.sampling_freq))
    out.push_back({"sampling_freq", "sampling_freq must be positive"});
  if (!(d.demodulation_freq >= 0) || !std::isfinite(d.demodulation_freq))
    out.push_back({"demodulation_freq", "demodulation_freq must be non-negative"});
  if (!(d.sound_speed > 0) || !std::isfinite(d.sound_speed))
    out.push_back({"sound_speed", "sound_speed must be positive"});
  if (!std::isfinite(d.time_offset)) out.push_back({"time_offset", "time_offset must be finite"});

  const auto mode = d.acquisition_mode;
  if ((mode == AcquisitionMode::Forces || mode == AcquisitionMode::Hercules) &&
      !is_power_of_two(d.transmit_count)) {
    out.push_back({"transmit_count", "transmit_count not Hadamard order"});
  }
  if (mode == AcquisitionMode::UForces) {
    if (!d.sparse_transmit_indices) {
      out.push_back({"sparse_transmit_indices", "sparse_transmit_indices required for uforces"});
    } else {
      const auto& idx = *d.sparse_transmit_indices;
      if (idx.size() != d.transmit_count)
        out.push_back({"sparse_transmit_indices", "sparse_transmit_indices length must equal transmit_count"});
      if (!std::is_sorted(idx.begin(), idx.end()) ||
          std::adjacent_find(idx.begin(), idx.end()) != idx.end())
        out.push_back({"sparse_transmit_indices", "sparse_transmit_indices must be strictly increasing"});
      // The Hadamard order of a sparse acquisition is the receive aperture size.
      const uint64_t order = d.channel_count;
      if (!is_power_of_two(order))
        out.push_back({"channel_count", "uforces channel_count not Hadamard order"});
      if (std::any_of(idx.begin(), idx.end(), [&](uint32_t i) { return i >= order; }))
        out.push_back({"sparse_transmit_indices", "sparse_transmit_indices must be < hadamard_order"});
    }
  } else if (d.sparse_transmit_indices) {
    out.push_back({"sparse_transmit_indices", "sparse_transmit_indices only valid for uforces"});
  }

  if (d.channel_map.size() != d.channel_count) {
    out.push_back({"channel_map", "channel_map length must equal channel_count"});
  } else {
    std::vector<bool> seen(d.channel_count, false);
    bool ok = true;
    for (uint32_t v : d.channel_map) {
      if (v >= d.channel_count || seen[v]) {
        ok = false;
        break;
      }
      seen[v] = true;
    }
    if (!ok) out.push_back({"channel_map", "channel_map must be a bijection on [0, channel_count)"});
  }

  for (const auto& tm : d.transmit_models) {
    if (const auto* p = std::get_if<PlaneTransmit>(&tm); p && std::abs(norm(p->direction) - 1.0) > 1e-9) {
      out.push_back({"transmit_models", "plane direction must be unit norm"});
      break;
    }
  }
  if (!d.transmit_models.empty() && d.transmit_models.size() != 1 &&
      d.transmit_models.size() != d.transmit_count) {
    out.push_back({"transmit_models", "transmit_models must be empty, shared, or one per transmit"});
  }
  if (d.quadrature_sampled && is_complex(d.format))
    out.push_back({"quadrature_sampled", "quadrature sampled data must be real"});
  return out;
}

std::vector<Violation> validate_geometry(const ArrayGeometry& g) {
  std::vector<Violation> out;
  if (!(g.row_pitch > 0)) out.push_back({"row_pitch", "row_pitch must be positive"});
  if (!(g.column_pitch > 0)) out.push_back({"column_pitch", "column_pitch must be positive"});
  if (g.row_count < 1) out.push_back({"row_count", "row_count must be >= 1"});
  if (g.column_count < 1) out.push_back({"column_count", "column_count must be >= 1"});
  if (!g.global_to_array.is_rigid(1e-6))
    out.push_back({"global_to_array", "global_to_array must be a rigid transform"});
  return out;
}

std::vector<Violation> validate_params(const BeamformParams& p) {
  std::vector<Violation> out;
  constexpr std::array<const char*, 3> axes{"x", "y", "z"};
  const std::array<double, 3> lo{p.region_min.x, p.region_min.y, p.region_min.z};
  const std::array<double, 3> hi{p.region_max.x, p.region_max.y, p.region_max.z};
  for (std::size_t a = 0; a < 3; ++a) {
    if (p.points[a] < 1) out.push_back({"points", std::string("points.") + axes[a] + " must be >= 1"});
    if (p.points[a] > 1 && !(lo[a] < hi[a]))
      out.push_back({"region", std::string("region_min.") + axes[a] + " must be < region_max." + axes[a]});
  }
  if (!(p.f_number > 0) || !std::isfinite(p.f_number)) out.push_back({"f_number", "f_number must be > 0"});
  if (p.decimation_factor < 1) out.push_back({"decimation_factor", "decimation_factor must be >= 1"});
  if (p.filter.kind == FilterSpec::Kind::MatchedWaveform) {
    if (p.filter.waveform.empty()) out.push_back({"filter.waveform", "waveform must not be empty"});
  } else if (p.filter.tap_count < 1) {
    out.push_back({"filter.tap_count", "tap_count must be >= 1"});
  }
  if (!p.output_transform.is_rigid(1e-6))
    out.push_back({"output_transform", "output_transform must be a rigid transform"});
  for (const auto& tm : p.transmit) {
    if (const auto* pl = std::get_if<PlaneTransmit>(&tm); pl && std::abs(norm(pl->direction) - 1.0) > 1e-9) {
      out.push_back({"transmit", "plane direction must be unit norm"});
      break;
    }
  }
  return out;
}

std::string describe(const std::vector<Violation>& violations) {
  std::ostringstream os;
  for (std::size_t i = 0; i < violations.size(); ++i) {
    if (i) os << "; ";
    os << violations[i].field << ": " << violations[i].rule;
  }
  return os.str();
}

Vec3 grid_index_to_point(const BeamformParams& params, std::array<uint32_t, 3> idx) {
  const std::array<double, 3> lo{params.region_min.x, params.region_min.y, params.region_min.z};
  const std::array<double, 3> hi{params.region_max.x, params.region_max.y, params.region_max.z};
  std::array<double, 3> p{};
  for (std::size_t a = 0; a < 3; ++a) {
    const uint32_t n = params.points[a];
    if (idx[a] >= n) throw std::out_of_range("grid index out of range");
    const double frac = n > 1 ? static_cast<double>(idx[a]) / (n - 1) : 0.5;
    p[a] = lo[a] + frac * (hi[a] - lo[a]);
  }
  return params.output_transform.transform_point({p[0], p[1], p[2]});
}

}  // namespace rcbf
