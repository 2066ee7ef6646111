#include "rcbf/das.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "rcbf/parallel.hpp"

namespace rcbf {

namespace {

// Component of d perpendicular to the unit axis a.
Vec3 perpendicular(Vec3 d, Vec3 a) { return d - dot(d, a) * a; }

// Normalized aperture coordinate; values >= 0.5 (or an on-face point) carry zero weight.
double aperture_u(const ReceiveElement& e, Vec3 q, double f_number) {
  const Vec3 d = q - e.position;
  const double depth = std::abs(d.z);
  if (depth == 0) return 1.0;
  Vec3 lat = e.kind == ReceiveElement::Kind::Line ? perpendicular(d, e.axis) : d;
  lat.z = 0;
  return f_number * norm(lat) / depth;
}

struct TermContext {
  double fs = 0;
  double t0 = 0;
  double fd = 0;
  bool rotate = false;
  Interpolation mode = Interpolation::CubicHermite;
};

std::complex<double> term(std::span<const cf32> seq, double tau, double weight, const TermContext& k) {
  std::complex<double> v = interpolate(seq, (tau - k.t0) * k.fs, k.mode);
  if (k.rotate) {
    const double ph = 2.0 * std::numbers::pi * k.fd * tau;
    v *= std::complex<double>(std::cos(ph), std::sin(ph));
  }
  return weight * v;
}

// Plain product; std::complex operator* adds inf/nan recovery we do not need here.
inline std::complex<double> cmul(std::complex<double> a, std::complex<double> b) {
  return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
}

std::complex<double> rotation(double tau, double fd) {
  const double ph = 2.0 * std::numbers::pi * fd * tau;
  return {std::cos(ph), std::sin(ph)};
}

// Same result as interpolate(); skips the bounds checks when the stencil is inside the record.
inline std::complex<double> interpolate_fast(std::span<const cf32> s, double t, Interpolation mode) {
  if (mode == Interpolation::CubicHermite && t >= 1.0 && t < static_cast<double>(s.size()) - 3.0) {
    // t >= 1, so truncation is floor.
    const auto i = static_cast<std::size_t>(t);
    const double f = t - static_cast<double>(i);
    const std::complex<double> p1(s[i].real(), s[i].imag());
    if (f == 0) return p1;
    const std::complex<double> p0(s[i - 1].real(), s[i - 1].imag());
    const std::complex<double> p2(s[i + 1].real(), s[i + 1].imag());
    const std::complex<double> p3(s[i + 2].real(), s[i + 2].imag());
    return p1 + 0.5 * f * (p2 - p0 + f * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + f * (3.0 * (p1 - p2) + p3 - p0)));
  }
  return interpolate(s, t, mode);
}

TermContext context_for(const AcquisitionDescriptor& d, const BeamformParams& p) {
  TermContext k;
  k.fs = d.sampling_freq;
  k.t0 = d.time_offset;
  k.fd = d.demodulation_freq;
  k.rotate = d.demodulation_freq != 0;
  k.mode = p.interpolation;
  return k;
}

bool any_non_finite(const Block<cf32>& b) {
  for (const cf32& v : b.data)
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return true;
  return false;
}

void check_block(const Block<cf32>& block, const AcquisitionDescriptor& d) {
  if (block.layout != Layout::SampleMajor) throw std::invalid_argument("das: block must be sample-major");
  if (block.shape != shape_of(d) || block.data.size() != block.shape.size())
    throw std::invalid_argument("das: block shape does not match descriptor");
}

void finish_point(std::complex<double> sum, double energy, uint32_t nonzero, bool coherence, cf32& out) {
  if (coherence) {
    const double cf = (energy > 0 && nonzero > 0) ? std::norm(sum) / (nonzero * energy) : 0.0;
    sum *= cf;
  }
  out = cf32(static_cast<float>(sum.real()), static_cast<float>(sum.imag()));
}

}  // namespace

ReceiveElement rca_element(const ArrayGeometry& g, bool rows, uint32_t i) {
  ReceiveElement e;
  e.kind = ReceiveElement::Kind::Line;
  e.index = i;
  if (rows) {
    if (i >= g.row_count) throw std::out_of_range("row element index out of range");
    e.position = {0.5 * (g.column_count - 1.0) * g.column_pitch, i * g.row_pitch, 0};
    e.axis = {1, 0, 0};
    e.half_length = 0.5 * g.column_count * g.column_pitch;
  } else {
    if (i >= g.column_count) throw std::out_of_range("column element index out of range");
    e.position = {i * g.column_pitch, 0.5 * (g.row_count - 1.0) * g.row_pitch, 0};
    e.axis = {0, 1, 0};
    e.half_length = 0.5 * g.row_count * g.row_pitch;
  }
  return e;
}

std::vector<ReceiveElement> receive_aperture(const ArrayGeometry& g, const AcquisitionDescriptor& d) {
  const std::vector<uint32_t> map = d.channel_map.empty() ? identity_channel_map(d.channel_count) : d.channel_map;
  if (map.size() != d.channel_count) throw std::invalid_argument("channel_map length does not match channel_count");
  std::vector<ReceiveElement> out;
  if (d.acquisition_mode == AcquisitionMode::Hercules) {
    const uint32_t lines = d.receive_rows ? g.row_count : g.column_count;
    if (d.channel_count != lines) throw std::invalid_argument("hercules channel_count does not match array lines");
    out.reserve(std::size_t{g.row_count} * g.column_count);
    for (uint32_t r = 0; r < g.row_count; ++r)
      for (uint32_t c = 0; c < g.column_count; ++c) {
        ReceiveElement e;
        e.kind = ReceiveElement::Kind::Point;
        e.position = {c * g.column_pitch, r * g.row_pitch, 0};
        e.index = c + g.column_count * r;
        out.push_back(e);
      }
    return out;
  }
  const uint32_t lines = d.receive_rows ? g.row_count : g.column_count;
  if (d.channel_count != lines) {
    throw std::invalid_argument("channel_count " + std::to_string(d.channel_count) + " does not match " +
                                std::to_string(lines) + " receive lines");
  }
  out.reserve(d.channel_count);
  for (uint32_t ch = 0; ch < d.channel_count; ++ch) {
    ReceiveElement e = rca_element(g, d.receive_rows, map[ch]);
    e.index = ch;
    out.push_back(e);
  }
  return out;
}

TransmitModel to_array_frame(const TransmitModel& m, const ArrayGeometry& g) {
  if (const auto* p = std::get_if<PlaneTransmit>(&m)) {
    return PlaneTransmit{g.global_to_array.transform_direction(p->direction)};
  }
  if (const auto* v = std::get_if<VirtualSourceTransmit>(&m)) {
    return VirtualSourceTransmit{g.global_to_array.transform_point(v->focus)};
  }
  return m;
}

double tof_transmit(const TransmitModel& m, Vec3 q, double c, const ArrayGeometry& g, bool transmit_rows) {
  if (const auto* e = std::get_if<ElementTransmit>(&m)) {
    return tof_receive(rca_element(g, transmit_rows, e->index), q, c);
  }
  if (const auto* p = std::get_if<PlaneTransmit>(&m)) return dot(q, p->direction) / c;
  const Vec3 f = std::get<VirtualSourceTransmit>(m).focus;
  const double sign = q.z >= f.z ? 1.0 : -1.0;
  return (norm(f) + sign * norm(q - f)) / c;
}

double tof_receive(const ReceiveElement& e, Vec3 q, double c) {
  const Vec3 d = q - e.position;
  if (e.kind == ReceiveElement::Kind::Line) return norm(perpendicular(d, e.axis)) / c;
  return norm(d) / c;
}

double apodization(const ReceiveElement& e, Vec3 q, double f_number) {
  const double u = aperture_u(e, q, f_number);
  if (u >= 0.5) return 0.0;
  const double w = std::cos(std::numbers::pi * u);
  return w * w;
}

std::complex<double> interpolate(std::span<const cf32> s, double t, Interpolation mode) {
  const auto n = static_cast<int64_t>(s.size());
  if (!std::isfinite(t)) return {};
  auto at = [&](int64_t i) -> std::complex<double> {
    if (i < 0 || i >= n) return {};
    return {s[static_cast<std::size_t>(i)].real(), s[static_cast<std::size_t>(i)].imag()};
  };
  if (t < -2.0 || t > static_cast<double>(n) + 1.0) return {};
  switch (mode) {
    case Interpolation::Nearest: return at(static_cast<int64_t>(std::round(t)));
    case Interpolation::Linear: {
      const double fl = std::floor(t);
      const auto i = static_cast<int64_t>(fl);
      const double f = t - fl;
      if (f == 0) return at(i);
      return at(i) * (1.0 - f) + at(i + 1) * f;
    }
    case Interpolation::CubicHermite: {
      const double fl = std::floor(t);
      const auto i = static_cast<int64_t>(fl);
      const double f = t - fl;
      const std::complex<double> p1 = at(i);
      if (f == 0) return p1;
      const std::complex<double> p0 = at(i - 1), p2 = at(i + 1), p3 = at(i + 2);
      return p1 + 0.5 * f * (p2 - p0 + f * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + f * (3.0 * (p1 - p2) + p3 - p0)));
    }
  }
  return {};
}

std::vector<TransmitModel> resolve_transmits(const AcquisitionDescriptor& d, const BeamformParams& p) {
  std::vector<TransmitModel> models = !p.transmit.empty() ? p.transmit : d.transmit_models;
  switch (d.acquisition_mode) {
    case AcquisitionMode::Hercules:
      if (models.empty()) return {PlaneTransmit{}};
      return {models.front()};
    case AcquisitionMode::Forces:
    case AcquisitionMode::UForces:
    case AcquisitionMode::RawSa:
      if (models.empty()) {
        for (uint32_t i = 0; i < d.transmit_count; ++i) models.emplace_back(ElementTransmit{i});
      }
      break;
    case AcquisitionMode::Flash:
      if (models.empty()) models.emplace_back(PlaneTransmit{});
      break;
    case AcquisitionMode::Tpw:
    case AcquisitionMode::Vls:
      if (models.empty()) throw std::invalid_argument("transmit sequence required for " + std::string(to_string(d.acquisition_mode)));
      break;
  }
  if (models.size() == 1 && d.transmit_count > 1) models.assign(d.transmit_count, models.front());
  if (models.size() != d.transmit_count) throw std::invalid_argument("transmit sequence length does not match transmit_count");
  return models;
}

DasPlan::DasPlan(const AcquisitionDescriptor& d, const ArrayGeometry& g, const BeamformParams& p)
    : descriptor_(d), geometry_(g), params_(p), shape_(shape_of(d)) {
  if (!(d.sound_speed > 0)) throw std::invalid_argument("das: sound_speed must be positive");
  if (!(p.f_number > 0)) throw std::invalid_argument("das: f_number must be positive");
  for (const auto& m : resolve_transmits(d, p)) transmits_.push_back(to_array_frame(m, g));

  const std::size_t S = d.sample_count;
  const std::size_t C = d.channel_count;
  const std::vector<ReceiveElement> rx = receive_aperture(g, d);
  if (d.acquisition_mode == AcquisitionMode::Hercules) {
    const uint32_t encoded = d.receive_rows ? g.column_count : g.row_count;
    if (d.transmit_count != encoded) throw std::invalid_argument("hercules decoded transmit_count does not match array");
    const std::vector<uint32_t> map = d.channel_map.empty() ? identity_channel_map(d.channel_count) : d.channel_map;
    std::vector<uint32_t> inverse(map.size());
    for (uint32_t ch = 0; ch < map.size(); ++ch) inverse.at(map[ch]) = ch;
    for (const ReceiveElement& e : rx) {
      const uint32_t col = e.index % g.column_count;
      const uint32_t row = e.index / g.column_count;
      const uint32_t ch = inverse[d.receive_rows ? row : col];
      const uint32_t enc = d.receive_rows ? col : row;
      channels_.push_back({e, (enc * C + ch) * S, 0});
    }
  } else {
    for (const ReceiveElement& e : rx) channels_.push_back({e, e.index * S, C * S});
  }

  points_.reserve(p.point_count());
  for (uint32_t k = 0; k < p.points[2]; ++k)
    for (uint32_t j = 0; j < p.points[1]; ++j)
      for (uint32_t i = 0; i < p.points[0]; ++i)
        points_.push_back(g.global_to_array.transform_point(grid_index_to_point(p, {i, j, k})));
}

ImageFrame DasPlan::run(const Block<cf32>& block, const DasOptions& options) const {
  check_block(block, descriptor_);
  const TermContext k = context_for(descriptor_, params_);
  const double c = descriptor_.sound_speed;
  const auto [Nx, Ny, Nz] = params_.points;
  const uint32_t tx = static_cast<uint32_t>(transmits_.size());
  const std::size_t S = shape_.samples;

  ImageFrame img;
  img.dims = params_.points;
  img.values.assign(params_.point_count(), cf32{});
  img.points_beamformed = params_.point_count();
  img.non_finite_input = any_non_finite(block);

  const uint32_t tiles_x = (Nx + kTileX - 1) / kTileX;
  const uint32_t tiles_y = (Ny + kTileY - 1) / kTileY;
  const uint32_t tiles_z = (Nz + kTileZ - 1) / kTileZ;
  const std::size_t tile_count = std::size_t{tiles_x} * tiles_y * tiles_z;

  parallel_for(tile_count, options.workers, [&](std::size_t tile) {
    const uint32_t ti = static_cast<uint32_t>(tile % tiles_x);
    const uint32_t tj = static_cast<uint32_t>((tile / tiles_x) % tiles_y);
    const uint32_t tk = static_cast<uint32_t>(tile / (std::size_t{tiles_x} * tiles_y));
    std::vector<std::size_t> idx;
    idx.reserve(kTileX * kTileY * kTileZ);
    for (uint32_t z = tk * kTileZ; z < std::min(Nz, (tk + 1) * kTileZ); ++z)
      for (uint32_t y = tj * kTileY; y < std::min(Ny, (tj + 1) * kTileY); ++y)
        for (uint32_t x = ti * kTileX; x < std::min(Nx, (ti + 1) * kTileX); ++x)
          idx.push_back(x + std::size_t{Nx} * (y + std::size_t{Ny} * z));
    const std::size_t P = idx.size();

    std::vector<double> tx_tof(std::size_t{tx} * P);
    for (uint32_t i = 0; i < tx; ++i)
      for (std::size_t p = 0; p < P; ++p)
        tx_tof[i * P + p] = tof_transmit(transmits_[i], points_[idx[p]], c, geometry_, descriptor_.transmit_rows);

    // exp(j 2 pi fd tau) factors into a transmit part and a receive part.
    std::vector<std::complex<double>> tx_rot(k.rotate ? tx_tof.size() : 0);
    for (std::size_t n = 0; n < tx_rot.size(); ++n) tx_rot[n] = rotation(tx_tof[n], k.fd);

    std::vector<std::complex<double>> sum(P);
    std::vector<double> energy(P, 0.0);
    std::vector<uint32_t> nonzero(P, 0);
    std::vector<double> rx_tof(P), weight(P);
    std::vector<std::complex<double>> rx_rot(P);
    std::vector<uint8_t> active(P);

    for (const Channel& ch : channels_) {
      bool any = false;
      for (std::size_t p = 0; p < P; ++p) {
        const Vec3 q = points_[idx[p]];
        if (options.apodization_skip && aperture_u(ch.element, q, params_.f_number) >= 0.5) {
          active[p] = 0;
          continue;
        }
        active[p] = 1;
        any = true;
        rx_tof[p] = tof_receive(ch.element, q, c);
        weight[p] = apodization(ch.element, q, params_.f_number);
        if (k.rotate) rx_rot[p] = weight[p] * rotation(rx_tof[p], k.fd);
      }
      if (!any) continue;
      for (uint32_t i = 0; i < tx; ++i) {
        const std::span<const cf32> seq(block.data.data() + ch.base + i * ch.stride, S);
        const double* tt = tx_tof.data() + std::size_t{i} * P;
        const std::complex<double>* tr = k.rotate ? tx_rot.data() + std::size_t{i} * P : nullptr;
        for (std::size_t p = 0; p < P; ++p) {
          if (!active[p]) continue;
          const std::complex<double> x = interpolate_fast(seq, (tt[p] + rx_tof[p] - k.t0) * k.fs, k.mode);
          const std::complex<double> v = k.rotate ? cmul(x, cmul(tr[p], rx_rot[p])) : weight[p] * x;
          sum[p] += v;
          if (params_.coherence_weighting) {
            const double e = std::norm(v);
            energy[p] += e;
            if (e > 0) ++nonzero[p];
          }
        }
      }
    }
    for (std::size_t p = 0; p < P; ++p)
      finish_point(sum[p], energy[p], nonzero[p], params_.coherence_weighting, img.values[idx[p]]);
  });
  return img;
}

ImageFrame das(const Block<cf32>& block, const AcquisitionDescriptor& decoded, const ArrayGeometry& g,
               const BeamformParams& p, const DasOptions& options) {
  return DasPlan(decoded, g, p).run(block, options);
}

ImageFrame das_reference(const Block<cf32>& block, const AcquisitionDescriptor& d, const ArrayGeometry& g,
                         const BeamformParams& p) {
  const DasPlan plan(d, g, p);
  check_block(block, d);
  const TermContext k = context_for(d, p);
  const double c = d.sound_speed;
  ImageFrame img;
  img.dims = p.points;
  img.values.assign(p.point_count(), cf32{});
  img.points_beamformed = p.point_count();
  img.non_finite_input = any_non_finite(block);
  for (std::size_t pt = 0; pt < plan.points_.size(); ++pt) {
    const Vec3 q = plan.points_[pt];
    std::complex<double> sum;
    double energy = 0;
    uint32_t nonzero = 0;
    for (const DasPlan::Channel& ch : plan.channels_) {
      for (std::size_t i = 0; i < plan.transmits_.size(); ++i) {
        const std::span<const cf32> seq(block.data.data() + ch.base + i * ch.stride, d.sample_count);
        const double tau = tof_transmit(plan.transmits_[i], q, c, g, d.transmit_rows) + tof_receive(ch.element, q, c);
        const std::complex<double> v = term(seq, tau, apodization(ch.element, q, p.f_number), k);
        sum += v;
        const double e = std::norm(v);
        energy += e;
        if (e > 0) ++nonzero;
      }
    }
    finish_point(sum, energy, nonzero, p.coherence_weighting, img.values[pt]);
  }
  return img;
}

std::vector<float> envelope(const ImageFrame& image) {
  std::vector<float> out(image.values.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(image.values[i]);
  return out;
}

ImageFrame analytic_along_z(const ImageFrame& image, const FirFilter& hilbert) {
  ImageFrame out = image;
  const auto [Nx, Ny, Nz] = image.dims;
  std::vector<float> line(Nz);
  for (uint32_t j = 0; j < Ny; ++j)
    for (uint32_t i = 0; i < Nx; ++i) {
      for (uint32_t z = 0; z < Nz; ++z) line[z] = image.at(i, j, z).real();
      const std::vector<cf32> a = analytic_signal(line, hilbert);
      for (uint32_t z = 0; z < Nz; ++z) out.at(i, j, z) = a[z];
    }
  return out;
}

}  // namespace rcbf
