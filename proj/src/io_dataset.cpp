#include <fstream>
#include <iterator>

#include "bytes.hpp"
#include "rcbf/io.hpp"

namespace rcbf {

using detail::ByteReader;
using detail::ByteWriter;

namespace {

constexpr char kMagic[4] = {'R', 'C', 'B', 'F'};
constexpr uint32_t kMaxListLength = 1u << 20;

void write_models(ByteWriter& w, const std::vector<TransmitModel>& models) {
  w.u32(static_cast<uint32_t>(models.size()));
  for (const auto& m : models) {
    w.u32(static_cast<uint32_t>(m.index()));
    if (const auto* e = std::get_if<ElementTransmit>(&m)) {
      w.u32(e->index);
      w.f64(0);
      w.f64(0);
      w.f64(0);
      continue;
    }
    const Vec3 v = std::holds_alternative<PlaneTransmit>(m) ? std::get<PlaneTransmit>(m).direction
                                                            : std::get<VirtualSourceTransmit>(m).focus;
    w.u32(0);
    w.f64(v.x);
    w.f64(v.y);
    w.f64(v.z);
  }
}

[[noreturn]] void truncated(const ByteReader& r, std::size_t total) {
  throw DatasetError(DatasetError::Kind::Truncated,
                     "dataset header truncated: " + std::to_string(total) + " bytes, header needs more than " +
                         std::to_string(r.offset()));
}

uint32_t checked_length(ByteReader& r, std::size_t total, const char* what) {
  const uint32_t n = r.u32();
  if (!r.ok()) truncated(r, total);
  if (n > kMaxListLength) {
    throw DatasetError(DatasetError::Kind::Inconsistent, std::string(what) + " length " + std::to_string(n) + " is implausible");
  }
  return n;
}

}  // namespace

std::vector<uint8_t> encode_dataset(const RfFrame& frame, const ArrayGeometry& g) {
  const AcquisitionDescriptor& d = frame.descriptor;
  if (sample_buffer_size(frame.data) != d.total_samples() || sample_buffer_format(frame.data) != d.format)
    throw std::invalid_argument("encode_dataset: data does not match descriptor");
  std::vector<uint8_t> out;
  out.reserve(256 + d.payload_bytes());
  ByteWriter w(out);
  for (char ch : kMagic) w.u8(static_cast<uint8_t>(ch));
  w.u32(kDatasetVersion);
  w.u32(d.sample_count);
  w.u32(d.channel_count);
  w.u32(d.transmit_count);
  w.u32(static_cast<uint32_t>(d.format));
  w.f64(d.sampling_freq);
  w.f64(d.demodulation_freq);
  w.f64(d.sound_speed);
  w.f64(d.time_offset);
  w.u32(static_cast<uint32_t>(d.acquisition_mode));
  w.u8(d.transmit_rows);
  w.u8(d.receive_rows);
  w.u8(d.quadrature_sampled);
  w.u8(d.sparse_transmit_indices.has_value());
  const auto sparse = d.sparse_transmit_indices.value_or(std::vector<uint32_t>{});
  w.u32(static_cast<uint32_t>(sparse.size()));
  for (uint32_t v : sparse) w.u32(v);
  w.u32(static_cast<uint32_t>(d.channel_map.size()));
  for (uint32_t v : d.channel_map) w.u32(v);
  write_models(w, d.transmit_models);

  w.f64(g.row_pitch);
  w.f64(g.column_pitch);
  w.u32(g.row_count);
  w.u32(g.column_count);
  for (double v : g.global_to_array.m) w.f64(v);

  w.u64(d.payload_bytes());
  std::visit(
      [&](const auto& v) {
        using T = typename std::decay_t<decltype(v)>::value_type;
        for (const T& x : v) {
          if constexpr (std::is_same_v<T, int16_t>) w.i16(x);
          else if constexpr (std::is_same_v<T, ci16>) {
            w.i16(x.re);
            w.i16(x.im);
          } else if constexpr (std::is_same_v<T, float>) w.f32(x);
          else {
            w.f32(x.real());
            w.f32(x.imag());
          }
        }
      },
      frame.data);
  return out;
}

Dataset decode_dataset(std::span<const uint8_t> bytes) {
  ByteReader r(bytes);
  const auto magic = r.bytes(4);
  if (!r.ok() || !std::equal(magic.begin(), magic.end(), kMagic))
    throw DatasetError(DatasetError::Kind::BadMagic, "not an RCBF dataset (bad magic)");
  const uint32_t version = r.u32();
  if (!r.ok()) truncated(r, bytes.size());
  if (version != kDatasetVersion)
    throw DatasetError(DatasetError::Kind::VersionMismatch,
                       "dataset version " + std::to_string(version) + ", expected " + std::to_string(kDatasetVersion));

  Dataset ds;
  AcquisitionDescriptor& d = ds.frame.descriptor;
  d.sample_count = r.u32();
  d.channel_count = r.u32();
  d.transmit_count = r.u32();
  const uint32_t format = r.u32();
  d.sampling_freq = r.f64();
  d.demodulation_freq = r.f64();
  d.sound_speed = r.f64();
  d.time_offset = r.f64();
  const uint32_t mode = r.u32();
  d.transmit_rows = r.u8() != 0;
  d.receive_rows = r.u8() != 0;
  d.quadrature_sampled = r.u8() != 0;
  const bool has_sparse = r.u8() != 0;
  if (!r.ok()) truncated(r, bytes.size());
  if (format > 3) throw DatasetError(DatasetError::Kind::Inconsistent, "unknown sample format " + std::to_string(format));
  if (mode > 6) throw DatasetError(DatasetError::Kind::Inconsistent, "unknown acquisition mode " + std::to_string(mode));
  d.format = static_cast<SampleFormat>(format);
  d.acquisition_mode = static_cast<AcquisitionMode>(mode);

  std::vector<uint32_t> sparse(checked_length(r, bytes.size(), "sparse_transmit_indices"));
  for (auto& v : sparse) v = r.u32();
  if (has_sparse) d.sparse_transmit_indices = std::move(sparse);
  d.channel_map.resize(checked_length(r, bytes.size(), "channel_map"));
  for (auto& v : d.channel_map) v = r.u32();
  const uint32_t models = checked_length(r, bytes.size(), "transmit_models");
  for (uint32_t i = 0; i < models; ++i) {
    const uint32_t kind = r.u32();
    const uint32_t index = r.u32();
    const Vec3 v{r.f64(), r.f64(), r.f64()};
    if (!r.ok()) truncated(r, bytes.size());
    switch (kind) {
      case 0: d.transmit_models.emplace_back(ElementTransmit{index}); break;
      case 1: d.transmit_models.emplace_back(PlaneTransmit{v}); break;
      case 2: d.transmit_models.emplace_back(VirtualSourceTransmit{v}); break;
      default: throw DatasetError(DatasetError::Kind::Inconsistent, "unknown transmit model kind " + std::to_string(kind));
    }
  }

  ArrayGeometry& g = ds.geometry;
  g.row_pitch = r.f64();
  g.column_pitch = r.f64();
  g.row_count = r.u32();
  g.column_count = r.u32();
  for (double& v : g.global_to_array.m) v = r.f64();
  const uint64_t payload = r.u64();
  if (!r.ok()) truncated(r, bytes.size());

  if (payload != d.payload_bytes()) {
    throw DatasetError(DatasetError::Kind::Inconsistent, "payload length " + std::to_string(payload) +
                                                             " does not match descriptor (" +
                                                             std::to_string(d.payload_bytes()) + " bytes)");
  }
  if (r.remaining() < payload) {
    throw DatasetError(DatasetError::Kind::Truncated, "payload truncated: expected " + std::to_string(payload) +
                                                          " bytes, found " + std::to_string(r.remaining()));
  }
  ds.frame.data = make_sample_buffer(d.format, d.total_samples());
  std::visit(
      [&](auto& v) {
        using T = typename std::decay_t<decltype(v)>::value_type;
        for (T& x : v) {
          if constexpr (std::is_same_v<T, int16_t>) x = r.i16();
          else if constexpr (std::is_same_v<T, ci16>) {
            x.re = r.i16();
            x.im = r.i16();
          } else if constexpr (std::is_same_v<T, float>) x = r.f32();
          else {
            const float re = r.f32();
            const float im = r.f32();
            x = cf32(re, im);
          }
        }
      },
      ds.frame.data);
  return ds;
}

std::vector<uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError(DatasetError::Kind::Io, "cannot open " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw DatasetError(DatasetError::Kind::Io, "read failed: " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DatasetError(DatasetError::Kind::Io, "cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DatasetError(DatasetError::Kind::Io, "write failed: " + path.string());
}

void write_dataset(const std::filesystem::path& path, const RfFrame& frame, const ArrayGeometry& geometry) {
  write_file(path, encode_dataset(frame, geometry));
}

Dataset read_dataset(const std::filesystem::path& path) { return decode_dataset(read_file(path)); }

}  // namespace rcbf
