#include <algorithm>
#include <cfenv>
#include <cmath>

#include "bytes.hpp"
#include "rcbf/io.hpp"

namespace rcbf {

using detail::ByteReader;
using detail::ByteWriter;

namespace {

uint8_t to_gray(double g) {
  // nearbyint follows the default round-to-nearest-even mode.
  return static_cast<uint8_t>(std::clamp(std::nearbyint(g * 255.0), 0.0, 255.0));
}

}  // namespace

Gray8 display_transform(const ImageFrame& image, const DisplaySettings& s) {
  Gray8 out;
  out.dims = image.dims;
  out.pixels.assign(image.values.size(), 0);
  double max_env = 0;
  for (const cf32& v : image.values) {
    const double e = std::abs(std::complex<double>(v.real(), v.imag()));
    if (std::isfinite(e)) max_env = std::max(max_env, e);
  }
  if (max_env == 0) return out;
  for (std::size_t i = 0; i < image.values.size(); ++i) {
    const double env = std::abs(std::complex<double>(image.values[i].real(), image.values[i].imag()));
    if (!std::isfinite(env)) continue;
    const double r = env / max_env;
    double g = 0;
    if (s.mode == DisplayMode::Log) {
      const double dr = s.dynamic_range_db;
      const double db = r > 0 ? 20.0 * std::log10(r) : -dr;
      g = std::clamp(db, -dr, 0.0) / dr + 1.0;
    } else {
      const double th = s.power_threshold;
      g = std::clamp(r * r - th, 0.0, 1.0 - th) / (1.0 - th);
    }
    out.pixels[i] = to_gray(g);
  }
  return out;
}

std::vector<uint8_t> dims_header(std::array<uint32_t, 3> dims, uint32_t reserved) {
  std::vector<uint8_t> out;
  ByteWriter w(out);
  for (uint32_t d : dims) w.u32(d);
  w.u32(reserved);
  return out;
}

std::vector<uint8_t> encode_gray8(const Gray8& g) {
  std::vector<uint8_t> out = dims_header(g.dims);
  out.insert(out.end(), g.pixels.begin(), g.pixels.end());
  return out;
}

std::vector<uint8_t> encode_raw_f32(const ImageFrame& image) {
  std::vector<uint8_t> out = dims_header(image.dims);
  out.reserve(16 + image.values.size() * 8);
  ByteWriter w(out);
  for (const cf32& v : image.values) {
    w.f32(v.real());
    w.f32(v.imag());
  }
  return out;
}

ImageFrame decode_raw_f32(std::span<const uint8_t> bytes) {
  ByteReader r(bytes);
  ImageFrame img;
  for (auto& d : img.dims) d = r.u32();
  r.u32();
  if (!r.ok()) throw std::invalid_argument("raw f32 image: truncated header");
  const std::size_t n = std::size_t{img.dims[0]} * img.dims[1] * img.dims[2];
  if (r.remaining() != n * 8) {
    throw std::invalid_argument("raw f32 image: expected " + std::to_string(n * 8) + " payload bytes, found " +
                                std::to_string(r.remaining()));
  }
  img.values.resize(n);
  for (auto& v : img.values) {
    const float re = r.f32();
    const float im = r.f32();
    v = cf32(re, im);
  }
  return img;
}

std::vector<uint8_t> encode_pgm(const Gray8& g) {
  std::array<uint32_t, 2> axes{0, 1};
  int found = 0;
  for (uint32_t a = 0; a < 3; ++a)
    if (g.dims[a] > 1) {
      if (found == 2) throw std::invalid_argument("pgm export needs a 2D slice");
      axes[static_cast<std::size_t>(found++)] = a;
    }
  if (found == 1) axes = axes[0] == 0 ? std::array<uint32_t, 2>{0, 1} : std::array<uint32_t, 2>{0, axes[0]};
  // Pixels are stored x fastest, then y, then z, so the lower axis is the PGM row direction.
  const uint32_t width = g.dims[axes[0]];
  const uint32_t height = g.dims[axes[1]];
  const std::string header = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::vector<uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), g.pixels.begin(), g.pixels.end());
  return out;
}

void export_image(const ImageFrame& image, const DisplaySettings& display, const std::filesystem::path& path,
                  ImageFormat format) {
  if (format == ImageFormat::Pgm8) write_file(path, encode_pgm(display_transform(image, display)));
  else write_file(path, encode_raw_f32(image));
}

ImageFrame read_raw_f32(const std::filesystem::path& path) { return decode_raw_f32(read_file(path)); }

}  // namespace rcbf
