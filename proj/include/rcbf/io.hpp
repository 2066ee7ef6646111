#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rcbf/model.hpp"
#include "rcbf/pipeline.hpp"

namespace rcbf {

// ---------------------------------------------------------------- dataset container

inline constexpr uint32_t kDatasetVersion = 1;

class DatasetError : public std::runtime_error {
 public:
  enum class Kind { Io, BadMagic, VersionMismatch, Truncated, Inconsistent };
  DatasetError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct Dataset {
  RfFrame frame;
  ArrayGeometry geometry;
};

/// "RCBF", u32 version, descriptor, geometry, u64 payload bytes, payload. Little-endian throughout.
std::vector<uint8_t> encode_dataset(const RfFrame& frame, const ArrayGeometry& geometry);
Dataset decode_dataset(std::span<const uint8_t> bytes);

void write_dataset(const std::filesystem::path& path, const RfFrame& frame, const ArrayGeometry& geometry);
Dataset read_dataset(const std::filesystem::path& path);

// ---------------------------------------------------------------- parameter files

class ParamsError : public std::runtime_error {
 public:
  ParamsError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// key=value lines with section prefixes (acquisition., geometry., beamform., filter., display.),
/// '#' comments and optional "[set N]" blocks. Keys before the first block apply to every set.
std::vector<ParameterSet> parse_params(std::string_view text);
std::string serialize_params(const std::vector<ParameterSet>& sets);

std::vector<ParameterSet> read_params(const std::filesystem::path& path);
void write_params(const std::filesystem::path& path, const std::vector<ParameterSet>& sets);

/// Applies one key=value pair. Throws std::invalid_argument for unknown keys or bad values.
void apply_param(ParameterSet& set, std::string_view key, std::string_view value);
/// Every recognised key, in serialization order.
const std::vector<std::string>& param_keys();
/// (key, value) for every key that applies to `set`, in serialization order.
std::vector<std::pair<std::string, std::string>> param_values(const ParameterSet& set);

std::string format_transmit_models(const std::vector<TransmitModel>& models);
std::vector<TransmitModel> parse_transmit_models(std::string_view text);

// ---------------------------------------------------------------- images

struct Gray8 {
  std::array<uint32_t, 3> dims{0, 0, 0};
  std::vector<uint8_t> pixels;
};

/// Log: 20 log10(|v| / max) clamped to [-DR, 0] mapped onto [0, 255]. Power: |v|^2 / max^2 minus
/// the threshold, clamped and rescaled onto [0, 255]. Ties round to even.
Gray8 display_transform(const ImageFrame& image, const DisplaySettings& settings);

/// 16-byte header: Nx, Ny, Nz, reserved (u32 LE).
std::vector<uint8_t> dims_header(std::array<uint32_t, 3> dims, uint32_t reserved = 0);

/// Header followed by the pixels.
std::vector<uint8_t> encode_gray8(const Gray8& g);
/// Header followed by interleaved (re, im) float32 LE values.
std::vector<uint8_t> encode_raw_f32(const ImageFrame& image);
ImageFrame decode_raw_f32(std::span<const uint8_t> bytes);

/// Binary P5 of a 2D grid (at most two axes longer than 1); the longer-index axis runs down.
std::vector<uint8_t> encode_pgm(const Gray8& g);

enum class ImageFormat { Pgm8, RawF32 };
void export_image(const ImageFrame& image, const DisplaySettings& display, const std::filesystem::path& path,
                  ImageFormat format);
ImageFrame read_raw_f32(const std::filesystem::path& path);

std::vector<uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const uint8_t> bytes);

}  // namespace rcbf
