#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <random>

#include "../support/oracles.hpp"
#include "rcbf/io.hpp"

using namespace rcbf;
using namespace rcbf::testing;

namespace {
std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("rcbf_test_" + std::to_string(::getpid()) + "_" + name);
}

uint32_t le32(const std::vector<uint8_t>& b, std::size_t at) {
  return b[at] | (b[at + 1] << 8) | (b[at + 2] << 16) | (uint32_t{b[at + 3]} << 24);
}
}  // namespace

TEST_CASE("dataset header") {
  std::mt19937_64 rng(31);
  const RfFrame f = sample_frames(rng).front();
  const auto bytes = encode_dataset(f, ArrayGeometry::centered(1, 8, 0.3e-3, 0.3e-3));
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "RCBF");
  CHECK(le32(bytes, 4) == kDatasetVersion);
  CHECK(bytes.size() > f.descriptor.payload_bytes());
}

TEST_CASE("dataset errors are classified") {
  std::mt19937_64 rng(32);
  const RfFrame f = sample_frames(rng).front();
  auto bytes = encode_dataset(f, ArrayGeometry::centered(1, 8, 0.3e-3, 0.3e-3));
  auto kind_of = [](const std::vector<uint8_t>& b) {
    try {
      decode_dataset(b);
    } catch (const DatasetError& e) {
      return e.kind();
    }
    FAIL("no error");
    return DatasetError::Kind::Io;
  };
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK(kind_of(bad_magic) == DatasetError::Kind::BadMagic);
  auto bad_version = bytes;
  bad_version[4] = 99;
  CHECK(kind_of(bad_version) == DatasetError::Kind::VersionMismatch);
  auto truncated = bytes;
  truncated.resize(truncated.size() - 3);
  CHECK(kind_of(truncated) == DatasetError::Kind::Truncated);
  CHECK(kind_of({}) != DatasetError::Kind::Io);
  CHECK_THROWS_AS(read_dataset(temp_path("missing.rcbf")), DatasetError);
}

TEST_CASE("dataset file round trip") {
  std::mt19937_64 rng(33);
  const RfFrame f = sample_frames(rng)[7];
  const ArrayGeometry g = ArrayGeometry::centered(2, 8, 0.2e-3, 0.3e-3);
  const auto path = temp_path("roundtrip.rcbf");
  write_dataset(path, f, g);
  const Dataset d = read_dataset(path);
  std::filesystem::remove(path);
  CHECK(d.geometry == g);
  CHECK(d.frame.descriptor == f.descriptor);
  CHECK(buffers_bit_equal(d.frame.data, f.data));
}

TEST_CASE("parameter file parsing") {
  const std::string text =
      "# shared\n"
      "beamform.f_number = 1.5\n"
      "display.mode=power\n"
      "[set 2]\n"
      "beamform.points = 4, 1, 8\n"
      "beamform.interpolation = linear\n"
      "[set 5]\n"
      "display.dynamic_range_db = 40\n";
  const auto sets = parse_params(text);
  REQUIRE(sets.size() == 2);
  CHECK(sets[0].id == 2);
  CHECK(sets[0].beamform.f_number == 1.5);
  CHECK(sets[0].beamform.points == std::array<uint32_t, 3>{4, 1, 8});
  CHECK(sets[0].beamform.interpolation == Interpolation::Linear);
  CHECK(sets[0].display.mode == DisplayMode::Power);
  CHECK(sets[1].id == 5);
  CHECK(sets[1].display.dynamic_range_db == 40);
  CHECK(sets[1].beamform.f_number == 1.5);
}

TEST_CASE("parameter file errors carry the line") {
  try {
    parse_params("beamform.f_number=1\nbeamform.nonsense=3\n");
    FAIL("expected error");
  } catch (const ParamsError& e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(parse_params("beamform.points = 1,2\n"), ParamsError);
  CHECK_THROWS_AS(parse_params("display.mode = sideways\n"), ParamsError);
  CHECK_THROWS_AS(parse_params("no equals sign\n"), ParamsError);
}

TEST_CASE("parameter serialization round trips") {
  std::mt19937_64 rng(34);
  const auto sets = sample_parameter_sets(rng);
  const auto path = temp_path("params.txt");
  write_params(path, sets);
  const auto back = read_params(path);
  std::filesystem::remove(path);
  CHECK(back == sets);
  CHECK(param_keys().size() >= 30);
  for (const auto& [k, v] : param_values(sets[3])) {
    ParameterSet s;
    CHECK_NOTHROW(apply_param(s, k, v));
  }
}

TEST_CASE("transmit model text round trips") {
  const std::vector<TransmitModel> m{ElementTransmit{3}, PlaneTransmit{{0.6, 0, 0.8}},
                                     VirtualSourceTransmit{{1e-3, -2e-3, -1.0 / 3}}};
  CHECK(parse_transmit_models(format_transmit_models(m)) == m);
  CHECK_THROWS(parse_transmit_models("banana(1)"));
}

TEST_CASE("display transform") {
  ImageFrame img;
  img.dims = {4, 1, 1};
  img.values = {cf32(1, 0), cf32(0, std::pow(10.0f, -0.75f)), cf32(0, 0), cf32(1e-9f, 0)};
  DisplaySettings s;
  s.dynamic_range_db = 60;
  Gray8 g = display_transform(img, s);
  CHECK(g.pixels[0] == 255);
  CHECK(g.pixels[1] == 191);
  CHECK(g.pixels[2] == 0);
  CHECK(g.pixels[3] == 0);

  s.mode = DisplayMode::Power;
  s.power_threshold = 0.1;
  img.values[1] = cf32(std::sqrt(0.7f), 0);
  g = display_transform(img, s);
  CHECK(g.pixels[0] == 255);
  CHECK(g.pixels[1] == 170);

  img.values[2] = cf32(NAN, 0);
  g = display_transform(img, s);
  CHECK(g.pixels[0] == 255);
  CHECK(g.pixels[2] == 0);
}

TEST_CASE("binary image payloads") {
  const auto h = dims_header({3, 2, 1}, 7);
  REQUIRE(h.size() == 16);
  CHECK(le32(h, 0) == 3);
  CHECK(le32(h, 4) == 2);
  CHECK(le32(h, 8) == 1);
  CHECK(le32(h, 12) == 7);
  Gray8 g;
  g.dims = {3, 1, 2};
  g.pixels = {1, 2, 3, 4, 5, 6};
  const auto gb = encode_gray8(g);
  CHECK(gb.size() == 22);
  CHECK(gb[16] == 1);
  const auto pgm = encode_pgm(g);
  CHECK(std::string(pgm.begin(), pgm.begin() + 11) == "P5\n3 2\n255\n");
  g.dims = {2, 2, 2};
  g.pixels.resize(8);
  CHECK_THROWS(encode_pgm(g));

  ImageFrame img;
  img.dims = {2, 1, 1};
  img.values = {cf32(1.5f, -2), cf32(0, 3)};
  const auto raw = encode_raw_f32(img);
  CHECK(raw.size() == 16 + 16);
  CHECK_THROWS(decode_raw_f32(std::span<const uint8_t>(raw.data(), raw.size() - 1)));
}

TEST_CASE("image export") {
  ImageFrame img;
  img.dims = {2, 1, 3};
  img.values.assign(6, cf32(1, 1));
  const auto raw = temp_path("img.raw");
  const auto pgm = temp_path("img.pgm");
  export_image(img, {}, raw, ImageFormat::RawF32);
  export_image(img, {}, pgm, ImageFormat::Pgm8);
  CHECK(bit_equal(read_raw_f32(raw).values, img.values));
  CHECK(read_file(pgm).size() == 11 + 6);
  std::filesystem::remove(raw);
  std::filesystem::remove(pgm);
}
