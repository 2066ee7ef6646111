#include <doctest.h>

#include <cmath>
#include <numbers>

#include "rcbf/model.hpp"

using namespace rcbf;

namespace {
AcquisitionDescriptor forces(uint32_t tx, uint32_t ch) {
  AcquisitionDescriptor d;
  d.acquisition_mode = AcquisitionMode::Forces;
  d.transmit_count = tx;
  d.channel_count = ch;
  d.sample_count = 64;
  d.channel_map = identity_channel_map(ch);
  return d;
}

bool has_field(const std::vector<Violation>& v, const std::string& field) {
  for (const auto& x : v)
    if (x.field == field) return true;
  return false;
}
}  // namespace

TEST_CASE("enum names round trip") {
  for (auto f : {SampleFormat::Int16, SampleFormat::Int16Complex, SampleFormat::Float32, SampleFormat::Float32Complex})
    CHECK(parse_sample_format(to_string(f)) == f);
  for (auto m : {AcquisitionMode::Forces, AcquisitionMode::UForces, AcquisitionMode::Hercules, AcquisitionMode::Vls,
                 AcquisitionMode::Tpw, AcquisitionMode::Flash, AcquisitionMode::RawSa})
    CHECK(parse_acquisition_mode(to_string(m)) == m);
  for (auto i : {Interpolation::Nearest, Interpolation::Linear, Interpolation::CubicHermite})
    CHECK(parse_interpolation(to_string(i)) == i);
  CHECK_FALSE(parse_sample_format("int8").has_value());
}

TEST_CASE("element sizes and payload") {
  CHECK(element_size(SampleFormat::Int16) == 2);
  CHECK(element_size(SampleFormat::Int16Complex) == 4);
  CHECK(element_size(SampleFormat::Float32) == 4);
  CHECK(element_size(SampleFormat::Float32Complex) == 8);
  AcquisitionDescriptor d = forces(16, 32);
  d.format = SampleFormat::Int16Complex;
  CHECK(d.payload_bytes() == 64u * 32 * 16 * 4);
}

TEST_CASE("descriptor validation") {
  CHECK(validate_descriptor(forces(16, 32)).empty());
  CHECK(has_field(validate_descriptor(forces(12, 32)), "transmit_count"));

  AcquisitionDescriptor u = forces(3, 16);
  u.acquisition_mode = AcquisitionMode::UForces;
  CHECK(has_field(validate_descriptor(u), "sparse_transmit_indices"));
  u.sparse_transmit_indices = std::vector<uint32_t>{1, 4, 9};
  CHECK(validate_descriptor(u).empty());
  u.sparse_transmit_indices = std::vector<uint32_t>{1, 4, 16};
  CHECK(has_field(validate_descriptor(u), "sparse_transmit_indices"));
  u.sparse_transmit_indices = std::vector<uint32_t>{4, 1, 9};
  CHECK(has_field(validate_descriptor(u), "sparse_transmit_indices"));

  AcquisitionDescriptor bad = forces(16, 4);
  bad.channel_map = {0, 1, 1, 3};
  CHECK(has_field(validate_descriptor(bad), "channel_map"));
  bad.channel_map = {0, 1, 2};
  CHECK(has_field(validate_descriptor(bad), "channel_map"));

  AcquisitionDescriptor big = forces(256, 4096);
  big.sample_count = 4096;
  big.format = SampleFormat::Float32Complex;
  CHECK(has_field(validate_descriptor(big), "payload"));

  AcquisitionDescriptor q = forces(16, 4);
  q.sampling_freq = 0;
  q.sound_speed = -1;
  CHECK(has_field(validate_descriptor(q), "sampling_freq"));
  CHECK(has_field(validate_descriptor(q), "sound_speed"));

  AcquisitionDescriptor pw = forces(2, 4);
  pw.acquisition_mode = AcquisitionMode::Tpw;
  pw.transmit_models = {PlaneTransmit{{0, 0, 2}}};
  CHECK(has_field(validate_descriptor(pw), "transmit_models"));
}

TEST_CASE("geometry and params validation") {
  CHECK(validate_geometry(ArrayGeometry::centered(8, 8, 0.2e-3, 0.2e-3)).empty());
  ArrayGeometry g;
  g.row_pitch = 0;
  g.global_to_array(0, 0) = 2;
  CHECK(has_field(validate_geometry(g), "row_pitch"));
  CHECK(has_field(validate_geometry(g), "global_to_array"));

  BeamformParams p;
  CHECK(validate_params(p).empty());
  p.points[0] = 0;
  p.f_number = 0;
  CHECK(has_field(validate_params(p), "points"));
  CHECK(has_field(validate_params(p), "f_number"));
}

TEST_CASE("centered geometry puts the aperture centre at the origin") {
  const ArrayGeometry g = ArrayGeometry::centered(4, 8, 0.2e-3, 0.3e-3);
  const Vec3 a = g.global_to_array.transform_point({0, 0, 0});
  CHECK(a.x == doctest::Approx(3.5 * 0.3e-3));
  CHECK(a.y == doctest::Approx(1.5 * 0.2e-3));
  CHECK(g.global_to_array.is_rigid());
}

TEST_CASE("rotation matrices are rigid and compose") {
  const Mat4 r = Mat4::rotation_z(std::numbers::pi / 2);
  const Vec3 v = r.transform_direction({1, 0, 0});
  CHECK(v.x == doctest::Approx(0).epsilon(1e-12));
  CHECK(v.y == doctest::Approx(1));
  CHECK(r.is_rigid());
  const Mat4 back = Mat4::rotation_z(-std::numbers::pi / 2) * r;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) CHECK(back(i, j) == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-12));
}

TEST_CASE("grid index mapping") {
  BeamformParams p;
  p.region_min = {-1, 0, 2};
  p.region_max = {1, 0, 4};
  p.points = {3, 1, 5};
  const Vec3 a = grid_index_to_point(p, {0, 0, 0});
  const Vec3 b = grid_index_to_point(p, {2, 0, 4});
  const Vec3 c = grid_index_to_point(p, {1, 0, 2});
  CHECK(a == Vec3{-1, 0, 2});
  CHECK(b == Vec3{1, 0, 4});
  CHECK(c == Vec3{0, 0, 3});
  CHECK_THROWS_AS(grid_index_to_point(p, {3, 0, 0}), std::out_of_range);
  p.output_transform = Mat4::translation({0, 0, 1});
  CHECK(grid_index_to_point(p, {0, 0, 0}).z == doctest::Approx(3));
}

TEST_CASE("sample buffers") {
  const SampleBuffer b = make_sample_buffer(SampleFormat::Int16Complex, 5);
  CHECK(sample_buffer_size(b) == 5);
  CHECK(sample_buffer_format(b) == SampleFormat::Int16Complex);
  CHECK(is_power_of_two(64));
  CHECK_FALSE(is_power_of_two(0));
  CHECK_FALSE(is_power_of_two(96));
}
