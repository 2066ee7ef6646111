#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "../support/oracles.hpp"
#include "rcbf/das.hpp"
#include "rcbf/decode.hpp"

using namespace rcbf;
using namespace rcbf::testing;

namespace {
AcquisitionDescriptor decoded_forces(uint32_t n, uint32_t S) {
  AcquisitionDescriptor d;
  d.acquisition_mode = AcquisitionMode::Forces;
  d.channel_count = n;
  d.transmit_count = n;
  d.sample_count = S;
  d.format = SampleFormat::Float32Complex;
  d.sampling_freq = 20e6;
  d.demodulation_freq = 5e6;
  d.channel_map = identity_channel_map(n);
  return d;
}

BeamformParams small_grid() {
  BeamformParams p;
  p.region_min = {-1e-3, 0, 2e-3};
  p.region_max = {1e-3, 0, 5e-3};
  p.points = {9, 1, 11};
  return p;
}

std::vector<TransmitModel> elements(uint32_t n) {
  std::vector<TransmitModel> m;
  for (uint32_t i = 0; i < n; ++i) m.emplace_back(ElementTransmit{i});
  return m;
}
}  // namespace

TEST_CASE("interpolation kernels") {
  const std::vector<cf32> s{{0, 0}, {1, 0}, {4, 0}, {9, 0}, {16, 0}};
  CHECK(interpolate(s, 2.0, Interpolation::CubicHermite).real() == doctest::Approx(4));
  CHECK(interpolate(s, 2.5, Interpolation::Linear).real() == doctest::Approx(6.5));
  CHECK(interpolate(s, 2.4, Interpolation::Nearest).real() == doctest::Approx(4));
  CHECK(interpolate(s, 2.6, Interpolation::Nearest).real() == doctest::Approx(9));
  // Catmull-Rom reproduces quadratics exactly away from the edges.
  CHECK(interpolate(s, 2.25, Interpolation::CubicHermite).real() == doctest::Approx(2.25 * 2.25));
  CHECK(std::abs(interpolate(s, -5.0, Interpolation::CubicHermite)) == 0);
  CHECK(std::abs(interpolate(s, NAN, Interpolation::Linear)) == 0);
}

TEST_CASE("line element time of flight ignores the along-line offset") {
  const ArrayGeometry g = ArrayGeometry::centered(8, 8, 1e-3, 1e-3);
  const ReceiveElement col = rca_element(g, false, 2);
  const ReceiveElement row = rca_element(g, true, 5);
  const Vec3 q{2e-3, 6e-3, 4e-3};
  CHECK(tof_receive(col, q, 1000) == doctest::Approx(4e-6));
  CHECK(tof_receive(row, q, 1000) == doctest::Approx(std::hypot(1e-3, 4e-3) / 1000));
  CHECK_THROWS_AS(rca_element(g, false, 8), std::out_of_range);
}

TEST_CASE("virtual source time of flight changes sign behind the source") {
  const ArrayGeometry g = ArrayGeometry::centered(1, 1, 1e-3, 1e-3);
  const TransmitModel behind = VirtualSourceTransmit{{0, 0, -3e-3}};
  CHECK(tof_transmit(behind, {0, 0, 4e-3}, 1000, g) == doctest::Approx((3e-3 + 7e-3) / 1000));
  const TransmitModel focused = VirtualSourceTransmit{{0, 0, 5e-3}};
  CHECK(tof_transmit(focused, {0, 0, 2e-3}, 1000, g) == doctest::Approx((5e-3 - 3e-3) / 1000));
  CHECK(tof_transmit(PlaneTransmit{{0, 0, 1}}, {1e-3, 0, 2e-3}, 1000, g) == doctest::Approx(2e-6));
}

TEST_CASE("apodization is a Hann window in the f-number aperture") {
  ReceiveElement e;
  e.kind = ReceiveElement::Kind::Point;
  CHECK(apodization(e, {0, 0, 1e-2}, 1.0) == doctest::Approx(1));
  CHECK(apodization(e, {2.5e-3, 0, 1e-2}, 1.0) == doctest::Approx(0.5));
  CHECK(apodization(e, {5e-3, 0, 1e-2}, 1.0) == 0);
  CHECK(apodization(e, {0, 0, 0}, 1.0) == 0);
}

TEST_CASE("das matches the brute-force oracle with a rotated grid and array") {
  std::mt19937_64 rng(21);
  const AcquisitionDescriptor d = decoded_forces(8, 200);
  ArrayGeometry g = ArrayGeometry::centered(8, 8, 0.3e-3, 0.3e-3);
  g.global_to_array = g.global_to_array * Mat4::rotation_z(0.2);
  Block<cf32> b(shape_of(d), Layout::SampleMajor);
  fill_random(b.data, rng);
  BeamformParams p = small_grid();
  p.points = {7, 3, 13};
  p.region_min.y = -0.5e-3;
  p.region_max.y = 0.5e-3;
  p.output_transform = Mat4::rotation_z(-0.4) * Mat4::translation({0.1e-3, 0, 0.2e-3});
  const auto expect = oracle_das(b, d, g, p, elements(8));
  for (unsigned w : {1u, 2u}) {
    DasOptions o;
    o.workers = w;
    CHECK(relative_l2(das(b, d, g, p, o).values, expect) < 1e-5);
  }
  CHECK(relative_l2(das_reference(b, d, g, p).values, expect) < 1e-5);
  DasOptions noskip;
  noskip.apodization_skip = false;
  CHECK(relative_l2(das(b, d, g, p, noskip).values, expect) < 1e-5);
}

TEST_CASE("rf data beamforms without rotation") {
  std::mt19937_64 rng(22);
  AcquisitionDescriptor d = decoded_forces(4, 120);
  d.demodulation_freq = 0;
  const ArrayGeometry g = ArrayGeometry::centered(1, 4, 0.3e-3, 0.3e-3);
  Block<cf32> b(shape_of(d), Layout::SampleMajor);
  fill_random(b.data, rng);
  const BeamformParams p = small_grid();
  CHECK(relative_l2(das(b, d, g, p).values, oracle_das(b, d, g, p, elements(4))) < 1e-5);
}

TEST_CASE("coherence factor of identical terms is one") {
  AcquisitionDescriptor d = decoded_forces(1, 64);
  d.demodulation_freq = 0;
  const ArrayGeometry g = ArrayGeometry::centered(1, 1, 0.3e-3, 0.3e-3);
  Block<cf32> b(shape_of(d), Layout::SampleMajor, std::vector<cf32>(64, cf32(1, 0)));
  BeamformParams p;
  p.region_min = {0, 0, 1e-3};
  p.region_max = {0, 0, 1e-3};
  p.points = {1, 1, 1};
  p.interpolation = Interpolation::Linear;
  const cf32 plain = das(b, d, g, p).values[0];
  p.coherence_weighting = true;
  const cf32 weighted = das(b, d, g, p).values[0];
  CHECK(std::abs(plain) == doctest::Approx(1));
  CHECK(std::abs(weighted) == doctest::Approx(1));
}

TEST_CASE("non-finite input is flagged") {
  const AcquisitionDescriptor d = decoded_forces(2, 32);
  const ArrayGeometry g = ArrayGeometry::centered(1, 2, 0.3e-3, 0.3e-3);
  Block<cf32> b(shape_of(d), Layout::SampleMajor);
  BeamformParams p = small_grid();
  CHECK_FALSE(das(b, d, g, p).non_finite_input);
  b.data[5] = cf32(NAN, 0);
  const ImageFrame img = das(b, d, g, p);
  CHECK(img.non_finite_input);
  CHECK(img.points_beamformed == p.point_count());
}

TEST_CASE("das input checks") {
  const AcquisitionDescriptor d = decoded_forces(2, 32);
  const ArrayGeometry g = ArrayGeometry::centered(1, 2, 0.3e-3, 0.3e-3);
  Block<cf32> tm(shape_of(d), Layout::TransmitMajor);
  CHECK_THROWS_AS(das(tm, d, g, small_grid()), std::invalid_argument);
  AcquisitionDescriptor vls = d;
  vls.acquisition_mode = AcquisitionMode::Vls;
  Block<cf32> b(shape_of(d), Layout::SampleMajor);
  CHECK_THROWS_AS(das(b, vls, g, small_grid()), std::invalid_argument);
  BeamformParams p = small_grid();
  p.transmit = {VirtualSourceTransmit{{0, 0, -1e-3}}};
  CHECK_NOTHROW(das(b, vls, g, p));
}

TEST_CASE("resolve_transmits defaults") {
  AcquisitionDescriptor d = decoded_forces(4, 8);
  CHECK(resolve_transmits(d, {}).size() == 4);
  d.acquisition_mode = AcquisitionMode::Flash;
  CHECK(std::holds_alternative<PlaneTransmit>(resolve_transmits(d, {}).at(0)));
  d.acquisition_mode = AcquisitionMode::Hercules;
  CHECK(resolve_transmits(d, {}).size() == 1);
  d.acquisition_mode = AcquisitionMode::Tpw;
  d.transmit_models = {PlaneTransmit{}, PlaneTransmit{}};
  CHECK_THROWS(resolve_transmits(d, {}));
}

TEST_CASE("envelope and analytic detection") {
  ImageFrame img;
  img.dims = {1, 1, 64};
  for (int z = 0; z < 64; ++z) img.values.emplace_back(static_cast<float>(std::cos(2 * std::numbers::pi * 0.25 * z)), 0.0f);
  const ImageFrame a = analytic_along_z(img, fir_hilbert(31));
  const auto env = envelope(a);
  CHECK(env[32] == doctest::Approx(1).epsilon(0.05));
}
