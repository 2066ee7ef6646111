#include <doctest.h>

#include <algorithm>
#include <random>

#include "../support/oracles.hpp"
#include "rcbf/decode.hpp"

using namespace rcbf;
using namespace rcbf::testing;

TEST_CASE("hadamard matrix matches the parity construction") {
  for (uint32_t n : {1u, 2u, 4u, 32u, 256u}) {
    const HadamardMatrix h(n);
    bool same = true;
    for (uint32_t i = 0; i < n; ++i)
      for (uint32_t j = 0; j < n; ++j) same = same && h(i, j) == hadamard_entry(i, j);
    CHECK(same);
  }
  CHECK_THROWS_AS(HadamardMatrix(3), std::invalid_argument);
  CHECK_THROWS_AS(HadamardMatrix(512), std::invalid_argument);
}

TEST_CASE("hadamard rows are orthogonal") {
  const HadamardMatrix h(64);
  for (uint32_t a = 0; a < 64; ++a)
    for (uint32_t b = 0; b < 64; ++b) {
      int dot = 0;
      for (uint32_t k = 0; k < 64; ++k) dot += h(a, k) * h(b, k);
      REQUIRE(dot == (a == b ? 64 : 0));
    }
}

TEST_CASE("layout reorders are inverse") {
  std::mt19937_64 rng(3);
  Block<float> b({7, 3, 4}, Layout::SampleMajor);
  fill_random(b.data, rng);
  const Block<float> t = reorder_transmit_major(b);
  CHECK(t.layout == Layout::TransmitMajor);
  CHECK(t.at(5, 2, 3) == b.at(5, 2, 3));
  CHECK(t.data[1] == b.at(0, 0, 1));
  CHECK(reorder_sample_major(t).data == b.data);
}

TEST_CASE("uforces decode uses sparse rows and the channel count as order") {
  AcquisitionDescriptor d;
  d.acquisition_mode = AcquisitionMode::UForces;
  d.channel_count = 8;
  d.transmit_count = 3;
  d.sparse_transmit_indices = std::vector<uint32_t>{1, 2, 6};
  d.format = SampleFormat::Float32;
  CHECK(hadamard_order_for(d) == 8);
  CHECK(encoding_rows(d) == std::vector<uint32_t>{1, 2, 6});
  const AcquisitionDescriptor out = decoded_descriptor(d);
  CHECK(out.transmit_count == 8);
  CHECK_FALSE(out.sparse_transmit_indices.has_value());

  std::mt19937_64 rng(4);
  Block<float> in({5, 8, 3}, Layout::TransmitMajor);
  fill_random(in.data, rng);
  const Block<float> got = decode(in, d, HadamardMatrix(8));
  CHECK(bit_equal(got.data, oracle_decode(in, d).data));
}

TEST_CASE("integer decode rounds half away from zero") {
  AcquisitionDescriptor d;
  d.acquisition_mode = AcquisitionMode::Forces;
  d.transmit_count = 4;
  d.channel_count = 1;
  d.sample_count = 1;
  d.format = SampleFormat::Int16;
  // Column 0 sums every transmit: 2 / 4 = 0.5 -> 1, -2 / 4 -> -1, 6 / 4 = 1.5 -> 2.
  for (auto [sum, expect] : {std::pair{2, 1}, std::pair{-2, -1}, std::pair{6, 2}, std::pair{5, 1}}) {
    Block<int16_t> in({1, 1, 4}, Layout::TransmitMajor, {static_cast<int16_t>(sum), 0, 0, 0});
    const Block<int16_t> out = decode(in, d, HadamardMatrix(4));
    CHECK(out.data[0] == expect);
  }
}

TEST_CASE("integer encode saturates") {
  AcquisitionDescriptor d;
  d.transmit_count = 2;
  d.format = SampleFormat::Int16;
  Block<int16_t> x({1, 1, 2}, Layout::TransmitMajor, {30000, 30000});
  const Block<int16_t> y = encode(x, d, HadamardMatrix(2));
  CHECK(y.data[0] == 32767);
  CHECK(y.data[1] == 0);
}

TEST_CASE("decode rejects mismatched inputs") {
  AcquisitionDescriptor d;
  d.transmit_count = 4;
  d.format = SampleFormat::Float32;
  Block<float> in({2, 1, 4}, Layout::TransmitMajor);
  CHECK_THROWS(decode(in, d, HadamardMatrix(8)));
  Block<float> wrong({2, 1, 4}, Layout::SampleMajor);
  CHECK_THROWS(decode(wrong, d, HadamardMatrix(4)));
}

TEST_CASE("strategies agree with worker threads") {
  std::mt19937_64 rng(5);
  AcquisitionDescriptor d;
  d.transmit_count = 16;
  d.channel_count = 5;
  d.sample_count = 33;
  d.format = SampleFormat::Int16Complex;
  Block<ci16> in({33, 5, 16}, Layout::TransmitMajor);
  fill_random(in.data, rng);
  const auto expect = oracle_decode(in, d);
  for (unsigned w : {1u, 3u}) {
    DecodeOptions o;
    o.workers = w;
    CHECK(bit_equal(decode(in, d, HadamardMatrix(16), o).data, expect.data));
  }
}

TEST_CASE("decode benchmark report format") {
  const uint32_t orders[] = {8, 16};
  const auto rows = decode_benchmark(orders, 64, 4, 10.0);
  REQUIRE(rows.size() >= 2);
  const std::string report = format_decode_report(rows);
  CHECK(report.rfind("8,square,", 0) == 0);
  CHECK(std::count(report.begin(), report.end(), '\n') == static_cast<long>(rows.size()));
  for (const auto& r : rows) CHECK(r.ns_per_sample > 0);
}
