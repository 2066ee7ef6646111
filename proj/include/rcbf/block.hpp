#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "rcbf/model.hpp"

namespace rcbf {

/// SampleMajor: sample fastest, then channel, then transmit (the RF wire order).
/// TransmitMajor: transmit fastest, then sample, then channel (the decode order).
enum class Layout : uint32_t { SampleMajor = 0, TransmitMajor };

struct BlockShape {
  uint32_t samples = 0;
  uint32_t channels = 0;
  uint32_t transmits = 0;

  std::size_t size() const { return std::size_t{samples} * channels * transmits; }
  friend bool operator==(const BlockShape&, const BlockShape&) = default;
};

struct Strides {
  std::size_t sample = 0;
  std::size_t channel = 0;
  std::size_t transmit = 0;
};

constexpr Strides strides_for(const BlockShape& s, Layout layout) {
  if (layout == Layout::SampleMajor) {
    return {1, s.samples, std::size_t{s.samples} * s.channels};
  }
  return {s.transmits, std::size_t{s.transmits} * s.samples, 1};
}

template <class T>
struct Block {
  BlockShape shape;
  Layout layout = Layout::SampleMajor;
  std::vector<T> data;

  Block() = default;
  Block(BlockShape s, Layout l) : shape(s), layout(l), data(s.size()) {}
  Block(BlockShape s, Layout l, std::vector<T> d) : shape(s), layout(l), data(std::move(d)) {
    if (data.size() != shape.size()) throw std::invalid_argument("block data size does not match shape");
  }

  std::size_t index(uint32_t s, uint32_t c, uint32_t t) const {
    const Strides st = strides_for(shape, layout);
    return s * st.sample + c * st.channel + t * st.transmit;
  }
  T& at(uint32_t s, uint32_t c, uint32_t t) { return data[index(s, c, t)]; }
  const T& at(uint32_t s, uint32_t c, uint32_t t) const { return data[index(s, c, t)]; }
};

inline BlockShape shape_of(const AcquisitionDescriptor& d) {
  return {d.sample_count, d.channel_count, d.transmit_count};
}

}  // namespace rcbf
