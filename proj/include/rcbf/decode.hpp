#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rcbf/block.hpp"
#include "rcbf/model.hpp"

namespace rcbf {

inline constexpr uint32_t kMaxHadamardOrder = 256;

/// Sylvester Hadamard matrix, entries +-1.
class HadamardMatrix {
 public:
  /// Throws std::invalid_argument unless order is a power of two in [1, 256].
  explicit HadamardMatrix(uint32_t order);

  uint32_t order() const { return order_; }
  int operator()(uint32_t row, uint32_t col) const { return entries_[std::size_t{row} * order_ + col]; }
  std::span<const int8_t> row(uint32_t r) const {
    return {entries_.data() + std::size_t{r} * order_, order_};
  }

 private:
  uint32_t order_;
  std::vector<int8_t> entries_;
};

HadamardMatrix hadamard(uint32_t order);

/// Hadamard order implied by an encoded acquisition: the transmit count for FORCES/HERCULES,
/// the receive aperture for uFORCES.
uint32_t hadamard_order_for(const AcquisitionDescriptor& d);

/// Hadamard row used by each acquired transmit.
std::vector<uint32_t> encoding_rows(const AcquisitionDescriptor& d);

/// Descriptor of the decoded data: one transmit per Hadamard column.
AcquisitionDescriptor decoded_descriptor(const AcquisitionDescriptor& d);

template <class T>
Block<T> reorder_transmit_major(const Block<T>& in);
template <class T>
Block<T> reorder_sample_major(const Block<T>& in);

enum class DecodeStrategy { Auto, Naive, Blocked, RegisterCached };

struct DecodeOptions {
  DecodeStrategy strategy = DecodeStrategy::Auto;
  /// Square decodes with at most this many transmits use the register-cached kernel under Auto.
  uint32_t register_cache_threshold = 40;
  unsigned workers = 1;
};

/// out[e] = (1/order) * sum_t H[row_t, e] * in[t] per (sample, channel). Input must be
/// transmit-major; output is transmit-major with `order` transmits. Integer types accumulate
/// in 32 bits and divide with round-half-away-from-zero.
template <class T>
Block<T> decode(const Block<T>& in, const AcquisitionDescriptor& d, const HadamardMatrix& h,
                const DecodeOptions& options = {});

/// in[t] = sum_e H[row_t, e] * x[e]; the forward model of the aperture encoding.
/// Integer results saturate.
template <class T>
Block<T> encode(const Block<T>& x, const AcquisitionDescriptor& d, const HadamardMatrix& h);

struct DecodeBenchRow {
  uint32_t order = 0;
  std::string mode;  // "square" or "sparse"
  double ns_per_sample = 0;
  double gflops = 0;
  double fraction_of_peak = 0;
};

/// Times reorder + decode on random Int16 data for each order. `peak_gflops` <= 0 measures a
/// single-core estimate.
std::vector<DecodeBenchRow> decode_benchmark(std::span<const uint32_t> orders, uint32_t sample_count,
                                             uint32_t channel_count, double peak_gflops = 0,
                                             unsigned workers = 1);

/// "order,mode,ns_per_sample,gflops" records, one per line.
std::string format_decode_report(std::span<const DecodeBenchRow> rows);

/// Rough single-core float FMA throughput.
double estimate_peak_gflops();

}  // namespace rcbf
