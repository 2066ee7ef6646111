#include "rcbf/decode.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

#include "rcbf/parallel.hpp"

namespace rcbf {

HadamardMatrix::HadamardMatrix(uint32_t order) : order_(order) {
  if (order == 0 || order > kMaxHadamardOrder || !is_power_of_two(order)) {
    throw std::invalid_argument("unsupported Hadamard order " + std::to_string(order));
  }
  entries_.assign(std::size_t{order} * order, 1);
  for (uint32_t n = 1; n < order; n *= 2) {
    for (uint32_t r = 0; r < n; ++r) {
      for (uint32_t c = 0; c < n; ++c) {
        const int8_t v = entries_[std::size_t{r} * order + c];
        entries_[std::size_t{r} * order + c + n] = v;
        entries_[std::size_t{r + n} * order + c] = v;
        entries_[std::size_t{r + n} * order + c + n] = static_cast<int8_t>(-v);
      }
    }
  }
}

HadamardMatrix hadamard(uint32_t order) { return HadamardMatrix(order); }

uint32_t hadamard_order_for(const AcquisitionDescriptor& d) {
  if (d.acquisition_mode == AcquisitionMode::UForces) return d.channel_count;
  return d.transmit_count;
}

std::vector<uint32_t> encoding_rows(const AcquisitionDescriptor& d) {
  if (d.acquisition_mode == AcquisitionMode::UForces) {
    if (!d.sparse_transmit_indices) throw std::invalid_argument("uforces descriptor without sparse_transmit_indices");
    return *d.sparse_transmit_indices;
  }
  std::vector<uint32_t> rows(d.transmit_count);
  for (uint32_t t = 0; t < d.transmit_count; ++t) rows[t] = t;
  return rows;
}

AcquisitionDescriptor decoded_descriptor(const AcquisitionDescriptor& d) {
  AcquisitionDescriptor out = d;
  out.transmit_count = hadamard_order_for(d);
  out.sparse_transmit_indices.reset();
  out.transmit_models.clear();
  return out;
}

template <class T>
Block<T> reorder_transmit_major(const Block<T>& in) {
  if (in.data.size() != in.shape.size()) throw std::invalid_argument("reorder: size mismatch");
  if (in.layout == Layout::TransmitMajor) return in;
  Block<T> out(in.shape, Layout::TransmitMajor);
  const auto [S, C, T_] = in.shape;
  for (uint32_t t = 0; t < T_; ++t)
    for (uint32_t c = 0; c < C; ++c) {
      const T* src = in.data.data() + (std::size_t{t} * C + c) * S;
      T* dst = out.data.data() + std::size_t{c} * S * T_ + t;
      for (uint32_t s = 0; s < S; ++s) dst[std::size_t{s} * T_] = src[s];
    }
  return out;
}

template <class T>
Block<T> reorder_sample_major(const Block<T>& in) {
  if (in.data.size() != in.shape.size()) throw std::invalid_argument("reorder: size mismatch");
  if (in.layout == Layout::SampleMajor) return in;
  Block<T> out(in.shape, Layout::SampleMajor);
  const auto [S, C, T_] = in.shape;
  for (uint32_t t = 0; t < T_; ++t)
    for (uint32_t c = 0; c < C; ++c) {
      const T* src = in.data.data() + std::size_t{c} * S * T_ + t;
      T* dst = out.data.data() + (std::size_t{t} * C + c) * S;
      for (uint32_t s = 0; s < S; ++s) dst[s] = src[std::size_t{s} * T_];
    }
  return out;
}

namespace {

// Component access that avoids type punning for ci16.
template <class T>
struct Lanes;

template <>
struct Lanes<int16_t> {
  static constexpr int kCount = 1;
  using Acc = int32_t;
  static Acc get(int16_t v, int) { return v; }
  static void set(int16_t& v, int, int16_t x) { v = x; }
};
template <>
struct Lanes<ci16> {
  static constexpr int kCount = 2;
  using Acc = int32_t;
  static Acc get(const ci16& v, int k) { return k == 0 ? v.re : v.im; }
  static void set(ci16& v, int k, int16_t x) { (k == 0 ? v.re : v.im) = x; }
};
template <>
struct Lanes<float> {
  static constexpr int kCount = 1;
  using Acc = float;
  static Acc get(float v, int) { return v; }
  static void set(float& v, int, float x) { v = x; }
};
template <>
struct Lanes<cf32> {
  static constexpr int kCount = 2;
  using Acc = float;
  static Acc get(const cf32& v, int k) { return k == 0 ? v.real() : v.imag(); }
  static void set(cf32& v, int k, float x) {
    if (k == 0) v.real(x);
    else v.imag(x);
  }
};

int16_t finish_int(int32_t acc, int32_t order) {
  int32_t q = acc / order;
  const int32_t r = acc % order;
  if (2 * std::abs(r) >= order) q += acc < 0 ? -1 : 1;
  return static_cast<int16_t>(std::clamp(q, int32_t{-32768}, int32_t{32767}));
}

template <class T>
struct Finisher {
  uint32_t order;
  float scale;
  template <class Acc>
  auto operator()(Acc acc) const {
    if constexpr (std::is_integral_v<Acc>) return finish_int(acc, static_cast<int32_t>(order));
    else return acc * scale;
  }
};

// coeff[e * in_count + t] = H[row_t, e]
std::vector<int8_t> decode_matrix(const HadamardMatrix& h, const std::vector<uint32_t>& rows) {
  const uint32_t order = h.order();
  const auto in_count = static_cast<uint32_t>(rows.size());
  std::vector<int8_t> m(std::size_t{order} * in_count);
  for (uint32_t e = 0; e < order; ++e)
    for (uint32_t t = 0; t < in_count; ++t) m[std::size_t{e} * in_count + t] = static_cast<int8_t>(h(rows[t], e));
  return m;
}

struct Kernel {
  const int8_t* coeff;
  uint32_t order;
  uint32_t in_count;
};

template <class T>
void decode_naive(const Kernel& k, const T* in, T* out, uint32_t vectors, const Finisher<T>& fin) {
  using L = Lanes<T>;
  for (uint32_t v = 0; v < vectors; ++v) {
    const T* x = in + std::size_t{v} * k.in_count;
    T* y = out + std::size_t{v} * k.order;
    for (uint32_t e = 0; e < k.order; ++e) {
      const int8_t* row = k.coeff + std::size_t{e} * k.in_count;
      for (int lane = 0; lane < L::kCount; ++lane) {
        typename L::Acc acc = 0;
        for (uint32_t t = 0; t < k.in_count; ++t) acc += row[t] * L::get(x[t], lane);
        L::set(y[e], lane, fin(acc));
      }
    }
  }
}

// Two sample vectors share each coefficient load; rows are walked in cache-sized groups.
template <class T>
void decode_blocked(const Kernel& k, const T* in, T* out, uint32_t vectors, const Finisher<T>& fin) {
  using L = Lanes<T>;
  using Acc = typename L::Acc;
  constexpr uint32_t kRowGroup = 32;
  uint32_t v = 0;
  for (; v + 1 < vectors; v += 2) {
    const T* x0 = in + std::size_t{v} * k.in_count;
    const T* x1 = x0 + k.in_count;
    T* y0 = out + std::size_t{v} * k.order;
    T* y1 = y0 + k.order;
    for (uint32_t e0 = 0; e0 < k.order; e0 += kRowGroup) {
      const uint32_t e1 = std::min(k.order, e0 + kRowGroup);
      for (uint32_t e = e0; e < e1; ++e) {
        const int8_t* row = k.coeff + std::size_t{e} * k.in_count;
        Acc a0[L::kCount] = {};
        Acc a1[L::kCount] = {};
        for (uint32_t t = 0; t < k.in_count; ++t) {
          const Acc w = row[t];
          for (int lane = 0; lane < L::kCount; ++lane) {
            a0[lane] += w * L::get(x0[t], lane);
            a1[lane] += w * L::get(x1[t], lane);
          }
        }
        for (int lane = 0; lane < L::kCount; ++lane) {
          L::set(y0[e], lane, fin(a0[lane]));
          L::set(y1[e], lane, fin(a1[lane]));
        }
      }
    }
  }
  if (v < vectors) decode_naive(k, in + std::size_t{v} * k.in_count, out + std::size_t{v} * k.order, 1, fin);
}

// Input vector held in a fixed-size local array so the inner loop fully unrolls.
template <uint32_t N, class T>
void decode_cached(const Kernel& k, const T* in, T* out, uint32_t vectors, const Finisher<T>& fin) {
  using L = Lanes<T>;
  using Acc = typename L::Acc;
  Acc cache[L::kCount][N];
  for (uint32_t v = 0; v < vectors; ++v) {
    const T* x = in + std::size_t{v} * N;
    T* y = out + std::size_t{v} * k.order;
    for (uint32_t t = 0; t < N; ++t)
      for (int lane = 0; lane < L::kCount; ++lane) cache[lane][t] = L::get(x[t], lane);
    for (uint32_t e = 0; e < k.order; ++e) {
      const int8_t* row = k.coeff + std::size_t{e} * N;
      for (int lane = 0; lane < L::kCount; ++lane) {
        Acc acc = 0;
        for (uint32_t t = 0; t < N; ++t) acc += row[t] * cache[lane][t];
        L::set(y[e], lane, fin(acc));
      }
    }
  }
}

template <class T>
using KernelFn = void (*)(const Kernel&, const T*, T*, uint32_t, const Finisher<T>&);

template <class T>
KernelFn<T> cached_kernel(uint32_t in_count) {
  switch (in_count) {
    case 1: return &decode_cached<1, T>;
    case 2: return &decode_cached<2, T>;
    case 4: return &decode_cached<4, T>;
    case 8: return &decode_cached<8, T>;
    case 16: return &decode_cached<16, T>;
    case 32: return &decode_cached<32, T>;
    default: return nullptr;
  }
}

template <class T>
KernelFn<T> select_kernel(const DecodeOptions& options, uint32_t in_count) {
  switch (options.strategy) {
    case DecodeStrategy::Naive: return &decode_naive<T>;
    case DecodeStrategy::Blocked: return &decode_blocked<T>;
    case DecodeStrategy::RegisterCached:
      if (auto fn = cached_kernel<T>(in_count)) return fn;
      return &decode_blocked<T>;
    case DecodeStrategy::Auto:
      if (in_count <= options.register_cache_threshold) {
        if (auto fn = cached_kernel<T>(in_count)) return fn;
      }
      return &decode_blocked<T>;
  }
  return &decode_naive<T>;
}

}  // namespace

template <class T>
Block<T> decode(const Block<T>& in, const AcquisitionDescriptor& d, const HadamardMatrix& h,
                const DecodeOptions& options) {
  if (in.layout != Layout::TransmitMajor) throw std::invalid_argument("decode: input must be transmit-major");
  if (in.data.size() != in.shape.size()) throw std::invalid_argument("decode: size mismatch");
  const uint32_t order = h.order();
  if (hadamard_order_for(d) != order) throw std::invalid_argument("decode: order mismatch");
  const std::vector<uint32_t> rows = encoding_rows(d);
  if (rows.size() != in.shape.transmits) throw std::invalid_argument("decode: transmit count does not match encoding");
  for (uint32_t r : rows)
    if (r >= order) throw std::invalid_argument("decode: encoding row out of range");

  const std::vector<int8_t> coeff = decode_matrix(h, rows);
  const Kernel k{coeff.data(), order, in.shape.transmits};
  const Finisher<T> fin{order, 1.0f / static_cast<float>(order)};
  const KernelFn<T> fn = select_kernel<T>(options, k.in_count);

  Block<T> out({in.shape.samples, in.shape.channels, order}, Layout::TransmitMajor);
  const uint32_t S = in.shape.samples;
  parallel_for(in.shape.channels, options.workers, [&](std::size_t c) {
    fn(k, in.data.data() + c * S * k.in_count, out.data.data() + c * S * order, S, fin);
  });
  return out;
}

template <class T>
Block<T> encode(const Block<T>& x, const AcquisitionDescriptor& d, const HadamardMatrix& h) {
  using L = Lanes<T>;
  const uint32_t order = h.order();
  if (x.shape.transmits != order) throw std::invalid_argument("encode: input must have order transmits");
  const std::vector<uint32_t> rows = encoding_rows(d);
  const Block<T> src = reorder_transmit_major(x);
  Block<T> out({x.shape.samples, x.shape.channels, static_cast<uint32_t>(rows.size())}, Layout::TransmitMajor);
  const std::size_t vectors = std::size_t{x.shape.samples} * x.shape.channels;
  for (std::size_t v = 0; v < vectors; ++v) {
    const T* xv = src.data.data() + v * order;
    T* yv = out.data.data() + v * rows.size();
    for (std::size_t t = 0; t < rows.size(); ++t) {
      for (int lane = 0; lane < L::kCount; ++lane) {
        typename L::Acc acc = 0;
        for (uint32_t e = 0; e < order; ++e) acc += h(rows[t], e) * L::get(xv[e], lane);
        if constexpr (std::is_integral_v<typename L::Acc>) {
          L::set(yv[t], lane, static_cast<int16_t>(std::clamp(acc, int32_t{-32768}, int32_t{32767})));
        } else {
          L::set(yv[t], lane, acc);
        }
      }
    }
  }
  return x.layout == Layout::TransmitMajor ? out : reorder_sample_major(out);
}

#define RCBF_INSTANTIATE(T)                                                                            \
  template Block<T> reorder_transmit_major<T>(const Block<T>&);                                        \
  template Block<T> reorder_sample_major<T>(const Block<T>&);                                          \
  template Block<T> decode<T>(const Block<T>&, const AcquisitionDescriptor&, const HadamardMatrix&,    \
                              const DecodeOptions&);                                                   \
  template Block<T> encode<T>(const Block<T>&, const AcquisitionDescriptor&, const HadamardMatrix&);

RCBF_INSTANTIATE(int16_t)
RCBF_INSTANTIATE(ci16)
RCBF_INSTANTIATE(float)
RCBF_INSTANTIATE(cf32)
#undef RCBF_INSTANTIATE

double estimate_peak_gflops() {
  constexpr int kLanes = 16;
  constexpr int kIters = 4'000'000;
  volatile float seed = 1.0000001f;
  float acc[kLanes];
  for (int i = 0; i < kLanes; ++i) acc[i] = static_cast<float>(i) * 1e-3f;
  const float m = seed;
  const float a = 1e-7f;
  const auto t0 = std::chrono::steady_clock::now();
  for (int it = 0; it < kIters; ++it)
    for (int i = 0; i < kLanes; ++i) acc[i] = acc[i] * m + a;
  const auto t1 = std::chrono::steady_clock::now();
  float sink = 0;
  for (float v : acc) sink += v;
  seed = sink;
  const double ns = std::chrono::duration<double, std::nano>(t1 - t0).count();
  return 2.0 * kLanes * kIters / std::max(ns, 1.0);
}

std::vector<DecodeBenchRow> decode_benchmark(std::span<const uint32_t> orders, uint32_t sample_count,
                                             uint32_t channel_count, double peak_gflops, unsigned workers) {
  std::vector<DecodeBenchRow> rows;
  if (orders.empty()) return rows;
  if (peak_gflops <= 0) peak_gflops = estimate_peak_gflops();
  std::mt19937 rng(1234);
  std::uniform_int_distribution<int> dist(-2000, 2000);

  auto time_case = [&](const AcquisitionDescriptor& d, uint32_t order, const char* mode) {
    const HadamardMatrix h(order);
    Block<int16_t> in(shape_of(d), Layout::SampleMajor);
    for (auto& v : in.data) v = static_cast<int16_t>(dist(rng));
    DecodeOptions opt;
    opt.workers = workers;
    double best = std::numeric_limits<double>::infinity();
    for (int rep = 0; rep < 3; ++rep) {
      const auto t0 = std::chrono::steady_clock::now();
      const Block<int16_t> out = decode(reorder_transmit_major(in), d, h, opt);
      const auto t1 = std::chrono::steady_clock::now();
      if (out.data.empty() && d.sample_count > 0) throw std::logic_error("empty decode");
      best = std::min(best, std::chrono::duration<double, std::nano>(t1 - t0).count());
    }
    const double samples = double(d.sample_count) * d.channel_count;
    const double flops = 2.0 * order * d.transmit_count * samples;
    DecodeBenchRow row;
    row.order = order;
    row.mode = mode;
    row.ns_per_sample = best / std::max(samples, 1.0);
    row.gflops = flops / std::max(best, 1.0);
    row.fraction_of_peak = row.gflops / peak_gflops;
    rows.push_back(row);
  };

  for (uint32_t order : orders) {
    AcquisitionDescriptor sq;
    sq.sample_count = sample_count;
    sq.channel_count = channel_count;
    sq.transmit_count = order;
    sq.format = SampleFormat::Int16;
    sq.acquisition_mode = AcquisitionMode::Forces;
    sq.channel_map = identity_channel_map(channel_count);
    time_case(sq, order, "square");

    AcquisitionDescriptor sp = sq;
    sp.acquisition_mode = AcquisitionMode::UForces;
    sp.channel_count = order;
    sp.channel_map = identity_channel_map(order);
    const uint32_t tx = std::max<uint32_t>(1, order / 4);
    std::vector<uint32_t> idx(tx);
    for (uint32_t i = 0; i < tx; ++i) idx[i] = i * (order / tx);
    sp.transmit_count = tx;
    sp.sparse_transmit_indices = idx;
    time_case(sp, order, "sparse");
  }
  return rows;
}

std::string format_decode_report(std::span<const DecodeBenchRow> rows) {
  std::ostringstream os;
  for (const auto& r : rows) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%u,%s,%.4f,%.4f\n", r.order, r.mode.c_str(), r.ns_per_sample, r.gflops);
    os << buf;
  }
  return os.str();
}

}  // namespace rcbf
