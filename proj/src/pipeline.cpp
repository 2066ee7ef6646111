#include "rcbf/pipeline.hpp"

#include <algorithm>
#include <numeric>
#include <type_traits>

namespace rcbf {

namespace {

using Clock = std::chrono::steady_clock;

int64_t elapsed_ns(Clock::time_point t0) {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - t0).count();
}

// Constants baked into the demodulation/decode/DAS kernels.
bool frozen_constants_differ(const AcquisitionDescriptor& a, const BeamformParams& pa, const AcquisitionDescriptor& b,
                             const BeamformParams& pb) {
  const double ra = a.sampling_freq > 0 ? a.demodulation_freq / a.sampling_freq : 0;
  const double rb = b.sampling_freq > 0 ? b.demodulation_freq / b.sampling_freq : 0;
  return a.sample_count != b.sample_count || a.channel_count != b.channel_count ||
         a.transmit_count != b.transmit_count || a.format != b.format || !(pa.filter == pb.filter) ||
         pa.decimation_factor != pb.decimation_factor || pa.interpolation != pb.interpolation || ra != rb;
}

void merge_into(ParameterSet& active, const ParameterSet& update) {
  const SectionFlags f = update.dirty ? update.dirty : kAllSections;
  if (has(f, Section::Acquisition)) active.acquisition = update.acquisition;
  if (has(f, Section::Geometry)) active.geometry = update.geometry;
  if (has(f, Section::Beamform)) {
    const FilterSpec filter = active.beamform.filter;
    const uint32_t decimation = active.beamform.decimation_factor;
    active.beamform = update.beamform;
    active.beamform.filter = filter;
    active.beamform.decimation_factor = decimation;
  }
  if (has(f, Section::Filter)) {
    active.beamform.filter = update.beamform.filter;
    active.beamform.decimation_factor = update.beamform.decimation_factor;
  }
  if (has(f, Section::Display)) active.display = update.display;
  active.dirty = 0;
}

template <class T>
Block<cf32> to_cf32(const Block<T>& in) {
  Block<cf32> out(in.shape, in.layout);
  for (std::size_t i = 0; i < in.data.size(); ++i) {
    if constexpr (std::is_same_v<T, ci16>) out.data[i] = cf32(in.data[i].re, in.data[i].im);
    else if constexpr (std::is_same_v<T, cf32>) out.data[i] = in.data[i];
    else out.data[i] = cf32(static_cast<float>(in.data[i]), 0.0f);
  }
  return out;
}

Block<cf32> frame_as_cf32(const RfFrame& f) {
  return std::visit(
      [&](const auto& v) {
        using T = typename std::decay_t<decltype(v)>::value_type;
        Block<T> b(shape_of(f.descriptor), Layout::SampleMajor, v);
        return to_cf32(b);
      },
      f.data);
}

}  // namespace

std::vector<Violation> validate_parameter_set(const ParameterSet& set) {
  std::vector<Violation> out = validate_params(set.beamform);
  if (set.acquisition) {
    auto v = validate_descriptor(*set.acquisition);
    out.insert(out.end(), v.begin(), v.end());
  }
  if (set.geometry) {
    auto v = validate_geometry(*set.geometry);
    out.insert(out.end(), v.begin(), v.end());
  }
  if (!(set.display.dynamic_range_db > 0)) out.push_back({"display.dynamic_range_db", "must be > 0"});
  if (!(set.display.power_threshold >= 0 && set.display.power_threshold < 1))
    out.push_back({"display.power_threshold", "must be in [0, 1)"});
  return out;
}

// ---------------------------------------------------------------- StageTimings

void StageTimings::record(std::string_view stage, int64_t ns) {
  std::lock_guard lock(mutex_);
  auto it = std::find_if(series_.begin(), series_.end(), [&](const Series& s) { return s.stage == stage; });
  if (it == series_.end()) {
    series_.push_back({std::string(stage), {}, 0});
    it = series_.end() - 1;
  }
  it->last = std::max<int64_t>(ns, 0);
  it->window.push_back(it->last);
  if (it->window.size() > kWindow) it->window.pop_front();
}

void StageTimings::record_upload(Clock::time_point when) {
  std::lock_guard lock(mutex_);
  if (last_upload_) {
    upload_gaps_.push_back(std::chrono::duration_cast<std::chrono::nanoseconds>(when - *last_upload_).count());
    if (upload_gaps_.size() > kWindow) upload_gaps_.pop_front();
  }
  last_upload_ = when;
}

std::optional<StageTimings::Stat> StageTimings::stat(std::string_view stage) const {
  for (auto& s : stats())
    if (s.stage == stage) return s;
  return std::nullopt;
}

std::vector<StageTimings::Stat> StageTimings::stats() const {
  std::lock_guard lock(mutex_);
  std::vector<Stat> out;
  for (const Series& s : series_) {
    const double sum = std::accumulate(s.window.begin(), s.window.end(), 0.0);
    out.push_back({s.stage, s.last, s.window.empty() ? 0.0 : sum / static_cast<double>(s.window.size()),
                   s.window.size()});
  }
  return out;
}

double StageTimings::upload_interval_ns() const {
  std::lock_guard lock(mutex_);
  if (upload_gaps_.empty()) return 0;
  return std::accumulate(upload_gaps_.begin(), upload_gaps_.end(), 0.0) / static_cast<double>(upload_gaps_.size());
}

// ---------------------------------------------------------------- ingest

void apply_ingest_map_check(const AcquisitionDescriptor& d, const std::vector<int32_t>& map) {
  if (map.size() != d.channel_count) throw std::invalid_argument("ingest map length does not match channel_count");
  uint32_t live = 0;
  for (int32_t m : map) live += m >= 0;
  if (live == 0) throw std::invalid_argument("ingest map drops every channel");
  std::vector<uint8_t> seen(live, 0);
  for (int32_t m : map) {
    if (m < 0) continue;
    if (static_cast<uint32_t>(m) >= live || seen[static_cast<uint32_t>(m)])
      throw std::invalid_argument("ingest map must send live channels to distinct outputs in [0, live)");
    seen[static_cast<uint32_t>(m)] = 1;
  }
}

RfFrame apply_ingest_map(const RfFrame& frame, const std::vector<int32_t>& map) {
  const AcquisitionDescriptor& d = frame.descriptor;
  apply_ingest_map_check(d, map);
  uint32_t live = 0;
  for (int32_t m : map) live += m >= 0;

  RfFrame out;
  out.frame_id = frame.frame_id;
  out.descriptor = d;
  out.descriptor.channel_count = live;
  out.descriptor.channel_map = identity_channel_map(live);
  const std::size_t S = d.sample_count;
  out.data = std::visit(
      [&](const auto& in) -> SampleBuffer {
        using V = std::decay_t<decltype(in)>;
        V v(S * live * d.transmit_count);
        for (uint32_t t = 0; t < d.transmit_count; ++t)
          for (uint32_t c = 0; c < d.channel_count; ++c) {
            if (map[c] < 0) continue;
            const auto src = in.begin() + static_cast<std::ptrdiff_t>((std::size_t{t} * d.channel_count + c) * S);
            std::copy(src, src + static_cast<std::ptrdiff_t>(S),
                      v.begin() + static_cast<std::ptrdiff_t>((std::size_t{t} * live + static_cast<uint32_t>(map[c])) * S));
          }
        return v;
      },
      frame.data);
  return out;
}

// ---------------------------------------------------------------- plans

struct Pipeline::Plans {
  struct Demod {
    AcquisitionDescriptor input;
    FilterSpec filter;
    DemodOptions options;
    std::shared_ptr<const DemodPlan> plan;
  };
  struct Das {
    AcquisitionDescriptor decoded;
    ArrayGeometry geometry;
    BeamformParams params;
    std::shared_ptr<const DasPlan> plan;
  };

  std::mutex mutex;
  uint64_t respecializations = 0;
  std::map<uint32_t, Demod> demod;
  std::map<uint32_t, Das> das;
  std::optional<FirFilter> hilbert;

  std::shared_ptr<const DemodPlan> demod_plan(uint32_t set_id, const AcquisitionDescriptor& in, const FilterSpec& spec,
                                              const DemodOptions& opt) {
    std::lock_guard lock(mutex);
    auto same = [&](const Demod& e) {
      return e.input == in && e.filter == spec && e.options.demodulation_freq == opt.demodulation_freq &&
             e.options.decimation_factor == opt.decimation_factor && e.options.output_layout == opt.output_layout &&
             e.options.output_format == opt.output_format;
    };
    auto it = demod.find(set_id);
    if (it != demod.end() && same(it->second)) return it->second.plan;
    std::shared_ptr<const DemodPlan> plan;
    for (auto& [id, e] : demod)
      if (same(e)) plan = e.plan;
    if (!plan) {
      const double fd = in.demodulation_freq;
      plan = std::make_shared<const DemodPlan>(in, design_filter(spec, in.sampling_freq, fd), opt);
    }
    demod[set_id] = {in, spec, opt, plan};
    return plan;
  }

  std::shared_ptr<const DasPlan> das_plan(uint32_t set_id, const AcquisitionDescriptor& decoded, const ArrayGeometry& g,
                                          const BeamformParams& p) {
    std::lock_guard lock(mutex);
    auto it = das.find(set_id);
    if (it != das.end() && it->second.decoded == decoded && it->second.geometry == g && it->second.params == p)
      return it->second.plan;
    auto plan = std::make_shared<const DasPlan>(decoded, g, p);
    // Counted here only: every demodulation constant also reaches the DAS plan.
    if (it != das.end() && frozen_constants_differ(it->second.decoded, it->second.params, decoded, p))
      ++respecializations;
    das[set_id] = {decoded, g, p, plan};
    return plan;
  }

  const FirFilter& hilbert_filter(uint32_t taps) {
    std::lock_guard lock(mutex);
    if (!hilbert || hilbert->taps.size() != taps) hilbert = fir_hilbert(taps);
    return *hilbert;
  }
};

// ---------------------------------------------------------------- Pipeline

Pipeline::Pipeline(PipelineConfig config)
    : config_(std::move(config)),
      ring_(std::make_unique<FrameRing>(config_.slots, config_.slot_capacity_bytes)),
      plans_(std::make_unique<Plans>()) {
  if (config_.sets.empty()) throw std::invalid_argument("pipeline needs at least one parameter set");
  if (auto v = validate_geometry(config_.geometry); !v.empty()) throw std::invalid_argument(describe(v));
  for (ParameterSet s : config_.sets) {
    if (auto v = validate_parameter_set(s); !v.empty()) throw std::invalid_argument(describe(v));
    s.dirty = 0;
    active_[s.id] = s;
  }
}

Pipeline::~Pipeline() { close(); }

void Pipeline::close() { ring_->close(); }

void Pipeline::set_stage_hook(std::function<void(std::string_view, uint64_t)> hook) { stage_hook_ = std::move(hook); }

void Pipeline::set_present_hook(std::function<void(ImageFrame&, const ParameterSet&)> hook) {
  present_hook_ = std::move(hook);
}

uint64_t Pipeline::respecializations() const {
  std::lock_guard lock(plans_->mutex);
  return plans_->respecializations;
}

void Pipeline::check_submittable(const RfFrame& frame, bool mapped) const {
  const auto& d = frame.descriptor;
  if (sample_buffer_size(frame.data) != d.total_samples() || sample_buffer_format(frame.data) != d.format)
    throw std::invalid_argument("submit_frame: data does not match descriptor");
  if (mapped) apply_ingest_map_check(d, config_.ingest_map);
  if (d.payload_bytes() > ring_->capacity_bytes())
    throw std::invalid_argument("submit_frame: frame of " + std::to_string(d.payload_bytes()) +
                                " bytes exceeds slot capacity of " + std::to_string(ring_->capacity_bytes()));
}

void Pipeline::upload(uint32_t slot, uint64_t id, const RfFrame& frame, bool mapped) {
  if (stage_hook_) stage_hook_("ingest", id);
  const auto t0 = Clock::now();
  RfFrame& dst = ring_->payload(slot);
  if (mapped) {
    dst = apply_ingest_map(frame, config_.ingest_map);
  } else {
    dst.descriptor = frame.descriptor;
    std::visit(
        [&](const auto& src) {
          using V = std::decay_t<decltype(src)>;
          if (!std::holds_alternative<V>(dst.data)) dst.data = V{};
          std::get<V>(dst.data).assign(src.begin(), src.end());
        },
        frame.data);
  }
  dst.frame_id = id;
  timings_.record("ingest", elapsed_ns(t0));
  ring_->finish_upload(slot);
}

uint64_t Pipeline::submit_frame(const RfFrame& frame, bool apply_channel_map) {
  std::lock_guard submit(submit_mutex_);
  const bool mapped = apply_channel_map && !config_.ingest_map.empty();
  check_submittable(frame, mapped);
  timings_.record_upload(Clock::now());
  const uint64_t id = next_frame_id_;
  const auto slot = ring_->acquire_for_upload(id);
  if (!slot) throw PipelineClosed();
  ++next_frame_id_;
  upload(*slot, id, frame, mapped);
  return id;
}

std::optional<uint64_t> Pipeline::try_submit_frame(const RfFrame& frame, bool apply_channel_map) {
  std::lock_guard submit(submit_mutex_);
  const bool mapped = apply_channel_map && !config_.ingest_map.empty();
  check_submittable(frame, mapped);
  const uint64_t id = next_frame_id_;
  const auto slot = ring_->try_acquire_for_upload(id);
  if (!slot) return std::nullopt;
  timings_.record_upload(Clock::now());
  ++next_frame_id_;
  upload(*slot, id, frame, mapped);
  return id;
}

void Pipeline::apply_staged() {
  std::lock_guard lock(params_mutex_);
  for (const ParameterSet& upd : staged_) {
    auto it = active_.find(upd.id);
    if (it == active_.end()) {
      ParameterSet s = upd;
      s.dirty = 0;
      active_[upd.id] = s;
    } else {
      merge_into(it->second, upd);
    }
  }
  staged_.clear();
}

std::vector<ParameterSet> Pipeline::active_sets() const {
  std::lock_guard lock(params_mutex_);
  std::map<uint32_t, ParameterSet> view = active_;
  for (const ParameterSet& upd : staged_) {
    auto it = view.find(upd.id);
    if (it == view.end()) {
      ParameterSet s = upd;
      s.dirty = 0;
      view[upd.id] = s;
    } else {
      merge_into(it->second, upd);
    }
  }
  std::vector<ParameterSet> out;
  for (auto& [id, s] : view) out.push_back(s);
  return out;
}

UpdateAck Pipeline::update_parameters(const ParameterSet& set) {
  UpdateAck ack;
  ack.set_id = set.id;
  std::lock_guard lock(params_mutex_);
  std::map<uint32_t, ParameterSet> view = active_;
  for (const ParameterSet& upd : staged_) {
    auto it = view.find(upd.id);
    if (it == view.end()) view[upd.id] = upd;
    else merge_into(it->second, upd);
  }
  auto it = view.find(set.id);
  ParameterSet merged = set;
  std::optional<ParameterSet> before;
  if (it != view.end()) {
    before = it->second;
    merged = it->second;
    merge_into(merged, set);
  }
  merged.dirty = 0;
  ack.violations = validate_parameter_set(merged);
  if (!ack.violations.empty()) return ack;
  ack.accepted = true;
  if (before) {
    const AcquisitionDescriptor fallback = last_descriptor_.value_or(AcquisitionDescriptor{});
    const AcquisitionDescriptor& a = before->acquisition ? *before->acquisition : fallback;
    const AcquisitionDescriptor& b = merged.acquisition ? *merged.acquisition : fallback;
    ack.respecialize = frozen_constants_differ(a, before->beamform, b, merged.beamform);
  }
  staged_.push_back(set);
  return ack;
}

bool Pipeline::remove_parameter_set(uint32_t id) {
  std::lock_guard lock(params_mutex_);
  staged_.erase(std::remove_if(staged_.begin(), staged_.end(), [&](const ParameterSet& s) { return s.id == id; }),
                staged_.end());
  if (active_.size() == 1 && active_.count(id)) return false;
  return active_.erase(id) > 0;
}

FrameResult Pipeline::process_next() {
  const auto slot = ring_->acquire_ready();
  if (!slot) throw PipelineClosed();
  apply_staged();
  std::vector<ParameterSet> sets;
  {
    std::lock_guard lock(params_mutex_);
    for (auto& [id, s] : active_) sets.push_back(s);
  }
  bool released = false;
  auto release = [&] {
    if (!released) {
      released = true;
      ring_->release(*slot);
    }
  };
  const RfFrame& frame = ring_->payload(*slot);
  {
    std::lock_guard lock(params_mutex_);
    last_descriptor_ = frame.descriptor;
  }
  try {
    FrameResult r = run_sets(sets, frame, release);
    release();
    return r;
  } catch (...) {
    release();
    throw;
  }
}

std::optional<FrameResult> Pipeline::process_next_for(std::chrono::nanoseconds timeout) {
  const auto slot = ring_->acquire_ready_for(timeout);
  if (!slot) {
    if (ring_->closed()) throw PipelineClosed();
    return std::nullopt;
  }
  apply_staged();
  std::vector<ParameterSet> sets;
  {
    std::lock_guard lock(params_mutex_);
    for (auto& [id, s] : active_) sets.push_back(s);
  }
  bool released = false;
  auto release = [&] {
    if (!released) {
      released = true;
      ring_->release(*slot);
    }
  };
  const RfFrame& frame = ring_->payload(*slot);
  {
    std::lock_guard lock(params_mutex_);
    last_descriptor_ = frame.descriptor;
  }
  try {
    FrameResult r = run_sets(sets, frame, release);
    release();
    return r;
  } catch (...) {
    release();
    throw;
  }
}

FrameResult Pipeline::multi_view_process(const std::vector<ParameterSet>& sets, const RfFrame& frame) {
  if (sets.empty()) throw std::invalid_argument("multi_view_process needs at least one parameter set");
  return run_sets(sets, frame, [] {});
}

struct Pipeline::FrontEnd {
  AcquisitionDescriptor input;
  FilterSpec filter;
  uint32_t decimation = 1;
  AcquisitionDescriptor decoded;
  Block<cf32> block;
  bool rf = false;
  int64_t demod_ns = 0;
  int64_t decode_ns = 0;
  std::vector<Violation> warnings;
};

FrameResult Pipeline::run_sets(const std::vector<ParameterSet>& sets, const RfFrame& frame,
                               const std::function<void()>& release_input) {
  const uint64_t id = frame.frame_id;
  FrameResult result;
  result.frame_id = id;
  const auto frame_t0 = Clock::now();

  // Front ends shared by sets with identical acquisition and filter settings.
  std::vector<FrontEnd> fronts;
  std::vector<std::size_t> front_of(sets.size());
  std::vector<AcquisitionDescriptor> descs(sets.size());
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const ParameterSet& s = sets[i];
    AcquisitionDescriptor d = s.acquisition ? *s.acquisition : frame.descriptor;
    if (s.acquisition && (shape_of(d) != shape_of(frame.descriptor) || d.format != frame.descriptor.format)) {
      release_input();
      throw PipelineError("demodulate", id, "frame does not match the acquisition parameters");
    }
    descs[i] = d;
    std::size_t f = 0;
    for (; f < fronts.size(); ++f)
      if (fronts[f].input == d && fronts[f].filter == s.beamform.filter &&
          fronts[f].decimation == s.beamform.decimation_factor)
        break;
    if (f == fronts.size()) fronts.push_back({d, s.beamform.filter, s.beamform.decimation_factor, {}, {}, false, 0, 0, {}});
    front_of[i] = f;
  }
  if (sample_buffer_size(frame.data) != frame.descriptor.total_samples()) {
    release_input();
    throw PipelineError("demodulate", id, "frame data does not match descriptor");
  }

  // Demodulate every front end before releasing the input slot.
  std::vector<ComplexBlock> demod(fronts.size());
  std::string stage = "demodulate";
  try {
    for (std::size_t f = 0; f < fronts.size(); ++f) {
      FrontEnd& fe = fronts[f];
      if (stage_hook_) stage_hook_("demodulate", id);
      const auto t0 = Clock::now();
      const AcquisitionDescriptor& d = fe.input;
      const bool encoded = is_hadamard_encoded(d.acquisition_mode);
      const std::size_t set_index =
          static_cast<std::size_t>(std::find(front_of.begin(), front_of.end(), f) - front_of.begin());
      const uint32_t plan_id = sets[set_index].id;
      if (!is_complex(d.format) && d.demodulation_freq == 0 && !d.quadrature_sampled) {
        RfFrame view{d, frame.data, id};
        fe.rf = true;
        fe.decoded = d;
        fe.decoded.format = SampleFormat::Float32Complex;
        demod[f] = frame_as_cf32(view);
      } else {
        RfFrame unpacked;
        const RfFrame* src = &frame;
        RfFrame relabeled;
        if (d.quadrature_sampled) {
          relabeled = RfFrame{d, frame.data, id};
          unpacked = quadrature_unpack_ns200(relabeled);
          src = &unpacked;
        } else if (!(d == frame.descriptor)) {
          relabeled = RfFrame{d, frame.data, id};
          src = &relabeled;
        }
        DemodOptions opt;
        opt.demodulation_freq = is_complex(src->descriptor.format) ? 0.0 : d.demodulation_freq;
        opt.decimation_factor = fe.decimation;
        opt.output_layout = encoded ? Layout::TransmitMajor : Layout::SampleMajor;
        opt.output_format = (config_.int16_intermediate && (src->descriptor.format == SampleFormat::Int16 ||
                                                            src->descriptor.format == SampleFormat::Int16Complex))
                                ? SampleFormat::Int16Complex
                                : SampleFormat::Float32Complex;
        opt.workers = config_.workers;
        auto plan = plans_->demod_plan(plan_id, src->descriptor, fe.filter, opt);
        DemodResult r = plan->run(*src);
        fe.decoded = r.descriptor;
        fe.warnings = r.warnings;
        demod[f] = std::move(r.block);
      }
      fe.demod_ns = elapsed_ns(t0);
      timings_.record("demodulate", fe.demod_ns);
    }
    release_input();

    stage = "decode";
    for (std::size_t f = 0; f < fronts.size(); ++f) {
      FrontEnd& fe = fronts[f];
      const AcquisitionDescriptor d = fe.decoded;
      if (!is_hadamard_encoded(d.acquisition_mode)) {
        fe.block = std::visit([](auto& b) { return to_cf32(b); }, demod[f]);
        if (fe.block.layout != Layout::SampleMajor) fe.block = reorder_sample_major(fe.block);
        continue;
      }
      if (stage_hook_) stage_hook_("decode", id);
      const auto t0 = Clock::now();
      const HadamardMatrix h(hadamard_order_for(d));
      DecodeOptions opt;
      opt.workers = config_.workers;
      fe.block = std::visit(
          [&](auto& b) {
            auto tm = reorder_transmit_major(b);
            return reorder_sample_major(to_cf32(decode(tm, d, h, opt)));
          },
          demod[f]);
      fe.decoded = decoded_descriptor(d);
      fe.decoded.format = SampleFormat::Float32Complex;
      fe.decode_ns = elapsed_ns(t0);
      timings_.record("decode", fe.decode_ns);
    }
  } catch (const PipelineError&) {
    release_input();
    throw;
  } catch (const std::exception& e) {
    release_input();
    throw PipelineError(stage, id, e.what());
  }
  for (const FrontEnd& fe : fronts) result.warnings.insert(result.warnings.end(), fe.warnings.begin(), fe.warnings.end());

  int64_t das_total = 0;
  int64_t present_total = 0;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const ParameterSet& s = sets[i];
    const FrontEnd& fe = fronts[front_of[i]];
    SetOutput out;
    out.set_id = s.id;
    std::string set_stage = "das";
    try {
      if (stage_hook_) stage_hook_("das", id);
      auto t0 = Clock::now();
      const ArrayGeometry& g = s.geometry ? *s.geometry : config_.geometry;
      auto plan = plans_->das_plan(s.id, fe.decoded, g, s.beamform);
      DasOptions dopt;
      dopt.workers = config_.workers;
      ImageFrame img = plan->run(fe.block, dopt);
      if (fe.rf) img = analytic_along_z(img, plans_->hilbert_filter(config_.hilbert_taps));
      const int64_t das_ns = elapsed_ns(t0);
      das_total += das_ns;
      img.frame_id = id;
      img.params_id = s.id;
      img.stage_timings = {{"demodulate", fe.demod_ns}, {"decode", fe.decode_ns}, {"das", das_ns}};
      set_stage = "present";
      if (stage_hook_) stage_hook_("present", id);
      t0 = Clock::now();
      if (present_hook_) present_hook_(img, s);
      const int64_t present_ns = elapsed_ns(t0);
      present_total += present_ns;
      img.stage_timings.push_back({"present", present_ns});
      out.image = std::move(img);
    } catch (const std::exception& e) {
      out.failed_stage = set_stage;
      out.error = e.what();
    }
    result.outputs.push_back(std::move(out));
  }
  timings_.record("das", das_total);
  timings_.record("present", present_total);
  timings_.record("total", elapsed_ns(frame_t0));
  return result;
}

}  // namespace rcbf
