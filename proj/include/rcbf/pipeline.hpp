#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "rcbf/das.hpp"
#include "rcbf/decode.hpp"
#include "rcbf/model.hpp"
#include "rcbf/ring_buffer.hpp"
#include "rcbf/sigproc.hpp"

namespace rcbf {

enum class Section : uint32_t {
  Acquisition = 1u << 0,
  Geometry = 1u << 1,
  Beamform = 1u << 2,
  Filter = 1u << 3,
  Display = 1u << 4,
};
using SectionFlags = uint32_t;
inline constexpr SectionFlags kAllSections = 0x1f;

constexpr SectionFlags operator|(Section a, Section b) { return uint32_t(a) | uint32_t(b); }
constexpr SectionFlags operator|(SectionFlags a, Section b) { return a | uint32_t(b); }
constexpr bool has(SectionFlags f, Section s) { return (f & uint32_t(s)) != 0; }

struct ParameterSet {
  uint32_t id = 0;
  /// Replaces the incoming frames' descriptor when set; frames must then match its shape and format.
  std::optional<AcquisitionDescriptor> acquisition;
  /// Replaces the pipeline's array geometry when set.
  std::optional<ArrayGeometry> geometry;
  /// The Filter section lives in beamform.filter and beamform.decimation_factor.
  BeamformParams beamform;
  DisplaySettings display;
  /// Sections carried by an update. Zero means all.
  SectionFlags dirty = 0;

  friend bool operator==(const ParameterSet&, const ParameterSet&) = default;
};

std::vector<Violation> validate_parameter_set(const ParameterSet& set);

class StageTimings {
 public:
  static constexpr std::size_t kWindow = 32;

  struct Stat {
    std::string stage;
    int64_t last_ns = 0;
    double mean_ns = 0;
    std::size_t frames = 0;
  };

  void record(std::string_view stage, int64_t ns);
  void record_upload(std::chrono::steady_clock::time_point when);

  std::optional<Stat> stat(std::string_view stage) const;
  /// In first-recorded order.
  std::vector<Stat> stats() const;
  /// Mean gap between the last min(32, n) uploads; 0 before two uploads.
  double upload_interval_ns() const;

 private:
  struct Series {
    std::string stage;
    std::deque<int64_t> window;
    int64_t last = 0;
  };
  mutable std::mutex mutex_;
  std::vector<Series> series_;
  std::deque<int64_t> upload_gaps_;
  std::optional<std::chrono::steady_clock::time_point> last_upload_;
};

struct PipelineConfig {
  uint32_t slots = 3;
  std::size_t slot_capacity_bytes = kMaxPayloadBytes;
  ArrayGeometry geometry;
  std::vector<ParameterSet> sets{ParameterSet{}};
  /// Input channel -> output channel, -1 for channels dropped during ingest.
  std::vector<int32_t> ingest_map;
  unsigned workers = 1;
  /// Keep demodulated data as packed Int16 through decode when the input is Int16.
  bool int16_intermediate = false;
  /// Odd tap count of the Hilbert transformer used to detect envelopes after RF beamforming.
  uint32_t hilbert_taps = 31;
};

struct SetOutput {
  uint32_t set_id = 0;
  std::optional<ImageFrame> image;
  std::string failed_stage;
  std::string error;
};

struct FrameResult {
  uint64_t frame_id = 0;
  std::vector<SetOutput> outputs;
  std::vector<Violation> warnings;
};

struct UpdateAck {
  bool accepted = false;
  uint32_t set_id = 0;
  std::vector<Violation> violations;
  /// The update changes frozen kernel constants; plans are rebuilt at the next frame boundary.
  bool respecialize = false;
};

class PipelineError : public std::runtime_error {
 public:
  PipelineError(std::string stage, uint64_t frame_id, const std::string& what)
      : std::runtime_error(stage + " failed on frame " + std::to_string(frame_id) + ": " + what),
        stage_(std::move(stage)),
        frame_id_(frame_id) {}
  const std::string& stage() const { return stage_; }
  uint64_t frame_id() const { return frame_id_; }

 private:
  std::string stage_;
  uint64_t frame_id_;
};

class PipelineClosed : public std::runtime_error {
 public:
  PipelineClosed() : std::runtime_error("pipeline closed") {}
};

/// Copies a frame with input channel i moved to map[i]; map[i] < 0 drops the channel.
RfFrame apply_ingest_map(const RfFrame& frame, const std::vector<int32_t>& map);
/// Throws std::invalid_argument unless `map` is a valid ingest map for `d`.
void apply_ingest_map_check(const AcquisitionDescriptor& d, const std::vector<int32_t>& map);

/// ingest -> demodulate (+decimate) -> reorder/decode -> das -> present, with a frames-in-flight
/// ring between ingest and compute. One producer thread and one compute thread may drive it
/// concurrently; a single thread may also alternate both roles.
class Pipeline {
 public:
  explicit Pipeline(PipelineConfig config);
  ~Pipeline();

  /// Blocks while no slot is Free. Returns the assigned frame id.
  uint64_t submit_frame(const RfFrame& frame, bool apply_channel_map = false);
  std::optional<uint64_t> try_submit_frame(const RfFrame& frame, bool apply_channel_map = false);

  /// Processes the oldest Ready frame with every active parameter set. Throws PipelineError when
  /// a shared stage fails (the slot is freed first) and PipelineClosed after close().
  FrameResult process_next();
  std::optional<FrameResult> process_next_for(std::chrono::nanoseconds timeout);

  /// Staged and applied at the next frame boundary. Sections not flagged keep their active values.
  UpdateAck update_parameters(const ParameterSet& set);
  bool remove_parameter_set(uint32_t id);

  /// Processes one frame directly (no ring) once per set; demodulation and decode are shared by
  /// sets with the same acquisition and filter settings.
  FrameResult multi_view_process(const std::vector<ParameterSet>& sets, const RfFrame& frame);

  /// Active sets after applying everything staged so far.
  std::vector<ParameterSet> active_sets() const;
  const ArrayGeometry& geometry() const { return config_.geometry; }

  StageTimings& timings() { return timings_; }
  const StageTimings& timings() const { return timings_; }
  FrameRing& ring() { return *ring_; }

  /// Number of times a kernel plan was rebuilt because its frozen constants changed.
  uint64_t respecializations() const;

  /// Called at the start of every stage (tests inject delays here).
  void set_stage_hook(std::function<void(std::string_view stage, uint64_t frame_id)> hook);
  /// Called for every image before it is returned.
  void set_present_hook(std::function<void(ImageFrame&, const ParameterSet&)> hook);

  void close();

 private:
  struct FrontEnd;
  struct Plans;

  FrameResult run_sets(const std::vector<ParameterSet>& sets, const RfFrame& frame,
                       const std::function<void()>& release_input);
  void apply_staged();
  void check_submittable(const RfFrame& frame, bool mapped) const;
  void upload(uint32_t slot, uint64_t id, const RfFrame& frame, bool mapped);

  PipelineConfig config_;
  std::unique_ptr<FrameRing> ring_;
  StageTimings timings_;
  std::unique_ptr<Plans> plans_;

  mutable std::mutex params_mutex_;
  std::map<uint32_t, ParameterSet> active_;
  std::vector<ParameterSet> staged_;
  std::optional<AcquisitionDescriptor> last_descriptor_;

  std::mutex submit_mutex_;
  uint64_t next_frame_id_ = 1;

  std::function<void(std::string_view, uint64_t)> stage_hook_;
  std::function<void(ImageFrame&, const ParameterSet&)> present_hook_;
};

}  // namespace rcbf
