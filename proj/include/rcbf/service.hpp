#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "rcbf/io.hpp"
#include "rcbf/pipeline.hpp"
#include "rcbf/simulator.hpp"
#include "rcbf/websocket.hpp"

namespace rcbf {

inline constexpr int kProtocolVersion = 1;
inline constexpr std::size_t kClientQueueDepth = 2;

/// Produces the RF frame with the given sequence index. Throws on failure.
using FrameSource = std::function<RfFrame(uint64_t index)>;

FrameSource dataset_loop_source(Dataset dataset);

struct LiveSimulatorConfig {
  Phantom phantom;
  ArrayGeometry geometry;
  AcquisitionDescriptor descriptor;
  Excitation excitation = GaussianPulse{};
  SimulationOptions options;
  /// Moves every scatterer axially by amplitude * sin(2 pi t / period), t = index / rate_hz.
  bool animate = false;
  double animation_amplitude = 1e-3;
  double animation_period_s = 1.0;
  double rate_hz = 10.0;
};

/// Each index draws noise with seed + index.
FrameSource simulator_source(LiveSimulatorConfig config);

// ---------------------------------------------------------------- message helpers

nlohmann::json descriptor_summary(const AcquisitionDescriptor& d);
/// {"id": n, "params": {key: value, ...}} using the parameter file keys.
nlohmann::json parameter_set_json(const ParameterSet& set);
/// Section a parameter key belongs to; throws std::invalid_argument for unknown prefixes.
Section section_of_key(std::string_view key);
/// Applies a {key: value} object (strings, numbers, booleans or arrays of those) and returns
/// the touched sections. Throws std::invalid_argument naming the offending key.
SectionFlags apply_params_json(ParameterSet& set, const nlohmann::json& params);
nlohmann::json error_message(std::string_view code, std::string_view message, std::string_view field = {});

struct OutgoingFrame {
  nlohmann::json header;
  std::shared_ptr<const std::vector<uint8_t>> payload;
};

/// Bounded FIFO that discards the oldest entry when full.
class ClientQueue {
 public:
  explicit ClientQueue(std::size_t depth = kClientQueueDepth) : depth_(depth) {}
  void push(OutgoingFrame frame);
  std::optional<OutgoingFrame> pop();
  std::size_t size() const;
  uint64_t dropped() const;

 private:
  mutable std::mutex mutex_;
  std::deque<OutgoingFrame> items_;
  std::size_t depth_;
  uint64_t dropped_ = 0;
};

struct EngineConfig {
  PipelineConfig pipeline;
  FrameSource source;
  /// Frames per second pulled from the source; <= 0 runs unthrottled.
  double rate_hz = 10.0;
  /// Reported in Hello before the first frame has been ingested.
  std::optional<AcquisitionDescriptor> descriptor_hint;
  std::chrono::milliseconds stats_interval{1000};
  std::function<void(std::string_view)> log;
};

/// Runs the pipeline against a frame source and fans emitted images out to client sessions.
class Engine {
 public:
  explicit Engine(EngineConfig config);
  ~Engine();
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  /// Starts the ingest and compute threads.
  void start();
  /// Stops ingest, drains Ready slots, then stops compute and every session. Idempotent.
  void stop();
  /// Synchronously ingests, processes and broadcasts one frame. Not for use after start().
  /// Returns false when the source or a pipeline stage failed.
  bool step();

  /// Starts a session for a connected client.
  void attach(std::shared_ptr<Channel> channel);
  std::size_t session_count() const;

  Pipeline& pipeline() { return *pipeline_; }
  uint64_t images_emitted() const { return images_emitted_.load(); }
  uint64_t frames_ingested() const { return frames_ingested_.load(); }
  uint64_t source_errors() const { return source_errors_.load(); }
  /// Sum of frames dropped by client queues.
  uint64_t frames_dropped() const;

 private:
  struct Session;
  struct Latest {
    ImageFrame image;
    ParameterSet params;
    uint64_t rf_frame_id = 0;
  };

  void ingest_loop();
  void compute_loop();
  bool ingest_one(uint64_t index);
  void broadcast(const FrameResult& result);
  void session_loop(Session& s);
  void reap_sessions();
  void handle(Session& s, const ChannelMessage& m);
  void send_frame(Session& s, const OutgoingFrame& f);
  nlohmann::json hello() const;
  nlohmann::json stats(const Session& s) const;
  void log(std::string_view msg) const;

  EngineConfig config_;
  std::unique_ptr<Pipeline> pipeline_;

  std::atomic<bool> stopped_{false};
  std::atomic<bool> ingest_running_{false};
  std::mutex wake_mutex_;
  std::condition_variable wake_cv_;
  std::atomic<bool> compute_running_{false};
  std::thread ingest_thread_;
  std::thread compute_thread_;
  uint64_t next_index_ = 0;

  mutable std::mutex state_mutex_;
  std::optional<AcquisitionDescriptor> descriptor_;
  std::map<uint32_t, Latest> latest_;
  std::map<uint32_t, ParameterSet> used_params_;

  mutable std::mutex sessions_mutex_;
  std::list<std::unique_ptr<Session>> sessions_;

  std::atomic<uint64_t> images_emitted_{0};
  std::atomic<uint64_t> frames_ingested_{0};
  std::atomic<uint64_t> source_errors_{0};
  std::atomic<uint64_t> image_seq_{0};
};

/// Accepts websocket clients on a background thread and attaches them to an engine.
class WebSocketServer {
 public:
  WebSocketServer(Engine& engine, const std::string& host, uint16_t port);
  ~WebSocketServer();
  uint16_t port() const { return listener_.port(); }
  void stop();

 private:
  Engine& engine_;
  WebSocketListener listener_;
  std::atomic<bool> running_{true};
  std::thread thread_;
};

}  // namespace rcbf
