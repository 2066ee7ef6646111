#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <string_view>
#include <vector>

#include "rcbf/model.hpp"

namespace rcbf {

enum class SlotState : uint32_t { Free = 0, Uploading, Ready, Processing };

std::string_view to_string(SlotState s);

struct SlotEvent {
  uint32_t slot = 0;
  SlotState from = SlotState::Free;
  SlotState to = SlotState::Free;
  uint64_t frame_id = 0;
};

/// Fixed set of RF frame slots cycling Free -> Uploading -> Ready -> Processing -> Free.
/// Safe for one producer and one consumer thread. Slots are visited round-robin on both sides,
/// so frames leave in the order they entered. A full ring blocks the producer; Ready data is
/// never overwritten.
class FrameRing {
 public:
  explicit FrameRing(uint32_t slot_count = 3, std::size_t capacity_bytes = kMaxPayloadBytes);

  FrameRing(const FrameRing&) = delete;
  FrameRing& operator=(const FrameRing&) = delete;

  /// Called under the ring lock for every transition.
  void set_observer(std::function<void(const SlotEvent&)> observer);

  /// Waits for the next slot to become Free. Returns nullopt once closed.
  std::optional<uint32_t> acquire_for_upload(uint64_t frame_id);
  std::optional<uint32_t> try_acquire_for_upload(uint64_t frame_id);
  void finish_upload(uint32_t slot);

  /// Waits for the oldest frame to become Ready. Returns nullopt once closed and drained.
  std::optional<uint32_t> acquire_ready();
  std::optional<uint32_t> acquire_ready_for(std::chrono::nanoseconds timeout);
  void release(uint32_t slot);

  /// Slot storage. Only the side holding the slot (Uploading or Processing) may touch it.
  RfFrame& payload(uint32_t slot) { return slots_[slot].frame; }

  SlotState state(uint32_t slot) const;
  uint64_t frame_id(uint32_t slot) const;
  uint32_t slot_count() const { return static_cast<uint32_t>(slots_.size()); }
  std::size_t capacity_bytes() const { return capacity_; }
  uint32_t ready_count() const;

  /// Producer calls that found no Free slot and had to wait (or gave up, for try_).
  uint64_t producer_blocks() const;

  void close();
  bool closed() const;

 private:
  struct Slot {
    SlotState state = SlotState::Free;
    uint64_t frame_id = 0;
    RfFrame frame;
  };

  void transition(uint32_t slot, SlotState from, SlotState to);

  mutable std::mutex mutex_;
  std::condition_variable free_cv_;
  std::condition_variable ready_cv_;
  std::vector<Slot> slots_;
  std::size_t capacity_;
  uint32_t write_index_ = 0;
  uint32_t read_index_ = 0;
  uint64_t producer_blocks_ = 0;
  bool closed_ = false;
  std::function<void(const SlotEvent&)> observer_;
};

}  // namespace rcbf
