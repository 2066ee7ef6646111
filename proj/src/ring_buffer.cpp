#include "rcbf/ring_buffer.hpp"

#include <stdexcept>
#include <string>

namespace rcbf {

std::string_view to_string(SlotState s) {
  switch (s) {
    case SlotState::Free: return "free";
    case SlotState::Uploading: return "uploading";
    case SlotState::Ready: return "ready";
    case SlotState::Processing: return "processing";
  }
  return "unknown";
}

FrameRing::FrameRing(uint32_t slot_count, std::size_t capacity_bytes) : slots_(slot_count), capacity_(capacity_bytes) {
  if (slot_count < 2 || slot_count > 8) throw std::invalid_argument("ring slot count must be in [2, 8]");
}

void FrameRing::set_observer(std::function<void(const SlotEvent&)> observer) {
  std::lock_guard lock(mutex_);
  observer_ = std::move(observer);
}

void FrameRing::transition(uint32_t slot, SlotState from, SlotState to) {
  Slot& s = slots_.at(slot);
  if (s.state != from) {
    throw std::logic_error("illegal slot transition on slot " + std::to_string(slot) + ": " +
                           std::string(to_string(s.state)) + " -> " + std::string(to_string(to)));
  }
  s.state = to;
  if (observer_) observer_({slot, from, to, s.frame_id});
}

std::optional<uint32_t> FrameRing::acquire_for_upload(uint64_t frame_id) {
  std::unique_lock lock(mutex_);
  if (!closed_ && slots_[write_index_].state != SlotState::Free) {
    ++producer_blocks_;
    free_cv_.wait(lock, [&] { return closed_ || slots_[write_index_].state == SlotState::Free; });
  }
  if (closed_) return std::nullopt;
  const uint32_t slot = write_index_;
  slots_[slot].frame_id = frame_id;
  transition(slot, SlotState::Free, SlotState::Uploading);
  write_index_ = (write_index_ + 1) % slot_count();
  return slot;
}

std::optional<uint32_t> FrameRing::try_acquire_for_upload(uint64_t frame_id) {
  std::lock_guard lock(mutex_);
  if (closed_) return std::nullopt;
  if (slots_[write_index_].state != SlotState::Free) {
    ++producer_blocks_;
    return std::nullopt;
  }
  const uint32_t slot = write_index_;
  slots_[slot].frame_id = frame_id;
  transition(slot, SlotState::Free, SlotState::Uploading);
  write_index_ = (write_index_ + 1) % slot_count();
  return slot;
}

void FrameRing::finish_upload(uint32_t slot) {
  {
    std::lock_guard lock(mutex_);
    transition(slot, SlotState::Uploading, SlotState::Ready);
  }
  ready_cv_.notify_all();
}

std::optional<uint32_t> FrameRing::acquire_ready() {
  std::unique_lock lock(mutex_);
  ready_cv_.wait(lock, [&] { return closed_ || slots_[read_index_].state == SlotState::Ready; });
  if (slots_[read_index_].state != SlotState::Ready) return std::nullopt;
  const uint32_t slot = read_index_;
  transition(slot, SlotState::Ready, SlotState::Processing);
  read_index_ = (read_index_ + 1) % slot_count();
  return slot;
}

std::optional<uint32_t> FrameRing::acquire_ready_for(std::chrono::nanoseconds timeout) {
  std::unique_lock lock(mutex_);
  ready_cv_.wait_for(lock, timeout, [&] { return closed_ || slots_[read_index_].state == SlotState::Ready; });
  if (slots_[read_index_].state != SlotState::Ready) return std::nullopt;
  const uint32_t slot = read_index_;
  transition(slot, SlotState::Ready, SlotState::Processing);
  read_index_ = (read_index_ + 1) % slot_count();
  return slot;
}

void FrameRing::release(uint32_t slot) {
  {
    std::lock_guard lock(mutex_);
    transition(slot, SlotState::Processing, SlotState::Free);
  }
  free_cv_.notify_all();
}

SlotState FrameRing::state(uint32_t slot) const {
  std::lock_guard lock(mutex_);
  return slots_.at(slot).state;
}

uint64_t FrameRing::frame_id(uint32_t slot) const {
  std::lock_guard lock(mutex_);
  return slots_.at(slot).frame_id;
}

uint32_t FrameRing::ready_count() const {
  std::lock_guard lock(mutex_);
  uint32_t n = 0;
  for (const Slot& s : slots_) n += s.state == SlotState::Ready;
  return n;
}

uint64_t FrameRing::producer_blocks() const {
  std::lock_guard lock(mutex_);
  return producer_blocks_;
}

void FrameRing::close() {
  {
    std::lock_guard lock(mutex_);
    closed_ = true;
  }
  free_cv_.notify_all();
  ready_cv_.notify_all();
}

bool FrameRing::closed() const {
  std::lock_guard lock(mutex_);
  return closed_;
}

}  // namespace rcbf
