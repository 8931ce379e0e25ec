#pragma once
// The fixed arena of page frames plus per-frame metadata and CLOCK victim
// selection. Frames are numbered 1..frameCount (0 is "no frame" so the
// translation word's all-zero encoding stays meaningful). Descriptor fields
// are written only under the owning page's exclusive entry latch except the
// ref bit, which any reader may set.

#include <vector>

#include "common.hpp"
#include "memory_provider.hpp"
#include "pid.hpp"

namespace arraypool {

static constexpr PageId kNoOwner = ~u64(0);

struct FrameDescriptor {
  std::atomic<PageId> owner{kNoOwner};
  std::atomic<bool> refBit{false};
  std::atomic<bool> dirty{false};
};

class FrameStore {
 public:
  FrameStore(MemoryProvider& prov, u64 frameCount, u32 pageBytes,
             bool hugePages = false)
      : frameCount_(frameCount), pageBytes_(pageBytes) {
    if (frameCount_ == 0) throw ConfigError("frame count must be positive");
    arena_ = prov.reserve(frameCount_ * u64(pageBytes_));
    if (hugePages) arena_.adviseHugePages();
    descs_ = std::make_unique<FrameDescriptor[]>(frameCount_ + 1);
    freeList_.reserve(frameCount_);
    for (FrameId f = FrameId(frameCount_); f >= 1; f--) freeList_.push_back(f);
    freeCount_.store(i64(frameCount_), std::memory_order_relaxed);
  }

  u64 frameCount() const { return frameCount_; }
  u32 pageBytes() const { return pageBytes_; }

  std::byte* framePtr(FrameId f) {
    return arena_.data() + (u64(f) - 1) * pageBytes_;
  }
  const std::byte* framePtr(FrameId f) const {
    return arena_.data() + (u64(f) - 1) * pageBytes_;
  }
  FrameDescriptor& desc(FrameId f) { return descs_[f]; }

  FrameId tryAllocate() {
    SpinGuard g(freeLock_);
    if (freeList_.empty()) return kInvalidFrame;
    FrameId f = freeList_.back();
    freeList_.pop_back();
    freeCount_.fetch_sub(1, std::memory_order_relaxed);
    return f;
  }

  void free(FrameId f) {
    auto& d = descs_[f];
    d.owner.store(kNoOwner, std::memory_order_relaxed);
    d.refBit.store(false, std::memory_order_relaxed);
    d.dirty.store(false, std::memory_order_relaxed);
    SpinGuard g(freeLock_);
    freeList_.push_back(f);
    freeCount_.fetch_add(1, std::memory_order_relaxed);
  }

  // Recency hint for CLOCK. Checking before storing keeps steady-state reads
  // of hot pages from taking the descriptor cache line exclusive on every pin.
  void touch(FrameId f) {
    auto& ref = descs_[f].refBit;
    if (!ref.load(std::memory_order_relaxed))
      ref.store(true, std::memory_order_relaxed);
  }

  u64 freeFrames() const {
    return u64(std::max<i64>(0, freeCount_.load(std::memory_order_relaxed)));
  }
  u64 usedFrames() const { return frameCount_ - freeFrames(); }
  size_t arenaBytes() const { return arena_.size(); }
  size_t residentBytes() const { return arena_.residentBytes(); }

  // CLOCK sweep: skip unowned frames, give referenced frames a second chance,
  // return the owner pid of the first candidate. The caller still has to win
  // that page's entry latch (a locked entry means pinned or mid-fault, and the
  // caller just asks again). Two full sweeps without any candidate means every
  // frame is pinned: surface that instead of spinning forever.
  PageId selectVictim() {
    u64 steps = 2 * frameCount_;
    for (u64 i = 0; i < steps; i++) {
      u64 h = hand_.fetch_add(1, std::memory_order_relaxed);
      FrameDescriptor& d = descs_[1 + (h % frameCount_)];
      PageId owner = d.owner.load(std::memory_order_relaxed);
      if (owner == kNoOwner || owner > kMaxUsablePid) continue;
      if (d.refBit.load(std::memory_order_relaxed)) {
        d.refBit.store(false, std::memory_order_relaxed);
        continue;
      }
      return owner;
    }
    throw PoolExhaustedError("buffer pool exhausted by pinned pages");
  }

 private:
  u64 frameCount_;
  u32 pageBytes_;
  Region arena_;
  std::unique_ptr<FrameDescriptor[]> descs_;
  SpinLock freeLock_;
  std::vector<FrameId> freeList_;
  std::atomic<i64> freeCount_{0};
  std::atomic<u64> hand_{0};
};

}  // namespace arraypool
