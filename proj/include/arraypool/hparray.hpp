#pragma once
// Per-group live-page counters that gate translation-memory reclamation.
// One 32-bit atomic per group of translation entries (one group = the entries
// sharing an OS page). Bit 31 is a lock bit, bits [30:0] the live count:
//
//   count = resident pages in the group + in-flight faults targeting it
//
// increment() waits while the lock bit is held (so it cannot race a discard),
// lockAndDec() acquires the lock and decrements in a single CAS, and the
// caller releases the group's translation backing while still holding the
// lock when the count reached zero. Counters are lazily backed through the
// memory provider and are never released themselves: at 4 KB pages, even 512M
// translation entries need only 1M counters = 4 MiB.

#include "common.hpp"
#include "memory_provider.hpp"

#include <cassert>

namespace arraypool {

class HolePunchArray {
 public:
  static constexpr u32 LockBit = 0x80000000u;
  static constexpr u32 CountMask = 0x7fffffffu;

  HolePunchArray(MemoryProvider& prov, u64 numEntries, u64 entriesPerGroup)
      : entriesPerGroup_(entriesPerGroup),
        numGroups_((numEntries + entriesPerGroup - 1) / entriesPerGroup) {
    region_ = prov.reserve(numGroups_ * sizeof(u32));
    counters_ = reinterpret_cast<std::atomic<u32>*>(region_.data());
  }

  u64 numGroups() const { return numGroups_; }
  u64 counterCapacityBytes() const { return numGroups_ * sizeof(u32); }
  size_t residentBytes() const { return region_.residentBytes(); }

  u32 count(u64 group) const {
    return counters_[group].load(std::memory_order_acquire) & CountMask;
  }
  bool locked(u64 group) const {
    return counters_[group].load(std::memory_order_acquire) & LockBit;
  }

  // +1, waiting out any holder of the lock bit. After this returns, the group
  // cannot be discarded until a matching decrement brings it back to zero.
  u32 increment(u64 group) {
    Backoff bo;
    u32 c = counters_[group].load(std::memory_order_relaxed);
    for (;;) {
      if (c & LockBit) {
        bo.pause();
        c = counters_[group].load(std::memory_order_relaxed);
        continue;
      }
      if (counters_[group].compare_exchange_weak(c, c + 1,
                                                 std::memory_order_acquire,
                                                 std::memory_order_relaxed))
        return (c + 1) & CountMask;
    }
  }

  // Acquire the lock bit and decrement in one CAS; returns the new count with
  // the lock still held. Caller must hold one unit of the count.
  u32 lockAndDec(u64 group) {
    Backoff bo;
    u32 c = counters_[group].load(std::memory_order_relaxed);
    for (;;) {
      if (c & LockBit) {
        bo.pause();
        c = counters_[group].load(std::memory_order_relaxed);
        continue;
      }
      assert((c & CountMask) >= 1);
      u32 upd = ((c - 1) & CountMask) | LockBit;
      if (counters_[group].compare_exchange_weak(c, upd,
                                                 std::memory_order_acquire,
                                                 std::memory_order_relaxed))
        return upd & CountMask;
    }
  }

  void unlock(u64 group) {
    counters_[group].fetch_and(CountMask, std::memory_order_release);
  }

  // quiescent-state diagnostic: sum of live counts across all groups
  u64 sum() const {
    u64 s = 0;
    for (u64 g = 0; g < numGroups_; g++) s += count(g);
    return s;
  }

 private:
  u64 entriesPerGroup_;
  u64 numGroups_;
  Region region_;
  std::atomic<u32>* counters_;
};

}  // namespace arraypool
