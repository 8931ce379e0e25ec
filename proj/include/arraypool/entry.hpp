#pragma once
// The 64-bit translation entry word. Layout:
//   bits [63:56] latch state: 0 unlocked, 255 exclusive, 1..254 shared count
//   bits [55:32] version, 24 bits, arithmetic mod 2^24
//   bits [31:0]  frame id, 0 = no frame (so the all-zero word means "evicted")
//
// Versions of resident pages are never 0: installs write max(old+1,1) and the
// unlock bump skips 0 on wrap. This closes the cheap ABA (an evict-then-refault
// into the same frame would otherwise replay (version=0, frame)). Two hazards
// remain and are accepted as astronomically unlikely: a reader sleeping across
// exactly 2^24 writer unlock cycles, and a reader that snapshots version 1 and
// validates after a full write->evict->refault cycle that lands the page back
// in the same frame (refault also installs version 1). Both require frame
// identity plus version coincidence inside one optimistic read window.

#include "common.hpp"

namespace arraypool {

struct EntrySnapshot {
  u8 state;
  u32 version;  // 24 significant bits
  FrameId frame;
};

struct TranslationEntry {
  static constexpr u8 Unlocked = 0;
  static constexpr u8 Exclusive = 0xff;
  static constexpr u8 MaxShared = 0xfe;  // 254 readers; beyond that, spin
  static constexpr u32 VersionMask = 0xffffff;

  std::atomic<u64> word;

  static constexpr u64 encode(u8 state, u32 version, FrameId frame) {
    return (u64(state) << 56) | (u64(version & VersionMask) << 32) | u64(frame);
  }
  static constexpr u8 stateOf(u64 w) { return u8(w >> 56); }
  static constexpr u32 versionOf(u64 w) { return u32(w >> 32) & VersionMask; }
  static constexpr FrameId frameOf(u64 w) { return FrameId(w & 0xffffffffu); }
  static EntrySnapshot decode(u64 w) {
    return EntrySnapshot{stateOf(w), versionOf(w), frameOf(w)};
  }
  static constexpr u32 bumpVersion(u32 v) {
    v = (v + 1) & VersionMask;
    return v == 0 ? 1 : v;
  }

  u64 load(std::memory_order mo = std::memory_order_acquire) const {
    return word.load(mo);
  }

  // UNLOCKED -> EXCLUSIVE, single CAS attempt. Works on the all-zero word too
  // (that is how a fault latches an evicted entry).
  bool tryLockExclusive() {
    u64 w = word.load(std::memory_order_relaxed);
    if (stateOf(w) != Unlocked) return false;
    u64 locked = encode(Exclusive, versionOf(w), frameOf(w));
    return word.compare_exchange_strong(w, locked, std::memory_order_acquire,
                                        std::memory_order_relaxed);
  }

  // Release the exclusive latch after mutating the page: bump version.
  void unlockBumpVersion() {
    u64 w = word.load(std::memory_order_relaxed);
    word.store(encode(Unlocked, bumpVersion(versionOf(w)), frameOf(w)),
               std::memory_order_release);
  }

  // Release the exclusive latch with nothing changed (e.g. the fault handler's
  // "already resident" double-check exit): restore version and frame as-is so
  // concurrent optimistic readers are not invalidated spuriously.
  void unlockRestore() {
    u64 w = word.load(std::memory_order_relaxed);
    word.store(encode(Unlocked, versionOf(w), frameOf(w)),
               std::memory_order_release);
  }

  // Publish a freshly loaded frame and release the latch. Installs never write
  // version 0 (see header comment).
  void setFrameAndUnlock(FrameId frame) {
    u64 w = word.load(std::memory_order_relaxed);
    u32 v = (versionOf(w) + 1) & VersionMask;
    if (v == 0) v = 1;
    word.store(encode(Unlocked, v, frame), std::memory_order_release);
  }

  // While latched exclusively: stage the frame field to "no frame". The entry
  // stays latched; concurrent pins observing it either spin on the latch or
  // head to the fault handler once the word clears.
  void stageEvictedFrame() {
    u64 w = word.load(std::memory_order_relaxed);
    word.store(encode(Exclusive, versionOf(w), kInvalidFrame),
               std::memory_order_release);
  }

  // Final step of eviction (and of fault rollback): the whole word becomes the
  // all-zero "evicted" encoding in one atomic store. Caller holds the latch and
  // has already staged the frame invalid.
  void unlockEvicted() { word.store(0, std::memory_order_release); }

  // One shared-acquire attempt: false on exclusive, evicted, saturation, or a
  // lost CAS race. Caller loops.
  bool tryLockShared() {
    u64 w = word.load(std::memory_order_relaxed);
    u8 s = stateOf(w);
    if (s == Exclusive || s == MaxShared) return false;
    if (frameOf(w) == kInvalidFrame) return false;
    u64 upd = encode(u8(s + 1), versionOf(w), frameOf(w));
    return word.compare_exchange_strong(w, upd, std::memory_order_acquire,
                                        std::memory_order_relaxed);
  }

  void unlockShared() {
    u64 w = word.load(std::memory_order_relaxed);
    for (;;) {
      u8 s = stateOf(w);
      u64 upd = encode(u8(s - 1), versionOf(w), frameOf(w));
      if (word.compare_exchange_weak(w, upd, std::memory_order_release,
                                     std::memory_order_relaxed))
        return;
    }
  }
};
static_assert(sizeof(TranslationEntry) == 8);

}  // namespace arraypool
