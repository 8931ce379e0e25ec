#pragma once
// Array-based pid->frame translation: the upper level maps a pid prefix to a
// lazily materialized last-level array; the suffix then indexes the entry
// directly. Translation stays a shift, a mask, and one dependent load on the
// hot path (plus a one-slot per-thread cache that skips the upper level for
// consecutive pids sharing a prefix). Last-level arrays are reserved virtual
// memory: untouched groups cost nothing, and fully evicted groups have their
// backing returned through the hole-punch protocol.
//
// Backend interface consumed by BufferPool (duck-typed; the hash baselines
// implement the same surface):
//   entry(pid)        find-or-create a stable entry handle
//   find(pid)         lookup only (used by eviction), may return null
//   validate(pid,e)   handle still maps pid (arrays: always true)
//   faultEnter(pid)   count an in-flight fault into pid's group
//   releaseFaultCount(pid)  undo faultEnter without touching the entry
//   beginFault(pid,e) one attempt to latch the entry for a fault
//   publish(pid,e,f)  install frame + unlock
//   evictFinish(pid,e) staged-invalid entry -> zero word, maybe reclaim group
//
// Group counters count resident pages PLUS in-flight faults (faultEnter runs
// before the entry CAS). That makes count==0 under the group lock proof that
// a discard cannot wipe anyone's freshly latched entry; at quiescence the
// counter equals resident pages exactly.

#include <shared_mutex>
#include <unordered_map>

#include "common.hpp"
#include "entry.hpp"
#include "hparray.hpp"
#include "memory_provider.hpp"
#include "pid.hpp"

namespace arraypool {

namespace detail {
inline u64 nextBackendId() {
  static std::atomic<u64> next{1};
  return next.fetch_add(1, std::memory_order_relaxed);
}
}  // namespace detail

class ArrayTranslation {
 public:
  using Handle = TranslationEntry*;

  ArrayTranslation(MemoryProvider& prov, PidLayout layout,
                   const TestHooks* hooks = nullptr)
      : prov_(prov), layout_(layout), hooks_(hooks),
        id_(detail::nextBackendId()) {
    layout_.validate();
  }

  static constexpr const char* name() { return "array"; }

  // ---- hot path -------------------------------------------------------------

  static TranslationEntry* entryOf(Handle h) { return h; }

  Handle entry(PageId pid) {
    LastLevelArray* arr = arrayFor(pid, true);
    return arr->at(layout_.suffixOf(pid));
  }

  Handle find(PageId pid) {
    LastLevelArray* arr = arrayFor(pid, false);
    return arr ? arr->at(layout_.suffixOf(pid)) : nullptr;
  }

  bool validate(PageId, Handle) const { return true; }  // handles are per-pid

  bool beginFault(PageId, Handle& e) { return e->tryLockExclusive(); }

  // ---- fault/evict protocol --------------------------------------------------

  void faultEnter(PageId pid) {
    LastLevelArray* arr = arrayFor(pid, true);
    arr->hp.increment(layout_.groupOf(layout_.suffixOf(pid)));
    hookPoint(hooks_, SchedPoint::FaultCounted);
  }

  void releaseFaultCount(PageId pid) { counterTail(pid, nullptr); }

  void publish(PageId, Handle e, FrameId f) { e->setFrameAndUnlock(f); }

  // Entry is latched exclusively with the frame staged invalid (or was latched
  // straight from the all-zero word by an aborting fault). Decrement under the
  // group lock, zero the word, and return the group's translation backing if
  // this was the last unit.
  void evictFinish(PageId pid, Handle e) { counterTail(pid, e); }

  // ---- accounting -------------------------------------------------------------

  size_t residentBytes() const {
    std::shared_lock g(upperLock_);
    size_t b = 0;
    for (auto& [pref, arr] : arrays_)
      b += arr->entries.residentBytes() + arr->hp.residentBytes();
    // upper-index footprint (heap estimate: node + array object + table slot)
    b += arrays_.size() * (sizeof(LastLevelArray) + 64) +
         arrays_.bucket_count() * sizeof(void*);
    return b;
  }

  size_t memoryBytes() const { return residentBytes(); }

  size_t virtualBytes() const {
    std::shared_lock g(upperLock_);
    size_t b = 0;
    for (auto& [pref, arr] : arrays_)
      b += arr->entries.size() + arr->hp.counterCapacityBytes();
    return b;
  }

  u64 holePunches() const { return holePunches_.load(); }

  // quiescent: equals resident pages (no in-flight faults)
  u64 liveCounterSum() const {
    std::shared_lock g(upperLock_);
    u64 s = 0;
    for (auto& [pref, arr] : arrays_) s += arr->hp.sum();
    return s;
  }

  void pathStats(u64& hits, u64& misses) const {
    SpinGuard g(const_cast<SpinLock&>(slotLock_));
    hits = misses = 0;
    for (auto& [tid, slot] : slots_) {
      hits += slot->hits;
      misses += slot->misses;
    }
  }

  u64 materializedArrays() const {
    std::shared_lock g(upperLock_);
    return arrays_.size();
  }

  const PidLayout& layout() const { return layout_; }

 private:
  struct LastLevelArray {
    Region entries;
    HolePunchArray hp;
    LastLevelArray(MemoryProvider& prov, const PidLayout& l)
        : entries(prov.reserve(l.entriesPerArray() * kEntryBytes)),
          hp(prov, l.entriesPerArray(), l.entriesPerGroup()) {}
    TranslationEntry* at(u64 suffix) {
      return reinterpret_cast<TranslationEntry*>(entries.data()) + suffix;
    }
  };

  struct alignas(64) ThreadSlot {
    u64 prefix = ~u64(0);
    LastLevelArray* array = nullptr;
    u64 hits = 0;
    u64 misses = 0;
  };

  ThreadSlot* tlsSlot() {
    struct TlsRef {
      u64 id = 0;
      ThreadSlot* slot = nullptr;
    };
    static thread_local TlsRef tls;
    if (tls.id != id_) {
      SpinGuard g(slotLock_);
      auto& s = slots_[std::this_thread::get_id()];
      if (!s) s = std::make_unique<ThreadSlot>();
      tls = {id_, s.get()};
    }
    return tls.slot;
  }

  LastLevelArray* arrayFor(PageId pid, bool create) {
    u64 pref = layout_.prefixOf(pid);
    ThreadSlot* s = tlsSlot();
    if (s->prefix == pref && s->array) {
      s->hits++;
      return s->array;
    }
    s->misses++;
    LastLevelArray* arr = upperLookup(pref, create);
    if (arr) {
      s->prefix = pref;
      s->array = arr;
    }
    return arr;
  }

  LastLevelArray* upperLookup(u64 prefix, bool create) {
    {
      std::shared_lock g(upperLock_);
      auto it = arrays_.find(prefix);
      if (it != arrays_.end()) return it->second.get();
    }
    if (!create) return nullptr;
    std::unique_lock g(upperLock_);
    auto it = arrays_.find(prefix);  // double-check under the exclusive lock
    if (it != arrays_.end()) return it->second.get();
    auto arr = std::make_unique<LastLevelArray>(prov_, layout_);
    LastLevelArray* raw = arr.get();
    arrays_.emplace(prefix, std::move(arr));
    return raw;
  }

  // Shared tail of evictFinish / releaseFaultCount / fault rollback:
  //   lock+dec -> (zero entry) -> reclaim group backing if empty -> unlock.
  void counterTail(PageId pid, Handle e) {
    LastLevelArray* arr = arrayFor(pid, false);
    u64 suffix = layout_.suffixOf(pid);
    u64 g = layout_.groupOf(suffix);
    u32 c = arr->hp.lockAndDec(g);
    hookPoint(hooks_, SchedPoint::EvictCounterLocked);
    if (e) {
      e->unlockEvicted();
      hookPoint(hooks_, SchedPoint::EvictEntryZeroed);
    }
    if (c == 0) {
      arr->entries.release(g * layout_.osPageBytes, layout_.osPageBytes);
      holePunches_.fetch_add(1, std::memory_order_relaxed);
      hookPoint(hooks_, SchedPoint::EvictReleased);
    }
    arr->hp.unlock(g);
    hookPoint(hooks_, SchedPoint::EvictCounterUnlocked);
  }

  MemoryProvider& prov_;
  PidLayout layout_;
  const TestHooks* hooks_;
  u64 id_;
  mutable std::shared_mutex upperLock_;
  std::unordered_map<u64, std::unique_ptr<LastLevelArray>> arrays_;
  SpinLock slotLock_;
  std::unordered_map<std::thread::id, std::unique_ptr<ThreadSlot>> slots_;
  std::atomic<u64> holePunches_{0};
};

}  // namespace arraypool
