#pragma once
// The buffer pool: pin/unpin (exclusive and shared), optimistic reads, the
// page-fault handler, CLOCK eviction with translation-memory reclamation, and
// group prefetch. Parameterized over the translation backend so the flat-array
// design and the hash baselines run the identical protocol.
//
// Locking protocol recap (all on the 64-bit entry word):
//  * pin exclusive: load -> fault while no frame -> CAS unlocked->exclusive
//  * unpin exclusive: store unlocked with version+1 (mod 2^24, skipping 0)
//  * pin shared: CAS reader-count+1; blocked by exclusive, saturation at 254
//  * optimistic read: snapshot word -> run read_fn -> revalidate (version and
//    frame unchanged, not exclusively latched, handle still maps the pid).
//    read_fn may observe torn bytes and must be side-effect-free; after the
//    retry cap the pool falls back to a shared pin.
//  * fault: count the in-flight fault into the pid's group, latch the entry
//    (double-check residency), obtain a frame (evicting if needed), read the
//    page, publish frame+unlock. Every abort path re-zeroes and releases the
//    group count through the same lock+dec tail eviction uses, so group
//    backing can never leak or be discarded under a latched sibling.
//  * evict: CLOCK candidate -> try-latch (skip if latched: pinned/mid-fault)
//    -> verify it still owns its frame -> write back if dirty -> stage frame
//    invalid -> zero the word and decrement the group under the group lock,
//    releasing the group's translation backing when the count hits zero.

#include <span>
#include <string>
#include <vector>

#include "common.hpp"
#include "entry.hpp"
#include "frame_store.hpp"
#include "memory_provider.hpp"
#include "page_store.hpp"
#include "pid.hpp"

namespace arraypool {

struct PoolConfig {
  u32 pageBytes = 4096;
  u64 frameCount = 1024;
  PidLayout pid{};            // suffix width + translation OS page size
  bool hugeFrames = false;    // advise huge pages for the frame arena only
  bool prefetchEnabled = true;
  bool optimisticEnabled = true;
  u32 optimisticRetryCap = 8;
  MemoryProvider* provider = nullptr;  // default: process-wide OS provider
  const TestHooks* hooks = nullptr;

  void validate() const {
    pid.validate();
    if (pageBytes < 512 || (pageBytes & (pageBytes - 1)) != 0)
      throw ConfigError("page bytes must be a power of two >= 512");
    if (frameCount == 0 || frameCount > 0xfffffffeull)
      throw ConfigError("frame count out of range");
  }
};

struct PoolStats {
  u64 faults = 0;
  u64 evictions = 0;
  u64 holePunches = 0;
  u64 ioReads = 0;
  u64 ioWrites = 0;
  u64 ioReadBatches = 0;
  u64 pathCacheHits = 0;
  u64 pathCacheMisses = 0;
  u64 optimisticRetries = 0;
  u64 optimisticFallbacks = 0;
  u64 residentPages = 0;
  size_t translationResidentBytes = 0;
  size_t translationVirtualBytes = 0;
  size_t frameArenaBytes = 0;
};

template <class Backend>
class BufferPool {
 public:
  using Handle = typename Backend::Handle;

  // The backend is built in place from backendArgs: backends own the latch
  // words whose addresses escape as handles, so they are not movable.
  template <class... Args>
  BufferPool(PageStore& store, PoolConfig cfg, Args&&... backendArgs)
      : cfg_(validated(std::move(cfg))),
        store_(store),
        backend_(std::forward<Args>(backendArgs)...),
        frames_(providerOf(cfg_), cfg_.frameCount, cfg_.pageBytes,
                cfg_.hugeFrames),
        hooks_(cfg_.hooks) {
    if (store.pageBytes() != cfg_.pageBytes)
      throw ConfigError("page store and pool disagree on page size");
  }

  u32 pageBytes() const { return cfg_.pageBytes; }
  u64 frameCount() const { return cfg_.frameCount; }
  Backend& backend() { return backend_; }
  const PoolConfig& config() const { return cfg_; }
  PageStore& store() { return store_; }

  static MemoryProvider& providerOf(const PoolConfig& cfg) {
    return cfg.provider ? *cfg.provider : OsMemoryProvider::instance();
  }

  static PoolConfig validated(PoolConfig cfg) {
    cfg.validate();
    return cfg;
  }

  // ---- pinning -----------------------------------------------------------------

  std::span<std::byte> pinExclusive(PageId pid) {
    checkPid(pid);
    Backoff bo;
    for (;;) {
      Handle h = backend_.entry(pid);
      TranslationEntry* te = Backend::entryOf(h);
      u64 w = te->load();
      if (TranslationEntry::frameOf(w) == kInvalidFrame) {
        fault(pid);
        continue;
      }
      if (TranslationEntry::stateOf(w) == TranslationEntry::Unlocked &&
          te->tryLockExclusive()) {
        if (!backend_.validate(pid, h)) {  // recycled slot: not our page
          te->unlockRestore();
          continue;
        }
        FrameId f = TranslationEntry::frameOf(te->load(std::memory_order_relaxed));
        if (f == kInvalidFrame) {  // latched a freshly evicted word
          te->unlockRestore();
          continue;
        }
        frames_.touch(f);
        return {frames_.framePtr(f), cfg_.pageBytes};
      }
      bo.pause();
    }
  }

  void unpinExclusive(PageId pid, bool dirty) {
    Handle h = backend_.entry(pid);
    TranslationEntry* te = Backend::entryOf(h);
    u64 w = te->load(std::memory_order_relaxed);
    FrameId f = TranslationEntry::frameOf(w);
    if (TranslationEntry::stateOf(w) != TranslationEntry::Exclusive ||
        f == kInvalidFrame)
      throw PoolError("unpinExclusive without exclusive pin");
    if (dirty) frames_.desc(f).dirty.store(true, std::memory_order_relaxed);
    te->unlockBumpVersion();
  }

  std::span<const std::byte> pinShared(PageId pid) {
    checkPid(pid);
    Backoff bo;
    for (;;) {
      Handle h = backend_.entry(pid);
      TranslationEntry* te = Backend::entryOf(h);
      u64 w = te->load();
      if (TranslationEntry::frameOf(w) == kInvalidFrame) {
        fault(pid);
        continue;
      }
      if (te->tryLockShared()) {
        if (!backend_.validate(pid, h)) {
          te->unlockShared();
          continue;
        }
        FrameId f = TranslationEntry::frameOf(te->load(std::memory_order_relaxed));
        frames_.touch(f);
        return {frames_.framePtr(f), cfg_.pageBytes};
      }
      bo.pause();
    }
  }

  void unpinShared(PageId pid) {
    Handle h = backend_.entry(pid);
    Backend::entryOf(h)->unlockShared();
  }

  // read_fn: void(std::span<const std::byte>); may run multiple times, may see
  // torn bytes on runs that fail validation, must be side-effect-free until
  // the read validates.
  template <class F>
  void optimisticRead(PageId pid, F&& readFn) {
    checkPid(pid);
    if (!cfg_.optimisticEnabled) return sharedFallback(pid, readFn);
    u32 attempts = 0;
    Backoff bo;
    for (;;) {
      Handle h = backend_.entry(pid);
      TranslationEntry* te = Backend::entryOf(h);
      u64 w = te->load();
      if (TranslationEntry::frameOf(w) == kInvalidFrame) {
        fault(pid);
        continue;
      }
      if (TranslationEntry::stateOf(w) != TranslationEntry::Exclusive) {
        FrameId f = TranslationEntry::frameOf(w);
        readFn(std::span<const std::byte>(frames_.framePtr(f), cfg_.pageBytes));
        u64 w2 = te->load();
        if (TranslationEntry::versionOf(w2) == TranslationEntry::versionOf(w) &&
            TranslationEntry::frameOf(w2) == f &&
            TranslationEntry::stateOf(w2) != TranslationEntry::Exclusive &&
            backend_.validate(pid, h)) {
          frames_.touch(f);
          return;
        }
      }
      optimisticRetries_.fetch_add(1, std::memory_order_relaxed);
      if (++attempts >= cfg_.optimisticRetryCap) {
        optimisticFallbacks_.fetch_add(1, std::memory_order_relaxed);
        return sharedFallback(pid, readFn);
      }
      bo.pause();
    }
  }

  // ---- group prefetch -------------------------------------------------------------
  // Phase 1 prefetches the translation entries, phase 2 prefetches resident
  // frames at the caller's in-page offsets while collecting the misses, and
  // phase 3 loads all misses through one batched storage read. offsets must
  // have one element per pid or exactly one element for all.

  void prefetchGroup(std::span<const PageId> pids, std::span<const u32> offsets) {
    if (!cfg_.prefetchEnabled || pids.empty()) return;
    if (offsets.size() != 1 && offsets.size() != pids.size())
      throw ConfigError("prefetchGroup: offsets must be 1 or match pids");
    for (PageId pid : pids) {
      checkPid(pid);
      __builtin_prefetch(Backend::entryOf(backend_.entry(pid)));
    }
    std::vector<PageId> missing;
    for (size_t i = 0; i < pids.size(); i++) {
      TranslationEntry* te = Backend::entryOf(backend_.entry(pids[i]));
      u64 w = te->load();
      FrameId f = TranslationEntry::frameOf(w);
      if (f != kInvalidFrame) {
        u32 off = offsets[offsets.size() == 1 ? 0 : i];
        __builtin_prefetch(frames_.framePtr(f) + (off % cfg_.pageBytes));
      } else {
        missing.push_back(pids[i]);
      }
    }
    if (!missing.empty()) batchedFault(missing);
  }

  // ---- maintenance -------------------------------------------------------------------

  // Write back every dirty resident page. Requires no exclusive pins held by
  // the caller; concurrent activity is tolerated. Per-page write errors are
  // aggregated and surfaced after the sweep. Idempotent.
  void flushAll() {
    std::string errors;
    for (FrameId f = 1; f <= frames_.frameCount(); f++) {
      FrameDescriptor& d = frames_.desc(f);
      PageId pid = d.owner.load(std::memory_order_acquire);
      if (pid == kNoOwner || !d.dirty.load(std::memory_order_relaxed)) continue;
      Handle h = backend_.find(pid);
      if (!h) continue;
      TranslationEntry* te = Backend::entryOf(h);
      Backoff bo;
      while (!te->tryLockExclusive()) bo.pause();
      u64 w = te->load(std::memory_order_relaxed);
      FrameId cur = TranslationEntry::frameOf(w);
      if (!backend_.validate(pid, h) || cur == kInvalidFrame ||
          frames_.desc(cur).owner.load(std::memory_order_relaxed) != pid) {
        te->unlockRestore();
        continue;
      }
      if (frames_.desc(cur).dirty.load(std::memory_order_relaxed)) {
        try {
          store_.writePage(pid, frames_.framePtr(cur));
          ioWrites_.fetch_add(1, std::memory_order_relaxed);
          frames_.desc(cur).dirty.store(false, std::memory_order_relaxed);
        } catch (const std::exception& e) {
          errors += "pid " + std::to_string(pid) + ": " + e.what() + "; ";
        }
      }
      te->unlockRestore();  // page bytes unchanged: no version bump
    }
    store_.flush();
    if (!errors.empty()) throw IoError("flush failures: " + errors);
  }

  PoolStats stats() const {
    PoolStats s;
    s.faults = faults_.load();
    s.evictions = evictions_.load();
    s.holePunches = backend_.holePunches();
    s.ioReads = ioReads_.load();
    s.ioWrites = ioWrites_.load();
    s.ioReadBatches = ioReadBatches_.load();
    backend_.pathStats(s.pathCacheHits, s.pathCacheMisses);
    s.optimisticRetries = optimisticRetries_.load();
    s.optimisticFallbacks = optimisticFallbacks_.load();
    s.residentPages = frames_.usedFrames();
    s.translationResidentBytes = backend_.residentBytes();
    s.translationVirtualBytes = backend_.virtualBytes();
    s.frameArenaBytes = frames_.arenaBytes();
    return s;
  }

  FrameStore& frames() { return frames_; }

 private:
  static void checkPid(PageId pid) {
    if (pid > kMaxUsablePid) throw ConfigError("pid outside usable space");
  }

  template <class F>
  void sharedFallback(PageId pid, F&& readFn) {
    auto page = pinShared(pid);
    readFn(page);
    unpinShared(pid);
  }

  // Make pid resident (or observe it resident) and return. Holds one unit of
  // the pid's group count across the whole attempt so the group can never be
  // discarded under our feet (see translation.hpp header).
  void fault(PageId pid) {
    backend_.faultEnter(pid);
    Backoff bo;
    for (;;) {
      Handle h = backend_.entry(pid);
      if (!backend_.beginFault(pid, h)) {
        bo.pause();
        continue;
      }
      TranslationEntry* te = Backend::entryOf(h);
      hookPoint(hooks_, SchedPoint::FaultLocked);
      if (TranslationEntry::frameOf(te->load(std::memory_order_relaxed)) !=
          kInvalidFrame) {  // double-check: raced with another fault
        te->unlockRestore();
        backend_.releaseFaultCount(pid);
        return;
      }
      FrameId f;
      try {
        f = obtainFrame();
      } catch (...) {
        backend_.evictFinish(pid, h);  // re-zero word, release count
        throw;
      }
      FrameDescriptor& d = frames_.desc(f);
      d.owner.store(pid, std::memory_order_relaxed);
      d.dirty.store(false, std::memory_order_relaxed);
      d.refBit.store(true, std::memory_order_relaxed);
      hookPoint(hooks_, SchedPoint::FaultFrameReady);
      try {
        store_.readPage(pid, frames_.framePtr(f));
      } catch (...) {
        d.owner.store(kNoOwner, std::memory_order_relaxed);
        frames_.free(f);
        backend_.evictFinish(pid, h);
        throw;
      }
      ioReads_.fetch_add(1, std::memory_order_relaxed);
      hookPoint(hooks_, SchedPoint::FaultAfterRead);
      backend_.publish(pid, h, f);
      faults_.fetch_add(1, std::memory_order_relaxed);
      hookPoint(hooks_, SchedPoint::FaultPublished);
      return;
    }
  }

  FrameId obtainFrame() {
    FrameId f = frames_.tryAllocate();
    if (f != kInvalidFrame) return f;
    return evictVictim();
  }

  // Evict one page and hand its frame to the caller. Skips latched victims
  // (pinned or mid-fault) instead of waiting on them.
  FrameId evictVictim() {
    u64 attempts = 0;
    const u64 limit = 4 * frames_.frameCount() + 64;
    for (;;) {
      if (++attempts > limit)
        throw PoolExhaustedError("buffer pool exhausted by pinned pages");
      PageId victim = frames_.selectVictim();
      Handle h = backend_.find(victim);
      if (!h) continue;
      TranslationEntry* te = Backend::entryOf(h);
      if (!te->tryLockExclusive()) continue;
      if (!backend_.validate(victim, h)) {
        te->unlockRestore();
        continue;
      }
      u64 w = te->load(std::memory_order_relaxed);
      FrameId f = TranslationEntry::frameOf(w);
      if (f == kInvalidFrame) {  // lost a race with its eviction
        te->unlockRestore();
        continue;
      }
      FrameDescriptor& d = frames_.desc(f);
      if (d.owner.load(std::memory_order_relaxed) != victim) {
        te->unlockRestore();
        continue;
      }
      hookPoint(hooks_, SchedPoint::EvictLocked);
      if (d.dirty.load(std::memory_order_relaxed)) {
        try {
          store_.writePage(victim, frames_.framePtr(f));
        } catch (...) {
          te->unlockRestore();  // victim stays resident and dirty
          throw;
        }
        ioWrites_.fetch_add(1, std::memory_order_relaxed);
        d.dirty.store(false, std::memory_order_relaxed);
        hookPoint(hooks_, SchedPoint::EvictWroteBack);
      }
      te->stageEvictedFrame();
      hookPoint(hooks_, SchedPoint::EvictStaged);
      backend_.evictFinish(victim, h);
      d.owner.store(kNoOwner, std::memory_order_relaxed);
      d.refBit.store(false, std::memory_order_relaxed);
      evictions_.fetch_add(1, std::memory_order_relaxed);
      return f;
    }
  }

  // Fault many pids with one batched storage read. Contended pids (someone
  // else is already faulting them) are skipped; batch I/O errors roll every
  // collected page back to evicted and surface on the next pin instead.
  void batchedFault(const std::vector<PageId>& missing) {
    struct Pending {
      PageId pid;
      Handle h;
      FrameId f;
    };
    std::vector<Pending> got;
    got.reserve(missing.size());
    for (PageId pid : missing) {
      backend_.faultEnter(pid);
      Handle h = backend_.entry(pid);
      if (!backend_.beginFault(pid, h)) {
        backend_.releaseFaultCount(pid);
        continue;
      }
      TranslationEntry* te = Backend::entryOf(h);
      if (TranslationEntry::frameOf(te->load(std::memory_order_relaxed)) !=
          kInvalidFrame) {
        te->unlockRestore();
        backend_.releaseFaultCount(pid);
        continue;
      }
      FrameId f;
      try {
        f = obtainFrame();
      } catch (...) {
        backend_.evictFinish(pid, h);
        break;  // out of frames: load what we already collected
      }
      FrameDescriptor& d = frames_.desc(f);
      d.owner.store(pid, std::memory_order_relaxed);
      d.dirty.store(false, std::memory_order_relaxed);
      d.refBit.store(true, std::memory_order_relaxed);
      got.push_back({pid, h, f});
    }
    if (got.empty()) return;
    std::vector<PageId> pids(got.size());
    std::vector<std::byte*> dsts(got.size());
    for (size_t i = 0; i < got.size(); i++) {
      pids[i] = got[i].pid;
      dsts[i] = frames_.framePtr(got[i].f);
    }
    try {
      store_.readPages(pids.data(), dsts.data(), got.size());
    } catch (...) {
      for (auto& p : got) {
        frames_.desc(p.f).owner.store(kNoOwner, std::memory_order_relaxed);
        frames_.free(p.f);
        backend_.evictFinish(p.pid, p.h);
      }
      return;
    }
    ioReads_.fetch_add(got.size(), std::memory_order_relaxed);
    ioReadBatches_.fetch_add(1, std::memory_order_relaxed);
    for (auto& p : got) {
      backend_.publish(p.pid, p.h, p.f);
      faults_.fetch_add(1, std::memory_order_relaxed);
    }
  }

  PoolConfig cfg_;
  PageStore& store_;
  Backend backend_;
  FrameStore frames_;
  const TestHooks* hooks_;
  std::atomic<u64> faults_{0}, evictions_{0}, ioReads_{0}, ioWrites_{0},
      ioReadBatches_{0}, optimisticRetries_{0}, optimisticFallbacks_{0};
};

}  // namespace arraypool
