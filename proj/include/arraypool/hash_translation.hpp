#pragma once
// Hash-table pid->frame translation baselines, behind the same backend surface
// as the flat arrays so the pool (and every stress/differential test) runs
// unchanged on top of them.
//
// Both are partitioned into shards with one spinlock per shard (lookups take
// the shard lock: structural changes — insert on first touch, removal on
// evict — can move neighbours at any time, so the probe itself must be
// protected). Entry words keep the exact same latch/version/frame protocol.
// Because slots are recycled, a handle obtained before a removal can end up
// naming a different pid; backends therefore expose validate(pid, handle) and
// beginFault revalidates under the shard lock before latching. Entry storage
// is type-stable for the backend's lifetime (slabs / fixed slot arrays are
// never freed or relocated), so a stale handle is always safe to inspect.
//
// Sizing follows the usual open-addressing discipline: 2x frame_count slots
// (<= ~55% worst-case load including in-flight faults). The open-addressed
// backend does NOT grow: growing would relocate live latch words under
// concurrent pinners. It raises a hard error if a shard ever passes its
// high-water mark instead. The chained backend grows node slabs without bound.

#include <memory>
#include <vector>

#include "common.hpp"
#include "entry.hpp"
#include "pid.hpp"

namespace arraypool {

namespace detail {
inline u64 pow2AtLeast(u64 x) {
  u64 p = 1;
  while (p < x) p <<= 1;
  return p;
}
}  // namespace detail

// ---- chained hashing ---------------------------------------------------------

class ChainedTranslation {
  struct Node {
    std::atomic<u64> pid{~u64(0)};
    TranslationEntry te{};
    Node* next = nullptr;
  };

  struct alignas(64) Shard {
    SpinLock lock;
    std::vector<Node*> buckets;
    Node* freeList = nullptr;
    std::vector<std::unique_ptr<Node[]>> slabs;
    u64 allocated = 0;
    u64 live = 0;
  };

  static constexpr u64 kNoPid = ~u64(0);
  static constexpr u64 kSlabNodes = 1024;

 public:
  using Handle = Node*;
  static TranslationEntry* entryOf(Handle h) { return &h->te; }
  static constexpr const char* name() { return "chained"; }

  explicit ChainedTranslation(u64 frameCount) {
    u64 totalBuckets = detail::pow2AtLeast(std::max<u64>(2 * frameCount, 16));
    nShards_ = detail::pow2AtLeast(
        std::min<u64>(64, std::max<u64>(1, totalBuckets / 16)));
    shardBits_ = 0;
    while ((u64(1) << shardBits_) < nShards_) shardBits_++;
    bucketsPerShard_ = std::max<u64>(1, totalBuckets / nShards_);
    shards_ = std::make_unique<Shard[]>(nShards_);
    for (u64 s = 0; s < nShards_; s++)
      shards_[s].buckets.assign(bucketsPerShard_, nullptr);
  }

  Handle entry(PageId pid) {
    Shard& sh = shardOf(pid);
    u64 b = bucketOf(pid);
    SpinGuard g(sh.lock);
    for (Node* n = sh.buckets[b]; n; n = n->next)
      if (n->pid.load(std::memory_order_relaxed) == pid) return n;
    Node* n = allocNode(sh);
    n->pid.store(pid, std::memory_order_relaxed);
    n->next = sh.buckets[b];
    sh.buckets[b] = n;
    sh.live++;
    return n;
  }

  Handle find(PageId pid) {
    Shard& sh = shardOf(pid);
    u64 b = bucketOf(pid);
    SpinGuard g(sh.lock);
    for (Node* n = sh.buckets[b]; n; n = n->next)
      if (n->pid.load(std::memory_order_relaxed) == pid) return n;
    return nullptr;
  }

  bool validate(PageId pid, Handle h) const {
    return h->pid.load(std::memory_order_relaxed) == pid;
  }

  bool beginFault(PageId pid, Handle& h) {
    Shard& sh = shardOf(pid);
    {
      SpinGuard g(sh.lock);
      if (h->pid.load(std::memory_order_relaxed) == pid)
        return h->te.tryLockExclusive();
    }
    // handle went stale (raced with an eviction); relatch through a fresh
    // slot so a false return always means "someone else holds the latch"
    h = entry(pid);
    return h->te.tryLockExclusive();
  }

  void faultEnter(PageId) {}
  void releaseFaultCount(PageId) {}

  void publish(PageId, Handle h, FrameId f) { h->te.setFrameAndUnlock(f); }

  // caller holds the entry latch with the frame staged invalid
  void evictFinish(PageId pid, Handle h) {
    Shard& sh = shardOf(pid);
    u64 b = bucketOf(pid);
    SpinGuard g(sh.lock);
    h->te.unlockEvicted();
    h->pid.store(kNoPid, std::memory_order_relaxed);
    Node** link = &sh.buckets[b];
    while (*link != h) link = &(*link)->next;
    *link = h->next;
    h->next = sh.freeList;
    sh.freeList = h;
    sh.live--;
  }

  size_t memoryBytes() const {
    size_t b = nShards_ * sizeof(Shard);
    for (u64 s = 0; s < nShards_; s++) {
      b += shards_[s].buckets.size() * sizeof(Node*);
      b += shards_[s].allocated * sizeof(Node);
    }
    return b;
  }
  size_t residentBytes() const { return memoryBytes(); }
  size_t virtualBytes() const { return memoryBytes(); }
  u64 holePunches() const { return 0; }
  u64 liveCounterSum() const {
    u64 n = 0;
    for (u64 s = 0; s < nShards_; s++) n += shards_[s].live;
    return n;
  }
  void pathStats(u64& hits, u64& misses) const { hits = misses = 0; }
  u64 materializedArrays() const { return 0; }

 private:
  Shard& shardOf(PageId pid) const {
    return shards_[mix64(pid) & (nShards_ - 1)];
  }
  u64 bucketOf(PageId pid) const {
    return (mix64(pid) >> shardBits_) % bucketsPerShard_;
  }
  Node* allocNode(Shard& sh) {
    if (sh.freeList) {
      Node* n = sh.freeList;
      sh.freeList = n->next;
      return n;
    }
    sh.slabs.push_back(std::make_unique<Node[]>(kSlabNodes));
    sh.allocated += kSlabNodes;
    Node* slab = sh.slabs.back().get();
    for (u64 i = 1; i < kSlabNodes; i++) {
      slab[i].next = sh.freeList;
      sh.freeList = &slab[i];
    }
    return &slab[0];
  }

  u64 nShards_ = 0, shardBits_ = 0, bucketsPerShard_ = 0;
  std::unique_ptr<Shard[]> shards_;
};

// ---- open addressing (linear probing, tombstones) ----------------------------

class OpenTranslation {
  struct Slot {
    std::atomic<u64> pid{~u64(0)};  // kEmpty
    TranslationEntry te{};
  };

  struct alignas(64) Shard {
    SpinLock lock;
    std::unique_ptr<Slot[]> slots;
    u64 capMask = 0;
    u64 live = 0;
    u64 tombs = 0;
    u64 highWater = 0;
  };

  static constexpr u64 kEmpty = ~u64(0);
  static constexpr u64 kTomb = ~u64(0) - 1;

 public:
  using Handle = Slot*;
  static TranslationEntry* entryOf(Handle h) { return &h->te; }
  static constexpr const char* name() { return "open"; }

  explicit OpenTranslation(u64 frameCount) {
    u64 totalSlots = detail::pow2AtLeast(std::max<u64>(2 * frameCount, 32));
    // Shards are lock stripes, so keep them coarse: a shard must hold enough
    // slots that the binomial scatter of resident pids across shards cannot
    // push one shard past its high-water mark while the table is half empty.
    nShards_ = detail::pow2AtLeast(
        std::min<u64>(64, std::max<u64>(1, totalSlots / 1024)));
    shardBits_ = 0;
    while ((u64(1) << shardBits_) < nShards_) shardBits_++;
    u64 perShard = std::max<u64>(16, totalSlots / nShards_);
    shards_ = std::make_unique<Shard[]>(nShards_);
    for (u64 s = 0; s < nShards_; s++) {
      shards_[s].slots = std::make_unique<Slot[]>(perShard);
      shards_[s].capMask = perShard - 1;
      shards_[s].highWater = perShard * 85 / 100;
    }
    slotsPerShard_ = perShard;
  }

  Handle entry(PageId pid) {
    Shard& sh = shardOf(pid);
    SpinGuard g(sh.lock);
    u64 idx = startIndex(pid, sh);
    Slot* firstTomb = nullptr;
    auto claim = [&](Slot* target) -> Slot* {
      if (sh.live + 1 > sh.highWater)
        throw PoolError("open-addressing translation shard full");
      if (target->pid.load(std::memory_order_relaxed) == kTomb) sh.tombs--;
      target->pid.store(pid, std::memory_order_relaxed);
      sh.live++;
      return target;
    };
    for (u64 i = 0; i <= sh.capMask; i++, idx = (idx + 1) & sh.capMask) {
      Slot& s = sh.slots[idx];
      u64 p = s.pid.load(std::memory_order_relaxed);
      if (p == pid) return &s;
      if (p == kTomb) {
        if (!firstTomb) firstTomb = &s;
        continue;
      }
      if (p == kEmpty) return claim(firstTomb ? firstTomb : &s);
    }
    // A full probe cycle proved pid absent. Eviction churn can drain a shard
    // of true empties (every slot live or tombstone); reuse a tombstone, and
    // only give up when the live count itself is at the high-water mark.
    if (firstTomb) return claim(firstTomb);
    throw PoolError("open-addressing translation shard full");
  }

  Handle find(PageId pid) {
    Shard& sh = shardOf(pid);
    SpinGuard g(sh.lock);
    u64 idx = startIndex(pid, sh);
    for (u64 i = 0; i <= sh.capMask; i++, idx = (idx + 1) & sh.capMask) {
      Slot& s = sh.slots[idx];
      u64 p = s.pid.load(std::memory_order_relaxed);
      if (p == pid) return &s;
      if (p == kEmpty) return nullptr;
    }
    return nullptr;
  }

  bool validate(PageId pid, Handle h) const {
    return h->pid.load(std::memory_order_relaxed) == pid;
  }

  bool beginFault(PageId pid, Handle& h) {
    Shard& sh = shardOf(pid);
    {
      SpinGuard g(sh.lock);
      if (h->pid.load(std::memory_order_relaxed) == pid)
        return h->te.tryLockExclusive();
    }
    // handle went stale (raced with an eviction); relatch through a fresh
    // slot so a false return always means "someone else holds the latch"
    h = entry(pid);
    return h->te.tryLockExclusive();
  }

  void faultEnter(PageId) {}
  void releaseFaultCount(PageId) {}

  void publish(PageId, Handle h, FrameId f) { h->te.setFrameAndUnlock(f); }

  void evictFinish(PageId pid, Handle h) {
    Shard& sh = shardOf(pid);
    SpinGuard g(sh.lock);
    h->te.unlockEvicted();
    h->pid.store(kTomb, std::memory_order_relaxed);
    sh.live--;
    sh.tombs++;
  }

  size_t memoryBytes() const {
    return nShards_ * (sizeof(Shard) + slotsPerShard_ * sizeof(Slot));
  }
  size_t residentBytes() const { return memoryBytes(); }
  size_t virtualBytes() const { return memoryBytes(); }
  u64 holePunches() const { return 0; }
  u64 liveCounterSum() const {
    u64 n = 0;
    for (u64 s = 0; s < nShards_; s++) n += shards_[s].live;
    return n;
  }
  void pathStats(u64& hits, u64& misses) const { hits = misses = 0; }
  u64 materializedArrays() const { return 0; }

 private:
  Shard& shardOf(PageId pid) const {
    return shards_[mix64(pid) & (nShards_ - 1)];
  }
  u64 startIndex(PageId pid, const Shard& sh) const {
    return (mix64(pid) >> shardBits_) & sh.capMask;
  }

  u64 nShards_ = 0, shardBits_ = 0, slotsPerShard_ = 0;
  std::unique_ptr<Shard[]> shards_;
};

}  // namespace arraypool
