#pragma once
// A fixed-width B+tree over the buffer pool: 8-byte keys, 8-byte values,
// fan-out derived from the page size. Inserts descend with exclusive latch
// coupling and split any full node proactively on the way down, so a split
// never has to propagate back up. Lookups descend optimistically (one
// validated read per level) and fall back to shared latch coupling when the
// optimistic path misses, which also covers the race where a concurrent split
// moves the key sideways mid-descent. Range scans couple shared latches along
// the leaf chain. Duplicate inserts overwrite.
//
// Page layout (all little-endian):
//   u16 kind (1=leaf, 2=internal), u16 count, u32 reserved, u64 next
//   leaf:     keys[capLeaf] then values[capLeaf]; next = right sibling pid
//   internal: keys[capInt] then children[capInt+1] pids; next unused
// The root lives at a fixed pid; splitting a full root moves its contents
// into two fresh children and rewrites the root in place one level taller.

#include <optional>
#include <string>
#include <vector>

#include "buffer_pool.hpp"

namespace arraypool {

namespace btree_detail {

static constexpr u16 kLeaf = 1;
static constexpr u16 kInternal = 2;
static constexpr u32 kHeaderBytes = 16;
static constexpr u64 kNoLeaf = ~u64(0);

struct Layout {
  u32 pageBytes;
  u32 capLeaf;  // max key/value pairs per leaf
  u32 capInt;   // max separator keys per internal node (children = capInt+1)

  explicit Layout(u32 pb) : pageBytes(pb) {
    capLeaf = (pb - kHeaderBytes) / 16;
    capInt = (pb - kHeaderBytes - 8) / 16;
  }
};

// Field accessors over a raw page. Writers hold the exclusive latch; the
// optimistic reader works on whatever bytes are there and relies on the
// pool's validation, so every index computed from possibly-torn bytes is
// clamped before use.
inline u16 kindOf(const std::byte* p) { return loadLE<u16>(p); }
inline u16 countOf(const std::byte* p) { return loadLE<u16>(p + 2); }
inline u64 nextOf(const std::byte* p) { return loadLE<u64>(p + 8); }
inline void setKind(std::byte* p, u16 k) { storeLE<u16>(p, k); }
inline void setCount(std::byte* p, u16 c) { storeLE<u16>(p + 2, c); }
inline void setNext(std::byte* p, u64 n) { storeLE<u64>(p + 8, n); }

inline u64 keyAt(const std::byte* p, u32 i) {
  return loadLE<u64>(p + kHeaderBytes + 8 * i);
}
inline void setKeyAt(std::byte* p, u32 i, u64 k) {
  storeLE<u64>(p + kHeaderBytes + 8 * i, k);
}
inline u64 leafValueAt(const Layout& L, const std::byte* p, u32 i) {
  return loadLE<u64>(p + kHeaderBytes + 8 * L.capLeaf + 8 * i);
}
inline void setLeafValueAt(const Layout& L, std::byte* p, u32 i, u64 v) {
  storeLE<u64>(p + kHeaderBytes + 8 * L.capLeaf + 8 * i, v);
}
inline u64 childAt(const Layout& L, const std::byte* p, u32 i) {
  return loadLE<u64>(p + kHeaderBytes + 8 * L.capInt + 8 * i);
}
inline void setChildAt(const Layout& L, std::byte* p, u32 i, u64 pid) {
  storeLE<u64>(p + kHeaderBytes + 8 * L.capInt + 8 * i, pid);
}

// first index whose key is > k (child index to descend into)
inline u32 upperBound(const std::byte* p, u32 count, u64 k) {
  u32 lo = 0, hi = count;
  while (lo < hi) {
    u32 mid = (lo + hi) / 2;
    if (keyAt(p, mid) <= k)
      lo = mid + 1;
    else
      hi = mid;
  }
  return lo;
}

// first index whose key is >= k
inline u32 lowerBound(const std::byte* p, u32 count, u64 k) {
  u32 lo = 0, hi = count;
  while (lo < hi) {
    u32 mid = (lo + hi) / 2;
    if (keyAt(p, mid) < k)
      lo = mid + 1;
    else
      hi = mid;
  }
  return lo;
}

}  // namespace btree_detail

template <class Backend>
class BTree {
  using L = btree_detail::Layout;

 public:
  // create=true initializes the root as an empty leaf. Fresh pids faulted in
  // from the store carry arbitrary bytes, so a tree must always be created
  // (or restored from a store that previously held one) before use.
  BTree(BufferPool<Backend>& pool, PageId rootPid, bool create)
      : pool_(pool), layout_(pool.pageBytes()), root_(rootPid),
        nextPid_(rootPid + 1) {
    if (layout_.capLeaf < 4 || layout_.capInt < 4)
      throw ConfigError("page size too small for btree fan-out");
    if (create) {
      auto page = pool_.pinExclusive(root_);
      initLeaf(page.data());
      pool_.unpinExclusive(root_, true);
    }
  }

  PageId rootPid() const { return root_; }
  PageId allocationTip() const { return nextPid_.load(); }
  u32 leafCapacity() const { return layout_.capLeaf; }
  u32 internalKeyCapacity() const { return layout_.capInt; }

  // ---- insert (upsert) ------------------------------------------------------------

  void insert(u64 key, u64 value) {
    using namespace btree_detail;
    PageId pid = root_;
    auto page = pool_.pinExclusive(pid);
    std::byte* p = page.data();
    if (full(p)) {
      splitRoot(p);  // root stays latched, now internal and non-full
    }
    for (;;) {
      if (kindOf(p) == kLeaf) {
        leafInsert(p, key, value);
        pool_.unpinExclusive(pid, true);
        return;
      }
      u32 i = upperBound(p, countOf(p), key);
      PageId childPid = childAt(layout_, p, i);
      auto childPage = pool_.pinExclusive(childPid);
      std::byte* c = childPage.data();
      bool parentDirty = false;
      if (full(c)) {
        u64 sep;
        PageId rightPid = splitChild(p, i, c, sep);
        parentDirty = true;
        if (key >= sep) {  // descend into the new right sibling instead
          pool_.unpinExclusive(childPid, true);
          childPid = rightPid;
          childPage = pool_.pinExclusive(childPid);
          c = childPage.data();
        }
      }
      pool_.unpinExclusive(pid, parentDirty);
      pid = childPid;
      p = c;
    }
  }

  // ---- lookup ---------------------------------------------------------------------

  std::optional<u64> lookup(u64 key) {
    using namespace btree_detail;
    // Optimistic descent: one validated read per level. Bytes inside the
    // callback may be torn, so counts are clamped and the result is only
    // trusted because the pool validated the version afterwards.
    PageId pid = root_;
    for (u32 depth = 0; depth < kMaxDepth; depth++) {
      u16 kind = 0;
      u64 down = 0;
      bool found = false;
      pool_.optimisticRead(pid, [&](std::span<const std::byte> page) {
        const std::byte* p = page.data();
        kind = kindOf(p);
        u32 count = countOf(p);
        found = false;
        if (kind == kLeaf) {
          count = std::min<u32>(count, layout_.capLeaf);
          u32 i = lowerBound(p, count, key);
          if (i < count && keyAt(p, i) == key) {
            found = true;
            down = leafValueAt(layout_, p, i);
          }
        } else {
          count = std::min<u32>(count, layout_.capInt);
          down = childAt(layout_, p, upperBound(p, count, key));
        }
      });
      if (kind == kLeaf) {
        if (found) return down;
        // Either truly absent or a concurrent split moved it sideways:
        // the coupled descent below is authoritative.
        return coupledLookup(key);
      }
      if (kind != kInternal || down == 0 || down == btree_detail::kNoLeaf)
        return coupledLookup(key);  // torn-but-validated never happens; stale hop can
      pid = down;
    }
    return coupledLookup(key);
  }

  // ---- range scan -----------------------------------------------------------------

  // Values of the first n keys >= lo, in key order.
  std::vector<u64> range(u64 lo, size_t n) {
    using namespace btree_detail;
    std::vector<u64> out;
    if (n == 0) return out;
    out.reserve(n);
    auto leaf = descendShared(lo);  // leaf arrives pinned shared
    PageId pid = leaf.pid;
    const std::byte* p = leaf.page.data();
    u32 i = lowerBound(p, countOf(p), lo);
    for (;;) {
      u32 count = countOf(p);
      for (; i < count && out.size() < n; i++)
        out.push_back(leafValueAt(layout_, p, i));
      if (out.size() >= n) break;
      u64 next = nextOf(p);
      if (next == kNoLeaf) break;
      auto nextPage = pool_.pinShared(next);  // couple along the chain
      pool_.unpinShared(pid);
      pid = next;
      p = nextPage.data();
      i = 0;
    }
    pool_.unpinShared(pid);
    return out;
  }

  // ---- validation (test support) ---------------------------------------------------

  struct CheckResult {
    bool ok = true;
    u64 keys = 0;
    u32 depth = 0;
    std::string error;
  };

  // Full structural check; call only while no writers are active.
  CheckResult validate() {
    CheckResult r;
    u64 prevLeafMax = 0;
    bool any = false;
    int leafDepth = -1;
    checkNode(root_, 0, 0, 0, false, false, true, r, leafDepth, prevLeafMax,
              any);
    r.depth = u32(leafDepth + 1);
    return r;
  }

 private:
  static constexpr u32 kMaxDepth = 64;

  bool full(const std::byte* p) const {
    using namespace btree_detail;
    u32 cap = kindOf(p) == kLeaf ? layout_.capLeaf : layout_.capInt;
    return countOf(p) >= cap;
  }

  void initLeaf(std::byte* p) {
    using namespace btree_detail;
    std::memset(p, 0, layout_.pageBytes);
    setKind(p, kLeaf);
    setCount(p, 0);
    setNext(p, kNoLeaf);
  }

  PageId allocPid() { return nextPid_.fetch_add(1); }

  void leafInsert(std::byte* p, u64 key, u64 value) {
    using namespace btree_detail;
    u32 count = countOf(p);
    u32 i = lowerBound(p, count, key);
    if (i < count && keyAt(p, i) == key) {
      setLeafValueAt(layout_, p, i, value);  // overwrite policy
      return;
    }
    std::byte* keys = p + kHeaderBytes;
    std::byte* vals = p + kHeaderBytes + 8 * layout_.capLeaf;
    std::memmove(keys + 8 * (i + 1), keys + 8 * i, 8 * (count - i));
    std::memmove(vals + 8 * (i + 1), vals + 8 * i, 8 * (count - i));
    setKeyAt(p, i, key);
    setLeafValueAt(layout_, p, i, value);
    setCount(p, u16(count + 1));
  }

  // Split latched full child c (parent p latched, slot i); returns the new
  // right sibling's pid and the separator key through sep.
  PageId splitChild(std::byte* p, u32 i, std::byte* c, u64& sep) {
    using namespace btree_detail;
    PageId rightPid = allocPid();
    auto rightPage = pool_.pinExclusive(rightPid);
    std::byte* r = rightPage.data();
    std::memset(r, 0, layout_.pageBytes);
    if (kindOf(c) == kLeaf) {
      u32 count = countOf(c);
      u32 keep = count / 2 + (count & 1);  // left keeps ceil(n/2)
      u32 moved = count - keep;
      setKind(r, kLeaf);
      setCount(r, u16(moved));
      setNext(r, nextOf(c));
      for (u32 k = 0; k < moved; k++) {
        setKeyAt(r, k, keyAt(c, keep + k));
        setLeafValueAt(layout_, r, k, leafValueAt(layout_, c, keep + k));
      }
      setCount(c, u16(keep));
      setNext(c, rightPid);
      sep = keyAt(r, 0);  // keys >= sep live right
    } else {
      u32 count = countOf(c);
      u32 mid = count / 2;  // key[mid] moves up
      u32 moved = count - mid - 1;
      setKind(r, kInternal);
      setCount(r, u16(moved));
      setNext(r, kNoLeaf);
      for (u32 k = 0; k < moved; k++)
        setKeyAt(r, k, keyAt(c, mid + 1 + k));
      for (u32 k = 0; k <= moved; k++)
        setChildAt(layout_, r, k, childAt(layout_, c, mid + 1 + k));
      sep = keyAt(c, mid);
      setCount(c, u16(mid));
    }
    // make room for sep/right in the parent at slot i
    u32 pc = countOf(p);
    std::byte* keys = p + kHeaderBytes;
    std::byte* kids = p + kHeaderBytes + 8 * layout_.capInt;
    std::memmove(keys + 8 * (i + 1), keys + 8 * i, 8 * (pc - i));
    std::memmove(kids + 8 * (i + 2), kids + 8 * (i + 1), 8 * (pc - i));
    setKeyAt(p, i, sep);
    setChildAt(layout_, p, i + 1, rightPid);
    setCount(p, u16(pc + 1));
    pool_.unpinExclusive(rightPid, true);
    return rightPid;
  }

  // Root is full: move its contents into two fresh children and rewrite the
  // root in place as an internal node over them. Root stays latched.
  void splitRoot(std::byte* p) {
    using namespace btree_detail;
    PageId leftPid = allocPid();
    PageId rightPid = allocPid();
    auto leftPage = pool_.pinExclusive(leftPid);
    auto rightPage = pool_.pinExclusive(rightPid);
    std::byte* l = leftPage.data();
    std::byte* r = rightPage.data();
    std::memset(l, 0, layout_.pageBytes);
    std::memset(r, 0, layout_.pageBytes);
    u64 sep;
    u32 count = countOf(p);
    if (kindOf(p) == kLeaf) {
      u32 keep = count / 2 + (count & 1);
      u32 moved = count - keep;
      setKind(l, kLeaf);
      setCount(l, u16(keep));
      setNext(l, rightPid);
      for (u32 k = 0; k < keep; k++) {
        setKeyAt(l, k, keyAt(p, k));
        setLeafValueAt(layout_, l, k, leafValueAt(layout_, p, k));
      }
      setKind(r, kLeaf);
      setCount(r, u16(moved));
      setNext(r, kNoLeaf);
      for (u32 k = 0; k < moved; k++) {
        setKeyAt(r, k, keyAt(p, keep + k));
        setLeafValueAt(layout_, r, k, leafValueAt(layout_, p, keep + k));
      }
      sep = keyAt(r, 0);
    } else {
      u32 mid = count / 2;
      u32 moved = count - mid - 1;
      setKind(l, kInternal);
      setCount(l, u16(mid));
      setNext(l, kNoLeaf);
      for (u32 k = 0; k < mid; k++) setKeyAt(l, k, keyAt(p, k));
      for (u32 k = 0; k <= mid; k++)
        setChildAt(layout_, l, k, childAt(layout_, p, k));
      setKind(r, kInternal);
      setCount(r, u16(moved));
      setNext(r, kNoLeaf);
      for (u32 k = 0; k < moved; k++) setKeyAt(r, k, keyAt(p, mid + 1 + k));
      for (u32 k = 0; k <= moved; k++)
        setChildAt(layout_, r, k, childAt(layout_, p, mid + 1 + k));
      sep = keyAt(p, mid);
    }
    std::memset(p, 0, layout_.pageBytes);
    setKind(p, kInternal);
    setCount(p, 1);
    setNext(p, kNoLeaf);
    setKeyAt(p, 0, sep);
    setChildAt(layout_, p, 0, leftPid);
    setChildAt(layout_, p, 1, rightPid);
    pool_.unpinExclusive(leftPid, true);
    pool_.unpinExclusive(rightPid, true);
  }

  struct PinnedLeaf {
    PageId pid;
    std::span<const std::byte> page;
  };

  // Shared-latch-coupled descent to the leaf whose range covers key; the
  // returned leaf is left pinned shared. Authoritative under concurrency:
  // a writer must take every node on this path exclusively to change it.
  PinnedLeaf descendShared(u64 key) {
    using namespace btree_detail;
    PageId pid = root_;
    auto page = pool_.pinShared(pid);
    for (;;) {
      const std::byte* p = page.data();
      if (kindOf(p) == kLeaf) return {pid, page};
      PageId child = childAt(layout_, p, upperBound(p, countOf(p), key));
      auto childPage = pool_.pinShared(child);
      pool_.unpinShared(pid);
      pid = child;
      page = childPage;
    }
  }

  std::optional<u64> coupledLookup(u64 key) {
    using namespace btree_detail;
    auto leaf = descendShared(key);
    const std::byte* p = leaf.page.data();
    u32 count = countOf(p);
    u32 i = lowerBound(p, count, key);
    std::optional<u64> out;
    if (i < count && keyAt(p, i) == key) out = leafValueAt(layout_, p, i);
    pool_.unpinShared(leaf.pid);
    return out;
  }

  // Occupancy floor after a proactive split of a full node: leaves keep
  // ceil(cap/2)/floor(cap/2); internal splits also promote the middle key,
  // so their floor is one lower when the capacity is even.
  u32 minCount(u16 kind) const {
    using namespace btree_detail;
    return kind == kLeaf ? layout_.capLeaf / 2 : (layout_.capInt - 1) / 2;
  }

  void checkNode(PageId pid, u32 depth, u64 lo, u64 hi, bool hasLo, bool hasHi,
                 bool isRoot, CheckResult& r, int& leafDepth, u64& prevLeafMax,
                 bool& anyLeaf) {
    using namespace btree_detail;
    if (!r.ok || depth > kMaxDepth) {
      if (depth > kMaxDepth) fail(r, "depth exceeded");
      return;
    }
    auto page = pool_.pinShared(pid);
    const std::byte* p = page.data();
    u16 kind = kindOf(p);
    u32 count = countOf(p);
    if (kind != kLeaf && kind != kInternal) fail(r, "bad node kind");
    if (r.ok) {
      u32 cap = kind == kLeaf ? layout_.capLeaf : layout_.capInt;
      if (count > cap) fail(r, "count over capacity");
      if (r.ok && !isRoot && count < minCount(kind))
        fail(r, "under-occupied node");
      if (r.ok && kind == kInternal && count == 0)
        fail(r, "empty internal node");
    }
    for (u32 i = 0; r.ok && i < count; i++) {
      u64 k = keyAt(p, i);
      if (i > 0 && keyAt(p, i - 1) >= k) fail(r, "keys not strictly sorted");
      if ((hasLo && k < lo) || (hasHi && k >= hi)) fail(r, "key out of range");
    }
    if (!r.ok) {
      pool_.unpinShared(pid);
      return;
    }
    if (kind == kLeaf) {
      if (leafDepth < 0)
        leafDepth = int(depth);
      else if (leafDepth != int(depth))
        fail(r, "leaves at different depths");
      if (anyLeaf && count > 0 && keyAt(p, 0) <= prevLeafMax)
        fail(r, "leaf chain out of order");
      if (count > 0) {
        prevLeafMax = keyAt(p, count - 1);
        anyLeaf = true;
      }
      r.keys += count;
      pool_.unpinShared(pid);
      return;
    }
    std::vector<PageId> kids(count + 1);
    std::vector<u64> seps(count);
    for (u32 i = 0; i <= count; i++) kids[i] = childAt(layout_, p, i);
    for (u32 i = 0; i < count; i++) seps[i] = keyAt(p, i);
    pool_.unpinShared(pid);  // release before recursing: bounded pin depth
    for (u32 i = 0; r.ok && i <= count; i++) {
      u64 clo = i == 0 ? lo : seps[i - 1];
      u64 chi = i == count ? hi : seps[i];
      checkNode(kids[i], depth + 1, clo, chi, hasLo || i > 0,
                hasHi || i < count, false, r, leafDepth, prevLeafMax, anyLeaf);
    }
  }

  static void fail(CheckResult& r, const char* what) {
    if (r.ok) {
      r.ok = false;
      r.error = what;
    }
  }

  BufferPool<Backend>& pool_;
  const L layout_;
  const PageId root_;
  std::atomic<PageId> nextPid_;
};

}  // namespace arraypool
