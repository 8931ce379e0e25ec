#pragma once
// Demand-zero virtual memory regions behind translation arrays, group
// counters, and the frame area.
//
// Two providers:
//  * OsMemoryProvider: plain anonymous mmap. Untouched offsets read zero, the
//    kernel backs pages on first write, release() is madvise(MADV_DONTNEED),
//    residency is best-effort OS accounting (mincore).
//  * InstrumentedMemoryProvider: same observable semantics, but per-OS-page
//    residency is tracked exactly. Regions are reserved PROT_READ; the first
//    write to a page raises SIGSEGV, and a process-global handler flips that
//    page to read-write and marks it in a ledger. Reads of never-written pages
//    never back anything. release() re-protects, discards, and clears the
//    ledger. This observes raw atomic stores into the region without touching
//    the hot path, which is what deterministic reclamation tests need.

#include <sys/mman.h>
#include <unistd.h>

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <vector>

#include "common.hpp"

namespace arraypool {

class MemoryProvider;

class Region {
 public:
  Region() = default;
  Region(Region&& o) noexcept { *this = std::move(o); }
  Region& operator=(Region&& o) noexcept {
    reset();
    prov_ = o.prov_;
    base_ = o.base_;
    len_ = o.len_;
    impl_ = o.impl_;
    o.prov_ = nullptr;
    o.base_ = nullptr;
    o.len_ = 0;
    o.impl_ = nullptr;
    return *this;
  }
  Region(const Region&) = delete;
  ~Region() { reset(); }

  std::byte* data() const { return static_cast<std::byte*>(base_); }
  size_t size() const { return len_; }
  bool valid() const { return base_ != nullptr; }

  inline void release(size_t offset, size_t length);
  inline size_t residentBytes() const;
  inline void adviseHugePages();
  inline void reset();

 private:
  friend class MemoryProvider;
  MemoryProvider* prov_ = nullptr;
  void* base_ = nullptr;
  size_t len_ = 0;
  void* impl_ = nullptr;  // provider-private state
};

class MemoryProvider {
 public:
  virtual ~MemoryProvider() = default;

  // Reserve a demand-zero region. Nothing is backed until first write.
  virtual Region reserve(size_t bytes) = 0;

  size_t osPageBytes() const { return size_t(sysconf(_SC_PAGESIZE)); }

 protected:
  friend class Region;
  virtual void releaseRange(Region&, size_t off, size_t len) = 0;
  virtual size_t residentOf(const Region&) const = 0;
  virtual void destroy(Region&) noexcept = 0;
  virtual void adviseHuge(Region&) {}

  static Region wrap(MemoryProvider* p, void* base, size_t len, void* impl) {
    Region r;
    r.prov_ = p;
    r.base_ = base;
    r.len_ = len;
    r.impl_ = impl;
    return r;
  }
  static void* implOf(const Region& r) { return r.impl_; }
};

inline void Region::release(size_t offset, size_t length) {
  if (!valid() || length == 0) return;
  prov_->releaseRange(*this, offset, length);
}
inline size_t Region::residentBytes() const {
  return valid() ? prov_->residentOf(*this) : 0;
}
inline void Region::adviseHugePages() {
  if (valid()) prov_->adviseHuge(*this);
}
inline void Region::reset() {
  if (valid()) prov_->destroy(*this);
  prov_ = nullptr;
  base_ = nullptr;
  len_ = 0;
  impl_ = nullptr;
}

// ---- production provider ----------------------------------------------------

class OsMemoryProvider final : public MemoryProvider {
 public:
  Region reserve(size_t bytes) override {
    size_t len = roundUp(bytes);
    void* p = mmap(nullptr, len, PROT_READ | PROT_WRITE,
                   MAP_PRIVATE | MAP_ANONYMOUS | MAP_NORESERVE, -1, 0);
    if (p == MAP_FAILED) throw PoolError("mmap failed");
    return wrap(this, p, len, nullptr);
  }

  static OsMemoryProvider& instance() {
    static OsMemoryProvider p;
    return p;
  }

 protected:
  void releaseRange(Region& r, size_t off, size_t len) override {
    size_t pg = osPageBytes();
    if (off % pg || len % pg || off + len > r.size())
      throw PoolError("release range not page aligned");
    if (madvise(r.data() + off, len, MADV_DONTNEED) != 0)
      throw PoolError("madvise(MADV_DONTNEED) failed");
  }

  size_t residentOf(const Region& r) const override {
    // best effort: mincore in bounded chunks
    size_t pg = osPageBytes();
    size_t pages = r.size() / pg;
    size_t resident = 0;
    constexpr size_t chunkPages = 1 << 18;  // 1 GiB of pages per call at 4K
    std::vector<unsigned char> vec(std::min(pages, chunkPages));
    for (size_t start = 0; start < pages; start += chunkPages) {
      size_t n = std::min(chunkPages, pages - start);
      if (mincore(r.data() + start * pg, n * pg, vec.data()) != 0) return 0;
      for (size_t i = 0; i < n; i++) resident += vec[i] & 1;
    }
    return resident * pg;
  }

  void destroy(Region& r) noexcept override { munmap(r.data(), r.size()); }

  void adviseHuge(Region& r) override {
#ifdef MADV_HUGEPAGE
    madvise(r.data(), r.size(), MADV_HUGEPAGE);  // advisory; ignore errors
#endif
  }

  size_t roundUp(size_t bytes) const {
    size_t pg = osPageBytes();
    return (std::max<size_t>(bytes, 1) + pg - 1) / pg * pg;
  }
};

// ---- instrumented provider ----------------------------------------------------

namespace detail {

struct InstrRegionState {
  std::byte* base = nullptr;
  size_t len = 0;
  size_t pageBytes = 4096;
  std::atomic<size_t> residentPages{0};
  std::vector<std::atomic<u64>> bitmap;  // one bit per OS page

  bool contains(const void* p) const {
    return p >= base && p < base + len;
  }
  // returns true if the bit was newly set
  bool markWritten(size_t page) {
    u64 bit = u64(1) << (page & 63);
    u64 prev = bitmap[page >> 6].fetch_or(bit, std::memory_order_acq_rel);
    if (prev & bit) return false;
    residentPages.fetch_add(1, std::memory_order_relaxed);
    return true;
  }
  bool isWritten(size_t page) const {
    u64 bit = u64(1) << (page & 63);
    return bitmap[page >> 6].load(std::memory_order_acquire) & bit;
  }
};

// Global registry the signal handler scans. Fixed capacity, lock-free reads.
struct InstrRegistry {
  static constexpr size_t kSlots = 1024;
  std::atomic<InstrRegionState*> slots[kSlots];
  struct sigaction oldAction;
  std::once_flag installed;

  static InstrRegistry& instance() {
    static InstrRegistry r;
    return r;
  }

  void add(InstrRegionState* s) {
    std::call_once(installed, [this] { installHandler(); });
    for (auto& slot : slots) {
      InstrRegionState* expect = nullptr;
      if (slot.compare_exchange_strong(expect, s, std::memory_order_acq_rel))
        return;
    }
    throw PoolError("too many instrumented regions");
  }
  void remove(InstrRegionState* s) {
    for (auto& slot : slots)
      if (slot.load(std::memory_order_acquire) == s)
        slot.store(nullptr, std::memory_order_release);
  }

  void installHandler() {
    struct sigaction sa;
    std::memset(&sa, 0, sizeof(sa));
    sa.sa_sigaction = &InstrRegistry::onFault;
    sa.sa_flags = SA_SIGINFO | SA_NODEFER;
    sigemptyset(&sa.sa_mask);
    if (sigaction(SIGSEGV, &sa, &oldAction) != 0)
      throw PoolError("sigaction failed");
  }

  // async-signal-safe: syscalls + atomics only
  static void onFault(int sig, siginfo_t* info, void* ctx) {
    auto& reg = instance();
    void* addr = info ? info->si_addr : nullptr;
    if (addr) {
      for (auto& slot : reg.slots) {
        InstrRegionState* s = slot.load(std::memory_order_acquire);
        if (s && s->contains(addr)) {
          size_t page =
              (size_t(addr) - size_t(s->base)) / s->pageBytes;
          mprotect(s->base + page * s->pageBytes, s->pageBytes,
                   PROT_READ | PROT_WRITE);
          s->markWritten(page);
          return;  // retry the faulting instruction
        }
      }
    }
    // not ours: chain to the previous disposition
    if (reg.oldAction.sa_flags & SA_SIGINFO) {
      if (reg.oldAction.sa_sigaction) {
        reg.oldAction.sa_sigaction(sig, info, ctx);
        return;
      }
    } else if (reg.oldAction.sa_handler != SIG_DFL &&
               reg.oldAction.sa_handler != SIG_IGN) {
      reg.oldAction.sa_handler(sig);
      return;
    }
    signal(SIGSEGV, SIG_DFL);
    raise(SIGSEGV);
  }
};

}  // namespace detail

class InstrumentedMemoryProvider final : public MemoryProvider {
 public:
  // observed by tests that need to pin the exact moment backing is dropped
  std::function<void(const Region&, size_t off, size_t len)> onRelease;

  ~InstrumentedMemoryProvider() override = default;

  Region reserve(size_t bytes) override {
    size_t pg = osPageBytes();
    size_t len = (std::max<size_t>(bytes, 1) + pg - 1) / pg * pg;
    void* p = mmap(nullptr, len, PROT_READ,
                   MAP_PRIVATE | MAP_ANONYMOUS | MAP_NORESERVE, -1, 0);
    if (p == MAP_FAILED) throw PoolError("mmap failed");
    auto st = std::make_unique<detail::InstrRegionState>();
    st->base = static_cast<std::byte*>(p);
    st->len = len;
    st->pageBytes = pg;
    st->bitmap = std::vector<std::atomic<u64>>((len / pg + 63) / 64);
    detail::InstrRegistry::instance().add(st.get());
    {
      SpinGuard g(lock_);
      states_.push_back(std::move(st));
    }
    return wrap(this, p, len, states_.back().get());
  }

  size_t totalResidentBytes() const {
    SpinGuard g(const_cast<SpinLock&>(lock_));
    size_t pages = 0;
    for (auto& s : states_) pages += s->residentPages.load();
    return pages * osPageBytes();
  }
  u64 releaseCalls() const { return releaseCalls_.load(); }
  u64 pagesReleased() const { return pagesReleased_.load(); }

 protected:
  void releaseRange(Region& r, size_t off, size_t len) override {
    auto* s = static_cast<detail::InstrRegionState*>(implOf(r));
    size_t pg = s->pageBytes;
    if (off % pg || len % pg || off + len > r.size())
      throw PoolError("release range not page aligned");
    if (onRelease) onRelease(r, off, len);
    std::byte* start = r.data() + off;
    if (mprotect(start, len, PROT_READ) != 0)
      throw PoolError("mprotect failed");
    if (madvise(start, len, MADV_DONTNEED) != 0)
      throw PoolError("madvise failed");
    size_t firstPage = off / pg;
    for (size_t i = 0; i < len / pg; i++) {
      size_t page = firstPage + i;
      u64 bit = u64(1) << (page & 63);
      u64 prev = s->bitmap[page >> 6].fetch_and(~bit, std::memory_order_acq_rel);
      if (prev & bit) {
        s->residentPages.fetch_sub(1, std::memory_order_relaxed);
        pagesReleased_.fetch_add(1, std::memory_order_relaxed);
      }
    }
    releaseCalls_.fetch_add(1, std::memory_order_relaxed);
  }

  size_t residentOf(const Region& r) const override {
    auto* s = static_cast<detail::InstrRegionState*>(implOf(r));
    return s->residentPages.load(std::memory_order_acquire) * s->pageBytes;
  }

  void destroy(Region& r) noexcept override {
    auto* s = static_cast<detail::InstrRegionState*>(implOf(r));
    detail::InstrRegistry::instance().remove(s);
    munmap(r.data(), r.size());
    SpinGuard g(lock_);
    for (auto it = states_.begin(); it != states_.end(); ++it)
      if (it->get() == s) {
        states_.erase(it);
        break;
      }
  }

 private:
  SpinLock lock_;
  std::vector<std::unique_ptr<detail::InstrRegionState>> states_;
  std::atomic<u64> releaseCalls_{0};
  std::atomic<u64> pagesReleased_{0};
};

}  // namespace arraypool
