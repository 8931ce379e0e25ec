#pragma once
// Durable page storage behind the pool.
//
// FilePageStore: one sparse data file; a pid's slot offset is
// dense_index(pid) * page_bytes, where dense indices are assigned on first
// write and persisted in a sidecar directory file "<path>.dir". Directory
// format (little-endian): u64 magic 'APDIR001', u64 page_bytes, u64 count,
// then count (u64 pid, u64 slot) pairs. Reads of pids without a slot return
// zeroed pages. Batched reads are served by a small internal worker pool:
// threads blocked in pread overlap device waits, which is where batching wins
// (they cost no CPU). Optional O_DIRECT mode bypasses the page cache; aligned
// buffers (frames are) go straight through, others bounce through a
// thread-local aligned staging buffer.
//
// SyntheticPageStore: deterministic read-only page generator. Page bytes are
// a pure function of (seed, pid): bytes [0,8) pid little-endian, bytes [8,12)
// crc32 (ISO-HDLC) of bytes [12,page), remainder an xorshift64* keystream
// seeded from splitmix64(seed ^ pid*0x9e3779b97f4a7c15). Every page is
// self-validating; writes are accepted and discarded (documented).
//
// MemoryPageStore: heap-backed store that honors writes; unknown pids read as
// zeroes. Used where evicted dirty pages must survive (trees, differential
// runs) without touching disk.

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <condition_variable>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "common.hpp"

namespace arraypool {

class PageStore {
 public:
  virtual ~PageStore() = default;
  virtual u32 pageBytes() const = 0;
  virtual void readPage(PageId pid, std::byte* dst) = 0;
  virtual void writePage(PageId pid, const std::byte* src) = 0;
  // contiguous-call batched read; default degrades to a loop
  virtual void readPages(const PageId* pids, std::byte* const* dsts, size_t n) {
    for (size_t i = 0; i < n; i++) readPage(pids[i], dsts[i]);
  }
  virtual void flush() {}
};

// ---- synthetic store -----------------------------------------------------------

inline void synthFillPage(u64 seed, PageId pid, std::byte* dst, u32 pageBytes) {
  storeLE<u64>(dst, pid);
  Rng64 rng(seed ^ (pid * 0x9e3779b97f4a7c15ull));
  u32 off = 12;
  while (off < pageBytes) {
    u64 v = rng.next();
    u32 n = std::min<u32>(8, pageBytes - off);
    std::memcpy(dst + off, &v, n);
    off += n;
  }
  storeLE<u32>(dst + 8, crc32(dst + 12, pageBytes - 12));
}

inline bool synthVerifyPage(const std::byte* page, u32 pageBytes, PageId pid) {
  if (loadLE<u64>(page) != pid) return false;
  return loadLE<u32>(page + 8) == crc32(page + 12, pageBytes - 12);
}

class SyntheticPageStore final : public PageStore {
 public:
  SyntheticPageStore(u64 seed, u32 pageBytes)
      : seed_(seed), pageBytes_(pageBytes) {}

  u32 pageBytes() const override { return pageBytes_; }
  u64 seed() const { return seed_; }

  void readPage(PageId pid, std::byte* dst) override {
    synthFillPage(seed_, pid, dst, pageBytes_);
    reads_.fetch_add(1, std::memory_order_relaxed);
  }
  void writePage(PageId, const std::byte*) override {
    writes_.fetch_add(1, std::memory_order_relaxed);  // generator is the truth
  }

  u64 reads() const { return reads_.load(); }
  u64 writes() const { return writes_.load(); }

 private:
  u64 seed_;
  u32 pageBytes_;
  std::atomic<u64> reads_{0}, writes_{0};
};

// ---- heap store -----------------------------------------------------------------

class MemoryPageStore final : public PageStore {
 public:
  explicit MemoryPageStore(u32 pageBytes) : pageBytes_(pageBytes) {}

  u32 pageBytes() const override { return pageBytes_; }

  void readPage(PageId pid, std::byte* dst) override {
    reads_.fetch_add(1, std::memory_order_relaxed);
    std::shared_lock lk(lock_);
    auto it = pages_.find(pid);
    if (it == pages_.end())
      std::memset(dst, 0, pageBytes_);
    else
      std::memcpy(dst, it->second.get(), pageBytes_);
  }

  void writePage(PageId pid, const std::byte* src) override {
    writes_.fetch_add(1, std::memory_order_relaxed);
    std::unique_lock lk(lock_);
    auto& slot = pages_[pid];
    if (!slot) slot = std::make_unique<std::byte[]>(pageBytes_);
    std::memcpy(slot.get(), src, pageBytes_);
  }

  u64 reads() const { return reads_.load(); }
  u64 writes() const { return writes_.load(); }
  size_t knownPages() const {
    std::shared_lock lk(lock_);
    return pages_.size();
  }

  // Snapshot for differential comparisons; zero page for unknown pids.
  std::vector<std::byte> pageCopy(PageId pid) const {
    std::vector<std::byte> out(pageBytes_, std::byte{0});
    std::shared_lock lk(lock_);
    auto it = pages_.find(pid);
    if (it != pages_.end())
      std::memcpy(out.data(), it->second.get(), pageBytes_);
    return out;
  }

 private:
  u32 pageBytes_;
  mutable std::shared_mutex lock_;
  std::unordered_map<PageId, std::unique_ptr<std::byte[]>> pages_;
  std::atomic<u64> reads_{0}, writes_{0};
};

// ---- file store -----------------------------------------------------------------

struct FileStoreOptions {
  bool directIo = false;
  u32 readWorkers = 8;       // threads used for batched reads (I/O-wait bound)
  u32 inlineBatchLimit = 2;  // batches up to this size are read inline
};

class FilePageStore final : public PageStore {
  static constexpr u64 kDirMagic = 0x3130305249445041ull;  // "APDIR001"

 public:
  explicit FilePageStore(std::string path, u32 pageBytes,
                         FileStoreOptions opts = {})
      : path_(std::move(path)), pageBytes_(pageBytes), opts_(opts) {
    if (opts_.directIo && pageBytes_ % 512 != 0)
      throw ConfigError("direct I/O needs a sector-multiple page size");
    int flags = O_RDWR | O_CREAT;
#ifdef O_DIRECT
    if (opts_.directIo) flags |= O_DIRECT;
#endif
    fd_ = ::open(path_.c_str(), flags, 0644);
    if (fd_ < 0 && opts_.directIo) {  // fs without O_DIRECT: fall back
      opts_.directIo = false;
      fd_ = ::open(path_.c_str(), O_RDWR | O_CREAT, 0644);
    }
    if (fd_ < 0) throw IoError("cannot open page file: " + path_);
    loadDirectory();
  }

  ~FilePageStore() override {
    stopWorkers();
    try {
      persistDirectory();
    } catch (...) {
    }
    if (fd_ >= 0) ::close(fd_);
  }

  u32 pageBytes() const override { return pageBytes_; }
  bool directIo() const { return opts_.directIo; }

  void readPage(PageId pid, std::byte* dst) override {
    i64 slot = slotOf(pid);
    reads_.fetch_add(1, std::memory_order_relaxed);
    if (slot < 0) {
      std::memset(dst, 0, pageBytes_);
      return;
    }
    readSlot(u64(slot), dst);
  }

  void writePage(PageId pid, const std::byte* src) override {
    u64 slot = slotOfOrAssign(pid);
    if (opts_.directIo && !aligned(src)) {
      std::byte* b = bounceBuffer();
      std::memcpy(b, src, pageBytes_);
      src = b;
    }
    ssize_t n = ::pwrite(fd_, src, pageBytes_, i64(slot) * pageBytes_);
    if (n != ssize_t(pageBytes_))
      throw IoError("short write on page file: " + path_ + ": " +
                    std::strerror(n < 0 ? errno : EIO));
    writes_.fetch_add(1, std::memory_order_relaxed);
  }

  void readPages(const PageId* pids, std::byte* const* dsts,
                 size_t n) override {
    batches_.fetch_add(1, std::memory_order_relaxed);
    if (n <= opts_.inlineBatchLimit || opts_.readWorkers <= 1) {
      for (size_t i = 0; i < n; i++) readPage(pids[i], dsts[i]);
      return;
    }
    startWorkers();
    std::lock_guard batchSerial(batchMutex_);  // one batch in flight at a time
    std::unique_lock lk(jobMutex_);
    job_.pids = pids;
    job_.dsts = dsts;
    job_.n = n;
    job_.next.store(0, std::memory_order_relaxed);
    job_.done.store(0, std::memory_order_relaxed);
    job_.failed.store(false, std::memory_order_relaxed);
    job_.active = true;
    jobCv_.notify_all();
    lk.unlock();

    runJobShare();  // the caller participates too

    lk.lock();
    doneCv_.wait(lk, [&] { return job_.done.load() == job_.n; });
    job_.active = false;
    bool failed = job_.failed.load();
    lk.unlock();
    if (failed) throw IoError("batched read failed on: " + path_);
  }

  void flush() override {
    persistDirectory();
    if (fdatasync(fd_) != 0) throw IoError("fdatasync failed on: " + path_);
  }

  u64 reads() const { return reads_.load(); }
  u64 writes() const { return writes_.load(); }
  u64 batches() const { return batches_.load(); }
  u64 knownPages() const {
    std::shared_lock g(mapLock_);
    return slots_.size();
  }

 private:
  // O_DIRECT needs sector-aligned buffers; page alignment satisfies any sector.
  static bool aligned(const std::byte* p) {
    return (reinterpret_cast<uintptr_t>(p) & 4095) == 0;
  }

  std::byte* bounceBuffer() {
    thread_local std::unique_ptr<std::byte, void (*)(std::byte*)> buf{
        nullptr, +[](std::byte* p) { ::free(p); }};
    thread_local size_t cap = 0;
    if (cap < pageBytes_) {
      void* p = nullptr;
      if (posix_memalign(&p, 4096, pageBytes_) != 0)
        throw IoError("cannot allocate aligned I/O buffer");
      buf.reset(static_cast<std::byte*>(p));
      cap = pageBytes_;
    }
    return buf.get();
  }

  void readSlot(u64 slot, std::byte* dst) {
    std::byte* target = dst;
    if (opts_.directIo && !aligned(dst)) target = bounceBuffer();
    ssize_t n = ::pread(fd_, target, pageBytes_, i64(slot) * pageBytes_);
    if (n < 0)
      throw IoError("read failed on page file: " + path_ + ": " +
                    std::strerror(errno));
    if (size_t(n) < pageBytes_)  // sparse tail
      std::memset(target + n, 0, pageBytes_ - size_t(n));
    if (target != dst) std::memcpy(dst, target, pageBytes_);
  }

  i64 slotOf(PageId pid) const {
    std::shared_lock g(mapLock_);
    auto it = slots_.find(pid);
    return it == slots_.end() ? -1 : i64(it->second);
  }

  u64 slotOfOrAssign(PageId pid) {
    {
      std::shared_lock g(mapLock_);
      auto it = slots_.find(pid);
      if (it != slots_.end()) return it->second;
    }
    std::unique_lock g(mapLock_);
    auto [it, fresh] = slots_.try_emplace(pid, nextSlot_);
    if (fresh) nextSlot_++;
    return it->second;
  }

  void loadDirectory() {
    std::string dirPath = path_ + ".dir";
    FILE* f = std::fopen(dirPath.c_str(), "rb");
    if (!f) return;  // fresh store
    auto rdU64 = [&](u64& v) {
      u8 b[8];
      if (std::fread(b, 1, 8, f) != 8) return false;
      v = loadLE<u64>(b);
      return true;
    };
    u64 magic = 0, pb = 0, count = 0;
    if (!rdU64(magic) || magic != kDirMagic || !rdU64(pb) || !rdU64(count)) {
      std::fclose(f);
      throw IoError("corrupt page directory: " + dirPath);
    }
    if (pb != pageBytes_) {
      std::fclose(f);
      throw IoError("page size mismatch in directory: " + dirPath);
    }
    for (u64 i = 0; i < count; i++) {
      u64 pid = 0, slot = 0;
      if (!rdU64(pid) || !rdU64(slot)) {
        std::fclose(f);
        throw IoError("truncated page directory: " + dirPath);
      }
      slots_[pid] = slot;
      nextSlot_ = std::max(nextSlot_, slot + 1);
    }
    std::fclose(f);
  }

  void persistDirectory() {
    std::shared_lock g(mapLock_);
    std::string dirPath = path_ + ".dir";
    std::string tmp = dirPath + ".tmp";
    FILE* f = std::fopen(tmp.c_str(), "wb");
    if (!f) throw IoError("cannot write page directory: " + tmp);
    auto wrU64 = [&](u64 v) {
      u8 b[8];
      storeLE<u64>(b, v);
      std::fwrite(b, 1, 8, f);
    };
    wrU64(kDirMagic);
    wrU64(pageBytes_);
    wrU64(slots_.size());
    for (auto& [pid, slot] : slots_) {
      wrU64(pid);
      wrU64(slot);
    }
    if (std::fclose(f) != 0) throw IoError("directory write failed: " + tmp);
    if (std::rename(tmp.c_str(), dirPath.c_str()) != 0)
      throw IoError("directory rename failed: " + dirPath);
  }

  // ---- batched-read worker pool ------------------------------------------------

  void startWorkers() {
    std::lock_guard lk(jobMutex_);
    if (!workers_.empty()) return;
    stop_ = false;
    for (u32 i = 0; i + 1 < opts_.readWorkers; i++)  // caller is worker N
      workers_.emplace_back([this] { workerLoop(); });
  }

  void stopWorkers() {
    {
      std::lock_guard lk(jobMutex_);
      stop_ = true;
      jobCv_.notify_all();
    }
    for (auto& t : workers_) t.join();
    workers_.clear();
  }

  void workerLoop() {
    for (;;) {
      {
        std::unique_lock lk(jobMutex_);
        jobCv_.wait(lk, [&] {
          return stop_ || (job_.active && job_.next.load() < job_.n);
        });
        if (stop_) return;
      }
      runJobShare();
    }
  }

  void runJobShare() {
    for (;;) {
      size_t i = job_.next.fetch_add(1, std::memory_order_relaxed);
      if (i >= job_.n) return;
      try {
        readPage(job_.pids[i], job_.dsts[i]);
      } catch (...) {
        job_.failed.store(true, std::memory_order_relaxed);
      }
      if (job_.done.fetch_add(1, std::memory_order_acq_rel) + 1 == job_.n) {
        std::lock_guard lk(jobMutex_);
        doneCv_.notify_all();
      }
    }
  }

  std::string path_;
  u32 pageBytes_;
  FileStoreOptions opts_;
  int fd_ = -1;
  mutable std::shared_mutex mapLock_;
  std::unordered_map<PageId, u64> slots_;
  u64 nextSlot_ = 0;
  std::atomic<u64> reads_{0}, writes_{0}, batches_{0};

  std::mutex batchMutex_;
  std::mutex jobMutex_;
  std::condition_variable jobCv_, doneCv_;
  std::vector<std::thread> workers_;
  bool stop_ = false;
  struct Job {
    const PageId* pids = nullptr;
    std::byte* const* dsts = nullptr;
    size_t n = 0;
    std::atomic<size_t> next{0};
    std::atomic<size_t> done{0};
    std::atomic<bool> failed{false};
    bool active = false;
  } job_;
};

}  // namespace arraypool
