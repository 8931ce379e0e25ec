#pragma once
// Shared basic types and small utilities used across the pool.

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <functional>
#include <stdexcept>
#include <thread>

#if defined(__x86_64__) || defined(_M_X64)
#include <immintrin.h>
#endif

namespace arraypool {

typedef uint8_t u8;
typedef uint16_t u16;
typedef uint32_t u32;
typedef uint64_t u64;
typedef int64_t i64;

using PageId = u64;
using FrameId = u32;  // valid frames are 1..frameCount; 0 means "no frame"

static constexpr FrameId kInvalidFrame = 0;

inline void cpuRelax() {
#if defined(__x86_64__) || defined(_M_X64)
  _mm_pause();
#else
  std::this_thread::yield();
#endif
}

// Spin backoff that degrades to yielding; this has to behave on a single core.
struct Backoff {
  int spins = 0;
  void pause() {
    if (++spins < 16)
      cpuRelax();
    else
      std::this_thread::yield();
  }
};

struct SpinLock {
  std::atomic<bool> flag{false};
  void lock() {
    Backoff bo;
    while (flag.exchange(true, std::memory_order_acquire)) bo.pause();
  }
  void unlock() { flag.store(false, std::memory_order_release); }
};

struct SpinGuard {
  SpinLock& l;
  explicit SpinGuard(SpinLock& lk) : l(lk) { l.lock(); }
  ~SpinGuard() { l.unlock(); }
  SpinGuard(const SpinGuard&) = delete;
};

// ---- errors ----------------------------------------------------------------

struct PoolError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : PoolError {
  using PoolError::PoolError;
};
struct PoolExhaustedError : PoolError {
  using PoolError::PoolError;
};
struct ConfigError : PoolError {
  using PoolError::PoolError;
};

// ---- hashing / rng ---------------------------------------------------------

// Murmur3 64-bit finalizer. Constants 0xff51afd7ed558ccd / 0xc4ceb9fe1a85ec53.
inline u64 mix64(u64 x) {
  x ^= x >> 33;
  x *= 0xff51afd7ed558ccdull;
  x ^= x >> 33;
  x *= 0xc4ceb9fe1a85ec53ull;
  x ^= x >> 33;
  return x;
}

// splitmix64: seed expander (Steele et al. constants).
inline u64 splitmix64(u64& state) {
  u64 z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// xorshift64* stream; state must be nonzero.
struct Rng64 {
  u64 x;
  explicit Rng64(u64 seed) {
    u64 s = seed;
    x = splitmix64(s);
    if (x == 0) x = 1;
  }
  u64 next() {
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    return x * 0x2545f4914f6cdd1dull;
  }
  // unbiased-enough bounded draw for workloads (documented: next() % n)
  u64 bounded(u64 n) { return n ? next() % n : 0; }
};

// ---- crc32 (ISO-HDLC, reflected polynomial 0xEDB88320) ----------------------

namespace detail {
struct Crc32Table {
  u32 t[256];
  constexpr Crc32Table() : t() {
    for (u32 i = 0; i < 256; i++) {
      u32 c = i;
      for (int k = 0; k < 8; k++) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
  }
};
inline constexpr Crc32Table kCrc32Table{};
}  // namespace detail

inline u32 crc32(const void* data, size_t len, u32 crc = 0) {
  const u8* p = static_cast<const u8*>(data);
  crc = ~crc;
  for (size_t i = 0; i < len; i++)
    crc = detail::kCrc32Table.t[(crc ^ p[i]) & 0xff] ^ (crc >> 8);
  return ~crc;
}

// ---- little-endian field helpers (page layouts are defined little-endian) ---

template <class T>
inline T loadLE(const void* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;  // build targets are little-endian; memcpy keeps it alias-safe
}
template <class T>
inline void storeLE(void* p, T v) {
  std::memcpy(p, &v, sizeof(T));
}

// ---- test scheduling hooks ---------------------------------------------------
// Named points on the fault/evict paths. Production passes no hooks; tests use
// them to coerce and enumerate cross-thread schedules.

enum class SchedPoint {
  FaultCounted,        // group counter incremented, entry CAS not yet attempted
  FaultLocked,         // entry latched exclusively for a fault
  FaultFrameReady,     // frame allocated/evicted, I/O not yet issued
  FaultAfterRead,      // page bytes read, not yet published
  FaultPublished,      // set_frame_and_unlock done
  EvictLocked,         // victim entry latched
  EvictWroteBack,      // dirty write-back completed
  EvictStaged,         // frame field staged invalid, entry still latched
  EvictCounterLocked,  // group counter locked+decremented
  EvictEntryZeroed,    // unlock_evicted stored the all-zero word
  EvictReleased,       // group backing released (count hit zero)
  EvictCounterUnlocked
};

struct TestHooks {
  std::function<void(SchedPoint)> at;
};

inline void hookPoint(const TestHooks* h, SchedPoint p) {
  if (h && h->at) h->at(p);
}

}  // namespace arraypool
