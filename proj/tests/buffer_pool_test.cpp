// The pool's pin/fault/evict/flush machinery over the array backend: I/O
// counting, write-back integrity, error rollback, group-counter conservation,
// exhaustion, and the scheduling-hook trace of a fault.
#include <catch2/catch_amalgamated.hpp>

#include <thread>
#include <vector>

#include "arraypool/buffer_pool.hpp"
#include "arraypool/page_store.hpp"
#include "arraypool/translation.hpp"

using namespace arraypool;

namespace {

PoolConfig smallConfig(InstrumentedMemoryProvider& prov, u64 frames,
                       u32 suffixWidth = 16) {
  PoolConfig cfg;
  cfg.pageBytes = 4096;
  cfg.frameCount = frames;
  cfg.pid = PidLayout{suffixWidth, 4096};
  cfg.provider = &prov;
  return cfg;
}

using ArrayPool = BufferPool<ArrayTranslation>;

// Store wrapper that fails on command, for rollback tests.
class FlakyStore final : public PageStore {
 public:
  explicit FlakyStore(PageStore& inner) : inner_(inner) {}
  bool failReads = false;
  bool failWrites = false;

  u32 pageBytes() const override { return inner_.pageBytes(); }
  void readPage(PageId pid, std::byte* dst) override {
    if (failReads) throw IoError("injected read failure");
    inner_.readPage(pid, dst);
  }
  void writePage(PageId pid, const std::byte* src) override {
    if (failWrites) throw IoError("injected write failure");
    inner_.writePage(pid, src);
  }
  void readPages(const PageId* pids, std::byte* const* dsts,
                 size_t n) override {
    if (failReads) throw IoError("injected batch failure");
    inner_.readPages(pids, dsts, n);
  }
  void flush() override { inner_.flush(); }

 private:
  PageStore& inner_;
};

}  // namespace

TEST_CASE("cold pin faults once, warm pins are free") {
  InstrumentedMemoryProvider prov;
  SyntheticPageStore store(42, 4096);
  ArrayPool pool(store, smallConfig(prov, 16), prov, PidLayout{16, 4096});

  auto page = pool.pinShared(7);
  CHECK(synthVerifyPage(page.data(), 4096, 7));
  pool.unpinShared(7);

  auto s1 = pool.stats();
  CHECK(s1.faults == 1);
  CHECK(s1.ioReads == 1);
  CHECK(s1.residentPages == 1);

  for (int i = 0; i < 10; i++) {
    pool.pinShared(7);
    pool.unpinShared(7);
    pool.optimisticRead(7, [](std::span<const std::byte>) {});
  }
  auto s2 = pool.stats();
  CHECK(s2.faults == 1);  // still the one cold fault
  CHECK(s2.ioReads == 1);
  CHECK(store.reads() == 1);
}

TEST_CASE("dirty pages survive eviction and flush") {
  InstrumentedMemoryProvider prov;
  MemoryPageStore store(4096);
  ArrayPool pool(store, smallConfig(prov, 8), prov, PidLayout{16, 4096});

  // write a recognizable word into 32 pages through 8 frames
  for (PageId pid = 0; pid < 32; pid++) {
    auto page = pool.pinExclusive(pid);
    storeLE<u64>(page.data() + 128, 0xbeef0000 + pid);
    pool.unpinExclusive(pid, true);
  }
  auto s = pool.stats();
  CHECK(s.evictions >= 24);
  CHECK(s.ioWrites >= 24);  // every evicted page was dirty

  // all 32 round trip (some from frames, most refaulted from the store)
  for (PageId pid = 0; pid < 32; pid++) {
    auto page = pool.pinShared(pid);
    CHECK(loadLE<u64>(page.data() + 128) == 0xbeef0000 + pid);
    pool.unpinShared(pid);
  }

  // flushAll pushes the stragglers; then the store holds all 32
  pool.flushAll();
  CHECK(store.knownPages() == 32);
  for (PageId pid = 0; pid < 32; pid++) {
    auto copy = store.pageCopy(pid);
    CHECK(loadLE<u64>(copy.data() + 128) == 0xbeef0000 + pid);
  }

  // flushAll is idempotent: nothing left dirty
  u64 writes = store.writes();
  pool.flushAll();
  CHECK(store.writes() == writes);
}

TEST_CASE("unpin without a pin is an error") {
  InstrumentedMemoryProvider prov;
  SyntheticPageStore store(1, 4096);
  ArrayPool pool(store, smallConfig(prov, 4), prov, PidLayout{16, 4096});
  pool.pinShared(3);
  CHECK_THROWS_AS(pool.unpinExclusive(3, false), PoolError);  // wrong mode
  pool.unpinShared(3);
  CHECK_THROWS_AS(pool.unpinExclusive(5, false), PoolError);  // never pinned
}

TEST_CASE("pids beyond the usable range are rejected") {
  InstrumentedMemoryProvider prov;
  SyntheticPageStore store(1, 4096);
  ArrayPool pool(store, smallConfig(prov, 4, 32), prov, PidLayout{32, 4096});
  CHECK_THROWS_AS(pool.pinShared(~PageId(0)), ConfigError);
  CHECK_THROWS_AS(pool.pinExclusive(kMaxUsablePid + 1), ConfigError);
  CHECK_NOTHROW(pool.pinShared(kMaxUsablePid));
  pool.unpinShared(kMaxUsablePid);
}

TEST_CASE("store and pool must agree on page size") {
  InstrumentedMemoryProvider prov;
  SyntheticPageStore store(1, 8192);
  CHECK_THROWS_AS(
      ArrayPool(store, smallConfig(prov, 4), prov, PidLayout{16, 4096}),
      ConfigError);
}

TEST_CASE("writer version bumps invalidate optimistic reads") {
  InstrumentedMemoryProvider prov;
  SyntheticPageStore store(9, 4096);
  ArrayPool pool(store, smallConfig(prov, 4), prov, PidLayout{16, 4096});
  pool.pinShared(1);
  pool.unpinShared(1);

  auto* te = ArrayTranslation::entryOf(pool.backend().find(1));
  u32 v0 = TranslationEntry::versionOf(te->load());

  auto page = pool.pinExclusive(1);
  storeLE<u64>(page.data(), 1);  // keep the pid field intact
  pool.unpinExclusive(1, true);
  u32 v1 = TranslationEntry::versionOf(te->load());
  CHECK(v1 == TranslationEntry::bumpVersion(v0));

  // a clean shared cycle must NOT move the version
  pool.pinShared(1);
  pool.unpinShared(1);
  CHECK(TranslationEntry::versionOf(te->load()) == v1);
}

TEST_CASE("optimistic read falls back under a held exclusive latch") {
  InstrumentedMemoryProvider prov;
  SyntheticPageStore store(3, 4096);
  ArrayPool pool(store, smallConfig(prov, 4), prov, PidLayout{16, 4096});
  pool.pinExclusive(2);

  std::atomic<bool> started{false};
  u64 seen = ~u64(0);
  std::thread reader([&] {
    started.store(true);
    // retries burn out against the latch, the shared fallback then blocks
    // until the writer unpins
    pool.optimisticRead(2, [&](std::span<const std::byte> p) {
      seen = loadLE<u64>(p.data());
    });
  });
  while (!started.load()) cpuRelax();
  std::this_thread::sleep_for(std::chrono::milliseconds(20));
  pool.unpinExclusive(2, false);
  reader.join();

  CHECK(seen == 2);  // synthetic page: first word is the pid
  auto s = pool.stats();
  CHECK(s.optimisticRetries >= 1);
  CHECK(s.optimisticFallbacks == 1);
}

TEST_CASE("disabling optimistic reads routes through shared pins") {
  InstrumentedMemoryProvider prov;
  SyntheticPageStore store(3, 4096);
  PoolConfig cfg = smallConfig(prov, 4);
  cfg.optimisticEnabled = false;
  ArrayPool pool(store, cfg, prov, PidLayout{16, 4096});
  u64 seen = 0;
  pool.optimisticRead(5, [&](std::span<const std::byte> p) {
    seen = loadLE<u64>(p.data());
  });
  CHECK(seen == 5);
  auto s = pool.stats();
  CHECK(s.optimisticRetries == 0);
  CHECK(s.optimisticFallbacks == 0);
}

TEST_CASE("group counters equal resident pages at rest") {
  InstrumentedMemoryProvider prov;
  MemoryPageStore store(4096);
  ArrayPool pool(store, smallConfig(prov, 8), prov, PidLayout{16, 4096});
  for (PageId pid = 0; pid < 40; pid++) {
    auto page = pool.pinExclusive(pid * 7);  // scatter across groups
    storeLE<u64>(page.data(), pid);
    pool.unpinExclusive(pid * 7, (pid & 1) != 0);
  }
  auto s = pool.stats();
  CHECK(pool.backend().liveCounterSum() == s.residentPages);
  CHECK(s.residentPages == 8);
  CHECK(s.faults == 40);
  CHECK(s.evictions == 32);
}

TEST_CASE("evicting a group's last page returns its backing") {
  InstrumentedMemoryProvider prov;
  SyntheticPageStore store(5, 4096);
  ArrayPool pool(store, smallConfig(prov, 1), prov, PidLayout{16, 4096});

  pool.pinShared(0);  // group 0
  pool.unpinShared(0);
  size_t resBefore = pool.stats().translationResidentBytes;
  CHECK(pool.stats().holePunches == 0);

  pool.pinShared(512);  // group 1: evicts pid 0, draining group 0
  pool.unpinShared(512);
  auto s = pool.stats();
  CHECK(s.holePunches == 1);
  CHECK(s.evictions == 1);
  CHECK(s.translationResidentBytes <= resBefore);
  CHECK(prov.pagesReleased() >= 1);

  // the punched page is demand-zero again; pid 0 refaults cleanly
  auto page = pool.pinShared(0);
  CHECK(synthVerifyPage(page.data(), 4096, 0));
  pool.unpinShared(0);
  CHECK(pool.stats().holePunches == 2);  // group 1 drained in turn
}

TEST_CASE("exhaustion surfaces instead of spinning") {
  InstrumentedMemoryProvider prov;
  SyntheticPageStore store(8, 4096);
  ArrayPool pool(store, smallConfig(prov, 2), prov, PidLayout{16, 4096});
  pool.pinExclusive(10);
  pool.pinExclusive(11);
  CHECK_THROWS_AS(pool.pinShared(12), PoolExhaustedError);

  // the failed fault rolled back: counters balanced, pool still usable
  CHECK(pool.backend().liveCounterSum() == 2);
  pool.unpinExclusive(10, false);
  auto page = pool.pinShared(12);
  CHECK(synthVerifyPage(page.data(), 4096, 12));
  pool.unpinShared(12);
  pool.unpinExclusive(11, false);
}

TEST_CASE("read failures roll the fault back") {
  InstrumentedMemoryProvider prov;
  SyntheticPageStore inner(2, 4096);
  FlakyStore store(inner);
  ArrayPool pool(store, smallConfig(prov, 4), prov, PidLayout{16, 4096});

  store.failReads = true;
  CHECK_THROWS_AS(pool.pinShared(1), IoError);
  CHECK(pool.backend().liveCounterSum() == 0);
  CHECK(pool.stats().residentPages == 0);

  store.failReads = false;  // the store heals; the same pid now loads
  auto page = pool.pinShared(1);
  CHECK(synthVerifyPage(page.data(), 4096, 1));
  pool.unpinShared(1);
  CHECK(pool.stats().faults == 1);
}

TEST_CASE("write-back failures keep the victim resident and dirty") {
  InstrumentedMemoryProvider prov;
  MemoryPageStore inner(4096);
  FlakyStore store(inner);
  ArrayPool pool(store, smallConfig(prov, 1), prov, PidLayout{16, 4096});

  auto page = pool.pinExclusive(3);
  storeLE<u64>(page.data(), 0xabcdef);
  pool.unpinExclusive(3, true);

  store.failWrites = true;
  CHECK_THROWS_AS(pool.pinShared(4), IoError);  // evicting 3 needs a write

  store.failWrites = false;
  auto p4 = pool.pinShared(4);  // now the eviction goes through
  pool.unpinShared(4);
  CHECK(loadLE<u64>(inner.pageCopy(3).data()) == 0xabcdef);  // nothing lost
  auto p3 = pool.pinShared(3);
  CHECK(loadLE<u64>(p3.data()) == 0xabcdef);
  pool.unpinShared(3);
}

TEST_CASE("group prefetch batches the missing pages") {
  InstrumentedMemoryProvider prov;
  SyntheticPageStore store(11, 4096);
  ArrayPool pool(store, smallConfig(prov, 16), prov, PidLayout{16, 4096});

  pool.pinShared(100);  // one of the group is already resident
  pool.unpinShared(100);

  std::vector<PageId> pids = {100, 101, 102, 103, 104};
  std::vector<u32> offsets = {0};
  pool.prefetchGroup(pids, offsets);

  auto s = pool.stats();
  CHECK(s.ioReadBatches == 1);
  CHECK(s.faults == 5);
  CHECK(s.ioReads == 5);  // 1 cold pin + 4 batched
  CHECK(s.residentPages == 5);

  // everything the batch loaded is immediately pinnable with no new I/O
  for (PageId pid : pids) {
    auto page = pool.pinShared(pid);
    CHECK(synthVerifyPage(page.data(), 4096, pid));
    pool.unpinShared(pid);
  }
  CHECK(pool.stats().ioReads == 5);

  CHECK_THROWS_AS(
      pool.prefetchGroup(pids, std::vector<u32>{1, 2}),  // 2 != 1 and != 5
      ConfigError);
}

TEST_CASE("prefetch batch failures surface on the next pin") {
  InstrumentedMemoryProvider prov;
  SyntheticPageStore inner(11, 4096);
  FlakyStore store(inner);
  ArrayPool pool(store, smallConfig(prov, 16), prov, PidLayout{16, 4096});

  store.failReads = true;
  std::vector<PageId> pids = {1, 2, 3};
  std::vector<u32> offsets = {0};
  pool.prefetchGroup(pids, offsets);  // swallowed: prefetch is advisory
  CHECK(pool.stats().residentPages == 0);
  CHECK(pool.backend().liveCounterSum() == 0);

  store.failReads = false;
  auto page = pool.pinShared(2);
  CHECK(synthVerifyPage(page.data(), 4096, 2));
  pool.unpinShared(2);
}

TEST_CASE("disabled prefetch is a no-op") {
  InstrumentedMemoryProvider prov;
  SyntheticPageStore store(11, 4096);
  PoolConfig cfg = smallConfig(prov, 16);
  cfg.prefetchEnabled = false;
  ArrayPool pool(store, cfg, prov, PidLayout{16, 4096});
  std::vector<PageId> pids = {1, 2, 3};
  std::vector<u32> offsets = {0};
  pool.prefetchGroup(pids, offsets);
  CHECK(pool.stats().ioReads == 0);
}

TEST_CASE("a cold fault walks the expected schedule points") {
  InstrumentedMemoryProvider prov;
  SyntheticPageStore store(6, 4096);
  std::vector<SchedPoint> trace;
  TestHooks hooks{[&](SchedPoint p) { trace.push_back(p); }};
  PoolConfig cfg = smallConfig(prov, 4);
  cfg.hooks = &hooks;
  ArrayPool pool(store, cfg, prov, PidLayout{16, 4096}, &hooks);

  pool.pinShared(1);
  pool.unpinShared(1);
  CHECK(trace == std::vector<SchedPoint>{
                     SchedPoint::FaultCounted, SchedPoint::FaultLocked,
                     SchedPoint::FaultFrameReady, SchedPoint::FaultAfterRead,
                     SchedPoint::FaultPublished});

  // an eviction at capacity: victim teardown runs inside the faulting pin
  trace.clear();
  pool.pinShared(2);
  pool.unpinShared(2);
  pool.pinShared(3);
  pool.unpinShared(3);
  pool.pinShared(4);
  pool.unpinShared(4);
  trace.clear();
  pool.pinShared(5);  // pool is full: this fault must evict
  pool.unpinShared(5);
  CHECK(trace == std::vector<SchedPoint>{
                     SchedPoint::FaultCounted, SchedPoint::FaultLocked,
                     SchedPoint::EvictLocked, SchedPoint::EvictStaged,
                     SchedPoint::EvictCounterLocked,
                     SchedPoint::EvictEntryZeroed,
                     SchedPoint::EvictCounterUnlocked,
                     SchedPoint::FaultFrameReady, SchedPoint::FaultAfterRead,
                     SchedPoint::FaultPublished});
}

// Multi-threaded shakedown: shared pins, writers, and optimistic readers over
// a pool several times smaller than the page domain.
TEST_CASE("pool survives concurrent mixed traffic") {
  InstrumentedMemoryProvider prov;
  MemoryPageStore store(4096);
  ArrayPool pool(store, smallConfig(prov, 64), prov, PidLayout{16, 4096});
  constexpr int kThreads = 4;
  constexpr PageId kDomain = 512;
  std::atomic<u64> failures{0};

  std::vector<std::thread> ts;
  for (int t = 0; t < kThreads; t++)
    ts.emplace_back([&, t] {
      Rng64 rng(1000 + t);
      for (int i = 0; i < 4000; i++) {
        PageId pid = rng.bounded(kDomain);
        switch (rng.bounded(4)) {
          case 0: {
            auto page = pool.pinExclusive(pid);
            storeLE<u64>(page.data(), pid);  // self-identifying content
            pool.unpinExclusive(pid, true);
            break;
          }
          case 1: {
            auto page = pool.pinShared(pid);
            u64 v = loadLE<u64>(page.data());
            if (v != 0 && v != pid) failures++;
            pool.unpinShared(pid);
            break;
          }
          default: {
            u64 v = 0;
            pool.optimisticRead(pid, [&](std::span<const std::byte> p) {
              v = loadLE<u64>(p.data());
            });
            if (v != 0 && v != pid) failures++;  // validated reads only
            break;
          }
        }
      }
    });
  for (auto& t : ts) t.join();

  CHECK(failures.load() == 0);
  auto s = pool.stats();
  CHECK(pool.backend().liveCounterSum() == s.residentPages);
  CHECK(s.residentPages <= 64);
  pool.flushAll();
  for (PageId pid = 0; pid < kDomain; pid++) {
    auto copy = store.pageCopy(pid);
    u64 v = loadLE<u64>(copy.data());
    if (v != 0 && v != pid) failures++;
  }
  CHECK(failures.load() == 0);
}
