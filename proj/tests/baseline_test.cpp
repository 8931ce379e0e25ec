// Differential harness: the same single-threaded op tape replayed over the
// array backend and both hash baselines must leave identical page images,
// identical shadow-visible reads, and identical I/O counts. This is the
// strongest cheap evidence that the three translation structures implement
// one protocol.
#include <catch2/catch_amalgamated.hpp>

#include <map>

#include "arraypool/buffer_pool.hpp"
#include "arraypool/hash_translation.hpp"
#include "arraypool/page_store.hpp"
#include "arraypool/translation.hpp"

using namespace arraypool;

namespace {

struct TapeResult {
  std::vector<u64> reads;  // every value returned to the "application"
  u64 faults, evictions, ioReads, ioWrites, residentPages, counterSum;
};

// One deterministic op tape: mixed writes, shared reads, optimistic reads,
// and group prefetches over a domain much larger than the pool.
template <class Pool>
TapeResult runTape(Pool& pool, MemoryPageStore& store) {
  constexpr PageId kDomain = 300;
  TapeResult r{};
  Rng64 rng(2024);
  std::map<PageId, u64> shadow;

  for (int op = 0; op < 5000; op++) {
    PageId pid = rng.bounded(kDomain);
    switch (rng.bounded(5)) {
      case 0:
      case 1: {  // write
        auto page = pool.pinExclusive(pid);
        u64 v = rng.next();
        storeLE<u64>(page.data() + 40, v);
        pool.unpinExclusive(pid, true);
        shadow[pid] = v;
        break;
      }
      case 2: {  // shared read, checked against the shadow
        auto page = pool.pinShared(pid);
        u64 v = loadLE<u64>(page.data() + 40);
        pool.unpinShared(pid);
        REQUIRE(v == (shadow.count(pid) ? shadow[pid] : 0));
        r.reads.push_back(v);
        break;
      }
      case 3: {  // optimistic read
        u64 v = 0;
        pool.optimisticRead(pid, [&](std::span<const std::byte> p) {
          v = loadLE<u64>(p.data() + 40);
        });
        REQUIRE(v == (shadow.count(pid) ? shadow[pid] : 0));
        r.reads.push_back(v);
        break;
      }
      default: {  // group prefetch of a small pid run
        std::vector<PageId> pids;
        for (u64 i = 0; i < 6; i++) pids.push_back((pid + i) % kDomain);
        std::vector<u32> offsets = {40};
        pool.prefetchGroup(pids, offsets);
        break;
      }
    }
  }

  pool.flushAll();
  for (PageId pid = 0; pid < kDomain; pid++) {
    auto copy = store.pageCopy(pid);
    REQUIRE(loadLE<u64>(copy.data() + 40) ==
            (shadow.count(pid) ? shadow[pid] : 0));
  }

  auto s = pool.stats();
  r.faults = s.faults;
  r.evictions = s.evictions;
  r.ioReads = s.ioReads;
  r.ioWrites = s.ioWrites;
  r.residentPages = s.residentPages;
  r.counterSum = pool.backend().liveCounterSum();
  return r;
}

template <class Backend, class... Args>
std::pair<TapeResult, std::vector<std::vector<std::byte>>> runBackend(
    Args&&... backendArgs) {
  InstrumentedMemoryProvider prov;
  MemoryPageStore store(4096);
  PoolConfig cfg;
  cfg.pageBytes = 4096;
  cfg.frameCount = 48;
  cfg.pid = PidLayout{16, 4096};
  cfg.provider = &prov;
  BufferPool<Backend> pool(store, cfg, std::forward<Args>(backendArgs)...);
  TapeResult r = runTape(pool, store);
  std::vector<std::vector<std::byte>> pages;
  for (PageId pid = 0; pid < 300; pid++) pages.push_back(store.pageCopy(pid));
  return {r, pages};
}

}  // namespace

TEST_CASE("three backends replay one tape identically") {
  InstrumentedMemoryProvider arrProv;
  auto [arr, arrPages] =
      runBackend<ArrayTranslation>(arrProv, PidLayout{16, 4096});
  auto [chained, chainedPages] = runBackend<ChainedTranslation>(u64(48));
  auto [open, openPages] = runBackend<OpenTranslation>(u64(48));

  // application-visible reads: identical value streams
  CHECK(arr.reads == chained.reads);
  CHECK(arr.reads == open.reads);

  // final durable page images: byte-identical
  CHECK(arrPages == chainedPages);
  CHECK(arrPages == openPages);

  // deterministic single-threaded execution: identical I/O and replacement
  CHECK(arr.faults == chained.faults);
  CHECK(arr.faults == open.faults);
  CHECK(arr.evictions == chained.evictions);
  CHECK(arr.evictions == open.evictions);
  CHECK(arr.ioReads == chained.ioReads);
  CHECK(arr.ioWrites == chained.ioWrites);
  CHECK(arr.ioWrites == open.ioWrites);

  // conservation on every backend: counters == resident pages at rest
  CHECK(arr.counterSum == arr.residentPages);
  CHECK(chained.counterSum == chained.residentPages);
  CHECK(open.counterSum == open.residentPages);

  CHECK(arr.faults > 300);     // the tape must actually thrash
  CHECK(arr.evictions > 250);  // 48 frames over a 300-page domain
}
