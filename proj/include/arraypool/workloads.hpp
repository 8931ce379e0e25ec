#pragma once
// Benchmark harness: five workloads over any translation backend, all
// deterministic from (config, seed). Desk-scale defaults are sized so every
// run finishes in seconds; comparisons are backend ratios, never absolute
// throughput, since the latter is hardware-bound.
//
//   seqscan      consecutive pids, sum one 8-byte column slot per row
//   randscan     same work over a seeded Fisher-Yates permutation
//   pointlookup  B+tree built from a permuted key set, uniform point reads
//   graphbfs     breadth-first traversals with per-neighbor page probes
//   ycsb-like    insert + read-latest sliding window; exercises translation
//                memory reclamation (peak vs final resident bytes)
//
// Reports carry throughput, sampled latency percentiles, a final pool-stat
// snapshot, and (for ycsb-like) a residency time series. JSON serialization
// lives in the CLI, not here.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "btree.hpp"
#include "buffer_pool.hpp"
#include "hash_translation.hpp"
#include "page_graph.hpp"
#include "translation.hpp"

namespace arraypool {

// ---- deterministic generators ------------------------------------------------------

// YCSB-style Zipfian item generator over [0, n): item 0 is the hottest.
class ZipfGenerator {
 public:
  ZipfGenerator(u64 n, double theta) : n_(n), theta_(theta) {
    if (n == 0) throw ConfigError("zipf over empty domain");
    for (u64 i = 1; i <= n; i++) zetan_ += 1.0 / std::pow(double(i), theta);
    zeta2_ = 1.0 + 1.0 / std::pow(2.0, theta);
    alpha_ = 1.0 / (1.0 - theta);
    eta_ = (1.0 - std::pow(2.0 / double(n), 1.0 - theta)) /
           (1.0 - zeta2_ / zetan_);
  }

  u64 next(Rng64& rng) const {
    double u = double(rng.next() >> 11) * 0x1p-53;  // uniform [0,1)
    double uz = u * zetan_;
    if (uz < 1.0) return 0;
    if (uz < zeta2_) return 1;
    u64 v = u64(double(n_) * std::pow(eta_ * u - eta_ + 1.0, alpha_));
    return v >= n_ ? n_ - 1 : v;
  }

  double theta() const { return theta_; }

 private:
  u64 n_;
  double theta_;
  double zetan_ = 0, zeta2_ = 0, alpha_ = 0, eta_ = 0;
};

inline std::vector<u64> seededPermutation(u64 n, u64 seed) {
  std::vector<u64> p(n);
  std::iota(p.begin(), p.end(), u64(0));
  Rng64 rng(seed ^ 0x5851f42d4c957f2dull);
  for (u64 i = n; i > 1; i--) std::swap(p[i - 1], p[rng.bounded(i)]);
  return p;
}

// ---- config / report ----------------------------------------------------------------

struct BenchConfig {
  std::string workload;                // seqscan|randscan|pointlookup|graphbfs|ycsb-like
  std::string translation = "array";   // array|chained|open
  u32 threads = 1;
  u64 frames = 0;                      // 0 = workload default
  u32 pageBytes = 4096;
  u64 scale = 0;                       // pages/keys/nodes; 0 = workload default
  bool prefetch = true;
  bool optimistic = true;
  bool hugeFrames = true;              // THP on the frame arena (perf hygiene)
  u64 seed = 1;
  std::string store = "auto";          // auto | synthetic:SEED | memory | file:PATH
  bool directIo = false;
  std::string provider = "os";         // os | instrumented
  u32 suffixWidth = 0;                 // 0 = workload default
  double zipfTheta = 0.99;
  std::string out;                     // report path ("" = stdout only)
  std::string residencyCsv;            // optional time-series dump

  void validate() const {
    static const char* kWorkloads[] = {"seqscan", "randscan", "pointlookup",
                                       "graphbfs", "ycsb-like"};
    bool ok = false;
    for (auto* w : kWorkloads) ok |= (workload == w);
    if (!ok) throw ConfigError("unknown workload: " + workload);
    if (translation != "array" && translation != "chained" &&
        translation != "open")
      throw ConfigError("unknown translation backend: " + translation);
    if (provider != "os" && provider != "instrumented")
      throw ConfigError("unknown memory provider: " + provider);
    if (threads == 0 || threads > 256) throw ConfigError("bad thread count");
    if (zipfTheta <= 0.0 || zipfTheta >= 1.0)
      throw ConfigError("zipf theta must be in (0,1)");
  }
};

struct ResidencySample {
  double seconds;
  u64 translationResidentBytes;
  u64 residentPages;
};

struct BenchReport {
  std::string workload, translation;
  u32 threads = 0;
  u64 scale = 0, frames = 0, seed = 0;
  bool prefetch = false, optimistic = false;
  u64 operations = 0;
  double wallSeconds = 0, opsPerSec = 0;
  double p50Us = 0, p90Us = 0, p99Us = 0;  // sampled (every 64th op)
  u64 resultChecksum = 0;  // workload-defined, for differential comparisons
  PoolStats stats;
  std::vector<ResidencySample> residency;  // ycsb-like only
  u64 peakTranslationResident = 0, finalTranslationResident = 0;
};

// ---- shared plumbing ----------------------------------------------------------------

namespace bench_detail {

using Clock = std::chrono::steady_clock;

inline double secondsSince(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Latency recorder: samples every 64th op to keep timer overhead out of the
// measured loop. Merged across threads before computing percentiles.
struct LatencySampler {
  static constexpr u64 kEvery = 64;
  u64 tick = 0;
  Clock::time_point pending;
  std::vector<double> samplesUs;

  bool opBegin() {
    if (++tick % kEvery) return false;
    pending = Clock::now();
    return true;
  }
  void opEnd() {
    samplesUs.push_back(
        std::chrono::duration<double, std::micro>(Clock::now() - pending)
            .count());
  }
};

inline void fillPercentiles(std::vector<double>& all, BenchReport& r) {
  if (all.empty()) return;
  auto pct = [&](double q) {
    size_t i = size_t(q * double(all.size() - 1));
    std::nth_element(all.begin(), all.begin() + i, all.end());
    return all[i];
  };
  r.p50Us = pct(0.50);
  r.p90Us = pct(0.90);
  r.p99Us = pct(0.99);
}

struct StoreSpec {
  enum class Kind { Auto, Synthetic, Memory, File } kind = Kind::Auto;
  std::string path;
  u64 seed = 0;
};

inline StoreSpec parseStoreSpec(const std::string& s) {
  StoreSpec spec;
  if (s == "auto" || s.empty()) return spec;
  if (s == "memory") {
    spec.kind = StoreSpec::Kind::Memory;
    return spec;
  }
  if (s.rfind("synthetic:", 0) == 0) {
    spec.kind = StoreSpec::Kind::Synthetic;
    spec.seed = std::stoull(s.substr(10));
    return spec;
  }
  if (s.rfind("file:", 0) == 0) {
    spec.kind = StoreSpec::Kind::File;
    spec.path = s.substr(5);
    if (spec.path.empty()) throw ConfigError("file store needs a path");
    return spec;
  }
  throw ConfigError("bad --store spec: " + s);
}

// Providers: "os" shares the process-wide singleton; "instrumented" gets a
// fresh instance per run so residency accounting starts from zero.
struct ProviderBox {
  std::unique_ptr<InstrumentedMemoryProvider> instrumented;
  MemoryProvider* active = nullptr;

  explicit ProviderBox(const std::string& name) {
    if (name == "instrumented") {
      instrumented = std::make_unique<InstrumentedMemoryProvider>();
      active = instrumented.get();
    } else {
      active = &OsMemoryProvider::instance();
    }
  }
};

template <class Backend>
std::unique_ptr<BufferPool<Backend>> makePool(PageStore& store,
                                              const PoolConfig& pc);

template <>
inline std::unique_ptr<BufferPool<ArrayTranslation>> makePool(
    PageStore& store, const PoolConfig& pc) {
  return std::make_unique<BufferPool<ArrayTranslation>>(
      store, pc, BufferPool<ArrayTranslation>::providerOf(pc), pc.pid);
}

template <>
inline std::unique_ptr<BufferPool<ChainedTranslation>> makePool(
    PageStore& store, const PoolConfig& pc) {
  return std::make_unique<BufferPool<ChainedTranslation>>(store, pc,
                                                          pc.frameCount);
}

template <>
inline std::unique_ptr<BufferPool<OpenTranslation>> makePool(
    PageStore& store, const PoolConfig& pc) {
  return std::make_unique<BufferPool<OpenTranslation>>(store, pc,
                                                       pc.frameCount);
}

inline PoolConfig poolConfigFor(const BenchConfig& cfg, u64 defaultFrames,
                                u32 defaultSuffix, MemoryProvider* provider) {
  PoolConfig pc;
  pc.pageBytes = cfg.pageBytes;
  pc.frameCount = cfg.frames ? cfg.frames : defaultFrames;
  pc.pid.suffixWidth = cfg.suffixWidth ? cfg.suffixWidth : defaultSuffix;
  pc.hugeFrames = cfg.hugeFrames;
  pc.prefetchEnabled = cfg.prefetch;
  pc.optimisticEnabled = cfg.optimistic;
  pc.provider = provider;
  return pc;
}

template <class Backend>
void fillCommon(BenchReport& r, const BenchConfig& cfg, u64 scale,
                BufferPool<Backend>& pool) {
  r.workload = cfg.workload;
  r.translation = Backend::name();
  r.threads = cfg.threads;
  r.scale = scale;
  r.frames = pool.frameCount();
  r.seed = cfg.seed;
  r.prefetch = cfg.prefetch;
  r.optimistic = cfg.optimistic;
  r.stats = pool.stats();
}

// Reads one page and sums the 8-byte column slot of each row; the scan
// workloads' unit of work. One page-sized row per page keeps the op
// translation-dominated, which is the point of the scan comparisons.
inline constexpr u32 kScanRowBytes = 4096;

template <class Backend>
u64 scanPage(BufferPool<Backend>& pool, PageId pid, u32 pageBytes,
             bool optimistic) {
  u64 sum = 0;
  const u32 rows = std::max<u32>(1, pageBytes / kScanRowBytes);
  if (optimistic) {
    pool.optimisticRead(pid, [&](std::span<const std::byte> page) {
      u64 s = 0;
      for (u32 r = 0; r < rows; r++)
        s += loadLE<u64>(page.data() + r * kScanRowBytes + 16);
      sum = s;  // overwrite: only the validated run survives
    });
  } else {
    auto page = pool.pinShared(pid);
    for (u32 r = 0; r < rows; r++)
      sum += loadLE<u64>(page.data() + r * kScanRowBytes + 16);
    pool.unpinShared(pid);
  }
  return sum;
}

}  // namespace bench_detail

// ---- workload runners ----------------------------------------------------------------

namespace bench_detail {

// Scans: each thread owns a contiguous pid shard and scans it `passes`
// times, sequentially or in seeded-permutation order. Checksum is the total
// of all row sums, which equals passes * (one-pass total) regardless of
// order, so seqscan and randscan agree by construction when configured alike.
template <class Backend>
BenchReport runScan(const BenchConfig& cfg, bool permuted) {
  const u64 pages = cfg.scale ? cfg.scale : 32768;
  const u64 passes = 10;
  ProviderBox prov(cfg.provider);
  StoreSpec spec = parseStoreSpec(cfg.store);
  std::unique_ptr<PageStore> store;
  if (spec.kind == StoreSpec::Kind::File) {
    FileStoreOptions o;
    o.directIo = cfg.directIo;
    store = std::make_unique<FilePageStore>(spec.path, cfg.pageBytes, o);
  } else if (spec.kind == StoreSpec::Kind::Memory) {
    store = std::make_unique<MemoryPageStore>(cfg.pageBytes);
  } else {
    u64 seed = spec.kind == StoreSpec::Kind::Synthetic ? spec.seed : cfg.seed;
    store = std::make_unique<SyntheticPageStore>(seed, cfg.pageBytes);
  }
  PoolConfig pc = poolConfigFor(cfg, pages + 64, 24, prov.active);
  auto pool = makePool<Backend>(*store, pc);

  std::vector<u64> order;
  if (permuted) order = seededPermutation(pages, cfg.seed);

  // warmup: fault everything once (translation-overhead isolation)
  for (PageId pid = 0; pid < pages; pid++)
    scanPage(*pool, pid, cfg.pageBytes, false);

  std::atomic<u64> checksum{0};
  std::vector<std::vector<double>> lat(cfg.threads);
  auto t0 = Clock::now();
  std::vector<std::thread> workers;
  for (u32 t = 0; t < cfg.threads; t++) {
    workers.emplace_back([&, t] {
      u64 lo = pages * t / cfg.threads;
      u64 hi = pages * (t + 1) / cfg.threads;
      LatencySampler ls;
      u64 local = 0;
      for (u64 p = 0; p < passes; p++) {
        for (u64 i = lo; i < hi; i++) {
          PageId pid = permuted ? order[i] : i;
          bool timed = ls.opBegin();
          local += scanPage(*pool, pid, cfg.pageBytes, cfg.optimistic);
          if (timed) ls.opEnd();
        }
      }
      checksum.fetch_add(local);
      lat[t] = std::move(ls.samplesUs);
    });
  }
  for (auto& w : workers) w.join();
  double wall = secondsSince(t0);

  BenchReport r;
  fillCommon(r, cfg, pages, *pool);
  r.operations = pages * passes;
  r.wallSeconds = wall;
  r.opsPerSec = double(r.operations) / wall;
  r.resultChecksum = checksum.load();
  std::vector<double> all;
  for (auto& v : lat) all.insert(all.end(), v.begin(), v.end());
  fillPercentiles(all, r);
  return r;
}

template <class Backend>
BenchReport runPointLookup(const BenchConfig& cfg) {
  const u64 keys = cfg.scale ? cfg.scale : 1'000'000;
  ProviderBox prov(cfg.provider);
  StoreSpec spec = parseStoreSpec(cfg.store);
  std::unique_ptr<PageStore> store;
  if (spec.kind == StoreSpec::Kind::File) {
    FileStoreOptions o;
    o.directIo = cfg.directIo;
    store = std::make_unique<FilePageStore>(spec.path, cfg.pageBytes, o);
  } else {
    store = std::make_unique<MemoryPageStore>(cfg.pageBytes);  // tree pages must persist
  }
  // tree pages ~ keys/(capLeaf/2) plus internals; default keeps it resident
  const u64 treePagesUpper = keys / 100 + 256;
  PoolConfig pc = poolConfigFor(cfg, treePagesUpper + 64, 24, prov.active);
  auto pool = makePool<Backend>(*store, pc);
  BTree<Backend> tree(*pool, 0, true);

  auto perm = seededPermutation(keys, cfg.seed);
  for (u64 i = 0; i < keys; i++) {
    u64 k = perm[i] + 1;  // keys are 1-based so value 0 means "missing"
    tree.insert(k, k * 0x9e3779b97f4a7c15ull);
  }

  const u64 lookups = cfg.scale ? cfg.scale : 1'000'000;
  std::atomic<u64> checksum{0};
  std::atomic<u64> misses{0};
  std::vector<std::vector<double>> lat(cfg.threads);
  auto t0 = Clock::now();
  std::vector<std::thread> workers;
  for (u32 t = 0; t < cfg.threads; t++) {
    workers.emplace_back([&, t] {
      Rng64 rng(cfg.seed ^ (0x100 + t));
      LatencySampler ls;
      u64 local = 0, miss = 0;
      u64 n = lookups / cfg.threads + (t < lookups % cfg.threads ? 1 : 0);
      for (u64 i = 0; i < n; i++) {
        u64 k = rng.bounded(keys) + 1;
        bool timed = ls.opBegin();
        auto v = tree.lookup(k);
        if (timed) ls.opEnd();
        if (v)
          local += *v;
        else
          miss++;
      }
      checksum.fetch_add(local);
      misses.fetch_add(miss);
      lat[t] = std::move(ls.samplesUs);
    });
  }
  for (auto& w : workers) w.join();
  double wall = secondsSince(t0);

  if (misses.load() != 0)
    throw PoolError("pointlookup: lookups missed inserted keys");
  BenchReport r;
  fillCommon(r, cfg, keys, *pool);
  r.operations = lookups;
  r.wallSeconds = wall;
  r.opsPerSec = double(lookups) / wall;
  r.resultChecksum = checksum.load();
  std::vector<double> all;
  for (auto& v : lat) all.insert(all.end(), v.begin(), v.end());
  fillPercentiles(all, r);
  return r;
}

template <class Backend>
BenchReport runGraphBfs(const BenchConfig& cfg) {
  const u32 nodes = u32(cfg.scale ? cfg.scale : 100'000);
  const u32 degree = 44;
  ProviderBox prov(cfg.provider);
  StoreSpec spec = parseStoreSpec(cfg.store);
  std::unique_ptr<PageStore> store;
  bool prebuildFile = false;
  if (spec.kind == StoreSpec::Kind::File) {
    FileStoreOptions o;
    o.directIo = cfg.directIo;
    store = std::make_unique<FilePageStore>(spec.path, cfg.pageBytes, o);
    prebuildFile = true;
  } else if (spec.kind == StoreSpec::Kind::Memory) {
    store = std::make_unique<MemoryPageStore>(cfg.pageBytes);
  } else {
    store = std::make_unique<GraphPageStore>(cfg.pageBytes, 0, nodes, degree,
                                             cfg.seed);
  }
  PoolConfig pc = poolConfigFor(cfg, u64(nodes) + 64, 24, prov.active);
  auto pool = makePool<Backend>(*store, pc);
  PageGraph<Backend> graph(*pool, 0, nodes, degree, cfg.seed);

  if (prebuildFile) {
    // write node pages straight to the store (bytes identical to the
    // generator), skipping pids the directory already knows
    FilePageStore* fs = static_cast<FilePageStore*>(store.get());
    if (fs->knownPages() < nodes) {
      std::vector<std::byte> buf(cfg.pageBytes);
      for (u32 n = 0; n < nodes; n++) {
        graphFillPage(GraphTopology::Random, n, nodes, degree, cfg.seed,
                      buf.data(), cfg.pageBytes);
        fs->writePage(n, buf.data());
      }
      fs->flush();
    }
  } else if (spec.kind == StoreSpec::Kind::Memory) {
    graph.build();
  }

  // warm only when the pool can actually hold the graph; cold-I/O configs
  // (pool a fraction of the graph) measure the faulting path on purpose
  if (pool->frameCount() >= nodes + 2) graph.bfs(0, false);

  std::atomic<u64> visitedTotal{0};
  auto t0 = Clock::now();
  std::vector<std::thread> workers;
  for (u32 t = 0; t < cfg.threads; t++) {
    workers.emplace_back([&, t] {
      u32 start = u32((u64(nodes) * t) / cfg.threads);
      visitedTotal.fetch_add(graph.bfs(start, cfg.prefetch));
    });
  }
  for (auto& w : workers) w.join();
  double wall = secondsSince(t0);

  BenchReport r;
  fillCommon(r, cfg, nodes, *pool);
  r.operations = u64(cfg.threads) * nodes * (degree + 1);  // visits + probes
  r.wallSeconds = wall;
  r.opsPerSec = double(r.operations) / wall;
  r.resultChecksum = visitedTotal.load();
  return r;
}

// Insert + read-latest over a sliding window. The uniform scatter phase
// spreads residency across every group (the residency peak); the read-latest
// phase only touches the newest window while inserts advance it, so stale
// groups drain through eviction and get punched. Peak and final residency
// are exact under the instrumented provider.
template <class Backend>
BenchReport runYcsbLike(const BenchConfig& cfg) {
  const u64 n0 = cfg.scale ? cfg.scale : 65536;
  const u64 window = std::max<u64>(1024, n0 / 16);
  const u64 mixedOps = 8 * n0;
  ProviderBox prov(cfg.provider);
  SyntheticPageStore store(cfg.seed, cfg.pageBytes);  // content is irrelevant
  PoolConfig pc = poolConfigFor(cfg, std::max<u64>(1024, n0 / 16), 20,
                                prov.active);
  auto pool = makePool<Backend>(store, pc);

  BenchReport r;
  std::vector<ResidencySample> series;
  auto t0 = Clock::now();
  u64 peak = 0;
  auto sample = [&] {
    u64 res = pool->backend().residentBytes();
    peak = std::max(peak, res);
    series.push_back({secondsSince(t0), res, pool->stats().residentPages});
  };

  auto writePage = [&](PageId pid) {
    auto page = pool->pinExclusive(pid);
    storeLE<u64>(page.data() + 16, pid);
    pool->unpinExclusive(pid, true);
  };

  // load: populate the initial key space
  for (PageId pid = 0; pid < n0; pid++) {
    writePage(pid);
    if ((pid & 1023) == 0) sample();
  }
  // scatter: uniform reads spread residency over all groups -> peak
  {
    Rng64 rng(cfg.seed ^ 0xabcdef);
    for (u64 i = 0; i < n0; i++) {
      scanPage(*pool, rng.bounded(n0), cfg.pageBytes, cfg.optimistic);
      if ((i & 1023) == 0) sample();
    }
  }
  // mixed: 95% zipf read-latest over the window, 5% inserts advance the head
  {
    ZipfGenerator zipf(window, cfg.zipfTheta);
    std::atomic<u64> head{n0};
    std::vector<std::thread> workers;
    std::atomic<u64> sampleGate{0};
    for (u32 t = 0; t < cfg.threads; t++) {
      workers.emplace_back([&, t] {
        Rng64 rng(cfg.seed ^ (0x200 + t));
        u64 n = mixedOps / cfg.threads;
        for (u64 i = 0; i < n; i++) {
          if (rng.bounded(100) < 5) {
            writePage(head.fetch_add(1));
          } else {
            u64 h = head.load(std::memory_order_relaxed);
            u64 off = zipf.next(rng);
            PageId pid = h > off + 1 ? h - 1 - off : 0;
            scanPage(*pool, pid, cfg.pageBytes, cfg.optimistic);
          }
          if (t == 0 && (sampleGate.fetch_add(1) & 1023) == 0) sample();
        }
      });
    }
    for (auto& w : workers) w.join();
    r.operations = n0 * 2 + mixedOps;
  }
  sample();
  double wall = secondsSince(t0);

  fillCommon(r, cfg, n0, *pool);
  r.wallSeconds = wall;
  r.opsPerSec = double(r.operations) / wall;
  r.residency = std::move(series);
  r.peakTranslationResident = peak;
  r.finalTranslationResident = pool->backend().residentBytes();
  r.resultChecksum = r.stats.faults;
  return r;
}

template <class Backend>
BenchReport runForBackend(const BenchConfig& cfg) {
  if (cfg.workload == "seqscan") return runScan<Backend>(cfg, false);
  if (cfg.workload == "randscan") return runScan<Backend>(cfg, true);
  if (cfg.workload == "pointlookup") return runPointLookup<Backend>(cfg);
  if (cfg.workload == "graphbfs") return runGraphBfs<Backend>(cfg);
  return runYcsbLike<Backend>(cfg);
}

}  // namespace bench_detail

inline BenchReport runBench(const BenchConfig& cfg) {
  cfg.validate();
  if (cfg.translation == "chained")
    return bench_detail::runForBackend<ChainedTranslation>(cfg);
  if (cfg.translation == "open")
    return bench_detail::runForBackend<OpenTranslation>(cfg);
  return bench_detail::runForBackend<ArrayTranslation>(cfg);
}

}  // namespace arraypool
