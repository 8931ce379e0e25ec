// On-page graph: the pure edge generator (frozen reference adjacency),
// the generator-backed page store, and BFS correctness against a plain
// in-memory traversal, with and without prefetch, in and out of memory.
#include <catch2/catch_amalgamated.hpp>

#include <deque>

#include "arraypool/page_graph.hpp"
#include "arraypool/translation.hpp"

using namespace arraypool;

namespace {

struct GraphRig {
  InstrumentedMemoryProvider prov;
  GraphPageStore store;
  PoolConfig cfg;
  std::unique_ptr<BufferPool<ArrayTranslation>> pool;

  GraphRig(u32 nodes, u32 degree, u64 seed, u64 frames,
           GraphTopology topo = GraphTopology::Random)
      : store(4096, 0, nodes, degree, seed, topo) {
    cfg.pageBytes = 4096;
    cfg.frameCount = frames;
    cfg.pid = PidLayout{16, 4096};
    cfg.provider = &prov;
    pool = std::make_unique<BufferPool<ArrayTranslation>>(
        store, cfg, prov, PidLayout{16, 4096});
  }
};

// Reference BFS over the same pure edge function.
u64 referenceBfs(GraphTopology topo, u32 start, u32 nodes, u32 degree,
                 u64 seed) {
  std::vector<u8> visited(nodes, 0);
  std::deque<u32> q;
  visited[start] = 1;
  q.push_back(start);
  u64 count = 0;
  std::vector<u32> nbrs;
  while (!q.empty()) {
    u32 v = q.front();
    q.pop_front();
    count++;
    graphNeighbors(topo, v, nodes, degree, seed, nbrs);
    for (u32 n : nbrs)
      if (!visited[n]) {
        visited[n] = 1;
        q.push_back(n);
      }
  }
  return count;
}

}  // namespace

TEST_CASE("edge generator reference values") {
  std::vector<u32> nbrs;
  graphNeighbors(GraphTopology::Random, 0, 1000, 8, 99, nbrs);
  CHECK(nbrs == std::vector<u32>{711, 254, 210, 110, 855, 945, 310, 713});
  graphNeighbors(GraphTopology::Random, 1, 1000, 8, 99, nbrs);
  CHECK(nbrs == std::vector<u32>{647, 153, 682, 233, 620, 29, 838, 107});
  graphNeighbors(GraphTopology::Random, 17, 1000, 8, 99, nbrs);
  CHECK(nbrs == std::vector<u32>{630, 765, 397, 875, 496, 244, 992, 812});
}

TEST_CASE("edge generator properties") {
  std::vector<u32> nbrs;
  for (u32 node = 0; node < 200; node++) {
    graphNeighbors(GraphTopology::Random, node, 500, 12, 7, nbrs);
    CHECK(nbrs.size() == 12);
    std::vector<u32> sorted = nbrs;
    std::sort(sorted.begin(), sorted.end());
    CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
    for (u32 v : nbrs) {
      CHECK(v < 500);
      CHECK(v != node);
    }
    // a second call reproduces the same edges
    std::vector<u32> again;
    graphNeighbors(GraphTopology::Random, node, 500, 12, 7, again);
    CHECK(again == nbrs);
  }

  graphNeighbors(GraphTopology::Ring, 0, 10, 2, 0, nbrs);
  CHECK(nbrs == std::vector<u32>{9, 1});
  graphNeighbors(GraphTopology::Ring, 9, 10, 2, 0, nbrs);
  CHECK(nbrs == std::vector<u32>{8, 0});
}

TEST_CASE("graph page store serves the generator") {
  GraphPageStore st(4096, 100, 50, 6, 3);
  std::vector<std::byte> a(4096), b(4096);
  st.readPage(117, a.data());  // node 17
  graphFillPage(GraphTopology::Random, 17, 50, 6, 3, b.data(), 4096);
  CHECK(a == b);
  CHECK(loadLE<u32>(a.data()) == 6);

  st.readPage(99, a.data());  // below base: zeroes
  CHECK(a == std::vector<std::byte>(4096));
  st.readPage(150, a.data());  // past the last node: zeroes
  CHECK(a == std::vector<std::byte>(4096));
}

TEST_CASE("graph construction guards") {
  GraphRig rig(10, 4, 1, 32);
  CHECK_THROWS_AS(
      PageGraph<ArrayTranslation>(*rig.pool, 0, 10, 1100, 1),  // > (4096-4)/4
      ConfigError);
  CHECK_THROWS_AS(PageGraph<ArrayTranslation>(*rig.pool, 0, 1, 4, 1),
                  ConfigError);
}

TEST_CASE("ring bfs visits every node") {
  GraphRig rig(64, 2, 0, 128, GraphTopology::Ring);
  PageGraph<ArrayTranslation> g(*rig.pool, 0, 64, 2, 0, GraphTopology::Ring);
  CHECK(g.bfs(0, false) == 64);
  CHECK(g.bfs(31, true) == 64);
  CHECK(g.probeSum() > 0);
}

TEST_CASE("random bfs matches the reference traversal") {
  constexpr u32 kNodes = 2000, kDegree = 6;
  constexpr u64 kSeed = 123;
  GraphRig rig(kNodes, kDegree, kSeed, kNodes + 16);
  PageGraph<ArrayTranslation> g(*rig.pool, 0, kNodes, kDegree, kSeed);

  for (u32 start : {0u, 1u, 999u}) {
    u64 want = referenceBfs(GraphTopology::Random, start, kNodes, kDegree,
                            kSeed);
    CHECK(g.bfs(start, false) == want);
    CHECK(g.bfs(start, true) == want);  // prefetch cannot change the answer
  }
}

TEST_CASE("bfs is correct when the graph outsizes the pool") {
  constexpr u32 kNodes = 3000, kDegree = 5;
  constexpr u64 kSeed = 77;
  GraphRig rig(kNodes, kDegree, kSeed, 300);  // 10% of the graph fits
  PageGraph<ArrayTranslation> g(*rig.pool, 0, kNodes, kDegree, kSeed);

  u64 want = referenceBfs(GraphTopology::Random, 0, kNodes, kDegree, kSeed);
  CHECK(g.bfs(0, true) == want);
  auto s = rig.pool->stats();
  CHECK(s.evictions > 0);
  CHECK(s.ioReadBatches > 0);  // cold neighbor groups arrived batched
  CHECK(g.bfs(0, false) == want);
  CHECK(rig.pool->backend().liveCounterSum() == rig.pool->stats().residentPages);
}

TEST_CASE("build materializes pages a file-like store can keep") {
  // MemoryPageStore stands in for a real file: build writes every node page
  // through the pool, and traversals then read them back.
  InstrumentedMemoryProvider prov;
  MemoryPageStore store(4096);
  PoolConfig cfg;
  cfg.pageBytes = 4096;
  cfg.frameCount = 64;
  cfg.pid = PidLayout{16, 4096};
  cfg.provider = &prov;
  BufferPool<ArrayTranslation> pool(store, cfg, prov, PidLayout{16, 4096});

  constexpr u32 kNodes = 400, kDegree = 4;
  PageGraph<ArrayTranslation> g(pool, 0, kNodes, kDegree, 5);
  g.build();
  pool.flushAll();
  CHECK(store.knownPages() == kNodes);

  u64 want = referenceBfs(GraphTopology::Random, 0, kNodes, kDegree, 5);
  CHECK(g.bfs(0, true) == want);
  CHECK(g.bfs(0, false) == want);
}
