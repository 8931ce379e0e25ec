#pragma once
// On-page adjacency graph: node n lives at pid base+n; its page stores a u32
// degree followed by u32 neighbor node ids. BFS visits every reachable node,
// probing each neighbor's page as it goes (a stand-in for per-neighbor
// computation in proximity-graph search, kept deliberately compute-light).
// With prefetching enabled, the visitor hands each node's neighbor pids to
// the pool's group prefetch before probing them, so cold neighbors arrive in
// one batched read and warm ones get their header line pulled into cache.
//
// Edges are sampled uniformly without replacement from a per-node seeded
// generator, so an edge set is a pure function of (topology, nodes, degree,
// seed) and any traversal is reproducible across backends and prefetch
// settings. GraphPageStore serves node pages straight from that function,
// which makes graph workloads runnable without a build pass and lets evicted
// pages re-fault with identical bytes.

#include <deque>
#include <vector>

#include "buffer_pool.hpp"

namespace arraypool {

enum class GraphTopology { Random, Ring };

// Pure edge generator, shared by the page store, the traversal, and oracles.
inline void graphNeighbors(GraphTopology topo, u32 node, u32 nodes, u32 degree,
                           u64 seed, std::vector<u32>& out) {
  out.clear();
  if (topo == GraphTopology::Ring) {
    out.push_back((node + nodes - 1) % nodes);
    out.push_back((node + 1) % nodes);
    return;
  }
  Rng64 rng(seed ^ (u64(node) * 0x9e3779b97f4a7c15ull));
  while (out.size() < degree) {
    u32 cand = u32(rng.bounded(nodes));
    if (cand == node) continue;
    bool dup = false;
    for (u32 v : out) dup |= (v == cand);
    if (!dup) out.push_back(cand);
  }
}

inline void graphFillPage(GraphTopology topo, u32 node, u32 nodes, u32 degree,
                          u64 seed, std::byte* dst, u32 pageBytes) {
  std::vector<u32> nbrs;
  graphNeighbors(topo, node, nodes, degree, seed, nbrs);
  std::memset(dst, 0, pageBytes);
  storeLE<u32>(dst, u32(nbrs.size()));
  for (size_t i = 0; i < nbrs.size(); i++)
    storeLE<u32>(dst + 4 + 4 * i, nbrs[i]);
}

// Deterministic page source for graph workloads; pids outside the node range
// read as zeroes, writes are accepted and discarded (pages are regenerable).
class GraphPageStore final : public PageStore {
 public:
  GraphPageStore(u32 pageBytes, PageId base, u32 nodes, u32 degree, u64 seed,
                 GraphTopology topo = GraphTopology::Random)
      : pageBytes_(pageBytes), base_(base), nodes_(nodes), degree_(degree),
        seed_(seed), topo_(topo) {}

  u32 pageBytes() const override { return pageBytes_; }

  void readPage(PageId pid, std::byte* dst) override {
    reads_.fetch_add(1, std::memory_order_relaxed);
    if (pid < base_ || pid >= base_ + nodes_) {
      std::memset(dst, 0, pageBytes_);
      return;
    }
    graphFillPage(topo_, u32(pid - base_), nodes_, degree_, seed_, dst,
                  pageBytes_);
  }

  void writePage(PageId, const std::byte*) override {
    writes_.fetch_add(1, std::memory_order_relaxed);
  }

  u64 reads() const { return reads_.load(); }

 private:
  u32 pageBytes_;
  PageId base_;
  u32 nodes_;
  u32 degree_;
  u64 seed_;
  GraphTopology topo_;
  std::atomic<u64> reads_{0}, writes_{0};
};

template <class Backend>
class PageGraph {
 public:
  PageGraph(BufferPool<Backend>& pool, PageId base, u32 nodes, u32 degree,
            u64 seed, GraphTopology topo = GraphTopology::Random)
      : pool_(pool), base_(base), nodes_(nodes),
        degree_(topo == GraphTopology::Ring ? 2 : degree), seed_(seed),
        topo_(topo) {
    u32 cap = (pool.pageBytes() - 4) / 4;
    if (degree_ > cap) throw ConfigError("graph degree exceeds page capacity");
    if (nodes_ < 2) throw ConfigError("graph needs at least two nodes");
  }

  u32 nodes() const { return nodes_; }
  u32 degree() const { return degree_; }
  PageId pidOf(u32 node) const { return base_ + node; }
  u64 probeSum() const { return sink_; }  // anti-elision witness

  // Materialize every node page through the pool (needed when the backing
  // store is not a GraphPageStore, e.g. a file store for cold-I/O runs).
  void build() {
    std::vector<u32> nbrs;
    for (u32 n = 0; n < nodes_; n++) {
      graphNeighbors(topo_, n, nodes_, degree_, seed_, nbrs);
      auto page = pool_.pinExclusive(pidOf(n));
      std::byte* p = page.data();
      std::memset(p, 0, pool_.pageBytes());
      storeLE<u32>(p, u32(nbrs.size()));
      for (size_t i = 0; i < nbrs.size(); i++)
        storeLE<u32>(p + 4 + 4 * i, nbrs[i]);
      pool_.unpinExclusive(pidOf(n), true);
    }
  }

  // Full BFS from start. Returns the number of distinct nodes visited; the
  // result is independent of backend and prefetch setting.
  u64 bfs(u32 start, bool prefetch) {
    std::vector<u8> visited(nodes_, 0);
    std::deque<u32> queue;
    std::vector<u32> nbrs;
    std::vector<PageId> nbrPids;
    const u32 offsets[1] = {0};  // probe target: the degree word
    visited[start] = 1;
    queue.push_back(start);
    u64 count = 0;
    while (!queue.empty()) {
      u32 u = queue.front();
      queue.pop_front();
      count++;
      readNeighbors(u, nbrs);
      if (prefetch && !nbrs.empty()) {
        nbrPids.clear();
        for (u32 v : nbrs) nbrPids.push_back(pidOf(v));
        pool_.prefetchGroup(nbrPids, offsets);
      }
      for (u32 v : nbrs) {
        if (v >= nodes_) throw PoolError("corrupt graph page: bad neighbor");
        probe(v);
        if (!visited[v]) {
          visited[v] = 1;
          queue.push_back(v);
        }
      }
    }
    return count;
  }

 private:
  void readNeighbors(u32 node, std::vector<u32>& out) {
    out.clear();
    out.reserve(degree_);
    u32 cap = (pool_.pageBytes() - 4) / 4;
    pool_.optimisticRead(pidOf(node), [&](std::span<const std::byte> page) {
      out.clear();  // reruns must not accumulate
      const std::byte* p = page.data();
      u32 d = std::min(loadLE<u32>(p), cap);  // clamp: bytes may be torn
      for (u32 i = 0; i < d; i++) out.push_back(loadLE<u32>(p + 4 + 4 * i));
    });
  }

  // Touch the neighbor's page header; this is the per-neighbor "work".
  void probe(u32 node) {
    pool_.optimisticRead(pidOf(node), [&](std::span<const std::byte> page) {
      sink_ = sink_ + loadLE<u32>(page.data());
    });
  }

  BufferPool<Backend>& pool_;
  const PageId base_;
  const u32 nodes_;
  const u32 degree_;
  const u64 seed_;
  const GraphTopology topo_;
  u64 sink_ = 0;  // keeps probes from folding away (see probeSum)
};

}  // namespace arraypool
