#include "hifdta/junction_tree.hpp"

#include <algorithm>
#include <deque>
#include <numeric>
#include <string>

#include "hifdta/rng.hpp"

namespace hifdta::chem {

namespace {

using BondSet = std::vector<std::uint64_t>;  // bitset over bond ids

// Shortest cycle through ring bond `skip`: BFS from one end to the other
// over ring bonds, not using `skip` itself. Returns bond ids.
std::vector<std::size_t> shortest_cycle_through(const MolGraph& g, std::size_t skip) {
  const std::size_t n = g.num_atoms();
  const std::size_t src = g.bonds[skip].a, dst = g.bonds[skip].b;
  std::vector<std::size_t> via(n, MolGraph::npos);
  std::vector<bool> seen(n, false);
  std::deque<std::size_t> queue{src};
  seen[src] = true;
  while (!queue.empty() && !seen[dst]) {
    const std::size_t v = queue.front();
    queue.pop_front();
    for (std::size_t b : g.adjacency[v]) {
      if (b == skip || !g.bonds[b].in_ring) continue;
      const std::size_t u = g.bonds[b].other(v);
      if (seen[u]) continue;
      seen[u] = true;
      via[u] = b;
      queue.push_back(u);
    }
  }
  std::vector<std::size_t> cycle{skip};
  if (!seen[dst]) return cycle;
  for (std::size_t v = dst; v != src;) {
    const std::size_t b = via[v];
    cycle.push_back(b);
    v = g.bonds[b].other(v);
  }
  return cycle;
}

// Greedy GF(2) basis: keeps candidates that are independent of those kept.
std::vector<std::vector<std::size_t>> cycle_basis(const MolGraph& g) {
  std::vector<std::vector<std::size_t>> candidates;
  for (std::size_t b = 0; b < g.num_bonds(); ++b)
    if (g.bonds[b].in_ring) candidates.push_back(shortest_cycle_through(g, b));
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const auto& x, const auto& y) { return x.size() < y.size(); });

  const std::size_t words = (g.num_bonds() + 63) / 64;
  std::vector<BondSet> reduced;  // echelon rows
  std::vector<std::size_t> pivots;
  std::vector<std::vector<std::size_t>> basis;
  for (auto& cyc : candidates) {
    if (cyc.size() < 3) continue;
    BondSet row(words, 0);
    for (std::size_t b : cyc) row[b / 64] ^= 1ULL << (b % 64);
    for (std::size_t r = 0; r < reduced.size(); ++r)
      if (row[pivots[r] / 64] >> (pivots[r] % 64) & 1ULL)
        for (std::size_t w = 0; w < words; ++w) row[w] ^= reduced[r][w];
    std::size_t pivot = MolGraph::npos;
    for (std::size_t w = 0; w < words && pivot == MolGraph::npos; ++w)
      if (row[w]) pivot = w * 64 + static_cast<std::size_t>(__builtin_ctzll(row[w]));
    if (pivot == MolGraph::npos) continue;
    reduced.push_back(std::move(row));
    pivots.push_back(pivot);
    basis.push_back(cyc);
  }
  return basis;
}

std::vector<std::size_t> cycle_atoms(const MolGraph& g, const std::vector<std::size_t>& bonds) {
  std::vector<std::size_t> atoms;
  for (std::size_t b : bonds) {
    atoms.push_back(g.bonds[b].a);
    atoms.push_back(g.bonds[b].b);
  }
  std::sort(atoms.begin(), atoms.end());
  atoms.erase(std::unique(atoms.begin(), atoms.end()), atoms.end());
  return atoms;
}

std::size_t intersection_size(const std::vector<std::size_t>& x, const std::vector<std::size_t>& y) {
  std::size_t i = 0, j = 0, count = 0;
  while (i < x.size() && j < y.size()) {
    if (x[i] < y[j]) ++i;
    else if (y[j] < x[i]) ++j;
    else {
      ++count;
      ++i;
      ++j;
    }
  }
  return count;
}

struct DisjointSet {
  std::vector<std::size_t> parent;
  explicit DisjointSet(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  bool unite(std::size_t x, std::size_t y) {
    x = find(x);
    y = find(y);
    if (x == y) return false;
    parent[std::max(x, y)] = std::min(x, y);
    return true;
  }
};

}  // namespace

std::uint32_t cluster_type_id(const std::vector<std::size_t>& cluster, ClusterKind kind, const MolGraph& g) {
  std::vector<std::string> parts;
  for (std::size_t v : cluster) parts.push_back(g.atoms[v].element + (g.atoms[v].aromatic ? "a" : ""));
  std::sort(parts.begin(), parts.end());
  std::string sig;
  for (const auto& p : parts) sig += p + ",";
  switch (kind) {
    case ClusterKind::Ring:
      sig += "|R" + std::to_string(cluster.size());
      break;
    case ClusterKind::Bond: {
      const std::size_t b = g.bond_between(cluster[0], cluster[1]);
      sig += "|B" + std::to_string(static_cast<int>(g.bonds[b].order));
      break;
    }
    case ClusterKind::Atom:
      sig += "|A";
      break;
  }
  return static_cast<std::uint32_t>(stable_hash(sig.data(), sig.size()) % kClusterVocab);
}

JunctionTree tree_decompose(const MolGraph& g) {
  JunctionTree jt;
  const std::size_t n = g.num_atoms();

  // Ring systems.
  std::vector<std::vector<std::size_t>> rings;
  for (const auto& cyc : cycle_basis(g)) rings.push_back(cycle_atoms(g, cyc));
  bool merged = true;
  while (merged) {
    merged = false;
    for (std::size_t i = 0; i < rings.size() && !merged; ++i)
      for (std::size_t j = i + 1; j < rings.size() && !merged; ++j)
        if (intersection_size(rings[i], rings[j]) >= 2) {
          std::vector<std::size_t> u;
          std::set_union(rings[i].begin(), rings[i].end(), rings[j].begin(), rings[j].end(), std::back_inserter(u));
          rings[i] = std::move(u);
          rings.erase(rings.begin() + static_cast<std::ptrdiff_t>(j));
          merged = true;
        }
  }
  std::sort(rings.begin(), rings.end());
  for (auto& r : rings) {
    jt.clusters.push_back(std::move(r));
    jt.kinds.push_back(ClusterKind::Ring);
  }
  // Ring bonds not covered by any basis ring (possible in cages) become bond clusters.
  auto covered = [&](std::size_t b) {
    for (std::size_t c = 0; c < jt.clusters.size(); ++c) {
      const auto& cl = jt.clusters[c];
      if (std::binary_search(cl.begin(), cl.end(), g.bonds[b].a) && std::binary_search(cl.begin(), cl.end(), g.bonds[b].b))
        return true;
    }
    return false;
  };
  for (std::size_t b = 0; b < g.num_bonds(); ++b) {
    if (g.bonds[b].in_ring && covered(b)) continue;
    jt.clusters.push_back({std::min(g.bonds[b].a, g.bonds[b].b), std::max(g.bonds[b].a, g.bonds[b].b)});
    jt.kinds.push_back(ClusterKind::Bond);
  }
  for (std::size_t v = 0; v < n; ++v)
    if (g.adjacency[v].empty()) {
      jt.clusters.push_back({v});
      jt.kinds.push_back(ClusterKind::Atom);
    }

  jt.atom_clusters.assign(n, {});
  for (std::size_t c = 0; c < jt.clusters.size(); ++c)
    for (std::size_t v : jt.clusters[c]) jt.atom_clusters[v].push_back(c);

  // Maximum spanning forest over intersecting cluster pairs (Kruskal).
  struct Edge {
    std::size_t weight, a, b;
  };
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < jt.clusters.size(); ++i)
    for (std::size_t j = i + 1; j < jt.clusters.size(); ++j) {
      const std::size_t w = intersection_size(jt.clusters[i], jt.clusters[j]);
      if (w > 0) edges.push_back({w, i, j});
    }
  std::stable_sort(edges.begin(), edges.end(), [](const Edge& x, const Edge& y) { return x.weight > y.weight; });
  DisjointSet ds(jt.clusters.size());
  for (const auto& e : edges)
    if (ds.unite(e.a, e.b)) jt.tree_edges.emplace_back(e.a, e.b);

  for (std::size_t c = 0; c < jt.clusters.size(); ++c)
    jt.cluster_types.push_back(cluster_type_id(jt.clusters[c], jt.kinds[c], g));
  return jt;
}

}  // namespace hifdta::chem
