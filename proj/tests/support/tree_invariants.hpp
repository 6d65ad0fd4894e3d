#pragma once

// Brute-force checks of a junction-tree decomposition. Returns one message
// per violated property; empty means the decomposition is valid.

#include <algorithm>
#include <iterator>
#include <numeric>
#include <string>
#include <vector>

#include "hifdta/chem.hpp"
#include "hifdta/junction_tree.hpp"

namespace hifdta::testing {

inline std::size_t count_components(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges,
                                    bool* cyclic) {
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x];
    return x;
  };
  std::size_t components = n;
  *cyclic = false;
  for (auto [a, b] : edges) {
    auto ra = find(a), rb = find(b);
    if (ra == rb) *cyclic = true;
    else {
      parent[ra] = rb;
      --components;
    }
  }
  return components;
}

inline std::vector<std::string> tree_violations(const chem::MolGraph& g, const chem::JunctionTree& jt) {
  std::vector<std::string> out;
  for (std::size_t v = 0; v < g.num_atoms(); ++v) {
    std::size_t hits = 0;
    for (const auto& c : jt.clusters) hits += std::count(c.begin(), c.end(), v);
    if (hits == 0) out.push_back("atom " + std::to_string(v) + " is in no cluster");
    if (jt.atom_clusters[v].size() != hits) out.push_back("atom " + std::to_string(v) + " membership list is stale");
  }
  for (std::size_t i = 0; i < g.bonds.size(); ++i) {
    const auto& b = g.bonds[i];
    std::size_t hits = 0;
    for (const auto& c : jt.clusters)
      if (std::count(c.begin(), c.end(), b.a) && std::count(c.begin(), c.end(), b.b)) ++hits;
    if (hits != 1) out.push_back("bond " + std::to_string(i) + " lies in " + std::to_string(hits) + " clusters");
  }
  bool cyclic = false;
  const std::size_t trees = count_components(jt.num_clusters(), jt.tree_edges, &cyclic);
  if (cyclic) out.push_back("tree edges contain a cycle");
  std::vector<std::pair<std::size_t, std::size_t>> atom_edges;
  for (const auto& b : g.bonds) atom_edges.emplace_back(b.a, b.b);
  bool ignored = false;
  if (trees != count_components(g.num_atoms(), atom_edges, &ignored))
    out.push_back("tree count differs from the molecule's component count");
  for (auto t : jt.cluster_types)
    if (t >= chem::kClusterVocab) out.push_back("cluster type out of range");
  for (auto [a, b] : jt.tree_edges) {
    std::vector<std::size_t> common;
    std::set_intersection(jt.clusters[a].begin(), jt.clusters[a].end(), jt.clusters[b].begin(), jt.clusters[b].end(),
                          std::back_inserter(common));
    if (common.empty()) out.push_back("tree edge joins disjoint clusters");
  }
  return out;
}

}  // namespace hifdta::testing
