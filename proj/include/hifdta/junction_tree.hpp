#pragma once

// Tree decomposition of a molecular graph into ring systems, non-ring bonds
// and isolated atoms.

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "hifdta/chem.hpp"

namespace hifdta::chem {

enum class ClusterKind : std::uint8_t { Ring, Bond, Atom };

struct JunctionTree {
  std::vector<std::vector<std::size_t>> clusters;  // sorted atom ids
  std::vector<ClusterKind> kinds;
  std::vector<std::vector<std::size_t>> atom_clusters;  // atom -> cluster ids
  std::vector<std::pair<std::size_t, std::size_t>> tree_edges;
  std::vector<std::uint32_t> cluster_types;

  std::size_t num_clusters() const { return clusters.size(); }
};

inline constexpr std::uint32_t kClusterVocab = 512;

// Rings come from a shortest-cycle basis of the ring bonds; rings sharing
// two or more atoms (fused and bridged systems) are merged into one cluster.
// Tree edges are a maximum spanning forest of the cluster intersection graph.
JunctionTree tree_decompose(const MolGraph& g);

// Stable hash of the sorted (element, aromatic) multiset plus a ring-size or
// bond-order tag, reduced into [0, 512).
std::uint32_t cluster_type_id(const std::vector<std::size_t>& cluster, ClusterKind kind, const MolGraph& g);

}  // namespace hifdta::chem
