#pragma once

// Protein side: batch collation of residue graphs, the global (degree-sorted
// selective SSM) and local (PNA) pathways, and three levels of mincut
// clustering.

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "hifdta/nn.hpp"
#include "hifdta/protein_io.hpp"

namespace hifdta {

// One protein ready for batching.
struct ProteinGraph {
  std::string id;
  std::vector<std::uint8_t> residues;  // alphabet indices
  std::vector<float> esm;              // R x 1280
  protein::ContactGraph contacts;

  std::size_t length() const { return residues.size(); }
};

// Residues of several proteins concatenated in sequence order.
struct ProteinBatch {
  std::size_t num_proteins = 0;
  std::size_t num_nodes = 0;
  std::size_t max_len = 0;
  Tensor x;  // [N, 1313]
  Index node_protein;
  std::vector<std::size_t> lengths;
  Index dense;       // [P * max_len] -> node row or -1, sequence order
  Mask mask;         // [P * max_len]
  Index dense_sorted;  // [P * max_len] -> node row or -1, ascending degree per protein
  Index unsort;        // [N] -> row of the sorted dense layout
  nn::EdgeList edges;  // directed, both orientations
  std::shared_ptr<const SparseOperator> gcn;        // D^-1/2 (A + I) D^-1/2, block diagonal
  std::shared_ptr<const SparseOperator> adjacency;  // binary contact adjacency
  std::vector<double> contact_degree;               // row sums of the binary adjacency
};

// Stable argsort of nodes by (protein, degree, original index).
std::vector<std::size_t> degree_sort(const std::vector<std::size_t>& protein_of_node,
                                     const std::vector<std::size_t>& degree);

ProteinBatch collate_proteins(const std::vector<const ProteinGraph*>& proteins, const protein::PhyschemStats& stats,
                              const protein::ContactGraphOptions& options = {});

// Selective state-space layer over a dense [P, T, d] batch.
struct SsmLayer {
  nn::Linear delta, b_proj, c_proj;
  Tensor a_log;   // [d, n]
  Tensor d_skip;  // [d]

  SsmLayer() = default;
  SsmLayer(ParamStore& store, const std::string& name, std::size_t d, std::size_t state, CounterRng& rng);
  Tensor operator()(const Tensor& h, const Mask& mask) const;
};

struct ClusterLevel {
  Tensor assignment;  // [P, n_in, cl]; padded rows are zero
  Tensor features;    // [P, cl, d]
  Tensor adjacency;   // [P, cl, cl], zero diagonal, symmetrically normalised
  Tensor cut_loss;    // scalar, batch mean
  Tensor ortho_loss;  // scalar, batch mean
};

// Mincut auxiliary terms for a dense [P, n, cl] assignment and [P, n, n]
// adjacency, averaged over the batch. The cut term is 0 for edgeless graphs.
Tensor mincut_cut_loss(const Tensor& assignment, const Tensor& adjacency);
Tensor mincut_ortho_loss(const Tensor& assignment);

// Two GCN layers producing cluster logits, softmax assignment, pooling and
// the mincut auxiliary losses.
struct MincutLevel {
  nn::Linear gcn1, gcn2;
  std::size_t clusters = 0;

  MincutLevel() = default;
  MincutLevel(ParamStore& store, const std::string& name, std::size_t d, std::size_t clusters, CounterRng& rng);
  // Residue level: sparse adjacency over the flat node rows.
  ClusterLevel sparse(const Tensor& x, const ProteinBatch& batch) const;
  // Cluster levels: dense [P, n, d] features and [P, n, n] adjacency.
  ClusterLevel dense(const Tensor& x, const Tensor& adjacency) const;
};

struct ProteinEncoderConfig {
  std::size_t d = 200;
  std::size_t layers = 3;
  std::size_t ssm_state = 16;
  std::vector<std::size_t> clusters{20, 10, 5};
  bool use_global = true;  // SSM pathway
  bool use_local = true;   // PNA pathway
};

struct ProteinEncoding {
  Tensor residue;        // [N, d]
  Tensor residue_dense;  // [P, max_len, d]
  std::vector<ClusterLevel> levels;
  Tensor composed_assignment;  // [P, max_len, cl_last] = M1 M2 M3
  Tensor aux_loss;             // scalar: sum over levels of cut + ortho
};

class ProteinEncoder {
 public:
  ProteinEncoder(ParamStore& store, const ProteinEncoderConfig& cfg, CounterRng& rng);

  Tensor project(const ProteinBatch& batch) const;
  Tensor global_path(const Tensor& h, const ProteinBatch& batch) const;
  Tensor local_path(const Tensor& h, const ProteinBatch& batch) const;
  ProteinEncoding operator()(const ProteinBatch& batch) const;

  const ProteinEncoderConfig& config() const { return cfg_; }
  nn::DegreeStats degree_stats() const;
  void set_degree_stats(const nn::DegreeStats& stats);

  nn::Linear input_proj;
  SsmLayer ssm;
  std::vector<nn::PnaLayer> pna;
  nn::PathFusion fuse;
  std::vector<MincutLevel> mincut;

 private:
  ProteinEncoderConfig cfg_;
  Tensor stats_;
};

}  // namespace hifdta
