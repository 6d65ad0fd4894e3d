#pragma once

// Drug side: per-molecule featurisation, batch collation and the three-scale
// encoder (atoms, substructures, molecule).

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "hifdta/nn.hpp"

namespace hifdta {

// Everything the encoder needs from one molecule; cheap to cache.
struct DrugGraph {
  std::size_t num_atoms = 0;
  std::vector<double> atom_features;  // num_atoms x 43
  std::vector<std::pair<std::size_t, std::size_t>> bonds;
  std::vector<double> bond_features;  // bonds x 5
  std::vector<std::vector<std::size_t>> clusters;
  std::vector<std::uint32_t> cluster_types;
  std::vector<std::size_t> first_cluster;  // lowest cluster id containing each atom
};

DrugGraph featurize_drug(std::string_view smiles);

// Molecules packed PyG style: atoms concatenated, segment ids per molecule.
struct DrugBatch {
  std::size_t num_mols = 0;
  std::size_t num_atoms = 0;
  std::size_t num_clusters = 0;
  std::size_t max_atoms = 0;
  std::size_t max_clusters = 0;
  Tensor x;  // [N, 43]
  Index atom_mol;
  std::vector<std::size_t> lengths;
  Index dense_atoms;  // [B * max_atoms] -> atom row or -1
  Index flat_atoms;   // [N] -> row of the dense layout
  nn::EdgeList edges;
  Index member_atom, member_cluster;  // (atom, cluster) incidence pairs
  Index cluster_mol;
  Index cluster_type;
  Index first_cluster;   // [N] global cluster id
  std::vector<std::int64_t> dense_first_cluster;  // [B * max_atoms] molecule-local cluster id or -1
  Index dense_clusters;  // [B * max_clusters] -> cluster row or -1
  Mask atom_mask, cluster_mask;
};

DrugBatch collate_drugs(const std::vector<const DrugGraph*>& mols);

struct DrugScales {
  Tensor atom;  // [N, d]
  Tensor sub;   // [C, d]
  Tensor mol;   // [B, d]
  Tensor sub_attention;  // [C, heads]
};

struct DrugEncoderConfig {
  std::size_t d = 200;
  std::size_t heads = 4;
  std::size_t layers = 3;
  double dropout = 0.2;
  bool use_global = true;  // BiLSTM pathway
  bool use_local = true;   // PNA pathway
};

class DrugEncoder {
 public:
  DrugEncoder(ParamStore& store, const DrugEncoderConfig& cfg, CounterRng& rng);

  // Individual stages, exposed for testing.
  Tensor embed(const Tensor& atom_features) const;
  Tensor bilstm(const Tensor& h, const DrugBatch& batch) const;
  Tensor mpnn(const Tensor& h, const DrugBatch& batch) const;
  Tensor substructures(const Tensor& h_atom, const DrugBatch& batch) const;
  // Returns (h_mol, attention weights).
  std::pair<Tensor, Tensor> attend(const Tensor& h_sub, const DrugBatch& batch, const nn::ForwardMode& mode) const;

  DrugScales operator()(const DrugBatch& batch, const nn::ForwardMode& mode) const;

  const DrugEncoderConfig& config() const { return cfg_; }
  // Degree-scaler normalisers live in a checkpointed buffer.
  nn::DegreeStats degree_stats() const;
  void set_degree_stats(const nn::DegreeStats& stats);

  nn::Linear embed1, embed2;
  nn::LayerNorm embed_norm;
  nn::Linear lstm_in_fwd, lstm_in_bwd;
  Tensor lstm_hh_fwd, lstm_hh_bwd;
  std::vector<nn::PnaLayer> pna;
  nn::PathFusion fuse;
  nn::Linear sub_proj;
  Tensor type_embedding;  // [512, d]
  std::vector<nn::Mlp> head_scorers;

 private:
  DrugEncoderConfig cfg_;
  Tensor stats_;  // [2]: log_delta, lin_delta
};

}  // namespace hifdta
