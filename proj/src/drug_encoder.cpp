#include "hifdta/drug_encoder.hpp"

#include <algorithm>

#include "hifdta/chem.hpp"
#include "hifdta/errors.hpp"
#include "hifdta/junction_tree.hpp"
#include "hifdta/sequence.hpp"

namespace hifdta {

DrugGraph featurize_drug(std::string_view smiles) {
  const chem::MolGraph g = chem::parse_smiles(smiles);
  if (g.num_atoms() == 0) throw FormatError("molecule without atoms: " + std::string(smiles));
  const chem::JunctionTree jt = chem::tree_decompose(g);
  DrugGraph out;
  out.num_atoms = g.num_atoms();
  out.atom_features = chem::featurize_atoms(g);
  out.bond_features = chem::featurize_bonds(g);
  for (const auto& b : g.bonds) out.bonds.emplace_back(b.a, b.b);
  out.clusters = jt.clusters;
  out.cluster_types = jt.cluster_types;
  out.first_cluster.resize(g.num_atoms());
  for (std::size_t v = 0; v < g.num_atoms(); ++v)
    out.first_cluster[v] = *std::min_element(jt.atom_clusters[v].begin(), jt.atom_clusters[v].end());
  return out;
}

DrugBatch collate_drugs(const std::vector<const DrugGraph*>& mols) {
  DrugBatch b;
  b.num_mols = mols.size();
  for (const auto* m : mols) {
    b.max_atoms = std::max(b.max_atoms, m->num_atoms);
    b.max_clusters = std::max(b.max_clusters, m->clusters.size());
  }
  std::vector<double> x;
  std::vector<double> edge_features;
  b.dense_atoms.assign(b.num_mols * b.max_atoms, -1);
  b.dense_clusters.assign(b.num_mols * b.max_clusters, -1);
  b.atom_mask.assign(b.num_mols * b.max_atoms, 0);
  b.dense_first_cluster.assign(b.num_mols * b.max_atoms, -1);
  b.cluster_mask.assign(b.num_mols * b.max_clusters, 0);
  std::size_t atom_base = 0, cluster_base = 0;
  for (std::size_t mi = 0; mi < mols.size(); ++mi) {
    const DrugGraph& m = *mols[mi];
    x.insert(x.end(), m.atom_features.begin(), m.atom_features.end());
    b.lengths.push_back(m.num_atoms);
    for (std::size_t v = 0; v < m.num_atoms; ++v) {
      b.atom_mol.push_back(static_cast<std::int64_t>(mi));
      b.dense_atoms[mi * b.max_atoms + v] = static_cast<std::int64_t>(atom_base + v);
      b.flat_atoms.push_back(static_cast<std::int64_t>(mi * b.max_atoms + v));
      b.atom_mask[mi * b.max_atoms + v] = 1;
      b.first_cluster.push_back(static_cast<std::int64_t>(cluster_base + m.first_cluster[v]));
      b.dense_first_cluster[mi * b.max_atoms + v] = static_cast<std::int64_t>(m.first_cluster[v]);
    }
    for (std::size_t e = 0; e < m.bonds.size(); ++e) {
      const auto [u, v] = m.bonds[e];
      for (auto [s, t] : {std::pair{u, v}, std::pair{v, u}}) {
        b.edges.src.push_back(static_cast<std::int64_t>(atom_base + s));
        b.edges.dst.push_back(static_cast<std::int64_t>(atom_base + t));
        edge_features.insert(edge_features.end(), m.bond_features.begin() + static_cast<std::ptrdiff_t>(e * 5),
                             m.bond_features.begin() + static_cast<std::ptrdiff_t>(e * 5 + 5));
      }
    }
    for (std::size_t c = 0; c < m.clusters.size(); ++c) {
      for (std::size_t v : m.clusters[c]) {
        b.member_atom.push_back(static_cast<std::int64_t>(atom_base + v));
        b.member_cluster.push_back(static_cast<std::int64_t>(cluster_base + c));
      }
      b.cluster_mol.push_back(static_cast<std::int64_t>(mi));
      b.cluster_type.push_back(m.cluster_types[c]);
      b.dense_clusters[mi * b.max_clusters + c] = static_cast<std::int64_t>(cluster_base + c);
      b.cluster_mask[mi * b.max_clusters + c] = 1;
    }
    atom_base += m.num_atoms;
    cluster_base += m.clusters.size();
  }
  b.num_atoms = atom_base;
  b.num_clusters = cluster_base;
  b.x = Tensor::from({b.num_atoms, 43}, std::move(x));
  b.edges.num_nodes = b.num_atoms;
  b.edges.degree.assign(b.num_atoms, 0.0);
  for (auto t : b.edges.dst) b.edges.degree[static_cast<std::size_t>(t)] += 1.0;
  b.edges.features = Tensor::from({b.edges.src.size(), 5}, std::move(edge_features));
  return b;
}

DrugEncoder::DrugEncoder(ParamStore& store, const DrugEncoderConfig& cfg, CounterRng& rng) : cfg_(cfg) {
  if (cfg.d % cfg.heads != 0) throw UsageError("drug encoder: d must be divisible by heads");
  if (cfg.use_global && cfg.d % 2 != 0) throw UsageError("drug encoder: d must be even for the BiLSTM");
  const std::size_t d = cfg.d;
  embed1 = nn::Linear(store, "drug.embed.0", 43, d, rng);
  embed2 = nn::Linear(store, "drug.embed.1", d, d, rng);
  embed_norm = nn::LayerNorm(store, "drug.embed.norm", d);
  if (cfg.use_global) {
    const std::size_t h = d / 2;
    lstm_in_fwd = nn::Linear(store, "drug.lstm.fwd.ih", d, 4 * h, rng, true, nn::Init::Orthogonal);
    lstm_hh_fwd = store.add_param("drug.lstm.fwd.hh", init::orthogonal(h, 4 * h, rng));
    lstm_in_bwd = nn::Linear(store, "drug.lstm.bwd.ih", d, 4 * h, rng, true, nn::Init::Orthogonal);
    lstm_hh_bwd = store.add_param("drug.lstm.bwd.hh", init::orthogonal(h, 4 * h, rng));
  }
  if (cfg.use_local) {
    for (std::size_t l = 0; l < cfg.layers; ++l)
      pna.emplace_back(store, "drug.pna." + std::to_string(l), d, 5, rng);
  }
  fuse = nn::PathFusion(store, "drug.fuse", d, rng);
  sub_proj = nn::Linear(store, "drug.sub.proj", d, d, rng, false);
  type_embedding = store.add_param("drug.sub.type_embedding", init::normal({512, d}, 0.02, rng));
  const std::size_t dh = d / cfg.heads;
  for (std::size_t i = 0; i < cfg.heads; ++i)
    head_scorers.emplace_back(store, "drug.attn." + std::to_string(i), std::vector<std::size_t>{dh, dh, 1}, rng);
  stats_ = store.add_buffer("drug.pna.degree_stats", Tensor::from({2}, {1.0, 1.0}));
}

nn::DegreeStats DrugEncoder::degree_stats() const { return {stats_[0], stats_[1]}; }

void DrugEncoder::set_degree_stats(const nn::DegreeStats& stats) {
  stats_.mutable_data()[0] = stats.log_delta;
  stats_.mutable_data()[1] = stats.lin_delta;
}

Tensor DrugEncoder::embed(const Tensor& atom_features) const {
  if (atom_features.rank() != 2 || atom_features.dim(1) != 43)
    throw DimensionError("drug embed: expected [N, 43] atom features, got " + shape_str(atom_features.shape()));
  return embed_norm(relu(embed2(relu(embed1(atom_features)))));
}

Tensor DrugEncoder::bilstm(const Tensor& h, const DrugBatch& batch) const {
  for (auto len : batch.lengths)
    if (len == 0) throw UsageError("bilstm: empty molecule in batch");
  const std::size_t B = batch.num_mols, T = batch.max_atoms, d = cfg_.d;
  Tensor dense = reshape(gather_rows(h, batch.dense_atoms), {B, T, d});
  Tensor fwd = lstm_scan(lstm_in_fwd(dense), lstm_hh_fwd, batch.lengths, false);
  Tensor bwd = lstm_scan(lstm_in_bwd(dense), lstm_hh_bwd, batch.lengths, true);
  Tensor both = reshape(concat({fwd, bwd}, 2), {B * T, d});
  return gather_rows(both, batch.flat_atoms);
}

Tensor DrugEncoder::mpnn(const Tensor& h, const DrugBatch& batch) const {
  const nn::DegreeStats stats = degree_stats();
  Tensor x = h;
  for (const auto& layer : pna) x = layer(x, batch.edges, stats);
  return x;
}

Tensor DrugEncoder::substructures(const Tensor& h_atom, const DrugBatch& batch) const {
  Tensor pooled = segment_mean(gather_rows(h_atom, batch.member_atom), batch.member_cluster, batch.num_clusters);
  return add(gather_rows(type_embedding, batch.cluster_type), relu(sub_proj(pooled)));
}

std::pair<Tensor, Tensor> DrugEncoder::attend(const Tensor& h_sub, const DrugBatch& batch,
                                              const nn::ForwardMode& mode) const {
  const std::size_t C = h_sub.dim(0), heads = cfg_.heads, dh = cfg_.d / heads;
  std::vector<Tensor> scores;
  for (std::size_t i = 0; i < heads; ++i) scores.push_back(head_scorers[i](narrow(h_sub, 1, i * dh, dh)));
  Tensor s = dropout(concat(scores, 1), cfg_.dropout, mode.train, mode.site(1));
  Tensor alpha = segment_softmax(s, batch.cluster_mol, batch.num_mols);  // [C, heads]
  Tensor weighted = mul(reshape(h_sub, {C, heads, dh}), reshape(alpha, {C, heads, 1}));
  Tensor mol = segment_sum(reshape(weighted, {C, cfg_.d}), batch.cluster_mol, batch.num_mols);
  return {mol, alpha};
}

DrugScales DrugEncoder::operator()(const DrugBatch& batch, const nn::ForwardMode& mode) const {
  Tensor h = embed(batch.x);
  Tensor global = cfg_.use_global ? bilstm(h, batch) : Tensor::zeros({batch.num_atoms, cfg_.d});
  Tensor local = cfg_.use_local ? mpnn(h, batch) : Tensor::zeros({batch.num_atoms, cfg_.d});
  DrugScales out;
  out.atom = fuse(local, global);
  out.sub = substructures(out.atom, batch);
  auto [mol, alpha] = attend(out.sub, batch, mode);
  out.mol = mol;
  out.sub_attention = alpha;
  return out;
}

}  // namespace hifdta
