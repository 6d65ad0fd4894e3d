#include "hifdta/protein_encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hifdta/errors.hpp"
#include "hifdta/sequence.hpp"

namespace hifdta {

std::vector<std::size_t> degree_sort(const std::vector<std::size_t>& protein_of_node,
                                     const std::vector<std::size_t>& degree) {
  std::vector<std::size_t> order(protein_of_node.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (protein_of_node[a] != protein_of_node[b]) return protein_of_node[a] < protein_of_node[b];
    return degree[a] < degree[b];
  });
  return order;
}

ProteinBatch collate_proteins(const std::vector<const ProteinGraph*>& proteins, const protein::PhyschemStats& stats,
                              const protein::ContactGraphOptions& options) {
  using namespace protein;
  ProteinBatch b;
  b.num_proteins = proteins.size();
  for (const auto* p : proteins) {
    if (p->length() == 0) throw FormatError("protein " + p->id + " has no residues");
    b.max_len = std::max(b.max_len, p->length());
    b.num_nodes += p->length();
  }
  const std::size_t N = b.num_nodes, P = b.num_proteins, T = b.max_len;
  std::vector<double> x(N * kResidueInputDim, 0.0);
  b.dense.assign(P * T, -1);
  b.dense_sorted.assign(P * T, -1);
  b.mask.assign(P * T, 0);
  b.unsort.assign(N, -1);
  std::vector<std::size_t> protein_of_node(N), degree(N, 0);
  std::vector<std::size_t> rows, cols;
  std::vector<double> edge_features;
  std::size_t base = 0;
  for (std::size_t pi = 0; pi < P; ++pi) {
    const ProteinGraph& p = *proteins[pi];
    const std::size_t R = p.length();
    if (p.esm.size() != R * kEmbeddingDim) throw FormatError("protein " + p.id + ": embedding size mismatch");
    b.lengths.push_back(R);
    for (std::size_t t = 0; t < R; ++t) {
      const std::size_t node = base + t;
      double* row = x.data() + node * kResidueInputDim;
      for (std::size_t c = 0; c < kEmbeddingDim; ++c) row[c] = p.esm[t * kEmbeddingDim + c];
      row[kEmbeddingDim + p.residues[t]] = 1.0;
      const auto& pc = physchem_row(p.residues[t]);
      for (std::size_t k = 0; k < kPhyschemDim; ++k)
        row[kEmbeddingDim + kAlphabetSize + k] = (pc[k] - stats.mean[k]) / stats.stddev[k];
      b.node_protein.push_back(static_cast<std::int64_t>(pi));
      protein_of_node[node] = pi;
      b.dense[pi * T + t] = static_cast<std::int64_t>(node);
      b.mask[pi * T + t] = 1;
    }
    for (std::size_t e = 0; e < p.contacts.edges.size(); ++e) {
      const auto [i, j] = p.contacts.edges[e];
      const auto rbf = rbf_features(p.contacts.prob[e], options);
      for (auto [s, t] : {std::pair{i, j}, std::pair{j, i}}) {
        b.edges.src.push_back(static_cast<std::int64_t>(base + s));
        b.edges.dst.push_back(static_cast<std::int64_t>(base + t));
        edge_features.insert(edge_features.end(), rbf.begin(), rbf.end());
        rows.push_back(base + s);
        cols.push_back(base + t);
      }
      ++degree[base + i];
      ++degree[base + j];
    }
    base += R;
  }
  b.x = Tensor::from({N, kResidueInputDim}, std::move(x));
  b.edges.num_nodes = N;
  b.edges.degree.assign(degree.begin(), degree.end());
  b.edges.features = Tensor::from({b.edges.src.size(), kRbfDim}, std::move(edge_features));
  b.contact_degree = b.edges.degree;

  const auto order = degree_sort(protein_of_node, degree);
  std::vector<std::size_t> slot(P, 0);
  for (std::size_t node : order) {
    const std::size_t pi = protein_of_node[node];
    const std::size_t pos = pi * T + slot[pi]++;
    b.dense_sorted[pos] = static_cast<std::int64_t>(node);
    b.unsort[node] = static_cast<std::int64_t>(pos);
  }

  std::vector<double> ones(rows.size(), 1.0);
  b.adjacency = SparseOperator::make(kernels::Csr::from_triplets(N, N, rows, cols, ones));
  std::vector<std::size_t> gr = rows, gc = cols;
  std::vector<double> gv;
  for (std::size_t i = 0; i < N; ++i) {
    gr.push_back(i);
    gc.push_back(i);
  }
  gv.reserve(gr.size());
  for (std::size_t e = 0; e < gr.size(); ++e)
    gv.push_back(1.0 / std::sqrt((degree[gr[e]] + 1.0) * (degree[gc[e]] + 1.0)));
  b.gcn = SparseOperator::make(kernels::Csr::from_triplets(N, N, gr, gc, gv));
  return b;
}

SsmLayer::SsmLayer(ParamStore& store, const std::string& name, std::size_t d, std::size_t state, CounterRng& rng) {
  delta = nn::Linear(store, name + ".delta", d, d, rng, true, nn::Init::Orthogonal);
  b_proj = nn::Linear(store, name + ".B", d, state, rng, false, nn::Init::Orthogonal);
  c_proj = nn::Linear(store, name + ".C", d, state, rng, false, nn::Init::Orthogonal);
  std::vector<double> a(d * state);
  for (std::size_t c = 0; c < d; ++c)
    for (std::size_t s = 0; s < state; ++s) a[c * state + s] = std::log(static_cast<double>(s + 1));
  a_log = store.add_param(name + ".A_log", Tensor::from({d, state}, std::move(a)));
  d_skip = store.add_param(name + ".D", Tensor::full({d}, 1.0));
}

Tensor SsmLayer::operator()(const Tensor& h, const Mask& mask) const {
  return ssm_scan(h, softplus(delta(h)), b_proj(h), c_proj(h), neg(exp(a_log)), d_skip, mask);
}

MincutLevel::MincutLevel(ParamStore& store, const std::string& name, std::size_t d, std::size_t cl, CounterRng& rng)
    : clusters(cl) {
  gcn1 = nn::Linear(store, name + ".gcn1", d, d, rng);
  gcn2 = nn::Linear(store, name + ".gcn2", d, cl, rng);
}

namespace {

Tensor identity_matrix(std::size_t n, double value = 1.0) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = value;
  return Tensor::from({n, n}, std::move(v));
}

// Per-batch sum of every entry of a [P, ...] tensor -> [P].
Tensor per_batch_sum(const Tensor& t) { return sum_axis(reshape(t, {t.dim(0), t.numel() / t.dim(0)}), 1); }

// Zero the diagonal and apply D^-1/2 A D^-1/2.
Tensor renormalize(const Tensor& a) {
  const std::size_t P = a.dim(0), n = a.dim(1);
  Tensor off = mul(a, sub(Tensor::full({n, n}, 1.0), identity_matrix(n)));
  Tensor inv = ratio_or_zero(Tensor::full({P, n}, 1.0), sqrt(sum_axis(off, 2)));
  return mul(mul(off, reshape(inv, {P, n, 1})), reshape(inv, {P, 1, n}));
}

}  // namespace

// || M^T M / ||M^T M||_F - I / sqrt(cl) ||_F, averaged over the batch.
Tensor mincut_ortho_loss(const Tensor& m) {
  const std::size_t P = m.dim(0), cl = m.dim(2);
  Tensor mtm = bmm(m, m, true, false);
  Tensor fro = reshape(sqrt(per_batch_sum(square(mtm))), {P, 1, 1});
  Tensor diff = sub(div(mtm, fro), identity_matrix(cl, 1.0 / std::sqrt(static_cast<double>(cl))));
  return mean(sqrt(per_batch_sum(square(diff))));
}

Tensor mincut_cut_loss(const Tensor& m, const Tensor& adjacency) {
  const std::size_t P = m.dim(0), n = m.dim(1);
  Tensor cut_num = per_batch_sum(mul(m, bmm(adjacency, m)));
  Tensor deg = reshape(sum_axis(adjacency, 2), {P, n, 1});
  Tensor cut_den = per_batch_sum(mul(square(m), deg));
  return neg(mean(ratio_or_zero(cut_num, cut_den)));
}

ClusterLevel MincutLevel::sparse(const Tensor& x, const ProteinBatch& batch) const {
  const std::size_t P = batch.num_proteins, T = batch.max_len, d = x.dim(1), cl = clusters;
  Tensor h = relu(add(spmm(batch.gcn, linear(x, gcn1.w, nullptr)), gcn1.b));
  Tensor logits = add(spmm(batch.gcn, linear(h, gcn2.w, nullptr)), gcn2.b);
  Tensor m_flat = softmax(logits, 1);
  ClusterLevel out;
  out.assignment = reshape(gather_rows(m_flat, batch.dense), {P, T, cl});
  Tensor x_dense = reshape(gather_rows(x, batch.dense), {P, T, d});
  out.features = bmm(out.assignment, x_dense, true, false);
  Tensor am = reshape(gather_rows(spmm(batch.adjacency, m_flat), batch.dense), {P, T, cl});
  Tensor pooled_adj = bmm(out.assignment, am, true, false);

  Tensor cut_num = per_batch_sum(mul(out.assignment, am));
  Tensor deg = Tensor::from({batch.num_nodes, 1}, batch.contact_degree);
  Tensor cut_den = sum_axis(segment_sum(mul(square(m_flat), deg), batch.node_protein, P), 1);
  out.cut_loss = neg(mean(ratio_or_zero(cut_num, cut_den)));
  out.ortho_loss = mincut_ortho_loss(out.assignment);
  out.adjacency = renormalize(pooled_adj);
  return out;
}

ClusterLevel MincutLevel::dense(const Tensor& x, const Tensor& adjacency) const {
  const std::size_t P = x.dim(0), n = x.dim(1);
  Tensor with_loops = add(adjacency, identity_matrix(n));
  Tensor inv = div(Tensor::full({P, n}, 1.0), sqrt(sum_axis(with_loops, 2)));
  Tensor a_hat = mul(mul(with_loops, reshape(inv, {P, n, 1})), reshape(inv, {P, 1, n}));
  Tensor h = relu(add(bmm(a_hat, linear(x, gcn1.w, nullptr)), gcn1.b));
  Tensor logits = add(bmm(a_hat, linear(h, gcn2.w, nullptr)), gcn2.b);
  ClusterLevel out;
  out.assignment = softmax(logits, 2);
  out.features = bmm(out.assignment, x, true, false);
  Tensor pooled_adj = bmm(out.assignment, bmm(adjacency, out.assignment), true, false);
  out.cut_loss = mincut_cut_loss(out.assignment, adjacency);
  out.ortho_loss = mincut_ortho_loss(out.assignment);
  out.adjacency = renormalize(pooled_adj);
  return out;
}

ProteinEncoder::ProteinEncoder(ParamStore& store, const ProteinEncoderConfig& cfg, CounterRng& rng) : cfg_(cfg) {
  if (cfg.clusters.empty()) throw UsageError("protein encoder: at least one cluster level required");
  const std::size_t d = cfg.d;
  input_proj = nn::Linear(store, "prot.input", protein::kResidueInputDim, d, rng);
  if (cfg.use_global) ssm = SsmLayer(store, "prot.ssm", d, cfg.ssm_state, rng);
  if (cfg.use_local)
    for (std::size_t l = 0; l < cfg.layers; ++l)
      pna.emplace_back(store, "prot.pna." + std::to_string(l), d, protein::kRbfDim, rng);
  fuse = nn::PathFusion(store, "prot.fuse", d, rng);
  for (std::size_t l = 0; l < cfg.clusters.size(); ++l)
    mincut.emplace_back(store, "prot.mincut." + std::to_string(l), d, cfg.clusters[l], rng);
  stats_ = store.add_buffer("prot.pna.degree_stats", Tensor::from({2}, {1.0, 1.0}));
}

nn::DegreeStats ProteinEncoder::degree_stats() const { return {stats_[0], stats_[1]}; }

void ProteinEncoder::set_degree_stats(const nn::DegreeStats& stats) {
  stats_.mutable_data()[0] = stats.log_delta;
  stats_.mutable_data()[1] = stats.lin_delta;
}

Tensor ProteinEncoder::project(const ProteinBatch& batch) const { return input_proj(batch.x); }

Tensor ProteinEncoder::global_path(const Tensor& h, const ProteinBatch& batch) const {
  const std::size_t P = batch.num_proteins, T = batch.max_len, d = cfg_.d;
  Mask sorted_mask(P * T, 0);
  for (std::size_t i = 0; i < P * T; ++i) sorted_mask[i] = batch.dense_sorted[i] >= 0;
  Tensor dense = reshape(gather_rows(h, batch.dense_sorted), {P, T, d});
  Tensor y = ssm(dense, sorted_mask);
  return gather_rows(reshape(y, {P * T, d}), batch.unsort);
}

Tensor ProteinEncoder::local_path(const Tensor& h, const ProteinBatch& batch) const {
  const nn::DegreeStats stats = degree_stats();
  Tensor x = h;
  for (const auto& layer : pna) x = layer(x, batch.edges, stats);
  return x;
}

ProteinEncoding ProteinEncoder::operator()(const ProteinBatch& batch) const {
  const std::size_t P = batch.num_proteins, T = batch.max_len, d = cfg_.d;
  Tensor h = project(batch);
  Tensor global = cfg_.use_global ? global_path(h, batch) : Tensor::zeros({batch.num_nodes, d});
  Tensor local = cfg_.use_local ? local_path(h, batch) : Tensor::zeros({batch.num_nodes, d});
  ProteinEncoding out;
  out.residue = fuse(local, global);
  out.residue_dense = reshape(gather_rows(out.residue, batch.dense), {P, T, d});
  out.levels.push_back(mincut[0].sparse(out.residue, batch));
  for (std::size_t l = 1; l < mincut.size(); ++l)
    out.levels.push_back(mincut[l].dense(out.levels.back().features, out.levels.back().adjacency));
  out.composed_assignment = out.levels[0].assignment;
  out.aux_loss = add(out.levels[0].cut_loss, out.levels[0].ortho_loss);
  for (std::size_t l = 1; l < out.levels.size(); ++l) {
    out.composed_assignment = bmm(out.composed_assignment, out.levels[l].assignment);
    out.aux_loss = add(out.aux_loss, add(out.levels[l].cut_loss, out.levels[l].ortho_loss));
  }
  return out;
}

}  // namespace hifdta
