#include "hifdta/predictor.hpp"

#include "hifdta/errors.hpp"

namespace hifdta {

Predictor::Predictor(ParamStore& store, const PredictorConfig& cfg, CounterRng& rng) : cfg_(cfg) {
  const std::size_t d = cfg.d;
  cluster_scorer = nn::Linear(store, "pred.cluster_scorer", d, 1, rng);
  protein_mlp = nn::Mlp(store, "pred.protein_mlp", {d, d, d}, rng);
  atom_scorer = nn::Mlp(store, "pred.atom_scorer", {3 * d, d, 1}, rng);
  drug_mlp = nn::Mlp(store, "pred.drug_mlp", {d, d, d}, rng);
  head1 = nn::Linear(store, "pred.head.0", 2 * d, d, rng);
  head2 = nn::Linear(store, "pred.head.1", d, d / 2, rng);
  head3 = nn::Linear(store, "pred.head.2", d / 2, 1, rng);
}

Tensor Predictor::protein_pool(const Tensor& clusters, const Tensor& composed, const Tensor& residues,
                               const Mask& mask, Tensor* attention) const {
  const std::size_t B = residues.dim(0), T = residues.dim(1), d = residues.dim(2);
  if (composed.dim(0) != B || composed.dim(1) != T || composed.dim(2) != clusters.dim(1))
    throw DimensionError("protein_pool: assignment " + shape_str(composed.shape()) + " vs clusters " +
                         shape_str(clusters.shape()) + " and residues " + shape_str(residues.shape()));
  Tensor w = cluster_scorer(clusters);                        // [B, K, 1]
  Tensor scores = reshape(bmm(composed, w), {B, T});
  Tensor a = softmax(scores, 1, &mask);
  if (attention) *attention = a;
  Tensor pooled = reshape(bmm(reshape(a, {B, 1, T}), residues), {B, d});
  return protein_mlp(pooled);
}

Tensor Predictor::drug_pool(const Tensor& atoms, const Tensor& subs, const Tensor& mol,
                            const std::vector<std::int64_t>& atom_sub, const Mask& mask, Tensor* attention) const {
  const std::size_t B = atoms.dim(0), Na = atoms.dim(1), Nc = subs.dim(1), d = atoms.dim(2);
  if (atom_sub.size() != B * Na || mask.size() != B * Na)
    throw DimensionError("drug_pool: atom map does not match " + shape_str(atoms.shape()));
  Index sub_rows(B * Na, -1), mol_rows(B * Na, -1);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < Na; ++t) {
      const std::size_t i = b * Na + t;
      if (!mask[i]) continue;
      if (atom_sub[i] >= 0) sub_rows[i] = static_cast<std::int64_t>(b * Nc) + atom_sub[i];
      mol_rows[i] = static_cast<std::int64_t>(b);
    }
  Tensor sub_of_atom = gather_rows(reshape(subs, {B * Nc, d}), sub_rows);
  Tensor mol_of_atom = gather_rows(mol, mol_rows);
  Tensor feats = concat({reshape(atoms, {B * Na, d}), sub_of_atom, mol_of_atom}, 1);
  Tensor a = softmax(reshape(atom_scorer(feats), {B, Na}), 1, &mask);
  if (attention) *attention = a;
  Tensor pooled = reshape(bmm(reshape(a, {B, 1, Na}), atoms), {B, d});
  return drug_mlp(pooled);
}

Tensor Predictor::head(const Tensor& p, const Tensor& q, const nn::ForwardMode& mode) const {
  Tensor h = dropout(relu(head1(concat({p, q}, 1))), cfg_.dropout, mode.train, mode.site(3001));
  h = dropout(relu(head2(h)), cfg_.dropout, mode.train, mode.site(3002));
  Tensor y = head3(h);
  return reshape(y, {y.dim(0)});
}

void Predictor::set_output_bias(double value) { head3.b.mutable_data()[0] = value; }

}  // namespace hifdta
