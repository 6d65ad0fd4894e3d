#include "hifdta/model.hpp"

#include <map>

#include "hifdta/errors.hpp"

namespace hifdta {
namespace {

DrugEncoderConfig drug_config(const ModelConfig& c) {
  DrugEncoderConfig out;
  out.d = c.d;
  out.heads = c.drug_heads;
  out.layers = c.layers;
  out.dropout = c.dropout;
  out.use_global = c.drug_global;
  out.use_local = c.drug_local;
  return out;
}

ProteinEncoderConfig protein_config(const ModelConfig& c) {
  ProteinEncoderConfig out;
  out.d = c.d;
  out.layers = c.layers;
  out.ssm_state = c.ssm_state;
  out.clusters = c.clusters;
  out.use_global = c.prot_global;
  out.use_local = c.prot_local;
  return out;
}

FusionConfig fusion_config(const ModelConfig& c) {
  FusionConfig out;
  out.d = c.d;
  out.heads = c.fusion_heads;
  out.rank = c.fusion_rank;
  out.scales = c.scales;
  out.strategy = c.fusion;
  return out;
}

// Each submodule draws its initial weights from its own stream.
CounterRng& as_lvalue(CounterRng&& rng) { return rng; }

template <typename T>
Index dedup(const std::vector<const T*>& items, std::vector<const T*>& unique) {
  std::map<const T*, std::int64_t> seen;
  Index slot;
  slot.reserve(items.size());
  for (const T* item : items) {
    auto [it, inserted] = seen.emplace(item, static_cast<std::int64_t>(unique.size()));
    if (inserted) unique.push_back(item);
    slot.push_back(it->second);
  }
  return slot;
}

template <typename V>
V replicate(const V& per_entity, const Index& slot, std::size_t n) {
  V out;
  out.reserve(slot.size() * n);
  for (std::int64_t s : slot)
    out.insert(out.end(), per_entity.begin() + s * static_cast<std::int64_t>(n),
               per_entity.begin() + (s + 1) * static_cast<std::int64_t>(n));
  return out;
}

// Architecture fingerprint stored alongside the weights.
std::vector<double> meta_values(const ModelConfig& c) {
  std::vector<double> v{static_cast<double>(c.d),           static_cast<double>(c.drug_heads),
                        static_cast<double>(c.fusion_heads), static_cast<double>(c.fusion_rank),
                        static_cast<double>(c.layers),      static_cast<double>(c.ssm_state),
                        static_cast<double>(c.drug_global), static_cast<double>(c.drug_local),
                        static_cast<double>(c.prot_global), static_cast<double>(c.prot_local),
                        static_cast<double>(c.fusion)};
  for (bool s : c.scales) v.push_back(s);
  for (std::size_t k : c.clusters) v.push_back(static_cast<double>(k));
  return v;
}

constexpr const char* kMetaNames[] = {"d",           "drug_heads", "fusion_heads", "fusion_rank",
                                      "layers",      "ssm_state",  "drug_global",  "drug_local",
                                      "prot_global", "prot_local", "fusion"};

}  // namespace

Tensor gather_slots(const Tensor& unique, const Index& slot, std::size_t per_entity) {
  Shape per(unique.shape());
  per.erase(per.begin());
  Shape grouped{unique.dim(0) / per_entity, per_entity};
  grouped.insert(grouped.end(), per.begin(), per.end());
  return gather_rows(reshape(unique, grouped), slot);
}

PairBatch make_pair_batch(const std::vector<const DrugGraph*>& drugs, const std::vector<const ProteinGraph*>& proteins,
                          const std::vector<double>& labels, const protein::PhyschemStats& stats,
                          const protein::ContactGraphOptions& options) {
  if (drugs.size() != proteins.size() || drugs.size() != labels.size())
    throw DimensionError("pair batch: drug, protein and label counts differ");
  if (drugs.empty()) throw UsageError("pair batch: empty batch");
  PairBatch b;
  std::vector<const DrugGraph*> ud;
  std::vector<const ProteinGraph*> up;
  b.drug_slot = dedup(drugs, ud);
  b.protein_slot = dedup(proteins, up);
  b.drugs = collate_drugs(ud);
  b.proteins = collate_proteins(up, stats, options);
  b.labels = labels;
  return b;
}

HifDta::HifDta(const ModelConfig& cfg, std::uint64_t seed)
    : cfg_(cfg),
      drug(store_, drug_config(cfg), as_lvalue(CounterRng(seed, 1))),
      protein(store_, protein_config(cfg), as_lvalue(CounterRng(seed, 2))),
      fusion(store_, fusion_config(cfg), as_lvalue(CounterRng(seed, 3))),
      predictor(store_, PredictorConfig{cfg.d, cfg.dropout}, as_lvalue(CounterRng(seed, 4))) {
  std::vector<double> meta = meta_values(cfg);
  store_.add_buffer("meta.architecture", Tensor::from({meta.size()}, meta));
  std::vector<double> ps(2 * protein::kPhyschemDim, 0.0);
  for (std::size_t j = 0; j < protein::kPhyschemDim; ++j) ps[protein::kPhyschemDim + j] = 1.0;
  physchem_ = store_.add_buffer("meta.physchem", Tensor::from({2, protein::kPhyschemDim}, ps));
}

protein::PhyschemStats HifDta::physchem() const {
  protein::PhyschemStats s;
  for (std::size_t j = 0; j < protein::kPhyschemDim; ++j) {
    s.mean[j] = physchem_[j];
    s.stddev[j] = physchem_[protein::kPhyschemDim + j];
  }
  return s;
}

void HifDta::set_physchem(const protein::PhyschemStats& stats) {
  auto v = physchem_.mutable_data();
  for (std::size_t j = 0; j < protein::kPhyschemDim; ++j) {
    v[j] = stats.mean[j];
    v[protein::kPhyschemDim + j] = stats.stddev[j];
  }
}

void HifDta::fit_degree_stats(const std::vector<const DrugGraph*>& drugs,
                              const std::vector<const ProteinGraph*>& proteins) {
  std::vector<std::size_t> deg;
  for (const DrugGraph* g : drugs) {
    std::vector<std::size_t> d(g->num_atoms, 0);
    for (auto [a, b] : g->bonds) ++d[a], ++d[b];
    deg.insert(deg.end(), d.begin(), d.end());
  }
  drug.set_degree_stats(nn::DegreeStats::fit(deg));
  deg.clear();
  for (const ProteinGraph* p : proteins) {
    std::vector<std::size_t> d(p->length(), 0);
    for (auto [a, b] : p->contacts.edges) ++d[a], ++d[b];
    deg.insert(deg.end(), d.begin(), d.end());
  }
  protein.set_degree_stats(nn::DegreeStats::fit(deg));
}

void HifDta::save(const std::string& path) const { save_checkpoint(path, store_); }

void HifDta::load(const std::string& path) {
  auto stored = read_checkpoint(path);
  auto it = stored.find("meta.architecture");
  if (it == stored.end()) throw FormatError("checkpoint " + path + " has no architecture record");
  const std::vector<double> want = meta_values(cfg_);
  const auto& have = it->second.values();
  for (std::size_t i = 0; i < std::size(kMetaNames); ++i) {
    if (i >= have.size() || have[i] != want[i])
      throw FormatError("checkpoint " + path + " was written for " + kMetaNames[i] + "=" +
                        (i < have.size() ? std::to_string(static_cast<long long>(have[i])) : "?") +
                        " but the config has " + std::to_string(static_cast<long long>(want[i])));
  }
  if (have != want) throw FormatError("checkpoint " + path + " architecture (scales or cluster sizes) differs");
  load_checkpoint(path, store_);
}

ModelOutput HifDta::forward(const PairBatch& batch, const nn::ForwardMode& mode) const {
  const DrugBatch& db = batch.drugs;
  const ProteinBatch& pb = batch.proteins;
  const std::size_t B = batch.size(), d = cfg_.d;

  DrugScales ds = drug(db, mode);
  ProteinEncoding pe = protein(pb);

  DrugScaleInputs inputs;
  inputs.features[0] = gather_slots(gather_rows(ds.atom, db.dense_atoms), batch.drug_slot, db.max_atoms);
  inputs.features[1] = gather_slots(gather_rows(ds.sub, db.dense_clusters), batch.drug_slot, db.max_clusters);
  inputs.features[2] = reshape(gather_rows(ds.mol, batch.drug_slot), {B, 1, d});
  inputs.masks[0] = replicate(db.atom_mask, batch.drug_slot, db.max_atoms);
  inputs.masks[1] = replicate(db.cluster_mask, batch.drug_slot, db.max_clusters);
  inputs.masks[2] = Mask(B, 1);

  const ClusterLevel& top = pe.levels.back();
  Tensor clusters = gather_rows(top.features, batch.protein_slot);
  Tensor composed = gather_rows(pe.composed_assignment, batch.protein_slot);
  Tensor residues = gather_rows(pe.residue_dense, batch.protein_slot);
  Mask residue_mask = replicate(pb.mask, batch.protein_slot, pb.max_len);

  ModelOutput out;
  out.fusion = fusion(inputs, clusters);
  Tensor p = predictor.protein_pool(out.fusion.clusters, composed, residues, residue_mask, &out.protein_attention);
  Tensor q = predictor.drug_pool(out.fusion.drug[0], out.fusion.drug[1], reshape(out.fusion.drug[2], {B, d}),
                                 replicate(db.dense_first_cluster, batch.drug_slot, db.max_atoms), inputs.masks[0],
                                 &out.drug_attention);
  out.prediction = predictor.head(p, q, mode);
  out.aux_loss = pe.aux_loss;
  return out;
}

Tensor affinity_loss(const ModelOutput& out, const std::vector<double>& labels, double lambda_aux) {
  Tensor y = Tensor::from({labels.size()}, labels);
  Tensor loss = mean(square(sub(out.prediction, y)));
  if (lambda_aux != 0.0) loss = add(loss, scale(out.aux_loss, lambda_aux));
  return loss;
}

}  // namespace hifdta
