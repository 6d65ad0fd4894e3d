#pragma once

// The full affinity model: drug and protein encoders, cross-scale fusion and
// the pooled regression head, plus pair batching and the training loss.

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "hifdta/drug_encoder.hpp"
#include "hifdta/fusion.hpp"
#include "hifdta/predictor.hpp"
#include "hifdta/protein_encoder.hpp"

namespace hifdta {

struct ModelConfig {
  std::size_t d = 200;
  std::size_t drug_heads = 4;
  std::size_t fusion_heads = 4;
  std::size_t fusion_rank = 1;
  std::size_t layers = 3;
  std::size_t ssm_state = 16;
  std::vector<std::size_t> clusters{20, 10, 5};
  double dropout = 0.2;
  bool drug_global = true, drug_local = true;
  bool prot_global = true, prot_local = true;
  std::array<bool, kNumScales> scales{true, true, true};
  FusionStrategy fusion = FusionStrategy::Gated;
  protein::ContactGraphOptions contacts;
};

// Samples of one minibatch. Drugs and proteins are encoded once per distinct
// entry and the per-sample slots point into those unique batches.
struct PairBatch {
  DrugBatch drugs;
  ProteinBatch proteins;
  Index drug_slot, protein_slot;
  std::vector<double> labels;
  std::size_t size() const { return drug_slot.size(); }
};

PairBatch make_pair_batch(const std::vector<const DrugGraph*>& drugs, const std::vector<const ProteinGraph*>& proteins,
                          const std::vector<double>& labels, const protein::PhyschemStats& stats,
                          const protein::ContactGraphOptions& options);

struct ModelOutput {
  Tensor prediction;  // [B]
  Tensor aux_loss;    // scalar
  Tensor protein_attention;  // [B, T]
  Tensor drug_attention;     // [B, Na]
  FusionOutput fusion;
};

class HifDta {
 public:
  HifDta(const ModelConfig& cfg, std::uint64_t seed);
  HifDta(const HifDta&) = delete;
  HifDta& operator=(const HifDta&) = delete;

  ModelOutput forward(const PairBatch& batch, const nn::ForwardMode& mode) const;

  const ModelConfig& config() const { return cfg_; }
  ParamStore& store() { return store_; }
  const ParamStore& store() const { return store_; }

  // Training-set statistics carried in checkpoint buffers.
  protein::PhyschemStats physchem() const;
  void set_physchem(const protein::PhyschemStats& stats);
  void fit_degree_stats(const std::vector<const DrugGraph*>& drugs, const std::vector<const ProteinGraph*>& proteins);

  // Raises FormatError when the checkpoint was written for another architecture.
  void load(const std::string& path);
  void save(const std::string& path) const;

 private:
  ModelConfig cfg_;
  ParamStore store_;
  Tensor physchem_;  // [2, 12]: mean, std

 public:
  DrugEncoder drug;
  ProteinEncoder protein;
  Fusion fusion;
  Predictor predictor;
};

// MSE(prediction, labels) + lambda * aux.
Tensor affinity_loss(const ModelOutput& out, const std::vector<double>& labels, double lambda_aux);

// Per-sample rows from the unique-entity layout: rows [U * n] -> [B, n, ...].
Tensor gather_slots(const Tensor& unique, const Index& slot, std::size_t per_entity);

}  // namespace hifdta
