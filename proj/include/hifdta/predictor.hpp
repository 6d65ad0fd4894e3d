#pragma once

// Attentive pooling on both sides and the affinity regression head.

#include <cstddef>

#include "hifdta/nn.hpp"

namespace hifdta {

struct PredictorConfig {
  std::size_t d = 200;
  double dropout = 0.2;
};

class Predictor {
 public:
  Predictor(ParamStore& store, const PredictorConfig& cfg, CounterRng& rng);

  // clusters [B, K, d], composed assignment [B, T, K], residues [B, T, d],
  // residue mask [B * T]. Returns p [B, d]; `attention` receives [B, T].
  Tensor protein_pool(const Tensor& clusters, const Tensor& composed, const Tensor& residues, const Mask& mask,
                      Tensor* attention = nullptr) const;

  // atoms [B, Na, d], subs [B, Nc, d], mol [B, d]. atom_sub holds the
  // molecule-local cluster of each atom slot (-1 for padding).
  Tensor drug_pool(const Tensor& atoms, const Tensor& subs, const Tensor& mol, const std::vector<std::int64_t>& atom_sub,
                   const Mask& mask, Tensor* attention = nullptr) const;

  // [B] affinities, no output activation.
  Tensor head(const Tensor& p, const Tensor& q, const nn::ForwardMode& mode) const;

  // Starts the regression at the label mean.
  void set_output_bias(double value);

  nn::Linear cluster_scorer;
  nn::Mlp protein_mlp;
  nn::Mlp atom_scorer;
  nn::Mlp drug_mlp;
  nn::Linear head1, head2, head3;

 private:
  PredictorConfig cfg_;
};

}  // namespace hifdta
