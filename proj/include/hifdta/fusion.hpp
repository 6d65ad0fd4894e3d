#pragma once

// Multi-head bilinear cross-attention between residue clusters and each
// drug scale, with residual updates on both sides and scale combination.

#include <array>
#include <cstddef>
#include <vector>

#include "hifdta/nn.hpp"

namespace hifdta {

enum class FusionStrategy { Gated, Concat, Add };

struct BilinearAttention {
  struct Head {
    nn::Linear proj_v, proj_r;  // d -> d * k, bias-free
    Tensor channel;             // [d * k]
    Tensor bias;                // [1]
  };
  std::vector<Head> heads;

  BilinearAttention() = default;
  BilinearAttention(ParamStore& store, const std::string& name, std::size_t d, std::size_t heads, std::size_t k,
                    CounterRng& rng);

  // S for one head: [B, Nv, Nr].
  Tensor scores(std::size_t head, const Tensor& v, const Tensor& r) const;

  struct Result {
    Tensor r_tilde;  // [B, Nr, d]
    Tensor v_tilde;  // [B, Nv, d]
    std::vector<Tensor> alpha;  // per head, normalised over v
    std::vector<Tensor> beta;   // per head, normalised over r
  };
  // v_mask marks valid drug slots ([B * Nv]); all residue clusters are valid.
  Result operator()(const Tensor& v, const Mask& v_mask, const Tensor& r) const;
};

// Scale order is atom, substructure, molecule.
inline constexpr std::size_t kNumScales = 3;

struct FusionConfig {
  std::size_t d = 200;
  std::size_t heads = 4;
  std::size_t rank = 1;  // low-rank factor k
  std::array<bool, kNumScales> scales{true, true, true};
  FusionStrategy strategy = FusionStrategy::Gated;
};

struct DrugScaleInputs {
  std::array<Tensor, kNumScales> features;  // [B, N_s, d]
  std::array<Mask, kNumScales> masks;       // [B * N_s]
};

struct FusionOutput {
  Tensor clusters;                             // R~ [B, Nr, d]
  std::array<Tensor, kNumScales> drug;         // v~ per scale (input passthrough for inactive scales)
  std::array<BilinearAttention::Result, kNumScales> detail;
};

class Fusion {
 public:
  Fusion(ParamStore& store, const FusionConfig& cfg, CounterRng& rng);
  FusionOutput operator()(const DrugScaleInputs& drug, const Tensor& clusters) const;

  // softmax(g) over active scales (gated strategy only).
  Tensor scale_weights() const;

  std::array<BilinearAttention, kNumScales> attention;
  Tensor gate;  // [active scales]
  nn::Linear concat_proj;
  const FusionConfig& config() const { return cfg_; }

 private:
  FusionConfig cfg_;
  std::size_t active_ = 0;
};

}  // namespace hifdta
