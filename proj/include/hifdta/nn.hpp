#pragma once

// Parameterised building blocks shared by the encoders.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "hifdta/params.hpp"
#include "hifdta/rng.hpp"
#include "hifdta/tensor.hpp"

namespace hifdta::nn {

enum class Init { HeUniform, Orthogonal, Zeros };

// Train/eval switch plus the randomness key for dropout sites in one forward pass.
struct ForwardMode {
  bool train = false;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  StreamKey site(std::uint64_t id) const { return {seed, step * 4096 + id}; }
};

struct Linear {
  Tensor w;  // [in, out]
  Tensor b;  // [out], undefined when bias-free
  std::size_t in = 0, out = 0;

  Linear() = default;
  Linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, CounterRng& rng,
         bool bias = true, Init init = Init::HeUniform);
  Tensor operator()(const Tensor& x) const { return linear(x, w, b.defined() ? &b : nullptr); }
};

struct LayerNorm {
  Tensor gain, bias;
  LayerNorm() = default;
  LayerNorm(ParamStore& store, const std::string& name, std::size_t width);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias); }
};

// Linear layers with ReLU between them (none after the last).
struct Mlp {
  std::vector<Linear> layers;
  Mlp() = default;
  Mlp(ParamStore& store, const std::string& name, const std::vector<std::size_t>& widths, CounterRng& rng);
  Tensor operator()(const Tensor& x) const;
};

// Directed edge list over the rows of a node tensor; messages flow src -> dst.
struct EdgeList {
  Index src, dst;
  Tensor features;              // [E, edge_dim]
  std::vector<double> degree;   // in-degree per node
  std::size_t num_nodes = 0;
};

// Degree-scaler normalisers fitted on training graphs.
struct DegreeStats {
  double log_delta = 1.0;  // mean log(deg + 1)
  double lin_delta = 1.0;  // mean deg
  static DegreeStats fit(const std::vector<std::size_t>& degrees);
};

// One round of principal neighbourhood aggregation:
//   m_ij = MLP_pre([x_i || x_j || phi(e_ij)])
//   h_i  = concat over {mean, min, max, std} x {identity, amplification, linear}
//   x'_i = W . MLP_post([x_i || h_i])
// Nodes without incoming edges aggregate to zero.
struct PnaLayer {
  Linear pre, edge, post, proj;
  std::size_t width = 0;

  PnaLayer() = default;
  PnaLayer(ParamStore& store, const std::string& name, std::size_t d, std::size_t edge_dim, CounterRng& rng);
  Tensor operator()(const Tensor& x, const EdgeList& edges, const DegreeStats& stats) const;
};

// ReLU(W [a || b] + bias) followed by layer normalisation.
struct PathFusion {
  Linear mix;
  LayerNorm norm;
  PathFusion() = default;
  PathFusion(ParamStore& store, const std::string& name, std::size_t d, CounterRng& rng);
  Tensor operator()(const Tensor& a, const Tensor& b) const { return norm(relu(mix(concat({a, b}, 1)))); }
};

}  // namespace hifdta::nn
