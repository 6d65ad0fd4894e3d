#include "hifdta/nn.hpp"

#include <cmath>

namespace hifdta::nn {

Linear::Linear(ParamStore& store, const std::string& name, std::size_t in_dim, std::size_t out_dim,
               CounterRng& rng, bool bias, Init init)
    : in(in_dim), out(out_dim) {
  Tensor weight;
  switch (init) {
    case Init::HeUniform: weight = init::he_uniform(in, out, rng); break;
    case Init::Orthogonal: weight = init::orthogonal(in, out, rng); break;
    case Init::Zeros: weight = Tensor::zeros({in, out}); break;
  }
  w = store.add_param(name + ".w", weight);
  if (bias) b = store.add_param(name + ".b", Tensor::zeros({out}));
}

LayerNorm::LayerNorm(ParamStore& store, const std::string& name, std::size_t width) {
  gain = store.add_param(name + ".gain", Tensor::full({width}, 1.0));
  bias = store.add_param(name + ".bias", Tensor::zeros({width}));
}

Mlp::Mlp(ParamStore& store, const std::string& name, const std::vector<std::size_t>& widths, CounterRng& rng) {
  for (std::size_t i = 0; i + 1 < widths.size(); ++i)
    layers.emplace_back(store, name + "." + std::to_string(i), widths[i], widths[i + 1], rng);
}

Tensor Mlp::operator()(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i](h);
    if (i + 1 < layers.size()) h = relu(h);
  }
  return h;
}

DegreeStats DegreeStats::fit(const std::vector<std::size_t>& degrees) {
  DegreeStats s;
  if (degrees.empty()) return s;
  double lg = 0.0, lin = 0.0;
  for (auto d : degrees) {
    lg += std::log(static_cast<double>(d) + 1.0);
    lin += static_cast<double>(d);
  }
  lg /= static_cast<double>(degrees.size());
  lin /= static_cast<double>(degrees.size());
  if (lg > 0.0) s.log_delta = lg;
  if (lin > 0.0) s.lin_delta = lin;
  return s;
}

PnaLayer::PnaLayer(ParamStore& store, const std::string& name, std::size_t d, std::size_t edge_dim, CounterRng& rng)
    : width(d) {
  edge = Linear(store, name + ".phi", edge_dim, d, rng);
  pre = Linear(store, name + ".pre", 3 * d, d, rng);
  post = Linear(store, name + ".post", 13 * d, d, rng);
  proj = Linear(store, name + ".proj", d, d, rng);
}

Tensor PnaLayer::operator()(const Tensor& x, const EdgeList& edges, const DegreeStats& stats) const {
  const std::size_t n = x.dim(0);
  Tensor h;
  if (edges.src.empty()) {
    h = Tensor::zeros({n, 12 * width});
  } else {
    Tensor msg = pre(concat({gather_rows(x, edges.dst), gather_rows(x, edges.src), edge(edges.features)}, 1));
    std::vector<double> amp(n), lin(n);
    for (std::size_t i = 0; i < n; ++i) {
      amp[i] = std::log(edges.degree[i] + 1.0) / stats.log_delta;
      lin[i] = edges.degree[i] / stats.lin_delta;
    }
    Tensor amp_t = Tensor::from({n, 1}, std::move(amp));
    Tensor lin_t = Tensor::from({n, 1}, std::move(lin));
    std::vector<Tensor> parts;
    for (Tensor agg : {segment_mean(msg, edges.dst, n), segment_min(msg, edges.dst, n),
                       segment_max(msg, edges.dst, n), segment_std(msg, edges.dst, n)}) {
      parts.push_back(agg);
      parts.push_back(mul(agg, amp_t));
      parts.push_back(mul(agg, lin_t));
    }
    h = concat(parts, 1);
  }
  return proj(relu(post(concat({x, h}, 1))));
}

PathFusion::PathFusion(ParamStore& store, const std::string& name, std::size_t d, CounterRng& rng) {
  mix = Linear(store, name + ".mix", 2 * d, d, rng);
  norm = LayerNorm(store, name + ".norm", d);
}

}  // namespace hifdta::nn
