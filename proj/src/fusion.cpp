#include "hifdta/fusion.hpp"

#include <cmath>

#include "hifdta/errors.hpp"

namespace hifdta {

BilinearAttention::BilinearAttention(ParamStore& store, const std::string& name, std::size_t d, std::size_t n_heads,
                                     std::size_t k, CounterRng& rng) {
  const std::size_t dk = d * k;
  for (std::size_t h = 0; h < n_heads; ++h) {
    const std::string p = name + ".head" + std::to_string(h);
    Head head;
    head.proj_v = nn::Linear(store, p + ".Wv", d, dk, rng, false);
    head.proj_r = nn::Linear(store, p + ".Wr", d, dk, rng, false);
    head.channel = store.add_param(p + ".channel", Tensor::full({dk}, 1.0 / std::sqrt(static_cast<double>(dk))));
    head.bias = store.add_param(p + ".bias", Tensor::zeros({1}));
    heads.push_back(std::move(head));
  }
}

Tensor BilinearAttention::scores(std::size_t h, const Tensor& v, const Tensor& r) const {
  const Head& head = heads[h];
  return add(bmm(mul(head.proj_v(v), head.channel), head.proj_r(r), false, true), head.bias);
}

BilinearAttention::Result BilinearAttention::operator()(const Tensor& v, const Mask& v_mask, const Tensor& r) const {
  const std::size_t B = v.dim(0), Nv = v.dim(1), Nr = r.dim(1);
  if (v_mask.size() != B * Nv) throw DimensionError("bilinear attention: mask size does not match drug slots");
  Mask pair_mask(B * Nv * Nr);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < Nv; ++i)
      for (std::size_t j = 0; j < Nr; ++j) pair_mask[(b * Nv + i) * Nr + j] = v_mask[b * Nv + i];
  Result out;
  Tensor r_acc, v_acc;
  for (std::size_t h = 0; h < heads.size(); ++h) {
    Tensor s = scores(h, v, r);
    Tensor alpha = softmax(s, 1, &pair_mask);
    Tensor beta = softmax(s, 2, &pair_mask);
    Tensor r_upd = bmm(alpha, v, true, false);  // [B, Nr, d]
    Tensor v_upd = bmm(beta, r);                // [B, Nv, d]
    r_acc = h == 0 ? r_upd : add(r_acc, r_upd);
    v_acc = h == 0 ? v_upd : add(v_acc, v_upd);
    out.alpha.push_back(alpha);
    out.beta.push_back(beta);
  }
  const double inv = 1.0 / static_cast<double>(heads.size());
  out.r_tilde = add(r, scale(r_acc, inv));
  out.v_tilde = add(v, scale(v_acc, inv));
  return out;
}

Fusion::Fusion(ParamStore& store, const FusionConfig& cfg, CounterRng& rng) : cfg_(cfg) {
  static const char* names[kNumScales] = {"atom", "sub", "mol"};
  for (std::size_t s = 0; s < kNumScales; ++s) {
    if (!cfg.scales[s]) continue;
    attention[s] = BilinearAttention(store, std::string("fusion.") + names[s], cfg.d, cfg.heads, cfg.rank, rng);
    ++active_;
  }
  if (active_ == 0) throw UsageError("fusion: at least one drug scale must be active");
  switch (cfg.strategy) {
    case FusionStrategy::Gated: gate = store.add_param("fusion.gate", Tensor::zeros({active_})); break;
    case FusionStrategy::Concat: concat_proj = nn::Linear(store, "fusion.concat", active_ * cfg.d, cfg.d, rng); break;
    case FusionStrategy::Add: break;
  }
}

Tensor Fusion::scale_weights() const { return softmax(gate, 0); }

FusionOutput Fusion::operator()(const DrugScaleInputs& drug, const Tensor& clusters) const {
  FusionOutput out;
  std::vector<Tensor> per_scale;
  for (std::size_t s = 0; s < kNumScales; ++s) {
    if (!cfg_.scales[s]) {
      out.drug[s] = drug.features[s];
      continue;
    }
    out.detail[s] = attention[s](drug.features[s], drug.masks[s], clusters);
    out.drug[s] = out.detail[s].v_tilde;
    per_scale.push_back(out.detail[s].r_tilde);
  }
  switch (cfg_.strategy) {
    case FusionStrategy::Gated: {
      Tensor a = scale_weights();
      for (std::size_t i = 0; i < per_scale.size(); ++i) {
        Tensor term = mul(per_scale[i], narrow(a, 0, i, 1));
        out.clusters = i == 0 ? term : add(out.clusters, term);
      }
      break;
    }
    case FusionStrategy::Concat:
      out.clusters = concat_proj(concat(per_scale, 2));
      break;
    case FusionStrategy::Add:
      out.clusters = per_scale[0];
      for (std::size_t i = 1; i < per_scale.size(); ++i) out.clusters = add(out.clusters, per_scale[i]);
      break;
  }
  return out;
}

}  // namespace hifdta
