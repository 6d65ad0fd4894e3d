#include <chrono>

#include <json.hpp>

#include "hifdta/sequence.hpp"
#include "hifdta/train.hpp"

namespace hifdta {
namespace {

Tensor random_leaf(Shape shape, CounterRng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v), true);
}

// Contracts an arbitrary tensor with fixed random weights.
Tensor probe(const Tensor& t, std::uint64_t stream) {
  CounterRng rng(991, stream);
  std::vector<double> w(t.numel());
  for (double& x : w) x = rng.uniform(-1.0, 1.0);
  return sum(mul(t, Tensor::from(t.shape(), std::move(w))));
}

GradCheckEntry timed(const std::string& name, const std::function<Tensor()>& loss, std::vector<Tensor> params,
                     std::size_t max_coords = 0) {
  const auto start = std::chrono::steady_clock::now();
  GradCheckOptions opts;
  opts.max_coords_per_tensor = max_coords;
  GradCheckEntry e{name, finite_diff_check(loss, std::move(params), opts), 0.0};
  e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return e;
}

std::vector<Tensor> trainable(const ParamStore& store) { return store.parameters(); }

}  // namespace

std::vector<GradCheckEntry> gradcheck_suite(std::uint64_t seed) {
  std::vector<GradCheckEntry> out;
  CounterRng rng(seed, 1);

  {  // elementwise, broadcasting and activation ops
    Tensor a = random_leaf({3, 4}, rng), b = random_leaf({4}, rng, 0.5, 2.0), c = random_leaf({3, 4}, rng, 0.2, 1.5);
    out.push_back(timed("ops.elementwise", [=] {
      Tensor t = add(mul(sigmoid(a), b), tanh(sub(a, c)));
      t = add(t, div(exp(scale(a, 0.5)), c));
      t = add(t, log(add_scalar(square(a), 1.0)));
      t = add(t, add(softplus(neg(a)), sqrt(add_scalar(c, 0.1))));
      t = add(t, relu(add_scalar(a, 0.3)));
      t = add(t, ratio_or_zero(a, c));
      return probe(t, 1);
    }, {a, b, c}));
  }
  {  // products
    Tensor a = random_leaf({3, 4}, rng), w = random_leaf({4, 2}, rng), x = random_leaf({2, 3, 4}, rng),
           y = random_leaf({2, 5, 4}, rng), v = random_leaf({5, 3}, rng),
           z = random_leaf({2, 5, 3}, rng);
    const std::vector<std::size_t> rows{0, 1, 2, 3, 3}, cols{1, 0, 4, 3, 0};
    const std::vector<double> vals{0.5, -1.0, 2.0, 1.5, 0.25};
    auto sp = SparseOperator::make(kernels::Csr::from_triplets(4, 5, rows, cols, vals));
    Tensor bias = random_leaf({2}, rng);
    out.push_back(timed("ops.linalg", [=] {
      Tensor t = probe(matmul(a, w), 2);
      t = add(t, probe(bmm(x, y, false, true), 3));
      t = add(t, probe(bmm(y, z, true, false), 4));
      t = add(t, probe(bmm(x, z, true, true), 43));
      t = add(t, probe(transpose(a), 5));
      t = add(t, probe(spmm(sp, v), 6));
      t = add(t, probe(linear(x, w, &bias), 7));
      return t;
    }, {a, w, x, y, z, v, bias}));
  }
  {  // reductions and normalisation
    Tensor a = random_leaf({2, 3, 4}, rng), g = random_leaf({4}, rng), bb = random_leaf({4}, rng);
    Mask mask(24, 1);
    mask[3] = mask[7] = mask[11] = 0;
    out.push_back(timed("ops.reductions", [=] {
      Tensor t = add(sum(a), mean(square(a)));
      t = add(t, probe(sum_axis(a, 1), 8));
      t = add(t, probe(mean_axis(a, 2, true), 9));
      t = add(t, probe(softmax(a, 2, &mask), 10));
      t = add(t, probe(softmax(a, 0), 11));
      t = add(t, probe(layer_norm(a, g, bb), 12));
      t = add(t, probe(dropout(a, 0.3, true, {5, 5}), 13));
      return t;
    }, {a, g, bb}));
  }
  {  // segment and structural ops
    Tensor v = random_leaf({7, 3}, rng), u = random_leaf({2, 3}, rng);
    Index ids{0, 0, 1, 2, 2, 2, 0};
    out.push_back(timed("ops.segments", [=] {
      Tensor t = probe(segment_sum(v, ids, 4), 14);
      t = add(t, probe(segment_mean(v, ids, 4), 15));
      t = add(t, probe(segment_max(v, ids, 4), 16));
      t = add(t, probe(segment_min(v, ids, 4), 17));
      t = add(t, probe(segment_std(v, ids, 4), 18));
      t = add(t, probe(segment_softmax(v, ids, 4), 19));
      t = add(t, probe(gather_rows(v, {3, -1, 0, 3}), 20));
      t = add(t, probe(concat({narrow(v, 0, 1, 2), u}, 0), 21));
      t = add(t, probe(reshape(v, {3, 7}), 22));
      return t;
    }, {v, u}));
  }
  {  // fused recurrences
    Tensor gx = random_leaf({2, 4, 8}, rng), whh = random_leaf({2, 8}, rng, -0.5, 0.5);
    out.push_back(timed("ops.lstm_scan", [=] {
      return add(probe(lstm_scan(gx, whh, {4, 2}, false), 23), probe(lstm_scan(gx, whh, {4, 2}, true), 24));
    }, {gx, whh}));
  }

  const std::size_t d = 8;
  CounterRng init(seed, 2);

  {  // drug encoder on a small batch
    ParamStore store;
    DrugEncoderConfig dc;
    dc.d = d;
    DrugEncoder enc(store, dc, init);
    DrugGraph g1 = featurize_drug("CC(=O)Nc1ccccc1"), g2 = featurize_drug("C1CC1O");
    DrugBatch batch = collate_drugs({&g1, &g2});
    out.push_back(timed("drug_encoder", [&, batch] {
      DrugScales s = enc(batch, {true, 3, 0});
      return add(add(probe(s.atom, 30), probe(s.sub, 31)), probe(s.mol, 32));
    }, trainable(store), 24));
  }
  {  // selective state-space layer with padding
    ParamStore store;
    SsmLayer ssm(store, "ssm", d, 4, init);
    Tensor x = random_leaf({2, 5, d}, rng);
    Mask mask(10, 1);
    mask[8] = mask[9] = 0;
    auto params = trainable(store);
    params.push_back(x);
    out.push_back(timed("ssm", [&, x, mask] { return probe(ssm(x, mask), 33); }, params));
  }
  {  // mincut levels: sparse residue level and dense cluster level
    ParamStore store;
    MincutLevel l1(store, "mc1", d, 4, init), l2(store, "mc2", d, 2, init);
    ProteinGraph p1 = toy_protein("gc-a", 9, seed), p2 = toy_protein("gc-b", 6, seed);
    ProteinBatch batch = collate_proteins({&p1, &p2}, protein::fit_physchem({&p1.residues, &p2.residues}));
    Tensor x = random_leaf({batch.num_nodes, d}, rng);
    auto params = trainable(store);
    params.push_back(x);
    out.push_back(timed("mincut", [&, x] {
      ClusterLevel a = l1.sparse(x, batch);
      ClusterLevel b = l2.dense(a.features, a.adjacency);
      Tensor t = add(add(a.cut_loss, a.ortho_loss), add(b.cut_loss, b.ortho_loss));
      t = add(t, add(probe(a.features, 34), probe(a.adjacency, 35)));
      return add(t, add(probe(b.features, 36), probe(bmm(a.assignment, b.assignment), 37)));
    }, params));
  }
  {  // bilinear fusion, gated over three scales
    ParamStore store;
    FusionConfig fc;
    fc.d = d;
    Fusion fusion(store, fc, init);
    DrugScaleInputs in;
    in.features = {random_leaf({2, 4, d}, rng), random_leaf({2, 3, d}, rng), random_leaf({2, 1, d}, rng)};
    in.masks = {Mask{1, 1, 1, 0, 1, 1, 0, 0}, Mask{1, 1, 1, 1, 0, 0}, Mask{1, 1}};
    Tensor r = random_leaf({2, 5, d}, rng);
    auto params = trainable(store);
    for (const Tensor& f : in.features) params.push_back(f);
    params.push_back(r);
    out.push_back(timed("fusion", [&, in, r] {
      FusionOutput o = fusion(in, r);
      return add(add(probe(o.clusters, 38), probe(o.drug[0], 39)), add(probe(o.drug[1], 40), probe(o.drug[2], 41)));
    }, params));
  }
  {  // pooling and regression head
    ParamStore store;
    Predictor pred(store, {d, 0.2}, init);
    Tensor clusters = random_leaf({2, 3, d}, rng), residues = random_leaf({2, 4, d}, rng);
    Tensor composed = random_leaf({2, 4, 3}, rng, 0.0, 1.0);
    Tensor atoms = random_leaf({2, 3, d}, rng), subs = random_leaf({2, 2, d}, rng), mol = random_leaf({2, d}, rng);
    Mask rmask{1, 1, 1, 0, 1, 1, 1, 1}, amask{1, 1, 0, 1, 1, 1};
    std::vector<std::int64_t> atom_sub{0, 1, -1, 0, 0, 1};
    auto params = trainable(store);
    for (const Tensor& t : {clusters, residues, composed, atoms, subs, mol}) params.push_back(t);
    out.push_back(timed("predictor", [&, clusters, residues, composed, atoms, subs, mol, rmask, amask, atom_sub] {
      Tensor p = pred.protein_pool(clusters, composed, residues, rmask);
      Tensor q = pred.drug_pool(atoms, subs, mol, atom_sub, amask);
      return probe(pred.head(p, q, {true, 4, 0}), 42);
    }, params));
  }
  {  // full objective on a two-sample batch
    ModelConfig mc;
    mc.d = d;
    mc.clusters = {4, 3, 2};
    HifDta model(mc, seed);
    DrugGraph g1 = featurize_drug("Cc1ccccc1"), g2 = featurize_drug("OCC(N)=O");
    ProteinGraph p1 = toy_protein("gc-c", 10, seed), p2 = toy_protein("gc-d", 7, seed);
    PairBatch batch = make_pair_batch({&g1, &g2}, {&p1, &p2}, {6.5, 5.0},
                                      protein::fit_physchem({&p1.residues, &p2.residues}), mc.contacts);
    out.push_back(timed("full_loss", [&] {
      return affinity_loss(model.forward(batch, {true, 9, 0}), batch.labels, 1.0);
    }, trainable(model.store()), 16));
  }
  return out;
}

std::string gradcheck_json(const std::vector<GradCheckEntry>& entries) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& e : entries)
    j.push_back({{"name", e.name},
                 {"max_rel_error", e.result.max_rel_error},
                 {"coordinates", e.result.coordinates},
                 {"worst_tensor", e.result.worst_tensor},
                 {"worst_index", e.result.worst_index},
                 {"seconds", e.seconds}});
  return j.dump(2);
}

}  // namespace hifdta
