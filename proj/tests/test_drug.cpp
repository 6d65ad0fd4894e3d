#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "hifdta/drug_encoder.hpp"
#include "hifdta/errors.hpp"
#include "hifdta/gradcheck.hpp"
#include "support/random_tensors.hpp"

using namespace hifdta;
using hifdta::testing::random_tensor;
using hifdta::testing::weighted_sum;

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void fill(Tensor t, double v) { std::fill(t.mutable_data().begin(), t.mutable_data().end(), v); }

void copy_into(Tensor dst, const Tensor& src) {
  REQUIRE(dst.shape() == src.shape());
  std::copy(src.data().begin(), src.data().end(), dst.mutable_data().begin());
}

double max_diff(std::span<const double> a, std::span<const double> b) {
  REQUIRE(a.size() == b.size());
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

struct Fixture {
  ParamStore store;
  CounterRng rng{21, 1};
  DrugEncoderConfig cfg;
  DrugEncoder enc;
  explicit Fixture(std::size_t d = 8, bool global = true, bool local = true)
      : cfg{d, 4, 3, 0.2, global, local}, enc(store, cfg, rng) {}
};

}  // namespace

TEST_CASE("featurize and collate") {
  DrugGraph a = featurize_drug("CCO"), b = featurize_drug("c1ccccc1C");
  CHECK(a.num_atoms == 3);
  CHECK(a.atom_features.size() == 3 * 43);
  CHECK(a.bonds.size() == 2);
  CHECK(a.clusters.size() == 2);
  CHECK(a.first_cluster == std::vector<std::size_t>{0, 0, 1});
  DrugBatch batch = collate_drugs({&a, &b});
  CHECK(batch.num_atoms == 10);
  CHECK(batch.max_atoms == 7);
  CHECK(batch.x.shape() == Shape{10, 43});
  CHECK(batch.edges.src.size() == 2 * (2 + 7));
  CHECK(batch.dense_atoms[0] == 0);
  CHECK(batch.dense_atoms[3] == -1);
  CHECK(batch.dense_atoms[7] == 3);
  CHECK(batch.flat_atoms[3] == 7);
  CHECK(batch.num_clusters == 4);
  CHECK(batch.cluster_mol == Index{0, 0, 1, 1});
  CHECK(batch.first_cluster[3] == 2);  // ring atom of toluene, global cluster id
  CHECK(batch.dense_first_cluster[7] == 0);
  CHECK(batch.dense_first_cluster[3] == -1);
  CHECK(batch.atom_mask[2] == 1);
  CHECK(batch.atom_mask[3] == 0);
  for (std::size_t i = 0; i < batch.edges.src.size(); ++i)
    CHECK(batch.atom_mol[batch.edges.src[i]] == batch.atom_mol[batch.edges.dst[i]]);
  CHECK_THROWS_AS(featurize_drug("C1CC"), ParseError);
}

TEST_CASE("embed: shape, zero convention and gradient") {
  ParamStore store;
  CounterRng rng(3, 3);
  DrugEncoder full(store, DrugEncoderConfig{}, rng);
  DrugGraph g = featurize_drug("CCN");
  CHECK(full.embed(collate_drugs({&g}).x).shape() == Shape{3, 200});
  CHECK_THROWS_AS(full.embed(Tensor::zeros({3, 42})), DimensionError);

  Fixture f;
  fill(f.enc.embed1.b, 0.0);
  fill(f.enc.embed2.b, 0.0);
  Tensor out = f.enc.embed(Tensor::zeros({2, 43}));
  for (double v : out.data()) CHECK(v == 0.0);

  DrugGraph m = featurize_drug("c1ccncc1O");
  Tensor x = collate_drugs({&m}).x;
  auto r = finite_diff_check([&] { return weighted_sum(f.enc.embed(x)); }, {f.enc.embed1.w});
  CHECK(r.max_rel_error < 1e-5);
}

TEST_CASE("bilstm: single atom, mirroring and zero recurrence") {
  Fixture f;
  const std::size_t d = 8, H = 4;
  CounterRng rng(4, 4);

  SUBCASE("single-atom molecule is one step in each direction") {
    DrugGraph g = featurize_drug("O");
    DrugBatch batch = collate_drugs({&g});
    Tensor h = random_tensor({1, d}, rng);
    Tensor out = f.enc.bilstm(h, batch);
    for (int dir = 0; dir < 2; ++dir) {
      Tensor gates = dir == 0 ? f.enc.lstm_in_fwd(h) : f.enc.lstm_in_bwd(h);
      for (std::size_t k = 0; k < H; ++k) {
        const double c = sig(gates[k]) * std::tanh(gates[2 * H + k]);
        CHECK(out[dir * H + k] == doctest::Approx(sig(gates[3 * H + k]) * std::tanh(c)).epsilon(1e-12));
      }
    }
  }

  SUBCASE("reversed atoms with swapped directions mirror the output") {
    DrugGraph g = featurize_drug("CCOCN");
    DrugBatch batch = collate_drugs({&g});
    const std::size_t T = 5;
    Tensor h = random_tensor({T, d}, rng);
    std::vector<double> rev;
    for (std::size_t t = 0; t < T; ++t)
      rev.insert(rev.end(), h.data().begin() + (T - 1 - t) * d, h.data().begin() + (T - t) * d);
    Fixture m;
    copy_into(m.enc.lstm_in_fwd.w, f.enc.lstm_in_bwd.w);
    copy_into(m.enc.lstm_in_fwd.b, f.enc.lstm_in_bwd.b);
    copy_into(m.enc.lstm_hh_fwd, f.enc.lstm_hh_bwd);
    copy_into(m.enc.lstm_in_bwd.w, f.enc.lstm_in_fwd.w);
    copy_into(m.enc.lstm_in_bwd.b, f.enc.lstm_in_fwd.b);
    copy_into(m.enc.lstm_hh_bwd, f.enc.lstm_hh_fwd);
    Tensor a = f.enc.bilstm(h, batch);
    Tensor b = m.enc.bilstm(Tensor::from({T, d}, rev), batch);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t k = 0; k < H; ++k) {
        CHECK(b[t * d + k] == doctest::Approx(a[(T - 1 - t) * d + H + k]).epsilon(1e-12));
        CHECK(b[t * d + H + k] == doctest::Approx(a[(T - 1 - t) * d + k]).epsilon(1e-12));
      }
  }

  SUBCASE("zero recurrent weights and a closed forget gate make each step local") {
    // The cell state still carries history unless the forget gate is shut.
    fill(f.enc.lstm_hh_fwd, 0.0);
    fill(f.enc.lstm_hh_bwd, 0.0);
    for (Tensor b : {f.enc.lstm_in_fwd.b, f.enc.lstm_in_bwd.b})
      for (std::size_t k = H; k < 2 * H; ++k) b.mutable_data()[k] = -1e3;
    DrugGraph g = featurize_drug("CCCC");
    DrugBatch batch = collate_drugs({&g});
    Tensor h = random_tensor({4, d}, rng);
    std::vector<double> changed(h.data().begin(), h.data().end());
    for (std::size_t k = 0; k < d; ++k) changed[k] += 1.0, changed[3 * d + k] -= 1.0;
    Tensor a = f.enc.bilstm(h, batch), b = f.enc.bilstm(Tensor::from({4, d}, changed), batch);
    for (std::size_t i = d; i < 3 * d; ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-14));
  }
}

TEST_CASE("pna aggregation examples") {
  // Scalar messages 0 and 2 into node 0, a single message 5 into node 1.
  Tensor msg = Tensor::from({3, 1}, {0.0, 2.0, 5.0});
  Index dst{0, 0, 1};
  CHECK(segment_mean(msg, dst, 3)[0] == 1.0);
  CHECK(segment_min(msg, dst, 3)[0] == 0.0);
  CHECK(segment_max(msg, dst, 3)[0] == 2.0);
  CHECK(segment_std(msg, dst, 3)[0] == doctest::Approx(1.0).epsilon(1e-15));
  for (auto op : {segment_mean, segment_min, segment_max}) CHECK(op(msg, dst, 3)[1] == 5.0);
  CHECK(segment_std(msg, dst, 3)[1] == 0.0);
  for (auto op : {segment_mean, segment_min, segment_max, segment_std}) CHECK(op(msg, dst, 3)[2] == 0.0);
}

TEST_CASE("pna layer: isolated nodes, permutation equivariance, gradient") {
  ParamStore store;
  CounterRng rng(5, 5);
  const std::size_t d = 6;
  nn::PnaLayer layer(store, "pna", d, 5, rng);
  nn::DegreeStats stats{0.8, 1.7};

  Tensor x = random_tensor({3, d}, rng);
  nn::EdgeList none;
  none.num_nodes = 3;
  none.degree.assign(3, 0);
  none.features = Tensor::zeros({0, 5});
  Tensor y = layer(x, none, stats);
  Tensor expect = layer.proj(relu(layer.post(concat({x, Tensor::zeros({3, 12 * d})}, 1))));
  CHECK(max_diff(y.data(), expect.data()) == 0.0);

  DrugGraph g = featurize_drug("CC(N)C(=O)OC");
  DrugBatch batch = collate_drugs({&g});
  const std::size_t n = g.num_atoms;
  Tensor h = random_tensor({n, d}, rng);
  Tensor base = layer(h, batch.edges, stats);
  std::vector<std::size_t> perm{3, 5, 0, 6, 1, 4, 2};  // new index of each atom
  REQUIRE(perm.size() == n);
  std::vector<double> hp(n * d);
  for (std::size_t v = 0; v < n; ++v)
    std::copy(h.data().begin() + v * d, h.data().begin() + (v + 1) * d, hp.begin() + perm[v] * d);
  nn::EdgeList pe = batch.edges;
  pe.degree.assign(n, 0);
  for (std::size_t e = 0; e < pe.src.size(); ++e) {
    pe.src[e] = perm[batch.edges.src[e]];
    pe.dst[e] = perm[batch.edges.dst[e]];
    pe.degree[pe.dst[e]] += 1;
  }
  Tensor moved = layer(Tensor::from({n, d}, hp), pe, stats);
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t k = 0; k < d; ++k) CHECK(moved[perm[v] * d + k] == doctest::Approx(base[v * d + k]).epsilon(1e-12));

  h.set_requires_grad(true);
  auto params = store.parameters();
  params.push_back(h);
  auto r = finite_diff_check([&] { return weighted_sum(layer(h, batch.edges, stats)); }, params);
  CHECK(r.max_rel_error < 1e-5);
}

TEST_CASE("path fusion zero convention") {
  ParamStore store;
  CounterRng rng(6, 6);
  nn::PathFusion fuse(store, "f", 8, rng);
  fill(fuse.mix.b, 0.0);
  Tensor out = fuse(Tensor::zeros({3, 8}), Tensor::zeros({3, 8}));
  for (double v : out.data()) CHECK(v == 0.0);
  CHECK(out.shape() == Shape{3, 8});
}

TEST_CASE("substructure pooling and update") {
  Fixture f(4);
  DrugGraph g = featurize_drug("CC");
  DrugBatch batch = collate_drugs({&g});
  REQUIRE(batch.num_clusters == 1);
  Tensor atoms = Tensor::from({2, 4}, {1, 1, 1, 1, 3, 3, 3, 3});

  // Identity projection and a zero table expose the mean.
  fill(f.enc.sub_proj.w, 0.0);
  for (std::size_t k = 0; k < 4; ++k) f.enc.sub_proj.w.mutable_data()[k * 4 + k] = 1.0;
  fill(f.enc.type_embedding, 0.0);
  Tensor pooled = f.enc.substructures(atoms, batch);
  for (double v : pooled.data()) CHECK(v == doctest::Approx(2.0).epsilon(1e-15));

  // W = 0 leaves exactly the type embedding.
  Fixture z(4);
  fill(z.enc.sub_proj.w, 0.0);
  Tensor only_type = z.enc.substructures(atoms, batch);
  const std::size_t type = batch.cluster_type[0];
  for (std::size_t k = 0; k < 4; ++k) CHECK(only_type[k] == z.enc.type_embedding[type * 4 + k]);

  // A benzene ring gets the same addend in two molecules.
  DrugGraph a = featurize_drug("c1ccccc1"), b = featurize_drug("Oc1ccccc1");
  std::vector<std::uint32_t> ring_types;
  for (const DrugGraph* m : {&a, &b})
    for (std::size_t c = 0; c < m->clusters.size(); ++c)
      if (m->clusters[c].size() == 6) ring_types.push_back(m->cluster_types[c]);
  REQUIRE(ring_types.size() == 2);
  CHECK(ring_types[0] == ring_types[1]);

  // Gradients reach both the table and the projection.
  DrugGraph m = featurize_drug("CC(=O)Oc1ccccc1");
  DrugBatch mb = collate_drugs({&m});
  CounterRng rng(7, 7);
  Tensor h = random_tensor({m.num_atoms, 4}, rng);
  for (const Tensor& p : {f.enc.type_embedding, f.enc.sub_proj.w}) {
    auto r = finite_diff_check([&] { return weighted_sum(f.enc.substructures(h, mb)); }, {p},
                               GradCheckOptions{1e-6, 64});
    CHECK(r.max_rel_error < 1e-5);
  }
  Tensor table = f.enc.type_embedding;
  table.zero_grad();
  backward(weighted_sum(f.enc.substructures(h, mb)));
  REQUIRE(table.has_grad());
  double touched = 0;
  for (double v : table.grad()) touched += std::fabs(v);
  CHECK(touched > 0);
}

TEST_CASE("substructure attention") {
  Fixture f(8);
  nn::ForwardMode eval;

  DrugGraph one = featurize_drug("C");
  DrugBatch b1 = collate_drugs({&one});
  CounterRng rng(8, 8);
  Tensor hs = random_tensor({1, 8}, rng);
  auto [mol, alpha] = f.enc.attend(hs, b1, eval);
  for (double a : alpha.data()) CHECK(a == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(max_diff(mol.data(), hs.data()) < 1e-15);

  DrugGraph two = featurize_drug("CC.CC");
  DrugBatch b2 = collate_drugs({&two});
  REQUIRE(b2.num_clusters == 2);
  Tensor row = random_tensor({1, 8}, rng);
  Tensor same = concat({row, row}, 0);
  auto [mol2, alpha2] = f.enc.attend(same, b2, eval);
  for (double a : alpha2.data()) CHECK(a == doctest::Approx(0.5).epsilon(1e-15));

  DrugGraph caf = featurize_drug("CN1C=NC2=C1C(=O)N(C(=O)N2C)C"), tol = featurize_drug("Cc1ccccc1");
  DrugBatch b3 = collate_drugs({&caf, &tol});
  DrugScales s = f.enc(b3, {true, 5, 2});
  for (std::size_t m = 0; m < 2; ++m)
    for (std::size_t h = 0; h < 4; ++h) {
      double sum = 0;
      for (std::size_t c = 0; c < b3.num_clusters; ++c)
        if (b3.cluster_mol[c] == static_cast<std::int64_t>(m)) sum += s.sub_attention[c * 4 + h];
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("molecule embeddings do not depend on batch mates") {
  Fixture f(8);
  DrugGraph a = featurize_drug("CC(=O)Nc1ccc(O)cc1"), b = featurize_drug("C1CCCCC1N"), c = featurize_drug("O");
  DrugScales alone = f.enc(collate_drugs({&a}), {});
  DrugScales mixed = f.enc(collate_drugs({&b, &a, &c}), {});
  CHECK(max_diff(alone.mol.data(), std::span(mixed.mol.data()).subspan(8, 8)) < 1e-12);
  DrugScales atoms_only = f.enc(collate_drugs({&c, &a}), {});
  CHECK(max_diff(alone.atom.data(), std::span(atoms_only.atom.data()).subspan(8, a.num_atoms * 8)) < 1e-12);
}

TEST_CASE("pathway ablations") {
  Fixture full(8), local(8, false, true), global(8, true, false);
  CHECK(local.store.parameter_count() < full.store.parameter_count());
  CHECK(global.store.parameter_count() < full.store.parameter_count());
  CHECK(local.store.find("drug.lstm.fwd.hh") == nullptr);
  CHECK(global.store.find("drug.pna.0.pre.w") == nullptr);
  DrugGraph g = featurize_drug("c1ccccc1CCN");
  DrugBatch batch = collate_drugs({&g});
  // With the BiLSTM removed the fused atom rows only see the PNA pathway.
  Tensor h = local.enc.embed(batch.x);
  Tensor expect = local.enc.fuse(local.enc.mpnn(h, batch), Tensor::zeros({g.num_atoms, 8}));
  CHECK(max_diff(local.enc(batch, {}).atom.data(), expect.data()) == 0.0);
  CHECK_THROWS_AS(DrugEncoder(full.store, DrugEncoderConfig{10, 4, 3, 0.2, true, true}, full.rng), UsageError);
}
