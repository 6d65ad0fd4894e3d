#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "hifdta/errors.hpp"
#include "hifdta/gradcheck.hpp"
#include "hifdta/protein_encoder.hpp"
#include "hifdta/sequence.hpp"
#include "hifdta/train.hpp"
#include "support/random_tensors.hpp"

using namespace hifdta;
using namespace hifdta::protein;
using hifdta::testing::random_tensor;
using hifdta::testing::weighted_sum;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("hifdta_test_protein_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

void fill(Tensor t, double v) { std::fill(t.mutable_data().begin(), t.mutable_data().end(), v); }

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const FormatError& e) {
    return e.what();
  }
  return "";
}

ProteinGraph line_protein(const std::string& id, std::size_t length) {
  ProteinGraph p;
  p.id = id;
  p.residues.assign(length, 0);
  p.esm.assign(length * kEmbeddingDim, 0.0f);
  p.contacts.num_nodes = length;
  return p;
}

}  // namespace

TEST_CASE("residue alphabet and one-hot block") {
  CHECK(residue_index('A') == 0);
  CHECK(residue_index('Y') == 19);
  CHECK(residue_index('X') == 20);
  CHECK(residue_index('B') == 20);
  ProteinGraph p = line_protein("p", 2);
  p.residues = {residue_index('A'), residue_index('Z')};
  ProteinBatch b = collate_proteins({&p}, PhyschemStats{});
  for (std::size_t row = 0; row < 2; ++row) {
    double total = 0;
    for (std::size_t c = 0; c < kAlphabetSize; ++c) total += b.x[row * kResidueInputDim + kEmbeddingDim + c];
    CHECK(total == 1.0);
  }
  CHECK(b.x[kEmbeddingDim] == 1.0);
  CHECK(b.x[kResidueInputDim + kEmbeddingDim + 20] == 1.0);
}

TEST_CASE("physchem columns are z-scored with the fitted statistics") {
  std::vector<std::uint8_t> a{0, 1, 2, 3, 4}, b{5, 5, 9, 17};
  PhyschemStats stats = fit_physchem({&a, &b});
  ProteinGraph pa = line_protein("a", 5), pb = line_protein("b", 4);
  pa.residues = a;
  pb.residues = b;
  ProteinBatch batch = collate_proteins({&pa, &pb}, stats);
  for (std::size_t k = 0; k < kPhyschemDim; ++k) {
    double s = 0, s2 = 0;
    for (std::size_t r = 0; r < 9; ++r) {
      const double v = batch.x[r * kResidueInputDim + kEmbeddingDim + kAlphabetSize + k];
      s += v;
      s2 += v * v;
    }
    CHECK(std::fabs(s / 9) < 1e-12);
    CHECK(std::fabs(s2 / 9 - 1.0) < 1e-9);
  }
}

TEST_CASE("stub generator is deterministic and well-formed") {
  auto e1 = stub_embedding("P1", "ACDEF", 3), e2 = stub_embedding("P1", "ACDEF", 3);
  CHECK(e1.size() == 5 * kEmbeddingDim);
  CHECK(e1 == e2);
  CHECK(stub_embedding("P1", "ACDEF", 4) != e1);
  CHECK(stub_embedding("P2", "ACDEF", 3) != e1);
  double mean = 0;
  for (float v : e1) mean += v;
  CHECK(std::fabs(mean / e1.size()) < 0.1);

  ContactMap c = stub_contacts("P1", 30, 3);
  CHECK(c.size == 30);
  CHECK(c.prob == stub_contacts("P1", 30, 3).prob);
  for (std::size_t i = 0; i < 30; ++i)
    for (std::size_t j = 0; j < 30; ++j) {
      CHECK(c.at(i, j) == c.at(j, i));
      CHECK(c.at(i, j) >= 0.0f);
      CHECK(c.at(i, j) <= 1.0f);
    }
  // The near-diagonal boost puts neighbours above the default threshold.
  CHECK(c.at(4, 5) >= 0.5f);
}

TEST_CASE("embedding and contact files round trip and reject bad input") {
  auto dir = scratch("files");
  auto emb = stub_embedding("P", "ACDEFG", 1);
  write_embedding(dir / "P.emb", emb, 6);
  CHECK(read_embedding(dir / "P.emb", "P", 6) == emb);
  ContactMap cm = stub_contacts("P", 6, 1);
  write_contacts(dir / "P.cmap", cm);
  CHECK(read_contacts(dir / "P.cmap", "P", 6).prob == cm.prob);

  std::string msg = error_of([&] { read_embedding(dir / "P.emb", "P", 5); });
  CHECK(msg.find("P") != std::string::npos);
  CHECK(msg.find("sequence length 5") != std::string::npos);
  CHECK(error_of([&] { read_contacts(dir / "P.cmap", "P", 7); }).find("sequence length 7") != std::string::npos);
  CHECK(error_of([&] { read_embedding(dir / "P.cmap", "P", 6); }).find("bad magic") != std::string::npos);
  CHECK(error_of([&] { read_embedding(dir / "missing.emb", "Q", 6); }).find("Q") != std::string::npos);

  ContactMap skew = cm;
  skew.prob[0 * 6 + 1] += 0.01f;
  write_contacts(dir / "S.cmap", skew);
  CHECK(error_of([&] { read_contacts(dir / "S.cmap", "S", 6); }).find("asymmetric") != std::string::npos);

  auto bad = emb;
  bad[17] = std::nanf("");
  write_embedding(dir / "N.emb", bad, 6);
  CHECK(error_of([&] { read_embedding(dir / "N.emb", "N", 6); }).find("non-finite") != std::string::npos);

  {
    std::ofstream os(dir / "T.emb", std::ios::binary);
    os.write("HFE1", 4);
  }
  CHECK(error_of([&] { read_embedding(dir / "T.emb", "T", 6); }).find("truncated") != std::string::npos);
}

TEST_CASE("contact graph thresholding and rbf features") {
  ContactMap m;
  m.size = 3;
  m.prob = {1.0f, 0.7f, 0.2f, 0.7f, 1.0f, 0.5f, 0.2f, 0.5f, 1.0f};
  ContactGraph g = build_contact_graph(m);
  CHECK(g.num_nodes == 3);
  REQUIRE(g.edges.size() == 2);
  CHECK(g.edges[0] == std::pair<std::size_t, std::size_t>{0, 1});
  CHECK(g.edges[1] == std::pair<std::size_t, std::size_t>{1, 2});

  ContactMap low = m;
  for (auto& p : low.prob) p = 0.1f;
  CHECK(build_contact_graph(low).edges.empty());

  ContactGraphOptions opt;
  for (std::size_t k = 0; k < kRbfDim; ++k) {
    const double center = opt.rbf_low + (opt.rbf_high - opt.rbf_low) * k / (kRbfDim - 1);
    CHECK(rbf_features(center)[k] == doctest::Approx(1.0).epsilon(1e-12));
  }
  for (double p : {0.0, 0.5, 0.73, 1.0})
    for (double f : rbf_features(p)) {
      CHECK(f > 0.0);
      CHECK(f <= 1.0);
    }
}

TEST_CASE("degree sort") {
  CHECK(degree_sort({0, 0, 0}, {2, 0, 1}) == std::vector<std::size_t>{1, 2, 0});
  CHECK(degree_sort({0, 0, 0, 0}, {3, 3, 3, 3}) == std::vector<std::size_t>{0, 1, 2, 3});
  CHECK(degree_sort({0, 0, 1, 1}, {5, 1, 0, 0}) == std::vector<std::size_t>{1, 0, 2, 3});

  ProteinGraph a = toy_protein("A", 12, 5, {}), b = toy_protein("B", 7, 5, {});
  ProteinBatch batch = collate_proteins({&a, &b}, PhyschemStats{});
  for (std::size_t node = 0; node < batch.num_nodes; ++node)
    CHECK(batch.dense_sorted[static_cast<std::size_t>(batch.unsort[node])] == static_cast<std::int64_t>(node));
  for (std::size_t pi = 0; pi < 2; ++pi)
    for (std::size_t t = 1; t < batch.lengths[pi]; ++t) {
      const auto prev = batch.dense_sorted[pi * batch.max_len + t - 1];
      const auto cur = batch.dense_sorted[pi * batch.max_len + t];
      CHECK(batch.edges.degree[prev] <= batch.edges.degree[cur]);
    }
}

TEST_CASE("dense batch layout") {
  ProteinGraph one = toy_protein("S", 4, 1, {});
  ProteinBatch single = collate_proteins({&one}, PhyschemStats{});
  CHECK(single.max_len == 4);
  CHECK(std::all_of(single.mask.begin(), single.mask.end(), [](auto m) { return m == 1; }));

  ProteinGraph a = line_protein("a", 3), b = line_protein("b", 5);
  ProteinBatch batch = collate_proteins({&a, &b}, PhyschemStats{});
  CHECK(batch.max_len == 5);
  CHECK(batch.mask == Mask{1, 1, 1, 0, 0, 1, 1, 1, 1, 1});
  CHECK(batch.dense == Index{0, 1, 2, -1, -1, 3, 4, 5, 6, 7});

  CounterRng rng(2, 2);
  Tensor feats = random_tensor({8, 3}, rng);
  Tensor dense = gather_rows(feats, batch.dense);
  Index back;
  for (std::size_t i = 0; i < batch.dense.size(); ++i)
    if (batch.mask[i]) back.push_back(static_cast<std::int64_t>(i));
  Tensor round = gather_rows(dense, back);
  CHECK(std::equal(round.data().begin(), round.data().end(), feats.data().begin()));
}

TEST_CASE("ssm with zero input, bias and skip gives zero output") {
  ParamStore store;
  CounterRng rng(8, 1);
  SsmLayer layer(store, "ssm", 4, 16, rng);
  fill(layer.delta.b, 0.0);
  fill(layer.d_skip, 0.0);
  Tensor y = layer(Tensor::zeros({2, 5, 4}), Mask(10, 1));
  CHECK(std::all_of(y.data().begin(), y.data().end(), [](double v) { return v == 0.0; }));
}

TEST_CASE("mincut with one cluster") {
  ParamStore store;
  CounterRng rng(4, 4);
  MincutLevel level(store, "m", 3, 1, rng);
  Tensor x = random_tensor({1, 4, 3}, rng);
  Tensor adj = Tensor::from({1, 4, 4}, {0, 1, 0, 0, 1, 0, 1, 0, 0, 1, 0, 1, 0, 0, 1, 0});
  ClusterLevel out = level.dense(x, adj);
  for (double m : out.assignment.data()) CHECK(m == doctest::Approx(1.0).epsilon(1e-12));
  for (std::size_t c = 0; c < 3; ++c) {
    double col = 0;
    for (std::size_t r = 0; r < 4; ++r) col += x[r * 3 + c];
    CHECK(out.features[c] == doctest::Approx(col).epsilon(1e-12));
  }
  CHECK(std::fabs(out.ortho_loss.item()) < 1e-12);
}

TEST_CASE("cut loss prefers clique-aligned assignments") {
  // Two disjoint triangles.
  std::vector<double> a(36, 0.0);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j)
      if (i != j && i / 3 == j / 3) a[i * 6 + j] = 1.0;
  Tensor adj = Tensor::from({1, 6, 6}, a);
  std::vector<double> hard(12, 0.0);
  for (std::size_t i = 0; i < 6; ++i) hard[i * 2 + i / 3] = 1.0;
  const double aligned = mincut_cut_loss(Tensor::from({1, 6, 2}, hard), adj).item();
  CHECK(aligned == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(std::fabs(mincut_ortho_loss(Tensor::from({1, 6, 2}, hard)).item()) < 1e-12);

  CounterRng noise(7, 7);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor m = softmax(random_tensor({1, 6, 2}, noise, -3.0, 3.0), 2);
    CHECK(mincut_cut_loss(m, adj).item() > aligned + 1e-3);
  }
  CHECK(mincut_cut_loss(Tensor::from({1, 6, 2}, hard), Tensor::zeros({1, 6, 6})).item() == 0.0);

  // Complete cliques make every GCN output clique-constant, so the level's own
  // assignment is aligned-equivalent whatever its weights.
  ParamStore store;
  CounterRng rng(6, 6);
  MincutLevel level(store, "m", 2, 2, rng);
  CHECK(level.dense(random_tensor({1, 6, 2}, noise), adj).cut_loss.item() == doctest::Approx(-1.0).epsilon(1e-9));
}

TEST_CASE("encoder hierarchy: shapes, stochastic rows, finite aux loss") {
  ParamStore store;
  CounterRng rng(10, 2);
  ProteinEncoderConfig cfg;
  cfg.d = 8;
  ProteinEncoder enc(store, cfg, rng);
  ProteinGraph a = toy_protein("A", 30, 2, {}), b = toy_protein("B", 3, 2, {});
  std::vector<const std::vector<std::uint8_t>*> seqs{&a.residues, &b.residues};
  ProteinBatch batch = collate_proteins({&a, &b}, fit_physchem(seqs));
  ProteinEncoding out = enc(batch);
  REQUIRE(out.levels.size() == 3);
  const std::size_t sizes[] = {20, 10, 5};
  for (std::size_t l = 0; l < 3; ++l) {
    const auto& lvl = out.levels[l];
    CHECK(lvl.features.shape() == Shape{2, sizes[l], 8});
    const std::size_t rows = lvl.assignment.dim(1), cl = lvl.assignment.dim(2);
    for (std::size_t p = 0; p < 2; ++p)
      for (std::size_t r = 0; r < rows; ++r) {
        double total = 0;
        for (std::size_t c = 0; c < cl; ++c) total += lvl.assignment[(p * rows + r) * cl + c];
        const bool padded = l == 0 && !batch.mask[p * batch.max_len + r];
        CHECK(total == doctest::Approx(padded ? 0.0 : 1.0).epsilon(1e-9));
      }
  }
  CHECK(out.composed_assignment.shape() == Shape{2, 30, 5});
  CHECK(std::isfinite(out.aux_loss.item()));
}

TEST_CASE("per-protein outputs do not depend on batch mates") {
  ParamStore store;
  CounterRng rng(11, 2);
  ProteinEncoderConfig cfg;
  cfg.d = 8;
  ProteinEncoder enc(store, cfg, rng);
  ProteinGraph a = toy_protein("A", 14, 3, {}), b = toy_protein("B", 21, 3, {});
  PhyschemStats stats;
  Tensor alone = enc(collate_proteins({&a}, stats)).residue;
  Tensor pair = enc(collate_proteins({&b, &a}, stats)).residue;
  for (std::size_t i = 0; i < alone.numel(); ++i)
    CHECK(std::fabs(alone[i] - pair[21 * 8 + i]) < 1e-12);
}

TEST_CASE("protein encoder gradients match finite differences") {
  ParamStore store;
  CounterRng rng(12, 2);
  ProteinEncoderConfig cfg;
  cfg.d = 6;
  cfg.layers = 1;
  cfg.ssm_state = 4;
  cfg.clusters = {4, 2};
  ProteinEncoder enc(store, cfg, rng);
  ProteinGraph a = toy_protein("A", 9, 4, {}), b = toy_protein("B", 6, 4, {});
  std::vector<const std::vector<std::uint8_t>*> seqs{&a.residues, &b.residues};
  ProteinBatch batch = collate_proteins({&a, &b}, fit_physchem(seqs));
  auto loss = [&] {
    ProteinEncoding out = enc(batch);
    return add(add(weighted_sum(out.residue, 1), weighted_sum(out.levels.back().features, 2)), out.aux_loss);
  };
  GradCheckOptions opt;
  opt.max_coords_per_tensor = 12;
  GradCheckResult r = finite_diff_check(loss, store.parameters(), opt);
  CHECK(r.coordinates > 0);
  CHECK(r.max_rel_error < 1e-5);
}
