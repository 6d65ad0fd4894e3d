#include <algorithm>
#include <numeric>
#include <set>

#include "doctest.h"
#include "hifdta/chem.hpp"
#include "hifdta/errors.hpp"
#include "hifdta/junction_tree.hpp"
#include "support/corpus.hpp"
#include "support/tree_invariants.hpp"

using namespace hifdta;
using namespace hifdta::chem;

namespace {

ParseError::Kind parse_error_kind(std::string_view s, std::size_t* offset = nullptr) {
  try {
    parse_smiles(s);
  } catch (const ParseError& e) {
    if (offset) *offset = e.offset();
    return e.kind();
  }
  FAIL("expected a parse error for " << s);
  return ParseError::Kind::UnknownToken;
}

// Every violation is reported on its own line.
void check_tree_invariants(const MolGraph& g, const JunctionTree& jt, std::string_view name) {
  INFO(name);
  for (const auto& v : hifdta::testing::tree_violations(g, jt)) FAIL_CHECK(v);
}

}  // namespace

TEST_CASE("parse: basic examples") {
  auto ethanol = parse_smiles("CCO");
  CHECK(ethanol.num_atoms() == 3);
  CHECK(ethanol.num_bonds() == 2);
  for (const auto& b : ethanol.bonds) CHECK(b.order == BondOrder::Single);
  CHECK(ethanol.atoms[0].total_h() == 3);
  CHECK(ethanol.atoms[1].total_h() == 2);
  CHECK(ethanol.atoms[2].total_h() == 1);

  auto cp = parse_smiles("C1CC1");
  CHECK(cp.num_atoms() == 3);
  CHECK(cp.num_bonds() == 3);
  for (const auto& b : cp.bonds) CHECK(b.in_ring);

  auto bz = parse_smiles("c1ccccc1");
  CHECK(bz.num_atoms() == 6);
  CHECK(bz.num_bonds() == 6);
  for (const auto& a : bz.atoms) {
    CHECK(a.aromatic);
    CHECK(a.total_h() == 1);
  }
  for (const auto& b : bz.bonds) {
    CHECK(b.order == BondOrder::Aromatic);
    CHECK(b.in_ring);
  }
}

TEST_CASE("parse: brackets, charges, branches and ring closures") {
  auto nitro = parse_smiles("c1ccc(cc1)[N+](=O)[O-]");
  CHECK(nitro.atoms[6].element == "N");
  CHECK(nitro.atoms[6].charge == 1);
  CHECK(nitro.atoms[8].charge == -1);
  CHECK(nitro.atoms[8].total_h() == 0);

  auto pyrrole = parse_smiles("c1cc[nH]c1");
  CHECK(pyrrole.atoms[3].explicit_h == 1);
  CHECK(pyrrole.atoms[0].total_h() == 1);

  auto pct = parse_smiles("C%12CC%12");
  CHECK(pct.num_bonds() == 3);

  auto fe = parse_smiles("[Fe+2]");
  CHECK(fe.atoms[0].charge == 2);
  CHECK(parse_smiles("[Cu++]").atoms[0].charge == 2);

  auto stereo = parse_smiles("F/C=C\\F");
  CHECK(stereo.num_bonds() == 3);
  CHECK(stereo.bonds[1].order == BondOrder::Double);
  auto chiral = parse_smiles("N[C@@H](C)C(=O)O");
  CHECK(chiral.atoms[1].explicit_h == 1);
  CHECK(chiral.atoms[1].total_h() == 1);

  auto biphenyl = parse_smiles("c1ccc(cc1)-c1ccccc1");
  CHECK(biphenyl.bonds[6].order == BondOrder::Single);
  CHECK_FALSE(biphenyl.bonds[6].in_ring);

  auto salt = parse_smiles("[Na+].[Cl-]");
  CHECK(salt.num_atoms() == 2);
  CHECK(salt.num_bonds() == 0);

  CHECK(parse_smiles("CS(=O)(=O)C").atoms[1].total_h() == 0);
  CHECK(parse_smiles("CP(C)C").atoms[1].total_h() == 0);
  CHECK(parse_smiles("c1ccc2[nH]c(=O)ccc2c1").num_atoms() == 11);
  CHECK(parse_smiles("CCO extra name").num_atoms() == 3);
  CHECK(parse_smiles("*C").atoms[0].element == "*");
}

TEST_CASE("parse errors carry kind and byte offset") {
  std::size_t off = 0;
  CHECK(parse_error_kind("C1CC", &off) == ParseError::Kind::UnmatchedRingClosure);
  CHECK(off == 1);
  CHECK(parse_error_kind("CC(C", &off) == ParseError::Kind::UnmatchedParenthesis);
  CHECK(off == 2);
  CHECK(parse_error_kind("CC)C", &off) == ParseError::Kind::UnmatchedParenthesis);
  CHECK(off == 2);
  CHECK(parse_error_kind("CCX", &off) == ParseError::Kind::UnknownToken);
  CHECK(off == 2);
  CHECK(parse_error_kind("C[Xx]", &off) == ParseError::Kind::UnknownToken);
  CHECK(parse_error_kind("C(=C)(C)(C)=C", &off) == ParseError::Kind::ValenceOverflow);
  CHECK(off == 0);
  CHECK(parse_error_kind("FF(F)", &off) == ParseError::Kind::ValenceOverflow);
  CHECK(off == 1);
  CHECK(parse_error_kind("", &off) == ParseError::Kind::UnknownToken);
  CHECK(parse_error_kind("C11", &off) == ParseError::Kind::UnmatchedRingClosure);
  try {
    parse_smiles("CC)C");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("byte 2") != std::string::npos);
  }
}

TEST_CASE("atom features") {
  auto methane = parse_smiles("C");
  auto f = featurize_atoms(methane);
  REQUIRE(f.size() == kAtomFeatureDim);
  CHECK(f[0] == 1.0);        // carbon
  CHECK(f[16 + 0] == 1.0);   // degree 0
  CHECK(f[22 + 4] == 1.0);   // 4 H
  CHECK(f[42] == 0.0);
  CHECK(f[38 + 2] == 1.0);   // sp3

  auto bz = featurize_atoms(parse_smiles("c1ccccc1"));
  CHECK(bz[42] == 1.0);
  CHECK(bz[38 + 1] == 1.0);  // sp2
  CHECK(hybridization(parse_smiles("C#N"), 0) == Hybridization::SP);
  CHECK(hybridization(parse_smiles("C=C=C"), 1) == Hybridization::SP);
  CHECK(hybridization(parse_smiles("CCl"), 1) == Hybridization::Other);

  // Every corpus atom: width 43, six one-hot blocks each sum to 1.
  const std::size_t blocks[][2] = {{0, 16}, {16, 22}, {22, 27}, {27, 33}, {33, 38}, {38, 42}};
  for (const auto& m : hifdta::testing::desk_corpus()) {
    auto g = parse_smiles(m.smiles);
    auto feats = featurize_atoms(g);
    REQUIRE(feats.size() == g.num_atoms() * kAtomFeatureDim);
    for (std::size_t v = 0; v < g.num_atoms(); ++v)
      for (auto [lo, hi] : blocks) {
        double s = 0.0;
        for (std::size_t k = lo; k < hi; ++k) s += feats[v * kAtomFeatureDim + k];
        CHECK(s == 1.0);
      }
  }
}

TEST_CASE("bond features") {
  auto ethane = featurize_bonds(parse_smiles("CC"));
  CHECK(ethane == std::vector<double>{1, 0, 0, 0, 0});
  auto bz = featurize_bonds(parse_smiles("c1ccccc1"));
  CHECK(std::vector<double>(bz.begin(), bz.begin() + 5) == std::vector<double>{0, 0, 0, 1, 1});
  CHECK(featurize_bonds(parse_smiles("C=C")) == std::vector<double>{0, 1, 0, 0, 0});
}

TEST_CASE("tree decomposition examples") {
  auto cc = tree_decompose(parse_smiles("CC"));
  CHECK(cc.num_clusters() == 1);
  CHECK(cc.clusters[0] == std::vector<std::size_t>{0, 1});
  CHECK(cc.tree_edges.empty());

  auto tol_g = parse_smiles("Cc1ccccc1");
  auto tol = tree_decompose(tol_g);
  REQUIRE(tol.num_clusters() == 2);
  CHECK(tol.clusters[0].size() == 6);
  CHECK(tol.clusters[1].size() == 2);
  REQUIRE(tol.tree_edges.size() == 1);
  std::vector<std::size_t> common;
  std::set_intersection(tol.clusters[0].begin(), tol.clusters[0].end(), tol.clusters[1].begin(),
                        tol.clusters[1].end(), std::back_inserter(common));
  CHECK(common.size() == 1);

  auto caffeine = parse_smiles("CN1C=NC2=C1C(=O)N(C(=O)N2C)C");
  check_tree_invariants(caffeine, tree_decompose(caffeine), "caffeine");

  auto methane = tree_decompose(parse_smiles("C"));
  CHECK(methane.num_clusters() == 1);
  CHECK(methane.kinds[0] == ClusterKind::Atom);

  auto salt_g = parse_smiles("CC.O");
  auto salt = tree_decompose(salt_g);
  CHECK(salt.num_clusters() == 2);
  CHECK(salt.tree_edges.empty());
}

TEST_CASE("tree decomposition invariants over the desk corpus") {
  for (const auto& m : hifdta::testing::desk_corpus()) {
    auto g = parse_smiles(m.smiles);
    check_tree_invariants(g, tree_decompose(g), m.name);
  }
}

TEST_CASE("cluster type ids") {
  auto a = parse_smiles("c1ccccc1");
  auto b = parse_smiles("Cc1ccccc1O");
  auto ja = tree_decompose(a), jb = tree_decompose(b);
  CHECK(ja.cluster_types[0] == jb.cluster_types[0]);
  auto single = tree_decompose(parse_smiles("CC"));
  auto dbl = tree_decompose(parse_smiles("C=C"));
  CHECK(single.cluster_types[0] != dbl.cluster_types[0]);
}

TEST_CASE("write/parse round trip yields an isomorphic graph") {
  for (const auto& m : hifdta::testing::desk_corpus()) {
    INFO(m.name);
    auto g = parse_smiles(m.smiles);
    const std::string out = write_smiles(g);
    INFO(out);
    auto back = parse_smiles(out);
    CHECK(isomorphic(g, back));
    CHECK(write_smiles(back) == out);
  }
  CHECK_FALSE(isomorphic(parse_smiles("CCO"), parse_smiles("COC")));
  CHECK_FALSE(isomorphic(parse_smiles("C=CC"), parse_smiles("CCC")));
  CHECK(isomorphic(parse_smiles("OCC"), parse_smiles("CCO")));
}
