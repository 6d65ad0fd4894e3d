#pragma once

// Davis-format records with a learnable signal: pK_d is a per-drug plus a
// per-protein offset with a small interaction term, written back as raw K_d
// in nM.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hifdta/dataset.hpp"
#include "hifdta/protein_io.hpp"
#include "support/corpus.hpp"

namespace hifdta::testing {

struct SyntheticSpec {
  std::size_t drugs = 20;
  std::size_t proteins = 10;
  std::size_t pairs = 100;
  std::uint64_t seed = 1;
  std::size_t min_len = 50;
  std::size_t max_len = 120;
};

inline std::vector<data::AffinityRecord> synthetic_davis(const SyntheticSpec& spec) {
  const auto& corpus = desk_corpus();
  CounterRng rng(spec.seed, 0xda715);
  std::vector<double> drug_effect, protein_effect;
  std::vector<std::string> sequences;
  for (std::size_t i = 0; i < spec.drugs; ++i) drug_effect.push_back(rng.normal());
  for (std::size_t p = 0; p < spec.proteins; ++p) {
    protein_effect.push_back(rng.normal());
    const std::size_t len = spec.min_len + rng.below(spec.max_len - spec.min_len + 1);
    std::string seq;
    for (std::size_t k = 0; k < len; ++k) seq += protein::kAlphabet[rng.below(protein::kAlphabet.size())];
    sequences.push_back(seq);
  }
  std::vector<std::size_t> combos(spec.drugs * spec.proteins);
  for (std::size_t i = 0; i < combos.size(); ++i) combos[i] = i;
  for (std::size_t i = combos.size(); i > 1; --i) std::swap(combos[i - 1], combos[rng.below(i)]);
  combos.resize(std::min(spec.pairs, combos.size()));

  std::vector<data::AffinityRecord> out;
  for (std::size_t c : combos) {
    const std::size_t di = c / spec.proteins, pi = c % spec.proteins;
    const NamedSmiles& drug = corpus[di % corpus.size()];
    const double pkd = 6.0 + 0.8 * drug_effect[di] + 0.6 * protein_effect[pi] +
                       0.15 * drug_effect[di] * protein_effect[pi] + 0.05 * rng.normal();
    out.push_back({"D" + std::to_string(di) + "_" + std::string(drug.name), std::string(drug.smiles),
                   "P" + std::to_string(pi), sequences[pi], std::pow(10.0, 9.0 - pkd)});
  }
  return out;
}

}  // namespace hifdta::testing
