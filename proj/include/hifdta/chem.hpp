#pragma once

// Molecular graphs from SMILES, atom/bond featurisation and graph
// comparison. Aromaticity is taken from the notation (lowercase atoms and
// ':' bonds); stereo marks are accepted and dropped.

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace hifdta::chem {

enum class BondOrder : std::uint8_t { Single, Double, Triple, Aromatic };

struct Atom {
  std::string element;  // "C", "Cl", "*", ...
  bool aromatic = false;
  bool bracket = false;
  int charge = 0;
  int implicit_h = 0;   // from valence rules; 0 for bracket atoms
  int explicit_h = 0;   // H written inside brackets
  std::size_t degree = 0;
  std::size_t offset = 0;  // byte offset in the source string

  int total_h() const { return implicit_h + explicit_h; }
};

struct Bond {
  std::size_t a = 0;
  std::size_t b = 0;
  BondOrder order = BondOrder::Single;
  bool in_ring = false;

  std::size_t other(std::size_t atom) const { return atom == a ? b : a; }
};

struct MolGraph {
  std::vector<Atom> atoms;
  std::vector<Bond> bonds;
  std::vector<std::vector<std::size_t>> adjacency;  // atom -> incident bond ids

  std::size_t num_atoms() const { return atoms.size(); }
  std::size_t num_bonds() const { return bonds.size(); }
  // Bond id joining two atoms, or npos.
  std::size_t bond_between(std::size_t u, std::size_t v) const;
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

// Throws ParseError (with byte offset) for unmatched ring closures, unmatched
// parentheses, unknown tokens and valence overflow.
MolGraph parse_smiles(std::string_view smiles);

// Depth-first SMILES with a deterministic, invariant-ranked traversal.
// Bracket atoms stay bracketed, so re-parsing reproduces hydrogen counts.
std::string write_smiles(const MolGraph& g);

// Exact graph isomorphism respecting element, aromaticity, charge, hydrogen
// count and bond order. Backtracking; intended for small molecules.
bool isomorphic(const MolGraph& x, const MolGraph& y);

inline constexpr std::size_t kAtomFeatureDim = 43;
inline constexpr std::size_t kBondFeatureDim = 5;

enum class Hybridization : std::uint8_t { SP, SP2, SP3, Other };
Hybridization hybridization(const MolGraph& g, std::size_t atom);

// Row-major N x 43: element(16) degree(6) total H(5) implicit valence(6)
// formal charge(5) hybridisation(4) aromatic(1). Out-of-range values fall into
// the last bucket of their block.
std::vector<double> featurize_atoms(const MolGraph& g);

// Row-major E x 5: bond order one-hot (single, double, triple, aromatic), in-ring bit.
std::vector<double> featurize_bonds(const MolGraph& g);

// Index of an element in the 16-way element block.
std::size_t element_bucket(const std::string& element);

}  // namespace hifdta::chem
