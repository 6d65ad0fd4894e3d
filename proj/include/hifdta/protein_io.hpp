#pragma once

// Protein inputs: residue alphabet, physicochemical descriptors, per-residue
// language-model embeddings and contact maps (file IO plus a seeded stub
// generator), and contact-graph construction.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace hifdta::protein {

inline constexpr std::size_t kEmbeddingDim = 1280;
inline constexpr std::size_t kAlphabetSize = 21;  // 20 residues + unknown
inline constexpr std::size_t kPhyschemDim = 12;
inline constexpr std::size_t kRbfDim = 16;
inline constexpr std::size_t kResidueInputDim = kEmbeddingDim + kAlphabetSize + kPhyschemDim;  // 1313

inline constexpr std::string_view kAlphabet = "ACDEFGHIKLMNPQRSTVWY";

// Alphabet index; anything outside the 20 standard letters maps to 20.
std::uint8_t residue_index(char residue);

// Columns: Kyte-Doolittle hydropathy, Zimmerman bulkiness, Grantham polarity,
// isoelectric point, Chou-Fasman helix / sheet / turn propensity, residue mass,
// charge at pH 7, side-chain H-bond donors, side-chain H-bond acceptors,
// aliphatic flag. The unknown class takes the column means.
const std::array<double, kPhyschemDim>& physchem_row(std::uint8_t index);

struct PhyschemStats {
  std::array<double, kPhyschemDim> mean{};
  std::array<double, kPhyschemDim> stddev = [] {
    std::array<double, kPhyschemDim> ones;
    ones.fill(1.0);
    return ones;
  }();
};

// Mean and population std over all residues of the given sequences
// (std of 0 is replaced by 1).
PhyschemStats fit_physchem(const std::vector<const std::vector<std::uint8_t>*>& sequences);

// Row-major R x R contact probabilities.
struct ContactMap {
  std::size_t size = 0;
  std::vector<float> prob;
  float at(std::size_t i, std::size_t j) const { return prob[i * size + j]; }
};

// Files: "<id>.emb" = "HFE1", u32 rows, u32 cols (1280), f32 row-major;
//        "<id>.cmap" = "HFC1", u32 R, f32 R x R row-major.
std::vector<float> read_embedding(const std::filesystem::path& path, const std::string& protein_id,
                                  std::size_t expected_rows);
void write_embedding(const std::filesystem::path& path, const std::vector<float>& values, std::size_t rows);
ContactMap read_contacts(const std::filesystem::path& path, const std::string& protein_id, std::size_t expected_rows);
void write_contacts(const std::filesystem::path& path, const ContactMap& map);

// Deterministic stand-ins for language-model outputs. Embedding entries are
// i.i.d. N(0, 1) keyed by (seed, protein id, position, residue, column);
// contacts are sigmoid of a symmetric N(-3, 1) field, plus 0.6 (capped at 1)
// within two positions of the diagonal.
std::vector<float> stub_embedding(const std::string& protein_id, std::string_view sequence, std::uint64_t seed);
ContactMap stub_contacts(const std::string& protein_id, std::size_t length, std::uint64_t seed);

struct ContactGraphOptions {
  double threshold = 0.5;
  double rbf_low = 0.5;
  double rbf_high = 1.0;
  double rbf_width = 0.05;
};

// Undirected contact edges (i < j) with p_ij >= threshold.
struct ContactGraph {
  std::size_t num_nodes = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::vector<double> prob;
};

ContactGraph build_contact_graph(const ContactMap& map, const ContactGraphOptions& options = {});
// 16 Gaussian features of a probability, centers evenly spaced on [low, high].
std::array<double, kRbfDim> rbf_features(double p, const ContactGraphOptions& options = {});

}  // namespace hifdta::protein
