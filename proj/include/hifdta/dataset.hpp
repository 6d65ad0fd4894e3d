#pragma once

// Affinity datasets: TSV ingestion, the K_d -> pK_d transform, fold
// splitting, the embedding store and the on-disk feature cache.

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "hifdta/drug_encoder.hpp"
#include "hifdta/protein_encoder.hpp"

namespace hifdta::data {

struct AffinityRecord {
  std::string drug_id;
  std::string smiles;
  std::string protein_id;
  std::string sequence;
  double affinity = 0.0;
};

// -log10(kd / 1e9) for kd in nM; kd <= 0 raises std::domain_error.
double pkd_transform(double kd_nm);

struct LoadResult {
  std::vector<AffinityRecord> records;
  std::vector<std::string> warnings;
};

// Header: drug_id smiles protein_id sequence affinity (tab separated).
// A repeated (drug, protein) pair keeps its first position and takes the
// later affinity. Errors carry the 1-based line number.
LoadResult parse_dataset(std::istream& in, const std::string& source, bool transform);
LoadResult load_dataset(const std::filesystem::path& path, bool transform);
void write_dataset(const std::filesystem::path& path, const std::vector<AffinityRecord>& records);

struct FoldSplit {
  std::uint64_t seed = 0;
  std::vector<std::vector<std::size_t>> folds;
};

// Seeded shuffle of 0..n-1 cut into k contiguous slices; sizes differ by at most one.
FoldSplit kfold_split(std::size_t n, std::size_t k, std::uint64_t seed);

struct EmbeddingEntry {
  std::vector<float> esm;
  protein::ContactMap contacts;
  std::uint64_t digest = 0;
};

// Per-protein "<id>.emb" / "<id>.cmap" files in one directory. In stub mode
// missing proteins get deterministic stand-ins instead of an error.
class EmbeddingStore {
 public:
  EmbeddingStore(std::filesystem::path dir, bool stub, std::uint64_t stub_seed = 0);
  bool has(const std::string& protein_id) const;
  EmbeddingEntry load(const std::string& protein_id, const std::string& sequence) const;
  // Throws FormatError listing every protein without files (never in stub mode).
  void require(const std::vector<AffinityRecord>& records) const;

  // Writes stub files for one protein.
  static void write_stub(const std::filesystem::path& dir, const std::string& protein_id, const std::string& sequence,
                         std::uint64_t seed);

 private:
  std::filesystem::path dir_;
  bool stub_;
  std::uint64_t seed_;
};

inline constexpr std::uint32_t kFeaturizerVersion = 1;

// Content-addressed cache at <root>/<kind>/<hash>.bin. Drug keys cover the
// SMILES text; protein keys cover the sequence, embedding digest and contact
// graph options. Both include the featurizer version, and entries whose
// header does not match are rebuilt.
class FeatureCache {
 public:
  explicit FeatureCache(std::filesystem::path root, std::uint32_t version = kFeaturizerVersion);

  DrugGraph drug(const std::string& smiles);
  ProteinGraph protein(const std::string& protein_id, const std::string& sequence, const EmbeddingStore& store,
                       const protein::ContactGraphOptions& options);

  std::uint64_t drug_key(const std::string& smiles) const;
  std::uint64_t protein_key(const std::string& sequence, std::uint64_t embedding_digest,
                            const protein::ContactGraphOptions& options) const;
  std::filesystem::path entry_path(const std::string& kind, std::uint64_t key) const;

  std::size_t drug_parses() const { return drug_parses_; }
  std::size_t protein_builds() const { return protein_builds_; }
  std::size_t hits() const { return hits_; }

 private:
  std::filesystem::path root_;
  std::uint32_t version_;
  std::atomic<std::size_t> drug_parses_{0}, protein_builds_{0}, hits_{0};
};

void save_drug_graph(std::ostream& out, const DrugGraph& g);
DrugGraph load_drug_graph(std::istream& in);
void save_protein_graph(std::ostream& out, const ProteinGraph& g);
ProteinGraph load_protein_graph(std::istream& in);

ProteinGraph build_protein(const std::string& protein_id, const std::string& sequence, const EmbeddingEntry& entry,
                           const protein::ContactGraphOptions& options);

// Records with drugs and proteins featurised once each.
struct PreparedDataset {
  std::vector<AffinityRecord> records;
  std::vector<DrugGraph> drugs;
  std::vector<ProteinGraph> proteins;
  std::vector<std::size_t> drug_of, protein_of;  // per record
};

// cache may be null. Featurisation runs in parallel over distinct entities.
PreparedDataset prepare(const std::vector<AffinityRecord>& records, const EmbeddingStore& store, FeatureCache* cache,
                        const protein::ContactGraphOptions& options);

}  // namespace hifdta::data
