#include "hifdta/dataset.hpp"

#include <charconv>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "hifdta/errors.hpp"
#include "hifdta/rng.hpp"

namespace hifdta::data {
namespace fs = std::filesystem;

double pkd_transform(double kd_nm) {
  if (!(kd_nm > 0.0) || !std::isfinite(kd_nm))
    throw std::domain_error("pkd_transform: K_d must be positive and finite, got " + std::to_string(kd_nm));
  return -std::log10(kd_nm / 1e9);
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

bool valid_sequence(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s)
    if (c != 'X' && protein::kAlphabet.find(c) == std::string_view::npos) return false;
  return true;
}

[[noreturn]] void row_error(const std::string& source, std::size_t line, const std::string& what) {
  throw FormatError(source + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

LoadResult parse_dataset(std::istream& in, const std::string& source, bool transform) {
  static const std::vector<std::string> header{"drug_id", "smiles", "protein_id", "sequence", "affinity"};
  LoadResult out;
  std::map<std::pair<std::string, std::string>, std::size_t> seen;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (!have_header) {
      if (fields != header)
        row_error(source, lineno, "expected header drug_id\\tsmiles\\tprotein_id\\tsequence\\taffinity");
      have_header = true;
      continue;
    }
    if (fields.size() != 5)
      row_error(source, lineno, "expected 5 tab-separated fields, found " + std::to_string(fields.size()));
    AffinityRecord r{fields[0], fields[1], fields[2], fields[3], 0.0};
    if (r.drug_id.empty() || r.protein_id.empty()) row_error(source, lineno, "empty id");
    if (r.smiles.empty()) row_error(source, lineno, "empty SMILES");
    if (!valid_sequence(r.sequence)) row_error(source, lineno, "sequence has letters outside the residue alphabet");
    const std::string& a = fields[4];
    auto [ptr, ec] = std::from_chars(a.data(), a.data() + a.size(), r.affinity);
    if (ec != std::errc() || ptr != a.data() + a.size() || !std::isfinite(r.affinity))
      row_error(source, lineno, "affinity '" + a + "' is not a finite number");
    if (transform) {
      try {
        r.affinity = pkd_transform(r.affinity);
      } catch (const std::domain_error& e) {
        row_error(source, lineno, e.what());
      }
    }
    auto key = std::make_pair(r.drug_id, r.protein_id);
    auto it = seen.find(key);
    if (it != seen.end()) {
      out.warnings.push_back(source + ":" + std::to_string(lineno) + ": duplicate pair (" + r.drug_id + ", " +
                             r.protein_id + "); the later affinity wins");
      out.records[it->second] = std::move(r);
      continue;
    }
    seen.emplace(key, out.records.size());
    out.records.push_back(std::move(r));
  }
  if (!have_header) throw FormatError(source + ": empty dataset file");
  return out;
}

LoadResult load_dataset(const fs::path& path, bool transform) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open dataset " + path.string());
  return parse_dataset(in, path.string(), transform);
}

void write_dataset(const fs::path& path, const std::vector<AffinityRecord>& records) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "drug_id\tsmiles\tprotein_id\tsequence\taffinity\n";
  out.precision(17);
  for (const auto& r : records)
    out << r.drug_id << '\t' << r.smiles << '\t' << r.protein_id << '\t' << r.sequence << '\t' << r.affinity << '\n';
}

FoldSplit kfold_split(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2 || k > n) throw UsageError("kfold_split: need 2 <= k <= n, got k=" + std::to_string(k));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  CounterRng rng(seed, 0x5f0d);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  FoldSplit split{seed, {}};
  std::size_t start = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t size = n / k + (f < n % k ? 1 : 0);
    split.folds.emplace_back(order.begin() + start, order.begin() + start + size);
    start += size;
  }
  return split;
}

// --- embedding store -------------------------------------------------------

namespace {

std::uint64_t file_digest(const fs::path& path, std::uint64_t h) {
  std::ifstream in(path, std::ios::binary);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    h = stable_hash(buf.data(), static_cast<std::size_t>(in.gcount()), h);
  }
  return h;
}

std::uint64_t hash_str(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const std::uint64_t n = s.size();
  h = stable_hash(&n, sizeof n, h);
  return stable_hash(s.data(), s.size(), h);
}

template <typename T>
std::uint64_t hash_pod(const T& v, std::uint64_t h) {
  return stable_hash(&v, sizeof v, h);
}

}  // namespace

EmbeddingStore::EmbeddingStore(fs::path dir, bool stub, std::uint64_t stub_seed)
    : dir_(std::move(dir)), stub_(stub), seed_(stub_seed) {}

bool EmbeddingStore::has(const std::string& id) const {
  return !dir_.empty() && fs::exists(dir_ / (id + ".emb")) && fs::exists(dir_ / (id + ".cmap"));
}

EmbeddingEntry EmbeddingStore::load(const std::string& id, const std::string& sequence) const {
  EmbeddingEntry e;
  if (has(id)) {
    const fs::path emb = dir_ / (id + ".emb"), cmap = dir_ / (id + ".cmap");
    e.esm = protein::read_embedding(emb, id, sequence.size());
    e.contacts = protein::read_contacts(cmap, id, sequence.size());
    e.digest = file_digest(cmap, file_digest(emb, hash_str("files")));
    return e;
  }
  if (!stub_) throw FormatError("missing embeddings for protein " + id);
  e.esm = protein::stub_embedding(id, sequence, seed_);
  e.contacts = protein::stub_contacts(id, sequence.size(), seed_);
  e.digest = hash_pod(seed_, hash_str(sequence, hash_str(id, hash_str("stub"))));
  return e;
}

void EmbeddingStore::require(const std::vector<AffinityRecord>& records) const {
  if (stub_) return;
  std::map<std::string, bool> missing;
  for (const auto& r : records)
    if (!missing.count(r.protein_id) && !has(r.protein_id)) missing[r.protein_id] = true;
  if (missing.empty()) return;
  std::string list;
  for (const auto& [id, _] : missing) list += (list.empty() ? "" : ", ") + id;
  throw FormatError("missing embeddings (" + std::to_string(missing.size()) + " proteins) in " + dir_.string() +
                    ": " + list);
}

void EmbeddingStore::write_stub(const fs::path& dir, const std::string& id, const std::string& sequence,
                                std::uint64_t seed) {
  fs::create_directories(dir);
  protein::write_embedding(dir / (id + ".emb"), protein::stub_embedding(id, sequence, seed), sequence.size());
  protein::write_contacts(dir / (id + ".cmap"), protein::stub_contacts(id, sequence.size(), seed));
}

// --- serialisation -----------------------------------------------------------

namespace {

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw FormatError("truncated cache entry");
  return v;
}

template <typename T>
void put_vec(std::ostream& out, const std::vector<T>& v) {
  put<std::uint64_t>(out, v.size());
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
}

template <typename T>
std::vector<T> get_vec(std::istream& in) {
  const auto n = get<std::uint64_t>(in);
  if (n > (1ULL << 32)) throw FormatError("corrupt cache entry");
  std::vector<T> v(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
  if (!in) throw FormatError("truncated cache entry");
  return v;
}

void put_pairs(std::ostream& out, const std::vector<std::pair<std::size_t, std::size_t>>& v) {
  std::vector<std::uint64_t> flat;
  for (auto [a, b] : v) flat.push_back(a), flat.push_back(b);
  put_vec(out, flat);
}

std::vector<std::pair<std::size_t, std::size_t>> get_pairs(std::istream& in) {
  auto flat = get_vec<std::uint64_t>(in);
  std::vector<std::pair<std::size_t, std::size_t>> v;
  for (std::size_t i = 0; i + 1 < flat.size(); i += 2) v.emplace_back(flat[i], flat[i + 1]);
  return v;
}

}  // namespace

void save_drug_graph(std::ostream& out, const DrugGraph& g) {
  put<std::uint64_t>(out, g.num_atoms);
  put_vec(out, g.atom_features);
  put_pairs(out, g.bonds);
  put_vec(out, g.bond_features);
  put<std::uint64_t>(out, g.clusters.size());
  for (const auto& c : g.clusters) put_vec(out, std::vector<std::uint64_t>(c.begin(), c.end()));
  put_vec(out, g.cluster_types);
  put_vec(out, std::vector<std::uint64_t>(g.first_cluster.begin(), g.first_cluster.end()));
}

DrugGraph load_drug_graph(std::istream& in) {
  DrugGraph g;
  g.num_atoms = get<std::uint64_t>(in);
  g.atom_features = get_vec<double>(in);
  g.bonds = get_pairs(in);
  g.bond_features = get_vec<double>(in);
  const auto nc = get<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < nc; ++i) {
    auto c = get_vec<std::uint64_t>(in);
    g.clusters.emplace_back(c.begin(), c.end());
  }
  g.cluster_types = get_vec<std::uint32_t>(in);
  auto fc = get_vec<std::uint64_t>(in);
  g.first_cluster.assign(fc.begin(), fc.end());
  return g;
}

void save_protein_graph(std::ostream& out, const ProteinGraph& g) {
  put_vec(out, std::vector<char>(g.id.begin(), g.id.end()));
  put_vec(out, g.residues);
  put_vec(out, g.esm);
  put<std::uint64_t>(out, g.contacts.num_nodes);
  put_pairs(out, g.contacts.edges);
  put_vec(out, g.contacts.prob);
}

ProteinGraph load_protein_graph(std::istream& in) {
  ProteinGraph g;
  auto id = get_vec<char>(in);
  g.id.assign(id.begin(), id.end());
  g.residues = get_vec<std::uint8_t>(in);
  g.esm = get_vec<float>(in);
  g.contacts.num_nodes = get<std::uint64_t>(in);
  g.contacts.edges = get_pairs(in);
  g.contacts.prob = get_vec<double>(in);
  return g;
}

ProteinGraph build_protein(const std::string& id, const std::string& sequence, const EmbeddingEntry& entry,
                           const protein::ContactGraphOptions& options) {
  ProteinGraph g;
  g.id = id;
  for (char c : sequence) g.residues.push_back(protein::residue_index(c));
  g.esm = entry.esm;
  g.contacts = protein::build_contact_graph(entry.contacts, options);
  return g;
}

// --- feature cache -------------------------------------------------------------

namespace {

constexpr char kCacheMagic[4] = {'H', 'F', 'X', '1'};

bool read_header(std::istream& in, std::uint32_t version, std::uint64_t key) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != std::string(kCacheMagic, 4)) return false;
  std::uint32_t v = 0;
  std::uint64_t k = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  in.read(reinterpret_cast<char*>(&k), sizeof k);
  return in && v == version && k == key;
}

template <typename Save>
void write_entry(const fs::path& path, std::uint32_t version, std::uint64_t key, Save&& save) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw FormatError("cannot write cache entry " + tmp.string());
    out.write(kCacheMagic, 4);
    put(out, version);
    put(out, key);
    save(out);
  }
  fs::rename(tmp, path);
}

template <typename Load>
bool try_read(const fs::path& path, std::uint32_t version, std::uint64_t key, Load&& load) {
  std::ifstream in(path, std::ios::binary);
  if (!in || !read_header(in, version, key)) return false;
  try {
    load(in);
    return true;
  } catch (const FormatError&) {
    return false;
  }
}

}  // namespace

FeatureCache::FeatureCache(fs::path root, std::uint32_t version) : root_(std::move(root)), version_(version) {}

std::uint64_t FeatureCache::drug_key(const std::string& smiles) const {
  return hash_str(smiles, hash_pod(version_, hash_str("drug")));
}

std::uint64_t FeatureCache::protein_key(const std::string& sequence, std::uint64_t digest,
                                        const protein::ContactGraphOptions& o) const {
  std::uint64_t h = hash_pod(version_, hash_str("protein"));
  h = hash_pod(digest, hash_str(sequence, h));
  for (double v : {o.threshold, o.rbf_low, o.rbf_high, o.rbf_width}) h = hash_pod(v, h);
  return h;
}

fs::path FeatureCache::entry_path(const std::string& kind, std::uint64_t key) const {
  char name[32];
  std::snprintf(name, sizeof name, "%016llx.bin", static_cast<unsigned long long>(key));
  return root_ / kind / name;
}

DrugGraph FeatureCache::drug(const std::string& smiles) {
  const std::uint64_t key = drug_key(smiles);
  const fs::path path = entry_path("drug", key);
  DrugGraph g;
  if (try_read(path, version_, key, [&](std::istream& in) { g = load_drug_graph(in); })) {
    ++hits_;
    return g;
  }
  g = featurize_drug(smiles);
  ++drug_parses_;
#pragma omp critical(hifdta_cache_writer)
  write_entry(path, version_, key, [&](std::ostream& out) { save_drug_graph(out, g); });
  return g;
}

ProteinGraph FeatureCache::protein(const std::string& id, const std::string& sequence, const EmbeddingStore& store,
                                   const protein::ContactGraphOptions& options) {
  EmbeddingEntry entry = store.load(id, sequence);
  const std::uint64_t key = protein_key(sequence, entry.digest, options);
  const fs::path path = entry_path("protein", key);
  ProteinGraph g;
  if (try_read(path, version_, key, [&](std::istream& in) { g = load_protein_graph(in); })) {
    g.id = id;
    ++hits_;
    return g;
  }
  g = build_protein(id, sequence, entry, options);
  ++protein_builds_;
#pragma omp critical(hifdta_cache_writer)
  write_entry(path, version_, key, [&](std::ostream& out) { save_protein_graph(out, g); });
  return g;
}

PreparedDataset prepare(const std::vector<AffinityRecord>& records, const EmbeddingStore& store, FeatureCache* cache,
                        const protein::ContactGraphOptions& options) {
  store.require(records);
  PreparedDataset out;
  out.records = records;
  std::map<std::string, std::size_t> drug_index, protein_index;
  std::vector<const AffinityRecord*> drug_src, protein_src;
  for (const auto& r : records) {
    auto [d, dnew] = drug_index.emplace(r.drug_id, drug_src.size());
    if (dnew) drug_src.push_back(&r);
    else if (drug_src[d->second]->smiles != r.smiles)
      throw FormatError("drug " + r.drug_id + " appears with two different SMILES");
    auto [p, pnew] = protein_index.emplace(r.protein_id, protein_src.size());
    if (pnew) protein_src.push_back(&r);
    else if (protein_src[p->second]->sequence != r.sequence)
      throw FormatError("protein " + r.protein_id + " appears with two different sequences");
    out.drug_of.push_back(d->second);
    out.protein_of.push_back(p->second);
  }
  out.drugs.resize(drug_src.size());
  out.proteins.resize(protein_src.size());

  // Entries are independent; the first failure is rethrown after the loop.
  std::exception_ptr failure;
  const long nd = static_cast<long>(drug_src.size()), np = static_cast<long>(protein_src.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < nd + np; ++i) {
    try {
      if (i < nd) {
        const auto& r = *drug_src[i];
        try {
          out.drugs[i] = cache ? cache->drug(r.smiles) : featurize_drug(r.smiles);
        } catch (const ParseError& e) {
          throw FormatError("drug " + r.drug_id + ": " + e.what());
        }
      } else {
        const auto& r = *protein_src[i - nd];
        out.proteins[i - nd] = cache ? cache->protein(r.protein_id, r.sequence, store, options)
                                     : build_protein(r.protein_id, r.sequence, store.load(r.protein_id, r.sequence),
                                                     options);
      }
    } catch (...) {
#pragma omp critical(hifdta_prepare_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace hifdta::data
