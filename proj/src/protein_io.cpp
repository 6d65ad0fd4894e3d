#include "hifdta/protein_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "hifdta/errors.hpp"
#include "hifdta/rng.hpp"

namespace hifdta::protein {

namespace {

static_assert(std::endian::native == std::endian::little, "embedding IO assumes a little-endian host");

// Rows follow kAlphabet order.
constexpr std::array<std::array<double, kPhyschemDim>, 20> kPhyschem = {{
    // KD    bulk   polar  pI     helix  sheet  turn   mass    chg   hbd  hba  aliph
    {1.8, 11.50, 8.1, 6.00, 1.42, 0.83, 0.66, 89.09, 0.0, 0, 0, 1},     // A
    {2.5, 13.46, 5.5, 5.07, 0.70, 1.19, 1.19, 121.16, 0.0, 1, 0, 0},    // C
    {-3.5, 11.68, 13.0, 2.77, 1.01, 0.54, 1.46, 133.10, -1.0, 0, 4, 0}, // D
    {-3.5, 13.57, 12.3, 3.22, 1.51, 0.37, 0.74, 147.13, -1.0, 0, 4, 0}, // E
    {2.8, 19.80, 5.2, 5.48, 1.13, 1.38, 0.60, 165.19, 0.0, 0, 0, 0},    // F
    {-0.4, 3.40, 9.0, 5.97, 0.57, 0.75, 1.56, 75.07, 0.0, 0, 0, 0},     // G
    {-3.2, 13.69, 10.4, 7.59, 1.00, 0.87, 0.95, 155.16, 0.1, 1, 1, 0},  // H
    {4.5, 21.40, 5.2, 6.02, 1.08, 1.60, 0.47, 131.17, 0.0, 0, 0, 1},    // I
    {-3.9, 15.71, 11.3, 9.74, 1.16, 0.74, 1.01, 146.19, 1.0, 2, 0, 0},  // K
    {3.8, 21.40, 4.9, 5.98, 1.21, 1.30, 0.59, 131.17, 0.0, 0, 0, 1},    // L
    {1.9, 16.25, 5.7, 5.74, 1.45, 1.05, 0.60, 149.21, 0.0, 0, 1, 0},    // M
    {-3.5, 12.82, 11.6, 5.41, 0.67, 0.89, 1.56, 132.12, 0.0, 2, 2, 0},  // N
    {-1.6, 17.43, 8.0, 6.30, 0.57, 0.55, 1.52, 115.13, 0.0, 0, 0, 0},   // P
    {-3.5, 14.45, 10.5, 5.65, 1.11, 1.10, 0.98, 146.15, 0.0, 2, 2, 0},  // Q
    {-4.5, 14.28, 10.5, 10.76, 0.98, 0.93, 0.95, 174.20, 1.0, 4, 0, 0}, // R
    {-0.8, 9.47, 9.2, 5.68, 0.77, 0.75, 1.43, 105.09, 0.0, 1, 2, 0},    // S
    {-0.7, 15.77, 8.6, 5.60, 0.83, 1.19, 0.96, 119.12, 0.0, 1, 2, 0},   // T
    {4.2, 21.57, 5.9, 5.96, 1.06, 1.70, 0.50, 117.15, 0.0, 0, 0, 1},    // V
    {-0.9, 21.67, 5.4, 5.89, 1.08, 1.37, 0.96, 204.23, 0.0, 1, 0, 0},   // W
    {-1.3, 18.03, 6.2, 5.66, 0.69, 1.47, 1.14, 181.19, 0.0, 1, 2, 0},   // Y
}};

std::array<double, kPhyschemDim> mean_row() {
  std::array<double, kPhyschemDim> m{};
  for (const auto& row : kPhyschem)
    for (std::size_t k = 0; k < kPhyschemDim; ++k) m[k] += row[k] / 20.0;
  return m;
}

void write_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }

std::uint32_t read_u32(std::istream& is, const std::string& what) {
  std::uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), 4)) throw FormatError(what + ": truncated header");
  return v;
}

void expect_magic(std::istream& is, const char* magic, const std::string& what) {
  char buf[4];
  if (!is.read(buf, 4) || std::memcmp(buf, magic, 4) != 0)
    throw FormatError(what + ": bad magic (expected " + std::string(magic, 4) + ")");
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

std::uint64_t id_hash(const std::string& id) { return stable_hash(id.data(), id.size()); }

}  // namespace

std::uint8_t residue_index(char residue) {
  const auto pos = kAlphabet.find(static_cast<char>(std::toupper(static_cast<unsigned char>(residue))));
  return pos == std::string_view::npos ? 20 : static_cast<std::uint8_t>(pos);
}

const std::array<double, kPhyschemDim>& physchem_row(std::uint8_t index) {
  static const std::array<double, kPhyschemDim> unknown = mean_row();
  return index < 20 ? kPhyschem[index] : unknown;
}

PhyschemStats fit_physchem(const std::vector<const std::vector<std::uint8_t>*>& sequences) {
  PhyschemStats s;
  double n = 0.0;
  for (const auto* seq : sequences)
    for (auto r : *seq) {
      const auto& row = physchem_row(r);
      for (std::size_t k = 0; k < kPhyschemDim; ++k) s.mean[k] += row[k];
      n += 1.0;
    }
  if (n == 0.0) {
    s.stddev.fill(1.0);
    return s;
  }
  for (auto& m : s.mean) m /= n;
  s.stddev.fill(0.0);
  for (const auto* seq : sequences)
    for (auto r : *seq) {
      const auto& row = physchem_row(r);
      for (std::size_t k = 0; k < kPhyschemDim; ++k) s.stddev[k] += (row[k] - s.mean[k]) * (row[k] - s.mean[k]);
    }
  for (auto& v : s.stddev) {
    v = std::sqrt(v / n);
    if (v < 1e-12) v = 1.0;
  }
  return s;
}

std::vector<float> read_embedding(const std::filesystem::path& path, const std::string& protein_id,
                                  std::size_t expected_rows) {
  const std::string what = "embedding for protein " + protein_id + " (" + path.string() + ")";
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError(what + ": cannot open");
  expect_magic(is, "HFE1", what);
  const std::uint32_t rows = read_u32(is, what);
  const std::uint32_t cols = read_u32(is, what);
  if (cols != kEmbeddingDim) throw FormatError(what + ": expected 1280 columns, found " + std::to_string(cols));
  if (rows != expected_rows)
    throw FormatError(what + ": " + std::to_string(rows) + " rows but sequence length " +
                      std::to_string(expected_rows));
  std::vector<float> values(static_cast<std::size_t>(rows) * cols);
  if (!is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float))))
    throw FormatError(what + ": truncated payload");
  for (float v : values)
    if (!std::isfinite(v)) throw FormatError(what + ": non-finite value");
  return values;
}

void write_embedding(const std::filesystem::path& path, const std::vector<float>& values, std::size_t rows) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot write " + path.string());
  os.write("HFE1", 4);
  write_u32(os, static_cast<std::uint32_t>(rows));
  write_u32(os, static_cast<std::uint32_t>(kEmbeddingDim));
  os.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)));
}

ContactMap read_contacts(const std::filesystem::path& path, const std::string& protein_id, std::size_t expected_rows) {
  const std::string what = "contacts for protein " + protein_id + " (" + path.string() + ")";
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError(what + ": cannot open");
  expect_magic(is, "HFC1", what);
  ContactMap map;
  map.size = read_u32(is, what);
  if (map.size != expected_rows)
    throw FormatError(what + ": size " + std::to_string(map.size) + " but sequence length " +
                      std::to_string(expected_rows));
  map.prob.resize(map.size * map.size);
  if (!is.read(reinterpret_cast<char*>(map.prob.data()), static_cast<std::streamsize>(map.prob.size() * sizeof(float))))
    throw FormatError(what + ": truncated payload");
  for (std::size_t i = 0; i < map.size; ++i)
    for (std::size_t j = 0; j < map.size; ++j) {
      const float p = map.at(i, j);
      if (!std::isfinite(p)) throw FormatError(what + ": non-finite value");
      if (std::abs(p - map.at(j, i)) > 1e-6f)
        throw FormatError(what + ": asymmetric at (" + std::to_string(i) + ", " + std::to_string(j) + ")");
    }
  return map;
}

void write_contacts(const std::filesystem::path& path, const ContactMap& map) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot write " + path.string());
  os.write("HFC1", 4);
  write_u32(os, static_cast<std::uint32_t>(map.size));
  os.write(reinterpret_cast<const char*>(map.prob.data()), static_cast<std::streamsize>(map.prob.size() * sizeof(float)));
}

std::vector<float> stub_embedding(const std::string& protein_id, std::string_view sequence, std::uint64_t seed) {
  const std::uint64_t pid = id_hash(protein_id);
  std::vector<float> out(sequence.size() * kEmbeddingDim);
  for (std::size_t t = 0; t < sequence.size(); ++t) {
    const std::uint64_t stream = splitmix64(pid ^ splitmix64(t * 32 + residue_index(sequence[t])));
    CounterRng rng(seed, stream);
    for (std::size_t c = 0; c < kEmbeddingDim; ++c) out[t * kEmbeddingDim + c] = static_cast<float>(rng.normal());
  }
  return out;
}

ContactMap stub_contacts(const std::string& protein_id, std::size_t length, std::uint64_t seed) {
  ContactMap map;
  map.size = length;
  map.prob.assign(length * length, 1.0f);
  CounterRng rng(seed, splitmix64(id_hash(protein_id) ^ 0xc0ffeeULL));
  for (std::size_t i = 0; i < length; ++i)
    for (std::size_t j = i + 1; j < length; ++j) {
      double p = sigmoid(-3.0 + rng.normal());
      if (j - i <= 2) p = std::min(1.0, p + 0.6);
      map.prob[i * length + j] = map.prob[j * length + i] = static_cast<float>(p);
    }
  return map;
}

ContactGraph build_contact_graph(const ContactMap& map, const ContactGraphOptions& options) {
  ContactGraph g;
  g.num_nodes = map.size;
  for (std::size_t i = 0; i < map.size; ++i)
    for (std::size_t j = i + 1; j < map.size; ++j) {
      const double p = map.at(i, j);
      if (p >= options.threshold) {
        g.edges.emplace_back(i, j);
        g.prob.push_back(p);
      }
    }
  return g;
}

std::array<double, kRbfDim> rbf_features(double p, const ContactGraphOptions& options) {
  std::array<double, kRbfDim> f{};
  const double step = (options.rbf_high - options.rbf_low) / static_cast<double>(kRbfDim - 1);
  for (std::size_t k = 0; k < kRbfDim; ++k) {
    const double c = options.rbf_low + step * static_cast<double>(k);
    f[k] = std::exp(-(p - c) * (p - c) / (2.0 * options.rbf_width * options.rbf_width));
  }
  return f;
}

}  // namespace hifdta::protein
