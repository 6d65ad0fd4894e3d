#include "hifdta/params.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "hifdta/errors.hpp"

namespace hifdta {

Tensor ParamStore::add_param(const std::string& name, Tensor t) {
  if (index_.count(name)) throw UsageError("duplicate parameter " + name);
  t.set_requires_grad(true);
  index_[name] = entries_.size();
  entries_.push_back({name, t, true});
  return t;
}

Tensor ParamStore::add_buffer(const std::string& name, Tensor t) {
  if (index_.count(name)) throw UsageError("duplicate buffer " + name);
  t.set_requires_grad(false);
  index_[name] = entries_.size();
  entries_.push_back({name, t, false});
  return t;
}

std::vector<Tensor> ParamStore::parameters() const {
  std::vector<Tensor> out;
  for (const auto& e : entries_)
    if (e.trainable) out.push_back(e.tensor);
  return out;
}

const Tensor* ParamStore::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &entries_[it->second].tensor;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw UsageError("unknown parameter " + name);
  return entries_[it->second].tensor;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_)
    if (e.trainable) n += e.tensor.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

void ParamStore::copy_values_from(const ParamStore& other) {
  for (auto& e : entries_) {
    const Tensor* src = other.find(e.name);
    if (!src || src->shape() != e.tensor.shape()) throw UsageError("copy_values_from: mismatch at " + e.name);
    std::copy(src->data().begin(), src->data().end(), e.tensor.mutable_data().begin());
  }
}

namespace init {

Tensor he_uniform(std::size_t fan_in, std::size_t fan_out, CounterRng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  std::vector<double> v(fan_in * fan_out);
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return Tensor::from({fan_in, fan_out}, std::move(v));
}

Tensor orthogonal(std::size_t rows, std::size_t cols, CounterRng& rng) {
  // Gram-Schmidt on the longer side's short vectors.
  const bool by_rows = rows <= cols;
  const std::size_t count = by_rows ? rows : cols;
  const std::size_t len = by_rows ? cols : rows;
  std::vector<std::vector<double>> basis;
  basis.reserve(count);
  while (basis.size() < count) {
    std::vector<double> v(len);
    for (auto& x : v) x = rng.normal();
    for (const auto& q : basis) {
      double dot = 0.0;
      for (std::size_t i = 0; i < len; ++i) dot += v[i] * q[i];
      for (std::size_t i = 0; i < len; ++i) v[i] -= dot * q[i];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-8) continue;
    for (auto& x : v) x /= norm;
    basis.push_back(std::move(v));
  }
  std::vector<double> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = by_rows ? basis[r][c] : basis[c][r];
  return Tensor::from({rows, cols}, std::move(out));
}

Tensor normal(Shape shape, double stddev, CounterRng& rng) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = stddev * rng.normal();
  return Tensor::from(std::move(shape), std::move(v));
}

}  // namespace init

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

void write_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }

std::uint32_t read_u32(std::istream& is, const std::filesystem::path& path) {
  std::uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), 4)) throw FormatError(path.string() + ": truncated checkpoint");
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParamStore& store) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot write checkpoint " + path.string());
  os.write("HIFD", 4);
  write_u32(os, kCheckpointVersion);
  for (const auto& e : store.entries()) {
    write_u32(os, static_cast<std::uint32_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    write_u32(os, static_cast<std::uint32_t>(e.tensor.rank()));
    for (auto d : e.tensor.shape()) write_u32(os, static_cast<std::uint32_t>(d));
    os.write(reinterpret_cast<const char*>(e.tensor.data().data()),
             static_cast<std::streamsize>(e.tensor.numel() * sizeof(double)));
  }
  if (!os) throw FormatError("failed writing checkpoint " + path.string());
}

std::map<std::string, Tensor> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "HIFD", 4) != 0)
    throw FormatError(path.string() + ": bad checkpoint magic");
  const std::uint32_t version = read_u32(is, path);
  if (version != kCheckpointVersion)
    throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  std::map<std::string, Tensor> out;
  while (is.peek() != std::char_traits<char>::eof()) {
    const std::uint32_t len = read_u32(is, path);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw FormatError(path.string() + ": truncated name");
    const std::uint32_t rank = read_u32(is, path);
    Shape shape(rank);
    for (auto& d : shape) d = read_u32(is, path);
    std::vector<double> values(shape_numel(shape));
    if (!is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double))))
      throw FormatError(path.string() + ": truncated payload for " + name);
    out.emplace(name, Tensor::from(std::move(shape), std::move(values)));
  }
  return out;
}

void load_checkpoint(const std::filesystem::path& path, ParamStore& store) {
  auto tensors = read_checkpoint(path);
  for (const auto& e : store.entries()) {
    auto it = tensors.find(e.name);
    if (it == tensors.end()) throw FormatError(path.string() + ": missing tensor " + e.name);
    if (it->second.shape() != e.tensor.shape())
      throw FormatError(path.string() + ": shape mismatch for " + e.name + " (" + shape_str(it->second.shape()) +
                        " vs " + shape_str(e.tensor.shape()) + ")");
    Tensor dst = e.tensor;
    std::copy(it->second.data().begin(), it->second.data().end(), dst.mutable_data().begin());
  }
}

}  // namespace hifdta
