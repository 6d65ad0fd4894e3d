#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "hifdta/rng.hpp"
#include "hifdta/tensor.hpp"

namespace hifdta {

// Ordered collection of named tensors. Parameters are trainable; buffers are
// fitted statistics and metadata that travel with a checkpoint.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
    bool trainable;
  };

  Tensor add_param(const std::string& name, Tensor t);
  Tensor add_buffer(const std::string& name, Tensor t);

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Tensor> parameters() const;
  const Tensor* find(const std::string& name) const;
  Tensor& at(const std::string& name);

  std::size_t parameter_count() const;  // trainable scalars
  void zero_grad();

  // Copies values (not identity) from `other`; names and shapes must match.
  void copy_values_from(const ParamStore& other);

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

namespace init {

// U(-sqrt(6 / fan_in), sqrt(6 / fan_in)), the ReLU-preserving Kaiming variant.
Tensor he_uniform(std::size_t fan_in, std::size_t fan_out, CounterRng& rng);
// Rows x cols matrix with orthonormal rows or columns (whichever is fewer).
Tensor orthogonal(std::size_t rows, std::size_t cols, CounterRng& rng);
Tensor normal(Shape shape, double stddev, CounterRng& rng);

}  // namespace init

// Binary checkpoint: "HIFD", u32 version, then per tensor
// (u32 name length, UTF-8 name, u32 rank, u32 dims[rank], f64 LE payload).
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const ParamStore& store);
std::map<std::string, Tensor> read_checkpoint(const std::filesystem::path& path);
// Overwrites every entry of `store` from the file; missing or mis-shaped
// entries are a FormatError.
void load_checkpoint(const std::filesystem::path& path, ParamStore& store);

}  // namespace hifdta
