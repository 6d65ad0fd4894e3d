#pragma once

// Cross-validated training, evaluation, prediction and the gradient-check
// suite behind the command-line tool.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "hifdta/dataset.hpp"
#include "hifdta/gradcheck.hpp"
#include "hifdta/metrics.hpp"
#include "hifdta/model.hpp"

namespace hifdta {

struct TrainConfig {
  ModelConfig model;
  double lr = 1e-3;
  double lr_decayed = 5e-4;
  std::size_t lr_decay_epoch = 100;  // last epoch at the initial rate
  std::size_t batch_size = 64;
  std::size_t max_epochs = 400;
  std::size_t patience = 100;
  double target_loss = 0.0;  // stop once the validation loss falls below this (0 disables)
  std::size_t folds = 5;
  std::uint64_t seed = 0;
  double lambda_aux = 1.0;
  bool transform = true;  // raw K_d in the affinity column
  std::string ablation = "full";
};

// Epochs count from 1.
double learning_rate_at(const TrainConfig& cfg, std::size_t epoch);

// Flat "key = value" lines; '#' starts a comment. Unknown keys and bad values
// raise UsageError naming the line.
TrainConfig parse_config(std::istream& in, const std::string& source = "config");
TrainConfig load_config(const std::filesystem::path& path);
std::string format_config(const TrainConfig& cfg);

// Comma-separated switches: full, concat, add, atom-only, sub-only, mol-only,
// drug-global-only, drug-local-only, prot-global-only, prot-local-only.
void apply_ablation(ModelConfig& cfg, const std::string& spec);
const std::vector<std::string>& ablation_names();

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0;
  double train_loss = 0;  // training-mode objective, sample weighted
  double val_loss = 0;    // eval-mode MSE on the held-out fold
};

struct FoldResult {
  std::size_t fold = 0;
  std::vector<EpochLog> curve;
  std::size_t best_epoch = 0;
  double best_val_loss = 0;
  metrics::EvalReport report;  // best checkpoint on the held-out fold
  std::filesystem::path checkpoint;
};

struct RunArtifacts {
  std::vector<FoldResult> folds;
  metrics::EvalReport mean, stddev;
  std::size_t parameter_count = 0;
};

using ProgressFn = std::function<void(std::size_t fold, const EpochLog&)>;

// Trains one model from scratch. Statistics (physchem z-scores, degree
// normalisers, output bias) are fitted on `train`. The returned model holds
// the best-validation weights.
std::unique_ptr<HifDta> train_model(const TrainConfig& cfg, const data::PreparedDataset& data,
                                    const std::vector<std::size_t>& train, const std::vector<std::size_t>& val,
                                    FoldResult& result, const ProgressFn& progress = {});

// k-fold cross-validation; checkpoints and reports go to out_dir when non-empty.
RunArtifacts cross_validate(const TrainConfig& cfg, const data::PreparedDataset& data,
                            const std::filesystem::path& out_dir, const ProgressFn& progress = {});

// Eval-mode predictions for the given records.
std::vector<double> predict(const HifDta& model, const data::PreparedDataset& data,
                            const std::vector<std::size_t>& indices, std::size_t batch_size = 64);
metrics::EvalReport evaluate(const HifDta& model, const data::PreparedDataset& data,
                             const std::vector<std::size_t>& indices, std::size_t batch_size = 64);

std::string report_json(const TrainConfig& cfg, const RunArtifacts& run);
std::string report_table(const RunArtifacts& run);

// Pairs for prediction: the dataset columns, with affinity optional.
std::vector<data::AffinityRecord> load_pairs(const std::filesystem::path& path);

struct GradCheckEntry {
  std::string name;
  GradCheckResult result;
  double seconds = 0;
};

// Finite-difference checks over every op and composed module on small inputs.
std::vector<GradCheckEntry> gradcheck_suite(std::uint64_t seed = 7);
std::string gradcheck_json(const std::vector<GradCheckEntry>& entries);

// Small proteins and molecules with stub embeddings for checks and demos.
ProteinGraph toy_protein(const std::string& id, std::size_t length, std::uint64_t seed,
                         const protein::ContactGraphOptions& options = {});

}  // namespace hifdta
