#include "hifdta/train.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "hifdta/errors.hpp"
#include "hifdta/optim.hpp"

namespace hifdta {
namespace fs = std::filesystem;
using nlohmann::ordered_json;

double learning_rate_at(const TrainConfig& cfg, std::size_t epoch) {
  return epoch <= cfg.lr_decay_epoch ? cfg.lr : cfg.lr_decayed;
}

// --- configuration --------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <typename T>
T parse_number(const std::string& text, const std::string& where) {
  T v{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) throw UsageError(where + ": bad number '" + text + "'");
  return v;
}

bool parse_bool(const std::string& text, const std::string& where) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw UsageError(where + ": expected true or false, got '" + text + "'");
}

std::vector<std::size_t> parse_list(const std::string& text, const std::string& where) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<std::size_t>(trim(item), where));
  if (out.empty()) throw UsageError(where + ": empty list");
  return out;
}

const char* fusion_name(FusionStrategy s) {
  switch (s) {
    case FusionStrategy::Gated: return "bilinear";
    case FusionStrategy::Concat: return "concat";
    case FusionStrategy::Add: return "add";
  }
  return "?";
}

}  // namespace

const std::vector<std::string>& ablation_names() {
  static const std::vector<std::string> names{"full",         "concat",           "add",
                                              "atom-only",    "sub-only",         "mol-only",
                                              "drug-global-only", "drug-local-only", "prot-global-only",
                                              "prot-local-only"};
  return names;
}

void apply_ablation(ModelConfig& cfg, const std::string& spec) {
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty() || item == "full") continue;
    if (item == "concat") cfg.fusion = FusionStrategy::Concat;
    else if (item == "add") cfg.fusion = FusionStrategy::Add;
    else if (item == "atom-only") cfg.scales = {true, false, false};
    else if (item == "sub-only") cfg.scales = {false, true, false};
    else if (item == "mol-only") cfg.scales = {false, false, true};
    else if (item == "drug-global-only") cfg.drug_local = false;
    else if (item == "drug-local-only") cfg.drug_global = false;
    else if (item == "prot-global-only") cfg.prot_local = false;
    else if (item == "prot-local-only") cfg.prot_global = false;
    else {
      std::string known;
      for (const auto& n : ablation_names()) known += " " + n;
      throw UsageError("unknown ablation '" + item + "'; expected one of:" + known);
    }
  }
  if (!cfg.drug_global && !cfg.drug_local) throw UsageError("ablation removes both drug pathways");
  if (!cfg.prot_global && !cfg.prot_local) throw UsageError("ablation removes both protein pathways");
}

TrainConfig parse_config(std::istream& in, const std::string& source) {
  TrainConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(lineno);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError(where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    ModelConfig& m = cfg.model;
    if (key == "lr") cfg.lr = parse_number<double>(value, where);
    else if (key == "lr_decayed") cfg.lr_decayed = parse_number<double>(value, where);
    else if (key == "lr_decay_epoch") cfg.lr_decay_epoch = parse_number<std::size_t>(value, where);
    else if (key == "batch_size") cfg.batch_size = parse_number<std::size_t>(value, where);
    else if (key == "max_epochs") cfg.max_epochs = parse_number<std::size_t>(value, where);
    else if (key == "patience") cfg.patience = parse_number<std::size_t>(value, where);
    else if (key == "target_loss") cfg.target_loss = parse_number<double>(value, where);
    else if (key == "folds") cfg.folds = parse_number<std::size_t>(value, where);
    else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(value, where);
    else if (key == "lambda_aux") cfg.lambda_aux = parse_number<double>(value, where);
    else if (key == "transform") cfg.transform = parse_bool(value, where);
    else if (key == "ablation") cfg.ablation = value;
    else if (key == "d") m.d = parse_number<std::size_t>(value, where);
    else if (key == "drug_heads") m.drug_heads = parse_number<std::size_t>(value, where);
    else if (key == "fusion_heads") m.fusion_heads = parse_number<std::size_t>(value, where);
    else if (key == "fusion_rank") m.fusion_rank = parse_number<std::size_t>(value, where);
    else if (key == "layers") m.layers = parse_number<std::size_t>(value, where);
    else if (key == "ssm_state") m.ssm_state = parse_number<std::size_t>(value, where);
    else if (key == "clusters") m.clusters = parse_list(value, where);
    else if (key == "dropout") m.dropout = parse_number<double>(value, where);
    else if (key == "contact_threshold") m.contacts.threshold = parse_number<double>(value, where);
    else throw UsageError(where + ": unknown key '" + key + "'");
    bool ok = true;
    if (key == "lr") ok = cfg.lr > 0;
    else if (key == "lr_decayed") ok = cfg.lr_decayed > 0;
    else if (key == "batch_size") ok = cfg.batch_size > 0;
    else if (key == "max_epochs") ok = cfg.max_epochs > 0;
    else if (key == "folds") ok = cfg.folds >= 2;
    else if (key == "target_loss") ok = cfg.target_loss >= 0;
    else if (key == "lambda_aux") ok = cfg.lambda_aux >= 0;
    else if (key == "d") ok = m.d >= 2;
    else if (key == "drug_heads") ok = m.drug_heads > 0;
    else if (key == "fusion_heads") ok = m.fusion_heads > 0;
    else if (key == "fusion_rank") ok = m.fusion_rank > 0;
    else if (key == "ssm_state") ok = m.ssm_state > 0;
    else if (key == "dropout") ok = m.dropout >= 0 && m.dropout < 1;
    else if (key == "contact_threshold") ok = m.contacts.threshold >= 0 && m.contacts.threshold <= 1;
    else if (key == "clusters") ok = std::find(m.clusters.begin(), m.clusters.end(), 0) == m.clusters.end();
    if (!ok) throw UsageError(where + ": " + key + " out of range: " + value);
  }
  return cfg;
}

TrainConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path.string());
  return parse_config(in, path.string());
}

std::string format_config(const TrainConfig& c) {
  std::ostringstream out;
  out.precision(17);
  const ModelConfig& m = c.model;
  std::string clusters;
  for (std::size_t k : m.clusters) clusters += (clusters.empty() ? "" : ",") + std::to_string(k);
  out << "lr = " << c.lr << "\nlr_decayed = " << c.lr_decayed << "\nlr_decay_epoch = " << c.lr_decay_epoch
      << "\nbatch_size = " << c.batch_size << "\nmax_epochs = " << c.max_epochs << "\npatience = " << c.patience
      << "\ntarget_loss = " << c.target_loss
      << "\nfolds = " << c.folds << "\nseed = " << c.seed << "\nlambda_aux = " << c.lambda_aux
      << "\ntransform = " << (c.transform ? "true" : "false") << "\nablation = " << c.ablation << "\nd = " << m.d
      << "\ndrug_heads = " << m.drug_heads << "\nfusion_heads = " << m.fusion_heads
      << "\nfusion_rank = " << m.fusion_rank << "\nlayers = " << m.layers << "\nssm_state = " << m.ssm_state
      << "\nclusters = " << clusters << "\ndropout = " << m.dropout
      << "\ncontact_threshold = " << m.contacts.threshold << "\n";
  return out.str();
}

// --- batching -----------------------------------------------------------------

namespace {

PairBatch batch_for(const data::PreparedDataset& data, std::span<const std::size_t> idx,
                    const protein::PhyschemStats& stats, const protein::ContactGraphOptions& options) {
  std::vector<const DrugGraph*> drugs;
  std::vector<const ProteinGraph*> proteins;
  std::vector<double> labels;
  for (std::size_t i : idx) {
    drugs.push_back(&data.drugs[data.drug_of[i]]);
    proteins.push_back(&data.proteins[data.protein_of[i]]);
    labels.push_back(data.records[i].affinity);
  }
  return make_pair_batch(drugs, proteins, labels, stats, options);
}

double eval_mse(const HifDta& model, const std::vector<PairBatch>& batches) {
  NoGradGuard guard;
  double sq = 0;
  std::size_t n = 0;
  for (const auto& b : batches) {
    ModelOutput out = model.forward(b, {});
    for (std::size_t i = 0; i < b.size(); ++i) {
      const double r = out.prediction[i] - b.labels[i];
      sq += r * r;
    }
    n += b.size();
  }
  return sq / static_cast<double>(n);
}

std::vector<std::vector<double>> snapshot(const ParamStore& store) {
  std::vector<std::vector<double>> out;
  for (const auto& e : store.entries()) out.push_back(e.tensor.values());
  return out;
}

void restore(ParamStore& store, const std::vector<std::vector<double>>& values) {
  auto& entries = store.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Tensor t = entries[i].tensor;
    std::copy(values[i].begin(), values[i].end(), t.mutable_data().begin());
  }
}

}  // namespace

std::unique_ptr<HifDta> train_model(const TrainConfig& cfg, const data::PreparedDataset& data,
                                    const std::vector<std::size_t>& train, const std::vector<std::size_t>& val,
                                    FoldResult& result, const ProgressFn& progress) {
  if (train.empty() || val.empty()) throw UsageError("train_model: empty training or validation set");
  ModelConfig mc = cfg.model;
  apply_ablation(mc, cfg.ablation);
  const std::uint64_t seed = counter_hash(cfg.seed, 0x7a11, result.fold);
  auto model = std::make_unique<HifDta>(mc, seed);

  // Training-fold statistics.
  std::set<std::size_t> drug_ids, protein_ids;
  double label_sum = 0;
  for (std::size_t i : train) {
    drug_ids.insert(data.drug_of[i]);
    protein_ids.insert(data.protein_of[i]);
    label_sum += data.records[i].affinity;
  }
  std::vector<const DrugGraph*> drugs;
  std::vector<const ProteinGraph*> proteins;
  std::vector<const std::vector<std::uint8_t>*> sequences;
  for (std::size_t d : drug_ids) drugs.push_back(&data.drugs[d]);
  for (std::size_t p : protein_ids) {
    proteins.push_back(&data.proteins[p]);
    sequences.push_back(&data.proteins[p].residues);
  }
  model->set_physchem(protein::fit_physchem(sequences));
  model->fit_degree_stats(drugs, proteins);
  model->predictor.set_output_bias(label_sum / static_cast<double>(train.size()));
  const protein::PhyschemStats stats = model->physchem();

  std::vector<PairBatch> val_batches;
  for (std::size_t s = 0; s < val.size(); s += cfg.batch_size)
    val_batches.push_back(batch_for(data, std::span(val).subspan(s, std::min(cfg.batch_size, val.size() - s)), stats,
                                    mc.contacts));

  AdamConfig ac;
  ac.lr = cfg.lr;
  ac.skip_missing = true;
  Adam adam(model->store(), ac);
  auto best = snapshot(model->store());
  result.best_epoch = 0;
  result.best_val_loss = std::numeric_limits<double>::infinity();
  result.curve.clear();
  std::vector<std::size_t> order = train;
  std::uint64_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    EpochLog log;
    log.epoch = epoch;
    log.lr = learning_rate_at(cfg, epoch);
    adam.set_lr(log.lr);
    CounterRng shuffle(seed, 0x5100 + epoch);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
    double total = 0;
    for (std::size_t s = 0; s < order.size(); s += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - s);
      PairBatch b = batch_for(data, std::span(order).subspan(s, n), stats, mc.contacts);
      ModelOutput out = model->forward(b, {true, seed, step++});
      Tensor loss = affinity_loss(out, b.labels, cfg.lambda_aux);
      backward(loss);
      adam.step();
      model->store().zero_grad();
      total += loss.item() * static_cast<double>(n);
    }
    log.train_loss = total / static_cast<double>(order.size());
    log.val_loss = eval_mse(*model, val_batches);
    result.curve.push_back(log);
    if (progress) progress(result.fold, log);
    if (log.val_loss < result.best_val_loss) {
      result.best_val_loss = log.val_loss;
      result.best_epoch = epoch;
      best = snapshot(model->store());
      if (log.val_loss < cfg.target_loss) break;
    } else if (epoch - result.best_epoch >= cfg.patience) {
      break;
    }
  }
  restore(model->store(), best);
  result.report = evaluate(*model, data, val, cfg.batch_size);
  return model;
}

std::vector<double> predict(const HifDta& model, const data::PreparedDataset& data,
                            const std::vector<std::size_t>& indices, std::size_t batch_size) {
  NoGradGuard guard;
  const protein::PhyschemStats stats = model.physchem();
  std::vector<double> out;
  for (std::size_t s = 0; s < indices.size(); s += batch_size) {
    PairBatch b = batch_for(data, std::span(indices).subspan(s, std::min(batch_size, indices.size() - s)), stats,
                            model.config().contacts);
    ModelOutput o = model.forward(b, {});
    out.insert(out.end(), o.prediction.values().begin(), o.prediction.values().end());
  }
  return out;
}

metrics::EvalReport evaluate(const HifDta& model, const data::PreparedDataset& data,
                             const std::vector<std::size_t>& indices, std::size_t batch_size) {
  std::vector<double> yhat = predict(model, data, indices, batch_size), y;
  for (std::size_t i : indices) y.push_back(data.records[i].affinity);
  return metrics::evaluate(y, yhat);
}

RunArtifacts cross_validate(const TrainConfig& cfg, const data::PreparedDataset& data, const fs::path& out_dir,
                            const ProgressFn& progress) {
  const data::FoldSplit split = data::kfold_split(data.records.size(), cfg.folds, cfg.seed);
  if (!out_dir.empty()) fs::create_directories(out_dir);
  RunArtifacts run;
  for (std::size_t f = 0; f < split.folds.size(); ++f) {
    std::vector<std::size_t> train;
    for (std::size_t g = 0; g < split.folds.size(); ++g)
      if (g != f) train.insert(train.end(), split.folds[g].begin(), split.folds[g].end());
    std::sort(train.begin(), train.end());
    FoldResult fr;
    fr.fold = f;
    auto model = train_model(cfg, data, train, split.folds[f], fr, progress);
    run.parameter_count = model->store().parameter_count();
    if (!out_dir.empty()) {
      fr.checkpoint = out_dir / ("fold" + std::to_string(f) + ".ckpt");
      model->save(fr.checkpoint.string());
    }
    run.folds.push_back(std::move(fr));
  }
  auto summarize = [&](auto field) {
    std::vector<double> v;
    for (const auto& fr : run.folds) v.push_back(field(fr.report));
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double var = 0;
    for (double x : v) var += (x - m) * (x - m);
    return std::pair{m, std::sqrt(var / v.size())};
  };
  std::tie(run.mean.ci, run.stddev.ci) = summarize([](const metrics::EvalReport& r) { return r.ci; });
  std::tie(run.mean.rm2, run.stddev.rm2) = summarize([](const metrics::EvalReport& r) { return r.rm2; });
  std::tie(run.mean.pcc, run.stddev.pcc) = summarize([](const metrics::EvalReport& r) { return r.pcc; });
  std::tie(run.mean.mse, run.stddev.mse) = summarize([](const metrics::EvalReport& r) { return r.mse; });
  run.mean.n = run.stddev.n = data.records.size();
  if (!out_dir.empty()) {
    std::ofstream(out_dir / "report.json") << report_json(cfg, run) << "\n";
    std::ofstream(out_dir / "report.txt") << report_table(run);
  }
  return run;
}

namespace {

ordered_json report_to_json(const metrics::EvalReport& r) {
  return ordered_json{{"ci", r.ci}, {"rm2", r.rm2}, {"pcc", r.pcc}, {"mse", r.mse}, {"n", r.n}};
}

}  // namespace

std::string report_json(const TrainConfig& cfg, const RunArtifacts& run) {
  ordered_json j;
  ModelConfig mc = cfg.model;
  apply_ablation(mc, cfg.ablation);
  j["seed"] = cfg.seed;
  j["ablation"] = cfg.ablation;
  j["fusion"] = fusion_name(mc.fusion);
  j["parameter_count"] = run.parameter_count;
  j["folds"] = ordered_json::array();
  for (const auto& f : run.folds) {
    ordered_json fj;
    fj["fold"] = f.fold;
    fj["epochs_run"] = f.curve.size();
    fj["best_epoch"] = f.best_epoch;
    fj["best_val_loss"] = f.best_val_loss;
    fj["metrics"] = report_to_json(f.report);
    ordered_json curve = ordered_json::array();
    for (const auto& e : f.curve)
      curve.push_back({{"epoch", e.epoch}, {"lr", e.lr}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}});
    fj["curve"] = std::move(curve);
    j["folds"].push_back(std::move(fj));
  }
  j["mean"] = report_to_json(run.mean);
  j["std"] = report_to_json(run.stddev);
  return j.dump(2);
}

std::string report_table(const RunArtifacts& run) {
  std::vector<std::pair<std::string, metrics::EvalReport>> rows;
  for (const auto& f : run.folds) rows.emplace_back("fold " + std::to_string(f.fold), f.report);
  rows.emplace_back("mean", run.mean);
  rows.emplace_back("std", run.stddev);
  return metrics::format_table(rows);
}

std::vector<data::AffinityRecord> load_pairs(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open pairs file " + path.string());
  std::string line;
  std::size_t lineno = 0;
  std::vector<data::AffinityRecord> out;
  std::size_t columns = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, '\t')) f.push_back(cell);
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (columns == 0) {
      if (f.size() < 4 || f[0] != "drug_id" || f[1] != "smiles" || f[2] != "protein_id" || f[3] != "sequence")
        throw FormatError(where + ": expected header drug_id\\tsmiles\\tprotein_id\\tsequence[\\taffinity]");
      columns = f.size();
      continue;
    }
    if (f.size() != columns) throw FormatError(where + ": expected " + std::to_string(columns) + " fields");
    if (f[0].empty() || f[2].empty() || f[1].empty() || f[3].empty()) throw FormatError(where + ": empty field");
    out.push_back({f[0], f[1], f[2], f[3], 0.0});
  }
  if (columns == 0) throw FormatError(path.string() + ": empty pairs file");
  return out;
}

// --- toy inputs ---------------------------------------------------------------------

ProteinGraph toy_protein(const std::string& id, std::size_t length, std::uint64_t seed,
                         const protein::ContactGraphOptions& options) {
  CounterRng rng(seed, stable_hash(id.data(), id.size()));
  std::string seq;
  for (std::size_t i = 0; i < length; ++i) seq += protein::kAlphabet[rng.below(protein::kAlphabet.size())];
  data::EmbeddingEntry e;
  e.esm = protein::stub_embedding(id, seq, seed);
  e.contacts = protein::stub_contacts(id, length, seed);
  return data::build_protein(id, seq, e, options);
}

}  // namespace hifdta
