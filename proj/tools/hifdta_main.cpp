#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "hifdta/chem.hpp"
#include "hifdta/errors.hpp"
#include "hifdta/junction_tree.hpp"
#include "hifdta/train.hpp"

namespace fs = std::filesystem;
using namespace hifdta;
using nlohmann::ordered_json;

namespace {

struct Common {
  std::string dataset, embeddings, config, ablation, cache = "cache";
  std::uint64_t seed = 0, stub_seed = 0;
  std::size_t folds = 5;
  bool stub = false;
  bool seed_set = false, folds_set = false, ablation_set = false;
};

void add_data_flags(CLI::App* app, Common& c, bool needs_dataset) {
  auto* ds = app->add_option("--dataset", c.dataset, "TSV with drug_id, smiles, protein_id, sequence, affinity");
  if (needs_dataset) ds->required();
  app->add_option("--embeddings", c.embeddings, "directory of <id>.emb and <id>.cmap files");
  app->add_flag("--stub-embeddings", c.stub, "generate seeded stand-ins for proteins without files");
  app->add_option("--stub-seed", c.stub_seed, "seed for stub embeddings");
  app->add_option("--cache", c.cache, "feature cache directory (empty disables)");
}

void add_model_flags(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "flat key = value training config");
  app->add_option("--seed", c.seed, "random seed")->each([&](const std::string&) { c.seed_set = true; });
  app->add_option("--folds", c.folds, "cross-validation folds")->each([&](const std::string&) { c.folds_set = true; });
  app->add_option("--ablation", c.ablation, "comma-separated architecture switches")->each([&](const std::string&) {
    c.ablation_set = true;
  });
}

TrainConfig resolve_config(const Common& c) {
  TrainConfig cfg = c.config.empty() ? TrainConfig{} : load_config(c.config);
  if (c.seed_set) cfg.seed = c.seed;
  if (c.folds_set) cfg.folds = c.folds;
  if (c.ablation_set) cfg.ablation = c.ablation;
  ModelConfig check = cfg.model;
  apply_ablation(check, cfg.ablation);
  return cfg;
}

data::PreparedDataset load_prepared(const Common& c, const std::vector<data::AffinityRecord>& records,
                                    const TrainConfig& cfg, data::FeatureCache* cache) {
  data::EmbeddingStore store(c.embeddings, c.stub, c.stub_seed);
  return data::prepare(records, store, cache, cfg.model.contacts);
}

std::vector<data::AffinityRecord> load_records(const Common& c, const TrainConfig& cfg) {
  data::LoadResult lr = data::load_dataset(c.dataset, cfg.transform);
  for (const auto& w : lr.warnings) std::cerr << "warning: " << w << "\n";
  return lr.records;
}

std::unique_ptr<data::FeatureCache> make_cache(const Common& c) {
  if (c.cache.empty()) return nullptr;
  return std::make_unique<data::FeatureCache>(c.cache);
}

ModelConfig model_config(const TrainConfig& cfg) {
  ModelConfig mc = cfg.model;
  apply_ablation(mc, cfg.ablation);
  return mc;
}

int run_decompose() {
  std::string line;
  std::size_t lineno = 0;
  int status = 0;
  while (std::getline(std::cin, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ordered_json j;
    try {
      chem::MolGraph g = chem::parse_smiles(line);
      chem::JunctionTree jt = chem::tree_decompose(g);
      j["atoms"] = ordered_json::array();
      for (const auto& a : g.atoms)
        j["atoms"].push_back({{"element", a.element}, {"aromatic", a.aromatic}, {"charge", a.charge},
                              {"hydrogens", a.total_h()}, {"degree", a.degree}});
      j["bonds"] = ordered_json::array();
      static const char* orders[] = {"single", "double", "triple", "aromatic"};
      for (const auto& b : g.bonds)
        j["bonds"].push_back({{"atoms", {b.a, b.b}}, {"order", orders[static_cast<int>(b.order)]}, {"in_ring", b.in_ring}});
      j["clusters"] = jt.clusters;
      j["tree_edges"] = ordered_json::array();
      for (auto [a, b] : jt.tree_edges) j["tree_edges"].push_back({a, b});
      j["cluster_types"] = jt.cluster_types;
    } catch (const ParseError& e) {
      j = ordered_json{{"line", lineno}, {"smiles", line}, {"error", e.what()}};
      status = 1;
    }
    std::cout << j.dump() << "\n";
  }
  return status;
}

// FASTA-like: ">id" header lines followed by sequence lines.
int run_stub_embed(const std::string& input, const std::string& out_dir, std::uint64_t seed) {
  std::ifstream in(input);
  if (!in) throw FormatError("cannot open " + input);
  std::string line, id, seq;
  std::size_t written = 0;
  auto flush = [&] {
    if (id.empty()) return;
    if (seq.empty()) throw FormatError(input + ": protein " + id + " has no sequence");
    data::EmbeddingStore::write_stub(out_dir, id, seq, seed);
    ++written;
    id.clear();
    seq.clear();
  };
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '>') {
      flush();
      id = line.substr(1, line.find_first_of(" \t") == std::string::npos ? std::string::npos : line.find_first_of(" \t") - 1);
    } else {
      if (id.empty()) throw FormatError(input + ": sequence before the first '>' header");
      seq += line;
    }
  }
  flush();
  std::cout << ordered_json{{"proteins", written}, {"directory", out_dir}}.dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical drug-target affinity model"};
  app.require_subcommand(1);
  Common c;

  auto* prepare = app.add_subcommand("prepare", "featurise a dataset into the feature cache");
  add_data_flags(prepare, c, true);
  add_model_flags(prepare, c);

  std::string out_dir = "runs";
  auto* train = app.add_subcommand("train", "k-fold cross-validated training");
  add_data_flags(train, c, true);
  add_model_flags(train, c);
  train->add_option("--out", out_dir, "directory for checkpoints and reports");

  std::string checkpoint;
  long fold = -1;
  auto* evaluate = app.add_subcommand("evaluate", "metrics of a checkpoint on a dataset or one of its folds");
  add_data_flags(evaluate, c, true);
  add_model_flags(evaluate, c);
  evaluate->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  evaluate->add_option("--fold", fold, "evaluate only this fold of the seeded split");

  std::string pairs;
  auto* predict = app.add_subcommand("predict", "affinities for a pairs file");
  add_data_flags(predict, c, false);
  add_model_flags(predict, c);
  predict->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  predict->add_option("--pairs", pairs, "TSV with drug_id, smiles, protein_id, sequence")->required();

  std::uint64_t gc_seed = 7;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every op and module");
  gradcheck->add_option("--seed", gc_seed, "seed for the random inputs");

  app.add_subcommand("decompose", "SMILES lines on stdin to JSON graphs and junction trees");

  std::string fasta, stub_out;
  auto* stub = app.add_subcommand("stub-embed", "write seeded stand-in embeddings and contact maps");
  stub->add_option("--input", fasta, "FASTA-like file")->required();
  stub->add_option("--embeddings", stub_out, "output directory")->required();
  stub->add_option("--seed", c.stub_seed, "seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand("decompose")) return run_decompose();
    if (*stub) return run_stub_embed(fasta, stub_out, c.stub_seed);
    if (*gradcheck) {
      auto entries = gradcheck_suite(gc_seed);
      std::cout << gradcheck_json(entries) << "\n";
      bool ok = true;
      for (const auto& e : entries) {
        std::printf("%-18s %12.3e %8zu coords %s\n", e.name.c_str(), e.result.max_rel_error, e.result.coordinates,
                    e.result.max_rel_error < 1e-5 ? "ok" : "FAIL");
        ok = ok && e.result.max_rel_error < 1e-5;
      }
      return ok ? 0 : 1;
    }

    TrainConfig cfg = resolve_config(c);
    if (*prepare) {
      auto records = load_records(c, cfg);
      auto cache = make_cache(c);
      auto data = load_prepared(c, records, cfg, cache.get());
      ordered_json j{{"records", data.records.size()}, {"drugs", data.drugs.size()}, {"proteins", data.proteins.size()}};
      if (cache) {
        j["drug_parses"] = cache->drug_parses();
        j["protein_builds"] = cache->protein_builds();
        j["cache_hits"] = cache->hits();
      }
      std::cout << j.dump(2) << "\n";
      return 0;
    }
    if (*train) {
      auto records = load_records(c, cfg);
      auto cache = make_cache(c);
      auto data = load_prepared(c, records, cfg, cache.get());
      RunArtifacts run = cross_validate(cfg, data, out_dir, [](std::size_t f, const EpochLog& e) {
        std::fprintf(stderr, "fold %zu epoch %zu lr %.1e train %.5f val %.5f\n", f, e.epoch, e.lr, e.train_loss,
                     e.val_loss);
      });
      std::cout << report_json(cfg, run) << "\n" << report_table(run);
      return 0;
    }
    if (*evaluate) {
      auto records = load_records(c, cfg);
      auto cache = make_cache(c);
      auto data = load_prepared(c, records, cfg, cache.get());
      HifDta model(model_config(cfg), cfg.seed);
      model.load(checkpoint);
      std::vector<std::size_t> idx;
      if (fold >= 0) {
        auto split = data::kfold_split(data.records.size(), cfg.folds, cfg.seed);
        if (static_cast<std::size_t>(fold) >= split.folds.size()) throw UsageError("--fold out of range");
        idx = split.folds[fold];
      } else {
        for (std::size_t i = 0; i < data.records.size(); ++i) idx.push_back(i);
      }
      metrics::EvalReport r = hifdta::evaluate(model, data, idx, cfg.batch_size);
      std::cout << metrics::to_json(r) << "\n"
                << metrics::format_table({{fold >= 0 ? "fold " + std::to_string(fold) : "all", r}});
      return 0;
    }
    if (*predict) {
      auto records = load_pairs(pairs);
      auto cache = make_cache(c);
      auto data = load_prepared(c, records, cfg, cache.get());
      HifDta model(model_config(cfg), cfg.seed);
      model.load(checkpoint);
      std::vector<std::size_t> idx(data.records.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      auto yhat = hifdta::predict(model, data, idx, cfg.batch_size);
      for (std::size_t i = 0; i < idx.size(); ++i)
        std::printf("%s\t%s\t%.6f\n", records[i].drug_id.c_str(), records[i].protein_id.c_str(), yhat[i]);
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
