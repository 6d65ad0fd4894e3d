#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "hifdta/errors.hpp"
#include "hifdta/train.hpp"
#include "support/synthetic.hpp"

using namespace hifdta;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("hifdta_test_train_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string usage_error(const std::string& text) {
  std::istringstream in(text);
  try {
    parse_config(in, "cfg");
  } catch (const UsageError& e) {
    return e.what();
  }
  return "";
}

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.model.d = 8;
  cfg.model.layers = 1;
  cfg.model.ssm_state = 4;
  cfg.model.clusters = {4, 2};
  cfg.batch_size = 4;
  cfg.max_epochs = 3;
  cfg.folds = 2;
  cfg.seed = 5;
  return cfg;
}

data::PreparedDataset tiny_data(std::size_t pairs = 12) {
  auto records = testing::synthetic_davis({4, 3, pairs, 2, 20, 30});
  for (auto& r : records) r.affinity = data::pkd_transform(r.affinity);
  data::EmbeddingStore store({}, true, 3);
  return data::prepare(records, store, nullptr, {});
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

}  // namespace

TEST_CASE("defaults and learning rate schedule") {
  TrainConfig cfg;
  CHECK(cfg.lr == 1e-3);
  CHECK(cfg.batch_size == 64);
  CHECK(cfg.max_epochs == 400);
  CHECK(cfg.patience == 100);
  CHECK(cfg.model.d == 200);
  CHECK(cfg.model.drug_heads == 4);
  CHECK(cfg.model.fusion_heads == 4);
  CHECK(cfg.model.dropout == 0.2);
  CHECK(cfg.model.clusters == std::vector<std::size_t>{20, 10, 5});
  CHECK(learning_rate_at(cfg, 1) == 1e-3);
  CHECK(learning_rate_at(cfg, 100) == 1e-3);
  CHECK(learning_rate_at(cfg, 101) == 5e-4);
  CHECK(learning_rate_at(cfg, 400) == 5e-4);
}

TEST_CASE("config files") {
  std::istringstream in(
      "# comment\n"
      "d = 64\n"
      "clusters = 8,4,2\n"
      "lr=0.002   # trailing comment\n"
      "\n"
      "ablation = concat\n"
      "transform = false\n");
  TrainConfig cfg = parse_config(in, "cfg");
  CHECK(cfg.model.d == 64);
  CHECK(cfg.model.clusters == std::vector<std::size_t>{8, 4, 2});
  CHECK(cfg.lr == 0.002);
  CHECK(cfg.ablation == "concat");
  CHECK_FALSE(cfg.transform);

  std::istringstream round(format_config(cfg));
  TrainConfig back = parse_config(round, "round");
  CHECK(format_config(back) == format_config(cfg));

  CHECK(usage_error("d = 8\nwidth = 3\n").find("cfg:2") != std::string::npos);
  CHECK(usage_error("d = eight\n").find("cfg:1") != std::string::npos);
  CHECK(usage_error("d 8\n").find("cfg:1") != std::string::npos);
  CHECK(usage_error("clusters = 4,,2\n").find("cfg:1") != std::string::npos);
  CHECK(usage_error("lr = -1\n").find("cfg:1") != std::string::npos);
}

TEST_CASE("ablation switches") {
  CHECK(ablation_names().size() == 10);
  for (const auto& name : ablation_names()) {
    ModelConfig cfg;
    CHECK_NOTHROW(apply_ablation(cfg, name));
  }
  ModelConfig cfg;
  apply_ablation(cfg, "sub-only,add,prot-local-only");
  CHECK(cfg.scales == std::array<bool, kNumScales>{false, true, false});
  CHECK(cfg.fusion == FusionStrategy::Add);
  CHECK_FALSE(cfg.prot_global);
  CHECK(cfg.prot_local);
  CHECK(cfg.drug_global);

  ModelConfig bad;
  CHECK_THROWS_AS(apply_ablation(bad, "wide"), UsageError);
  ModelConfig both;
  CHECK_THROWS_AS(apply_ablation(both, "drug-global-only,drug-local-only"), UsageError);
}

TEST_CASE("training respects max epochs and returns the best weights") {
  auto data = tiny_data();
  TrainConfig cfg = tiny_config();
  cfg.max_epochs = 4;
  auto all = iota(data.records.size());
  std::vector<std::size_t> train(all.begin(), all.begin() + 8), val(all.begin() + 8, all.end());
  FoldResult result;
  std::size_t calls = 0;
  auto model = train_model(cfg, data, train, val, result, [&](std::size_t, const EpochLog&) { ++calls; });
  CHECK(result.curve.size() <= cfg.max_epochs);
  CHECK(calls == result.curve.size());
  REQUIRE(result.best_epoch >= 1);
  REQUIRE(result.best_epoch <= result.curve.size());
  double best = result.curve[0].val_loss;
  for (const auto& e : result.curve) {
    best = std::min(best, e.val_loss);
    CHECK(std::isfinite(e.train_loss));
    CHECK(e.lr == learning_rate_at(cfg, e.epoch));
  }
  CHECK(result.best_val_loss == best);
  CHECK(result.curve[result.best_epoch - 1].val_loss == best);
  // The restored weights reproduce the best validation loss.
  CHECK(evaluate(*model, data, val).mse == doctest::Approx(best).epsilon(1e-12));

  TrainConfig patient = cfg;
  patient.max_epochs = 20;
  patient.patience = 1;
  FoldResult short_run;
  train_model(patient, data, train, val, short_run);
  CHECK(short_run.curve.size() <= short_run.best_epoch + 1);
}

TEST_CASE("fixed seed gives identical loss curves") {
  auto data = tiny_data();
  TrainConfig cfg = tiny_config();
  auto all = iota(data.records.size());
  FoldResult a, b;
  train_model(cfg, data, all, all, a);
  train_model(cfg, data, all, all, b);
  REQUIRE(a.curve.size() == b.curve.size());
  for (std::size_t i = 0; i < a.curve.size(); ++i) {
    CHECK(a.curve[i].train_loss == b.curve[i].train_loss);
    CHECK(a.curve[i].val_loss == b.curve[i].val_loss);
  }
}

TEST_CASE("checkpoints round trip and reject other architectures") {
  auto dir = scratch("ckpt");
  auto data = tiny_data();
  TrainConfig cfg = tiny_config();
  cfg.max_epochs = 2;
  auto all = iota(data.records.size());
  FoldResult result;
  auto model = train_model(cfg, data, all, all, result);
  model->save((dir / "m.ckpt").string());

  HifDta again(cfg.model, 999);
  again.load((dir / "m.ckpt").string());
  std::vector<std::size_t> three{0, 1, 2};
  auto p1 = predict(*model, data, three), p2 = predict(again, data, three);
  REQUIRE(p1.size() == 3);
  CHECK(p1 == p2);

  ModelConfig wider = cfg.model;
  wider.d = 16;
  HifDta other(wider, 1);
  try {
    other.load((dir / "m.ckpt").string());
    FAIL("architecture mismatch accepted");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("d") != std::string::npos);
  }
  ModelConfig heads = cfg.model;
  heads.fusion_heads = 2;
  HifDta other_heads(heads, 1);
  try {
    other_heads.load((dir / "m.ckpt").string());
    FAIL("head mismatch accepted");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("fusion_heads") != std::string::npos);
  }
}

TEST_CASE("cross validation writes checkpoints and reports") {
  auto dir = scratch("cv");
  auto data = tiny_data();
  TrainConfig cfg = tiny_config();
  cfg.max_epochs = 2;
  RunArtifacts run = cross_validate(cfg, data, dir);
  REQUIRE(run.folds.size() == 2);
  for (const auto& f : run.folds) {
    CHECK(std::filesystem::exists(f.checkpoint));
    CHECK(f.report.n > 0);
  }
  CHECK(std::filesystem::exists(dir / "report.json"));
  CHECK(std::filesystem::exists(dir / "report.txt"));
  const std::string json = report_json(cfg, run);
  CHECK(json.find("\"folds\"") != std::string::npos);
  CHECK(json.find("\"parameter_count\"") != std::string::npos);
  CHECK(report_table(run).find("mean") != std::string::npos);
  const double m = (run.folds[0].report.mse + run.folds[1].report.mse) / 2;
  CHECK(run.mean.mse == doctest::Approx(m).epsilon(1e-12));
}

TEST_CASE("prediction pairs file") {
  auto dir = scratch("pairs");
  {
    std::ofstream os(dir / "pairs.tsv");
    os << "drug_id\tsmiles\tprotein_id\tsequence\n"
       << "D1\tCCO\tP1\tACDE\n"
       << "D2\tCCN\tP1\tACDE\n"
       << "D1\tCCO\tP2\tMKVL\n";
  }
  auto pairs = load_pairs(dir / "pairs.tsv");
  REQUIRE(pairs.size() == 3);
  CHECK(pairs[2].protein_id == "P2");

  data::EmbeddingStore store({}, true, 1);
  auto prepared = data::prepare(pairs, store, nullptr, {});
  TrainConfig cfg = tiny_config();
  HifDta model(cfg.model, 3);
  auto yhat = predict(model, prepared, iota(3));
  CHECK(yhat.size() == 3);
  for (double y : yhat) CHECK(std::isfinite(y));
}
