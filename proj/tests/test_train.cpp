#include "spdgcn/train.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "helpers.hpp"

using namespace spdgcn;

namespace {

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.plan_name = "ku";
  cfg.plan = SegmentationPlan::named("ku");
  cfg.epochs = 2;
  cfg.batch_size = 16;
  cfg.seed = 7;
  cfg.o2 = 10;
  return cfg;
}

EpochDataset small_dataset(std::uint64_t seed = 7, int trials = 24) {
  const SynthProfile profile = SynthProfile::named("default", 4, 2.5);
  return synth_generate(trials, 4, 160.0, 2.5, profile, seed);
}

}  // namespace

TEST_CASE("class-balanced folds partition the trials") {
  std::vector<int> labels;
  for (int i = 0; i < 200; ++i) labels.push_back(i % 2);
  const auto folds = make_class_balanced_folds(labels, 10, 3);
  REQUIRE(static_cast<int>(folds.size()) == 10);
  std::set<int> seen;
  for (const auto& f : folds) {
    CHECK(static_cast<int>(f.size()) == 20);
    int ones = 0;
    for (int i : f) {
      CHECK(seen.insert(i).second);  // exactly one test fold per trial
      ones += labels[static_cast<std::size_t>(i)];
    }
    CHECK(ones == 10);
  }
  CHECK(static_cast<int>(seen.size()) == 200);
}

TEST_CASE("uneven classes stay near-balanced across folds") {
  std::vector<int> labels;
  for (int i = 0; i < 47; ++i) labels.push_back(i < 23 ? 0 : 1);
  const auto folds = make_class_balanced_folds(labels, 5, 1);
  std::set<int> seen;
  for (const auto& f : folds)
    for (int i : f) CHECK(seen.insert(i).second);
  CHECK(static_cast<int>(seen.size()) == 47);
  // Balance within one trial per class per fold.
  for (const auto& f : folds) {
    int ones = 0;
    for (int i : f) ones += labels[static_cast<std::size_t>(i)];
    const int zeros = static_cast<int>(f.size()) - ones;
    CHECK(zeros >= 23 / 5);
    CHECK(zeros <= 23 / 5 + 1);
    CHECK(ones >= 24 / 5);
    CHECK(ones <= 24 / 5 + 1);
  }
}

TEST_CASE("holdout split files are validated") {
  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "split_test.json").string();
  {
    std::ofstream os(path);
    os << R"({"train": [0,1,2], "test": [2,3]})";
  }
  CHECK_THROWS_WITH_AS(read_holdout_split(path, 10), doctest::Contains("duplicate"),
                       std::invalid_argument);
  {
    std::ofstream os(path);
    os << R"({"train": [0,1,2], "test": [11]})";
  }
  CHECK_THROWS_AS(read_holdout_split(path, 10), std::invalid_argument);
  {
    std::ofstream os(path);
    os << R"({"train": [0,1,2], "test": [3,4]})";
  }
  const auto split = read_holdout_split(path, 10);
  CHECK(split.first == std::vector<int>{0, 1, 2});
  CHECK(split.second == std::vector<int>{3, 4});
  std::remove(path.c_str());
}

TEST_CASE("the fold graph never sees test trials") {
  const EpochDataset ds = small_dataset();
  const TrainConfig cfg = small_config();
  TfStack stack = build_tf_stack(ds, cfg.plan, cfg.shrinkage);
  std::vector<int> train_idx, test_idx;
  for (int i = 0; i < ds.trials; ++i) (i < 16 ? train_idx : test_idx).push_back(i);

  const FoldGraph before = build_fold_graph(stack, train_idx, cfg);
  // Replace every test trial with junk; the graph must not move.
  for (int i : test_idx)
    for (Matrix& m : stack.matrices[static_cast<std::size_t>(i)])
      m = 100.0 * Matrix::Identity(m.rows(), m.cols());
  const FoldGraph after = build_fold_graph(stack, train_idx, cfg);
  CHECK((before.graph.adjacency - after.graph.adjacency).cwiseAbs().maxCoeff() == 0.0);
  CHECK(before.graph.kernel_width == after.graph.kernel_width);
}

TEST_CASE("median and fixed kernel widths share the topology") {
  const EpochDataset ds = small_dataset();
  TrainConfig cfg = small_config();
  const TfStack stack = build_tf_stack(ds, cfg.plan, cfg.shrinkage);
  std::vector<int> all;
  for (int i = 0; i < ds.trials; ++i) all.push_back(i);
  const FoldGraph median = build_fold_graph(stack, all, cfg);
  cfg.kernel_width_median = false;
  cfg.kernel_width = 123.0;
  const FoldGraph fixed = build_fold_graph(stack, all, cfg);
  bool weights_differ = false;
  for (int i = 0; i < median.graph.adjacency.rows(); ++i)
    for (int j = 0; j < median.graph.adjacency.cols(); ++j) {
      CHECK((median.graph.adjacency(i, j) > 0.0) == (fixed.graph.adjacency(i, j) > 0.0));
      if (median.graph.adjacency(i, j) != fixed.graph.adjacency(i, j)) weights_differ = true;
    }
  CHECK(weights_differ);
}

TEST_CASE("training runs are deterministic per seed") {
  const EpochDataset ds = small_dataset();
  TrainConfig cfg = small_config();
  cfg.eval.mode = EvalSpec::Mode::KFold;
  cfg.eval.k = 3;
  const TrainSummary a = run_train(ds, cfg);
  const TrainSummary b = run_train(ds, cfg);
  REQUIRE(a.folds.size() == b.folds.size());
  for (std::size_t f = 0; f < a.folds.size(); ++f) {
    REQUIRE(a.folds[f].metrics.size() == b.folds[f].metrics.size());
    for (std::size_t m = 0; m < a.folds[f].metrics.size(); ++m) {
      CHECK(a.folds[f].metrics[m].loss == b.folds[f].metrics[m].loss);
      CHECK(a.folds[f].metrics[m].accuracy == b.folds[f].metrics[m].accuracy);
    }
  }
  CHECK(a.mean_test_accuracy == b.mean_test_accuracy);
}

TEST_CASE("metrics files carry the documented header") {
  namespace fs = std::filesystem;
  const EpochDataset ds = small_dataset();
  TrainConfig cfg = small_config();
  cfg.epochs = 1;
  cfg.eval.mode = EvalSpec::Mode::KFold;
  cfg.eval.k = 3;
  const std::string prefix = (fs::temp_directory_path() / "mtest").string();
  (void)run_train(ds, cfg, prefix);
  std::ifstream is(prefix + "_fold0_metrics.csv");
  REQUIRE(is.good());
  std::string header;
  std::getline(is, header);
  CHECK(header == "epoch,split,loss,accuracy");
  std::string row;
  std::getline(is, row);
  CHECK(row.find("1,train,") == 0);
  for (int f = 0; f < 3; ++f) std::remove((prefix + "_fold" + std::to_string(f) + "_metrics.csv").c_str());
  std::remove((prefix + "_summary.json").c_str());
}

TEST_CASE("saved models evaluate identically after a round trip") {
  namespace fs = std::filesystem;
  const EpochDataset ds = small_dataset();
  TrainConfig cfg = small_config();
  cfg.eval.mode = EvalSpec::Mode::Holdout;
  const std::string split_path = (fs::temp_directory_path() / "mtest_split.json").string();
  {
    std::ofstream os(split_path);
    os << R"({"train": [0,1,2,3,4,5,6,7,8,9,10,11,12,13,14,15], "test": [16,17,18,19,20,21,22,23]})";
  }
  cfg.eval.split_file = split_path;
  SavedModel model;
  (void)run_train(ds, cfg, "", &model);

  const std::string model_path = (fs::temp_directory_path() / "mtest_model.bin").string();
  save_model(model, model_path);
  const SavedModel back = load_model(model_path);
  const std::vector<int> test_idx = {16, 17, 18, 19, 20, 21, 22, 23};
  const EvalResult r1 = evaluate_model(model, ds, &test_idx);
  const EvalResult r2 = evaluate_model(back, ds, &test_idx);
  CHECK(r1.loss == r2.loss);
  CHECK(r1.accuracy == r2.accuracy);
  CHECK(r2.n == 8);
  std::remove(split_path.c_str());
  std::remove(model_path.c_str());
}

TEST_CASE("config json round trips through parse and dump") {
  const std::string text = R"({
    "plan": "bnci2014001",
    "directions": {"time": [2,2,2,4], "freq": [1,1,4,3]},
    "kernel_width": 2.5,
    "dims": {"o2": 12},
    "epochs": 9,
    "batch_size": 8,
    "seed": 42,
    "eval": {"mode": "kfold", "k": 5}
  })";
  const TrainConfig cfg = TrainConfig::from_json_text(text);
  CHECK(cfg.plan.node_count() == 48);
  CHECK(cfg.directions.time[3] == 4);
  CHECK(cfg.kernel_width == 2.5);
  CHECK_FALSE(cfg.kernel_width_median);
  CHECK(cfg.o2 == 12);
  CHECK(cfg.epochs == 9);
  CHECK(cfg.seed == 42);
  const TrainConfig cfg2 = TrainConfig::from_json_text(cfg.to_json_text());
  CHECK(cfg2.epochs == cfg.epochs);
  CHECK(cfg2.kernel_width == cfg.kernel_width);
  CHECK(cfg2.directions.freq == cfg.directions.freq);

  CHECK_THROWS_AS(TrainConfig::from_json_text(R"({"kernel_width": "auto"})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(TrainConfig::from_json_text(R"({"eval": {"mode": "loocv"}})"),
                  std::invalid_argument);
}

TEST_CASE("an inline custom plan parses and validates") {
  const std::string text = R"({
    "plan": {"span": 2.0, "bands": [
      {"lo": 4, "hi": 8, "window": 0.5, "group": "theta"},
      {"lo": 8, "hi": 12, "window": 0.5, "group": "mu"},
      {"lo": 12, "hi": 16, "window": 0.25, "group": "beta"}
    ]}
  })";
  const TrainConfig cfg = TrainConfig::from_json_text(text);
  CHECK(cfg.plan.node_count() == 4 + 4 + 8);
  CHECK(cfg.plan_name == "custom");
}

TEST_CASE("gradient harness passes and its negative control trips") {
  GradcheckConfig cfg;
  cfg.seed = 11;
  const GradcheckReport ok = gradcheck(cfg);
  CHECK(ok.pass);
  REQUIRE(ok.layers.size() == 4);
  for (const LayerError& l : ok.layers) CHECK(l.max_rel_error < cfg.threshold);

  cfg.corrupt_reeig = true;
  const GradcheckReport bad = gradcheck(cfg);
  CHECK_FALSE(bad.pass);
}

TEST_CASE("gradient harness covers the per-layer normalization variant") {
  GradcheckConfig cfg;
  cfg.seed = 13;
  cfg.rbn_per_layer = true;
  const GradcheckReport r = gradcheck(cfg);
  bool saw_rbn1 = false;
  for (const LayerError& l : r.layers) saw_rbn1 = saw_rbn1 || l.name == "rbn1_bias";
  CHECK(saw_rbn1);
  CHECK(r.pass);
}
