// Training and evaluation drivers: JSON configuration, class-balanced
// k-fold and explicit holdout splits, per-fold graph construction from
// training trials only, the training loop with manifold-invariant checks,
// model persistence, a finite-difference gradient harness, and the CSP
// baseline driver.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "spdgcn/csp.hpp"
#include "spdgcn/dataset.hpp"
#include "spdgcn/graph.hpp"
#include "spdgcn/network.hpp"
#include "spdgcn/optim.hpp"
#include "spdgcn/signal.hpp"

namespace spdgcn {

struct EvalSpec {
  enum class Mode { KFold, Holdout };
  Mode mode = Mode::KFold;
  int k = 10;
  std::string split_file;
};

struct TrainConfig {
  std::string plan_name = "ku";
  SegmentationPlan plan = SegmentationPlan::named("ku");
  GraphDirections directions{{1, 1, 1, 2}, {1, 1, 4, 3}};
  bool kernel_width_median = true;
  double kernel_width = 0.0;  // used when kernel_width_median is false
  int o1 = 0, o2 = 0, o3 = 0;  // 0 = derive from the dataset channel count
  double reeig_eps = 1e-6;
  double rbn_momentum = 0.9;
  double shrinkage = 1e-5;
  bool rbn_per_layer = false;
  AdamHyper optimizer;
  int epochs = 50;
  int batch_size = 32;
  std::uint64_t seed = 0;
  EvalSpec eval;
  bool check_invariants = true;

  /// Fills o1/o2/o3 from the channel count when left at 0.
  ModelConfig model_config(int channels, int classes) const;

  static TrainConfig from_json_text(const std::string& text);
  static TrainConfig from_json_file(const std::string& path);
  std::string to_json_text() const;
};

struct EpochMetric {
  int epoch = 0;
  std::string split;  // "train" or "test"
  double loss = 0.0;
  double accuracy = 0.0;
};

struct FoldResult {
  int fold = 0;
  std::vector<EpochMetric> metrics;
  double final_train_accuracy = 0.0;
  double final_test_accuracy = 0.0;
  double kernel_width = 0.0;
  int edges = 0;  // strict-upper nonzeros of the adjacency
  double max_stiefel_drift = 0.0;
  double min_bias_eigenvalue = 0.0;
};

struct TrainSummary {
  std::vector<FoldResult> folds;
  double mean_test_accuracy = 0.0;
};

/// Deterministic class-balanced partition: every trial lands in exactly one
/// test fold.
std::vector<std::vector<int>> make_class_balanced_folds(const std::vector<int>& labels, int k,
                                                        std::uint64_t seed);

std::pair<std::vector<int>, std::vector<int>> read_holdout_split(const std::string& path,
                                                                 int trials);

struct FoldGraph {
  TfGraph graph;
  Matrix propagation;  // row-normalized A + I
};

/// Lattice, kernel width and adjacency from the training trials only.
FoldGraph build_fold_graph(const TfStack& stack, const std::vector<int>& train_idx,
                           const TrainConfig& cfg);

struct SavedModel {
  SegmentationPlan plan;
  double shrinkage = 1e-5;
  Matrix propagation;
  ModelParams params;
};

void save_model(const SavedModel& model, const std::string& path);
SavedModel load_model(const std::string& path);

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
  int n = 0;
};

/// Evaluation-mode forward over (a subset of) a dataset.
EvalResult evaluate_model(const SavedModel& model, const EpochDataset& ds,
                          const std::vector<int>* subset = nullptr);

/// Trains one split and reports per-epoch metrics plus the manifold
/// invariant extremes observed across all optimizer steps.
FoldResult train_single_split(const TfStack& stack, const std::vector<int>& labels,
                              const std::vector<int>& train_idx, const std::vector<int>& test_idx,
                              const TrainConfig& cfg, int fold_id,
                              SavedModel* trained = nullptr);

/// Full driver: builds the stack, iterates folds (or the holdout split),
/// writes <prefix>_fold<k>_metrics.csv and <prefix>_summary.json when a
/// prefix is given, and optionally returns the last trained model.
TrainSummary run_train(const EpochDataset& ds, const TrainConfig& cfg,
                       const std::string& out_prefix = "", SavedModel* trained = nullptr);

struct CspRunConfig {
  FrequencyBand band{8.0, 30.0};
  double window_start = 0.0;
  double window_end = 0.0;  // 0 = full epoch
  int filters = 4;
  double shrinkage = 1e-5;
  int folds = 10;
  std::uint64_t seed = 0;
};

struct CspRunResult {
  double mean_accuracy = 0.0;
  std::vector<double> fold_accuracies;
  double eq1_residual = 0.0;  // relative gap between the two distance routes
};

/// CSP baseline under the same fold protocol, reporting the consistency
/// residual between the filter-spectrum distance and the direct Riemannian
/// distance of the class means.
CspRunResult run_csp(const EpochDataset& ds, const CspRunConfig& cfg);

struct GradcheckConfig {
  int trials = 4;
  int nodes = 6;
  int channels = 5;
  int classes = 2;
  int o2 = 6;
  int o3 = 4;
  double fd_step = 1e-5;
  double threshold = 1e-4;
  std::uint64_t seed = 0;
  bool rbn_per_layer = false;
  bool corrupt_reeig = false;  // negative-control fixture for the harness
};

struct LayerError {
  std::string name;
  double max_rel_error = 0.0;
  bool pass = false;
};

struct GradcheckReport {
  std::vector<LayerError> layers;
  bool pass = false;
};

/// Central finite differences against the analytic backward for every
/// parameter tensor, on a small random configuration with frozen batch
/// statistics. Inputs with eigenvalue gaps under 1e-6 are resampled.
GradcheckReport gradcheck(const GradcheckConfig& cfg);

}  // namespace spdgcn
