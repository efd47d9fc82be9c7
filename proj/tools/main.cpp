// Command-line driver: synth, graph, train, eval, csp, gradcheck.
// Exit code 0 on success; any failure prints a single-line error JSON to
// stderr and returns 1.

#include <exception>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "spdgcn/train.hpp"

namespace {

using nlohmann::json;
using namespace spdgcn;

TrainConfig load_config(const std::string& path) {
  if (path.empty()) return TrainConfig{};
  return TrainConfig::from_json_file(path);
}

void cmd_synth(const std::string& out, int trials, int channels, double fs, double span,
               const std::string& profile, std::uint64_t seed) {
  const SynthProfile p = SynthProfile::named(profile, channels, span);
  const EpochDataset ds = synth_generate(trials, channels, fs, span, p, seed);
  write_cov1(ds, out);
  json j{{"out", out},       {"trials", ds.trials}, {"channels", ds.channels},
         {"samples", ds.samples}, {"fs", ds.sampling_rate}, {"profile", profile},
         {"seed", seed}};
  std::cout << j.dump() << "\n";
}

void cmd_graph(const std::string& data, const std::string& config, const std::string& prefix) {
  const EpochDataset ds = read_cov1(data);
  const TrainConfig cfg = load_config(config);
  const TfStack stack = build_tf_stack(ds, cfg.plan, cfg.shrinkage);
  std::vector<int> all(static_cast<std::size_t>(ds.trials));
  for (int i = 0; i < ds.trials; ++i) all[static_cast<std::size_t>(i)] = i;
  const FoldGraph fg = build_fold_graph(stack, all, cfg);

  const std::string csv_path = prefix + "_adjacency.csv";
  std::ofstream csv(csv_path);
  if (!csv) throw std::runtime_error("cannot write " + csv_path);
  csv << "i,j,weight\n";
  const Matrix& a = fg.graph.adjacency;
  for (int i = 0; i < a.rows(); ++i)
    for (int j = i + 1; j < a.cols(); ++j)
      if (a(i, j) > 0.0) csv << i << "," << j << "," << a(i, j) << "\n";

  json nodes = json::array();
  for (const NodeMeta& m : fg.graph.lattice.meta)
    nodes.push_back({{"band", m.band_index},
                     {"window", m.window_index},
                     {"group", band_group_name(m.group)}});
  json sidecar{{"nodes", fg.graph.node_count()},
               {"kernel_width", fg.graph.kernel_width},
               {"directions",
                {{"time", fg.graph.directions.time}, {"freq", fg.graph.directions.freq}}},
               {"edges", fg.graph.edge_count(false)},
               {"edges_with_self_loops", fg.graph.edge_count(true)},
               {"node_meta", nodes}};
  const std::string json_path = prefix + "_graph.json";
  std::ofstream js(json_path);
  if (!js) throw std::runtime_error("cannot write " + json_path);
  js << sidecar.dump(2) << "\n";
  std::cout << json{{"adjacency", csv_path}, {"sidecar", json_path},
                    {"nodes", fg.graph.node_count()},
                    {"edges", fg.graph.edge_count(false)}}
                   .dump()
            << "\n";
}

void cmd_train(const std::string& data, const std::string& config, const std::string& prefix,
               const std::string& model_out) {
  const EpochDataset ds = read_cov1(data);
  const TrainConfig cfg = load_config(config);
  SavedModel saved;
  const TrainSummary summary = run_train(ds, cfg, prefix, model_out.empty() ? nullptr : &saved);
  if (!model_out.empty()) save_model(saved, model_out);
  json folds = json::array();
  for (const FoldResult& r : summary.folds)
    folds.push_back({{"fold", r.fold}, {"test_accuracy", r.final_test_accuracy}});
  std::cout << json{{"mean_test_accuracy", summary.mean_test_accuracy}, {"folds", folds}}.dump()
            << "\n";
}

void cmd_eval(const std::string& data, const std::string& model_path,
              const std::string& indices_file) {
  const EpochDataset ds = read_cov1(data);
  const SavedModel model = load_model(model_path);
  EvalResult r;
  if (indices_file.empty()) {
    r = evaluate_model(model, ds);
  } else {
    std::ifstream is(indices_file);
    if (!is) throw std::runtime_error("cannot open indices file: " + indices_file);
    json j;
    is >> j;
    const std::vector<int> idx = j.get<std::vector<int>>();
    r = evaluate_model(model, ds, &idx);
  }
  std::cout << json{{"loss", r.loss}, {"accuracy", r.accuracy}, {"n", r.n}}.dump() << "\n";
}

void cmd_csp(const std::string& data, double lo, double hi, double w0, double w1, int filters,
             int folds, std::uint64_t seed) {
  const EpochDataset ds = read_cov1(data);
  CspRunConfig cfg;
  cfg.band = {lo, hi};
  cfg.window_start = w0;
  cfg.window_end = w1;
  cfg.filters = filters;
  cfg.folds = folds;
  cfg.seed = seed;
  const CspRunResult r = run_csp(ds, cfg);
  std::cout << json{{"mean_accuracy", r.mean_accuracy},
                    {"fold_accuracies", r.fold_accuracies},
                    {"eq1_residual", r.eq1_residual}}
                   .dump()
            << "\n";
}

int cmd_gradcheck(int channels, int nodes, int trials, std::uint64_t seed, bool corrupt) {
  GradcheckConfig cfg;
  cfg.channels = channels;
  cfg.nodes = nodes;
  cfg.trials = trials;
  cfg.seed = seed;
  cfg.corrupt_reeig = corrupt;
  const GradcheckReport r = gradcheck(cfg);
  json layers = json::array();
  for (const LayerError& l : r.layers)
    layers.push_back({{"layer", l.name}, {"max_rel_error", l.max_rel_error}, {"pass", l.pass}});
  std::cout << json{{"pass", r.pass}, {"threshold", cfg.threshold}, {"layers", layers}}.dump()
            << "\n";
  return r.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SPD graph network toolkit"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "Generate a synthetic COV1 dataset");
  std::string synth_out = "synth.cov1", synth_profile = "default";
  int synth_trials = 200, synth_channels = 8;
  double synth_fs = 160.0, synth_span = 2.5;
  std::uint64_t synth_seed = 0;
  synth->add_option("--out", synth_out, "Output COV1 path");
  synth->add_option("--trials", synth_trials);
  synth->add_option("--channels", synth_channels);
  synth->add_option("--fs", synth_fs, "Sampling rate in Hz");
  synth->add_option("--span", synth_span, "Epoch length in seconds");
  synth->add_option("--profile", synth_profile, "default | null | localized");
  synth->add_option("--seed", synth_seed);

  auto* graph = app.add_subcommand("graph", "Emit the adjacency CSV and JSON sidecar");
  std::string graph_data, graph_config, graph_prefix = "graph";
  graph->add_option("--data", graph_data, "COV1 dataset")->required();
  graph->add_option("--config", graph_config, "JSON training config");
  graph->add_option("--out-prefix", graph_prefix);

  auto* train = app.add_subcommand("train", "Train and evaluate per the config");
  std::string train_data, train_config, train_prefix = "run", train_model;
  train->add_option("--data", train_data, "COV1 dataset")->required();
  train->add_option("--config", train_config, "JSON training config");
  train->add_option("--out-prefix", train_prefix);
  train->add_option("--save-model", train_model, "Write the last trained model here");

  auto* eval = app.add_subcommand("eval", "Evaluate a saved model on a dataset");
  std::string eval_data, eval_model, eval_indices;
  eval->add_option("--data", eval_data, "COV1 dataset")->required();
  eval->add_option("--model", eval_model, "Model file from train --save-model")->required();
  eval->add_option("--indices", eval_indices, "JSON array of trial indices");

  auto* csp = app.add_subcommand("csp", "CSP baseline with the spectrum-distance residual");
  std::string csp_data;
  double csp_lo = 8.0, csp_hi = 30.0, csp_w0 = 0.0, csp_w1 = 0.0;
  int csp_filters = 4, csp_folds = 10;
  std::uint64_t csp_seed = 0;
  csp->add_option("--data", csp_data, "COV1 dataset")->required();
  csp->add_option("--band-lo", csp_lo);
  csp->add_option("--band-hi", csp_hi);
  csp->add_option("--window-start", csp_w0, "Seconds");
  csp->add_option("--window-end", csp_w1, "Seconds (0 = full epoch)");
  csp->add_option("--filters", csp_filters);
  csp->add_option("--folds", csp_folds);
  csp->add_option("--seed", csp_seed);

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of the backward pass");
  int gc_channels = 5, gc_nodes = 6, gc_trials = 4;
  std::uint64_t gc_seed = 0;
  bool gc_corrupt = false;
  gc->add_option("--channels", gc_channels);
  gc->add_option("--nodes", gc_nodes);
  gc->add_option("--trials", gc_trials);
  gc->add_option("--seed", gc_seed);
  gc->add_flag("--corrupt-reeig", gc_corrupt, "Negative control: corrupt the cached spectra");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed())
      cmd_synth(synth_out, synth_trials, synth_channels, synth_fs, synth_span, synth_profile,
                synth_seed);
    else if (graph->parsed())
      cmd_graph(graph_data, graph_config, graph_prefix);
    else if (train->parsed())
      cmd_train(train_data, train_config, train_prefix, train_model);
    else if (eval->parsed())
      cmd_eval(eval_data, eval_model, eval_indices);
    else if (csp->parsed())
      cmd_csp(csp_data, csp_lo, csp_hi, csp_w0, csp_w1, csp_filters, csp_folds, csp_seed);
    else if (gc->parsed())
      return cmd_gradcheck(gc_channels, gc_nodes, gc_trials, gc_seed, gc_corrupt);
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error", e.what()}}.dump() << "\n";
    return 1;
  }
  return 0;
}
