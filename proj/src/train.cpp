#include "spdgcn/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "spdgcn/rng.hpp"

namespace spdgcn {

namespace {

using nlohmann::json;

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

BandGroup group_from_name(const std::string& s) {
  if (s == "theta") return BandGroup::Theta;
  if (s == "mu") return BandGroup::Mu;
  if (s == "beta") return BandGroup::Beta;
  if (s == "gamma") return BandGroup::Gamma;
  throw std::invalid_argument("unknown band group: " + s);
}

TfStack sub_stack(const TfStack& stack, const std::vector<int>& idx) {
  TfStack out;
  out.trials = static_cast<int>(idx.size());
  out.nodes = stack.nodes;
  out.node_meta = stack.node_meta;
  out.matrices.reserve(idx.size());
  for (int i : idx) out.matrices.push_back(stack.matrices.at(static_cast<std::size_t>(i)));
  return out;
}

SpdBatch gather_batch(const TfStack& stack, const std::vector<int>& idx) {
  SpdBatch b;
  b.reserve(idx.size());
  for (int i : idx) b.push_back(stack.matrices.at(static_cast<std::size_t>(i)));
  return b;
}

std::vector<int> gather_labels(const std::vector<int>& labels, const std::vector<int>& idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(labels.at(static_cast<std::size_t>(i)));
  return out;
}

double accuracy_from_logits(const Matrix& logits, const std::vector<int>& labels) {
  int correct = 0;
  for (int t = 0; t < logits.rows(); ++t) {
    Eigen::Index arg = 0;
    logits.row(t).maxCoeff(&arg);
    if (static_cast<int>(arg) == labels[static_cast<std::size_t>(t)]) ++correct;
  }
  return logits.rows() > 0 ? static_cast<double>(correct) / logits.rows() : 0.0;
}

double stiefel_drift(const Matrix& w) {
  if (w.rows() <= w.cols())
    return (w * w.transpose() - Matrix::Identity(w.rows(), w.rows())).cwiseAbs().maxCoeff();
  return (w.transpose() * w - Matrix::Identity(w.cols(), w.cols())).cwiseAbs().maxCoeff();
}

double min_eigenvalue(const Matrix& s) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(s), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const char* field) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error(std::string("load_model: truncated while reading ") + field);
  return v;
}

void write_matrix(std::ostream& os, const Matrix& m) {
  write_pod(os, static_cast<std::uint32_t>(m.rows()));
  write_pod(os, static_cast<std::uint32_t>(m.cols()));
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) write_pod(os, m(r, c));
}

Matrix read_matrix(std::istream& is) {
  const auto rows = read_pod<std::uint32_t>(is, "matrix rows");
  const auto cols = read_pod<std::uint32_t>(is, "matrix cols");
  Matrix m(rows, cols);
  for (std::uint32_t r = 0; r < rows; ++r)
    for (std::uint32_t c = 0; c < cols; ++c) m(r, c) = read_pod<double>(is, "matrix entry");
  return m;
}

json plan_to_json(const SegmentationPlan& plan) {
  json bands = json::array();
  for (const PlanBand& b : plan.bands)
    bands.push_back({{"lo", b.band.lo},
                     {"hi", b.band.hi},
                     {"window", b.window_length},
                     {"group", band_group_name(b.group)}});
  return json{{"span", plan.span}, {"bands", bands}};
}

SegmentationPlan plan_from_json(const json& j) {
  SegmentationPlan plan;
  plan.span = j.at("span").get<double>();
  for (const json& b : j.at("bands")) {
    PlanBand pb;
    pb.band.lo = b.at("lo").get<double>();
    pb.band.hi = b.at("hi").get<double>();
    pb.window_length = b.at("window").get<double>();
    pb.group = group_from_name(b.at("group").get<std::string>());
    plan.bands.push_back(pb);
  }
  plan.validate();
  return plan;
}

}  // namespace

ModelConfig TrainConfig::model_config(int channels, int classes) const {
  ModelConfig mc;
  mc.nodes = plan.node_count();
  mc.classes = classes;
  mc.o1 = o1 > 0 ? o1 : channels;
  if (mc.o1 != channels)
    throw std::invalid_argument("train config: o1 must equal the dataset channel count");
  mc.o2 = o2 > 0 ? o2 : (3 * mc.o1 + 1) / 2;
  mc.o3 = o3 > 0 ? o3 : mc.o1;
  mc.reeig_eps = reeig_eps;
  mc.rbn_momentum = rbn_momentum;
  mc.rbn_per_layer = rbn_per_layer;
  return mc;
}

TrainConfig TrainConfig::from_json_text(const std::string& text) {
  const json j = json::parse(text);
  TrainConfig c;
  if (j.contains("plan")) {
    if (j.at("plan").is_string()) {
      c.plan_name = j.at("plan").get<std::string>();
      c.plan = SegmentationPlan::named(c.plan_name);
    } else {
      c.plan_name = "custom";
      c.plan = plan_from_json(j.at("plan"));
    }
  }
  if (j.contains("directions")) {
    const json& d = j.at("directions");
    for (int k = 0; k < 4; ++k) {
      c.directions.time[static_cast<std::size_t>(k)] = d.at("time").at(k).get<int>();
      c.directions.freq[static_cast<std::size_t>(k)] = d.at("freq").at(k).get<int>();
    }
  }
  if (j.contains("kernel_width")) {
    if (j.at("kernel_width").is_string()) {
      if (j.at("kernel_width").get<std::string>() != "median")
        throw std::invalid_argument("train config: kernel_width must be \"median\" or a number");
      c.kernel_width_median = true;
    } else {
      c.kernel_width_median = false;
      c.kernel_width = j.at("kernel_width").get<double>();
      if (c.kernel_width <= 0.0)
        throw std::invalid_argument("train config: kernel_width must be positive");
    }
  }
  if (j.contains("dims")) {
    const json& d = j.at("dims");
    if (d.contains("o1")) c.o1 = d.at("o1").get<int>();
    if (d.contains("o2")) c.o2 = d.at("o2").get<int>();
    if (d.contains("o3")) c.o3 = d.at("o3").get<int>();
  }
  if (j.contains("reeig_eps")) c.reeig_eps = j.at("reeig_eps").get<double>();
  if (j.contains("rbn_momentum")) c.rbn_momentum = j.at("rbn_momentum").get<double>();
  if (j.contains("shrinkage")) c.shrinkage = j.at("shrinkage").get<double>();
  if (j.contains("rbn_per_layer")) c.rbn_per_layer = j.at("rbn_per_layer").get<bool>();
  if (j.contains("optimizer")) {
    const json& o = j.at("optimizer");
    if (o.contains("lr")) c.optimizer.lr = o.at("lr").get<double>();
    if (o.contains("beta1")) c.optimizer.beta1 = o.at("beta1").get<double>();
    if (o.contains("beta2")) c.optimizer.beta2 = o.at("beta2").get<double>();
    if (o.contains("eps")) c.optimizer.eps = o.at("eps").get<double>();
  }
  if (j.contains("epochs")) c.epochs = j.at("epochs").get<int>();
  if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("check_invariants")) c.check_invariants = j.at("check_invariants").get<bool>();
  if (j.contains("eval")) {
    const json& e = j.at("eval");
    const std::string mode = e.at("mode").get<std::string>();
    if (mode == "kfold") {
      c.eval.mode = EvalSpec::Mode::KFold;
      if (e.contains("k")) c.eval.k = e.at("k").get<int>();
    } else if (mode == "holdout") {
      c.eval.mode = EvalSpec::Mode::Holdout;
      c.eval.split_file = e.at("split_file").get<std::string>();
    } else {
      throw std::invalid_argument("train config: eval mode must be kfold or holdout");
    }
  }
  if (c.epochs < 0 || c.batch_size <= 0 || c.eval.k < 2)
    throw std::invalid_argument("train config: invalid epochs/batch_size/k");
  return c;
}

TrainConfig TrainConfig::from_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config file: " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return from_json_text(buf.str());
}

std::string TrainConfig::to_json_text() const {
  json j;
  j["plan"] = plan_name == "custom" ? plan_to_json(plan) : json(plan_name);
  j["directions"] = {{"time", directions.time}, {"freq", directions.freq}};
  if (kernel_width_median)
    j["kernel_width"] = "median";
  else
    j["kernel_width"] = kernel_width;
  j["dims"] = {{"o1", o1}, {"o2", o2}, {"o3", o3}};
  j["reeig_eps"] = reeig_eps;
  j["rbn_momentum"] = rbn_momentum;
  j["shrinkage"] = shrinkage;
  j["rbn_per_layer"] = rbn_per_layer;
  j["optimizer"] = {{"lr", optimizer.lr},
                    {"beta1", optimizer.beta1},
                    {"beta2", optimizer.beta2},
                    {"eps", optimizer.eps}};
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["seed"] = seed;
  j["check_invariants"] = check_invariants;
  if (eval.mode == EvalSpec::Mode::KFold)
    j["eval"] = {{"mode", "kfold"}, {"k", eval.k}};
  else
    j["eval"] = {{"mode", "holdout"}, {"split_file", eval.split_file}};
  return j.dump(2);
}

std::vector<std::vector<int>> make_class_balanced_folds(const std::vector<int>& labels, int k,
                                                        std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("make_class_balanced_folds: k must be at least 2");
  int classes = 0;
  for (int l : labels) classes = std::max(classes, l + 1);
  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(classes));
  for (int i = 0; i < static_cast<int>(labels.size()); ++i)
    by_class[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])].push_back(i);

  std::mt19937_64 rng(mix_seed(seed, 0x0f01d5));
  std::vector<std::vector<int>> folds(static_cast<std::size_t>(k));
  for (auto& cls : by_class) {
    if (static_cast<int>(cls.size()) < k)
      throw std::invalid_argument("make_class_balanced_folds: a class has fewer trials than folds");
    // Fisher-Yates with the shared deterministic generator.
    for (int i = static_cast<int>(cls.size()) - 1; i > 0; --i) {
      const int j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
      std::swap(cls[static_cast<std::size_t>(i)], cls[static_cast<std::size_t>(j)]);
    }
    for (int i = 0; i < static_cast<int>(cls.size()); ++i)
      folds[static_cast<std::size_t>(i % k)].push_back(cls[static_cast<std::size_t>(i)]);
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

std::pair<std::vector<int>, std::vector<int>> read_holdout_split(const std::string& path,
                                                                 int trials) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open split file: " + path);
  json j;
  is >> j;
  std::pair<std::vector<int>, std::vector<int>> split;
  split.first = j.at("train").get<std::vector<int>>();
  split.second = j.at("test").get<std::vector<int>>();
  std::vector<char> seen(static_cast<std::size_t>(trials), 0);
  for (const auto* vec : {&split.first, &split.second})
    for (int i : *vec) {
      if (i < 0 || i >= trials) throw std::invalid_argument("holdout split: index out of range");
      if (seen[static_cast<std::size_t>(i)]++)
        throw std::invalid_argument("holdout split: duplicate trial index");
    }
  if (split.first.empty() || split.second.empty())
    throw std::invalid_argument("holdout split: both sides must be nonempty");
  return split;
}

FoldGraph build_fold_graph(const TfStack& stack, const std::vector<int>& train_idx,
                           const TrainConfig& cfg) {
  const TfStack train = sub_stack(stack, train_idx);
  LatticeVector lattice = build_lattice(train);
  const auto edges = lattice_edges(lattice.meta, cfg.directions);
  const double t =
      cfg.kernel_width_median ? median_kernel_width(lattice, edges) : cfg.kernel_width;
  FoldGraph fg;
  fg.graph = gen_adjacency(lattice, cfg.directions, t);
  fg.propagation = row_normalize(fg.graph);
  return fg;
}

FoldResult train_single_split(const TfStack& stack, const std::vector<int>& labels,
                              const std::vector<int>& train_idx, const std::vector<int>& test_idx,
                              const TrainConfig& cfg, int fold_id, SavedModel* trained) {
  FoldResult result;
  result.fold = fold_id;

  const FoldGraph fg = build_fold_graph(stack, train_idx, cfg);
  result.kernel_width = fg.graph.kernel_width;
  result.edges = fg.graph.edge_count(false);

  int classes = 0;
  for (int l : labels) classes = std::max(classes, l + 1);
  const int channels = static_cast<int>(stack.matrices.front().front().rows());
  const ModelConfig mc = cfg.model_config(channels, classes);
  ModelParams params = ModelParams::init(mc, mix_seed(cfg.seed, static_cast<std::uint64_t>(fold_id)));
  RiemannianAdam opt(params, cfg.optimizer);

  std::mt19937_64 rng(mix_seed(cfg.seed, 0x5eed0000ULL + static_cast<std::uint64_t>(fold_id)));
  std::vector<int> order = train_idx;

  result.max_stiefel_drift = 0.0;
  result.min_bias_eigenvalue = min_eigenvalue(params.rbn.bias);

  auto eval_split = [&](const std::vector<int>& idx, int epoch, const char* name) {
    SpdBatch hb = gather_batch(stack, idx);
    const std::vector<int> lb = gather_labels(labels, idx);
    const HeadResult r = model_forward(hb, fg.propagation, params, Mode::Eval, lb);
    result.metrics.push_back({epoch, name, r.loss, accuracy_from_logits(r.logits, lb)});
    return accuracy_from_logits(r.logits, lb);
  };

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
      const int j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
      std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    int step = 0;
    for (std::size_t pos = 0; pos < order.size(); pos += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), pos + static_cast<std::size_t>(cfg.batch_size));
      const std::vector<int> batch_idx(order.begin() + static_cast<std::ptrdiff_t>(pos),
                                       order.begin() + static_cast<std::ptrdiff_t>(end));
      SpdBatch hb = gather_batch(stack, batch_idx);
      const std::vector<int> lb = gather_labels(labels, batch_idx);
      ForwardCache cache;
      const HeadResult r = model_forward(hb, fg.propagation, params, Mode::Train, lb, &cache);
      ++step;
      if (!std::isfinite(r.loss)) {
        std::ostringstream os;
        os << "training aborted: non-finite loss at epoch " << epoch << " step " << step;
        throw std::runtime_error(os.str());
      }
      const Gradients grads = model_backward(cache, params, lb);
      opt.step(params, grads);

      if (cfg.check_invariants) {
        for (const Matrix& w : params.w1)
          result.max_stiefel_drift = std::max(result.max_stiefel_drift, stiefel_drift(w));
        for (const Matrix& w : params.w2)
          result.max_stiefel_drift = std::max(result.max_stiefel_drift, stiefel_drift(w));
        result.min_bias_eigenvalue =
            std::min(result.min_bias_eigenvalue, min_eigenvalue(params.rbn.bias));
      }
    }
    result.final_train_accuracy = eval_split(train_idx, epoch, "train");
    result.final_test_accuracy = eval_split(test_idx, epoch, "test");
  }

  if (trained) {
    trained->plan = cfg.plan;
    trained->shrinkage = cfg.shrinkage;
    trained->propagation = fg.propagation;
    trained->params = params;
  }
  return result;
}

TrainSummary run_train(const EpochDataset& ds, const TrainConfig& cfg,
                       const std::string& out_prefix, SavedModel* trained) {
  ds.validate();
  const TfStack stack = build_tf_stack(ds, cfg.plan, cfg.shrinkage);

  std::vector<std::pair<std::vector<int>, std::vector<int>>> splits;
  if (cfg.eval.mode == EvalSpec::Mode::KFold) {
    const auto folds = make_class_balanced_folds(ds.labels, cfg.eval.k, cfg.seed);
    for (int f = 0; f < cfg.eval.k; ++f) {
      std::vector<int> train;
      for (int g = 0; g < cfg.eval.k; ++g)
        if (g != f)
          train.insert(train.end(), folds[static_cast<std::size_t>(g)].begin(),
                       folds[static_cast<std::size_t>(g)].end());
      std::sort(train.begin(), train.end());
      splits.emplace_back(std::move(train), folds[static_cast<std::size_t>(f)]);
    }
  } else {
    splits.push_back(read_holdout_split(cfg.eval.split_file, ds.trials));
  }

  TrainSummary summary;
  for (int f = 0; f < static_cast<int>(splits.size()); ++f) {
    SavedModel* capture = (trained && f + 1 == static_cast<int>(splits.size())) ? trained : nullptr;
    FoldResult r = train_single_split(stack, ds.labels, splits[static_cast<std::size_t>(f)].first,
                                      splits[static_cast<std::size_t>(f)].second, cfg, f, capture);
    summary.folds.push_back(std::move(r));
  }
  double acc = 0.0;
  for (const FoldResult& r : summary.folds) acc += r.final_test_accuracy;
  summary.mean_test_accuracy = summary.folds.empty() ? 0.0 : acc / summary.folds.size();

  if (!out_prefix.empty()) {
    for (const FoldResult& r : summary.folds) {
      std::ostringstream name;
      name << out_prefix << "_fold" << r.fold << "_metrics.csv";
      std::ofstream os(name.str());
      if (!os) throw std::runtime_error("cannot write metrics file: " + name.str());
      os << "epoch,split,loss,accuracy\n";
      for (const EpochMetric& m : r.metrics)
        os << m.epoch << "," << m.split << "," << m.loss << "," << m.accuracy << "\n";
    }
    json folds_json = json::array();
    for (const FoldResult& r : summary.folds)
      folds_json.push_back({{"fold", r.fold},
                            {"final_train_accuracy", r.final_train_accuracy},
                            {"final_test_accuracy", r.final_test_accuracy},
                            {"kernel_width", r.kernel_width},
                            {"edges", r.edges},
                            {"max_stiefel_drift", r.max_stiefel_drift},
                            {"min_bias_eigenvalue", r.min_bias_eigenvalue}});
    json j{{"config", json::parse(cfg.to_json_text())},
           {"folds", folds_json},
           {"mean_test_accuracy", summary.mean_test_accuracy}};
    std::ofstream os(out_prefix + "_summary.json");
    if (!os) throw std::runtime_error("cannot write summary file");
    os << j.dump(2) << "\n";
  }
  return summary;
}

void save_model(const SavedModel& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_model: cannot open " + path);
  os.write("SGM1", 4);
  write_pod(os, static_cast<std::uint32_t>(1));
  write_pod(os, static_cast<std::uint32_t>(model.plan.bands.size()));
  for (const PlanBand& b : model.plan.bands) {
    write_pod(os, b.band.lo);
    write_pod(os, b.band.hi);
    write_pod(os, b.window_length);
    write_pod(os, static_cast<std::uint32_t>(b.group));
  }
  write_pod(os, model.plan.span);
  write_pod(os, model.shrinkage);
  const ModelConfig& c = model.params.cfg;
  write_pod(os, static_cast<std::uint32_t>(c.nodes));
  write_pod(os, static_cast<std::uint32_t>(c.classes));
  write_pod(os, static_cast<std::uint32_t>(c.o1));
  write_pod(os, static_cast<std::uint32_t>(c.o2));
  write_pod(os, static_cast<std::uint32_t>(c.o3));
  write_pod(os, c.reeig_eps);
  write_pod(os, c.rbn_momentum);
  write_pod(os, static_cast<std::uint8_t>(c.rbn_per_layer ? 1 : 0));
  write_matrix(os, model.propagation);
  for (const Matrix& w : model.params.w1) write_matrix(os, w);
  for (const Matrix& w : model.params.w2) write_matrix(os, w);
  if (c.rbn_per_layer) {
    write_matrix(os, model.params.rbn1.bias);
    for (const Matrix& g : model.params.rbn1.running_mean) write_matrix(os, g);
  }
  write_matrix(os, model.params.rbn.bias);
  for (const Matrix& g : model.params.rbn.running_mean) write_matrix(os, g);
  write_matrix(os, model.params.head);
  if (!os) throw std::runtime_error("save_model: write failed");
}

SavedModel load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_model: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "SGM1")
    throw std::runtime_error("load_model: bad magic, not a model file");
  if (read_pod<std::uint32_t>(is, "version") != 1)
    throw std::runtime_error("load_model: unsupported version");

  SavedModel model;
  const auto n_bands = read_pod<std::uint32_t>(is, "band count");
  for (std::uint32_t b = 0; b < n_bands; ++b) {
    PlanBand pb;
    pb.band.lo = read_pod<double>(is, "band lo");
    pb.band.hi = read_pod<double>(is, "band hi");
    pb.window_length = read_pod<double>(is, "window length");
    pb.group = static_cast<BandGroup>(read_pod<std::uint32_t>(is, "band group"));
    model.plan.bands.push_back(pb);
  }
  model.plan.span = read_pod<double>(is, "span");
  model.shrinkage = read_pod<double>(is, "shrinkage");
  ModelConfig c;
  c.nodes = static_cast<int>(read_pod<std::uint32_t>(is, "nodes"));
  c.classes = static_cast<int>(read_pod<std::uint32_t>(is, "classes"));
  c.o1 = static_cast<int>(read_pod<std::uint32_t>(is, "o1"));
  c.o2 = static_cast<int>(read_pod<std::uint32_t>(is, "o2"));
  c.o3 = static_cast<int>(read_pod<std::uint32_t>(is, "o3"));
  c.reeig_eps = read_pod<double>(is, "reeig eps");
  c.rbn_momentum = read_pod<double>(is, "rbn momentum");
  c.rbn_per_layer = read_pod<std::uint8_t>(is, "rbn per layer") != 0;
  model.params.cfg = c;
  model.propagation = read_matrix(is);
  for (int i = 0; i < c.nodes; ++i) model.params.w1.push_back(read_matrix(is));
  for (int i = 0; i < c.nodes; ++i) model.params.w2.push_back(read_matrix(is));
  if (c.rbn_per_layer) {
    model.params.rbn1.bias = read_matrix(is);
    model.params.rbn1.momentum = c.rbn_momentum;
    for (int i = 0; i < c.nodes; ++i) model.params.rbn1.running_mean.push_back(read_matrix(is));
  }
  model.params.rbn.bias = read_matrix(is);
  model.params.rbn.momentum = c.rbn_momentum;
  for (int i = 0; i < c.nodes; ++i) model.params.rbn.running_mean.push_back(read_matrix(is));
  model.params.head = read_matrix(is);
  model.plan.validate();
  return model;
}

EvalResult evaluate_model(const SavedModel& model, const EpochDataset& ds,
                          const std::vector<int>* subset) {
  ds.validate();
  const TfStack stack = build_tf_stack(ds, model.plan, model.shrinkage);
  std::vector<int> idx;
  if (subset) {
    idx = *subset;
  } else {
    idx.resize(static_cast<std::size_t>(ds.trials));
    for (int i = 0; i < ds.trials; ++i) idx[static_cast<std::size_t>(i)] = i;
  }
  SpdBatch hb = gather_batch(stack, idx);
  const std::vector<int> lb = gather_labels(ds.labels, idx);
  ModelParams params = model.params;  // forward takes a mutable reference
  const HeadResult r = model_forward(hb, model.propagation, params, Mode::Eval, lb);
  return {r.loss, accuracy_from_logits(r.logits, lb), static_cast<int>(idx.size())};
}

CspRunResult run_csp(const EpochDataset& ds, const CspRunConfig& cfg) {
  ds.validate();
  if (ds.num_classes() != 2) throw std::invalid_argument("run_csp: exactly two classes required");
  const double span = static_cast<double>(ds.samples) / ds.sampling_rate;
  const double w_end = cfg.window_end > 0.0 ? cfg.window_end : span;
  if (!(cfg.window_start >= 0.0 && cfg.window_start < w_end && w_end <= span + 1e-9))
    throw std::invalid_argument("run_csp: invalid analysis window");
  const int s0 = static_cast<int>(std::llround(cfg.window_start * ds.sampling_rate));
  const int s1 = static_cast<int>(std::llround(w_end * ds.sampling_rate));

  std::vector<Matrix> covs;
  covs.reserve(static_cast<std::size_t>(ds.trials));
  for (const Matrix& x : ds.data) {
    const Matrix filtered = bandpass(x, cfg.band, ds.sampling_rate);
    covs.push_back(covariance(filtered.middleCols(s0, s1 - s0), cfg.shrinkage));
  }

  CspRunResult result;
  const auto folds = make_class_balanced_folds(ds.labels, cfg.folds, cfg.seed);
  for (int f = 0; f < cfg.folds; ++f) {
    std::vector<int> train_idx;
    for (int g = 0; g < cfg.folds; ++g)
      if (g != f)
        train_idx.insert(train_idx.end(), folds[static_cast<std::size_t>(g)].begin(),
                         folds[static_cast<std::size_t>(g)].end());
    const std::vector<int>& test_idx = folds[static_cast<std::size_t>(f)];

    std::vector<Matrix> train_covs;
    std::vector<int> train_labels;
    for (int i : train_idx) {
      train_covs.push_back(covs[static_cast<std::size_t>(i)]);
      train_labels.push_back(ds.labels[static_cast<std::size_t>(i)]);
    }
    const auto [sp, sm] = class_means(train_covs, train_labels);
    const CspModel model = csp_filters(sp, sm, cfg.filters);

    Matrix train_feats(static_cast<int>(train_idx.size()), cfg.filters);
    for (int i = 0; i < static_cast<int>(train_idx.size()); ++i)
      train_feats.row(i) =
          log_var_features(covs[static_cast<std::size_t>(train_idx[static_cast<std::size_t>(i)])],
                           model.filters)
              .transpose();
    Matrix test_feats(static_cast<int>(test_idx.size()), cfg.filters);
    std::vector<int> test_labels;
    for (int i = 0; i < static_cast<int>(test_idx.size()); ++i) {
      test_feats.row(i) =
          log_var_features(covs[static_cast<std::size_t>(test_idx[static_cast<std::size_t>(i)])],
                           model.filters)
              .transpose();
      test_labels.push_back(ds.labels[static_cast<std::size_t>(test_idx[static_cast<std::size_t>(i)])]);
    }
    const FitResult fit = logistic_fit_predict(train_feats, train_labels, test_feats, test_labels);
    result.fold_accuracies.push_back(fit.accuracy);
  }
  double acc = 0.0;
  for (double a : result.fold_accuracies) acc += a;
  result.mean_accuracy = acc / static_cast<double>(result.fold_accuracies.size());

  const auto [sp_all, sm_all] = class_means(covs, ds.labels);
  const double direct = airm_distance(sp_all, sm_all);
  const double via_spectrum = csp_spectrum_distance(sp_all, sm_all);
  result.eq1_residual = std::abs(direct - via_spectrum) / std::max(direct, 1e-300);
  return result;
}

GradcheckReport gradcheck(const GradcheckConfig& cfg) {
  std::mt19937_64 rng(mix_seed(cfg.seed, 0x6ead));

  auto random_spd = [&](int n) {
    // Well-conditioned inputs away from the rectification threshold, with
    // eigenvalue gaps above 1e-6 (degenerate draws are resampled).
    for (;;) {
      Matrix a(n, n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a(i, j) = standard_normal(rng);
      Matrix s = symmetrize(a * a.transpose() / n + 0.5 * Matrix::Identity(n, n));
      const EigenPair ep = sym_eig(s);
      bool ok = true;
      for (Eigen::Index i = 1; i < ep.values.size(); ++i)
        if (ep.values(i - 1) - ep.values(i) < 1e-6) ok = false;
      if (ok) return s;
    }
  };

  SpdBatch input(static_cast<std::size_t>(cfg.trials));
  for (auto& row : input) {
    row.reserve(static_cast<std::size_t>(cfg.nodes));
    for (int i = 0; i < cfg.nodes; ++i) row.push_back(random_spd(cfg.channels));
  }
  std::vector<int> labels(static_cast<std::size_t>(cfg.trials));
  for (auto& l : labels) l = static_cast<int>(rng() % static_cast<std::uint64_t>(cfg.classes));

  // Path-graph propagation over the nodes.
  Matrix adjacency = Matrix::Zero(cfg.nodes, cfg.nodes);
  for (int i = 0; i + 1 < cfg.nodes; ++i) {
    const double w = 0.3 + 0.6 * uniform01(rng);
    adjacency(i, i + 1) = w;
    adjacency(i + 1, i) = w;
  }
  Matrix propagation = adjacency + Matrix::Identity(cfg.nodes, cfg.nodes);
  for (int i = 0; i < cfg.nodes; ++i) propagation.row(i) /= propagation.row(i).sum();

  ModelConfig mc;
  mc.nodes = cfg.nodes;
  mc.classes = cfg.classes;
  mc.o1 = cfg.channels;
  mc.o2 = cfg.o2;
  mc.o3 = cfg.o3;
  mc.rbn_per_layer = cfg.rbn_per_layer;
  ModelParams params = ModelParams::init(mc, mix_seed(cfg.seed, 0xbead));

  // One training pass fixes the normalization statistics; the checked
  // function then runs with frozen statistics so it is smooth in the
  // parameters.
  (void)model_forward(input, propagation, params, Mode::Train, labels);

  ForwardCache cache;
  (void)model_forward(input, propagation, params, Mode::Eval, labels, &cache);
  if (cfg.corrupt_reeig) {
    // Sign-flipped spectra push the rectification into its clipped regime,
    // zeroing the divided-difference table the backward relies on.
    for (auto& row : cache.y2_eig)
      for (auto& e : row) e.lam = -e.lam;
  }
  const Gradients analytic = model_backward(cache, params, labels);

  auto loss_at = [&](ModelParams& p) {
    return model_forward(input, propagation, p, Mode::Eval, labels).loss;
  };

  auto fd_tensor = [&](Matrix& target) {
    Matrix fd = Matrix::Zero(target.rows(), target.cols());
    for (int r = 0; r < target.rows(); ++r)
      for (int c = 0; c < target.cols(); ++c) {
        const double orig = target(r, c);
        target(r, c) = orig + cfg.fd_step;
        const double up = loss_at(params);
        target(r, c) = orig - cfg.fd_step;
        const double down = loss_at(params);
        target(r, c) = orig;
        fd(r, c) = (up - down) / (2.0 * cfg.fd_step);
      }
    return fd;
  };

  auto compare = [&](const Matrix& an, const Matrix& fd) {
    const double denom = std::max({an.cwiseAbs().maxCoeff(), fd.cwiseAbs().maxCoeff(), 1e-10});
    return (an - fd).cwiseAbs().maxCoeff() / denom;
  };

  GradcheckReport report;
  auto check_stack = [&](std::vector<Matrix>& ws, const std::vector<Matrix>& an,
                         const std::string& name) {
    double worst = 0.0;
    for (std::size_t i = 0; i < ws.size(); ++i)
      worst = std::max(worst, compare(an[i], fd_tensor(ws[i])));
    report.layers.push_back({name, worst, worst < cfg.threshold});
  };
  auto check_tensor = [&](Matrix& target, const Matrix& an, const std::string& name) {
    const double err = compare(an, fd_tensor(target));
    report.layers.push_back({name, err, err < cfg.threshold});
  };
  check_stack(params.w1, analytic.w1, "graph_bimap_1");
  check_stack(params.w2, analytic.w2, "graph_bimap_2");
  if (cfg.rbn_per_layer) check_tensor(params.rbn1.bias, analytic.rbn1_bias, "rbn1_bias");
  check_tensor(params.rbn.bias, analytic.rbn_bias, "rbn_bias");
  check_tensor(params.head, analytic.head, "head");

  report.pass = true;
  for (const LayerError& l : report.layers) report.pass = report.pass && l.pass;
  return report;
}

}  // namespace spdgcn
