// The SPD graph network: graph-aggregated congruence layers, eigenvalue
// rectification, Riemannian batch normalization, tangent-space logarithm,
// linear head and cross-entropy — forward passes plus structured
// reverse-mode gradients through every eigendecomposition.

#pragma once

#include <cstdint>
#include <vector>

#include "spdgcn/spd.hpp"

namespace spdgcn {

/// One SPD matrix per node per trial.
using SpdBatch = std::vector<std::vector<Matrix>>;

struct ModelConfig {
  int nodes = 0;
  int classes = 0;
  int o1 = 0;  // input dimension (channel count)
  int o2 = 0;  // hidden dimension
  int o3 = 0;  // output dimension
  double reeig_eps = 1e-6;
  double rbn_momentum = 0.9;
  // Propagation-rule variant with a normalization after each layer instead
  // of only after the last one. Off by default; turning it on adds an o2^2
  // bias parameter.
  bool rbn_per_layer = false;
};

struct RbnState {
  Matrix bias;                       // learned SPD bias
  std::vector<Matrix> running_mean;  // per node, SPD statistics
  double momentum = 0.9;
};

struct ModelParams {
  ModelConfig cfg;
  std::vector<Matrix> w1;  // per node, o2 x o1
  std::vector<Matrix> w2;  // per node, o3 x o2
  RbnState rbn1;           // populated only when cfg.rbn_per_layer
  RbnState rbn;
  Matrix head;  // classes x (nodes * o3 * o3), no bias term

  /// Seeded init: random orthonormal transformation stacks, identity bias
  /// and running means, small Gaussian head.
  static ModelParams init(const ModelConfig& cfg, std::uint64_t seed);

  /// Trainable scalar count (running means are statistics, not parameters).
  long long parameter_count() const;
};

/// N o2 (o1 + o3) + (c N + 1) o3^2
long long parameter_count_formula(int nodes, int classes, int o1, int o2, int o3);

enum class Mode { Train, Eval };

struct EigCache {
  Matrix u;
  Vector lam;  // descending
};

/// Reverse-mode gradient through Y = U f(Lambda) U^T given the upstream
/// gradient, via divided differences with f'(midpoint) substituted when an
/// eigenvalue gap falls below 1e-9.
Matrix spectral_backward(const EigCache& eig, const Matrix& upstream, SpectralFn fn,
                         double clip_eps = 0.0);

/// Node i output: W_i (sum_j P_ij H_j) W_i^T. An empty P means identity
/// (no aggregation). Optionally returns the aggregated inputs.
SpdBatch graph_bimap_forward(const SpdBatch& h, const Matrix& p, const std::vector<Matrix>& w,
                             SpdBatch* aggregated = nullptr);

/// Eigenvalue clipping at eps for every matrix; caches the
/// decompositions of the inputs for the backward pass.
SpdBatch reeig_forward(const SpdBatch& h, double eps,
                       std::vector<std::vector<EigCache>>* caches = nullptr);

struct RbnCache {
  std::vector<Matrix> center_invsqrt;  // per node, G^{-1/2}
  SpdBatch centered;                   // pre-bias matrices
  EigCache bias_eig;
  Matrix bias_sqrt;
};

/// Train mode: centers each node's batch at its Karcher barycenter, biases
/// by the learned SPD matrix, and moves the running means a (1 - momentum)
/// geodesic step toward the batch barycenters. Eval mode centers with the
/// stored running means.
SpdBatch rbn_forward(const SpdBatch& h, RbnState& state, Mode mode, RbnCache* cache = nullptr);

/// Matrix logarithm per node; caches the decompositions.
SpdBatch log_layer(const SpdBatch& h, std::vector<std::vector<EigCache>>* caches = nullptr);

/// Row-major flattening of all node matrices per trial: trials x (N * d^2).
Matrix flatten_features(const SpdBatch& tangent);

struct HeadResult {
  Matrix logits;  // trials x classes
  double loss = 0.0;
};

/// logits = features * head^T; mean softmax cross-entropy.
HeadResult head_and_loss(const Matrix& features, const Matrix& head,
                         const std::vector<int>& labels);

struct ForwardCache {
  SpdBatch m1;  // aggregated layer-1 inputs
  std::vector<std::vector<EigCache>> y1_eig;
  RbnCache rbn1;  // only when per-layer normalization is on
  SpdBatch m2;    // layer-2 inputs
  std::vector<std::vector<EigCache>> y2_eig;
  RbnCache rbn;
  std::vector<std::vector<EigCache>> log_eig;
  Matrix features;
  Matrix logits;
};

/// Full forward pass: aggregate+congruence, rectify, congruence, rectify,
/// batch-normalize, log, flatten, head. Train mode updates the running
/// means in `params.rbn`.
HeadResult model_forward(const SpdBatch& input, const Matrix& p, ModelParams& params, Mode mode,
                         const std::vector<int>& labels, ForwardCache* cache = nullptr);

struct Gradients {
  std::vector<Matrix> w1;
  std::vector<Matrix> w2;
  Matrix rbn1_bias;
  Matrix rbn_bias;
  Matrix head;
};

/// Reverse-mode gradients for every trainable tensor. Batch barycenters are
/// treated as fixed statistics: gradients flow through the centering and
/// bias congruences only.
Gradients model_backward(const ForwardCache& cache, const ModelParams& params,
                         const std::vector<int>& labels);

}  // namespace spdgcn
