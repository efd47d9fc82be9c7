#include "spdgcn/network.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "spdgcn/rng.hpp"

namespace spdgcn {

namespace {

constexpr double kGapTol = 1e-9;

double fn_value(SpectralFn fn, double lam, double eps) {
  switch (fn) {
    case SpectralFn::Log: return std::log(lam);
    case SpectralFn::Exp: return std::exp(lam);
    case SpectralFn::Sqrt: return std::sqrt(lam);
    case SpectralFn::InvSqrt: return 1.0 / std::sqrt(lam);
    case SpectralFn::Clip: return std::max(lam, eps);
  }
  return 0.0;
}

double fn_derivative(SpectralFn fn, double lam, double eps) {
  switch (fn) {
    case SpectralFn::Log: return 1.0 / lam;
    case SpectralFn::Exp: return std::exp(lam);
    case SpectralFn::Sqrt: return 0.5 / std::sqrt(lam);
    case SpectralFn::InvSqrt: return -0.5 / (lam * std::sqrt(lam));
    case SpectralFn::Clip: return lam > eps ? 1.0 : 0.0;
  }
  return 0.0;
}

// Orthonormal columns when rows >= cols, orthonormal rows otherwise.
Matrix random_orthonormal(int rows, int cols, std::mt19937_64& rng) {
  const bool tall = rows >= cols;
  const int r = tall ? rows : cols;
  const int c = tall ? cols : rows;
  Matrix g(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) g(i, j) = standard_normal(rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(r, c);
  const Matrix rmat = qr.matrixQR().topRows(c).triangularView<Eigen::Upper>();
  for (int j = 0; j < c; ++j)
    if (rmat(j, j) < 0.0) q.col(j) = -q.col(j);
  return tall ? q : Matrix(q.transpose());
}

void check_batch(const SpdBatch& h, const char* what) {
  if (h.empty() || h.front().empty()) throw std::invalid_argument(std::string(what) + ": empty batch");
  const std::size_t nodes = h.front().size();
  for (const auto& row : h)
    if (row.size() != nodes) throw std::invalid_argument(std::string(what) + ": ragged batch");
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (int t = 0; t < logits.rows(); ++t) {
    const double m = logits.row(t).maxCoeff();
    Eigen::RowVectorXd e = (logits.row(t).array() - m).exp();
    p.row(t) = e / e.sum();
  }
  return p;
}

}  // namespace

Matrix spectral_backward(const EigCache& eig, const Matrix& upstream, SpectralFn fn,
                         double clip_eps) {
  const Eigen::Index n = eig.lam.size();
  const Matrix g = eig.u.transpose() * symmetrize(upstream) * eig.u;
  Matrix k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double li = eig.lam(i), lj = eig.lam(j);
      if (std::abs(li - lj) < kGapTol) {
        k(i, j) = fn_derivative(fn, 0.5 * (li + lj), clip_eps);
      } else {
        k(i, j) = (fn_value(fn, li, clip_eps) - fn_value(fn, lj, clip_eps)) / (li - lj);
      }
    }
  }
  return symmetrize(eig.u * k.cwiseProduct(g) * eig.u.transpose());
}

long long parameter_count_formula(int nodes, int classes, int o1, int o2, int o3) {
  const long long n = nodes, c = classes;
  return n * o2 * (static_cast<long long>(o1) + o3) + (c * n + 1) * static_cast<long long>(o3) * o3;
}

ModelParams ModelParams::init(const ModelConfig& cfg, std::uint64_t seed) {
  if (cfg.nodes <= 0 || cfg.classes < 2 || cfg.o1 <= 0 || cfg.o2 <= 0 || cfg.o3 <= 0)
    throw std::invalid_argument("ModelParams::init: invalid configuration");
  std::mt19937_64 rng(seed);
  ModelParams p;
  p.cfg = cfg;
  p.w1.reserve(static_cast<std::size_t>(cfg.nodes));
  p.w2.reserve(static_cast<std::size_t>(cfg.nodes));
  for (int i = 0; i < cfg.nodes; ++i) p.w1.push_back(random_orthonormal(cfg.o2, cfg.o1, rng));
  for (int i = 0; i < cfg.nodes; ++i) p.w2.push_back(random_orthonormal(cfg.o3, cfg.o2, rng));
  if (cfg.rbn_per_layer) {
    p.rbn1.bias = Matrix::Identity(cfg.o2, cfg.o2);
    p.rbn1.running_mean.assign(static_cast<std::size_t>(cfg.nodes), Matrix::Identity(cfg.o2, cfg.o2));
    p.rbn1.momentum = cfg.rbn_momentum;
  }
  p.rbn.bias = Matrix::Identity(cfg.o3, cfg.o3);
  p.rbn.running_mean.assign(static_cast<std::size_t>(cfg.nodes), Matrix::Identity(cfg.o3, cfg.o3));
  p.rbn.momentum = cfg.rbn_momentum;
  const long long d = static_cast<long long>(cfg.nodes) * cfg.o3 * cfg.o3;
  p.head = Matrix(cfg.classes, d);
  for (int i = 0; i < cfg.classes; ++i)
    for (long long j = 0; j < d; ++j) p.head(i, j) = 0.01 * standard_normal(rng);
  return p;
}

long long ModelParams::parameter_count() const {
  long long n = 0;
  for (const Matrix& w : w1) n += w.size();
  for (const Matrix& w : w2) n += w.size();
  if (cfg.rbn_per_layer) n += rbn1.bias.size();
  n += rbn.bias.size();
  n += head.size();
  return n;
}

SpdBatch graph_bimap_forward(const SpdBatch& h, const Matrix& p, const std::vector<Matrix>& w,
                             SpdBatch* aggregated) {
  check_batch(h, "graph_bimap_forward");
  const int trials = static_cast<int>(h.size());
  const int nodes = static_cast<int>(h.front().size());
  if (static_cast<int>(w.size()) != nodes)
    throw std::invalid_argument("graph_bimap_forward: one transformation per node required");
  const bool identity = p.size() == 0;
  if (!identity && (p.rows() != nodes || p.cols() != nodes))
    throw std::invalid_argument("graph_bimap_forward: propagation matrix shape mismatch");

  SpdBatch out(static_cast<std::size_t>(trials));
  if (aggregated) aggregated->assign(static_cast<std::size_t>(trials), {});
  for (int t = 0; t < trials; ++t) {
    const auto& row = h[static_cast<std::size_t>(t)];
    auto& orow = out[static_cast<std::size_t>(t)];
    orow.reserve(static_cast<std::size_t>(nodes));
    std::vector<Matrix>* arow = aggregated ? &(*aggregated)[static_cast<std::size_t>(t)] : nullptr;
    if (arow) arow->reserve(static_cast<std::size_t>(nodes));
    for (int i = 0; i < nodes; ++i) {
      Matrix m;
      if (identity) {
        m = row[static_cast<std::size_t>(i)];
      } else {
        m = Matrix::Zero(row.front().rows(), row.front().cols());
        for (int j = 0; j < nodes; ++j) {
          const double pij = p(i, j);
          if (pij != 0.0) m += pij * row[static_cast<std::size_t>(j)];
        }
      }
      if (arow) arow->push_back(m);
      orow.push_back(congruence(w[static_cast<std::size_t>(i)], m));
    }
  }
  return out;
}

SpdBatch reeig_forward(const SpdBatch& h, double eps,
                       std::vector<std::vector<EigCache>>* caches) {
  check_batch(h, "reeig_forward");
  SpdBatch out(h.size());
  if (caches) caches->assign(h.size(), {});
  for (std::size_t t = 0; t < h.size(); ++t) {
    out[t].reserve(h[t].size());
    if (caches) (*caches)[t].reserve(h[t].size());
    for (const Matrix& s : h[t]) {
      EigenPair ep = sym_eig(s);
      Vector clipped = ep.values.cwiseMax(eps);
      out[t].push_back(
          symmetrize(ep.vectors * clipped.asDiagonal() * ep.vectors.transpose()));
      if (caches) (*caches)[t].push_back({ep.vectors, ep.values});
    }
  }
  return out;
}

SpdBatch rbn_forward(const SpdBatch& h, RbnState& state, Mode mode, RbnCache* cache) {
  check_batch(h, "rbn_forward");
  const int trials = static_cast<int>(h.size());
  const int nodes = static_cast<int>(h.front().size());
  if (static_cast<int>(state.running_mean.size()) != nodes)
    throw std::invalid_argument("rbn_forward: running-mean count does not match node count");

  std::vector<Matrix> center_invsqrt(static_cast<std::size_t>(nodes));
  for (int i = 0; i < nodes; ++i) {
    Matrix g;
    if (mode == Mode::Train) {
      std::vector<Matrix> pts;
      pts.reserve(static_cast<std::size_t>(trials));
      for (int t = 0; t < trials; ++t) pts.push_back(h[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)]);
      g = frechet_mean(pts);
      // Exponential moving statistic: keep `momentum` of the old mean.
      state.running_mean[static_cast<std::size_t>(i)] =
          geodesic(state.running_mean[static_cast<std::size_t>(i)], g, 1.0 - state.momentum);
    } else {
      g = state.running_mean[static_cast<std::size_t>(i)];
    }
    center_invsqrt[static_cast<std::size_t>(i)] = spd_invsqrt(g);
  }

  // Decompose through the symmetric part so a perturbed (slightly
  // asymmetric) bias still defines the same function of sym(B); entrywise
  // finite differences then match the symmetric gradient exactly.
  EigenPair bias_ep = sym_eig(symmetrize(state.bias));
  if (bias_ep.values.minCoeff() <= 0.0)
    throw std::runtime_error("rbn_forward: bias left the SPD cone");
  const Matrix bias_sqrt = symmetrize(
      bias_ep.vectors * bias_ep.values.cwiseSqrt().asDiagonal() * bias_ep.vectors.transpose());

  SpdBatch out(h.size());
  SpdBatch centered(h.size());
  for (int t = 0; t < trials; ++t) {
    out[static_cast<std::size_t>(t)].reserve(static_cast<std::size_t>(nodes));
    centered[static_cast<std::size_t>(t)].reserve(static_cast<std::size_t>(nodes));
    for (int i = 0; i < nodes; ++i) {
      const Matrix& gm = center_invsqrt[static_cast<std::size_t>(i)];
      Matrix c = symmetrize(gm * h[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)] * gm);
      out[static_cast<std::size_t>(t)].push_back(symmetrize(bias_sqrt * c * bias_sqrt));
      centered[static_cast<std::size_t>(t)].push_back(std::move(c));
    }
  }
  if (cache) {
    cache->center_invsqrt = std::move(center_invsqrt);
    cache->centered = std::move(centered);
    cache->bias_eig = {bias_ep.vectors, bias_ep.values};
    cache->bias_sqrt = bias_sqrt;
  }
  return out;
}

SpdBatch log_layer(const SpdBatch& h, std::vector<std::vector<EigCache>>* caches) {
  check_batch(h, "log_layer");
  SpdBatch out(h.size());
  if (caches) caches->assign(h.size(), {});
  for (std::size_t t = 0; t < h.size(); ++t) {
    out[t].reserve(h[t].size());
    if (caches) (*caches)[t].reserve(h[t].size());
    for (const Matrix& s : h[t]) {
      EigenPair ep = sym_eig(s);
      if (ep.values.minCoeff() <= 0.0)
        throw std::invalid_argument("log_layer: input is not positive-definite");
      Vector logged = ep.values.array().log();
      out[t].push_back(symmetrize(ep.vectors * logged.asDiagonal() * ep.vectors.transpose()));
      if (caches) (*caches)[t].push_back({ep.vectors, ep.values});
    }
  }
  return out;
}

Matrix flatten_features(const SpdBatch& tangent) {
  check_batch(tangent, "flatten_features");
  const int trials = static_cast<int>(tangent.size());
  const int nodes = static_cast<int>(tangent.front().size());
  const int d = static_cast<int>(tangent.front().front().rows());
  Matrix out(trials, static_cast<long long>(nodes) * d * d);
  for (int t = 0; t < trials; ++t)
    for (int i = 0; i < nodes; ++i) {
      const Matrix& m = tangent[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)];
      for (int r = 0; r < d; ++r)
        for (int c = 0; c < d; ++c) out(t, (static_cast<long long>(i) * d + r) * d + c) = m(r, c);
    }
  return out;
}

HeadResult head_and_loss(const Matrix& features, const Matrix& head,
                         const std::vector<int>& labels) {
  if (features.cols() != head.cols())
    throw std::invalid_argument("head_and_loss: feature dimension mismatch");
  if (static_cast<int>(labels.size()) != features.rows())
    throw std::invalid_argument("head_and_loss: label count mismatch");
  const int classes = static_cast<int>(head.rows());
  HeadResult res;
  res.logits = features * head.transpose();
  double loss = 0.0;
  for (int t = 0; t < res.logits.rows(); ++t) {
    const int y = labels[static_cast<std::size_t>(t)];
    if (y < 0 || y >= classes) throw std::invalid_argument("head_and_loss: label out of range");
    const double m = res.logits.row(t).maxCoeff();
    const double lse = m + std::log((res.logits.row(t).array() - m).exp().sum());
    loss += lse - res.logits(t, y);
  }
  res.loss = loss / static_cast<double>(res.logits.rows());
  return res;
}

HeadResult model_forward(const SpdBatch& input, const Matrix& p, ModelParams& params, Mode mode,
                         const std::vector<int>& labels, ForwardCache* cache) {
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;

  SpdBatch y1 = graph_bimap_forward(input, p, params.w1, &c.m1);
  SpdBatch z1 = reeig_forward(y1, params.cfg.reeig_eps, &c.y1_eig);
  if (params.cfg.rbn_per_layer) z1 = rbn_forward(z1, params.rbn1, mode, &c.rbn1);

  c.m2 = z1;  // second layer aggregates with the identity
  SpdBatch y2 = graph_bimap_forward(z1, Matrix(), params.w2, nullptr);
  SpdBatch z2 = reeig_forward(y2, params.cfg.reeig_eps, &c.y2_eig);
  SpdBatch r = rbn_forward(z2, params.rbn, mode, &c.rbn);
  SpdBatch tang = log_layer(r, &c.log_eig);
  c.features = flatten_features(tang);
  HeadResult res = head_and_loss(c.features, params.head, labels);
  c.logits = res.logits;
  return res;
}

Gradients model_backward(const ForwardCache& cache, const ModelParams& params,
                         const std::vector<int>& labels) {
  const int trials = static_cast<int>(cache.logits.rows());
  const int nodes = params.cfg.nodes;
  const int o3 = params.cfg.o3;
  if (trials == 0 || cache.m1.empty()) throw std::invalid_argument("model_backward: missing caches");

  Gradients g;
  g.w1.assign(params.w1.size(), Matrix());
  g.w2.assign(params.w2.size(), Matrix());
  for (std::size_t i = 0; i < params.w1.size(); ++i) g.w1[i] = Matrix::Zero(params.w1[i].rows(), params.w1[i].cols());
  for (std::size_t i = 0; i < params.w2.size(); ++i) g.w2[i] = Matrix::Zero(params.w2[i].rows(), params.w2[i].cols());
  g.head = Matrix::Zero(params.head.rows(), params.head.cols());
  g.rbn_bias = Matrix::Zero(params.rbn.bias.rows(), params.rbn.bias.cols());
  if (params.cfg.rbn_per_layer)
    g.rbn1_bias = Matrix::Zero(params.rbn1.bias.rows(), params.rbn1.bias.cols());

  // Head and cross-entropy.
  Matrix dlogits = softmax_rows(cache.logits);
  for (int t = 0; t < trials; ++t) dlogits(t, labels[static_cast<std::size_t>(t)]) -= 1.0;
  dlogits /= static_cast<double>(trials);
  g.head = dlogits.transpose() * cache.features;
  const Matrix dfeat = dlogits * params.head;

  Matrix d_bias_sqrt_acc = Matrix::Zero(o3, o3);
  Matrix d_bias1_sqrt_acc;
  if (params.cfg.rbn_per_layer)
    d_bias1_sqrt_acc = Matrix::Zero(params.cfg.o2, params.cfg.o2);

  const Matrix& bh = cache.rbn.bias_sqrt;
  for (int t = 0; t < trials; ++t) {
    for (int i = 0; i < nodes; ++i) {
      // Unflatten the feature gradient for this node.
      Matrix dl(o3, o3);
      for (int r = 0; r < o3; ++r)
        for (int col = 0; col < o3; ++col)
          dl(r, col) = dfeat(t, (static_cast<long long>(i) * o3 + r) * o3 + col);

      // LOG layer.
      const Matrix dr = spectral_backward(
          cache.log_eig[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)], dl,
          SpectralFn::Log);

      // Bias congruence R = Bh C Bh.
      const Matrix& cmat =
          cache.rbn.centered[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)];
      d_bias_sqrt_acc += dr * bh * cmat + cmat * bh * dr;
      const Matrix dc = bh * dr * bh;

      // Centering congruence C = G^{-1/2} Z2 G^{-1/2} (barycenter fixed).
      const Matrix& gm = cache.rbn.center_invsqrt[static_cast<std::size_t>(i)];
      const Matrix dz2 = gm * dc * gm;

      // ReEig of layer 2.
      const Matrix dy2 = spectral_backward(
          cache.y2_eig[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)], dz2,
          SpectralFn::Clip, params.cfg.reeig_eps);

      // Congruence Y2 = W2 M2 W2^T.
      const Matrix& m2 = cache.m2[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)];
      const Matrix& w2 = params.w2[static_cast<std::size_t>(i)];
      g.w2[static_cast<std::size_t>(i)] += (dy2 + dy2.transpose()) * w2 * m2;
      Matrix dz1 = symmetrize(w2.transpose() * dy2 * w2);

      if (params.cfg.rbn_per_layer) {
        const Matrix& bh1 = cache.rbn1.bias_sqrt;
        const Matrix& c1 =
            cache.rbn1.centered[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)];
        d_bias1_sqrt_acc += dz1 * bh1 * c1 + c1 * bh1 * dz1;
        const Matrix dc1 = bh1 * dz1 * bh1;
        const Matrix& gm1 = cache.rbn1.center_invsqrt[static_cast<std::size_t>(i)];
        dz1 = gm1 * dc1 * gm1;
      }

      // ReEig of layer 1.
      const Matrix dy1 = spectral_backward(
          cache.y1_eig[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)], dz1,
          SpectralFn::Clip, params.cfg.reeig_eps);

      // Congruence Y1 = W1 M1 W1^T; the aggregation below has no trainable
      // parameters, so the chain stops here.
      const Matrix& m1 = cache.m1[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)];
      const Matrix& w1 = params.w1[static_cast<std::size_t>(i)];
      g.w1[static_cast<std::size_t>(i)] += (dy1 + dy1.transpose()) * w1 * m1;
    }
  }

  // Chain through the matrix square root of the bias parameters.
  g.rbn_bias = spectral_backward(cache.rbn.bias_eig, symmetrize(d_bias_sqrt_acc), SpectralFn::Sqrt);
  if (params.cfg.rbn_per_layer)
    g.rbn1_bias =
        spectral_backward(cache.rbn1.bias_eig, symmetrize(d_bias1_sqrt_acc), SpectralFn::Sqrt);
  return g;
}

}  // namespace spdgcn
