#include "spdgcn/optim.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace spdgcn {

namespace {

bool wide(const Matrix& w) { return w.rows() < w.cols(); }

void require_finite(const Matrix& m, const char* name) {
  if (!m.allFinite()) {
    std::ostringstream os;
    os << "optimizer: non-finite gradient for parameter " << name;
    throw std::runtime_error(os.str());
  }
}

Matrix thin_qr_orthonormal(const Matrix& a) {
  Eigen::HouseholderQR<Matrix> qr(a);
  const int cols = static_cast<int>(a.cols());
  Matrix q = qr.householderQ() * Matrix::Identity(a.rows(), cols);
  const Matrix r = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
  for (int j = 0; j < cols; ++j) {
    if (std::abs(r(j, j)) < 1e-12)
      throw std::runtime_error("stiefel_retract: rank collapse in QR retraction");
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  return q;
}

}  // namespace

Matrix stiefel_project(const Matrix& w, const Matrix& g) {
  if (w.rows() != g.rows() || w.cols() != g.cols())
    throw std::invalid_argument("stiefel_project: shape mismatch");
  if (wide(w)) {
    // Orthonormal rows: work on the transpose.
    const Matrix wt = w.transpose();
    const Matrix gt = g.transpose();
    return (gt - wt * symmetrize(wt.transpose() * gt)).transpose();
  }
  return g - w * symmetrize(w.transpose() * g);
}

Matrix stiefel_retract(const Matrix& w, const Matrix& xi) {
  if (w.rows() != xi.rows() || w.cols() != xi.cols())
    throw std::invalid_argument("stiefel_retract: shape mismatch");
  if (xi.cwiseAbs().maxCoeff() == 0.0) return w;
  if (wide(w)) return thin_qr_orthonormal((w + xi).transpose()).transpose();
  return thin_qr_orthonormal(w + xi);
}

Matrix vector_transport(const Matrix& w_new, const Matrix& m) {
  return stiefel_project(w_new, m);
}

Matrix spd_bias_step(const Matrix& b, const Matrix& g_euclidean, double lr) {
  const Matrix g = symmetrize(g_euclidean);
  if (g.cwiseAbs().maxCoeff() == 0.0) return b;
  const Matrix bh = spd_sqrt(b);
  // B^{-1/2} (B sym(G) B) B^{-1/2} collapses to B^{1/2} sym(G) B^{1/2}.
  const Matrix inner = symmetrize(bh * g * bh);
  return symmetrize(bh * spd_exp(-lr * inner) * bh);
}

void adam_stiefel_update(Matrix& w, const Matrix& grad, Matrix& m, double& v, long t,
                         const AdamHyper& hp) {
  const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(t));
  const Matrix xi = stiefel_project(w, grad);
  m = hp.beta1 * vector_transport(w, m) + (1.0 - hp.beta1) * xi;
  v = hp.beta2 * v + (1.0 - hp.beta2) * xi.squaredNorm();
  const Matrix m_hat = m / bc1;
  const double v_hat = v / bc2;
  w = stiefel_retract(w, -(hp.lr / (std::sqrt(v_hat) + hp.eps)) * m_hat);
}

void adam_spd_update(Matrix& b, const Matrix& grad, Matrix& m, double& v, long t,
                     const AdamHyper& hp) {
  const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(t));
  const Matrix g = symmetrize(grad);
  m = hp.beta1 * m + (1.0 - hp.beta1) * g;
  // Second moment from the Riemannian gradient norm at B.
  const Matrix bh = spd_sqrt(b);
  v = hp.beta2 * v + (1.0 - hp.beta2) * (bh * g * bh).squaredNorm();
  const double v_hat = v / bc2;
  b = spd_bias_step(b, m / bc1, hp.lr / (std::sqrt(v_hat) + hp.eps));
}

RiemannianAdam::RiemannianAdam(const ModelParams& params, AdamHyper hp) : hp_(hp) {
  auto zeros_like = [](const std::vector<Matrix>& ws) {
    std::vector<Matrix> ms;
    ms.reserve(ws.size());
    for (const Matrix& w : ws) ms.push_back(Matrix::Zero(w.rows(), w.cols()));
    return ms;
  };
  m_w1_ = zeros_like(params.w1);
  m_w2_ = zeros_like(params.w2);
  v_w1_.assign(params.w1.size(), 0.0);
  v_w2_.assign(params.w2.size(), 0.0);
  m_bias_ = Matrix::Zero(params.rbn.bias.rows(), params.rbn.bias.cols());
  if (params.cfg.rbn_per_layer)
    m_bias1_ = Matrix::Zero(params.rbn1.bias.rows(), params.rbn1.bias.cols());
  m_head_ = Matrix::Zero(params.head.rows(), params.head.cols());
  v_head_ = Matrix::Zero(params.head.rows(), params.head.cols());
}

void RiemannianAdam::step(ModelParams& params, const Gradients& grads) {
  if (grads.w1.size() != params.w1.size() || grads.w2.size() != params.w2.size())
    throw std::invalid_argument("RiemannianAdam::step: gradient layout mismatch");
  ++t_;
  const double bc1 = 1.0 - std::pow(hp_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(hp_.beta2, static_cast<double>(t_));

  auto stiefel_stack = [&](std::vector<Matrix>& ws, const std::vector<Matrix>& gs,
                           std::vector<Matrix>& ms, std::vector<double>& vs, const char* name) {
    for (std::size_t i = 0; i < ws.size(); ++i) {
      std::ostringstream label;
      label << name << "[" << i << "]";
      require_finite(gs[i], label.str().c_str());
      adam_stiefel_update(ws[i], gs[i], ms[i], vs[i], t_, hp_);
    }
  };
  stiefel_stack(params.w1, grads.w1, m_w1_, v_w1_, "w1");
  stiefel_stack(params.w2, grads.w2, m_w2_, v_w2_, "w2");

  require_finite(grads.rbn_bias, "rbn_bias");
  adam_spd_update(params.rbn.bias, grads.rbn_bias, m_bias_, v_bias_, t_, hp_);
  if (params.cfg.rbn_per_layer) {
    require_finite(grads.rbn1_bias, "rbn1_bias");
    adam_spd_update(params.rbn1.bias, grads.rbn1_bias, m_bias1_, v_bias1_, t_, hp_);
  }

  require_finite(grads.head, "head");
  m_head_ = hp_.beta1 * m_head_ + (1.0 - hp_.beta1) * grads.head;
  v_head_ = hp_.beta2 * v_head_.array().matrix() +
            (1.0 - hp_.beta2) * grads.head.cwiseProduct(grads.head);
  const Matrix m_hat = m_head_ / bc1;
  const Matrix v_hat = v_head_ / bc2;
  params.head -=
      hp_.lr * m_hat.cwiseQuotient((v_hat.cwiseSqrt().array() + hp_.eps).matrix());
}

}  // namespace spdgcn
