// First-order Riemannian optimization: tangent projection, QR retraction
// and projection-based vector transport on Stiefel parameters, exponential
// -map updates for the SPD bias, and an Adam driver with per-parameter
// scalar second moments.

#pragma once

#include "spdgcn/network.hpp"
#include "spdgcn/spd.hpp"

namespace spdgcn {

/// Projects a Euclidean gradient onto the tangent space at W:
/// xi = G - W sym(W^T G) for orthonormal columns (applied through the
/// transpose for orthonormal rows).
Matrix stiefel_project(const Matrix& w, const Matrix& g);

/// QR-based retraction of W + xi with the positive-diagonal sign fix.
/// Throws on rank collapse. retract(W, 0) returns W itself.
Matrix stiefel_retract(const Matrix& w, const Matrix& xi);

/// Projection-based transport of a stored moment to the tangent space at
/// the new iterate.
Matrix vector_transport(const Matrix& w_new, const Matrix& m);

/// Exponential-map update of an SPD point from a Euclidean gradient:
/// grad_R = B sym(G) B and B' = B^{1/2} exp(-lr B^{1/2} sym(G) B^{1/2}) B^{1/2}.
/// The result is SPD for any step size.
Matrix spd_bias_step(const Matrix& b, const Matrix& g_euclidean, double lr);

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One Adam update of a single Stiefel point: project the gradient,
/// transport and blend the first moment, accumulate the squared tangent
/// norm as the scalar second moment, bias-correct with step index t
/// (1-based) and retract. The moment stays tangent to the new iterate.
void adam_stiefel_update(Matrix& w, const Matrix& grad, Matrix& m, double& v, long t,
                         const AdamHyper& hp);

/// One Adam update of a single SPD point via spd_bias_step.
void adam_spd_update(Matrix& b, const Matrix& grad, Matrix& m, double& v, long t,
                     const AdamHyper& hp);

/// Adam adapted to the parameter manifolds: Stiefel stacks use projected
/// gradients, transported first moments, scalar second moments from squared
/// tangent norms and QR retraction; the SPD bias steps through the
/// exponential map; the Euclidean head uses standard elementwise Adam.
class RiemannianAdam {
 public:
  RiemannianAdam(const ModelParams& params, AdamHyper hp);

  /// One update. Throws on non-finite gradients, naming the parameter.
  void step(ModelParams& params, const Gradients& grads);

  long step_count() const { return t_; }

 private:
  AdamHyper hp_;
  long t_ = 0;
  std::vector<Matrix> m_w1_, m_w2_;
  std::vector<double> v_w1_, v_w2_;
  Matrix m_bias_;
  double v_bias_ = 0.0;
  Matrix m_bias1_;
  double v_bias1_ = 0.0;
  Matrix m_head_, v_head_;
};

}  // namespace spdgcn
