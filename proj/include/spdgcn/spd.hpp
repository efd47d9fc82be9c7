// Core geometry of symmetric positive-definite matrices under the
// affine-invariant Riemannian metric: eigendecomposition with a fixed sign
// convention, spectral matrix functions, distances, geodesics and Karcher
// barycenters. Everything here is a pure function over immutable inputs and
// safe to call concurrently.

#pragma once

#include <Eigen/Dense>
#include <vector>

namespace spdgcn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Eigendecomposition of a symmetric matrix. Eigenvalues are descending and
/// each eigenvector's largest-magnitude component is positive, so repeated
/// runs produce identical factors.
struct EigenPair {
  Vector values;   // descending
  Matrix vectors;  // orthonormal columns
};

/// (M + M^T) / 2. Applied to every matrix result before it leaves this
/// module so floating-point drift cannot compound through deep layers.
Matrix symmetrize(const Matrix& m);

/// max_ij |m(i,j) - m(j,i)|
double max_asymmetry(const Matrix& m);

/// Throws std::invalid_argument (reporting the max asymmetry) unless
/// max_asymmetry(m) <= 1e-10 * max|m|.
void require_symmetric(const Matrix& m, const char* what);

/// True when m is symmetric within tolerance and its smallest eigenvalue is
/// strictly positive. Optionally reports that eigenvalue.
bool is_spd(const Matrix& m, double* min_eigenvalue = nullptr);

/// Throws std::invalid_argument unless is_spd(m).
void require_spd(const Matrix& m, const char* what);

/// Symmetric eigendecomposition with descending values and the sign
/// convention above. Rejects non-symmetric input.
EigenPair sym_eig(const Matrix& s);

/// Scalar functions lifted to symmetric matrices through the spectrum.
enum class SpectralFn { Log, Exp, Sqrt, InvSqrt, Clip };

/// U f(Lambda) U^T with f applied elementwise to the eigenvalues.
/// Log/Sqrt/InvSqrt require a strictly positive spectrum and throw
/// std::domain_error naming the offending eigenvalue otherwise; Exp and
/// Clip accept any symmetric input. `clip_eps` is the floor for Clip.
Matrix spd_function(const Matrix& s, SpectralFn fn, double clip_eps = 0.0);

Matrix spd_log(const Matrix& s);
Matrix spd_exp(const Matrix& s);
Matrix spd_sqrt(const Matrix& s);
Matrix spd_invsqrt(const Matrix& s);

/// U max(eps*I, Lambda) U^T — the eigenvalue rectification used by ReEig.
Matrix eig_clip(const Matrix& s, double eps);

/// ||log(S1^{-1/2} S2 S1^{-1/2})||_F. Symmetric in its arguments, zero iff
/// S1 == S2, and invariant under congruence by any invertible matrix.
double airm_distance(const Matrix& s1, const Matrix& s2);

/// sqrt(sum_i log^2(lambda_i / (1 - lambda_i))) over the eigenvalues
/// lambda_i of (S+ + S-)^{-1} S+. Equals airm_distance(S+, S-); the two
/// routes are kept independent so one can check the other.
double csp_spectrum_distance(const Matrix& splus, const Matrix& sminus);

/// S1^{1/2} (S1^{-1/2} S2 S1^{-1/2})^tau S1^{1/2} for tau in [0, 1].
Matrix geodesic(const Matrix& s1, const Matrix& s2, double tau);

/// Weighted Karcher barycenter by fixed-point iteration, initialized at the
/// weighted arithmetic mean. Converged when the tangent-mean Frobenius norm
/// drops below 1e-9; throws (carrying the last residual) after 200
/// iterations. Ill-conditioned spreads contract slowly, so the cap leaves
/// headroom over the typical ten-iteration convergence. Weights default to uniform and must sum to 1.
Matrix frechet_mean(const std::vector<Matrix>& points,
                    const std::vector<double>& weights = {});

/// W S W^T. SPD when W has full row rank; PSD of rank o_in when the output
/// dimension exceeds the input dimension.
Matrix congruence(const Matrix& w, const Matrix& s);

}  // namespace spdgcn
