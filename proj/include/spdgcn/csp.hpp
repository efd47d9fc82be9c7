// Classical common-spatial-patterns pipeline: class-mean covariances,
// filters from the whitened generalized eigenproblem, log-variance features
// and a logistic-regression head. The filter spectrum doubles as the
// analytic link between the eigenvalue route and the Riemannian distance.

#pragma once

#include <cstdint>
#include <vector>

#include "spdgcn/spd.hpp"

namespace spdgcn {

struct CspModel {
  Matrix filters_full;  // n_C x n_C, rows simultaneously diagonalize both classes
  Vector lambdas_full;  // eigenvalues of (S+ + S-)^{-1} S+, descending, in (0,1)
  Matrix filters;       // m x n_C, taken from both spectral ends
  Vector lambdas;       // eigenvalues of the selected filters
  Matrix s_plus, s_minus;
};

/// Arithmetic class means of a two-class covariance set (labels 0 and 1 map
/// to S+ and S-).
std::pair<Matrix, Matrix> class_means(const std::vector<Matrix>& covariances,
                                      const std::vector<int>& labels);

/// Solves (S+ + S-)^{-1} S+ w = lambda w by whitening, keeping m/2 filters
/// from each end of the spectrum. m must be even and in [2, n_C].
CspModel csp_filters(const Matrix& s_plus, const Matrix& s_minus, int m);

/// z_j = log(w_j S w_j^T) per selected filter.
Vector log_var_features(const Matrix& covariance, const Matrix& filters);

struct LogisticModel {
  Vector beta;
  double beta0 = 0.0;
};

struct FitResult {
  LogisticModel model;
  std::vector<int> predictions;  // on the evaluation set
  double accuracy = 0.0;
};

/// Binary logistic regression by gradient descent (1000 iterations,
/// learning rate 0.1, L2 weight 1e-4), then evaluation on the test set.
FitResult logistic_fit_predict(const Matrix& train_features, const std::vector<int>& train_labels,
                               const Matrix& test_features, const std::vector<int>& test_labels);

}  // namespace spdgcn
