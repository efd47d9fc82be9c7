#include "spdgcn/csp.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace spdgcn {

std::pair<Matrix, Matrix> class_means(const std::vector<Matrix>& covariances,
                                      const std::vector<int>& labels) {
  if (covariances.size() != labels.size() || covariances.empty())
    throw std::invalid_argument("class_means: covariance/label mismatch");
  Matrix sp = Matrix::Zero(covariances[0].rows(), covariances[0].cols());
  Matrix sm = sp;
  int np = 0, nm = 0;
  for (std::size_t i = 0; i < covariances.size(); ++i) {
    if (labels[i] == 0) {
      sp += covariances[i];
      ++np;
    } else if (labels[i] == 1) {
      sm += covariances[i];
      ++nm;
    } else {
      throw std::invalid_argument("class_means: labels must be 0 or 1");
    }
  }
  if (np == 0 || nm == 0) throw std::invalid_argument("class_means: a class is empty");
  return {symmetrize(sp / np), symmetrize(sm / nm)};
}

CspModel csp_filters(const Matrix& s_plus, const Matrix& s_minus, int m) {
  require_spd(s_plus, "csp_filters(S+)");
  require_spd(s_minus, "csp_filters(S-)");
  const int n_c = static_cast<int>(s_plus.rows());
  if (m < 1 || m > n_c || m % 2 != 0) {
    std::ostringstream os;
    os << "csp_filters: m = " << m << " must be even and within [2, " << n_c << "]";
    throw std::invalid_argument(os.str());
  }

  const Matrix white = spd_invsqrt(symmetrize(s_plus + s_minus));
  const EigenPair ep = sym_eig(symmetrize(white * s_plus * white));

  CspModel model;
  model.s_plus = s_plus;
  model.s_minus = s_minus;
  model.lambdas_full = ep.values;
  model.filters_full = ep.vectors.transpose() * white;  // rows are filters
  for (Eigen::Index i = 0; i < ep.values.size(); ++i)
    if (ep.values(i) <= 0.0 || ep.values(i) >= 1.0)
      throw std::runtime_error("csp_filters: eigenvalue escaped (0,1)");

  model.filters = Matrix(m, n_c);
  model.lambdas = Vector(m);
  for (int k = 0; k < m / 2; ++k) {
    model.filters.row(2 * k) = model.filters_full.row(k);             // top
    model.filters.row(2 * k + 1) = model.filters_full.row(n_c - 1 - k);  // bottom
    model.lambdas(2 * k) = model.lambdas_full(k);
    model.lambdas(2 * k + 1) = model.lambdas_full(n_c - 1 - k);
  }
  return model;
}

Vector log_var_features(const Matrix& covariance, const Matrix& filters) {
  if (filters.cols() != covariance.rows())
    throw std::invalid_argument("log_var_features: filter/covariance shape mismatch");
  Vector out(filters.rows());
  for (int j = 0; j < filters.rows(); ++j) {
    const double var = filters.row(j) * covariance * filters.row(j).transpose();
    if (var <= 0.0) {
      std::ostringstream os;
      os << "log_var_features: nonpositive projected variance " << var << " for filter " << j;
      throw std::invalid_argument(os.str());
    }
    out(j) = std::log(var);
  }
  return out;
}

FitResult logistic_fit_predict(const Matrix& train_features, const std::vector<int>& train_labels,
                               const Matrix& test_features, const std::vector<int>& test_labels) {
  if (train_features.rows() != static_cast<int>(train_labels.size()) ||
      test_features.rows() != static_cast<int>(test_labels.size()))
    throw std::invalid_argument("logistic_fit_predict: label count mismatch");
  const int d = static_cast<int>(train_features.cols());
  const int n = static_cast<int>(train_features.rows());
  int per_class[2] = {0, 0};
  for (int y : train_labels) {
    if (y != 0 && y != 1) throw std::invalid_argument("logistic_fit_predict: labels must be 0/1");
    per_class[y]++;
  }
  if (per_class[0] < 2 || per_class[1] < 2)
    throw std::invalid_argument("logistic_fit_predict: need at least 2 trials per class");

  constexpr int kIters = 1000;
  constexpr double kLr = 0.1;
  constexpr double kL2 = 1e-4;
  Vector beta = Vector::Zero(d);
  double beta0 = 0.0;
  for (int it = 0; it < kIters; ++it) {
    Vector gbeta = kL2 * beta;
    double g0 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double z = train_features.row(i).dot(beta) + beta0;
      const double p = 1.0 / (1.0 + std::exp(-z));
      const double err = p - static_cast<double>(train_labels[static_cast<std::size_t>(i)]);
      gbeta += (err / n) * train_features.row(i).transpose();
      g0 += err / n;
    }
    beta -= kLr * gbeta;
    beta0 -= kLr * g0;
  }

  FitResult res;
  res.model.beta = beta;
  res.model.beta0 = beta0;
  int correct = 0;
  res.predictions.reserve(static_cast<std::size_t>(test_features.rows()));
  for (int i = 0; i < test_features.rows(); ++i) {
    const double z = test_features.row(i).dot(beta) + beta0;
    const int pred = z > 0.0 ? 1 : 0;
    res.predictions.push_back(pred);
    if (pred == test_labels[static_cast<std::size_t>(i)]) ++correct;
  }
  res.accuracy = test_features.rows() > 0
                     ? static_cast<double>(correct) / static_cast<double>(test_features.rows())
                     : 0.0;
  return res;
}

}  // namespace spdgcn
