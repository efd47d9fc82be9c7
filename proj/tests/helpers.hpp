// Shared test utilities: seeded random matrices and the spectral band-power
// oracle used by the signal tests.

#pragma once

#include <unsupported/Eigen/FFT>

#include <complex>
#include <random>
#include <vector>

#include "spdgcn/rng.hpp"
#include "spdgcn/spd.hpp"

namespace testutil {

using spdgcn::Matrix;
using spdgcn::Vector;

inline Matrix random_gaussian(int rows, int cols, std::mt19937_64& rng) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = spdgcn::standard_normal(rng);
  return m;
}

inline Matrix random_orthogonal(int n, std::mt19937_64& rng) {
  const Matrix g = random_gaussian(n, n, rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < n; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

/// SPD with eigenvalues uniform in [lo, hi].
inline Matrix random_spd(int n, std::mt19937_64& rng, double lo = 0.3, double hi = 3.0) {
  const Matrix q = random_orthogonal(n, rng);
  Vector vals(n);
  for (int i = 0; i < n; ++i) vals(i) = lo + (hi - lo) * spdgcn::uniform01(rng);
  return spdgcn::symmetrize(q * vals.asDiagonal() * q.transpose());
}

/// Symmetric with at least one negative eigenvalue.
inline Matrix random_indefinite(int n, std::mt19937_64& rng) {
  const Matrix q = random_orthogonal(n, rng);
  Vector vals(n);
  for (int i = 0; i < n; ++i) vals(i) = -2.0 + 4.0 * spdgcn::uniform01(rng);
  vals(n - 1) = -std::abs(vals(n - 1)) - 0.1;
  return spdgcn::symmetrize(q * vals.asDiagonal() * q.transpose());
}

inline Matrix random_invertible(int n, std::mt19937_64& rng) {
  for (;;) {
    const Matrix a = random_gaussian(n, n, rng);
    if (std::abs(a.determinant()) > 1e-3) return a;
  }
}

/// Periodogram band power of one channel: the variance contribution of the
/// frequency bins inside [lo, hi]. Independent of the filtering path.
inline double periodogram_band_power(const Eigen::RowVectorXd& x, double lo, double hi,
                                     double fs) {
  const int n = static_cast<int>(x.size());
  std::vector<double> v(x.data(), x.data() + n);
  const double mean = x.mean();
  for (double& s : v) s -= mean;
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> cin(v.begin(), v.end());
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, cin);
  double power = 0.0;
  for (int k = 0; k < n; ++k) {
    const double f = fs * static_cast<double>(std::min(k, n - k)) / static_cast<double>(n);
    if (f >= lo && f <= hi) power += std::norm(spec[static_cast<std::size_t>(k)]);
  }
  return power / (static_cast<double>(n) * static_cast<double>(n));
}

}  // namespace testutil
