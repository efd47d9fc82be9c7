#include "spdgcn/spd.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace spdgcn {

namespace {

void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    std::ostringstream os;
    os << what << ": expected a square matrix, got " << m.rows() << "x" << m.cols();
    throw std::invalid_argument(os.str());
  }
}

void require_same_dim(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    std::ostringstream os;
    os << what << ": dimension mismatch (" << a.rows() << "x" << a.cols() << " vs " << b.rows()
       << "x" << b.cols() << ")";
    throw std::invalid_argument(os.str());
  }
}

Matrix reconstruct(const EigenPair& ep, const Vector& mapped) {
  return (ep.vectors * mapped.asDiagonal() * ep.vectors.transpose()).eval();
}

}  // namespace

Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

double max_asymmetry(const Matrix& m) {
  return (m - m.transpose()).cwiseAbs().maxCoeff();
}

void require_symmetric(const Matrix& m, const char* what) {
  require_square(m, what);
  const double scale = m.cwiseAbs().maxCoeff();
  const double asym = max_asymmetry(m);
  if (asym > 1e-10 * std::max(scale, 1e-300)) {
    std::ostringstream os;
    os << what << ": matrix is not symmetric (max asymmetry " << asym << ", max entry " << scale
       << ")";
    throw std::invalid_argument(os.str());
  }
}

bool is_spd(const Matrix& m, double* min_eigenvalue) {
  if (m.rows() != m.cols() || m.rows() == 0) return false;
  const double scale = m.cwiseAbs().maxCoeff();
  if (max_asymmetry(m) > 1e-10 * std::max(scale, 1e-300)) return false;
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m), Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  if (min_eigenvalue) *min_eigenvalue = lo;
  return lo > 0.0;
}

void require_spd(const Matrix& m, const char* what) {
  double lo = 0.0;
  if (!is_spd(m, &lo)) {
    std::ostringstream os;
    os << what << ": matrix is not symmetric positive-definite (smallest eigenvalue " << lo << ")";
    throw std::invalid_argument(os.str());
  }
}

EigenPair sym_eig(const Matrix& s) {
  require_symmetric(s, "sym_eig");
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(s));
  if (es.info() != Eigen::Success) throw std::runtime_error("sym_eig: eigendecomposition failed");

  const Eigen::Index n = s.rows();
  EigenPair out;
  out.values = Vector(n);
  out.vectors = Matrix(n, n);
  // Eigen returns ascending order; flip to descending and fix signs so the
  // largest-magnitude component of each eigenvector is positive.
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index src = n - 1 - k;
    out.values(k) = es.eigenvalues()(src);
    Vector v = es.eigenvectors().col(src);
    Eigen::Index imax = 0;
    v.cwiseAbs().maxCoeff(&imax);
    if (v(imax) < 0.0) v = -v;
    out.vectors.col(k) = v;
  }
  return out;
}

Matrix spd_function(const Matrix& s, SpectralFn fn, double clip_eps) {
  EigenPair ep = sym_eig(s);
  const Eigen::Index n = ep.values.size();
  Vector mapped(n);
  const bool needs_positive =
      fn == SpectralFn::Log || fn == SpectralFn::Sqrt || fn == SpectralFn::InvSqrt;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double lam = ep.values(i);
    if (needs_positive && lam <= 0.0) {
      std::ostringstream os;
      os << "spd_function: eigenvalue " << lam << " (index " << i
         << ") is outside the domain of the requested matrix function";
      throw std::domain_error(os.str());
    }
    switch (fn) {
      case SpectralFn::Log: mapped(i) = std::log(lam); break;
      case SpectralFn::Exp: mapped(i) = std::exp(lam); break;
      case SpectralFn::Sqrt: mapped(i) = std::sqrt(lam); break;
      case SpectralFn::InvSqrt: mapped(i) = 1.0 / std::sqrt(lam); break;
      case SpectralFn::Clip: mapped(i) = std::max(lam, clip_eps); break;
    }
  }
  return symmetrize(reconstruct(ep, mapped));
}

Matrix spd_log(const Matrix& s) { return spd_function(s, SpectralFn::Log); }
Matrix spd_exp(const Matrix& s) { return spd_function(s, SpectralFn::Exp); }
Matrix spd_sqrt(const Matrix& s) { return spd_function(s, SpectralFn::Sqrt); }
Matrix spd_invsqrt(const Matrix& s) { return spd_function(s, SpectralFn::InvSqrt); }
Matrix eig_clip(const Matrix& s, double eps) { return spd_function(s, SpectralFn::Clip, eps); }

double airm_distance(const Matrix& s1, const Matrix& s2) {
  require_same_dim(s1, s2, "airm_distance");
  require_symmetric(s2, "airm_distance");
  const Matrix w = spd_invsqrt(s1);  // rejects non-SPD s1
  EigenPair ep = sym_eig(symmetrize(w * s2 * w));
  double acc = 0.0;
  for (Eigen::Index i = 0; i < ep.values.size(); ++i) {
    const double lam = ep.values(i);
    if (lam <= 0.0) {
      std::ostringstream os;
      os << "airm_distance: second argument is not positive-definite (whitened eigenvalue " << lam
         << ")";
      throw std::invalid_argument(os.str());
    }
    const double l = std::log(lam);
    acc += l * l;
  }
  return std::sqrt(acc);
}

double csp_spectrum_distance(const Matrix& splus, const Matrix& sminus) {
  require_same_dim(splus, sminus, "csp_spectrum_distance");
  require_spd(splus, "csp_spectrum_distance(S+)");
  require_spd(sminus, "csp_spectrum_distance(S-)");
  const Matrix w = spd_invsqrt(symmetrize(splus + sminus));
  EigenPair ep = sym_eig(symmetrize(w * splus * w));
  double acc = 0.0;
  for (Eigen::Index i = 0; i < ep.values.size(); ++i) {
    const double lam = ep.values(i);
    if (lam <= 0.0 || lam >= 1.0) {
      std::ostringstream os;
      os << "csp_spectrum_distance: eigenvalue " << lam
         << " escaped (0,1); numerical breakdown on SPD inputs";
      throw std::runtime_error(os.str());
    }
    const double l = std::log(lam / (1.0 - lam));
    acc += l * l;
  }
  return std::sqrt(acc);
}

Matrix geodesic(const Matrix& s1, const Matrix& s2, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) {
    std::ostringstream os;
    os << "geodesic: tau = " << tau << " is outside [0, 1]";
    throw std::invalid_argument(os.str());
  }
  require_same_dim(s1, s2, "geodesic");
  EigenPair e1 = sym_eig(s1);
  const Eigen::Index n = e1.values.size();
  Vector sqrt_l(n), invsqrt_l(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (e1.values(i) <= 0.0) throw std::invalid_argument("geodesic: first endpoint is not SPD");
    sqrt_l(i) = std::sqrt(e1.values(i));
    invsqrt_l(i) = 1.0 / sqrt_l(i);
  }
  const Matrix rt = reconstruct(e1, sqrt_l);
  const Matrix irt = reconstruct(e1, invsqrt_l);
  EigenPair em = sym_eig(symmetrize(irt * s2 * irt));
  Vector powered(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (em.values(i) <= 0.0) throw std::invalid_argument("geodesic: second endpoint is not SPD");
    powered(i) = std::pow(em.values(i), tau);
  }
  return symmetrize(rt * reconstruct(em, powered) * rt);
}

Matrix frechet_mean(const std::vector<Matrix>& points, const std::vector<double>& weights) {
  if (points.empty()) throw std::invalid_argument("frechet_mean: no points");
  const Eigen::Index n = points.front().rows();
  for (const Matrix& p : points) require_same_dim(points.front(), p, "frechet_mean");

  std::vector<double> w = weights;
  if (w.empty()) w.assign(points.size(), 1.0 / static_cast<double>(points.size()));
  if (w.size() != points.size())
    throw std::invalid_argument("frechet_mean: weight count does not match point count");
  double wsum = 0.0;
  for (double wi : w) {
    if (wi < 0.0) throw std::invalid_argument("frechet_mean: negative weight");
    wsum += wi;
  }
  if (std::abs(wsum - 1.0) > 1e-9)
    throw std::invalid_argument("frechet_mean: weights must sum to 1");

  if (points.size() == 1) return symmetrize(points.front());

  Matrix g = Matrix::Zero(n, n);
  for (std::size_t i = 0; i < points.size(); ++i) g += w[i] * points[i];
  g = symmetrize(g);

  constexpr int kMaxIter = 200;
  constexpr double kTol = 1e-9;
  // Badly conditioned inputs (eigenvalues rectified to a tiny floor) can
  // leave the unit-step iteration oscillating or pinned at the rounding
  // floor slightly above kTol. Damping restores contraction; a stalled
  // residual below kFloorTol is accepted as converged.
  constexpr double kFloorTol = 1e-6;
  double residual = 0.0;
  double prev_residual = std::numeric_limits<double>::infinity();
  double damping = 1.0;
  for (int iter = 0; iter < kMaxIter; ++iter) {
    EigenPair eg = sym_eig(g);
    Vector sqrt_l(n), invsqrt_l(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (eg.values(i) <= 0.0) throw std::runtime_error("frechet_mean: iterate left the SPD cone");
      sqrt_l(i) = std::sqrt(eg.values(i));
      invsqrt_l(i) = 1.0 / sqrt_l(i);
    }
    const Matrix rt = reconstruct(eg, sqrt_l);
    const Matrix irt = reconstruct(eg, invsqrt_l);

    Matrix tangent = Matrix::Zero(n, n);
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (w[i] == 0.0) continue;
      tangent += w[i] * spd_log(symmetrize(irt * points[i] * irt));
    }
    tangent = symmetrize(tangent);
    residual = tangent.norm();
    if (residual < kTol) return symmetrize(g);
    if (residual >= prev_residual) {
      damping *= 0.5;
      if (damping < 1.0 / 32.0) {
        if (residual < kFloorTol) return symmetrize(g);
        break;
      }
    }
    prev_residual = residual;
    g = symmetrize(rt * spd_exp(damping * tangent) * rt);
  }
  if (residual < kFloorTol) return symmetrize(g);
  std::ostringstream os;
  os << "frechet_mean: no convergence after " << kMaxIter << " iterations (last residual "
     << residual << ")";
  throw std::runtime_error(os.str());
}

Matrix congruence(const Matrix& w, const Matrix& s) {
  require_square(s, "congruence");
  if (w.cols() != s.rows()) {
    std::ostringstream os;
    os << "congruence: W has " << w.cols() << " columns but S is " << s.rows() << "x" << s.cols();
    throw std::invalid_argument(os.str());
  }
  return symmetrize(w * s * w.transpose());
}

}  // namespace spdgcn
