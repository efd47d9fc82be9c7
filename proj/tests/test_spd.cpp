#include "spdgcn/spd.hpp"

#include <cmath>
#include <random>

#include "doctest.h"
#include "helpers.hpp"

using namespace spdgcn;
using testutil::random_gaussian;
using testutil::random_indefinite;
using testutil::random_invertible;
using testutil::random_orthogonal;
using testutil::random_spd;

namespace {

Matrix diag3(double a, double b, double c) {
  Matrix m = Matrix::Zero(3, 3);
  m(0, 0) = a;
  m(1, 1) = b;
  m(2, 2) = c;
  return m;
}

}  // namespace

TEST_CASE("sym_eig diagonal and identity cases") {
  const EigenPair ep = sym_eig(diag3(1.0, 2.0, 3.0));
  CHECK(ep.values(0) == doctest::Approx(3.0));
  CHECK(ep.values(1) == doctest::Approx(2.0));
  CHECK(ep.values(2) == doctest::Approx(1.0));
  // Eigenvectors are a permuted identity with positive entries.
  for (int k = 0; k < 3; ++k) {
    Eigen::Index imax = 0;
    ep.vectors.col(k).cwiseAbs().maxCoeff(&imax);
    CHECK(ep.vectors.col(k)(imax) == doctest::Approx(1.0));
    CHECK(imax == 2 - k);
  }

  const EigenPair id = sym_eig(Matrix::Identity(4, 4));
  for (int k = 0; k < 4; ++k) CHECK(id.values(k) == doctest::Approx(1.0));
}

TEST_CASE("sym_eig recovers a planted spectrum") {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    const int n = 8;
    const Matrix q = random_orthogonal(n, rng);
    Vector vals(n);
    for (int i = 0; i < n; ++i) vals(i) = 0.1 + 5.0 * uniform01(rng);
    std::sort(vals.data(), vals.data() + n, std::greater<double>());
    const Matrix s = symmetrize(q * vals.asDiagonal() * q.transpose());
    const EigenPair ep = sym_eig(s);
    CHECK((ep.values - vals).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((ep.vectors * ep.values.asDiagonal() * ep.vectors.transpose() - s).norm() <
          1e-9 * s.norm());
    CHECK((ep.vectors.transpose() * ep.vectors - Matrix::Identity(n, n)).cwiseAbs().maxCoeff() <
          1e-10);
  }
}

TEST_CASE("sym_eig sign convention is deterministic") {
  std::mt19937_64 rng(5);
  const Matrix s = random_spd(6, rng);
  const EigenPair a = sym_eig(s);
  const EigenPair b = sym_eig(s);
  CHECK((a.vectors - b.vectors).cwiseAbs().maxCoeff() == 0.0);
  for (int k = 0; k < 6; ++k) {
    Eigen::Index imax = 0;
    a.vectors.col(k).cwiseAbs().maxCoeff(&imax);
    CHECK(a.vectors.col(k)(imax) > 0.0);
  }
}

TEST_CASE("sym_eig rejects non-symmetric input") {
  Matrix m = Matrix::Identity(3, 3);
  m(0, 1) = 1e-3;
  CHECK_THROWS_WITH_AS(sym_eig(m), doctest::Contains("not symmetric"), std::invalid_argument);
}

TEST_CASE("spd_function diagonal cases") {
  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = std::exp(1.0);
  d(1, 1) = std::exp(2.0);
  const Matrix lg = spd_log(d);
  CHECK(lg(0, 0) == doctest::Approx(1.0));
  CHECK(lg(1, 1) == doctest::Approx(2.0));
  CHECK(std::abs(lg(0, 1)) < 1e-12);

  Matrix neg = Matrix::Zero(2, 2);
  neg(0, 0) = 5.0;
  neg(1, 1) = -1.0;
  const Matrix clipped = eig_clip(neg, 1e-6);
  CHECK(clipped(0, 0) == doctest::Approx(5.0));
  CHECK(clipped(1, 1) == doctest::Approx(1e-6));
}

TEST_CASE("spd_function round trips") {
  std::mt19937_64 rng(17);
  for (int rep = 0; rep < 100; ++rep) {
    const Matrix s = random_spd(8, rng);
    const Matrix isq = spd_invsqrt(s);
    CHECK((isq * s * isq - Matrix::Identity(8, 8)).norm() < 1e-8);
    CHECK((spd_exp(spd_log(s)) - s).norm() < 1e-8 * s.norm());
    const Matrix rt = spd_sqrt(s);
    CHECK((rt * rt - s).norm() < 1e-8 * s.norm());
  }
}

TEST_CASE("spd_function domain errors name the eigenvalue") {
  Matrix neg = Matrix::Zero(2, 2);
  neg(0, 0) = 1.0;
  neg(1, 1) = -0.5;
  CHECK_THROWS_WITH_AS(spd_log(neg), doctest::Contains("-0.5"), std::domain_error);
  CHECK_THROWS_AS(spd_sqrt(neg), std::domain_error);
  CHECK_THROWS_AS(spd_invsqrt(neg), std::domain_error);
  CHECK_NOTHROW(spd_exp(neg));
}

TEST_CASE("spectral functions are equivariant on degenerate spectra") {
  // A degenerate eigenspace admits any orthonormal basis; exposed results
  // must depend on the matrix alone.
  std::mt19937_64 rng(23);
  Vector vals(4);
  vals << 2.0, 2.0, 2.0, 0.5;
  const Matrix u = random_orthogonal(4, rng);
  const Matrix s = symmetrize(u * vals.asDiagonal() * u.transpose());
  for (int rep = 0; rep < 2; ++rep) {
    const Matrix q = random_orthogonal(4, rng);
    const Matrix rotated = symmetrize(q * s * q.transpose());
    CHECK((spd_log(rotated) - q * spd_log(s) * q.transpose()).norm() < 1e-9);
    CHECK((spd_sqrt(rotated) - q * spd_sqrt(s) * q.transpose()).norm() < 1e-9);
  }
}

TEST_CASE("airm_distance analytic values") {
  std::mt19937_64 rng(3);
  const Matrix s = random_spd(5, rng);
  CHECK(airm_distance(s, s) == doctest::Approx(0.0).epsilon(1e-9));

  const Matrix i3 = Matrix::Identity(3, 3);
  const Matrix scaled = std::exp(2.0) * i3;
  CHECK(airm_distance(i3, scaled) == doctest::Approx(2.0 * std::sqrt(3.0)));
}

TEST_CASE("airm_distance matches the generalized-eigenvalue oracle") {
  std::mt19937_64 rng(29);
  for (int rep = 0; rep < 100; ++rep) {
    const Matrix a = random_spd(8, rng);
    const Matrix b = random_spd(8, rng);
    // Independent route: eigenvalues of the pencil (B, A).
    Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> ges(b, a);
    double acc = 0.0;
    for (int i = 0; i < 8; ++i) acc += std::pow(std::log(ges.eigenvalues()(i)), 2);
    const double oracle = std::sqrt(acc);
    const double d = airm_distance(a, b);
    CHECK(std::abs(d - oracle) < 1e-9 * std::max(1.0, oracle));
  }
}

TEST_CASE("airm_distance metric properties and affine invariance") {
  std::mt19937_64 rng(31);
  for (int rep = 0; rep < 100; ++rep) {
    const int n = 2 + static_cast<int>(rng() % 9);  // up to 10
    const Matrix a = random_spd(n, rng);
    const Matrix b = random_spd(n, rng);
    const Matrix c = random_spd(n, rng);
    const double dab = airm_distance(a, b);
    CHECK(std::abs(dab - airm_distance(b, a)) < 1e-8 * std::max(1.0, dab));
    CHECK(dab <= airm_distance(a, c) + airm_distance(c, b) + 1e-8);

    const Matrix w = random_invertible(n, rng);
    const double dcong = airm_distance(congruence(w, a), congruence(w, b));
    CHECK(std::abs(dcong - dab) < 1e-8 * std::max(1.0, dab));

    CHECK(std::abs(csp_spectrum_distance(a, b) - dab) < 1e-8 * std::max(1.0, dab));
  }
}

TEST_CASE("airm_distance input validation") {
  std::mt19937_64 rng(37);
  const Matrix a = random_spd(4, rng);
  const Matrix b = random_spd(5, rng);
  CHECK_THROWS_AS(airm_distance(a, b), std::invalid_argument);
  Matrix not_spd = Matrix::Identity(4, 4);
  not_spd(3, 3) = -1.0;
  CHECK_THROWS_AS(airm_distance(a, not_spd), std::invalid_argument);
  CHECK_THROWS_AS(airm_distance(not_spd, a), std::domain_error);
}

TEST_CASE("csp_spectrum_distance analytic cases") {
  Matrix sp = Matrix::Zero(2, 2), sm = Matrix::Zero(2, 2);
  sp(0, 0) = 2.0;
  sp(1, 1) = 1.0;
  sm(0, 0) = 1.0;
  sm(1, 1) = 2.0;
  const double expected = std::sqrt(2.0) * std::log(2.0);  // lambda = 2/3, 1/3
  CHECK(csp_spectrum_distance(sp, sm) == doctest::Approx(expected).epsilon(1e-10));

  std::mt19937_64 rng(41);
  const Matrix s = random_spd(6, rng);
  CHECK(csp_spectrum_distance(s, s) == doctest::Approx(0.0).epsilon(1e-9));

  const Matrix a = random_spd(10, rng);
  const Matrix b = random_spd(10, rng);
  const double direct = airm_distance(a, b);
  CHECK(std::abs(csp_spectrum_distance(a, b) - direct) < 1e-8 * std::max(1.0, direct));
}

TEST_CASE("geodesic endpoints, scalar case and distance proportionality") {
  const Matrix i2 = Matrix::Identity(2, 2);
  const Matrix four = 4.0 * i2;
  CHECK((geodesic(i2, four, 0.5) - 2.0 * i2).norm() < 1e-10);

  std::mt19937_64 rng(43);
  const Matrix a = random_spd(6, rng);
  const Matrix b = random_spd(6, rng);
  CHECK((geodesic(a, b, 0.0) - a).norm() < 1e-10 * a.norm());
  CHECK((geodesic(a, b, 1.0) - b).norm() < 1e-8 * b.norm());

  for (int rep = 0; rep < 20; ++rep) {
    const Matrix s1 = random_spd(6, rng);
    const Matrix s2 = random_spd(6, rng);
    const double d = airm_distance(s1, s2);
    CHECK(std::abs(airm_distance(s1, geodesic(s1, s2, 0.3)) - 0.3 * d) < 1e-8 * std::max(1.0, d));
  }

  CHECK_THROWS_AS(geodesic(a, b, -0.1), std::invalid_argument);
  CHECK_THROWS_AS(geodesic(a, b, 1.1), std::invalid_argument);
}

TEST_CASE("frechet_mean scalar, midpoint and commuting oracles") {
  const Matrix i3 = Matrix::Identity(3, 3);
  const Matrix mean = frechet_mean({2.0 * i3, 8.0 * i3});
  CHECK((mean - 4.0 * i3).norm() < 1e-8);  // geometric mean sqrt(2*8)

  std::mt19937_64 rng(47);
  const Matrix a = random_spd(5, rng);
  const Matrix b = random_spd(5, rng);
  const Matrix mid = geodesic(a, b, 0.5);
  CHECK((frechet_mean({a, b}) - mid).norm() < 1e-8 * mid.norm());

  // Commuting family: the barycenter is exp of the mean log.
  std::vector<Matrix> diag_family;
  Matrix log_mean = Matrix::Zero(4, 4);
  for (int k = 0; k < 5; ++k) {
    Matrix d = Matrix::Zero(4, 4);
    for (int i = 0; i < 4; ++i) d(i, i) = 0.2 + 3.0 * uniform01(rng);
    diag_family.push_back(d);
    log_mean += spd_log(d) / 5.0;
  }
  CHECK((frechet_mean(diag_family) - spd_exp(log_mean)).norm() < 1e-8);
}

TEST_CASE("frechet_mean is congruence-equivariant") {
  std::mt19937_64 rng(53);
  std::vector<Matrix> pts;
  for (int k = 0; k < 6; ++k) pts.push_back(random_spd(5, rng));
  const Matrix w = random_invertible(5, rng);
  std::vector<Matrix> mapped;
  for (const Matrix& p : pts) mapped.push_back(congruence(w, p));
  const Matrix lhs = frechet_mean(mapped);
  const Matrix rhs = congruence(w, frechet_mean(pts));
  CHECK((lhs - rhs).norm() < 1e-7 * rhs.norm());
}

TEST_CASE("frechet_mean validates weights and handles singletons") {
  std::mt19937_64 rng(59);
  const Matrix a = random_spd(4, rng);
  CHECK((frechet_mean({a}) - a).norm() < 1e-12);
  CHECK_THROWS_AS(frechet_mean({}), std::invalid_argument);
  CHECK_THROWS_AS(frechet_mean({a, a}, {0.5, 0.6}), std::invalid_argument);
  CHECK_THROWS_AS(frechet_mean({a, a}, {1.5, -0.5}), std::invalid_argument);
  // Weighted mean of scalar matrices: closed form a^w1 * b^w2.
  const Matrix i2 = Matrix::Identity(2, 2);
  const Matrix m = frechet_mean({2.0 * i2, 8.0 * i2}, {0.75, 0.25});
  CHECK(m(0, 0) == doctest::Approx(std::pow(2.0, 0.75) * std::pow(8.0, 0.25)));
}

TEST_CASE("congruence scaling, rank and shape checks") {
  std::mt19937_64 rng(61);
  const Matrix s = random_spd(3, rng);
  CHECK((congruence(2.0 * Matrix::Identity(3, 3), s) - 4.0 * s).norm() < 1e-12);

  // Tall transformation with orthonormal columns: o_out - o_in zero modes.
  Matrix g = random_gaussian(5, 3, rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  const Matrix q = qr.householderQ() * Matrix::Identity(5, 3);
  const Matrix lifted = congruence(q, s);
  const EigenPair ep = sym_eig(lifted);
  int zero_count = 0;
  for (int i = 0; i < 5; ++i)
    if (std::abs(ep.values(i)) < 1e-9 * s.norm()) ++zero_count;
  CHECK(zero_count == 2);

  CHECK_THROWS_AS(congruence(Matrix::Identity(3, 4), s), std::invalid_argument);
}

TEST_CASE("positive combinations of SPD matrices stay SPD") {
  std::mt19937_64 rng(67);
  for (int rep = 0; rep < 100; ++rep) {
    Matrix acc = Matrix::Zero(8, 8);
    const int terms = 2 + static_cast<int>(rng() % 4);
    for (int k = 0; k < terms; ++k) acc += (0.05 + 2.0 * uniform01(rng)) * random_spd(8, rng);
    double lo = 0.0;
    CHECK(is_spd(acc, &lo));
    CHECK(lo > 0.0);
  }
}

TEST_CASE("clipping at zero is the nearest PSD point in spectral norm") {
  std::mt19937_64 rng(71);
  for (int rep = 0; rep < 5; ++rep) {
    const Matrix s = random_indefinite(6, rng);
    const EigenPair ep = sym_eig(s);
    const double lam_min = ep.values(5);
    REQUIRE(lam_min < 0.0);
    const Matrix proj = eig_clip(s, 0.0);
    const double dist = sym_eig(symmetrize(s - proj)).values.cwiseAbs().maxCoeff();
    CHECK(dist == doctest::Approx(-lam_min).epsilon(1e-9));
    for (int cand = 0; cand < 200; ++cand) {
      const Matrix z = congruence(random_gaussian(6, 6, rng), random_spd(6, rng));
      const Matrix diff = symmetrize(s - z);
      const double nd = sym_eig(diff).values.cwiseAbs().maxCoeff();
      CHECK(nd >= -lam_min - 1e-10);
    }
  }
}
