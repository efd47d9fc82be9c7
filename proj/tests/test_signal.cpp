#include "spdgcn/signal.hpp"

#include <cmath>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "spdgcn/dataset.hpp"

using namespace spdgcn;
using testutil::periodogram_band_power;

namespace {

Eigen::RowVectorXd tone(double freq, double amp, double fs, int samples, double phase = 0.3) {
  Eigen::RowVectorXd x(samples);
  for (int t = 0; t < samples; ++t)
    x(t) = amp * std::sin(2.0 * M_PI * freq * static_cast<double>(t) / fs + phase);
  return x;
}

}  // namespace

TEST_CASE("named segmentation plans have the expected node counts") {
  CHECK(SegmentationPlan::named("ku").node_count() == 60);
  CHECK(SegmentationPlan::named("bnci2014001").node_count() == 48);
  CHECK(SegmentationPlan::named("cho2017").node_count() == 33);
  CHECK(SegmentationPlan::named("bnci2014002").node_count() == 60);
  CHECK(SegmentationPlan::named("bnci2015001").node_count() == 60);
  CHECK_THROWS_AS(SegmentationPlan::named("nope"), std::invalid_argument);
}

TEST_CASE("segment-count formula holds for every plan") {
  for (const char* name : {"ku", "bnci2014001", "cho2017", "bnci2014002"}) {
    const SegmentationPlan plan = SegmentationPlan::named(name);
    int total = 0;
    for (int b = 0; b < static_cast<int>(plan.bands.size()); ++b) {
      const double w = plan.span / plan.bands[static_cast<std::size_t>(b)].window_length;
      CHECK(std::abs(w - std::round(w)) < 1e-9);
      total += static_cast<int>(std::round(w));
    }
    CHECK(plan.node_count() == total);
  }
}

TEST_CASE("node metadata is band-group-major with ascending time") {
  const SegmentationPlan plan = SegmentationPlan::named("ku");
  const auto meta = plan_node_meta(plan);
  REQUIRE(static_cast<int>(meta.size()) == 60);
  int last_group = 0, last_band = -1;
  for (const NodeMeta& m : meta) {
    CHECK(static_cast<int>(m.group) >= last_group);
    if (static_cast<int>(m.group) > last_group) last_band = -1;
    last_group = static_cast<int>(m.group);
    if (m.band_index != last_band) {
      CHECK(m.window_index == 0);
      CHECK(m.band_index > last_band);
      last_band = m.band_index;
    }
  }
  // Gamma rows of the ku plan have ten windows.
  int gamma_nodes = 0;
  for (const NodeMeta& m : meta)
    if (m.group == BandGroup::Gamma) ++gamma_nodes;
  CHECK(gamma_nodes == 30);
}

TEST_CASE("bandpass preserves in-band tones and rejects out-of-band tones") {
  const double fs = 160.0;
  const int n = 400;
  Matrix x(1, n);
  x.row(0) = tone(10.0, 1.0, fs, n);
  const double in_rms = std::sqrt(x.row(0).squaredNorm() / n);

  const Matrix kept = bandpass(x, {8.0, 12.0}, fs);
  const double kept_rms = std::sqrt(kept.row(0).squaredNorm() / n);
  CHECK(std::abs(kept_rms - in_rms) / in_rms < 0.01);

  const Matrix rejected = bandpass(x, {20.0, 24.0}, fs);
  const double rej_rms = std::sqrt(rejected.row(0).squaredNorm() / n);
  CHECK(rej_rms <= std::pow(10.0, -30.0 / 20.0) * in_rms);
}

TEST_CASE("bandpass suppresses everything beyond the transitions") {
  std::mt19937_64 rng(7);
  const double fs = 160.0;
  const int n = 512;
  Matrix x(1, n);
  for (int t = 0; t < n; ++t) x(0, t) = standard_normal(rng);
  const Matrix filtered = bandpass(x, {12.0, 16.0}, fs);
  const double total = periodogram_band_power(filtered.row(0), 0.0, fs / 2.0, fs);
  const double inside = periodogram_band_power(filtered.row(0), 10.0, 18.0, fs);
  CHECK(total - inside <= 0.001 * total);
}

TEST_CASE("bandpass is linear") {
  std::mt19937_64 rng(9);
  const double fs = 160.0;
  const int n = 320;
  Matrix x(2, n), y(2, n);
  for (int c = 0; c < 2; ++c)
    for (int t = 0; t < n; ++t) {
      x(c, t) = standard_normal(rng);
      y(c, t) = standard_normal(rng);
    }
  const double a = 1.7, b = -0.6;
  const Matrix lhs = bandpass(a * x + b * y, {8.0, 12.0}, fs);
  const Matrix rhs = a * bandpass(x, {8.0, 12.0}, fs) + b * bandpass(y, {8.0, 12.0}, fs);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("bandpass validates the band against Nyquist") {
  Matrix x = Matrix::Zero(1, 64);
  CHECK_THROWS_AS(bandpass(x, {30.0, 90.0}, 160.0), std::invalid_argument);
  CHECK_THROWS_AS(bandpass(x, {12.0, 8.0}, 160.0), std::invalid_argument);
}

TEST_CASE("segment_epoch window counts and shapes") {
  const double fs = 160.0;
  Matrix epoch = Matrix::Random(3, 400);  // 2.5 s
  const auto segs = segment_epoch(epoch, SegmentationPlan::named("ku"), fs);
  REQUIRE(static_cast<int>(segs.size()) == 60);
  for (int i = 0; i < 30; ++i) CHECK(segs[static_cast<std::size_t>(i)].cols() == 80);
  for (int i = 30; i < 60; ++i) CHECK(segs[static_cast<std::size_t>(i)].cols() == 40);

  Matrix epoch1s = Matrix::Random(3, 160);
  CHECK(segment_epoch(epoch1s, SegmentationPlan::named("bnci2014001"), fs).size() == 48);
  Matrix epoch3s = Matrix::Random(3, 480);
  CHECK(segment_epoch(epoch3s, SegmentationPlan::named("cho2017"), fs).size() == 33);
}

TEST_CASE("segment_epoch rejects non-integral windows") {
  Matrix epoch = Matrix::Random(2, 375);  // 2.5 s at 150 Hz
  CHECK_THROWS_WITH_AS(segment_epoch(epoch, SegmentationPlan::named("ku"), 150.0),
                       doctest::Contains("integral"), std::invalid_argument);
}

TEST_CASE("covariance of independent unit-variance channels") {
  std::mt19937_64 rng(13);
  const int t = 5000;
  Matrix x(2, t);
  for (int c = 0; c < 2; ++c)
    for (int s = 0; s < t; ++s) x(c, s) = standard_normal(rng);
  const Matrix cov = covariance(x, 0.0);
  CHECK(std::abs(cov(0, 0) - 1.0) < 0.05);
  CHECK(std::abs(cov(1, 1) - 1.0) < 0.05);
  CHECK(std::abs(cov(0, 1)) < 0.05);
}

TEST_CASE("covariance of a sinusoid matches half squared amplitude") {
  const double fs = 160.0, amp = 1.8;
  Matrix x = Matrix::Zero(2, 320);
  x.row(0) = tone(10.0, amp, fs, 320);
  const Matrix cov = covariance(x, 0.0);
  CHECK(std::abs(cov(0, 0) - amp * amp / 2.0) / (amp * amp / 2.0) < 0.02);
}

TEST_CASE("covariance shrinkage floors the spectrum") {
  Matrix x = Matrix::Zero(3, 50);
  x.row(0) = Eigen::RowVectorXd::LinSpaced(50, -1.0, 1.0);  // rank one
  const double shrink = 1e-5;
  const Matrix raw = covariance(x, 0.0);
  const Matrix cov = covariance(x, shrink);
  const double floor = shrink * raw.trace() / 3.0;
  double lo = 0.0;
  CHECK(is_spd(cov, &lo));
  CHECK(lo >= floor * (1.0 - 1e-12));

  // All-zero segment: the trace floor of one keeps the result SPD.
  const Matrix zero_cov = covariance(Matrix::Zero(3, 50), shrink);
  CHECK(is_spd(zero_cov));
  CHECK(zero_cov(0, 0) == doctest::Approx(shrink / 3.0));
  CHECK_THROWS_AS(covariance(Matrix::Zero(3, 1), shrink), std::invalid_argument);
}

TEST_CASE("build_tf_stack shapes, determinism and silent bands") {
  const SynthProfile profile = SynthProfile::named("default", 6, 2.5);
  const EpochDataset ds = synth_generate(10, 6, 160.0, 2.5, profile, 99);
  const SegmentationPlan plan = SegmentationPlan::named("ku");
  const TfStack stack = build_tf_stack(ds, plan, 1e-5);
  CHECK(stack.trials == 10);
  CHECK(stack.nodes == 60);
  for (const auto& row : stack.matrices)
    for (const Matrix& m : row) {
      CHECK(m.rows() == 6);
      CHECK(is_spd(m));
    }

  // Permuting trials permutes stack rows identically.
  EpochDataset permuted = ds;
  std::swap(permuted.data[0], permuted.data[5]);
  std::swap(permuted.labels[0], permuted.labels[5]);
  const TfStack stack2 = build_tf_stack(permuted, plan, 1e-5);
  CHECK((stack2.matrices[0][7] - stack.matrices[5][7]).cwiseAbs().maxCoeff() == 0.0);
  CHECK((stack2.matrices[5][7] - stack.matrices[0][7]).cwiseAbs().maxCoeff() == 0.0);

  // A tone-only dataset has essentially no gamma-band energy: those nodes
  // collapse to the shrinkage scale yet stay SPD.
  EpochDataset tones = ds;
  for (Matrix& x : tones.data) {
    for (int c = 0; c < x.rows(); ++c) x.row(c) = tone(10.0, 1.0, 160.0, 400, 0.1 * c);
  }
  const TfStack tstack = build_tf_stack(tones, plan, 1e-5);
  const auto meta = tstack.node_meta;
  double mu_trace = 0.0, gamma_trace = 0.0;
  for (int i = 0; i < tstack.nodes; ++i) {
    if (meta[static_cast<std::size_t>(i)].group == BandGroup::Mu)
      mu_trace += tstack.matrices[0][static_cast<std::size_t>(i)].trace();
    if (meta[static_cast<std::size_t>(i)].group == BandGroup::Gamma) {
      gamma_trace += tstack.matrices[0][static_cast<std::size_t>(i)].trace();
      CHECK(is_spd(tstack.matrices[0][static_cast<std::size_t>(i)]));
    }
  }
  CHECK(gamma_trace < 1e-6 * mu_trace);
}

TEST_CASE("band power equivalence between covariance diagonal and periodogram") {
  // One tone per band center per channel; covariance diagonals of the
  // filtered segments must match the raw-signal periodogram band powers.
  const double fs = 160.0;
  const int n = 400;
  const SegmentationPlan plan = SegmentationPlan::named("ku");
  Matrix x = Matrix::Zero(2, n);
  std::vector<double> amps = {1.0, 0.7};
  for (int c = 0; c < 2; ++c)
    for (int b = 0; b < static_cast<int>(plan.bands.size()); ++b) {
      const auto& band = plan.bands[static_cast<std::size_t>(b)].band;
      const double fc = 0.5 * (band.lo + band.hi);
      x.row(c) += tone(fc, amps[static_cast<std::size_t>(c)] * (1.0 + 0.1 * b), fs, n, 0.2 * b);
    }
  for (int b = 0; b < static_cast<int>(plan.bands.size()); ++b) {
    const auto& band = plan.bands[static_cast<std::size_t>(b)].band;
    const Matrix filtered = bandpass(x, band, fs);
    const Matrix cov = covariance(filtered, 0.0);
    for (int c = 0; c < 2; ++c) {
      const double oracle = periodogram_band_power(x.row(c), band.lo, band.hi, fs);
      CHECK(std::abs(cov(c, c) - oracle) < 0.05 * oracle);
    }
  }
}
