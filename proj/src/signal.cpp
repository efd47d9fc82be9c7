#include "spdgcn/signal.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <sstream>
#include <stdexcept>

namespace spdgcn {

namespace {

constexpr double kTransitionHz = 2.0;

double mask_gain(double f, double lo, double hi) {
  const double lo0 = std::max(lo - kTransitionHz, 0.0);
  const double hi1 = hi + kTransitionHz;
  if (f < lo0 || f > hi1) return 0.0;
  if (f < lo) return 0.5 * (1.0 - std::cos(M_PI * (f - lo0) / (lo - lo0)));
  if (f <= hi) return 1.0;
  return 0.5 * (1.0 - std::cos(M_PI * (hi1 - f) / kTransitionHz));
}

int integral_count(double value, const char* what) {
  const int n = static_cast<int>(std::llround(value));
  if (n <= 0 || std::abs(value - n) > 1e-9) {
    std::ostringstream os;
    os << what << ": " << value << " is not a positive integer";
    throw std::invalid_argument(os.str());
  }
  return n;
}

SegmentationPlan nine_band_plan(double span, double low_window, double high_window) {
  // Nine 4 Hz bands from 4 to 40 Hz: theta, mu, four beta rows, three gamma
  // rows. The three gamma rows use the shorter window.
  SegmentationPlan plan;
  plan.span = span;
  plan.bands = {
      {{4.0, 8.0}, low_window, BandGroup::Theta},
      {{8.0, 12.0}, low_window, BandGroup::Mu},
      {{12.0, 16.0}, low_window, BandGroup::Beta},
      {{16.0, 20.0}, low_window, BandGroup::Beta},
      {{20.0, 24.0}, low_window, BandGroup::Beta},
      {{24.0, 28.0}, low_window, BandGroup::Beta},
      {{28.0, 32.0}, high_window, BandGroup::Gamma},
      {{32.0, 36.0}, high_window, BandGroup::Gamma},
      {{36.0, 40.0}, high_window, BandGroup::Gamma},
  };
  plan.validate();
  return plan;
}

}  // namespace

const char* band_group_name(BandGroup g) {
  switch (g) {
    case BandGroup::Theta: return "theta";
    case BandGroup::Mu: return "mu";
    case BandGroup::Beta: return "beta";
    case BandGroup::Gamma: return "gamma";
  }
  return "?";
}

int SegmentationPlan::windows_for(int band_index) const {
  const PlanBand& b = bands.at(static_cast<std::size_t>(band_index));
  return integral_count(span / b.window_length, "segmentation plan windows");
}

int SegmentationPlan::node_count() const {
  int n = 0;
  for (int b = 0; b < static_cast<int>(bands.size()); ++b) n += windows_for(b);
  return n;
}

void SegmentationPlan::validate() const {
  if (span <= 0.0) throw std::invalid_argument("segmentation plan: span must be positive");
  if (bands.empty()) throw std::invalid_argument("segmentation plan: no bands");
  int last_group = -1;
  double last_lo = -1.0;
  for (int i = 0; i < static_cast<int>(bands.size()); ++i) {
    const PlanBand& b = bands[static_cast<std::size_t>(i)];
    if (!(b.band.lo < b.band.hi))
      throw std::invalid_argument("segmentation plan: band has lo >= hi");
    if (b.window_length <= 0.0)
      throw std::invalid_argument("segmentation plan: window length must be positive");
    (void)windows_for(i);  // windows must tile the span
    const int g = static_cast<int>(b.group);
    if (g < last_group)
      throw std::invalid_argument("segmentation plan: bands must be band-group-major");
    if (g == last_group && b.band.lo <= last_lo)
      throw std::invalid_argument(
          "segmentation plan: bands must be frequency-ascending within a group");
    if (g != last_group) last_lo = -1.0;
    last_group = g;
    last_lo = b.band.lo;
  }
  // All rows of one band group must share a window count.
  for (std::size_t i = 1; i < bands.size(); ++i)
    if (bands[i].group == bands[i - 1].group &&
        bands[i].window_length != bands[i - 1].window_length)
      throw std::invalid_argument(
          "segmentation plan: window length must be uniform within a band group");
}

SegmentationPlan SegmentationPlan::named(const std::string& name) {
  if (name == "ku") return nine_band_plan(2.5, 0.5, 0.25);
  if (name == "bnci2014001") return nine_band_plan(1.0, 0.25, 0.125);
  if (name == "cho2017") return nine_band_plan(3.0, 1.0, 0.6);
  if (name == "bnci2014002" || name == "bnci2015001") return nine_band_plan(5.0, 1.0, 0.5);
  throw std::invalid_argument("unknown segmentation plan: " + name);
}

std::vector<NodeMeta> plan_node_meta(const SegmentationPlan& plan) {
  plan.validate();
  std::vector<NodeMeta> meta;
  for (int b = 0; b < static_cast<int>(plan.bands.size()); ++b) {
    const int w = plan.windows_for(b);
    for (int t = 0; t < w; ++t)
      meta.push_back({b, t, plan.bands[static_cast<std::size_t>(b)].group});
  }
  return meta;
}

Matrix bandpass(const Matrix& signal, FrequencyBand band, double fs) {
  if (!(band.lo > 0.0 && band.lo < band.hi && band.hi < fs / 2.0)) {
    std::ostringstream os;
    os << "bandpass: band [" << band.lo << ", " << band.hi << "] Hz is invalid for fs = " << fs;
    throw std::invalid_argument(os.str());
  }
  const int n = static_cast<int>(signal.cols());
  if (n < 2) throw std::invalid_argument("bandpass: signal too short");

  std::vector<double> gain(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    const double f = fs * static_cast<double>(std::min(k, n - k)) / static_cast<double>(n);
    gain[static_cast<std::size_t>(k)] = mask_gain(f, band.lo, band.hi);
  }

  Eigen::FFT<double> fft;
  Matrix out(signal.rows(), n);
  std::vector<double> row(static_cast<std::size_t>(n));
  std::vector<std::complex<double>> spec;
  std::vector<std::complex<double>> back;
  for (int c = 0; c < signal.rows(); ++c) {
    for (int t = 0; t < n; ++t) row[static_cast<std::size_t>(t)] = signal(c, t);
    std::vector<std::complex<double>> cin(row.begin(), row.end());
    fft.fwd(spec, cin);
    for (int k = 0; k < n; ++k) spec[static_cast<std::size_t>(k)] *= gain[static_cast<std::size_t>(k)];
    fft.inv(back, spec);
    for (int t = 0; t < n; ++t) out(c, t) = back[static_cast<std::size_t>(t)].real();
  }
  return out;
}

std::vector<Matrix> segment_epoch(const Matrix& epoch, const SegmentationPlan& plan, double fs) {
  plan.validate();
  const double span_samples = plan.span * fs;
  if (std::abs(span_samples - std::llround(span_samples)) > 1e-9 ||
      std::llround(span_samples) != epoch.cols()) {
    std::ostringstream os;
    os << "segment_epoch: plan span " << plan.span << " s at " << fs << " Hz does not match "
       << epoch.cols() << " samples";
    throw std::invalid_argument(os.str());
  }

  std::vector<Matrix> out;
  for (int b = 0; b < static_cast<int>(plan.bands.size()); ++b) {
    const PlanBand& pb = plan.bands[static_cast<std::size_t>(b)];
    const double wlen = pb.window_length * fs;
    const int wsamp = static_cast<int>(std::llround(wlen));
    if (std::abs(wlen - wsamp) > 1e-9 || wsamp < 2) {
      std::ostringstream os;
      os << "segment_epoch: window length " << pb.window_length << " s at " << fs
         << " Hz is not an integral sample count";
      throw std::invalid_argument(os.str());
    }
    const Matrix filtered = bandpass(epoch, pb.band, fs);
    const int windows = plan.windows_for(b);
    for (int t = 0; t < windows; ++t) out.push_back(filtered.middleCols(t * wsamp, wsamp));
  }
  return out;
}

Matrix covariance(const Matrix& segment, double shrinkage) {
  const int n_c = static_cast<int>(segment.rows());
  const int t = static_cast<int>(segment.cols());
  if (t < 2) throw std::invalid_argument("covariance: segment needs at least 2 samples");
  if (shrinkage < 0.0) throw std::invalid_argument("covariance: shrinkage must be nonnegative");

  Matrix centered = segment;
  centered.colwise() -= segment.rowwise().mean();
  Matrix c = (centered * centered.transpose()) / static_cast<double>(t);
  double tr = c.trace();
  if (tr <= 0.0) tr = 1.0;  // all-zero segment fallback
  c += shrinkage * (tr / static_cast<double>(n_c)) * Matrix::Identity(n_c, n_c);
  return symmetrize(c);
}

TfStack build_tf_stack(const EpochDataset& ds, const SegmentationPlan& plan, double shrinkage) {
  ds.validate();
  TfStack stack;
  stack.trials = ds.trials;
  stack.node_meta = plan_node_meta(plan);
  stack.nodes = static_cast<int>(stack.node_meta.size());
  stack.matrices.resize(static_cast<std::size_t>(ds.trials));
  for (int t = 0; t < ds.trials; ++t) {
    const std::vector<Matrix> segs = segment_epoch(ds.data[static_cast<std::size_t>(t)], plan, ds.sampling_rate);
    auto& row = stack.matrices[static_cast<std::size_t>(t)];
    row.reserve(segs.size());
    for (const Matrix& s : segs) row.push_back(covariance(s, shrinkage));
  }
  return stack;
}

}  // namespace spdgcn
