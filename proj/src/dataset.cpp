#include "spdgcn/dataset.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "spdgcn/rng.hpp"

namespace spdgcn {

namespace {

constexpr char kMagic[4] = {'C', 'O', 'V', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_raw(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& is, const char* field) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) {
    std::ostringstream os;
    os << "read_cov1: truncated while reading " << field;
    throw std::runtime_error(os.str());
  }
  return v;
}

// Broadband noise with a 1/sqrt(f) spectral envelope, normalized to unit
// standard deviation.
Eigen::VectorXd shaped_noise(int n, double fs, std::mt19937_64& rng) {
  std::vector<std::complex<double>> spectrum(static_cast<std::size_t>(n), {0.0, 0.0});
  for (int k = 1; k <= n / 2; ++k) {
    const double f = fs * static_cast<double>(k) / static_cast<double>(n);
    const double amp = 1.0 / std::sqrt(std::max(f, 1.0));
    const double re = standard_normal(rng) * amp;
    const double im = standard_normal(rng) * amp;
    spectrum[static_cast<std::size_t>(k)] = {re, im};
    if (k != n - k) spectrum[static_cast<std::size_t>(n - k)] = {re, -im};
  }
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> time_c;
  fft.inv(time_c, spectrum);
  Eigen::VectorXd out(n);
  for (int t = 0; t < n; ++t) out(t) = time_c[static_cast<std::size_t>(t)].real();
  const double sd = std::sqrt(out.squaredNorm() / static_cast<double>(n));
  if (sd > 0.0) out /= sd;
  return out;
}

// Raised-cosine window over [t0, t1) with ~50 ms ramps.
double burst_envelope(double t, double t0, double t1) {
  if (t < t0 || t >= t1) return 0.0;
  const double ramp = std::min(0.05, (t1 - t0) * 0.25);
  if (t < t0 + ramp) return 0.5 * (1.0 - std::cos(M_PI * (t - t0) / ramp));
  if (t > t1 - ramp) return 0.5 * (1.0 - std::cos(M_PI * (t1 - t) / ramp));
  return 1.0;
}

}  // namespace

int EpochDataset::num_classes() const {
  int m = 0;
  for (int l : labels) m = std::max(m, l + 1);
  return m;
}

void EpochDataset::validate() const {
  if (sampling_rate <= 0.0) throw std::invalid_argument("dataset: sampling rate must be positive");
  if (static_cast<int>(labels.size()) != trials || static_cast<int>(data.size()) != trials)
    throw std::invalid_argument("dataset: trial count does not match data/labels");
  const int c = num_classes();
  std::vector<int> counts(static_cast<std::size_t>(c), 0);
  for (int l : labels) {
    if (l < 0 || l >= c) throw std::invalid_argument("dataset: label out of range");
    counts[static_cast<std::size_t>(l)]++;
  }
  for (int k = 0; k < c; ++k)
    if (counts[static_cast<std::size_t>(k)] == 0) {
      std::ostringstream os;
      os << "dataset: class " << k << " has no trials";
      throw std::invalid_argument(os.str());
    }
  for (const Matrix& m : data)
    if (m.rows() != channels || m.cols() != samples)
      throw std::invalid_argument("dataset: trial shape mismatch");
}

EpochDataset read_cov1(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_cov1: cannot open " + path);

  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("read_cov1: bad magic, not a COV1 file: " + path);
  const auto version = read_raw<std::uint32_t>(is, "version");
  if (version != kVersion) {
    std::ostringstream os;
    os << "read_cov1: unsupported format version " << version;
    throw std::runtime_error(os.str());
  }
  const auto n_trials = read_raw<std::uint32_t>(is, "trial count");
  const auto n_channels = read_raw<std::uint32_t>(is, "channel count");
  const auto n_samples = read_raw<std::uint32_t>(is, "sample count");
  const auto fs = read_raw<double>(is, "sampling rate");

  // Verify the payload size before allocating anything.
  const std::uint64_t expected_payload =
      4ull * n_trials + 8ull * n_trials * n_channels * n_samples;
  const auto payload_start = is.tellg();
  is.seekg(0, std::ios::end);
  const std::uint64_t actual_payload = static_cast<std::uint64_t>(is.tellg() - payload_start);
  if (actual_payload != expected_payload) {
    std::ostringstream os;
    os << "read_cov1: payload size mismatch, expected " << expected_payload << " bytes, got "
       << actual_payload;
    throw std::runtime_error(os.str());
  }
  is.seekg(payload_start);

  EpochDataset ds;
  ds.trials = static_cast<int>(n_trials);
  ds.channels = static_cast<int>(n_channels);
  ds.samples = static_cast<int>(n_samples);
  ds.sampling_rate = fs;
  ds.labels.resize(n_trials);
  for (std::uint32_t t = 0; t < n_trials; ++t)
    ds.labels[t] = static_cast<int>(read_raw<std::uint32_t>(is, "label"));
  ds.data.reserve(n_trials);
  for (std::uint32_t t = 0; t < n_trials; ++t) {
    Matrix m(n_channels, n_samples);
    for (std::uint32_t c = 0; c < n_channels; ++c)
      for (std::uint32_t s = 0; s < n_samples; ++s) m(c, s) = read_raw<double>(is, "sample");
    ds.data.push_back(std::move(m));
  }
  ds.validate();
  return ds;
}

void write_cov1(const EpochDataset& ds, const std::string& path) {
  ds.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_cov1: cannot open " + path);
  os.write(kMagic, 4);
  write_raw(os, kVersion);
  write_raw(os, static_cast<std::uint32_t>(ds.trials));
  write_raw(os, static_cast<std::uint32_t>(ds.channels));
  write_raw(os, static_cast<std::uint32_t>(ds.samples));
  write_raw(os, ds.sampling_rate);
  for (int l : ds.labels) write_raw(os, static_cast<std::uint32_t>(l));
  for (const Matrix& m : ds.data)
    for (int c = 0; c < ds.channels; ++c)
      for (int s = 0; s < ds.samples; ++s) write_raw(os, m(c, s));
  if (!os) throw std::runtime_error("write_cov1: write failed for " + path);
}

SynthProfile SynthProfile::named(const std::string& name, int channels, double span) {
  auto clip_channels = [&](std::vector<int> want) {
    std::vector<int> out;
    for (int c : want)
      if (c < channels) out.push_back(c);
    if (out.empty()) out.push_back(0);
    return out;
  };

  SynthProfile p;
  p.name = name;
  p.classes = 2;
  p.class_bursts.assign(2, {});
  if (name == "null") return p;
  if (name == "default") {
    p.class_bursts[0].push_back(
        {{8.0, 12.0}, span * 0.5, span, clip_channels({0, 1, 2}), 2.0});
    p.class_bursts[1].push_back(
        {{20.0, 24.0}, 0.0, span * 0.5, clip_channels({3, 4, 5}), 2.0});
    return p;
  }
  if (name == "localized") {
    // The class contrast lives in a single time-frequency cell: one 8-12 Hz
    // burst covering one fifth of the epoch.
    p.class_bursts[1].push_back(
        {{8.0, 12.0}, span * 0.4, span * 0.6, clip_channels({0, 1, 2}), 0.8});
    return p;
  }
  throw std::invalid_argument("unknown synth profile: " + name);
}

EpochDataset synth_generate(int trials, int channels, double fs, double span,
                            const SynthProfile& profile, std::uint64_t seed) {
  if (trials <= 0 || channels <= 0 || fs <= 0.0 || span <= 0.0)
    throw std::invalid_argument("synth_generate: all dimensions must be positive");
  const double samples_f = span * fs;
  const int samples = static_cast<int>(std::llround(samples_f));
  if (std::abs(samples_f - samples) > 1e-9)
    throw std::invalid_argument("synth_generate: span * fs must be integral");
  for (const auto& bursts : profile.class_bursts)
    for (const BurstSpec& b : bursts) {
      if (b.band.hi >= fs / 2.0)
        throw std::invalid_argument("synth_generate: burst band exceeds Nyquist");
      if (b.t1 > span || b.t0 < 0.0 || b.t0 >= b.t1)
        throw std::invalid_argument("synth_generate: burst window outside the epoch");
      for (int c : b.channels)
        if (c < 0 || c >= channels)
          throw std::invalid_argument("synth_generate: burst channel out of range");
    }

  EpochDataset ds;
  ds.trials = trials;
  ds.channels = channels;
  ds.samples = samples;
  ds.sampling_rate = fs;
  ds.labels.resize(static_cast<std::size_t>(trials));
  ds.data.reserve(static_cast<std::size_t>(trials));

  std::mt19937_64 rng(seed);
  for (int t = 0; t < trials; ++t) {
    const int label = t % profile.classes;
    ds.labels[static_cast<std::size_t>(t)] = label;
    Matrix x(channels, samples);
    for (int c = 0; c < channels; ++c)
      x.row(c) = profile.noise_scale * shaped_noise(samples, fs, rng).transpose();
    for (const BurstSpec& b : profile.class_bursts[static_cast<std::size_t>(label)]) {
      const double f = b.band.lo + (b.band.hi - b.band.lo) * uniform01(rng);
      const double phase = 2.0 * M_PI * uniform01(rng);
      for (int c : b.channels)
        for (int s = 0; s < samples; ++s) {
          const double tt = static_cast<double>(s) / fs;
          x(c, s) += b.amplitude * burst_envelope(tt, b.t0, b.t1) *
                     std::sin(2.0 * M_PI * f * tt + phase);
        }
    }
    ds.data.push_back(std::move(x));
  }
  return ds;
}

}  // namespace spdgcn
