// Epoched multichannel datasets: the COV1 binary container and a seeded
// synthetic generator producing class-dependent band-limited bursts on top
// of broadband noise.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spdgcn/spd.hpp"

namespace spdgcn {

struct EpochDataset {
  int trials = 0;
  int channels = 0;
  int samples = 0;
  double sampling_rate = 0.0;
  std::vector<Matrix> data;  // per trial, channels x samples
  std::vector<int> labels;   // class index per trial

  int num_classes() const;
  /// Checks label range, positive sampling rate, and that every class has
  /// at least one trial.
  void validate() const;
};

// COV1 container, little-endian throughout:
//   magic "COV1" | u32 version (=1) | u32 trials | u32 channels |
//   u32 samples | f64 sampling_rate | u32 labels[trials] |
//   f64 data[trials * channels * samples]  (row-major trial, channel, sample)
EpochDataset read_cov1(const std::string& path);
void write_cov1(const EpochDataset& ds, const std::string& path);

struct FrequencyBand {
  double lo = 0.0;  // Hz
  double hi = 0.0;  // Hz
};

/// One class-dependent burst: a band-limited tone on a channel subset over
/// a time window, with raised-cosine onset/offset edges.
struct BurstSpec {
  FrequencyBand band;
  double t0 = 0.0;  // seconds
  double t1 = 0.0;
  std::vector<int> channels;
  double amplitude = 1.0;
};

struct SynthProfile {
  std::string name;
  int classes = 2;
  std::vector<std::vector<BurstSpec>> class_bursts;  // indexed by class
  double noise_scale = 1.0;

  /// Built-in profiles: "default" (two well-separated class signatures),
  /// "null" (zero contrast), "localized" (one class differs in a single
  /// time-frequency cell only).
  static SynthProfile named(const std::string& name, int channels, double span);
};

/// Deterministic per seed: broadband 1/sqrt(f)-shaped noise per channel
/// plus the profile's class bursts. Trials are labeled round-robin.
EpochDataset synth_generate(int trials, int channels, double fs, double span,
                            const SynthProfile& profile, std::uint64_t seed);

}  // namespace spdgcn
