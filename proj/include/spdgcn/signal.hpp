// Time-frequency covariance pipeline: zero-phase band-pass filtering, the
// non-overlapping segmentation plans, and shrinkage-regularized spatial
// covariance estimation. The output is a per-trial stack of SPD matrices,
// one per time-frequency cell.

#pragma once

#include <string>
#include <vector>

#include "spdgcn/dataset.hpp"
#include "spdgcn/spd.hpp"

namespace spdgcn {

enum class BandGroup { Theta = 0, Mu = 1, Beta = 2, Gamma = 3 };

const char* band_group_name(BandGroup g);

struct PlanBand {
  FrequencyBand band;
  double window_length = 0.0;  // seconds
  BandGroup group = BandGroup::Theta;
};

/// A non-overlapping tiling of the time-frequency plane. Bands are ordered
/// band-group-major with ascending frequency, and each band's windows tile
/// the epoch span exactly.
struct SegmentationPlan {
  std::vector<PlanBand> bands;
  double span = 0.0;  // seconds

  int windows_for(int band_index) const;
  int node_count() const;
  void validate() const;

  /// Named plans: "ku", "cho2017", "bnci2014001", "bnci2014002"
  /// (bnci2014002 also covers bnci2015001).
  static SegmentationPlan named(const std::string& name);
};

struct NodeMeta {
  int band_index = 0;    // index into plan.bands
  int window_index = 0;  // time position within the band
  BandGroup group = BandGroup::Theta;
};

/// Node metadata in canonical order: band-group-major, frequency ascending,
/// time ascending.
std::vector<NodeMeta> plan_node_meta(const SegmentationPlan& plan);

/// Zero-phase frequency-domain band-pass: unity gain inside [lo, hi],
/// raised-cosine transitions of width 2 Hz, zero response beyond them.
/// `signal` is channels x samples; the output has the same shape.
Matrix bandpass(const Matrix& signal, FrequencyBand band, double fs);

/// Band-pass filters the epoch per plan band and cuts each filtered signal
/// into consecutive windows, ordered like plan_node_meta.
std::vector<Matrix> segment_epoch(const Matrix& epoch, const SegmentationPlan& plan, double fs);

/// Centers each channel, forms X X^T / T, and adds
/// shrinkage * (trace / channels) * I (with a trace floor of 1 so an
/// all-zero segment still yields an SPD matrix).
Matrix covariance(const Matrix& segment, double shrinkage);

struct TfStack {
  int trials = 0;
  int nodes = 0;
  std::vector<std::vector<Matrix>> matrices;  // [trial][node]
  std::vector<NodeMeta> node_meta;
};

TfStack build_tf_stack(const EpochDataset& ds, const SegmentationPlan& plan, double shrinkage);

}  // namespace spdgcn
