// Time-frequency graph construction: lattice averaging over training
// trials, adjacency generation with Gaussian-kernel Riemannian weights, row
// normalization, and the spectrum perturbation-bound checker.

#pragma once

#include <array>
#include <utility>
#include <vector>

#include "spdgcn/signal.hpp"
#include "spdgcn/spd.hpp"

namespace spdgcn {

/// Forward steps per band group (theta, mu, beta, gamma). `time` bounds the
/// forward reach within a frequency row; `freq` the reach across rows.
struct GraphDirections {
  std::array<int, 4> time{0, 0, 0, 0};
  std::array<int, 4> freq{0, 0, 0, 0};
};

/// Per-node averages of the training stack.
struct LatticeVector {
  std::vector<Matrix> nodes;
  std::vector<NodeMeta> meta;
};

struct TfGraph {
  Matrix adjacency;  // N x N symmetric, zero diagonal, entries in [0, 1]
  double kernel_width = 0.0;
  LatticeVector lattice;
  GraphDirections directions;

  int node_count() const { return static_cast<int>(adjacency.rows()); }
  /// Nonzero strict-upper-triangle entries; with `include_self_loops` the
  /// count covers the self-connection augmentation A + I as well.
  int edge_count(bool include_self_loops = false) const;
};

/// Arithmetic mean per node over the training trials (SPD as a positive
/// combination of SPD matrices).
LatticeVector build_lattice(const TfStack& train_stack);

/// The edge topology implied by the directions, independent of node values.
/// Within one band group laid out as frequency rows by time columns:
///   - time edges join a node to the next 1..x nodes in its row;
///   - frequency edges join a node to every node 1..y rows up at the same
///     or a later time position (forward time flow).
/// Rows past the component boundary are skipped. Pairs are returned with
/// i < j.
std::vector<std::pair<int, int>> lattice_edges(const std::vector<NodeMeta>& meta,
                                               const GraphDirections& dirs);

/// Median of the squared pairwise distances over the candidate edges; falls
/// back to 1 when every candidate distance is zero or no edges exist.
double median_kernel_width(const LatticeVector& lattice,
                           const std::vector<std::pair<int, int>>& edges);

/// Gaussian-kernel weights exp(-d^2 / t) on the lattice_edges topology.
TfGraph gen_adjacency(const LatticeVector& lattice, const GraphDirections& dirs, double t);

/// Row-stochastic propagation operator D^{-1}(A + I).
Matrix row_normalize(const TfGraph& graph);

struct NodeBoundReport {
  int node = 0;
  int neighbor_count = 0;     // N_i
  double neighbor_bound = 0;  // C_i
  double min_ratio = 1.0;
  double max_ratio = 1.0;
  bool ok = true;
};

/// For each node forms S_i + sum_j a_ij S_j and checks every eigenvalue
/// ratio against [1 - N_i C_i, 1 + N_i C_i], where C_i is the largest
/// whitened-log eigenvalue bound over the neighbors.
std::vector<NodeBoundReport> theorem1_check(const TfGraph& graph);

}  // namespace spdgcn
