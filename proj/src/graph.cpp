#include "spdgcn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

namespace spdgcn {

namespace {

struct Component {
  int offset = 0;  // first node index
  int rows = 0;    // frequency rows
  int cols = 0;    // windows per row
  BandGroup group = BandGroup::Theta;
};

// Splits the canonical node ordering into band-group components and checks
// that it really is row-major (frequency rows by time columns).
std::vector<Component> split_components(const std::vector<NodeMeta>& meta) {
  std::vector<Component> comps;
  int i = 0;
  const int n = static_cast<int>(meta.size());
  while (i < n) {
    const BandGroup g = meta[static_cast<std::size_t>(i)].group;
    Component c;
    c.offset = i;
    c.group = g;
    std::map<int, int> windows_per_band;  // band index -> window count
    int j = i;
    for (; j < n && meta[static_cast<std::size_t>(j)].group == g; ++j)
      windows_per_band[meta[static_cast<std::size_t>(j)].band_index]++;
    c.rows = static_cast<int>(windows_per_band.size());
    c.cols = windows_per_band.begin()->second;
    for (const auto& [band, cnt] : windows_per_band)
      if (cnt != c.cols)
        throw std::invalid_argument("lattice_edges: uneven window counts within a band group");
    // Verify row-major layout: row = rank of band within group, position =
    // window index.
    int expect = i;
    for (const auto& [band, cnt] : windows_per_band)
      for (int p = 0; p < cnt; ++p, ++expect) {
        const NodeMeta& m = meta[static_cast<std::size_t>(expect)];
        if (m.band_index != band || m.window_index != p)
          throw std::invalid_argument("lattice_edges: node ordering violation");
      }
    i = j;
    comps.push_back(c);
    if (comps.size() > 4) throw std::invalid_argument("lattice_edges: band groups repeat");
    if (comps.size() >= 2 && static_cast<int>(comps[comps.size() - 2].group) >= static_cast<int>(g))
      throw std::invalid_argument("lattice_edges: band groups out of order");
  }
  return comps;
}

}  // namespace

int TfGraph::edge_count(bool include_self_loops) const {
  int e = 0;
  for (int i = 0; i < adjacency.rows(); ++i)
    for (int j = i + 1; j < adjacency.cols(); ++j)
      if (adjacency(i, j) > 0.0) ++e;
  return include_self_loops ? e + static_cast<int>(adjacency.rows()) : e;
}

LatticeVector build_lattice(const TfStack& train_stack) {
  if (train_stack.trials <= 0 || train_stack.matrices.empty())
    throw std::invalid_argument("build_lattice: empty training set");
  LatticeVector lat;
  lat.meta = train_stack.node_meta;
  lat.nodes.reserve(static_cast<std::size_t>(train_stack.nodes));
  const double inv = 1.0 / static_cast<double>(train_stack.trials);
  for (int i = 0; i < train_stack.nodes; ++i) {
    Matrix acc = train_stack.matrices[0][static_cast<std::size_t>(i)];
    for (int t = 1; t < train_stack.trials; ++t)
      acc += train_stack.matrices[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)];
    lat.nodes.push_back(symmetrize(acc * inv));
  }
  return lat;
}

std::vector<std::pair<int, int>> lattice_edges(const std::vector<NodeMeta>& meta,
                                               const GraphDirections& dirs) {
  for (int k = 0; k < 4; ++k)
    if (dirs.time[static_cast<std::size_t>(k)] < 0 || dirs.freq[static_cast<std::size_t>(k)] < 0)
      throw std::invalid_argument("lattice_edges: directions must be nonnegative");

  std::vector<std::pair<int, int>> edges;
  for (const Component& c : split_components(meta)) {
    const int x = dirs.time[static_cast<std::size_t>(static_cast<int>(c.group))];
    const int y = dirs.freq[static_cast<std::size_t>(static_cast<int>(c.group))];
    for (int r = 0; r < c.rows; ++r)
      for (int p = 0; p < c.cols; ++p) {
        const int i = c.offset + r * c.cols + p;
        const int reach = std::min(c.cols - 1 - p, x);
        for (int k = 1; k <= reach; ++k) edges.emplace_back(i, i + k);
        const int row_reach = std::min(c.rows - 1 - r, y);
        for (int k = 1; k <= row_reach; ++k)
          for (int m = 0; m < c.cols - p; ++m)
            edges.emplace_back(i, c.offset + (r + k) * c.cols + p + m);
      }
  }
  return edges;
}

double median_kernel_width(const LatticeVector& lattice,
                           const std::vector<std::pair<int, int>>& edges) {
  std::vector<double> d2;
  d2.reserve(edges.size());
  for (const auto& [i, j] : edges) {
    const double d = airm_distance(lattice.nodes[static_cast<std::size_t>(i)],
                                   lattice.nodes[static_cast<std::size_t>(j)]);
    d2.push_back(d * d);
  }
  if (d2.empty()) return 1.0;
  std::sort(d2.begin(), d2.end());
  const std::size_t n = d2.size();
  const double med = (n % 2 == 1) ? d2[n / 2] : 0.5 * (d2[n / 2 - 1] + d2[n / 2]);
  // Distances between identical nodes compute to rounding noise, not zero.
  return med > 1e-24 ? med : 1.0;
}

TfGraph gen_adjacency(const LatticeVector& lattice, const GraphDirections& dirs, double t) {
  if (!(t > 0.0)) throw std::invalid_argument("gen_adjacency: kernel width must be positive");
  if (lattice.nodes.size() != lattice.meta.size())
    throw std::invalid_argument("gen_adjacency: lattice metadata mismatch");

  const int n = static_cast<int>(lattice.nodes.size());
  TfGraph g;
  g.adjacency = Matrix::Zero(n, n);
  g.kernel_width = t;
  g.lattice = lattice;
  g.directions = dirs;
  for (const auto& [i, j] : lattice_edges(lattice.meta, dirs)) {
    const double d = airm_distance(lattice.nodes[static_cast<std::size_t>(i)],
                                   lattice.nodes[static_cast<std::size_t>(j)]);
    const double w = std::exp(-d * d / t);
    g.adjacency(i, j) = w;
    g.adjacency(j, i) = w;
  }
  return g;
}

Matrix row_normalize(const TfGraph& graph) {
  const int n = graph.node_count();
  Matrix a_bar = graph.adjacency + Matrix::Identity(n, n);
  for (int i = 0; i < n; ++i) a_bar.row(i) /= a_bar.row(i).sum();
  return a_bar;
}

std::vector<NodeBoundReport> theorem1_check(const TfGraph& graph) {
  const int n = graph.node_count();
  std::vector<NodeBoundReport> reports;
  reports.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const Matrix& si = graph.lattice.nodes[static_cast<std::size_t>(i)];
    NodeBoundReport rep;
    rep.node = i;

    Matrix perturbed = si;
    const Matrix w = spd_invsqrt(si);
    double c_max = 0.0;
    for (int j = 0; j < n; ++j) {
      const double a = graph.adjacency(i, j);
      if (a <= 0.0 || j == i) continue;
      const Matrix& sj = graph.lattice.nodes[static_cast<std::size_t>(j)];
      perturbed += a * sj;
      rep.neighbor_count++;
      const EigenPair ep = sym_eig(spd_log(symmetrize(w * sj * w)));
      c_max = std::max(c_max, std::exp(ep.values(0)));
    }
    rep.neighbor_bound = c_max;

    const EigenPair e_orig = sym_eig(si);
    const EigenPair e_pert = sym_eig(symmetrize(perturbed));
    if (e_pert.values.minCoeff() <= 0.0)
      throw std::runtime_error("theorem1_check: perturbed node left the SPD cone");
    rep.min_ratio = 1.0;
    rep.max_ratio = 1.0;
    for (Eigen::Index k = 0; k < e_orig.values.size(); ++k) {
      const double ratio = e_pert.values(k) / e_orig.values(k);
      rep.min_ratio = std::min(rep.min_ratio, ratio);
      rep.max_ratio = std::max(rep.max_ratio, ratio);
    }
    const double slack = static_cast<double>(rep.neighbor_count) * rep.neighbor_bound;
    // Rounding cushion: the bound holds with equality for identical
    // neighbors, where recomputed spectra differ at machine precision.
    const double tol = 1e-9 * (1.0 + slack);
    rep.ok = rep.min_ratio >= 1.0 - slack - tol && rep.max_ratio <= 1.0 + slack + tol;
    reports.push_back(rep);
  }
  return reports;
}

}  // namespace spdgcn
