#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "fg/tensor.hpp"

namespace fg {

using Edge = std::pair<std::size_t, std::size_t>;

// A loaded dataset graph. The adjacency is symmetric and holds no self loops;
// self loops are added where normalization needs them.
struct Graph {
  std::size_t num_vertices = 0;
  Tensor features;                 // [V x F]
  std::vector<int> labels;         // single-label class ids (or empty)
  Tensor label_matrix;             // [V x C] binary, multilabel only
  CsrMatrix adj;                   // [V x V], symmetric, no self loops
  std::size_t num_classes = 0;
  bool multilabel = false;

  std::size_t num_features() const { return features.cols(); }
  void validate() const;
};

// Symmetrize, deduplicate and add self loops; output sorted by (src, dst).
std::vector<Edge> add_reverse_and_self_edges(const std::vector<Edge>& edges,
                                             std::size_t num_vertices);

// D^{-1/2} A D^{-1/2} for an adjacency that already carries self loops.
CsrMatrix sym_normalize(const CsrMatrix& adj_with_self_loops);

// Either representation of a powered adjacency, chosen by size.
struct PowerMatrix {
  std::optional<Tensor> dense;
  std::optional<CsrMatrix> sparse;

  double entry(std::size_t i, std::size_t j) const;
};

// r-fold product of a square normalized adjacency with itself, r in 1..4.
// Dense when the vertex count is at most dense_threshold; above it the CSR
// product drops entries below truncate_below to bound fill-in.
PowerMatrix adj_power(const CsrMatrix& norm, int r,
                      std::size_t dense_threshold = 20000,
                      double truncate_below = 1e-8);

struct SubgraphResult {
  Graph graph;
  std::vector<std::size_t> to_sub;   // original -> subgraph index, npos if dropped
  std::vector<std::size_t> to_orig;  // subgraph -> original index
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

// Vertex-induced subgraph with dense renumbering; keeps every edge whose
// endpoints are both kept.
SubgraphResult induced_subgraph(const Graph& g, const std::vector<std::size_t>& keep);

// Dense submatrix of a powered adjacency restricted to batch rows/columns.
Tensor batch_adjacency(const PowerMatrix& power, const std::vector<std::size_t>& batch);

// Prebuilt propagation structures for one graph: normalized adjacency with
// self loops plus lazily requested powers.
struct NormalizedAdjacency {
  CsrMatrix base;                // \hat A with self loops
  std::map<int, PowerMatrix> powers;

  static NormalizedAdjacency build(const Graph& g);
  const PowerMatrix& power(int r, std::size_t dense_threshold = 20000,
                           double truncate_below = 1e-8);
};

}  // namespace fg
