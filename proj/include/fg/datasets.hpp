#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fg/graph.hpp"

namespace fg {

enum class SplitKind { planetoid, ra_pl, s622 };

SplitKind split_kind_from_string(const std::string& s);
std::string to_string(SplitKind k);

struct Split {
  SplitKind kind = SplitKind::ra_pl;
  std::uint64_t seed = 0;
  std::vector<std::size_t> train, val, test;  // sorted, pairwise disjoint

  void validate(std::size_t num_vertices) const;
};

// Dataset directory layout:
//   meta.json     {"num_vertices":N,"num_features":F,"num_classes":C,"multilabel":false}
//   features.f64  little-endian float64, row-major N x F, no header
//   edges.tsv     one "src<TAB>dst" per line, undirected, symmetrized on load
//   labels.txt    one line per vertex; single-label: class id; multilabel:
//                 space-separated class ids (possibly empty line)
Graph load_dataset(const std::string& dir);
void write_dataset(const std::string& dir, const Graph& g);

// ra_pl: per class, 20 train then 30 val drawn without replacement; the rest
// is test. s622: global shuffle, floor(0.6 |V|) train, floor(0.2 |V|) val,
// rest test. Deterministic per (kind, seed).
Split generate_split(const Graph& g, SplitKind kind, std::uint64_t seed);

Split load_split(const std::string& path, const Graph& g);
void save_split(const std::string& path, const Split& split);

// Reads a planetoid index file (the Split JSON with kind "planetoid") and
// checks the 20*C / 500 / 1000 sizes.
Split load_planetoid_split(const std::string& path, const Graph& g);

}  // namespace fg
