#pragma once

#include <cstdint>

#include "fg/graph.hpp"

namespace fg {

// Planted-partition graph with class-conditional sparse bag-of-words
// features. Vertices of the same class connect with prob_in, others with
// prob_out; each vertex draws words mostly from its class vocabulary. Useful
// for smoke tests and demos when no real dataset directory is around.
struct SynthSpec {
  std::size_t num_vertices = 300;
  std::size_t num_classes = 4;
  std::size_t num_features = 64;
  double prob_in = 0.05;
  double prob_out = 0.002;
  std::size_t words_per_vertex = 8;
  double word_signal = 0.8;  // share of words drawn from the class vocabulary
  std::uint64_t seed = 0;
};

Graph make_synthetic_graph(const SynthSpec& spec);

}  // namespace fg
