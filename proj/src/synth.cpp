#include "fg/synth.hpp"

#include "fg/rng.hpp"

namespace fg {

Graph make_synthetic_graph(const SynthSpec& spec) {
  if (spec.num_classes < 2) throw ConfigError("synth: need at least 2 classes");
  if (spec.num_features < spec.num_classes)
    throw ConfigError("synth: need at least one feature per class");
  Rng rng(Rng::derive(spec.seed, 0x73796eULL));

  Graph g;
  g.num_vertices = spec.num_vertices;
  g.num_classes = spec.num_classes;
  g.labels.resize(spec.num_vertices);
  for (std::size_t i = 0; i < spec.num_vertices; ++i)
    g.labels[i] = static_cast<int>(i % spec.num_classes);

  g.features = Tensor::zeros({spec.num_vertices, spec.num_features});
  const std::size_t vocab = spec.num_features / spec.num_classes;
  for (std::size_t i = 0; i < spec.num_vertices; ++i) {
    const std::size_t cls = static_cast<std::size_t>(g.labels[i]);
    for (std::size_t w = 0; w < spec.words_per_vertex; ++w) {
      std::size_t word;
      if (rng.uniform() < spec.word_signal) {
        word = cls * vocab + rng.below(vocab);
      } else {
        word = rng.below(spec.num_features);
      }
      g.features.at(i, word) = 1.0;
    }
  }

  std::vector<std::size_t> rr, cc;
  for (std::size_t i = 0; i < spec.num_vertices; ++i) {
    for (std::size_t j = i + 1; j < spec.num_vertices; ++j) {
      const double p = g.labels[i] == g.labels[j] ? spec.prob_in : spec.prob_out;
      if (rng.uniform() < p) {
        rr.push_back(i);
        cc.push_back(j);
        rr.push_back(j);
        cc.push_back(i);
      }
    }
  }
  std::vector<double> vv(rr.size(), 1.0);
  g.adj = CsrMatrix::from_triples(spec.num_vertices, spec.num_vertices,
                                  std::move(rr), std::move(cc), std::move(vv));
  g.validate();
  return g;
}

}  // namespace fg
