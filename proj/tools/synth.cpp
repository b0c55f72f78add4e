// Writes a synthetic planted-partition dataset directory for smoke tests and
// demos when no converted benchmark data is available.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "fg/datasets.hpp"
#include "fg/synth.hpp"

int main(int argc, char** argv) {
  CLI::App app{"synthetic dataset generator"};
  fg::SynthSpec spec;
  std::string out;
  app.add_option("--out", out, "output dataset directory")->required();
  app.add_option("--vertices", spec.num_vertices, "vertex count");
  app.add_option("--classes", spec.num_classes, "class count");
  app.add_option("--features", spec.num_features, "feature count");
  app.add_option("--prob-in", spec.prob_in, "same-class edge probability");
  app.add_option("--prob-out", spec.prob_out, "cross-class edge probability");
  app.add_option("--words", spec.words_per_vertex, "words drawn per vertex");
  app.add_option("--signal", spec.word_signal, "share of class-specific words");
  app.add_option("--seed", spec.seed, "generator seed");
  CLI11_PARSE(app, argc, argv);

  try {
    std::filesystem::create_directories(out);
    fg::Graph g = fg::make_synthetic_graph(spec);
    fg::write_dataset(out, g);
    std::cout << g.num_vertices << " vertices, " << g.adj.nnz()
              << " adjacency entries, " << g.num_classes << " classes -> " << out
              << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
