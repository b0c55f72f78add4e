#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fg/datasets.hpp"
#include "fg/trainer.hpp"

namespace fg {

// One experiment: dataset, split reference, mode, model, method, optimizer,
// seeds, output location. Parsed strictly: unknown keys are rejected with a
// pointer to the offending key.
struct ExperimentConfig {
  std::string dataset_path;  // resolved directory
  std::string dataset_name;  // directory basename
  std::optional<std::string> split_file;
  std::optional<SplitKind> split_kind;  // generator reference
  std::uint64_t split_seed = 0;
  RunConfig run;
  std::vector<std::uint64_t> seeds;
  std::string output_prefix;

  Split resolve_split(const Graph& g) const;
};

// Relative paths resolve against the config file's directory, then the
// current directory, then $FLATGRAPH_DATA for datasets.
ExperimentConfig parse_experiment_config(const std::string& path);

// Method block with the serialized key layout (sam.rho, ewa.alpha, ...).
MethodConfig parse_method_config(const nlohmann::json& j);
nlohmann::json method_config_to_json(const MethodConfig& m);

}  // namespace fg
