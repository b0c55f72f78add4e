#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "fg/trainer.hpp"

namespace fg {

// Identity attached to every emitted result set so tables can be assembled
// from files alone.
struct ResultIdentity {
  std::string model;
  std::string dataset;
  std::string split;   // "planetoid", "ra_pl", "s622"
  std::string mode;    // "transductive", "inductive"
  std::string method;  // method label, "baseline" for the plain model
  std::string metric;  // "accuracy", "weighted_f1"
};

nlohmann::json run_result_to_json(const RunResult& r);
RunResult run_result_from_json(const nlohmann::json& j);

void write_results_jsonl(const std::string& path,
                         const std::vector<RunResult>& runs);
std::vector<RunResult> read_results_jsonl(const std::string& path);

nlohmann::json summary_to_json(const ResultIdentity& id,
                               const MultiSeedSummary& summary);

// Markdown or CSV rendering of a directory of *.summary.json files: baseline
// rows as absolute means, method rows as signed deltas, columns per
// dataset/split. Throws ConfigError on conflicting or mixed-mode inputs.
std::string render_report(const std::vector<nlohmann::json>& summaries,
                          const std::string& format);

}  // namespace fg
