#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fg/datasets.hpp"
#include "fg/flatmin.hpp"
#include "fg/graph.hpp"
#include "fg/models.hpp"

namespace fg {

enum class TrainMode { transductive, inductive };
enum class Metric { accuracy, weighted_f1 };

TrainMode train_mode_from_string(const std::string& s);
std::string to_string(TrainMode m);

struct OptimizerCfg {
  double lr = 0.01;
  double weight_decay = 0.0;
};

struct RunConfig {
  ModelConfig model;
  MethodConfig method;
  OptimizerCfg optimizer;
  int patience = 100;
  int max_epochs = 20000;
  TrainMode mode = TrainMode::transductive;
  int max_retries = 3;

  void validate() const;
};

struct RunResult {
  std::uint64_t seed = 0;
  int stop_epoch = 0;
  int best_val_epoch = 0;
  double best_val_metric = 0.0;
  double final_test_metric = 0.0;
  std::optional<double> averaged_test_metric;
  double final_train_loss = 0.0;  // classification loss of the restored model
  std::vector<double> val_curve;
  double wall_time_s = 0.0;
  int retries = 0;
  bool failed = false;
  std::string fail_reason;

  // what the method reports: the averaged model when averaging ran, the
  // restored model otherwise
  double effective_metric() const {
    return averaged_test_metric ? *averaged_test_metric : final_test_metric;
  }
};

// One graph the model runs on (the full graph or an induced subgraph), with
// every propagation structure the configured architecture needs. Immutable
// after construction and shared across concurrent seeds.
struct GraphView {
  Graph graph;
  std::vector<std::size_t> to_view;  // original -> view index, npos if absent
  std::shared_ptr<const CsrMatrix> features_csr;
  CsrMatrix norm_adj;                     // gcn propagation
  CsrMatrix attn_adj;                     // gat structure with self loops
  std::optional<PowerMatrix> power;       // graph-mlp \hat A^r
  std::optional<Tensor> full_batch_adj;   // cached dense power for b = 1
};

struct TrainingSetup {
  TrainMode mode = TrainMode::transductive;
  Metric metric = Metric::accuracy;
  std::shared_ptr<const GraphView> train_view, val_view, test_view;
  std::vector<std::size_t> train_idx;  // train vertices in train_view indexing
  std::vector<std::size_t> val_idx;    // val vertices in val_view indexing
  std::vector<std::size_t> test_idx;   // test vertices in test_view indexing
};

TrainingSetup build_setup(const Graph& g, const Split& split, TrainMode mode,
                          const ModelConfig& model);

// Restores an exact checkpointed model and scores it: accuracy with argmax
// ties broken toward the lowest class, or weighted macro-F1 at threshold 0.5.
double evaluate(const ModelConfig& model, const ParamSet& params,
                const GraphView& view, const std::vector<std::size_t>& idx,
                Metric metric);

// Per-class F1 weighted by class support; empty classes contribute 0.
double weighted_macro_f1(const Tensor& pred, const Tensor& labels);

// Classification loss (cross-entropy or BCE) at the given parameters with
// dropout off. This is the quantity the landscape export plots.
double classification_loss(const ModelConfig& model, const ParamSet& params,
                           const GraphView& view,
                           const std::vector<std::size_t>& idx);

RunResult train(const TrainingSetup& setup, const RunConfig& cfg,
                std::uint64_t seed);

// The restored-best parameters of a single run (used for checkpoints and the
// landscape export).
RunResult train_with_params(const TrainingSetup& setup, const RunConfig& cfg,
                            std::uint64_t seed, ParamSet* best_params_out);

struct MultiSeedSummary {
  std::vector<RunResult> runs;  // ordered by the seed list
  double mean = 0.0;
  double sd = 0.0;
  std::size_t n = 0;       // successful runs
  std::size_t failed = 0;  // failed runs (reported, never dropped)
};

MultiSeedSummary multi_seed(const TrainingSetup& setup, const RunConfig& cfg,
                            const std::vector<std::uint64_t>& seeds, int jobs);

struct PairedDiff {
  std::uint64_t seed;
  double baseline;
  double method;
  double diff;
};

struct PairedSummary {
  std::vector<PairedDiff> pairs;
  double mean_diff = 0.0;
  double sd_diff = 0.0;
};

// Per-seed differences (method - baseline) over the seeds present and
// successful in both result sets.
PairedSummary paired_differences(const std::vector<RunResult>& baseline,
                                 const std::vector<RunResult>& method);

}  // namespace fg
