// Command-line front end: precompute splits, run multi-seed experiments,
// export loss surfaces, and render comparison tables.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "fg/config.hpp"
#include "fg/landscape.hpp"
#include "fg/report.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

std::vector<std::uint64_t> parse_seed_range(const std::string& text) {
  const auto dots = text.find("..");
  std::vector<std::uint64_t> seeds;
  if (dots == std::string::npos) {
    seeds.push_back(std::stoull(text));
    return seeds;
  }
  const std::uint64_t from = std::stoull(text.substr(0, dots));
  const std::uint64_t to = std::stoull(text.substr(dots + 2));
  if (to < from) throw fg::ConfigError("--seeds: upper bound below lower bound");
  for (std::uint64_t s = from; s <= to; ++s) seeds.push_back(s);
  return seeds;
}

fg::ResultIdentity identity_for(const fg::ExperimentConfig& cfg,
                                const fg::Split& split, fg::Metric metric) {
  fg::ResultIdentity id;
  id.model = fg::to_string(cfg.run.model.arch);
  id.dataset = cfg.dataset_name;
  id.split = fg::to_string(split.kind);
  id.mode = fg::to_string(cfg.run.mode);
  id.method = cfg.run.method.label();
  id.metric = metric == fg::Metric::accuracy ? "accuracy" : "weighted_f1";
  return id;
}

int cmd_split(const std::string& dataset, const std::string& kind,
              std::uint64_t seed, const std::string& out) {
  fg::Graph g = fg::load_dataset(dataset);
  fg::Split split = fg::generate_split(g, fg::split_kind_from_string(kind), seed);
  fg::save_split(out, split);
  std::cout << split.train.size() << " " << split.val.size() << " "
            << split.test.size() << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& seeds_arg,
              const std::string& baseline_path, int jobs,
              const std::string& checkpoint_out) {
  fg::ExperimentConfig cfg = fg::parse_experiment_config(config_path);
  if (!seeds_arg.empty()) cfg.seeds = parse_seed_range(seeds_arg);

  fg::Graph g = fg::load_dataset(cfg.dataset_path);
  fg::Split split = cfg.resolve_split(g);
  fg::TrainingSetup setup =
      fg::build_setup(g, split, cfg.run.mode, cfg.run.model);

  std::cerr << "train: " << fg::to_string(cfg.run.model.arch) << " on "
            << cfg.dataset_name << "/" << fg::to_string(split.kind) << " ("
            << fg::to_string(cfg.run.mode) << "), method "
            << cfg.run.method.label() << ", " << cfg.seeds.size() << " seeds, "
            << jobs << " jobs\n";

  fg::MultiSeedSummary summary = fg::multi_seed(setup, cfg.run, cfg.seeds, jobs);
  std::cerr.precision(4);
  for (const fg::RunResult& r : summary.runs) {
    std::cerr << "seed " << r.seed;
    if (r.failed) {
      std::cerr << " FAILED after " << r.retries << " retries: " << r.fail_reason;
    } else {
      std::cerr << " test " << r.effective_metric() << " stop " << r.stop_epoch
                << " best@" << r.best_val_epoch << " (" << r.wall_time_s << "s)";
      if (r.retries > 0) std::cerr << " retries " << r.retries;
    }
    std::cerr << "\n";
  }
  std::cerr << "mean " << summary.mean << " sd " << summary.sd << " n "
            << summary.n << " failed " << summary.failed << "\n";

  const fg::ResultIdentity id = identity_for(cfg, split, setup.metric);
  if (fs::path(cfg.output_prefix).has_parent_path())
    fs::create_directories(fs::path(cfg.output_prefix).parent_path());
  fg::write_results_jsonl(cfg.output_prefix + ".results.jsonl", summary.runs);
  {
    std::ofstream out(cfg.output_prefix + ".summary.json");
    out << fg::summary_to_json(id, summary).dump(2) << "\n";
  }

  if (!baseline_path.empty()) {
    const std::vector<fg::RunResult> base = fg::read_results_jsonl(baseline_path);
    fg::PairedSummary paired = fg::paired_differences(base, summary.runs);
    json jp;
    jp["mean_diff"] = paired.mean_diff;
    jp["sd_diff"] = paired.sd_diff;
    jp["n"] = paired.pairs.size();
    json pairs = json::array();
    for (const fg::PairedDiff& p : paired.pairs)
      pairs.push_back({{"seed", p.seed},
                       {"baseline", p.baseline},
                       {"method", p.method},
                       {"diff", p.diff}});
    jp["pairs"] = pairs;
    std::ofstream out(cfg.output_prefix + ".paired.json");
    out << jp.dump(2) << "\n";
    std::cerr << "paired vs " << baseline_path << ": mean diff "
              << paired.mean_diff << " over " << paired.pairs.size()
              << " seeds\n";
  }

  if (!checkpoint_out.empty()) {
    fg::ParamSet best;
    fg::RunResult r =
        fg::train_with_params(setup, cfg.run, cfg.seeds.front(), &best);
    if (r.failed) throw fg::NumericError("checkpoint run failed: " + r.fail_reason);
    best.save(checkpoint_out);
    std::cerr << "checkpoint (seed " << cfg.seeds.front() << ", train loss "
              << r.final_train_loss << ") -> " << checkpoint_out << "\n";
  }

  if (summary.failed > 0)
    throw fg::NumericError(std::to_string(summary.failed) +
                           " run(s) failed after retries (see the per-seed "
                           "report and the results file)");
  return 0;
}

int cmd_landscape(const std::string& checkpoint, const std::string& config_path,
                  int grid, const std::string& range, const std::string& out,
                  int directions, std::uint64_t direction_seed) {
  fg::ExperimentConfig cfg = fg::parse_experiment_config(config_path);
  fg::ParamSet params = fg::ParamSet::load(checkpoint);

  fg::Graph g = fg::load_dataset(cfg.dataset_path);
  fg::Split split = cfg.resolve_split(g);
  fg::TrainingSetup setup =
      fg::build_setup(g, split, cfg.run.mode, cfg.run.model);

  // the checkpoint must match the configured architecture exactly
  {
    fg::Rng init(0);
    fg::ParamSet expect =
        fg::init_params(cfg.run.model, setup.train_view->graph.num_features(),
                        setup.train_view->graph.num_classes, init);
    if (expect.count() != params.count())
      throw fg::DataError("checkpoint does not match the configured model");
    for (std::size_t i = 0; i < expect.count(); ++i)
      if (expect.item(i).name != params.item(i).name ||
          expect.item(i).tensor.shape != params.item(i).tensor.shape)
        throw fg::DataError("checkpoint parameter " + params.item(i).name +
                            " does not match the configured model");
  }

  const auto colon = range.find(':');
  if (colon == std::string::npos) throw fg::ConfigError("--range expects LO:HI");
  fg::SurfaceSpec spec;
  spec.lo = std::stod(range.substr(0, colon));
  spec.hi = std::stod(range.substr(colon + 1));
  spec.resolution = grid;
  spec.num_directions = directions;
  spec.direction_seed = direction_seed;

  const fg::ModelConfig& model = cfg.run.model;
  auto train_loss = [&](const fg::ParamSet& p) {
    return fg::classification_loss(model, p, *setup.train_view, setup.train_idx);
  };
  auto test_loss = [&](const fg::ParamSet& p) {
    return fg::classification_loss(model, p, *setup.test_view, setup.test_idx);
  };
  fg::Surface surface = fg::loss_surface(params, spec, train_loss, test_loss);
  fg::write_surface_csv(surface, out);
  std::cerr << "landscape: " << surface.points.size() << " points -> " << out
            << "\n";
  return 0;
}

int cmd_report(const std::string& in_dir, const std::string& format,
               const std::string& out_path) {
  std::vector<json> summaries;
  for (const auto& entry : fs::directory_iterator(in_dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name.size() < 13 || name.substr(name.size() - 13) != ".summary.json")
      continue;
    std::ifstream in(entry.path());
    try {
      summaries.push_back(json::parse(in));
    } catch (const std::exception& e) {
      throw fg::DataError(entry.path().string() + ": " + e.what());
    }
  }
  const std::string table = fg::render_report(summaries, format);
  if (out_path.empty()) {
    std::cout << table;
  } else {
    std::ofstream out(out_path);
    out << table;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flat-minima training methods for graph neural networks"};
  app.require_subcommand(1);

  auto* split = app.add_subcommand("split", "precompute a random split");
  std::string split_dataset, split_kind, split_out;
  std::uint64_t split_seed = 0;
  split->add_option("--dataset", split_dataset, "dataset directory")->required();
  split->add_option("--kind", split_kind, "ra-pl or 622")->required();
  split->add_option("--seed", split_seed, "generator seed");
  split->add_option("--out", split_out, "output split file")->required();

  auto* train = app.add_subcommand("train", "run a multi-seed experiment");
  std::string train_config, train_seeds, train_baseline, train_ckpt;
  int train_jobs = static_cast<int>(std::thread::hardware_concurrency());
  if (train_jobs < 1) train_jobs = 1;
  train->add_option("--config", train_config, "experiment config json")->required();
  train->add_option("--seeds", train_seeds, "seed or range a..b (overrides config)");
  train->add_option("--baseline", train_baseline,
                    "baseline results.jsonl for paired differences");
  train->add_option("--jobs", train_jobs, "concurrent seeds");
  train->add_option("--checkpoint-out", train_ckpt,
                    "save the first seed's restored model");

  auto* land = app.add_subcommand("landscape", "export a loss surface");
  std::string land_ckpt, land_config, land_range = "-1:1", land_out;
  int land_grid = 41, land_dirs = 2;
  std::uint64_t land_seed = 0;
  land->add_option("--checkpoint", land_ckpt, "model checkpoint")->required();
  land->add_option("--config", land_config, "experiment config json")->required();
  land->add_option("--grid", land_grid, "grid points per axis");
  land->add_option("--range", land_range, "LO:HI displacement range");
  land->add_option("--out", land_out, "output csv")->required();
  land->add_option("--directions", land_dirs, "1 or 2 random directions");
  land->add_option("--direction-seed", land_seed, "direction seed");

  auto* report = app.add_subcommand("report", "render a comparison table");
  std::string report_in, report_format = "markdown", report_out;
  report->add_option("--in", report_in, "directory of *.summary.json")->required();
  report->add_option("--format", report_format, "markdown or csv");
  report->add_option("--out", report_out, "output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (split->parsed())
      return cmd_split(split_dataset, split_kind, split_seed, split_out);
    if (train->parsed())
      return cmd_train(train_config, train_seeds, train_baseline, train_jobs,
                       train_ckpt);
    if (land->parsed())
      return cmd_landscape(land_ckpt, land_config, land_grid, land_range,
                           land_out, land_dirs, land_seed);
    if (report->parsed()) return cmd_report(report_in, report_format, report_out);
  } catch (const fg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const fg::ShapeError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const fg::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const fg::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return 0;
}
