#include "fg/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace fg {

using nlohmann::json;

json run_result_to_json(const RunResult& r) {
  json j;
  j["seed"] = r.seed;
  j["stop_epoch"] = r.stop_epoch;
  j["best_val_epoch"] = r.best_val_epoch;
  j["best_val_metric"] = r.best_val_metric;
  j["final_test_metric"] = r.final_test_metric;
  if (r.averaged_test_metric)
    j["averaged_test_metric"] = *r.averaged_test_metric;
  else
    j["averaged_test_metric"] = nullptr;
  j["final_train_loss"] = r.final_train_loss;
  j["val_curve"] = r.val_curve;
  // wall time goes to the stderr log only, keeping result files byte-identical
  // across reruns
  j["retries"] = r.retries;
  j["failed"] = r.failed;
  if (r.failed) j["fail_reason"] = r.fail_reason;
  return j;
}

RunResult run_result_from_json(const json& j) {
  RunResult r;
  r.seed = j.at("seed").get<std::uint64_t>();
  r.stop_epoch = j.at("stop_epoch").get<int>();
  r.best_val_epoch = j.at("best_val_epoch").get<int>();
  r.best_val_metric = j.value("best_val_metric", 0.0);
  r.final_test_metric = j.at("final_test_metric").get<double>();
  if (j.contains("averaged_test_metric") && !j.at("averaged_test_metric").is_null())
    r.averaged_test_metric = j.at("averaged_test_metric").get<double>();
  r.final_train_loss = j.value("final_train_loss", 0.0);
  if (j.contains("val_curve")) r.val_curve = j.at("val_curve").get<std::vector<double>>();
  r.wall_time_s = j.value("wall_time_s", 0.0);
  r.retries = j.value("retries", 0);
  r.failed = j.value("failed", false);
  r.fail_reason = j.value("fail_reason", std::string{});
  return r;
}

void write_results_jsonl(const std::string& path,
                         const std::vector<RunResult>& runs) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write results: " + path);
  for (const RunResult& r : runs) out << run_result_to_json(r).dump() << "\n";
  if (!out) throw DataError("results write failed: " + path);
}

std::vector<RunResult> read_results_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open results: " + path);
  std::vector<RunResult> runs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      runs.push_back(run_result_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return runs;
}

json summary_to_json(const ResultIdentity& id, const MultiSeedSummary& summary) {
  json j;
  j["model"] = id.model;
  j["dataset"] = id.dataset;
  j["split"] = id.split;
  j["mode"] = id.mode;
  j["method"] = id.method;
  j["metric"] = id.metric;
  j["mean"] = summary.mean;
  j["sd"] = summary.sd;
  j["n"] = summary.n;
  j["failed"] = summary.failed;
  json seeds = json::array();
  for (const RunResult& r : summary.runs) seeds.push_back(r.seed);
  j["seeds"] = seeds;
  return j;
}

namespace {

std::string fmt(double v, bool signed_value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, signed_value ? "%+.2f" : "%.2f", v);
  return buf;
}

}  // namespace

std::string render_report(const std::vector<json>& summaries,
                          const std::string& format) {
  if (format != "markdown" && format != "csv")
    throw ConfigError("report: format must be markdown or csv");
  if (summaries.empty()) throw ConfigError("report: no summary files");

  struct Cell {
    double mean = 0.0, sd = 0.0;
    bool present = false;
  };
  using ColumnKey = std::pair<std::string, std::string>;  // dataset, split
  std::set<std::string> modes;
  std::set<ColumnKey> columns;
  std::set<std::string> models;
  std::map<std::string, std::set<std::string>> methods_per_model;
  std::map<std::tuple<std::string, std::string, std::string, std::string>, Cell>
      cells;  // (model, method, dataset, split)

  for (const json& s : summaries) {
    const std::string model = s.at("model").get<std::string>();
    const std::string method = s.at("method").get<std::string>();
    const std::string dataset = s.at("dataset").get<std::string>();
    const std::string split = s.at("split").get<std::string>();
    modes.insert(s.at("mode").get<std::string>());
    columns.insert({dataset, split});
    models.insert(model);
    if (method != "baseline") methods_per_model[model].insert(method);
    auto key = std::make_tuple(model, method, dataset, split);
    if (cells.count(key))
      throw ConfigError("report: duplicate result set for " + model + "/" +
                        method + " on " + dataset + "/" + split);
    cells[key] = {s.at("mean").get<double>(), s.at("sd").get<double>(), true};
  }
  if (modes.size() > 1)
    throw ConfigError("report: transductive and inductive results in one table");

  std::ostringstream out;
  const bool md = format == "markdown";
  auto emit_row = [&](const std::vector<std::string>& fields) {
    if (md) {
      out << "|";
      for (const auto& f : fields) out << " " << f << " |";
      out << "\n";
    } else {
      for (std::size_t i = 0; i < fields.size(); ++i)
        out << (i ? "," : "") << fields[i];
      out << "\n";
    }
  };

  std::vector<std::string> header{"model"};
  for (const auto& [dataset, split] : columns) header.push_back(dataset + "/" + split);
  emit_row(header);
  if (md) {
    std::vector<std::string> rule(header.size(), "---");
    emit_row(rule);
  }

  for (const std::string& model : models) {
    std::vector<std::string> base_row{model};
    for (const auto& [dataset, split] : columns) {
      auto it = cells.find(std::make_tuple(model, std::string("baseline"), dataset, split));
      if (it == cells.end()) {
        base_row.push_back("-");
      } else {
        base_row.push_back(fmt(it->second.mean * 100.0, false) + " ± " +
                           fmt(it->second.sd * 100.0, false));
      }
    }
    emit_row(base_row);
    for (const std::string& method : methods_per_model[model]) {
      std::vector<std::string> row{"+" + method};
      for (const auto& [dataset, split] : columns) {
        auto mit = cells.find(std::make_tuple(model, method, dataset, split));
        auto bit = cells.find(std::make_tuple(model, std::string("baseline"), dataset, split));
        if (mit == cells.end()) {
          row.push_back("-");
        } else if (bit == cells.end()) {
          throw ConfigError("report: method results for " + model + " on " +
                            dataset + "/" + split + " lack a baseline");
        } else {
          row.push_back(fmt((mit->second.mean - bit->second.mean) * 100.0, true) +
                        " ± " + fmt(mit->second.sd * 100.0, false));
        }
      }
      emit_row(row);
    }
  }
  return out.str();
}

}  // namespace fg
