#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "pdr/config.hpp"
#include "pdr/corpus.hpp"
#include "pdr/errors.hpp"
#include "pdr/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitPartial = 2;

int cmd_ingest(const std::string& dataset, const std::string& out_path) {
  auto data = pdr::load_dataset(dataset);
  std::map<std::string, int> by_task;
  for (const auto& sample : data.samples) ++by_task[pdr::to_string(sample.task)];
  std::set<std::string> users;
  for (const auto& doc : data.private_corpus.documents) {
    auto it = doc.metadata.find("user_id");
    if (it != doc.metadata.end()) users.insert(it->second);
  }

  nlohmann::ordered_json stats;
  stats["samples"] = data.samples.size();
  stats["users"] = users.size();
  stats["documents"] = data.private_corpus.documents.size();
  stats["chunks"] = data.private_corpus.chunks.size();
  stats["by_task"] = by_task;
  stats["warnings"] = data.warnings;

  std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
  if (!out) {
    std::cerr << "error: cannot write " << out_path << "\n";
    return kExitConfig;
  }
  out << stats.dump(2) << "\n";
  std::cout << "ingested " << data.samples.size() << " samples, "
            << data.private_corpus.documents.size() << " documents, "
            << data.private_corpus.chunks.size() << " chunks -> " << out_path << "\n";
  for (const auto& warning : data.warnings) std::cout << "warning: " << warning << "\n";
  return kExitOk;
}

int cmd_run(const std::string& config_path) {
  auto config = pdr::parse_config_file(config_path);
  auto manifest = pdr::run_pipeline(config);
  std::size_t ok = 0;
  for (const auto& sample : manifest.samples)
    if (sample.ok) ++ok;
  std::size_t failed = manifest.samples.size() - ok;
  std::cout << "run complete: " << ok << " ok, " << failed << " failed -> " << config.run_dir
            << "\n";
  for (const auto& sample : manifest.samples)
    if (!sample.ok)
      std::cout << "  failed " << sample.sample_id << ": " << sample.error << "\n";
  return failed == 0 ? kExitOk : kExitPartial;
}

int cmd_eval(const std::string& run_dir) {
  auto summary = pdr::run_eval(run_dir);
  std::cout << "evaluated " << summary.per_sample.size() << " samples, "
            << summary.failures.size() << " failed -> " << run_dir << "/eval\n";
  return summary.failures.empty() ? kExitOk : kExitPartial;
}

int cmd_report(const std::string& run_dir) {
  std::ifstream in(run_dir + "/eval/summary.json");
  if (!in) {
    std::cerr << "error: no eval summary in " << run_dir << " (run `pdr eval` first)\n";
    return kExitConfig;
  }
  nlohmann::json summary;
  try {
    in >> summary;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: bad summary: " << e.what() << "\n";
    return kExitConfig;
  }

  std::printf("%-14s %5s %7s %7s %7s %7s %7s %7s %7s\n", "task", "n", "R-1", "R-L", "Met.",
              "Comp.", "Read.", "C.P.", "P.P.");
  for (const auto& [task, agg] : summary.at("aggregate").items())
    std::printf("%-14s %5d %7.4f %7.4f %7.4f %7.4f %7.4f %7.4f %7.4f\n", task.c_str(),
                agg.at("count").get<int>(), agg.at("r1").get<double>(),
                agg.at("rl").get<double>(), agg.at("meteor").get<double>(),
                agg.at("comp").get<double>(), agg.at("read").get<double>(),
                agg.at("cp").get<double>(), agg.at("pp").get<double>());
  auto failures = summary.at("failures");
  if (!failures.empty()) {
    std::printf("failed samples:");
    for (const auto& id : failures) std::printf(" %s", id.get<std::string>().c_str());
    std::printf("\n");
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"personalized deep research pipeline"};
  app.require_subcommand(1);

  std::string dataset, out_path, config_path, run_dir;

  auto* ingest = app.add_subcommand("ingest", "load a dataset and write corpus stats");
  ingest->add_option("dataset", dataset, "dataset JSONL path")->required();
  ingest->add_option("out", out_path, "output stats JSON path")->required();

  auto* run = app.add_subcommand("run", "execute the pipeline for a config");
  run->add_option("--config", config_path, "key=value config file")->required();

  auto* eval = app.add_subcommand("eval", "score an existing run directory");
  eval->add_option("--run", run_dir, "run directory")->required();

  auto* report = app.add_subcommand("report", "print the summary table for a run");
  report->add_option("--run", run_dir, "run directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (ingest->parsed()) return cmd_ingest(dataset, out_path);
    if (run->parsed()) return cmd_run(config_path);
    if (eval->parsed()) return cmd_eval(run_dir);
    if (report->parsed()) return cmd_report(run_dir);
  } catch (const pdr::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
