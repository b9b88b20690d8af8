#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "pdr/config.hpp"
#include "pdr/eval.hpp"
#include "pdr/mock_backend.hpp"
#include "pdr/profile.hpp"
#include "pdr/vector_index.hpp"

namespace pdr {

struct SampleStatus {
  std::string sample_id;
  TaskKind task = TaskKind::ReportGen;
  std::string user_id;
  bool ok = false;
  std::string error;
  std::string plan_path;    // relative to run_dir; empty when the mode has none
  std::string report_path;
  std::vector<std::string> trace_paths;
};

struct RunManifest {
  int schema_version = 1;
  nlohmann::ordered_json config;
  std::vector<SampleStatus> samples;  // dataset order
  nlohmann::ordered_json ledger;
  std::uint64_t private_searches = 0;
  std::uint64_t public_searches = 0;
  std::vector<std::string> profiles;  // user ids extracted, sorted
  std::uint64_t wall_clock_ms = 0;    // the only field that varies between identical runs

  nlohmann::ordered_json to_json() const;
  static RunManifest from_json(const nlohmann::ordered_json& j);
};

void save_manifest(const RunManifest& manifest, const std::filesystem::path& run_dir);
RunManifest load_manifest(const std::filesystem::path& run_dir);  // absent -> IncompleteRun

/// Prompt construction for the baseline modes (zero_shot, plus_search,
/// profile_prompting). profile may be null; it lands in the system prompt.
ChatRequest build_mode_request(RunMode mode, const TaskSample& sample,
                               const std::vector<ScoredChunk>& chunks,
                               const UserProfile* profile);

/// Built-in mock script used when backend.kind=mock and no script file is
/// given: every stage answers with a minimal well-formed reply.
std::shared_ptr<const MockScript> default_demo_script();

RunManifest run_pipeline(const RunConfig& config);

/// Scores an existing run directory and writes eval/summary.{json,csv}. The
/// run's own manifest supplies the config.
EvalSummary run_eval(const std::filesystem::path& run_dir);

}  // namespace pdr
