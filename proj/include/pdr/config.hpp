#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "pdr/corpus.hpp"
#include "pdr/retrieval.hpp"

namespace pdr {

enum class RunMode { Pdr, ZeroShot, PlusSearch, ProfilePrompting, IterativeRag };

const char* to_string(RunMode mode);
RunMode parse_run_mode(const std::string& name);

struct BackendConfig {
  std::string kind = "mock";  // mock | http
  std::string url;
  std::string model;
  std::string api_key_env;
  std::string script_path;  // mock only; empty = built-in demo script
  int timeout_ms = 30000;
  int max_retries = 3;
  int backoff_base_ms = 250;
};

struct EmbeddingConfig {
  std::string kind = "hash";
  int dim = 384;
};

struct RunConfig {
  std::string dataset_path;
  std::string public_corpus_path;
  std::string run_dir;
  RunMode mode = RunMode::Pdr;
  int seed = 0;
  int workers = 1;
  int k_max = 4;
  std::optional<TaskKind> task_filter;
  Budget budget;
  ChunkParams chunking;
  BackendConfig backend;
  EmbeddingConfig embedding;
};

/// Flat key=value file; '#' starts a comment; unknown keys are errors.
RunConfig parse_config_file(const std::filesystem::path& path);
RunConfig parse_config_text(const std::string& text);

void validate_config(const RunConfig& config);

/// Everything that shapes run outputs. Deliberately excludes workers, which
/// only changes scheduling, so manifests stay byte-identical across worker
/// counts.
nlohmann::ordered_json config_snapshot(const RunConfig& config);

/// Inverse of config_snapshot, used to re-derive a run's setup from its
/// manifest. workers comes back as 1.
RunConfig config_from_snapshot(const nlohmann::json& snapshot);

}  // namespace pdr
