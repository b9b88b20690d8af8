#include "pdr/config.hpp"

#include <fstream>
#include <sstream>

#include "pdr/errors.hpp"

namespace pdr {
namespace {

std::string trim(const std::string& s) {
  auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

int parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t consumed = 0;
    int parsed = std::stoi(value, &consumed);
    if (consumed != value.size()) throw std::invalid_argument(value);
    return parsed;
  } catch (const std::exception&) {
    throw Error(Errc::config_error, key + " must be an integer, got '" + value + "'");
  }
}

}  // namespace

const char* to_string(RunMode mode) {
  switch (mode) {
    case RunMode::Pdr: return "pdr";
    case RunMode::ZeroShot: return "zero_shot";
    case RunMode::PlusSearch: return "plus_search";
    case RunMode::ProfilePrompting: return "profile_prompting";
    case RunMode::IterativeRag: return "iterative_rag";
  }
  return "pdr";
}

RunMode parse_run_mode(const std::string& name) {
  if (name == "pdr") return RunMode::Pdr;
  if (name == "zero_shot") return RunMode::ZeroShot;
  if (name == "plus_search") return RunMode::PlusSearch;
  if (name == "profile_prompting") return RunMode::ProfilePrompting;
  if (name == "iterative_rag") return RunMode::IterativeRag;
  throw Error(Errc::config_error, "unknown mode '" + name + "'");
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig config;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto comment = line.find('#');
    if (comment != std::string::npos) line.resize(comment);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(Errc::config_error,
                  "line " + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw Error(Errc::config_error, "line " + std::to_string(line_no) + ": empty key");

    if (key == "dataset") {
      config.dataset_path = value;
    } else if (key == "public_corpus") {
      config.public_corpus_path = value;
    } else if (key == "run_dir") {
      config.run_dir = value;
    } else if (key == "mode") {
      config.mode = parse_run_mode(value);
    } else if (key == "seed") {
      config.seed = parse_int(key, value);
    } else if (key == "workers") {
      config.workers = parse_int(key, value);
    } else if (key == "k_max") {
      config.k_max = parse_int(key, value);
    } else if (key == "task") {
      config.task_filter = parse_task_kind(value);
    } else if (key == "budget.max_iterations") {
      config.budget.max_iterations = parse_int(key, value);
    } else if (key == "budget.top_k_internal") {
      config.budget.top_k_internal = parse_int(key, value);
    } else if (key == "budget.top_k_external") {
      config.budget.top_k_external = parse_int(key, value);
    } else if (key == "budget.max_evidence_chunks") {
      config.budget.max_evidence_chunks = parse_int(key, value);
    } else if (key == "chunk.target_chars") {
      int parsed = parse_int(key, value);
      if (parsed < 1) throw Error(Errc::config_error, "chunk.target_chars must be >= 1");
      config.chunking.target_chars = static_cast<std::size_t>(parsed);
    } else if (key == "chunk.overlap_chars") {
      int parsed = parse_int(key, value);
      if (parsed < 0) throw Error(Errc::config_error, "chunk.overlap_chars must be >= 0");
      config.chunking.overlap_chars = static_cast<std::size_t>(parsed);
    } else if (key == "backend.kind") {
      config.backend.kind = value;
    } else if (key == "backend.url") {
      config.backend.url = value;
    } else if (key == "backend.model") {
      config.backend.model = value;
    } else if (key == "backend.api_key_env") {
      config.backend.api_key_env = value;
    } else if (key == "backend.script") {
      config.backend.script_path = value;
    } else if (key == "backend.timeout_ms") {
      config.backend.timeout_ms = parse_int(key, value);
    } else if (key == "backend.max_retries") {
      config.backend.max_retries = parse_int(key, value);
    } else if (key == "backend.backoff_base_ms") {
      config.backend.backoff_base_ms = parse_int(key, value);
    } else if (key == "embedding.kind") {
      config.embedding.kind = value;
    } else if (key == "embedding.dim") {
      config.embedding.dim = parse_int(key, value);
    } else {
      throw Error(Errc::config_error,
                  "line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
  }
  return config;
}

RunConfig parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::config_error, "cannot open config: " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str());
}

void validate_config(const RunConfig& config) {
  if (config.dataset_path.empty())
    throw Error(Errc::config_error, "dataset is required");
  if (config.run_dir.empty()) throw Error(Errc::config_error, "run_dir is required");
  if (!std::filesystem::exists(config.dataset_path))
    throw Error(Errc::config_error, "dataset not found: " + config.dataset_path);

  bool needs_public = config.mode == RunMode::Pdr || config.mode == RunMode::PlusSearch ||
                      config.mode == RunMode::ProfilePrompting;
  if (needs_public) {
    if (config.public_corpus_path.empty())
      throw Error(Errc::config_error,
                  std::string("public_corpus is required for mode ") + to_string(config.mode));
    if (!std::filesystem::exists(config.public_corpus_path))
      throw Error(Errc::config_error, "public_corpus not found: " + config.public_corpus_path);
  }

  if (config.workers < 1) throw Error(Errc::config_error, "workers must be >= 1");
  if (config.k_max < 1) throw Error(Errc::config_error, "k_max must be >= 1");
  try {
    config.budget.validate();
  } catch (const Error& e) {
    throw Error(Errc::config_error, e.what());
  }
  if (config.chunking.target_chars < 1 ||
      config.chunking.overlap_chars >= config.chunking.target_chars)
    throw Error(Errc::config_error, "chunking requires 0 <= overlap < target");

  if (config.backend.kind == "http") {
    if (config.backend.url.empty() || config.backend.model.empty())
      throw Error(Errc::config_error, "http backend needs backend.url and backend.model");
  } else if (config.backend.kind == "mock") {
    if (!config.backend.script_path.empty() &&
        !std::filesystem::exists(config.backend.script_path))
      throw Error(Errc::config_error,
                  "backend.script not found: " + config.backend.script_path);
  } else {
    throw Error(Errc::config_error, "backend.kind must be mock or http");
  }
  if (config.backend.max_retries < 0 || config.backend.backoff_base_ms < 0 ||
      config.backend.timeout_ms < 1)
    throw Error(Errc::config_error, "backend retry/timeout fields out of range");

  if (config.embedding.kind != "hash")
    throw Error(Errc::config_error, "embedding.kind must be hash");
  if (config.embedding.dim < 1) throw Error(Errc::config_error, "embedding.dim must be >= 1");
}

nlohmann::ordered_json config_snapshot(const RunConfig& config) {
  nlohmann::ordered_json j;
  j["dataset"] = config.dataset_path;
  j["public_corpus"] = config.public_corpus_path;
  j["run_dir"] = config.run_dir;
  j["mode"] = to_string(config.mode);
  j["seed"] = config.seed;
  j["k_max"] = config.k_max;
  j["task"] = config.task_filter ? nlohmann::ordered_json(to_string(*config.task_filter))
                                 : nlohmann::ordered_json(nullptr);
  j["budget"] = {{"max_iterations", config.budget.max_iterations},
                 {"top_k_internal", config.budget.top_k_internal},
                 {"top_k_external", config.budget.top_k_external},
                 {"max_evidence_chunks", config.budget.max_evidence_chunks}};
  j["chunk"] = {{"target_chars", config.chunking.target_chars},
                {"overlap_chars", config.chunking.overlap_chars}};
  j["backend"] = {{"kind", config.backend.kind},
                  {"url", config.backend.url},
                  {"model", config.backend.model},
                  {"api_key_env", config.backend.api_key_env},
                  {"script", config.backend.script_path},
                  {"timeout_ms", config.backend.timeout_ms},
                  {"max_retries", config.backend.max_retries},
                  {"backoff_base_ms", config.backend.backoff_base_ms}};
  j["embedding"] = {{"kind", config.embedding.kind}, {"dim", config.embedding.dim}};
  return j;
}

RunConfig config_from_snapshot(const nlohmann::json& snapshot) {
  RunConfig config;
  try {
    config.dataset_path = snapshot.at("dataset").get<std::string>();
    config.public_corpus_path = snapshot.at("public_corpus").get<std::string>();
    config.run_dir = snapshot.at("run_dir").get<std::string>();
    config.mode = parse_run_mode(snapshot.at("mode").get<std::string>());
    config.seed = snapshot.at("seed").get<int>();
    config.k_max = snapshot.at("k_max").get<int>();
    if (snapshot.at("task").is_string())
      config.task_filter = parse_task_kind(snapshot["task"].get<std::string>());
    const auto& budget = snapshot.at("budget");
    config.budget.max_iterations = budget.at("max_iterations").get<int>();
    config.budget.top_k_internal = budget.at("top_k_internal").get<int>();
    config.budget.top_k_external = budget.at("top_k_external").get<int>();
    config.budget.max_evidence_chunks = budget.at("max_evidence_chunks").get<int>();
    const auto& chunk = snapshot.at("chunk");
    config.chunking.target_chars = chunk.at("target_chars").get<std::size_t>();
    config.chunking.overlap_chars = chunk.at("overlap_chars").get<std::size_t>();
    const auto& backend = snapshot.at("backend");
    config.backend.kind = backend.at("kind").get<std::string>();
    config.backend.url = backend.at("url").get<std::string>();
    config.backend.model = backend.at("model").get<std::string>();
    config.backend.api_key_env = backend.at("api_key_env").get<std::string>();
    config.backend.script_path = backend.at("script").get<std::string>();
    config.backend.timeout_ms = backend.at("timeout_ms").get<int>();
    config.backend.max_retries = backend.at("max_retries").get<int>();
    config.backend.backoff_base_ms = backend.at("backoff_base_ms").get<int>();
    const auto& embedding = snapshot.at("embedding");
    config.embedding.kind = embedding.at("kind").get<std::string>();
    config.embedding.dim = embedding.at("dim").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::config_error, "manifest config snapshot: " + std::string(e.what()));
  }
  return config;
}

}  // namespace pdr
