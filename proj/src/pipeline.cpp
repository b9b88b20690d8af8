#include "pdr/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <fstream>
#include <future>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "pdr/errors.hpp"
#include "pdr/http_backend.hpp"
#include "pdr/report.hpp"
#include "pdr/retrieval.hpp"

namespace pdr {
namespace {

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::config_error, "cannot write " + path.string());
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

std::optional<std::string> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

nlohmann::ordered_json sample_meta(const std::string& sample_id, RunMode mode,
                                   const nlohmann::ordered_json& spec,
                                   const std::vector<std::string>& citations,
                                   const std::vector<std::string>& warnings,
                                   const LlmGateway& gateway) {
  nlohmann::ordered_json meta;
  meta["sample_id"] = sample_id;
  meta["mode"] = to_string(mode);
  meta["spec"] = spec;
  meta["citations"] = citations;
  meta["warnings"] = warnings;
  meta["ledger"] = gateway.ledger().snapshot();
  return meta;
}

/// Shared per-user profile extraction with exactly-once semantics: whichever
/// sample thread asks first runs the extraction, the rest wait on the future.
class ProfileCache {
 public:
  ProfileCache(const CorpusHandle& corpus, const std::filesystem::path& run_dir,
               std::function<std::unique_ptr<LlmGateway>()> make_gateway)
      : corpus_(corpus), run_dir_(run_dir), make_gateway_(std::move(make_gateway)) {}

  UserProfile get(const std::string& user_id) {
    std::shared_future<UserProfile> future;
    std::promise<UserProfile> promise;
    bool owner = false;
    {
      std::lock_guard<std::mutex> lock(mu_);
      auto it = futures_.find(user_id);
      if (it == futures_.end()) {
        future = promise.get_future().share();
        futures_.emplace(user_id, future);
        owner = true;
      } else {
        future = it->second;
      }
    }
    if (owner) {
      auto gateway = make_gateway_();
      try {
        auto profile = extract_profile(corpus_, user_id, *gateway);
        save_profile(profile, run_dir_ / "profiles" / (user_id + ".json"));
        finish(user_id, std::move(gateway));
        promise.set_value(std::move(profile));
      } catch (...) {
        finish(user_id, std::move(gateway));
        promise.set_exception(std::current_exception());
      }
    }
    return future.get();
  }

  /// Gateways of all extraction attempts, keyed (and thus ordered) by user id.
  const std::map<std::string, std::unique_ptr<LlmGateway>>& gateways() const {
    return gateways_;
  }

  std::vector<std::string> extracted_users() const {
    std::vector<std::string> users;
    for (const auto& [user_id, future] : futures_) {
      try {
        future.get();
        users.push_back(user_id);
      } catch (...) {
      }
    }
    return users;
  }

 private:
  void finish(const std::string& user_id, std::unique_ptr<LlmGateway> gateway) {
    std::lock_guard<std::mutex> lock(mu_);
    gateways_.emplace(user_id, std::move(gateway));
  }

  const CorpusHandle& corpus_;
  std::filesystem::path run_dir_;
  std::function<std::unique_ptr<LlmGateway>()> make_gateway_;
  std::mutex mu_;
  std::map<std::string, std::shared_future<UserProfile>> futures_;
  std::map<std::string, std::unique_ptr<LlmGateway>> gateways_;
};

}  // namespace

nlohmann::ordered_json RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["schema_version"] = schema_version;
  j["config"] = config;
  j["samples"] = nlohmann::ordered_json::array();
  for (const auto& sample : samples) {
    nlohmann::ordered_json s;
    s["sample_id"] = sample.sample_id;
    s["task"] = to_string(sample.task);
    s["user_id"] = sample.user_id;
    s["status"] = sample.ok ? "ok" : "failed";
    s["error"] = sample.error;
    s["plan"] = sample.plan_path;
    s["report"] = sample.report_path;
    s["traces"] = sample.trace_paths;
    j["samples"].push_back(std::move(s));
  }
  j["ledger"] = ledger;
  j["searches"] = {{"private", private_searches}, {"public", public_searches}};
  j["profiles"] = profiles;
  j["wall_clock_ms"] = wall_clock_ms;
  return j;
}

RunManifest RunManifest::from_json(const nlohmann::ordered_json& j) {
  RunManifest manifest;
  try {
    manifest.schema_version = j.at("schema_version").get<int>();
    manifest.config = j.at("config");
    for (const auto& s : j.at("samples")) {
      SampleStatus status;
      status.sample_id = s.at("sample_id").get<std::string>();
      status.task = parse_task_kind(s.at("task").get<std::string>());
      status.user_id = s.at("user_id").get<std::string>();
      status.ok = s.at("status").get<std::string>() == "ok";
      status.error = s.value("error", "");
      status.plan_path = s.value("plan", "");
      status.report_path = s.value("report", "");
      if (s.contains("traces"))
        for (const auto& t : s["traces"]) status.trace_paths.push_back(t.get<std::string>());
      manifest.samples.push_back(std::move(status));
    }
    manifest.ledger = j.at("ledger");
    manifest.private_searches = j.at("searches").at("private").get<std::uint64_t>();
    manifest.public_searches = j.at("searches").at("public").get<std::uint64_t>();
    for (const auto& user : j.at("profiles"))
      manifest.profiles.push_back(user.get<std::string>());
    manifest.wall_clock_ms = j.at("wall_clock_ms").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::schema_error, "manifest parse: " + std::string(e.what()));
  }
  return manifest;
}

void save_manifest(const RunManifest& manifest, const std::filesystem::path& run_dir) {
  write_file_atomic(run_dir / "manifest.json", manifest.to_json().dump(2) + "\n");
}

RunManifest load_manifest(const std::filesystem::path& run_dir) {
  auto content = read_file(run_dir / "manifest.json");
  if (!content)
    throw Error(Errc::incomplete_run, "no manifest in " + run_dir.string());
  try {
    return RunManifest::from_json(nlohmann::ordered_json::parse(*content));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::schema_error, "manifest parse: " + std::string(e.what()));
  }
}

ChatRequest build_mode_request(RunMode mode, const TaskSample& sample,
                               const std::vector<ScoredChunk>& chunks,
                               const UserProfile* profile) {
  ChatRequest request;
  request.tag = StageTag::Generate;
  request.system_prompt =
      "You are a research writer. Produce the requested document in markdown.";
  if (mode == RunMode::ProfilePrompting && profile != nullptr)
    request.system_prompt +=
        "\nShape the answer for this user profile:\n" + profile_to_json(*profile).dump(2);

  std::ostringstream user;
  user << "Task: " << to_string(sample.task) << "\n"
       << "Query: " << sample.query << "\n";
  if (!chunks.empty()) {
    user << "\nSearch results (cite as [chunk_id]):\n";
    for (const auto& scored : chunks)
      user << "[" << scored.chunk.chunk_id << "] "
           << scored.chunk.text.substr(0, kEvidenceExcerptChars) << "\n";
  }
  request.user_prompt = user.str();
  return request;
}

std::shared_ptr<const MockScript> default_demo_script() {
  auto script = std::make_shared<MockScript>();
  script->add_text(StageTag::Profile, nlohmann::json{
      {"demographics", {{"role", "researcher"}}},
      {"learning_interests", {"core definitions", "recent results"}},
      {"response_preferences",
       {{"tone", "concise"},
        {"structure", "sections"},
        {"depth", "standard"},
        {"formatting", {"markdown"}}}},
      {"interaction_tendencies", {"asks for sources"}},
      {"style_exemplars", nlohmann::json::array()},
  }.dump());
  script->add_text(StageTag::Decompose, nlohmann::json{
      {"sub_queries",
       {{{"text", "key background and definitions"}, {"rationale", "foundation"}},
        {{"text", "current findings and open questions"}, {"rationale", "coverage"}}}},
  }.dump());
  script->add_text(StageTag::Filter,
                   R"({"keep": [0, 1, 2, 3, 4, 5, 6, 7, 8, 9]})");
  script->add_text(StageTag::Decide,
                   R"({"sufficient": true, "need_external": false, "gap_query": null})");
  script->add_text(StageTag::Generate,
                   "# Report\n\n## Summary\nThis scripted reply stands in for a live model.\n\n"
                   "## Findings\nSee the evidence excerpts listed in the prompt.\n");
  script->add_text(StageTag::Judge, R"({"score": 7, "justification": "scripted"})");
  return script;
}

namespace {

std::unique_ptr<LlmGateway> make_gateway_for(const RunConfig& config,
                                             const std::shared_ptr<const MockScript>& script) {
  std::shared_ptr<ChatBackend> backend;
  if (script) {
    backend = std::make_shared<MockChatBackend>(script);
  } else {
    HttpBackendConfig http;
    http.url = config.backend.url;
    http.model = config.backend.model;
    http.api_key_env = config.backend.api_key_env;
    http.timeout_ms = config.backend.timeout_ms;
    backend = std::make_shared<HttpChatBackend>(std::move(http));
  }
  RetryPolicy policy;
  policy.max_retries = config.backend.max_retries;
  policy.backoff_base_ms = config.backend.backoff_base_ms;
  return std::make_unique<LlmGateway>(std::move(backend), policy);
}

std::shared_ptr<const MockScript> script_for(const RunConfig& config) {
  if (config.backend.kind != "mock") return nullptr;
  if (config.backend.script_path.empty()) return default_demo_script();
  return std::make_shared<const MockScript>(MockScript::from_file(config.backend.script_path));
}

/// Generate once, retrying a single time on an empty reply.
std::string generate_text(LlmGateway& gateway, const ChatRequest& request) {
  auto response = gateway.complete(request);
  if (response.text.empty()) {
    response = gateway.complete(request);
    if (response.text.empty())
      throw Error(Errc::empty_generation, "backend returned empty text twice");
  }
  return response.text;
}

}  // namespace

RunManifest run_pipeline(const RunConfig& config) {
  validate_config(config);
  auto started = std::chrono::steady_clock::now();

  std::filesystem::path run_dir = config.run_dir;
  std::filesystem::create_directories(run_dir);

  auto data = load_dataset(config.dataset_path, config.task_filter, config.chunking);
  if (data.samples.empty())
    throw Error(Errc::config_error, "dataset yields no samples (check task filter)");

  auto embedder = std::make_shared<const HashingEmbedder>(config.embedding.dim);

  bool needs_private = config.mode == RunMode::Pdr || config.mode == RunMode::IterativeRag;
  bool needs_public = config.mode == RunMode::Pdr || config.mode == RunMode::PlusSearch ||
                      config.mode == RunMode::ProfilePrompting;
  bool needs_profile = config.mode == RunMode::Pdr || config.mode == RunMode::ProfilePrompting;

  std::optional<VectorIndex> private_idx;
  std::optional<VectorIndex> public_idx;
  if (needs_private) private_idx.emplace(VectorIndex::build(data.private_corpus, embedder));
  if (needs_public) {
    auto public_corpus = load_public_corpus(config.public_corpus_path, config.chunking);
    public_idx.emplace(VectorIndex::build(public_corpus, embedder));
  }

  auto script = script_for(config);
  auto make_gateway = [&] { return make_gateway_for(config, script); };

  ProfileCache profiles(data.private_corpus, run_dir, make_gateway);

  struct SampleOutcome {
    SampleStatus status;
    std::unique_ptr<LlmGateway> gateway;
  };
  std::vector<SampleOutcome> outcomes(data.samples.size());

  auto process = [&](std::size_t i) {
    const TaskSample& sample = data.samples[i];
    SampleOutcome& out = outcomes[i];
    out.status.sample_id = sample.sample_id;
    out.status.task = sample.task;
    out.status.user_id = sample.user_id;
    auto gateway = make_gateway();

    try {
      std::string report_rel = "reports/" + sample.sample_id + ".md";
      std::string meta_rel = "reports/" + sample.sample_id + ".meta.json";

      switch (config.mode) {
        case RunMode::Pdr: {
          UserProfile profile = profiles.get(sample.user_id);
          ResearchQuery query{sample.query, sample.task, sample.sample_id};
          auto plan = develop_subqueries(query, profile, *gateway, config.k_max);
          save_plan(plan, run_dir / "plans" / (sample.sample_id + ".json"));
          out.status.plan_path = "plans/" + sample.sample_id + ".json";

          std::vector<EvidenceSet> sets;
          for (const auto& sq : plan.sub_queries) {
            auto evidence = run_retrieval(sq, *private_idx,
                                          public_idx ? &*public_idx : nullptr, config.budget,
                                          *gateway);
            write_trace_jsonl(evidence, run_dir / "traces" / (sq.sq_id + ".jsonl"));
            out.status.trace_paths.push_back("traces/" + sq.sq_id + ".jsonl");
            sets.push_back(std::move(evidence));
          }
          auto bundle = aggregate_evidence(sample.sample_id, sets);
          auto report = generate_report(bundle, profile, plan, *gateway);
          write_file_atomic(run_dir / report_rel, report.text);
          write_file_atomic(run_dir / meta_rel,
                            sample_meta(sample.sample_id, config.mode,
                                        report_spec_to_json(report.spec), report.citations,
                                        report.warnings, *gateway)
                                    .dump(2) +
                                "\n");
          break;
        }
        case RunMode::ZeroShot: {
          auto request = build_mode_request(config.mode, sample, {}, nullptr);
          auto text = generate_text(*gateway, request);
          write_file_atomic(run_dir / report_rel, text);
          write_file_atomic(run_dir / meta_rel,
                            sample_meta(sample.sample_id, config.mode, nullptr, {}, {},
                                        *gateway)
                                    .dump(2) +
                                "\n");
          break;
        }
        case RunMode::PlusSearch:
        case RunMode::ProfilePrompting: {
          std::optional<UserProfile> profile;
          if (config.mode == RunMode::ProfilePrompting)
            profile = profiles.get(sample.user_id);
          auto chunks = public_idx->search(sample.query, config.budget.top_k_external);
          auto request = build_mode_request(config.mode, sample, chunks,
                                            profile ? &*profile : nullptr);
          auto text = generate_text(*gateway, request);
          std::vector<std::string> known;
          for (const auto& scored : chunks) known.push_back(scored.chunk.chunk_id);
          auto [citations, warnings] = parse_citations(text, known);
          write_file_atomic(run_dir / report_rel, text);
          write_file_atomic(run_dir / meta_rel,
                            sample_meta(sample.sample_id, config.mode, nullptr, citations,
                                        warnings, *gateway)
                                    .dump(2) +
                                "\n");
          break;
        }
        case RunMode::IterativeRag: {
          SubQuery sq;
          sq.sq_id = make_sq_id(sample.sample_id, 0);
          sq.index = 0;
          sq.text = sample.query;
          sq.rationale = "iterative_rag";
          auto evidence = run_retrieval(sq, *private_idx, nullptr, config.budget, *gateway);
          write_trace_jsonl(evidence, run_dir / "traces" / (sq.sq_id + ".jsonl"));
          out.status.trace_paths.push_back("traces/" + sq.sq_id + ".jsonl");

          auto bundle = aggregate_evidence(sample.sample_id, {evidence});
          UserProfile blank;
          blank.user_id = sample.user_id;
          SubQueryPlan plan;
          plan.query = ResearchQuery{sample.query, sample.task, sample.sample_id};
          plan.sub_queries = {sq};
          plan.k = 1;
          auto report = generate_report(bundle, blank, plan, *gateway);
          write_file_atomic(run_dir / report_rel, report.text);
          write_file_atomic(run_dir / meta_rel,
                            sample_meta(sample.sample_id, config.mode,
                                        report_spec_to_json(report.spec), report.citations,
                                        report.warnings, *gateway)
                                    .dump(2) +
                                "\n");
          break;
        }
      }
      out.status.report_path = report_rel;
      out.status.ok = true;
    } catch (const std::exception& e) {
      out.status.ok = false;
      out.status.error = e.what();
    }
    out.gateway = std::move(gateway);
  };

  std::size_t worker_count = std::min<std::size_t>(
      static_cast<std::size_t>(config.workers), data.samples.size());
  if (worker_count <= 1) {
    for (std::size_t i = 0; i < data.samples.size(); ++i) process(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(worker_count);
    for (std::size_t w = 0; w < worker_count; ++w)
      pool.emplace_back([&] {
        for (;;) {
          std::size_t i = next.fetch_add(1);
          if (i >= data.samples.size()) break;
          process(i);
        }
      });
    for (auto& thread : pool) thread.join();
  }

  CallLedger total;
  for (const auto& [user_id, gateway] : profiles.gateways()) total.merge(gateway->ledger());
  for (const auto& outcome : outcomes)
    if (outcome.gateway) total.merge(outcome.gateway->ledger());

  RunManifest manifest;
  manifest.config = config_snapshot(config);
  for (auto& outcome : outcomes) manifest.samples.push_back(std::move(outcome.status));
  manifest.ledger = total.snapshot();
  manifest.private_searches = private_idx ? private_idx->search_count() : 0;
  manifest.public_searches = public_idx ? public_idx->search_count() : 0;
  manifest.profiles = needs_profile ? profiles.extracted_users() : std::vector<std::string>{};
  manifest.wall_clock_ms = static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() -
                                                            started)
          .count());
  save_manifest(manifest, run_dir);
  return manifest;
}

EvalSummary run_eval(const std::filesystem::path& run_dir) {
  auto manifest = load_manifest(run_dir);
  RunConfig config = config_from_snapshot(manifest.config);

  auto data = load_dataset(config.dataset_path, config.task_filter, config.chunking);
  std::map<std::string, const TaskSample*> samples_by_id;
  for (const auto& sample : data.samples) samples_by_id[sample.sample_id] = &sample;

  std::vector<EvalItem> items;
  for (const auto& status : manifest.samples) {
    auto it = samples_by_id.find(status.sample_id);
    if (it == samples_by_id.end())
      throw Error(Errc::incomplete_run,
                  "sample " + status.sample_id + " not found in dataset");
    EvalItem item;
    item.sample = *it->second;
    item.report_text = read_file(run_dir / "reports" / (status.sample_id + ".md"));
    item.profile_json = read_file(run_dir / "profiles" / (status.user_id + ".json"));
    items.push_back(std::move(item));
  }

  auto gateway = make_gateway_for(config, script_for(config));
  auto summary = evaluate_run(items, *gateway);
  save_summary(summary, run_dir / "eval");
  return summary;
}

}  // namespace pdr
