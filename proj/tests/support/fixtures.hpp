#pragma once

#include <unistd.h>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pdr/mock_backend.hpp"

namespace fixtures {

/// Unique scratch directory, removed on destruction.
struct TempDir {
  std::filesystem::path path;

  TempDir() {
    static std::atomic<int> counter{0};
    path = std::filesystem::temp_directory_path() /
           ("pdr_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

// Fixture corpus: one user, three private documents sized to split into two
// chunks each at target 150 / overlap 0. d1 carries the "alpha retrieval"
// vocabulary, d2 "beta analysis", d3 is filler.
inline const char* kD1Body =
    "Alpha retrieval anchors the private pipeline and the alpha retrieval index carries every "
    "production query we serve. "
    "Latency budgets for alpha retrieval stay under twenty milliseconds even when the corpus "
    "doubles in size each quarter.";
inline const char* kD2Body =
    "Beta analysis charts the measured error budgets and the beta analysis worksheets track "
    "regressions across releases. "
    "Weekly beta analysis reviews flag drift early and the team archives every beta analysis "
    "verdict for later audits.";
inline const char* kD3Body =
    "Server notes describe the rollout checklist and the paging rotation that guards the "
    "production deployment calendar. "
    "Postmortem templates live beside the runbooks so the on-call engineer can file findings "
    "without leaving the terminal.";

/// Exemplar the mock profile cites; a verbatim excerpt of kD1Body.
inline const char* kExemplar =
    "Latency budgets for alpha retrieval stay under twenty milliseconds";

inline std::string dataset_jsonl() {
  nlohmann::ordered_json s1;
  s1["sample_id"] = "s1";
  s1["task"] = "report_gen";
  s1["user_id"] = "u1";
  s1["query"] = "How has alpha retrieval shaped the roadmap?";
  s1["personal_files"] = nlohmann::ordered_json::array(
      {{{"doc_id", "d1"}, {"format", "plain_text"}, {"title", "alpha notes"}, {"text", kD1Body}},
       {{"doc_id", "d2"}, {"format", "plain_text"}, {"title", "beta notes"}, {"text", kD2Body}},
       {{"doc_id", "d3"}, {"format", "plain_text"}, {"title", "ops notes"}, {"text", kD3Body}}});
  s1["reference_text"] =
      "The quarterly report explains how alpha retrieval shaped the roadmap and which latency "
      "goals the team reached this year.";

  nlohmann::ordered_json s2;
  s2["sample_id"] = "s2";
  s2["task"] = "report_gen";
  s2["user_id"] = "u1";
  s2["query"] = "Summarize the beta analysis verdicts for the release.";
  s2["personal_files"] = nlohmann::ordered_json::array(
      {{{"doc_id", "d1"}}, {{"doc_id", "d2"}}, {{"doc_id", "d3"}}});
  s2["reference_text"] =
      "Beta analysis verdicts this release flagged two regressions early and archived every "
      "worksheet for the audit trail.";

  return s1.dump() + "\n" + s2.dump() + "\n";
}

inline std::string public_jsonl() {
  std::ostringstream out;
  for (int i = 1; i <= 20; ++i) {
    char id[8];
    std::snprintf(id, sizeof(id), "p%02d", i);
    nlohmann::ordered_json doc;
    doc["doc_id"] = id;
    doc["title"] = "public note " + std::to_string(i);
    if (i == 7) {
      doc["text"] =
          "Gamma details cover the public benchmark suite and the gamma details appendix lists "
          "every dataset variant.";
    } else {
      doc["text"] = "Public record " + std::to_string(i) +
                    " covers civic archive topic number " + std::to_string(i) +
                    " with notes on local history and planning.";
    }
    out << doc.dump() << "\n";
  }
  return out.str();
}

/// Full pipeline script: profile with a grounded exemplar, two sub-queries,
/// keep-all filter, one external round then stop, a citing report, judge 8.
inline nlohmann::json script_json() {
  nlohmann::json profile = {
      {"demographics", {{"role", "engineer"}, {"field", "search"}}},
      {"learning_interests", {"alpha retrieval", "beta analysis"}},
      {"response_preferences",
       {{"tone", "direct"},
        {"structure", "sections"},
        {"depth", "expert"},
        {"formatting", {"markdown"}}}},
      {"interaction_tendencies", {"wants citations"}},
      {"style_exemplars", {kExemplar}},
  };
  nlohmann::json decompose = {
      {"sub_queries",
       {{{"text", "alpha retrieval"}, {"rationale", "core topic"}},
        {{"text", "beta analysis"}, {"rationale", "secondary angle"}}}},
  };
  nlohmann::json script;
  script["profile"] = {profile.dump()};
  script["decompose"] = {decompose.dump()};
  script["filter"] = {R"({"keep": [0, 1, 2, 3, 4]})"};
  script["decide"] = {
      R"({"sufficient": false, "need_external": true, "gap_query": "gamma details"})",
      R"({"sufficient": true, "need_external": false, "gap_query": null})"};
  script["generate"] = {
      "# Report\n\n## Summary\nAlpha retrieval grounding [d1#0] with an unknown citation "
      "[zz9].\n\n## Findings\nBeta analysis notes [d2#0].\n"};
  script["judge"] = {R"({"score": 8, "justification": "solid"})"};
  return script;
}

inline std::shared_ptr<const pdr::MockScript> mock_script() {
  return std::make_shared<const pdr::MockScript>(pdr::MockScript::from_json(script_json()));
}

/// Wraps another backend and keeps every request it sees, so tests can
/// assert on prompt content.
class RecordingBackend : public pdr::ChatBackend {
 public:
  explicit RecordingBackend(std::shared_ptr<pdr::ChatBackend> inner) : inner_(std::move(inner)) {}

  pdr::BackendReply attempt(const pdr::ChatRequest& request) override {
    {
      std::lock_guard<std::mutex> lock(mu_);
      requests_.push_back(request);
    }
    return inner_->attempt(request);
  }

  std::string id() const override { return inner_->id(); }

  std::vector<pdr::ChatRequest> requests() const {
    std::lock_guard<std::mutex> lock(mu_);
    return requests_;
  }

  std::vector<pdr::ChatRequest> requests_for(pdr::StageTag tag) const {
    std::lock_guard<std::mutex> lock(mu_);
    std::vector<pdr::ChatRequest> out;
    for (const auto& r : requests_) {
      if (r.tag == tag) out.push_back(r);
    }
    return out;
  }

 private:
  std::shared_ptr<pdr::ChatBackend> inner_;
  mutable std::mutex mu_;
  std::vector<pdr::ChatRequest> requests_;
};

/// On-disk fixture tree: dataset, public corpus, mock script, and a config
/// pointing a run at <dir>/run.
struct Tree {
  TempDir dir;
  std::filesystem::path dataset_path, public_path, script_path, config_path, run_dir;

  Tree() {
    dataset_path = dir.path / "dataset.jsonl";
    public_path = dir.path / "public.jsonl";
    script_path = dir.path / "script.json";
    config_path = dir.path / "config.txt";
    run_dir = dir.path / "run";
    write_file(dataset_path, dataset_jsonl());
    write_file(public_path, public_jsonl());
    write_file(script_path, script_json().dump(2) + "\n");
    write_config();
  }

  void write_config(int workers = 1, const std::string& mode = "pdr") {
    std::ostringstream out;
    out << "dataset = " << dataset_path.string() << "\n"
        << "public_corpus = " << public_path.string() << "\n"
        << "run_dir = " << run_dir.string() << "\n"
        << "mode = " << mode << "\n"
        << "seed = 7\n"
        << "workers = " << workers << "\n"
        << "k_max = 4\n"
        << "chunk.target_chars = 150\n"
        << "chunk.overlap_chars = 0\n"
        << "backend.kind = mock\n"
        << "backend.script = " << script_path.string() << "\n";
    write_file(config_path, out.str());
  }
};

/// All run artifacts keyed by path relative to run_dir, with the manifest's
/// wall clock zeroed so byte comparison sees only meaningful differences.
inline std::map<std::string, std::string> snapshot_run_dir(const std::filesystem::path& run_dir) {
  std::map<std::string, std::string> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(run_dir)) {
    if (!entry.is_regular_file()) continue;
    auto rel = std::filesystem::relative(entry.path(), run_dir).string();
    auto content = read_file(entry.path());
    if (rel == "manifest.json") {
      auto j = nlohmann::ordered_json::parse(content);
      j["wall_clock_ms"] = 0;
      content = j.dump(2) + "\n";
    }
    files[rel] = std::move(content);
  }
  return files;
}

}  // namespace fixtures
