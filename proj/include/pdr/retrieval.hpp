#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pdr/gateway.hpp"
#include "pdr/question.hpp"
#include "pdr/vector_index.hpp"

namespace pdr {

struct Decision {
  bool sufficient = false;
  bool need_external = false;
  std::optional<std::string> gap_query;  // non-empty when present
};

struct Budget {
  int max_iterations = 3;
  int top_k_internal = 5;
  int top_k_external = 5;
  int max_evidence_chunks = 24;

  void validate() const;
};

/// One state-machine transition, persisted as a JSONL trace line.
struct TraceEvent {
  int iter = 0;
  std::string state;
  std::string query_text;
  int generation = 0;
  std::vector<std::string> added_chunk_ids;
  std::optional<Decision> decision;
  std::vector<std::string> flags;

  nlohmann::ordered_json to_json() const;
};

struct EvidenceSet {
  std::string sq_id;
  std::vector<ScoredChunk> items;  // deduplicated by chunk_id, capped
  int iterations_used = 0;
  bool external_used = false;
  std::vector<TraceEvent> trace;
};

struct EvidenceBundle {
  std::string sample_id;
  std::vector<EvidenceSet> per_subquery;  // ordered by sub-query index
  std::vector<ScoredChunk> merged;        // max score, first-appearance order
};

struct FilterOutcome {
  std::vector<ScoredChunk> kept;
  bool fail_open = false;
};

struct DecisionOutcome {
  Decision decision;
  bool fail_stop = false;
};

inline constexpr int kFilterExcerptChars = 600;
inline constexpr int kDecideExcerptChars = 200;

std::string render_filter_prompt(const SubQuery& sq, const std::vector<ScoredChunk>& candidates);
std::string render_decide_prompt(const SubQuery& sq, const EvidenceSet& evidence);

/// Relevance filter over retrieved candidates. Unparseable model output keeps
/// everything (fail-open) rather than dropping evidence.
FilterOutcome filter_chunks(const SubQuery& sq, const std::vector<ScoredChunk>& candidates,
                            LlmGateway& gateway);

/// Continuation decision. Unparseable model output stops the loop (fail-stop)
/// rather than spinning it.
DecisionOutcome decide(const SubQuery& sq, const EvidenceSet& evidence, LlmGateway& gateway);

SubQuery evolve_query(const SubQuery& sq, const Decision& decision);

/// Bounded retrieval state machine for one sub-query. public_idx may be null
/// (private-only setups); external requests are then recorded as unavailable.
EvidenceSet run_retrieval(const SubQuery& sq, const VectorIndex& private_idx,
                          const VectorIndex* public_idx, const Budget& budget,
                          LlmGateway& gateway);

EvidenceBundle aggregate_evidence(const std::string& sample_id,
                                  const std::vector<EvidenceSet>& sets);

void write_trace_jsonl(const EvidenceSet& evidence, const std::filesystem::path& path);

}  // namespace pdr
