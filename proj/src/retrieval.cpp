#include "pdr/retrieval.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "pdr/errors.hpp"

namespace pdr {
namespace {

std::string excerpt(const std::string& text, int max_chars) {
  if (text.size() <= static_cast<std::size_t>(max_chars)) return text;
  return text.substr(0, static_cast<std::size_t>(max_chars));
}

nlohmann::ordered_json decision_to_json(const Decision& decision) {
  nlohmann::ordered_json j;
  j["sufficient"] = decision.sufficient;
  j["need_external"] = decision.need_external;
  j["gap_query"] = decision.gap_query ? nlohmann::ordered_json(*decision.gap_query)
                                      : nlohmann::ordered_json(nullptr);
  return j;
}

/// Appends newly kept chunks to the evidence set, deduplicating by chunk_id
/// and respecting the evidence cap. Returns the ids actually added.
std::vector<std::string> append_evidence(EvidenceSet& evidence,
                                         const std::vector<ScoredChunk>& kept,
                                         const Budget& budget) {
  std::vector<std::string> added;
  for (const auto& scored : kept) {
    if (evidence.items.size() >= static_cast<std::size_t>(budget.max_evidence_chunks)) break;
    bool duplicate = false;
    for (const auto& existing : evidence.items)
      if (existing.chunk.chunk_id == scored.chunk.chunk_id) {
        duplicate = true;
        break;
      }
    if (duplicate) continue;
    evidence.items.push_back(scored);
    added.push_back(scored.chunk.chunk_id);
  }
  return added;
}

std::vector<std::string> chunk_ids(const std::vector<ScoredChunk>& chunks) {
  std::vector<std::string> ids;
  ids.reserve(chunks.size());
  for (const auto& scored : chunks) ids.push_back(scored.chunk.chunk_id);
  return ids;
}

}  // namespace

void Budget::validate() const {
  if (max_iterations < 1 || top_k_internal < 1 || top_k_external < 1 || max_evidence_chunks < 1)
    throw Error(Errc::precondition, "budget fields must be positive");
  if (max_evidence_chunks < top_k_internal)
    throw Error(Errc::precondition, "max_evidence_chunks must be >= top_k_internal");
}

nlohmann::ordered_json TraceEvent::to_json() const {
  nlohmann::ordered_json j;
  j["iter"] = iter;
  j["state"] = state;
  j["query_text"] = query_text;
  j["generation"] = generation;
  j["added_chunk_ids"] = added_chunk_ids;
  j["decision"] = decision ? decision_to_json(*decision) : nlohmann::ordered_json(nullptr);
  j["flags"] = flags;
  return j;
}

std::string render_filter_prompt(const SubQuery& sq, const std::vector<ScoredChunk>& candidates) {
  std::ostringstream prompt;
  prompt << "Sub-query: " << sq.text << "\n\n"
         << "Candidate chunks:\n";
  for (std::size_t i = 0; i < candidates.size(); ++i)
    prompt << "[" << i << "] (" << candidates[i].chunk.chunk_id << ") "
           << excerpt(candidates[i].chunk.text, kFilterExcerptChars) << "\n";
  prompt << "\nReturn JSON {\"keep\": [indices of chunks relevant to the sub-query]}.\n";
  return prompt.str();
}

std::string render_decide_prompt(const SubQuery& sq, const EvidenceSet& evidence) {
  std::ostringstream prompt;
  prompt << "Sub-query: " << sq.text << "\n\n"
         << "Evidence collected so far (" << evidence.items.size() << " chunks):\n";
  for (const auto& scored : evidence.items)
    prompt << "- (" << scored.chunk.chunk_id << ") "
           << excerpt(scored.chunk.text, kDecideExcerptChars) << "\n";
  prompt << "\nIs this evidence sufficient to answer the sub-query? Should an external public "
            "corpus be searched? If not sufficient, give one refined query that targets the gap. "
            "Return JSON {\"sufficient\": bool, \"need_external\": bool, \"gap_query\": string or "
            "null}.\n";
  return prompt.str();
}

FilterOutcome filter_chunks(const SubQuery& sq, const std::vector<ScoredChunk>& candidates,
                            LlmGateway& gateway) {
  if (candidates.empty()) return {};

  ChatRequest request;
  request.system_prompt =
      "You are a retrieval filter. You keep only chunks that help answer the sub-query.";
  request.user_prompt = render_filter_prompt(sq, candidates);
  request.tag = StageTag::Filter;

  nlohmann::json parsed;
  try {
    parsed = gateway.complete_structured(request, {{"keep", KeySpec::Kind::Array}});
  } catch (const Error& e) {
    if (e.code() == Errc::malformed_output || e.code() == Errc::missing_key)
      return {candidates, true};
    throw;
  }

  std::set<std::size_t> keep;
  for (const auto& item : parsed["keep"]) {
    if (!item.is_number_integer()) continue;
    auto index = item.get<long long>();
    if (index >= 0 && index < static_cast<long long>(candidates.size()))
      keep.insert(static_cast<std::size_t>(index));
  }
  FilterOutcome outcome;
  for (std::size_t i = 0; i < candidates.size(); ++i)
    if (keep.count(i)) outcome.kept.push_back(candidates[i]);
  return outcome;
}

DecisionOutcome decide(const SubQuery& sq, const EvidenceSet& evidence, LlmGateway& gateway) {
  ChatRequest request;
  request.system_prompt =
      "You are a research supervisor. You judge whether collected evidence suffices and where to "
      "look next.";
  request.user_prompt = render_decide_prompt(sq, evidence);
  request.tag = StageTag::Decide;

  nlohmann::json parsed;
  try {
    parsed = gateway.complete_structured(request, {{"sufficient", KeySpec::Kind::Boolean},
                                                   {"need_external", KeySpec::Kind::Boolean},
                                                   {"gap_query", KeySpec::Kind::StringOrNull}});
  } catch (const Error& e) {
    if (e.code() == Errc::malformed_output || e.code() == Errc::missing_key)
      return {Decision{true, false, std::nullopt}, true};
    throw;
  }

  DecisionOutcome outcome;
  outcome.decision.sufficient = parsed["sufficient"].get<bool>();
  outcome.decision.need_external = parsed["need_external"].get<bool>();
  if (parsed["gap_query"].is_string() && !parsed["gap_query"].get<std::string>().empty())
    outcome.decision.gap_query = parsed["gap_query"].get<std::string>();
  return outcome;
}

SubQuery evolve_query(const SubQuery& sq, const Decision& decision) {
  if (decision.sufficient || !decision.gap_query)
    throw Error(Errc::missing_gap_query,
                "evolution needs an insufficient decision with a gap query");
  SubQuery evolved = sq;
  evolved.text = *decision.gap_query;
  evolved.rationale = "evolved from gap";
  evolved.generation = sq.generation + 1;
  return evolved;
}

EvidenceSet run_retrieval(const SubQuery& sq, const VectorIndex& private_idx,
                          const VectorIndex* public_idx, const Budget& budget,
                          LlmGateway& gateway) {
  budget.validate();
  if (sq.text.empty()) throw Error(Errc::precondition, "sub-query text is empty");

  EvidenceSet evidence;
  evidence.sq_id = sq.sq_id;
  SubQuery current = sq;

  auto event = [&](int iter, std::string state) {
    TraceEvent e;
    e.iter = iter;
    e.state = std::move(state);
    e.query_text = current.text;
    e.generation = current.generation;
    return e;
  };

  for (int iter = 0; iter < budget.max_iterations; ++iter) {
    evidence.iterations_used = iter + 1;

    auto internal = private_idx.search(current.text, budget.top_k_internal);
    {
      auto e = event(iter, "internal_search");
      e.added_chunk_ids = chunk_ids(internal);
      evidence.trace.push_back(std::move(e));
    }

    auto filtered = filter_chunks(current, internal, gateway);
    {
      auto e = event(iter, "filter");
      e.added_chunk_ids = chunk_ids(filtered.kept);
      if (filtered.fail_open) e.flags.push_back("filter_fail_open");
      evidence.trace.push_back(std::move(e));
    }
    {
      auto e = event(iter, "append");
      e.added_chunk_ids = append_evidence(evidence, filtered.kept, budget);
      evidence.trace.push_back(std::move(e));
    }

    auto outcome = decide(current, evidence, gateway);
    {
      auto e = event(iter, "decide");
      e.decision = outcome.decision;
      if (outcome.fail_stop) e.flags.push_back("decide_fail_stop");
      evidence.trace.push_back(std::move(e));
    }

    if (outcome.decision.need_external) {
      if (public_idx == nullptr) {
        auto e = event(iter, "external_search");
        e.flags.push_back("external_unavailable");
        evidence.trace.push_back(std::move(e));
      } else {
        auto external = public_idx->search(current.text, budget.top_k_external);
        evidence.external_used = true;
        {
          auto e = event(iter, "external_search");
          e.added_chunk_ids = chunk_ids(external);
          evidence.trace.push_back(std::move(e));
        }
        auto ext_filtered = filter_chunks(current, external, gateway);
        {
          auto e = event(iter, "filter");
          e.added_chunk_ids = chunk_ids(ext_filtered.kept);
          if (ext_filtered.fail_open) e.flags.push_back("filter_fail_open");
          evidence.trace.push_back(std::move(e));
        }
        {
          auto e = event(iter, "append");
          e.added_chunk_ids = append_evidence(evidence, ext_filtered.kept, budget);
          evidence.trace.push_back(std::move(e));
        }
      }
    }

    if (outcome.decision.sufficient) {
      auto e = event(iter, "stop");
      e.flags.push_back("sufficient");
      evidence.trace.push_back(std::move(e));
      break;
    }
    if (iter + 1 == budget.max_iterations) {
      auto e = event(iter, "stop");
      e.flags.push_back("budget_exhausted");
      evidence.trace.push_back(std::move(e));
      break;
    }
    if (!outcome.decision.gap_query) {
      auto e = event(iter, "stop");
      e.flags.push_back("no_gap_query");
      evidence.trace.push_back(std::move(e));
      break;
    }

    current = evolve_query(current, outcome.decision);
    evidence.trace.push_back(event(iter, "evolve"));
  }
  return evidence;
}

EvidenceBundle aggregate_evidence(const std::string& sample_id,
                                  const std::vector<EvidenceSet>& sets) {
  EvidenceBundle bundle;
  bundle.sample_id = sample_id;
  bundle.per_subquery = sets;

  std::unordered_map<std::string, std::size_t> position;
  for (const auto& set : sets)
    for (const auto& scored : set.items) {
      auto it = position.find(scored.chunk.chunk_id);
      if (it == position.end()) {
        position.emplace(scored.chunk.chunk_id, bundle.merged.size());
        bundle.merged.push_back(scored);
      } else if (scored.score > bundle.merged[it->second].score) {
        bundle.merged[it->second].score = scored.score;
      }
    }
  return bundle;
}

void write_trace_jsonl(const EvidenceSet& evidence, const std::filesystem::path& path) {
  std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::config_error, "cannot write trace: " + path.string());
    for (const auto& e : evidence.trace) out << e.to_json().dump() << "\n";
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace pdr
