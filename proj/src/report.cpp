#include "pdr/report.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "pdr/errors.hpp"

namespace pdr {

ReportSpec derive_report_spec(const UserProfile& profile, TaskKind task) {
  ReportSpec spec;
  switch (task) {
    case TaskKind::AbstractGen:
      spec.section_order = {"Abstract"};
      break;
    case TaskKind::TopicWriting:
      spec.section_order = {"Title", "Body"};
      break;
    case TaskKind::ReportGen:
      spec.section_order = {"Summary", "Background", "Findings", "Analysis", "Recommendations"};
      break;
    case TaskKind::SpeechScript:
      spec.section_order = {"Opening", "Main Points", "Closing"};
      break;
  }
  spec.depth = profile.response_preferences.depth;
  spec.tone = profile.response_preferences.tone;
  spec.formatting = profile.response_preferences.formatting;
  return spec;
}

nlohmann::ordered_json report_spec_to_json(const ReportSpec& spec) {
  nlohmann::ordered_json j;
  j["section_order"] = spec.section_order;
  j["depth"] = to_string(spec.depth);
  j["tone"] = spec.tone;
  j["formatting"] = spec.formatting;
  return j;
}

std::string render_generate_prompt(const ReportSpec& spec, const UserProfile& profile,
                                   const SubQueryPlan& plan, const EvidenceBundle& bundle) {
  std::ostringstream prompt;
  prompt << "Write the personalized report in markdown.\n\n"
         << "Structure:\n";
  for (const auto& section : spec.section_order) prompt << "- " << section << "\n";
  prompt << "Depth: " << to_string(spec.depth) << "\n";
  if (!spec.tone.empty()) prompt << "Tone: " << spec.tone << "\n";
  for (const auto& rule : spec.formatting) prompt << "Formatting: " << rule << "\n";

  prompt << "\nUser profile:\n" << profile_to_json(profile).dump(2) << "\n";

  prompt << "\nResearch query: " << plan.query.text << "\n"
         << "Sub-queries investigated:\n";
  for (const auto& sq : plan.sub_queries) prompt << "- " << sq.text << "\n";

  prompt << "\nEvidence (cite chunks as [chunk_id]):\n";
  if (bundle.merged.empty()) {
    prompt << "(none retrieved)\n"
           << "No evidence is available. State that the evidence is insufficient using the "
              "phrase \""
           << kInsufficientEvidenceMarker
           << "\" and answer only from the query and profile, without invented citations.\n";
  } else {
    for (std::size_t i = 0; i < bundle.merged.size(); ++i) {
      const auto& chunk = bundle.merged[i].chunk;
      std::string body = chunk.text.substr(0, kEvidenceExcerptChars);
      prompt << "[" << chunk.chunk_id << "] " << body << "\n";
    }
    prompt << "Reason through the evidence, adapt the style to the profile, and cite every "
              "claim that uses a chunk.\n";
  }
  return prompt.str();
}

std::pair<std::vector<std::string>, std::vector<std::string>> parse_citations(
    const std::string& text, const std::vector<std::string>& known_ids) {
  std::set<std::string> known(known_ids.begin(), known_ids.end());
  std::vector<std::string> citations;
  std::set<std::string> cited;
  std::vector<std::string> warnings;
  std::set<std::string> warned;

  std::size_t pos = 0;
  while ((pos = text.find('[', pos)) != std::string::npos) {
    auto end = text.find(']', pos + 1);
    if (end == std::string::npos) break;
    std::string id = text.substr(pos + 1, end - pos - 1);
    pos = end + 1;
    if (id.empty() || id.find('\n') != std::string::npos) continue;
    if (known.count(id)) {
      if (cited.insert(id).second) citations.push_back(id);
    } else if (warned.insert(id).second) {
      warnings.push_back("unknown citation dropped: [" + id + "]");
    }
  }
  return {citations, warnings};
}

Report generate_report(const EvidenceBundle& bundle, const UserProfile& profile,
                       const SubQueryPlan& plan, LlmGateway& gateway) {
  Report report;
  report.sample_id = bundle.sample_id;
  report.spec = derive_report_spec(profile, plan.query.task);

  ChatRequest request;
  request.system_prompt =
      "You are a research writer producing evidence-grounded reports shaped to one reader.";
  request.user_prompt = render_generate_prompt(report.spec, profile, plan, bundle);
  request.tag = StageTag::Generate;

  auto response = gateway.complete(request);
  if (response.text.empty()) {
    response = gateway.complete(request);
    if (response.text.empty())
      throw Error(Errc::empty_generation, "backend returned empty report twice");
  }
  report.text = response.text;

  std::vector<std::string> known;
  known.reserve(bundle.merged.size());
  for (const auto& scored : bundle.merged) known.push_back(scored.chunk.chunk_id);
  std::tie(report.citations, report.warnings) = parse_citations(report.text, known);
  return report;
}

}  // namespace pdr
