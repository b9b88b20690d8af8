#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "pdr/gateway.hpp"
#include "pdr/profile.hpp"
#include "pdr/question.hpp"
#include "pdr/retrieval.hpp"

namespace pdr {

struct ReportSpec {
  std::vector<std::string> section_order;
  Depth depth = Depth::Standard;
  std::string tone;
  std::vector<std::string> formatting;
};

struct Report {
  std::string sample_id;
  std::string text;  // markdown
  std::vector<std::string> citations;  // chunk ids actually referenced
  ReportSpec spec;
  std::vector<std::string> warnings;
};

inline constexpr const char* kInsufficientEvidenceMarker = "insufficient evidence";
inline constexpr int kEvidenceExcerptChars = 800;

/// Pure profile+task -> structure mapping; the section table is fixed per task.
ReportSpec derive_report_spec(const UserProfile& profile, TaskKind task);

nlohmann::ordered_json report_spec_to_json(const ReportSpec& spec);

std::string render_generate_prompt(const ReportSpec& spec, const UserProfile& profile,
                                   const SubQueryPlan& plan, const EvidenceBundle& bundle);

/// Scans bracketed ids in the text against known chunk ids, preserving first
/// appearance order; unknown ids are dropped and reported as warnings.
std::pair<std::vector<std::string>, std::vector<std::string>> parse_citations(
    const std::string& text, const std::vector<std::string>& known_ids);

Report generate_report(const EvidenceBundle& bundle, const UserProfile& profile,
                       const SubQueryPlan& plan, LlmGateway& gateway);

}  // namespace pdr
