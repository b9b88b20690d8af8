#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "pdr/corpus.hpp"
#include "pdr/gateway.hpp"
#include "pdr/profile.hpp"

namespace pdr {

struct ResearchQuery {
  std::string text;
  TaskKind task = TaskKind::ReportGen;
  std::string sample_id;
};

struct SubQuery {
  std::string sq_id;  // "<sample_id>#<index>"
  int index = 0;
  std::string text;
  std::string rationale;
  int generation = 0;  // 0 = original plan, >=1 = evolved
};

struct SubQueryPlan {
  ResearchQuery query;
  std::vector<SubQuery> sub_queries;
  int k = 0;
};

std::string make_sq_id(const std::string& sample_id, int index);

std::string render_decompose_prompt(const ResearchQuery& query, const UserProfile& profile,
                                    int k_max);

SubQueryPlan develop_subqueries(const ResearchQuery& query, const UserProfile& profile,
                                LlmGateway& gateway, int k_max = 4);

nlohmann::ordered_json plan_to_json(const SubQueryPlan& plan);
SubQueryPlan plan_from_json(const nlohmann::json& j);
void save_plan(const SubQueryPlan& plan, const std::filesystem::path& path);
SubQueryPlan load_plan(const std::filesystem::path& path);

}  // namespace pdr
