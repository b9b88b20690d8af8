#include "pdr/question.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "pdr/errors.hpp"

namespace pdr {
namespace {

std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

}  // namespace

std::string make_sq_id(const std::string& sample_id, int index) {
  return sample_id + "#" + std::to_string(index);
}

std::string render_decompose_prompt(const ResearchQuery& query, const UserProfile& profile,
                                    int k_max) {
  std::ostringstream prompt;
  prompt << "Decompose the research query below into at most " << k_max
         << " focused sub-queries tailored to the user profile. Respond with a JSON object "
            "{\"sub_queries\": [{\"text\": ..., \"rationale\": ...}]}; rationale is one line.\n\n"
         << "User profile:\n"
         << profile_to_json(profile).dump(2) << "\n\n"
         << "Task: " << to_string(query.task) << "\n"
         << "Query: " << query.text << "\n";
  return prompt.str();
}

SubQueryPlan develop_subqueries(const ResearchQuery& query, const UserProfile& profile,
                                LlmGateway& gateway, int k_max) {
  if (query.text.empty()) throw Error(Errc::precondition, "research query text is empty");
  if (k_max < 1) throw Error(Errc::precondition, "k_max must be >= 1");

  ChatRequest request;
  request.system_prompt =
      "You are a research planner. You split a query into the smallest set of sub-queries that "
      "together cover the user's information need.";
  request.user_prompt = render_decompose_prompt(query, profile, k_max);
  request.tag = StageTag::Decompose;

  auto parsed =
      gateway.complete_structured(request, {{"sub_queries", KeySpec::Kind::Array}});

  SubQueryPlan plan;
  plan.query = query;
  std::set<std::string> seen;
  for (const auto& item : parsed["sub_queries"]) {
    if (plan.sub_queries.size() == static_cast<std::size_t>(k_max)) break;
    std::string text;
    std::string rationale;
    if (item.is_string()) {
      text = item.get<std::string>();
    } else if (item.is_object() && item.contains("text") && item["text"].is_string()) {
      text = item["text"].get<std::string>();
      if (item.contains("rationale") && item["rationale"].is_string())
        rationale = item["rationale"].get<std::string>();
    }
    if (text.empty()) continue;
    if (!seen.insert(lowercase(text)).second) continue;
    SubQuery sq;
    sq.index = static_cast<int>(plan.sub_queries.size());
    sq.sq_id = make_sq_id(query.sample_id, sq.index);
    sq.text = std::move(text);
    sq.rationale = std::move(rationale);
    plan.sub_queries.push_back(std::move(sq));
  }

  if (plan.sub_queries.empty()) {
    SubQuery sq;
    sq.index = 0;
    sq.sq_id = make_sq_id(query.sample_id, 0);
    sq.text = query.text;
    sq.rationale = "fallback";
    plan.sub_queries.push_back(std::move(sq));
  }
  plan.k = static_cast<int>(plan.sub_queries.size());
  return plan;
}

nlohmann::ordered_json plan_to_json(const SubQueryPlan& plan) {
  nlohmann::ordered_json j;
  j["query"] = {{"text", plan.query.text},
                {"task", to_string(plan.query.task)},
                {"sample_id", plan.query.sample_id}};
  j["k"] = plan.k;
  j["sub_queries"] = nlohmann::ordered_json::array();
  for (const auto& sq : plan.sub_queries)
    j["sub_queries"].push_back({{"sq_id", sq.sq_id},
                                {"index", sq.index},
                                {"text", sq.text},
                                {"rationale", sq.rationale},
                                {"generation", sq.generation}});
  return j;
}

SubQueryPlan plan_from_json(const nlohmann::json& j) {
  SubQueryPlan plan;
  try {
    plan.query.text = j.at("query").at("text").get<std::string>();
    plan.query.task = parse_task_kind(j.at("query").at("task").get<std::string>());
    plan.query.sample_id = j.at("query").at("sample_id").get<std::string>();
    plan.k = j.at("k").get<int>();
    for (const auto& item : j.at("sub_queries")) {
      SubQuery sq;
      sq.sq_id = item.at("sq_id").get<std::string>();
      sq.index = item.at("index").get<int>();
      sq.text = item.at("text").get<std::string>();
      sq.rationale = item.value("rationale", "");
      sq.generation = item.value("generation", 0);
      plan.sub_queries.push_back(std::move(sq));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::schema_error, "plan parse: " + std::string(e.what()));
  }
  return plan;
}

void save_plan(const SubQueryPlan& plan, const std::filesystem::path& path) {
  std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::config_error, "cannot write plan: " + path.string());
    out << plan_to_json(plan).dump(2) << "\n";
  }
  std::filesystem::rename(tmp, path);
}

SubQueryPlan load_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::config_error, "cannot open plan: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::schema_error, "plan parse: " + std::string(e.what()));
  }
  return plan_from_json(j);
}

}  // namespace pdr
