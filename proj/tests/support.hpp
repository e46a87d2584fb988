#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "evorag/model.hpp"

namespace support {

inline std::filesystem::path fixture(const std::string& rel) { return std::filesystem::path(EVORAG_FIXTURES) / rel; }

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "evorag-tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline evorag::PlanStep step(int idx, std::string agent, std::vector<int> deps = {},
                             evorag::StepMode mode = evorag::StepMode::kSequential) {
  return {idx, std::move(agent), std::move(deps), mode};
}

inline evorag::ExecutionPlan plan(std::vector<evorag::PlanStep> steps, std::string profile = "test") {
  return {std::move(profile), std::move(steps)};
}

// QueryDecomposer -> Retriever -> EvidenceSelector -> AnswerGenerator.
inline evorag::ExecutionPlan chain_plan() {
  return plan({step(1, "QueryDecomposer"), step(2, "Retriever", {1}), step(3, "EvidenceSelector", {2}),
               step(4, "AnswerGenerator", {3})});
}

inline evorag::Query query(std::string id, std::string text, std::vector<std::string> gold) {
  evorag::Query q;
  q.id = std::move(id);
  q.text = std::move(text);
  q.gold_answers = std::move(gold);
  return q;
}

}  // namespace support
