#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <string>

#include "evorag/agents.hpp"
#include "evorag/llm.hpp"
#include "evorag/model.hpp"
#include "evorag/prompts.hpp"
#include "evorag/retrieval.hpp"

namespace evorag {

struct ExecutionConfig {
  double temperature = 0.9;
  std::chrono::milliseconds step_timeout{120000};
  std::size_t max_steps = 12;
  std::size_t top_k_per_step = 5;
  std::size_t parallelism = 4;
  int agent_max_tokens = 512;
};

void check_execution_config(const ExecutionConfig& config);

// Everything a trajectory needs besides the plan and query. Prompts are an
// immutable snapshot for the duration of the trajectory.
struct ExecutionEnv {
  const AgentRegistry* registry = nullptr;
  const PromptSet* prompts = nullptr;
  // Full system-text replacements keyed by role; used to replay variants.
  std::map<std::string, std::string> prompt_overrides;
  const retrieval::LexicalIndex* index = nullptr;
  llm::Backend* backend = nullptr;
  llm::CallSink* sink = nullptr;
};

// Runs every step once after its dependencies. Parallel steps whose
// dependencies are complete run together (up to config.parallelism);
// sequential steps run alone. Records are in ascending step order and call
// records reach env.sink in that same order.
Trajectory execute(const ExecutionPlan& plan, const Query& query, const ExecutionConfig& config,
                   const ExecutionEnv& env, const std::string& trajectory_id, std::uint64_t seed);

// Deterministic seed derivation shared by every stochastic call site.
std::uint64_t derive_seed(std::uint64_t base, std::string_view label);

}  // namespace evorag
