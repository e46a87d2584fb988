#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "evorag/evaluation.hpp"
#include "evorag/executor.hpp"
#include "evorag/library.hpp"
#include "evorag/llm.hpp"
#include "evorag/model.hpp"

namespace evorag::orchestrator {

// Profile used to look up experiences before a plan (and its own profile)
// exists: the annotated reasoning type when known, plus the question.
std::string characterize_query(const Query& query);

// QueryDecomposer -> Retriever -> EvidenceSelector -> AnswerGenerator.
ExecutionPlan default_plan(const std::string& query_profile);

// Converts the orchestrator's JSON (query_profile / selected_agents /
// execution_order) into a plan. Does not validate.
ExecutionPlan plan_from_response(const Json& value);
Json plan_to_response(const ExecutionPlan& plan);

std::string format_agent_descriptions(const AgentRegistry& registry);
std::string format_experiences(const std::vector<ExperienceEntry>& experiences);

struct SampledPlan {
  ExecutionPlan plan;
  bool fallback = false;
  std::string fallback_reason;
};

struct SampleOptions {
  double temperature = 0.9;
  std::uint64_t seed = 0;
  std::size_t max_steps = 12;
};

// Builds the topology-sampling prompt and decodes a validated plan, falling
// back to default_plan on malformed or invalid output.
SampledPlan sample_plan(const Query& query, const std::vector<ExperienceEntry>& experiences,
                        const AgentRegistry& registry, const llm::Channel& channel, const SampleOptions& options);

struct OrchestratorEnv {
  const AgentRegistry* registry = nullptr;
  const PromptSet* prompts = nullptr;
  const retrieval::LexicalIndex* index = nullptr;
  llm::Backend* agent_backend = nullptr;
  llm::Backend* orchestrator_backend = nullptr;
  llm::CallSink* sink = nullptr;
  ExecutionConfig exec;
  // Group members executing at once.
  std::size_t group_parallelism = 4;
};

struct GroupOptions {
  std::size_t group_size = 4;
  double rollout_temperature = 0.9;
  std::uint64_t seed = 0;
  // Prefix of member trajectory ids; member i gets "<prefix>/m<i>".
  std::string id_prefix;
  // Plans that take the first member slots instead of being sampled.
  std::vector<ExecutionPlan> injected_plans;
};

struct GroupRun {
  eval::GroupRollout group;
  std::vector<bool> fallback;  // per member
  std::vector<bool> injected;  // per member
};

// Samples G plans, executes them, scores and ranks the group. Throws
// BackendUnavailable only when every member failed on the backend.
GroupRun run_group(const Query& query, const std::vector<ExperienceEntry>& experiences, const OrchestratorEnv& env,
                   const GroupOptions& options);

// Ranked member summaries for the extraction prompt.
std::string format_group(const eval::GroupRollout& group);

// Comparative analysis of a mixed group. Returns an empty bundle without any
// backend call when the group is not mixed, or when the output is malformed.
InsightBundle extract_insights(const eval::GroupRollout& group, const Query& query, const std::string& query_profile,
                               const llm::Channel& channel, std::uint64_t seed = 0);

enum class MutationKind { kReplace, kAugment };
std::string_view to_string(MutationKind k);

struct MutationProposal {
  MutationKind kind = MutationKind::kAugment;
  int target_step = 0;
  std::string agent;
  ExecutionPlan derived_plan;
};

// Same steps with `target_step`'s agent swapped.
ExecutionPlan replace_step(const ExecutionPlan& plan, int target_step, const std::string& agent);
// Inserts a sequential step right after `target_step` that depends on it;
// steps that depended on the target now depend on the new step.
ExecutionPlan augment_after(const ExecutionPlan& plan, int target_step, const std::string& agent);

// Step most likely responsible for an all-zero group: an empty search, else
// the failing step, else the terminal step.
int choose_blamed_step(const Trajectory& trajectory);

MutationProposal propose_mutation(const std::string& query_profile, const ExecutionPlan& failing_plan,
                                  int blamed_step, const AgentRegistry& registry, const llm::Channel& channel,
                                  std::uint64_t seed = 0);

}  // namespace evorag::orchestrator
