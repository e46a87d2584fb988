#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "evorag/llm.hpp"
#include "evorag/model.hpp"
#include "evorag/prompts.hpp"
#include "evorag/retrieval.hpp"

namespace evorag::agents {

struct AgentInput {
  std::string query_text;
  // Outputs of the executing step's dependencies, keyed by step index.
  std::map<int, std::string> upstream_outputs;
};

// What one agent invocation produced; the executor adds step bookkeeping.
struct AgentOutput {
  std::string output_text;
  std::vector<ToolCall> tool_calls;
  std::int64_t tokens_in = 0;
  std::int64_t tokens_out = 0;
  std::int64_t wall_ms = 0;
};

struct AgentRuntime {
  const retrieval::LexicalIndex* index = nullptr;
  std::size_t top_k_per_step = 5;
  int max_tokens = 512;
};

struct CallContext {
  double temperature = 0.0;
  std::uint64_t seed = 0;
  std::string trace;
};

// "Question: ..." followed by one "Context from step N:" block per upstream
// output in ascending step order.
std::string build_user_message(const AgentInput& input);

// Parses "Search: <query>" from the Retriever's first phase.
std::optional<std::string> parse_search_directive(std::string_view output);

// Runs one role with `system_prompt` as its system text. The Retriever makes
// two completions around exactly one search; every other role makes one.
AgentOutput run_agent(const AgentRole& role, const std::string& system_prompt, const AgentInput& input,
                      const llm::Channel& channel, const CallContext& ctx, const AgentRuntime& runtime);

inline AgentOutput run_agent(const AgentRole& role, const PromptState& state, const AgentInput& input,
                             const llm::Channel& channel, const CallContext& ctx, const AgentRuntime& runtime) {
  return run_agent(role, render_prompt(state), input, channel, ctx, runtime);
}

}  // namespace evorag::agents
